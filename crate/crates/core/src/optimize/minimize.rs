//! Energy minimization over free nodes and the boundary translation, keeping every
//! lattice triangle positively oriented.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::energy::{energy, energy_gradient, Density, WellSystem};
use crate::error::{Error, Result};
use crate::lattice::format::write_deformation;
use crate::lattice::Deformation;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    GradientDescent,
    Lbfgs,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MinimizeOptions {
    pub max_iters: usize,
    /// Sup-norm threshold on the free gradient.
    pub grad_tol: f64,
    /// First trial step along the steepest-descent direction.
    pub step0: f64,
    pub backtrack_factor: f64,
    pub armijo_c: f64,
    pub seed: u64,
    pub method: Method,
    /// Number of stored secant pairs.
    pub memory: usize,
}

impl MinimizeOptions {
    /// `grad_tol = 1e-8 n`, `max_iters = 50 n²`, `step0 = 1e-2 / n²`.
    pub fn for_resolution(n: u32) -> Self {
        let nf = n as f64;
        MinimizeOptions {
            max_iters: 50 * (n as usize) * (n as usize),
            grad_tol: 1e-8 * nf,
            step0: 1e-2 / (nf * nf),
            backtrack_factor: 0.5,
            armijo_c: 1e-4,
            seed: 0,
            method: Method::Lbfgs,
            memory: 10,
        }
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.grad_tol > 0.0 && self.step0 > 0.0) {
            return Err(Error::Config("grad_tol and step0 must be positive".into()));
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return Err(Error::Config("backtrack_factor must lie in (0, 1)".into()));
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return Err(Error::Config("armijo_c must lie in (0, 1)".into()));
        }
        if self.method == Method::Lbfgs && self.memory == 0 {
            return Err(Error::Config("memory must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIters,
    /// Every trial step within the halving budget left the admissible set.
    StalledByAdmissibility,
    /// No step satisfied the sufficient-decrease condition.
    Stalled,
}

#[derive(Clone, Debug)]
pub struct MinimizeResult {
    pub final_state: Deformation,
    pub energy_trace: Vec<f64>,
    pub iterations: usize,
    pub termination: Termination,
    pub admissible: bool,
    pub grad_norm: f64,
}

const MAX_HALVINGS: usize = 60;
const MAX_BACKTRACKS: usize = 60;

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Evaluator<'a> {
    work: Deformation,
    wells: &'a WellSystem,
    density: &'a Density,
}

impl Evaluator<'_> {
    /// Energy and gradient at `x`, or `None` if `x` is not admissible.
    fn eval(&mut self, x: &[f64]) -> Result<Option<(f64, Vec<f64>)>> {
        self.work.set_free_dofs(x);
        if !self.work.is_admissible() {
            return Ok(None);
        }
        let g = energy_gradient(&self.work, self.wells, self.density)?;
        Ok(Some((g.total, g.free_vector(&self.work))))
    }
}

/// Two-loop recursion; returns `-H g`.
fn lbfgs_direction(g: &[f64], pairs: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y, rho) in pairs.iter().rev() {
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some((s, y, _)) = pairs.back() {
        let gamma = dot(s, y) / dot(y, y);
        for qi in &mut q {
            *qi *= gamma;
        }
    }
    for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

/// Descends on the free nodes and `c`. Constrained nodes are moved only through `c`,
/// so boundary data stays exact at every iterate.
pub fn minimize(u: &Deformation, wells: &WellSystem, density: &Density, opts: &MinimizeOptions) -> Result<MinimizeResult> {
    opts.validate()?;
    u.validate()?;
    if !u.is_admissible() {
        return Err(Error::Domain("initial deformation is not admissible".into()));
    }
    let mut ev = Evaluator { work: u.clone(), wells, density };
    let mut x = u.free_dofs();
    let (mut f, mut g) = ev.eval(&x)?.expect("admissibility checked above");
    let mut trace = vec![f];
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut sd_step = opts.step0;
    let mut termination = Termination::MaxIters;
    let mut iterations = 0;

    while iterations < opts.max_iters {
        if sup(&g) <= opts.grad_tol {
            termination = Termination::Converged;
            break;
        }
        let use_memory = opts.method == Method::Lbfgs && !pairs.is_empty();
        let mut d = if use_memory { lbfgs_direction(&g, &pairs) } else { g.iter().map(|v| -v).collect() };
        let mut slope = dot(&g, &d);
        let mut t = if use_memory { 1.0 } else { sd_step };
        if !(slope < 0.0) {
            pairs.clear();
            d = g.iter().map(|v| -v).collect();
            slope = dot(&g, &d);
            t = sd_step;
        }

        let mut halvings = 0;
        let mut backtracks = 0;
        let mut accepted = None;
        let mut trial = vec![0.0; x.len()];
        loop {
            for i in 0..x.len() {
                trial[i] = x[i] + t * d[i];
            }
            match ev.eval(&trial)? {
                None => {
                    halvings += 1;
                    pairs.clear();
                    if halvings > MAX_HALVINGS {
                        break;
                    }
                    t *= 0.5;
                }
                Some((ft, gt)) => {
                    if !ft.is_finite() {
                        let state = write_deformation(&ev.work, wells);
                        return Err(Error::NonFinite { iteration: iterations, state });
                    }
                    if ft <= f + opts.armijo_c * t * slope && ft < f {
                        accepted = Some((ft, gt));
                        break;
                    }
                    backtracks += 1;
                    if backtracks > MAX_BACKTRACKS {
                        break;
                    }
                    t *= opts.backtrack_factor;
                }
            }
        }
        let Some((ft, gt)) = accepted else {
            if use_memory {
                // retry from steepest descent before giving up
                pairs.clear();
                continue;
            }
            termination = if halvings > MAX_HALVINGS { Termination::StalledByAdmissibility } else { Termination::Stalled };
            break;
        };
        if !use_memory || opts.method == Method::GradientDescent {
            // grow the steepest-descent step after an immediate success
            sd_step = if halvings == 0 && backtracks == 0 { t * 2.0 } else { t };
        }
        if opts.method == Method::Lbfgs {
            let s: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
            let sy = dot(&s, &y);
            if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() && sy > 0.0 {
                if pairs.len() == opts.memory {
                    pairs.pop_front();
                }
                pairs.push_back((s, y, 1.0 / sy));
            }
        }
        x.copy_from_slice(&trial);
        f = ft;
        g = gt;
        trace.push(f);
        iterations += 1;
    }
    if termination == Termination::MaxIters && sup(&g) <= opts.grad_tol {
        termination = Termination::Converged;
    }
    ev.work.set_free_dofs(&x);
    let admissible = ev.work.is_admissible();
    Ok(MinimizeResult { final_state: ev.work, energy_trace: trace, iterations, termination, admissible, grad_norm: sup(&g) })
}

#[derive(Clone, Debug, Serialize)]
pub struct SmoothingStage {
    pub eps: f64,
    /// Surrogate energy at the end of the stage.
    pub surrogate: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug)]
pub struct ContinuationResult {
    pub stages: Vec<SmoothingStage>,
    /// Final minimization of the exact density.
    pub result: MinimizeResult,
    /// Whether the smoothed path was discarded for a direct run from the input.
    pub fell_back: bool,
}

/// Minimizes the smooth surrogates `density.smoothed(ε)` for each `ε` in `schedule`,
/// then the exact density from the result.
///
/// The `|·|` terms make the exact energy non-smooth at every well, which stops plain
/// descent at the first kink; the surrogates let interfaces relax first. If the path
/// ends above a direct run's starting energy, the direct run is returned instead.
pub fn minimize_with_continuation(
    u: &Deformation,
    wells: &WellSystem,
    density: &Density,
    opts: &MinimizeOptions,
    schedule: &[f64],
) -> Result<ContinuationResult> {
    let mut state = u.clone();
    let mut stages = Vec::new();
    for &eps in schedule {
        let r = minimize(&state, wells, &density.smoothed(eps), opts)?;
        stages.push(SmoothingStage { eps, surrogate: *r.energy_trace.last().unwrap(), iterations: r.iterations });
        state = r.final_state;
    }
    let result = minimize(&state, wells, density, opts)?;
    let start = energy(u, wells, density)?;
    if *result.energy_trace.last().unwrap() > start {
        let direct = minimize(u, wells, density, opts)?;
        return Ok(ContinuationResult { stages, result: direct, fell_back: true });
    }
    Ok(ContinuationResult { stages, result, fell_back: false })
}

/// Default surrogate schedule.
pub const SMOOTHING_SCHEDULE: [f64; 5] = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{Constraint, LatticeDomain, Role, Shape};
    use crate::linalg::Vec2;
    use crate::optimize::{initialize_with_boundary, InitMode};
    use std::sync::Arc;

    fn wells() -> WellSystem {
        WellSystem::new(2f64.sqrt()).unwrap()
    }

    #[test]
    fn well_state_converges_immediately() {
        let w = wells();
        let dom = Arc::new(LatticeDomain::standard(4).unwrap());
        let u = initialize_with_boundary(dom, &InitMode::Affine(w.u0), &w, 1.0, Vec2::zeros()).unwrap();
        let r = minimize(&u, &w, &Density::Truncated, &MinimizeOptions::for_resolution(4)).unwrap();
        assert_eq!(r.iterations, 0);
        assert_eq!(r.termination, Termination::Converged);
    }

    #[test]
    fn descent_is_monotone_and_keeps_boundary_exact() {
        let w = wells();
        let dom = Arc::new(LatticeDomain::new(Shape::new(1.0, 0.5, Sign::Plus), 8).unwrap());
        let mode = InitMode::Perturbed { base: Box::new(InitMode::Affine(w.f_lambda(0.5))), amplitude: 0.02, seed: 1 };
        let u = initialize_with_boundary(dom.clone(), &mode, &w, 0.5, Vec2::zeros()).unwrap();
        for method in [Method::Lbfgs, Method::GradientDescent] {
            let mut opts = MinimizeOptions::for_resolution(8).with_max_iters(200);
            opts.method = method;
            let r = minimize(&u, &w, &Density::Truncated, &opts).unwrap();
            assert!(r.energy_trace.windows(2).all(|p| p[1] < p[0]));
            assert!(r.admissible);
            r.final_state.validate().unwrap();
            let f = w.f_lambda(0.5);
            let c = r.final_state.translation();
            for k in 0..dom.num_nodes() {
                let x = dom.point(k);
                match dom.role(k) {
                    Role::LeftBc | Role::LeftGhost => assert_eq!(r.final_state.position(k), f * x),
                    Role::RightBc | Role::RightGhost => {
                        assert_eq!(r.final_state.constraints()[k], Constraint::Translated);
                        assert_eq!(r.final_state.position(k), f * x + c);
                    }
                    _ => {}
                }
            }
            assert!((energy(&r.final_state, &w, &Density::Truncated).unwrap() - r.energy_trace.last().unwrap()).abs() < 1e-14);
            let again = minimize(&u, &w, &Density::Truncated, &opts).unwrap();
            assert_eq!(again.energy_trace, r.energy_trace);
        }
    }

    #[test]
    fn inadmissible_start_is_rejected() {
        let w = wells();
        let dom = Arc::new(LatticeDomain::standard(2).unwrap());
        let u = Deformation::affine(dom, crate::linalg::Mat2::new(0.0, 1.0, 1.0, 0.0), Vec2::zeros());
        assert!(minimize(&u, &w, &Density::Truncated, &MinimizeOptions::for_resolution(2)).is_err());
    }

    use crate::energy::Sign;

    #[test]
    fn continuation_never_ends_above_the_start() {
        let w = wells();
        let dom = Arc::new(LatticeDomain::new(Shape::new(1.0, 0.5, Sign::Plus), 8).unwrap());
        let mode = InitMode::Perturbed { base: Box::new(InitMode::Affine(w.f_lambda(0.5))), amplitude: 0.02, seed: 3 };
        let u = initialize_with_boundary(dom, &mode, &w, 0.5, Vec2::zeros()).unwrap();
        let opts = MinimizeOptions::for_resolution(8).with_max_iters(60);
        let c = minimize_with_continuation(&u, &w, &Density::Truncated, &opts, &SMOOTHING_SCHEDULE).unwrap();
        assert_eq!(c.stages.len(), SMOOTHING_SCHEDULE.len());
        let start = energy(&u, &w, &Density::Truncated).unwrap();
        assert!(*c.result.energy_trace.last().unwrap() <= start);
        c.result.final_state.validate().unwrap();
        assert!(c.result.admissible);
    }
}
