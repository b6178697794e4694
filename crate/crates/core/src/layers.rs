//! Boundary and internal layer energies, their geometric scaling, the surface-energy
//! scaling study on the standard domain, and assembly of the limiting interface energy.

use std::f64::consts::SQRT_2;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::{rescaled_energy, Density, Sign, WellLabel, WellSystem};
use crate::error::{Error, Result};
use crate::lattice::{Constraint, Deformation, Ends, LatticeDomain, Role, Shape};
use crate::linalg::Mat2;
use crate::optimize::{
    initialize, minimize_with_continuation, InitMode, Laminate, MinimizeOptions, Termination, SMOOTHING_SCHEDULE,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LayerKind {
    /// Transition from the boundary data `F_λ` on the left end into a well.
    #[serde(rename = "B+")]
    BPlus,
    /// Transition from a well into the boundary data `F_λ` on the right end.
    #[serde(rename = "B-")]
    BMinus,
    /// Internal interface with normal `(1,1)`.
    #[serde(rename = "C+")]
    CPlus,
    /// Internal interface with normal `(-1,1)`.
    #[serde(rename = "C-")]
    CMinus,
}

impl LayerKind {
    pub fn name(self) -> &'static str {
        match self {
            LayerKind::BPlus => "B+",
            LayerKind::BMinus => "B-",
            LayerKind::CPlus => "C+",
            LayerKind::CMinus => "C-",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().replace('_', "").as_str() {
            "b+" | "bplus" => Some(LayerKind::BPlus),
            "b-" | "bminus" => Some(LayerKind::BMinus),
            "c+" | "cplus" => Some(LayerKind::CPlus),
            "c-" | "cminus" => Some(LayerKind::CMinus),
            _ => None,
        }
    }

    fn is_boundary(self) -> bool {
        matches!(self, LayerKind::BPlus | LayerKind::BMinus)
    }
}

/// Solver settings shared by the layer and scaling studies.
#[derive(Clone, Debug)]
pub struct LayerOptions {
    pub density: Density,
    /// Iteration cap per minimization (the resolution defaults are used otherwise).
    pub max_iters: usize,
    /// Fraction of the diagonal extent pinned at each far end.
    pub strip_fraction: f64,
    /// Surrogate smoothing schedule run before the exact minimization (empty: none).
    pub smoothing: Vec<f64>,
}

impl Default for LayerOptions {
    fn default() -> Self {
        LayerOptions {
            density: Density::Truncated,
            max_iters: 300,
            strip_fraction: 0.125,
            smoothing: SMOOTHING_SCHEDULE.to_vec(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LayerRun {
    pub n: u32,
    /// Rescaled energy `n H_n` of the starting profile.
    pub initial: f64,
    /// Rescaled minimum found, `None` when the run failed.
    pub rescaled: Option<f64>,
    pub iterations: usize,
    pub termination: Option<Termination>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct LayerEnergyEstimate {
    pub kind: LayerKind,
    pub v1: [f64; 4],
    pub v2: [f64; 4],
    pub m1: f64,
    pub m2: f64,
    pub per_n: Vec<LayerRun>,
    /// `E∞` of the least-squares fit `E(n) = E∞ + A/n`, clamped at zero.
    pub extrapolated: f64,
    pub slope: f64,
    /// Root-mean-square residual of the fit.
    pub fit_residual: f64,
}

impl LayerEnergyEstimate {
    pub fn failed(&self) -> bool {
        self.per_n.iter().any(|r| r.rescaled.is_none())
    }

    /// Largest relative increase between consecutive resolutions.
    pub fn worst_increase(&self) -> f64 {
        let vals: Vec<f64> = self.per_n.iter().filter_map(|r| r.rescaled).collect();
        vals.windows(2).map(|p| if p[0] > 0.0 { (p[1] - p[0]) / p[0] } else { 0.0 }).fold(0.0, f64::max)
    }

    /// Finest-resolution value, the quantity compared across geometries.
    pub fn finest(&self) -> Option<f64> {
        self.per_n.iter().rev().find_map(|r| r.rescaled)
    }
}

fn flat(m: &Mat2) -> [f64; 4] {
    [m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]]
}

/// Least-squares fit of `e = e_inf + A / n`; returns `(e_inf, A, rms residual)`.
pub fn fit_inverse_n(points: &[(u32, f64)]) -> (f64, f64, f64) {
    match points.len() {
        0 => (0.0, 0.0, 0.0),
        1 => (points[0].1, 0.0, 0.0),
        m => {
            let mf = m as f64;
            let xs: Vec<f64> = points.iter().map(|(n, _)| 1.0 / *n as f64).collect();
            let mx = xs.iter().sum::<f64>() / mf;
            let my = points.iter().map(|p| p.1).sum::<f64>() / mf;
            let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
            let sxy: f64 = xs.iter().zip(points).map(|(x, p)| (x - mx) * (p.1 - my)).sum();
            let a = if sxx > 0.0 { sxy / sxx } else { 0.0 };
            let e = my - a * mx;
            let rss: f64 = xs.iter().zip(points).map(|(x, p)| (p.1 - e - a * x).powi(2)).sum();
            (e, a, (rss / mf).sqrt())
        }
    }
}

/// The strip problem for one resolution: the sampled limiting profile with both far
/// ends pinned, the `v2` end up to a free translation.
pub fn layer_problem(
    kind: LayerKind,
    v1: &Mat2,
    v2: &Mat2,
    sign: Sign,
    m1: f64,
    m2: f64,
    n: u32,
    wells: &WellSystem,
    strip_fraction: f64,
) -> Result<Deformation> {
    if kind.is_boundary() && sign != Sign::Plus {
        return Err(Error::Config("boundary layers live on Ω⁺ (the data lines are i+j = const)".into()));
    }
    let expected = match kind {
        LayerKind::CMinus => Sign::Minus,
        _ => Sign::Plus,
    };
    if sign != expected {
        return Err(Error::Config(format!("{} layers need sign {}", kind.name(), expected.as_char())));
    }
    if !(m1 > 0.0 && m2 > 0.0) {
        return Err(Error::Config(format!("layer geometry needs m1, m2 > 0, got {m1}, {m2}")));
    }
    let ends = if kind.is_boundary() { Ends::Clamped } else { Ends::Free };
    let dom = Arc::new(LatticeDomain::new(Shape::new(m1, m2, sign).with_ends(ends), n)?);
    let (half_d, _) = dom.half_extents();
    // the jump sits on the data line for boundary layers and on the center line otherwise
    let offset = match kind {
        LayerKind::BPlus => -m1 / SQRT_2,
        LayerKind::BMinus => m1 / SQRT_2,
        _ => 0.0,
    };
    let lam = Laminate { sign, offsets: vec![offset], phases: vec![*v1, *v2] };
    let mut u = initialize(dom.clone(), &InitMode::Laminate(lam.clone()), wells)?;

    let strip = ((2 * half_d) as f64 * strip_fraction).round() as i64;
    for k in 0..dom.num_nodes() {
        let s = dom.diagonal_coord(k);
        let x = dom.point(k);
        let role = dom.role(k);
        let (left, right) = match kind {
            LayerKind::BPlus => (matches!(role, Role::LeftBc | Role::LeftGhost), s >= half_d - strip),
            LayerKind::BMinus => (s <= -half_d + strip, matches!(role, Role::RightBc | Role::RightGhost)),
            _ => (s <= -half_d + strip, s >= half_d - strip),
        };
        if left {
            u.pin(k, Constraint::Fixed, lam.eval(x));
        } else if right {
            u.pin(k, Constraint::Translated, lam.eval(x));
        }
    }
    Ok(u)
}

/// Estimates a layer energy on `Ω^sign_{m1,m2}` at each resolution and extrapolates in `1/n`.
///
/// For boundary layers the `F_λ` side is given as `v1` (for `B+`) or `v2` (for `B-`).
#[allow(clippy::too_many_arguments)]
pub fn estimate_layer_energy(
    kind: LayerKind,
    v1: &Mat2,
    v2: &Mat2,
    sign: Sign,
    m1: f64,
    m2: f64,
    n_list: &[u32],
    wells: &WellSystem,
    opts: &LayerOptions,
) -> Result<LayerEnergyEstimate> {
    let defect = wells.rank_one_defect(v1, v2, sign);
    if defect > 1e-9 * (1.0 + v1.norm()) {
        return Err(Error::Domain(format!(
            "{} layer needs rank-one connected gradients across normal {:?}; defect {defect:e}",
            kind.name(),
            sign.normal()
        )));
    }
    for &n in n_list {
        for (what, m) in [("n·m1", m1), ("n·m2", m2)] {
            let v = n as f64 * m;
            if (v - v.round()).abs() > 1e-9 * v.abs().max(1.0) {
                return Err(Error::Config(format!("{what} = {v} is not an integer for n = {n}")));
            }
        }
    }
    let per_n: Vec<LayerRun> = n_list
        .par_iter()
        .map(|&n| {
            let run = || -> Result<(f64, f64, usize, Termination)> {
                let u = layer_problem(kind, v1, v2, sign, m1, m2, n, wells, opts.strip_fraction)?;
                let initial = rescaled_energy(&u, wells, &opts.density)?;
                let mo = MinimizeOptions::for_resolution(n).with_max_iters(opts.max_iters);
                let c = minimize_with_continuation(&u, wells, &opts.density, &mo, &opts.smoothing)?;
                let r = c.result;
                let last = *r.energy_trace.last().expect("trace starts with the initial energy");
                let iterations = r.iterations + c.stages.iter().map(|s| s.iterations).sum::<usize>();
                Ok((initial, n as f64 * last, iterations, r.termination))
            };
            match run() {
                Ok((initial, e, iterations, t)) => {
                    LayerRun { n, initial, rescaled: Some(e), iterations, termination: Some(t), error: None }
                }
                Err(e) => LayerRun {
                    n,
                    initial: f64::NAN,
                    rescaled: None,
                    iterations: 0,
                    termination: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let points: Vec<(u32, f64)> = per_n.iter().filter_map(|r| r.rescaled.map(|e| (r.n, e))).collect();
    let (e_inf, slope, fit_residual) = fit_inverse_n(&points);
    Ok(LayerEnergyEstimate {
        kind,
        v1: flat(v1),
        v2: flat(v2),
        m1,
        m2,
        per_n,
        extrapolated: e_inf.max(0.0),
        slope,
        fit_residual,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ScalingEntry {
    pub m1: f64,
    pub m2: f64,
    pub estimate: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScalingReport {
    pub n: u32,
    pub entries: Vec<ScalingEntry>,
    /// Worst relative spread over `m1` at fixed `m2`: `(max - min) / mean`.
    pub m1_spread: f64,
    /// `estimate(2 m2) / estimate(m2)` for every pair present in the grid (at the smallest `m1`).
    pub m2_ratios: Vec<(f64, f64, f64)>,
    pub m1_invariant: bool,
    pub m2_linear: bool,
}

impl ScalingReport {
    pub fn passes(&self) -> bool {
        self.m1_invariant && self.m2_linear
    }
}

/// Internal layer energies over an `m1 × m2` grid at a single resolution.
#[allow(clippy::too_many_arguments)]
pub fn scaling_study(
    v1: &Mat2,
    v2: &Mat2,
    sign: Sign,
    m1_list: &[f64],
    m2_list: &[f64],
    n: u32,
    wells: &WellSystem,
    opts: &LayerOptions,
) -> Result<ScalingReport> {
    let kind = match sign {
        Sign::Plus => LayerKind::CPlus,
        Sign::Minus => LayerKind::CMinus,
    };
    let grid: Vec<(f64, f64)> = m2_list.iter().flat_map(|&m2| m1_list.iter().map(move |&m1| (m1, m2))).collect();
    let entries: Vec<ScalingEntry> = grid
        .iter()
        .map(|&(m1, m2)| match estimate_layer_energy(kind, v1, v2, sign, m1, m2, &[n], wells, opts) {
            Ok(est) => ScalingEntry { m1, m2, estimate: est.finest(), error: est.per_n[0].error.clone() },
            Err(e) => ScalingEntry { m1, m2, estimate: None, error: Some(e.to_string()) },
        })
        .collect();
    let value = |m1: f64, m2: f64| entries.iter().find(|e| e.m1 == m1 && e.m2 == m2).and_then(|e| e.estimate);

    let mut m1_spread: f64 = 0.0;
    let mut complete = entries.iter().all(|e| e.estimate.is_some());
    for &m2 in m2_list {
        let vals: Vec<f64> = m1_list.iter().filter_map(|&m1| value(m1, m2)).collect();
        if vals.is_empty() {
            continue;
        }
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        // an all-zero row is trivially invariant
        if hi > 1e-10 {
            m1_spread = m1_spread.max((hi - lo) / mean);
        }
    }
    let mut m2_ratios = Vec::new();
    let mut m2_linear = true;
    if let Some(&m1) = m1_list.first() {
        for &m2 in m2_list {
            if !m2_list.contains(&(2.0 * m2)) {
                continue;
            }
            match (value(m1, m2), value(m1, 2.0 * m2)) {
                (Some(a), Some(b)) if a > 1e-10 => {
                    let r = b / a;
                    m2_linear &= (1.8..=2.2).contains(&r);
                    m2_ratios.push((m2, 2.0 * m2, r));
                }
                (Some(a), Some(b)) => m2_linear &= b <= 1e-10 && a <= 1e-10,
                _ => complete = false,
            }
        }
    }
    Ok(ScalingReport {
        n,
        entries,
        m1_spread,
        m2_ratios,
        m1_invariant: complete && m1_spread <= 0.10,
        m2_linear: complete && m2_linear,
    })
}

/// Starting laminates for one resolution of the surface study: interfaces at the
/// volume-fraction positions with a small random shift, perturbed by bumps.
fn surface_start(dom: &Arc<LatticeDomain>, wells: &WellSystem, lambda: f64, restart: usize, seed: u64) -> Result<Deformation> {
    let d = dom.shape().d;
    let f = wells.f_lambda(lambda);
    let qu1 = wells.q * wells.u1;
    let nf = dom.nf();
    let t0 = -d / SQRT_2;
    let t1 = d / SQRT_2;
    // restarts alternate between one and three internal interfaces
    let bands = if restart % 2 == 0 { 1 } else { 3 };
    let mut phases = vec![f];
    let mut offsets = vec![t0];
    let width = (t1 - t0) / bands as f64;
    let shift = if restart == 0 { 0.0 } else { (((seed.wrapping_add(restart as u64) * 7919) % 7) as f64 - 3.0) / nf };
    for b in 0..bands {
        let start = t0 + b as f64 * width;
        phases.push(wells.u0);
        let cut = start + lambda * width + shift / bands as f64;
        if lambda < 1.0 && cut > start && cut < start + width {
            offsets.push(cut);
            phases.push(qu1);
        }
        if b + 1 < bands {
            offsets.push(start + width);
        }
    }
    phases.push(f);
    offsets.push(t1);
    // merge consecutive equal phases (λ = 1)
    let mut lam = Laminate { sign: Sign::Plus, offsets: Vec::new(), phases: vec![phases[0]] };
    for (o, p) in offsets.iter().zip(&phases[1..]) {
        if *p != *lam.phases.last().unwrap() {
            lam.offsets.push(*o);
            lam.phases.push(*p);
        }
    }
    let base = InitMode::Laminate(lam);
    let amplitude = 0.05 * restart as f64 / nf;
    let mode = if restart == 0 {
        base
    } else {
        InitMode::Perturbed { base: Box::new(base), amplitude, seed: seed.wrapping_mul(31).wrapping_add(restart as u64) }
    };
    let mut u = initialize(dom.clone(), &mode, wells)?;
    let kr = (0..dom.num_nodes()).find(|&k| dom.role(k) == Role::RightBc).expect("standard domain has a right layer");
    let c = u.position(kr) - f * dom.point(kr);
    u.apply_boundary(wells, lambda, c)?;
    if !u.is_admissible() {
        return Err(Error::Domain("laminate start is not admissible after clamping".into()));
    }
    Ok(u)
}

#[derive(Clone, Debug, Serialize)]
pub struct SurfaceRow {
    pub n: u32,
    /// Best rescaled energy over the restarts, `None` if every restart failed.
    pub best: Option<f64>,
    pub best_restart: Option<usize>,
    pub per_restart: Vec<Option<f64>>,
    pub failures: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SurfaceStudy {
    pub lambda: f64,
    pub a: f64,
    pub rows: Vec<SurfaceRow>,
    /// `max / min` of the best rescaled energies over `n` (1 when all are zero).
    pub spread: f64,
    pub bounded: bool,
}

#[derive(Clone, Debug)]
pub struct SurfaceOptions {
    pub density: Density,
    /// Iteration cap per minimization stage.
    pub max_iters: usize,
    pub smoothing: Vec<f64>,
}

impl Default for SurfaceOptions {
    fn default() -> Self {
        SurfaceOptions { density: Density::Truncated, max_iters: 200, smoothing: SMOOTHING_SCHEDULE.to_vec() }
    }
}

/// Minimized states on the standard domain for every `n`, best of `restarts` starts.
pub fn surface_minimizers(
    lambda: f64,
    wells: &WellSystem,
    n: u32,
    restarts: usize,
    seed: u64,
    opts: &SurfaceOptions,
) -> Result<Vec<Result<(Deformation, f64)>>> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::Config(format!("λ ∈ (0,1] required, got {lambda}")));
    }
    let dom = Arc::new(LatticeDomain::standard(n)?);
    Ok((0..restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let u = surface_start(&dom, wells, lambda, r, seed)?;
            let mo = MinimizeOptions::for_resolution(n).with_max_iters(opts.max_iters);
            let res = minimize_with_continuation(&u, wells, &opts.density, &mo, &opts.smoothing)?.result;
            let e = n as f64 * res.energy_trace.last().unwrap();
            Ok((res.final_state, e))
        })
        .collect())
}

/// Best rescaled minimum `n H_n` per resolution on the standard domain with `F_λ` data.
pub fn surface_scaling_study(
    lambda: f64,
    a: f64,
    n_list: &[u32],
    restarts: usize,
    seed: u64,
    opts: &SurfaceOptions,
) -> Result<SurfaceStudy> {
    let wells = WellSystem::new(a)?;
    let mut rows = Vec::new();
    for &n in n_list {
        let runs = surface_minimizers(lambda, &wells, n, restarts, seed, opts)?;
        let per_restart: Vec<Option<f64>> = runs.iter().map(|r| r.as_ref().ok().map(|(_, e)| *e)).collect();
        let failures = runs.iter().filter_map(|r| r.as_ref().err().map(|e| e.to_string())).collect();
        let best = per_restart
            .iter()
            .enumerate()
            .filter_map(|(i, e)| e.map(|e| (i, e)))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        rows.push(SurfaceRow { n, best: best.map(|b| b.1), best_restart: best.map(|b| b.0), per_restart, failures });
    }
    let bests: Vec<f64> = rows.iter().filter_map(|r| r.best).collect();
    let hi = bests.iter().cloned().fold(0.0, f64::max);
    let lo = bests.iter().cloned().fold(f64::INFINITY, f64::min);
    let spread = if hi <= 1e-10 { 1.0 } else if lo > 0.0 { hi / lo } else { f64::INFINITY };
    let bounded = bests.len() == rows.len() && spread <= 3.0;
    Ok(SurfaceStudy { lambda, a, rows, spread, bounded })
}

/// One side of a layer: the boundary data or a well.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerSide {
    Data,
    Well(WellLabel),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerConstant {
    pub kind: LayerKind,
    pub left: LayerSide,
    pub right: LayerSide,
    pub value: f64,
}

/// Stored layer energies for one `(a, λ)`, values on the unit strip `m1 = m2 = 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerTable {
    pub a: f64,
    pub lambda: f64,
    pub n_list: Vec<u32>,
    pub entries: Vec<LayerConstant>,
}

impl LayerTable {
    pub fn get(&self, kind: LayerKind, left: LayerSide, right: LayerSide) -> Option<f64> {
        self.entries.iter().find(|e| e.kind == kind && e.left == left && e.right == right).map(|e| e.value)
    }

    /// Estimates every layer constant with gradients in `{U0, QU1}` (and `Q̃U1` for `C-`).
    pub fn estimate(a: f64, lambda: f64, n_list: &[u32], opts: &LayerOptions) -> Result<LayerTable> {
        let w = WellSystem::new(a)?;
        let f = w.f_lambda(lambda);
        let d = LayerSide::Data;
        let u0 = LayerSide::Well(WellLabel::U0);
        let qu1 = LayerSide::Well(WellLabel::QU1);
        let qtu1 = LayerSide::Well(WellLabel::QtU1);
        let plan = [
            (LayerKind::BPlus, d, u0, Sign::Plus),
            (LayerKind::BPlus, d, qu1, Sign::Plus),
            (LayerKind::BMinus, u0, d, Sign::Plus),
            (LayerKind::BMinus, qu1, d, Sign::Plus),
            (LayerKind::CPlus, u0, qu1, Sign::Plus),
            (LayerKind::CPlus, qu1, u0, Sign::Plus),
            (LayerKind::CMinus, u0, qtu1, Sign::Minus),
            (LayerKind::CMinus, qtu1, u0, Sign::Minus),
        ];
        let mat = |s: LayerSide| match s {
            LayerSide::Data => f,
            LayerSide::Well(l) => w.matrix(l),
        };
        let mut entries = Vec::new();
        for (kind, left, right, sign) in plan {
            let est = estimate_layer_energy(kind, &mat(left), &mat(right), sign, 1.0, 1.0, n_list, &w, opts)?;
            if est.failed() {
                return Err(Error::Domain(format!("{} layer estimate failed", kind.name())));
            }
            entries.push(LayerConstant { kind, left, right, value: est.extrapolated });
        }
        Ok(LayerTable { a, lambda, n_list: n_list.to_vec(), entries })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AssembledTerm {
    pub kind: LayerKind,
    pub left: LayerSide,
    pub right: LayerSide,
    pub value: f64,
    /// The same term per unit interface length (`value / √2`).
    pub per_length: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct AssembledEnergy {
    pub terms: Vec<AssembledTerm>,
    /// Sum of the layer constants.
    pub total: f64,
    /// Sum in the per-length convention, `total / √2`.
    pub total_per_length: f64,
}

/// Internal terms only: one `C+` per pair of consecutive phases.
pub fn internal_terms(phases: &[WellLabel], table: &LayerTable, wells: &WellSystem) -> Result<Vec<AssembledTerm>> {
    let mut out = Vec::new();
    for p in phases.windows(2) {
        let (l, r) = (LayerSide::Well(p[0]), LayerSide::Well(p[1]));
        let defect = wells.rank_one_defect(&wells.matrix(p[0]), &wells.matrix(p[1]), Sign::Plus);
        if defect > 1e-9 {
            return Err(Error::Domain(format!(
                "{} and {} are not rank-one connected across a (1,1) interface",
                p[0].name(),
                p[1].name()
            )));
        }
        let value = if p[0] == p[1] {
            0.0
        } else {
            table
                .get(LayerKind::CPlus, l, r)
                .ok_or_else(|| Error::Config(format!("no C+ constant for {} -> {}", p[0].name(), p[1].name())))?
        };
        out.push(AssembledTerm { kind: LayerKind::CPlus, left: l, right: r, value, per_length: value / SQRT_2 });
    }
    Ok(out)
}

/// Limiting surface energy of a laminate with phases `phases[0], …` from left to right:
/// `B+(F_λ, first) + Σ C+(consecutive) + B-(last, F_λ)`.
pub fn assemble_limit_energy(phases: &[WellLabel], lambda: f64, table: &LayerTable) -> Result<AssembledEnergy> {
    let w = WellSystem::new(table.a)?;
    let (Some(&first), Some(&last)) = (phases.first(), phases.last()) else {
        return Err(Error::Config("a laminate needs at least one phase".into()));
    };
    if let Some(p) = phases.iter().find(|p| **p == WellLabel::QtU1) {
        return Err(Error::Domain(format!("{} is outside the finite-energy class {{U0, QU1}}", p.name())));
    }
    if (lambda - table.lambda).abs() > 1e-12 {
        return Err(Error::Config(format!("layer table is for λ = {}, requested {lambda}", table.lambda)));
    }
    let boundary = |kind: LayerKind, l: LayerSide, r: LayerSide| -> Result<AssembledTerm> {
        let f = w.f_lambda(lambda);
        let m = |s: LayerSide| match s {
            LayerSide::Data => f,
            LayerSide::Well(x) => w.matrix(x),
        };
        // data equal to the well: the layer is affine
        let value = if (m(l) - m(r)).norm() < 1e-12 {
            0.0
        } else {
            table.get(kind, l, r).ok_or_else(|| Error::Config(format!("no {} constant in the table", kind.name())))?
        };
        Ok(AssembledTerm { kind, left: l, right: r, value, per_length: value / SQRT_2 })
    };
    let mut terms = vec![boundary(LayerKind::BPlus, LayerSide::Data, LayerSide::Well(first))?];
    terms.extend(internal_terms(phases, table, &w)?);
    terms.push(boundary(LayerKind::BMinus, LayerSide::Well(last), LayerSide::Data)?);
    let total: f64 = terms.iter().map(|t| t.value).sum();
    Ok(AssembledEnergy { terms, total, total_per_length: total / SQRT_2 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wells() -> WellSystem {
        WellSystem::new(SQRT_2).unwrap()
    }

    fn quick() -> LayerOptions {
        LayerOptions { max_iters: 40, ..LayerOptions::default() }
    }

    #[test]
    fn fit_recovers_exact_model() {
        let pts: Vec<(u32, f64)> = [8u32, 16, 32].iter().map(|&n| (n, 2.5 + 3.0 / n as f64)).collect();
        let (e, a, r) = fit_inverse_n(&pts);
        assert!((e - 2.5).abs() < 1e-12 && (a - 3.0).abs() < 1e-10 && r < 1e-12);
    }

    #[test]
    fn affine_profiles_cost_nothing() {
        let w = wells();
        let est = estimate_layer_energy(LayerKind::CMinus, &w.u0, &w.u0, Sign::Minus, 1.0, 1.0, &[8, 16], &w, &quick()).unwrap();
        assert!(est.per_n.iter().all(|r| r.rescaled.unwrap() < 1e-10));
        let f1 = w.f_lambda(1.0);
        let est = estimate_layer_energy(LayerKind::BPlus, &f1, &w.u0, Sign::Plus, 1.0, 1.0, &[8], &w, &quick()).unwrap();
        assert!(est.per_n[0].rescaled.unwrap() < 1e-10);
    }

    #[test]
    fn mismatched_pair_is_rejected() {
        let w = wells();
        let qu1 = w.q * w.u1;
        assert!(estimate_layer_energy(LayerKind::CMinus, &w.u0, &qu1, Sign::Minus, 1.0, 1.0, &[8], &w, &quick()).is_err());
        assert!(estimate_layer_energy(LayerKind::CPlus, &w.u0, &qu1, Sign::Plus, 1.0, 1.0, &[8], &w, &quick()).is_ok());
    }

    #[test]
    fn strip_pins_are_in_place() {
        let w = wells();
        let qtu1 = w.q_tilde * w.u1;
        let u = layer_problem(LayerKind::CMinus, &w.u0, &qtu1, Sign::Minus, 1.0, 1.0, 16, &w, 0.125).unwrap();
        let dom = u.domain();
        for k in 0..dom.num_nodes() {
            let s = dom.diagonal_coord(k);
            let c = u.constraints()[k];
            let expect = if s <= -12 {
                Constraint::Fixed
            } else if s >= 12 {
                Constraint::Translated
            } else {
                Constraint::Free
            };
            assert_eq!(c, expect, "node {:?}", dom.nodes()[k]);
        }
        assert!(u.is_admissible());
    }

    #[test]
    fn interface_energy_grows_with_length_only() {
        let w = wells();
        let qtu1 = w.q_tilde * w.u1;
        let e = |m1: f64, m2: f64| {
            let u = layer_problem(LayerKind::CMinus, &w.u0, &qtu1, Sign::Minus, m1, m2, 16, &w, 0.125).unwrap();
            rescaled_energy(&u, &w, &Density::Truncated).unwrap()
        };
        let base = e(1.0, 1.0);
        assert!(base > 0.0);
        assert!((e(2.0, 1.0) - base).abs() < 1e-9 * base);
        let r = e(1.0, 2.0) / base;
        assert!((1.8..2.2).contains(&r), "ratio {r}");
    }

    fn table() -> LayerTable {
        let d = LayerSide::Data;
        let u0 = LayerSide::Well(WellLabel::U0);
        let qu1 = LayerSide::Well(WellLabel::QU1);
        let e = |kind, left, right, value| LayerConstant { kind, left, right, value };
        LayerTable {
            a: SQRT_2,
            lambda: 0.5,
            n_list: vec![16],
            entries: vec![
                e(LayerKind::BPlus, d, u0, 1.0),
                e(LayerKind::BPlus, d, qu1, 2.0),
                e(LayerKind::BMinus, u0, d, 3.0),
                e(LayerKind::BMinus, qu1, d, 4.0),
                e(LayerKind::CPlus, u0, qu1, 10.0),
                e(LayerKind::CPlus, qu1, u0, 20.0),
            ],
        }
    }

    #[test]
    fn assembly_composes_boundary_and_internal_terms() {
        use WellLabel::*;
        let t = table();
        let one = assemble_limit_energy(&[U0, QU1], 0.5, &t).unwrap();
        assert_eq!(one.total, 1.0 + 10.0 + 4.0);
        assert!((one.total_per_length - one.total / SQRT_2).abs() < 1e-15);
        let phases = [U0, QU1, U0, QU1, U0];
        let all = assemble_limit_energy(&phases, 0.5, &t).unwrap();
        assert_eq!(all.terms.len(), phases.len() + 1);
        assert_eq!(all.total, 1.0 + 10.0 + 20.0 + 10.0 + 20.0 + 3.0);
        // splitting the internal list at a shared phase is additive
        let w = wells();
        let left: f64 = internal_terms(&phases[..3], &t, &w).unwrap().iter().map(|x| x.value).sum();
        let right: f64 = internal_terms(&phases[2..], &t, &w).unwrap().iter().map(|x| x.value).sum();
        assert_eq!(left + right, all.total - 1.0 - 3.0);
        assert!(assemble_limit_energy(&[U0, QtU1], 0.5, &t).is_err());
    }

    #[test]
    fn unit_fraction_single_phase_is_free() {
        let mut t = table();
        t.lambda = 1.0;
        let e = assemble_limit_energy(&[WellLabel::U0], 1.0, &t).unwrap();
        assert_eq!(e.total, 0.0);
    }

    #[test]
    fn unit_fraction_surface_study_is_zero() {
        let s = surface_scaling_study(1.0, SQRT_2, &[8, 16], 2, 1, &SurfaceOptions { max_iters: 20, ..Default::default() }).unwrap();
        for row in &s.rows {
            assert!(row.best.unwrap() < 1e-6, "{:?}", row);
        }
        assert!(s.bounded);
    }
}
