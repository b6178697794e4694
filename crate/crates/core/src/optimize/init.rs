//! Starting configurations: affine states, two-phase profiles, laminates and perturbations.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::energy::{Sign, WellSystem};
use crate::error::{Error, Result};
use crate::lattice::{Deformation, LatticeDomain};
use crate::linalg::{Mat2, Vec2};

/// Parallel layers with gradients `phases[0], …, phases[K]` separated at the signed
/// offsets `offsets[0] < … < offsets[K-1]` along the unit normal of `sign`.
#[derive(Clone, Debug)]
pub struct Laminate {
    pub sign: Sign,
    pub offsets: Vec<f64>,
    pub phases: Vec<Mat2>,
}

impl Laminate {
    /// Rejects unsorted offsets and consecutive gradients that are not rank-one
    /// connected across the interface direction.
    pub fn validate(&self, wells: &WellSystem) -> Result<()> {
        if self.phases.len() != self.offsets.len() + 1 {
            return Err(Error::Config(format!(
                "laminate needs one more phase than interfaces ({} phases, {} offsets)",
                self.phases.len(),
                self.offsets.len()
            )));
        }
        if self.offsets.windows(2).any(|p| !(p[0] < p[1])) {
            return Err(Error::Config("laminate offsets must be strictly increasing".into()));
        }
        for (k, p) in self.phases.windows(2).enumerate() {
            let defect = wells.rank_one_defect(&p[0], &p[1], self.sign);
            if defect > 1e-9 * (1.0 + p[0].norm()) {
                return Err(Error::Domain(format!(
                    "phases {k} and {} are not rank-one connected across normal {:?}: defect {defect:e}",
                    k + 1,
                    self.sign.normal()
                )));
            }
        }
        Ok(())
    }

    /// Continuous piecewise-affine map, `phases[0] x` on the first layer.
    pub fn eval(&self, x: Vec2) -> Vec2 {
        let nu = self.sign.unit_normal();
        let t = x.dot(&nu);
        let mut y = self.phases[0] * x;
        for (k, &o) in self.offsets.iter().enumerate() {
            if t <= o {
                break;
            }
            // (P_k - P_{k+1}) x is constant on the interface line t = o
            let jump = self.phases[k] - self.phases[k + 1];
            y -= jump * x - jump * (nu * o);
        }
        y
    }
}

#[derive(Clone, Debug)]
pub enum InitMode {
    Affine(Mat2),
    /// `V1 x` where `x·(±1,1) ≤ 0` (relative to the domain center), `V2 x` beyond.
    Profile { v1: Mat2, v2: Mat2, sign: Sign },
    Laminate(Laminate),
    /// Base state plus a smooth random bump field of the given sup amplitude.
    Perturbed { base: Box<InitMode>, amplitude: f64, seed: u64 },
}

/// Sum of Gaussian bumps with random centers, widths and directions, scaled to `amplitude`.
pub fn bump_field(domain: &LatticeDomain, amplitude: f64, seed: u64) -> Vec<Vec2> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = domain.shape().vertices();
    let (lo, hi) = v.iter().fold((Vec2::repeat(f64::INFINITY), Vec2::repeat(f64::NEG_INFINITY)), |(lo, hi), p| {
        (lo.inf(p), hi.sup(p))
    });
    let bumps: Vec<(Vec2, f64, Vec2)> = (0..12)
        .map(|_| {
            let c = Vec2::new(rng.random_range(lo.x..=hi.x), rng.random_range(lo.y..=hi.y));
            let width = rng.random_range(0.15..0.6) * domain.shape().l.max(0.25);
            let phi = rng.random_range(0.0..std::f64::consts::TAU);
            (c, width, Vec2::new(phi.cos(), phi.sin()) * rng.random_range(0.3..1.0))
        })
        .collect();
    let mut field: Vec<Vec2> = (0..domain.num_nodes())
        .map(|k| {
            let x = domain.point(k);
            bumps.iter().fold(Vec2::zeros(), |s, (c, wd, dir)| s + dir * (-(x - c).norm_squared() / (wd * wd)).exp())
        })
        .collect();
    let peak = field.iter().map(|d| d.norm()).fold(0.0, f64::max);
    if peak > 0.0 {
        for d in &mut field {
            *d *= amplitude / peak;
        }
    }
    field
}

fn base_map(mode: &InitMode, domain: &LatticeDomain, wells: &WellSystem) -> Result<Box<dyn Fn(Vec2) -> Vec2>> {
    let c = Vec2::new(domain.shape().center[0], domain.shape().center[1]);
    Ok(match mode {
        InitMode::Affine(f) => {
            let f = *f;
            Box::new(move |x| f * x)
        }
        InitMode::Profile { v1, v2, sign } => {
            let lam = Laminate { sign: *sign, offsets: vec![c.dot(&sign.unit_normal())], phases: vec![*v1, *v2] };
            lam.validate(wells)?;
            Box::new(move |x| lam.eval(x))
        }
        InitMode::Laminate(lam) => {
            lam.validate(wells)?;
            let lam = lam.clone();
            Box::new(move |x| lam.eval(x))
        }
        InitMode::Perturbed { .. } => return Err(Error::Config("nested perturbation".into())),
    })
}

/// Samples the requested state on all nodes (ghosts included). Boundary data is not
/// applied here; see `initialize_with_boundary`.
pub fn initialize(domain: Arc<LatticeDomain>, mode: &InitMode, wells: &WellSystem) -> Result<Deformation> {
    match mode {
        InitMode::Perturbed { base, amplitude, seed } => {
            let f = base_map(base, &domain, wells)?;
            for attempt in 0..100u64 {
                let bumps = bump_field(&domain, *amplitude, seed.wrapping_add(attempt.wrapping_mul(0x9E37_79B9)));
                let mut k = 0;
                let u = Deformation::from_fn(domain.clone(), |x| {
                    let y = f(x) + bumps[k];
                    k += 1;
                    y
                });
                if u.is_admissible() {
                    return Ok(u);
                }
            }
            Err(Error::Domain(format!("no admissible perturbation of amplitude {amplitude} after 100 attempts")))
        }
        _ => {
            let f = base_map(mode, &domain, wells)?;
            Ok(Deformation::from_fn(domain, f))
        }
    }
}

/// `initialize` followed by clamping to `F_λ x` and `F_λ x + c`; the admissibility
/// requirement of the perturbed mode is checked after clamping.
pub fn initialize_with_boundary(
    domain: Arc<LatticeDomain>,
    mode: &InitMode,
    wells: &WellSystem,
    lambda: f64,
    c: Vec2,
) -> Result<Deformation> {
    match mode {
        InitMode::Perturbed { base, amplitude, seed } => {
            let f = base_map(base, &domain, wells)?;
            for attempt in 0..100u64 {
                let bumps = bump_field(&domain, *amplitude, seed.wrapping_add(attempt.wrapping_mul(0x9E37_79B9)));
                let mut k = 0;
                let mut u = Deformation::from_fn(domain.clone(), |x| {
                    let y = f(x) + bumps[k];
                    k += 1;
                    y
                });
                u.apply_boundary(wells, lambda, c)?;
                if u.is_admissible() {
                    return Ok(u);
                }
            }
            Err(Error::Domain(format!("no admissible perturbation of amplitude {amplitude} after 100 attempts")))
        }
        _ => {
            let mut u = initialize(domain, mode, wells)?;
            u.apply_boundary(wells, lambda, c)?;
            Ok(u)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::{energy_report, Density};
    use crate::lattice::Shape;

    fn wells() -> WellSystem {
        WellSystem::new(2f64.sqrt()).unwrap()
    }

    #[test]
    fn affine_mode() {
        let w = wells();
        let dom = Arc::new(LatticeDomain::standard(4).unwrap());
        let u = initialize(dom, &InitMode::Affine(w.u0), &w).unwrap();
        for t in 0..u.domain().triangles().len() {
            assert!((u.triangle_gradient(t) - w.u0).norm() < 1e-12);
        }
    }

    #[test]
    fn profile_is_continuous_across_the_diagonal() {
        let w = wells();
        let dom = Arc::new(LatticeDomain::new(Shape::new(1.0, 1.0, Sign::Minus), 8).unwrap());
        let mode = InitMode::Profile { v1: w.u0, v2: w.q_tilde * w.u1, sign: Sign::Minus };
        let u = initialize(dom.clone(), &mode, &w).unwrap();
        for k in 0..dom.num_nodes() {
            let x = dom.point(k);
            if (x.y - x.x).abs() < 1e-12 {
                assert!((u.position(k) - w.u0 * x).norm() < 1e-12);
                assert!((u.position(k) - w.q_tilde * w.u1 * x).norm() < 1e-12);
            }
        }
        assert!(u.is_admissible());
    }

    #[test]
    fn mismatched_profile_is_rejected() {
        let w = wells();
        let dom = Arc::new(LatticeDomain::new(Shape::new(1.0, 1.0, Sign::Minus), 8).unwrap());
        let mode = InitMode::Profile { v1: w.u0, v2: w.q * w.u1, sign: Sign::Minus };
        assert!(matches!(initialize(dom, &mode, &w), Err(Error::Domain(_))));
    }

    #[test]
    fn three_interface_laminate_concentrates_energy_on_bands() {
        let w = wells();
        let n = 16;
        let dom = Arc::new(LatticeDomain::standard(n).unwrap());
        let (p, q) = (w.u0, w.q * w.u1);
        let s2 = 2f64.sqrt();
        let lam = Laminate { sign: Sign::Plus, offsets: vec![-1.5 / s2, 0.0, 1.5 / s2], phases: vec![p, q, p, q] };
        let u = initialize(dom.clone(), &InitMode::Laminate(lam), &w).unwrap();
        let rep = energy_report(&u, &w, &Density::Tilde).unwrap();
        for k in 0..dom.num_real() {
            let (i, j) = dom.nodes()[k];
            let s = i + j;
            let near = [-24, 0, 24].iter().any(|&o| (s - o).abs() <= 1);
            if !near {
                assert!(rep.site_density[k] < 1e-12, "node {:?} density {}", (i, j), rep.site_density[k]);
            }
        }
        assert!(rep.total > 0.0);
    }

    #[test]
    fn perturbed_mode_is_admissible_and_deterministic() {
        let w = wells();
        let dom = Arc::new(LatticeDomain::standard(8).unwrap());
        let mode = InitMode::Perturbed { base: Box::new(InitMode::Affine(w.f_lambda(0.5))), amplitude: 0.01, seed: 4 };
        let a = initialize_with_boundary(dom.clone(), &mode, &w, 0.5, Vec2::zeros()).unwrap();
        let b = initialize_with_boundary(dom, &mode, &w, 0.5, Vec2::zeros()).unwrap();
        assert!(a.is_admissible());
        assert_eq!(a.positions(), b.positions());
    }
}
