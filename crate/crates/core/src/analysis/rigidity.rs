use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::analysis::ScalarLatticeField;
use crate::energy::{node_stencil, Density, WellSystem};
use crate::error::{Error, Result};
use crate::lattice::Deformation;
use crate::linalg::Vec2;

#[derive(Clone, Copy, Debug)]
pub struct RigidityParams {
    pub x0: Vec2,
    pub y0: Vec2,
    pub alpha: f64,
    pub samples: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RigidityRecord {
    pub r: f64,
    /// `r⁻² Σ_M n⁻² dist(∇u, K)`
    pub mu: f64,
    /// `Σ_M n⁻² (r⁻² φ + r⁻¹ |∇_n φ|)` with the one-well density `φ`.
    pub eta: f64,
    /// `|u(x) - u(y)| / |U0(x - y)|` for the sampled pairs.
    pub ratios: Vec<f64>,
    pub nodes_in_hull: usize,
}

impl RigidityRecord {
    /// Fraction of pairs with `1 - cμ ≤ ratio ≤ 1 + cμ` (plus rounding slack).
    pub fn fraction_within(&self, c: f64) -> f64 {
        let band = c * self.mu + 1e-12;
        let hits = self.ratios.iter().filter(|&&q| (q - 1.0).abs() <= band).count();
        hits as f64 / self.ratios.len().max(1) as f64
    }

    /// `q`-quantile of `|ratio - 1|`.
    pub fn deviation_quantile(&self, q: f64) -> f64 {
        let mut d: Vec<f64> = self.ratios.iter().map(|r| (r - 1.0).abs()).collect();
        if d.is_empty() {
            return 0.0;
        }
        d.sort_by(f64::total_cmp);
        let idx = ((q * d.len() as f64).ceil() as usize).clamp(1, d.len()) - 1;
        d[idx]
    }
}

fn segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let t = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Distance from `x` to the complement of the domain parallelogram (negative outside).
fn depth_inside(u: &Deformation, x: Vec2) -> f64 {
    let v = u.domain().shape().vertices();
    (0..4)
        .map(|k| {
            let e = v[(k + 1) % 4] - v[k];
            let w = x - v[k];
            (e.x * w.y - e.y * w.x) / e.norm()
        })
        .fold(f64::INFINITY, f64::min)
}

fn sample_disc(rng: &mut ChaCha8Rng, center: Vec2, radius: f64) -> Vec2 {
    let rho = radius * rng.random::<f64>().sqrt();
    let phi = std::f64::consts::TAU * rng.random::<f64>();
    center + Vec2::new(rho * phi.cos(), rho * phi.sin())
}

/// Samples pairs from `B_{αr}(x0) × B_{αr}(y0)` and evaluates the length ratios, `μ` and `η`
/// over the hull `M = conv(B_{2αr}(x0) ∪ B_{2αr}(y0))`.
pub fn rigidity_sample(u: &Deformation, w: &WellSystem, p: &RigidityParams) -> Result<RigidityRecord> {
    let r = (p.x0 - p.y0).norm();
    if !(r > 0.0) {
        return Err(Error::Domain("x0 and y0 must differ".into()));
    }
    if !(p.alpha > 0.0 && p.alpha < 0.125) {
        return Err(Error::Domain(format!("alpha = {} outside (0, 1/8)", p.alpha)));
    }
    for c in [p.x0, p.y0] {
        if depth_inside(u, c) < 2.0 * p.alpha * r {
            return Err(Error::Domain(format!(
                "ball of radius {} around ({}, {}) leaves the domain",
                2.0 * p.alpha * r,
                c.x,
                c.y
            )));
        }
    }
    let dom = u.domain();
    let nf = dom.nf();
    let inv = 1.0 / (nf * nf);
    let hull: Vec<bool> = (0..dom.num_real())
        .map(|k| segment_distance(dom.point(k), p.x0, p.y0) <= 2.0 * p.alpha * r)
        .collect();

    let phi = ScalarLatticeField::new(
        dom.clone(),
        (0..dom.num_real()).map(|k| Density::OneWell.value(&node_stencil(u, k), w)).collect(),
    );
    let grad_phi = phi.discrete_gradient();
    let mut mu = 0.0;
    let mut eta = 0.0;
    let mut count = 0;
    for k in (0..dom.num_real()).filter(|&k| hull[k]) {
        count += 1;
        if let Some(f) = u.node_gradient(k) {
            mu += inv * w.dist_to_k(&f);
        }
        eta += inv * (phi.values[k] / (r * r) + grad_phi[k].norm() / r);
    }
    mu /= r * r;

    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let rad = p.alpha * r;
    let mut ratios = Vec::with_capacity(p.samples);
    for _ in 0..p.samples {
        let x = sample_disc(&mut rng, p.x0, rad);
        let y = sample_disc(&mut rng, p.y0, rad);
        let num = (u.interpolate(x)? - u.interpolate(y)?).norm();
        ratios.push(num / (w.u0 * (x - y)).norm());
    }
    Ok(RigidityRecord { r, mu, eta, ratios, nodes_in_hull: count })
}

/// Geometry of a tapered `QU1` needle embedded in the `U0` state.
#[derive(Clone, Copy, Debug)]
pub struct Needle {
    /// Point on the needle's center line.
    pub center: Vec2,
    /// Width across the `(1,1)` normal.
    pub width: f64,
    /// Half-length of the untapered part along the interface direction.
    pub half_length: f64,
    /// Length of the taper at each end.
    pub taper: f64,
}

fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * x * (10.0 - 15.0 * x + 6.0 * x * x)
}

/// `U0 x` with a `QU1` needle: `u = U0 x - v g(x·ν) χ(x·τ)` where `U0 - QU1 = v ⊗ ν`,
/// `g` ramps across the needle and `χ` tapers it off along `τ`.
pub fn needle_state(u: &mut Deformation, w: &WellSystem, needle: &Needle) {
    let nu = Vec2::new(1.0, 1.0) / 2f64.sqrt();
    let tau = Vec2::new(-1.0, 1.0) / 2f64.sqrt();
    let v = (w.u0 - w.q * w.u1) * nu;
    let t0 = needle.center.dot(&nu) - 0.5 * needle.width;
    let s0 = needle.center.dot(&tau);
    let dom = u.domain().clone();
    for k in 0..dom.num_nodes() {
        let x = dom.point(k);
        let g = (x.dot(&nu) - t0).clamp(0.0, needle.width);
        let s = (x.dot(&tau) - s0).abs();
        let chi = 1.0 - smoothstep((s - needle.half_length) / needle.taper);
        u.set_free_position(k, w.u0 * x - v * (g * chi));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticeDomain;
    use crate::linalg::rotation;
    use std::sync::Arc;

    fn params() -> RigidityParams {
        RigidityParams { x0: Vec2::new(-1.0, 0.0), y0: Vec2::new(1.0, 0.0), alpha: 0.1, samples: 500, seed: 3 }
    }

    #[test]
    fn rigid_states_have_unit_ratios() {
        let w = WellSystem::new(2f64.sqrt()).unwrap();
        let dom = Arc::new(LatticeDomain::standard(8).unwrap());
        for r in [crate::linalg::Mat2::identity(), rotation(0.8)] {
            let u = Deformation::affine(dom.clone(), r * w.u0, Vec2::new(0.3, 0.1));
            let rec = rigidity_sample(&u, &w, &params()).unwrap();
            assert!(rec.mu < 1e-12);
            assert!(rec.ratios.iter().all(|q| (q - 1.0).abs() < 1e-12));
            assert_eq!(rec.fraction_within(1.0), 1.0);
        }
    }

    #[test]
    fn ratios_invariant_under_rigid_motion() {
        let w = WellSystem::new(2f64.sqrt()).unwrap();
        let dom = Arc::new(LatticeDomain::standard(8).unwrap());
        let mut u = Deformation::affine(dom, w.u0, Vec2::zeros());
        needle_state(&mut u, &w, &Needle { center: Vec2::new(-1.0, 0.0), width: 0.1, half_length: 0.2, taper: 0.3 });
        let a = rigidity_sample(&u, &w, &params()).unwrap();
        u.map_image(&rotation(-1.1), Vec2::new(4.0, 2.0));
        let b = rigidity_sample(&u, &w, &params()).unwrap();
        for (p, q) in a.ratios.iter().zip(&b.ratios) {
            assert!((p - q).abs() < 1e-12);
        }
        assert!(a.mu > 0.0);
    }

    #[test]
    fn needle_keeps_orientation() {
        let w = WellSystem::new(2f64.sqrt()).unwrap();
        let dom = Arc::new(LatticeDomain::standard(16).unwrap());
        let mut u = Deformation::affine(dom, w.u0, Vec2::zeros());
        needle_state(&mut u, &w, &Needle { center: Vec2::new(-1.0, 0.0), width: 0.05, half_length: 0.3, taper: 0.3 });
        assert!(u.is_admissible());
    }

    #[test]
    fn geometry_is_validated() {
        let w = WellSystem::new(2f64.sqrt()).unwrap();
        let dom = Arc::new(LatticeDomain::standard(4).unwrap());
        let u = Deformation::affine(dom, w.u0, Vec2::zeros());
        let mut p = params();
        p.alpha = 0.2;
        assert!(rigidity_sample(&u, &w, &p).is_err());
        let mut p = params();
        p.x0 = Vec2::new(0.0, 0.9);
        assert!(rigidity_sample(&u, &w, &p).is_err());
    }
}
