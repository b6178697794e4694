//! Thresholded ±1 spin fields and the spin Hamiltonian.

use serde::Serialize;

use crate::energy::density::bracket_u0;
use crate::energy::{energy_report, node_stencil, Density, EnergyReport, WellSystem};
use crate::error::{Error, Result};
use crate::lattice::{Deformation, EAST, NORTH};

#[derive(Clone, Debug, Serialize)]
pub struct SpinField {
    pub n: u32,
    /// One spin per real node.
    pub sigma: Vec<i8>,
    /// Unordered nearest-neighbor pairs with differing spins.
    pub mismatch_edges: Vec<(u32, u32)>,
    /// `Σ` over ordered neighbor pairs of `n⁻²(σ_p - σ_q)²`.
    pub h_spin: f64,
}

/// Closeness to `SO(2)U0`: distance of the node gradient, or of the stencil gradient where
/// the node touches no lattice triangle. A node with quotients in one direction only has
/// no gradient; the `U0` bracket of its present quotients is used instead.
fn u0_closeness(u: &Deformation, w: &WellSystem, k: usize) -> f64 {
    let s = node_stencil(u, k);
    match u.node_gradient(k).or_else(|| s.gradient().map(|g| g.0)) {
        Some(f) => w.dist_u0(&f),
        None => bracket_u0(&s, w),
    }
}

/// `σ = +1` iff `h ≤ c̄/10` and `dist(∇u, SO(2)U0) ≤ c̄/10`.
pub fn spin_field_from_report(u: &Deformation, w: &WellSystem, report: &EnergyReport) -> Result<SpinField> {
    let dom = u.domain();
    if report.site_density.len() != dom.num_real() || report.n != dom.n() {
        return Err(Error::Structural("energy report does not belong to this deformation".into()));
    }
    let thr = w.cbar / 10.0;
    let sigma: Vec<i8> = (0..dom.num_real())
        .map(|k| {
            let close = u0_closeness(u, w, k) <= thr;
            if report.site_density[k] <= thr && close {
                1
            } else {
                -1
            }
        })
        .collect();
    let mut mismatch_edges = Vec::new();
    for k in 0..dom.num_real() {
        let nb = dom.neighbors()[k];
        for slot in [EAST, NORTH] {
            let q = nb[slot];
            if dom.is_real(q) && sigma[k] != sigma[q as usize] {
                mismatch_edges.push((k as u32, q));
            }
        }
    }
    let h_spin = spin_hamiltonian_count(mismatch_edges.len(), dom.n());
    Ok(SpinField { n: dom.n(), sigma, mismatch_edges, h_spin })
}

/// Spin field of `u` using the truncated density.
pub fn spin_field(u: &Deformation, w: &WellSystem) -> Result<SpinField> {
    let rep = energy_report(u, w, &Density::Truncated)?;
    spin_field_from_report(u, w, &rep)
}

/// Each unordered mismatch edge appears twice in the ordered sum, each time with weight 4.
pub fn spin_hamiltonian_count(mismatches: usize, n: u32) -> f64 {
    8.0 * mismatches as f64 / (n as f64 * n as f64)
}

/// Spin Hamiltonian recomputed from the spins by the ordered-pair definition.
pub fn spin_hamiltonian(u: &Deformation, sf: &SpinField) -> f64 {
    let dom = u.domain();
    let inv = 1.0 / (dom.nf() * dom.nf());
    let mut total = 0.0;
    for k in 0..dom.num_real() {
        for &q in &dom.neighbors()[k] {
            if dom.is_real(q) {
                let d = (sf.sigma[k] - sf.sigma[q as usize]) as f64;
                total += inv * d * d;
            }
        }
    }
    total
}

#[derive(Clone, Debug, Serialize)]
pub struct EdgeViolation {
    pub plus_node: (i32, i32),
    pub minus_node: (i32, i32),
    pub density: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ComparisonRecord {
    pub energy: f64,
    pub h_spin: f64,
    pub mismatch_edges: usize,
    /// `H_n / H_n^s`, absent when no edge mismatches.
    pub ratio: Option<f64>,
    /// Smallest density at a `-1` endpoint of a mismatch edge.
    pub min_minus_density: Option<f64>,
    pub violations: Vec<EdgeViolation>,
    /// Mismatch-edge count divided by `n`.
    pub perimeter: f64,
}

impl ComparisonRecord {
    pub fn passes(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks that the `-1` endpoint of every mismatch edge carries density above `c̄/100`.
pub fn comparison_check(u: &Deformation, w: &WellSystem) -> Result<ComparisonRecord> {
    let rep = energy_report(u, w, &Density::Truncated)?;
    let sf = spin_field_from_report(u, w, &rep)?;
    let dom = u.domain();
    let thr = w.cbar / 100.0 - 1e-12;
    let mut violations = Vec::new();
    let mut min_minus = None::<f64>;
    for &(p, q) in &sf.mismatch_edges {
        let (plus, minus) = if sf.sigma[p as usize] > 0 { (p, q) } else { (q, p) };
        let h = rep.site_density[minus as usize];
        min_minus = Some(min_minus.map_or(h, |m| m.min(h)));
        if !(h > thr) {
            violations.push(EdgeViolation {
                plus_node: dom.nodes()[plus as usize],
                minus_node: dom.nodes()[minus as usize],
                density: h,
            });
        }
    }
    Ok(ComparisonRecord {
        energy: rep.total,
        h_spin: sf.h_spin,
        mismatch_edges: sf.mismatch_edges.len(),
        ratio: (sf.h_spin > 0.0).then(|| rep.total / sf.h_spin),
        min_minus_density: min_minus,
        violations,
        perimeter: sf.mismatch_edges.len() as f64 / dom.nf(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticeDomain;
    use crate::linalg::{Mat2, Vec2};
    use std::f64::consts::SQRT_2;
    use std::sync::Arc;

    fn setup(n: u32) -> (Arc<LatticeDomain>, WellSystem) {
        (Arc::new(LatticeDomain::standard(n).unwrap()), WellSystem::new(SQRT_2).unwrap())
    }

    #[test]
    fn pure_wells_are_uniform() {
        let (dom, w) = setup(8);
        let u = Deformation::affine(dom.clone(), w.u0, Vec2::zeros());
        let sf = spin_field(&u, &w).unwrap();
        assert!(sf.sigma.iter().all(|&s| s == 1));
        assert_eq!(sf.h_spin, 0.0);
        let v = Deformation::affine(dom, w.q * w.u1, Vec2::zeros());
        let sf = spin_field(&v, &w).unwrap();
        assert!(sf.sigma.iter().all(|&s| s == -1));
        assert!(sf.mismatch_edges.is_empty());
    }

    #[test]
    fn flipped_interior_spin_costs_four_edges() {
        let (dom, w) = setup(8);
        let u = Deformation::affine(dom.clone(), w.u0, Vec2::zeros());
        let rep = energy_report(&u, &w, &Density::Truncated).unwrap();
        let mut sf = spin_field_from_report(&u, &w, &rep).unwrap();
        let k = dom.index_of(0, 0) as usize;
        sf.sigma[k] = -1;
        assert!((spin_hamiltonian(&u, &sf) - 8.0 * 4.0 / 64.0).abs() < 1e-15);
    }

    #[test]
    fn mismatched_report_is_rejected() {
        let (dom, w) = setup(4);
        let u = Deformation::affine(dom, Mat2::identity(), Vec2::zeros());
        let other = Deformation::affine(Arc::new(LatticeDomain::standard(2).unwrap()), Mat2::identity(), Vec2::zeros());
        let rep = energy_report(&other, &w, &Density::Truncated).unwrap();
        assert!(matches!(spin_field_from_report(&u, &w, &rep), Err(Error::Structural(_))));
    }

    #[test]
    fn ordered_sum_matches_edge_count() {
        let (dom, w) = setup(8);
        // sharp interface: U0 left of x₁+x₂ = 0, QU1 right of it
        let a = w.u0 - w.q * w.u1;
        let u = Deformation::from_fn(dom, |x| {
            let t = x.x + x.y;
            if t <= 0.0 { w.u0 * x } else { w.u0 * x - a * x }
        });
        let sf = spin_field(&u, &w).unwrap();
        assert!(!sf.mismatch_edges.is_empty());
        assert!((spin_hamiltonian(&u, &sf) - sf.h_spin).abs() < 1e-12);
        assert!(comparison_check(&u, &w).unwrap().passes());
    }
}
