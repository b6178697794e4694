use serde::Serialize;

use crate::analysis::ScalarLatticeField;
use crate::error::{Error, Result};
use crate::lattice::{EAST, NORTH};

#[derive(Clone, Copy, Debug, Serialize)]
pub struct CoareaRecord {
    /// `∫₀^∞ Per_M({f ≥ t}) dt`
    pub lhs: f64,
    /// `Σ_M n⁻² |∇_n f|`
    pub rhs: f64,
    /// `lhs / rhs`, zero when both vanish.
    pub ratio: f64,
}

/// Discrete coarea comparison on the nodes selected by `mask` (all real nodes when `None`).
///
/// Perimeters count lattice edges inside `M` with exactly one endpoint in the super-level
/// set, divided by `n`. The integral is evaluated exactly: the perimeter is piecewise
/// constant between consecutive distinct values of `f`.
pub fn coarea_check(f: &ScalarLatticeField, mask: Option<&[bool]>) -> Result<CoareaRecord> {
    let dom = &f.domain;
    let m = f.values.len();
    let in_m = |k: usize| mask.is_none_or(|msk| msk[k]);
    if let Some(k) = (0..m).find(|&k| in_m(k) && !(f.values[k] >= 0.0)) {
        return Err(Error::Domain(format!("coarea needs f ≥ 0, got {} at node {:?}", f.values[k], dom.nodes()[k])));
    }
    let mut edges = Vec::new();
    for k in (0..m).filter(|&k| in_m(k)) {
        for slot in [EAST, NORTH] {
            let q = dom.neighbors()[k][slot];
            if dom.is_real(q) && in_m(q as usize) {
                edges.push((k, q as usize));
            }
        }
    }
    let mut levels: Vec<f64> = (0..m).filter(|&k| in_m(k)).map(|k| f.values[k]).filter(|&v| v > 0.0).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    // an edge with endpoint values lo < hi is cut exactly for the levels in (lo, hi]
    let mut delta = vec![0i64; levels.len() + 1];
    for &(p, q) in &edges {
        let (lo, hi) = if f.values[p] <= f.values[q] { (f.values[p], f.values[q]) } else { (f.values[q], f.values[p]) };
        delta[levels.partition_point(|&t| t <= lo)] += 1;
        delta[levels.partition_point(|&t| t <= hi)] -= 1;
    }
    let n = dom.nf();
    let mut lhs = 0.0;
    let mut prev = 0.0;
    let mut cut = 0i64;
    for (idx, &t) in levels.iter().enumerate() {
        cut += delta[idx];
        lhs += (t - prev) * cut as f64 / n;
        prev = t;
    }
    let grads = f.discrete_gradient();
    let rhs: f64 = (0..m)
        .filter(|&k| in_m(k))
        .map(|k| {
            let nb = dom.neighbors()[k];
            // components leaving M are dropped, matching the edge set of the perimeter
            let keep = |slot: usize, d: Option<f64>| d.filter(|_| in_m(nb[slot] as usize)).unwrap_or(0.0);
            keep(EAST, grads[k].d1).hypot(keep(NORTH, grads[k].d2)) / (n * n)
        })
        .sum();
    let ratio = if lhs == 0.0 { 0.0 } else { lhs / rhs };
    Ok(CoareaRecord { lhs, rhs, ratio })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{Ends, LatticeDomain, Shape};
    use rand::{Rng, SeedableRng};
    use std::sync::Arc;

    fn square(n: u32) -> Arc<LatticeDomain> {
        Arc::new(LatticeDomain::new(Shape::new(2.0, 1.0, crate::energy::Sign::Plus).with_ends(Ends::Free), n).unwrap())
    }

    /// `Σ_edges |Δf| / n`, the layer-cake identity for the lattice perimeter.
    fn edge_total_variation(f: &ScalarLatticeField) -> f64 {
        let dom = &f.domain;
        let mut tv = 0.0;
        for k in 0..f.values.len() {
            for slot in [EAST, NORTH] {
                let q = dom.neighbors()[k][slot];
                if dom.is_real(q) {
                    tv += (f.values[k] - f.values[q as usize]).abs();
                }
            }
        }
        tv / dom.nf()
    }

    #[test]
    fn zero_field() {
        let f = ScalarLatticeField::from_fn(square(8), |_, _| 0.0);
        let r = coarea_check(&f, None).unwrap();
        assert_eq!((r.lhs, r.rhs), (0.0, 0.0));
    }

    #[test]
    fn block_indicator() {
        let (n, k) = (16u32, 4i32);
        let f = ScalarLatticeField::from_fn(square(n), |i, j| if (0..k).contains(&i) && (0..k).contains(&j) { 1.0 } else { 0.0 });
        let r = coarea_check(&f, None).unwrap();
        assert!((r.lhs - 4.0 * k as f64 / n as f64).abs() < 1e-14);
        // rhs: the west and south neighbors of the block see one unit jump each (2k cells),
        // the top-right boundary cells see one jump, except the corner cell sees two
        let want = ((2 * k + 2 * (k - 1)) as f64 + 2f64.sqrt()) / n as f64;
        assert!((r.rhs - want).abs() < 1e-14, "{} vs {want}", r.rhs);
        assert!(r.ratio <= 2.0);
    }

    #[test]
    fn lhs_is_edge_variation_and_bounded_by_sqrt2() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let f = ScalarLatticeField::from_fn(square(6), |_, _| rng.random_range(0.0..1.0f64).powi(3));
            let r = coarea_check(&f, None).unwrap();
            assert!((r.lhs - edge_total_variation(&f)).abs() < 1e-12 * (1.0 + r.lhs));
            assert!(r.lhs <= 2f64.sqrt() * r.rhs + 1e-12);
        }
    }

    #[test]
    fn scaling_doubles_both_sides() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let f = ScalarLatticeField::from_fn(square(6), |_, _| rng.random_range(0.0..2.0));
        let g = ScalarLatticeField::new(f.domain.clone(), f.values.iter().map(|v| 2.0 * v).collect());
        let (a, b) = (coarea_check(&f, None).unwrap(), coarea_check(&g, None).unwrap());
        assert!((b.lhs - 2.0 * a.lhs).abs() < 1e-12 * b.lhs);
        assert!((b.rhs - 2.0 * a.rhs).abs() < 1e-12 * b.rhs);
    }

    #[test]
    fn negative_values_rejected() {
        let f = ScalarLatticeField::from_fn(square(4), |i, _| i as f64);
        assert!(coarea_check(&f, None).is_err());
    }
}
