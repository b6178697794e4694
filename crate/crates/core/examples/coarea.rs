// Discrete coarea comparison for a radial bump.

use std::sync::Arc;

use twowell::analysis::{coarea_check, ScalarLatticeField};
use twowell::lattice::LatticeDomain;

pub fn run_example() -> f64 {
    let dom = Arc::new(LatticeDomain::standard(16).unwrap());
    let f = ScalarLatticeField::from_fn(dom.clone(), |i, j| {
        let (x, y) = (i as f64 / 16.0, j as f64 / 16.0);
        (1.0 - (x * x + y * y)).max(0.0)
    });
    let rec = coarea_check(&f, None).unwrap();
    println!("∫ Per(f ≥ t) dt = {:.4}, Σ n⁻²|∇f| = {:.4}, ratio {:.4}", rec.lhs, rec.rhs, rec.ratio);
    rec.ratio
}

#[allow(dead_code)]
fn main() {
    run_example();
}
