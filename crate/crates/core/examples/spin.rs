// Spin field of a three-band laminate and the comparison with the elastic energy.

use std::sync::Arc;

use twowell::energy::{Sign, WellSystem};
use twowell::lattice::LatticeDomain;
use twowell::optimize::{initialize, InitMode, Laminate};
use twowell::spin::{comparison_check, spin_field};

pub fn run_example() -> usize {
    let w = WellSystem::new(2f64.sqrt()).unwrap();
    let qu1 = w.q * w.u1;
    let lam = Laminate { sign: Sign::Plus, offsets: vec![-1.0, 1.0], phases: vec![w.u0, qu1, w.u0] };
    let u = initialize(Arc::new(LatticeDomain::standard(16).unwrap()), &InitMode::Laminate(lam), &w).unwrap();
    let sf = spin_field(&u, &w).unwrap();
    let plus = sf.sigma.iter().filter(|&&s| s == 1).count();
    println!("{plus} of {} nodes close to SO(2)U0, {} mismatch edges, H^s = {:.4}", sf.sigma.len(), sf.mismatch_edges.len(), sf.h_spin);
    let cmp = comparison_check(&u, &w).unwrap();
    println!(
        "H_n / H^s = {:.4}, smallest density at a -1 endpoint {:.4}, violations {}",
        cmp.ratio.unwrap_or(0.0),
        cmp.min_minus_density.unwrap_or(f64::NAN),
        cmp.violations.len()
    );
    assert!(cmp.passes());
    sf.mismatch_edges.len()
}

#[allow(dead_code)]
fn main() {
    run_example();
}
