// The two wells for a = √2: the rotation Q, the rank-one connection and c̄.

use twowell::energy::{Sign, WellSystem};
use twowell::linalg::smallest_singular_value;

pub fn run_example() -> WellSystem {
    let w = WellSystem::new(2f64.sqrt()).expect("a > 1");
    let jump = w.u0 - w.q * w.u1;
    println!("U0 = {:?}", w.u0);
    println!("Q  = {:?}", w.q);
    println!("c̄  = {:.6}", w.cbar);
    println!("σ_min(U0 - QU1) = {:.2e}", smallest_singular_value(&jump));
    println!("tangent defect   = {:.2e}", w.rank_one_defect(&w.u0, &(w.q * w.u1), Sign::Plus));
    assert!((w.q[(0, 0)] - 0.8).abs() < 1e-12 && (w.q[(1, 0)] - 0.6).abs() < 1e-12);
    w
}

#[allow(dead_code)]
fn main() {
    run_example();
}
