// Relaxing a perturbed boundary-value problem at n = 8 with the smoothing continuation.

use std::sync::Arc;

use twowell::energy::{energy, Density, WellSystem};
use twowell::lattice::LatticeDomain;
use twowell::linalg::Vec2;
use twowell::optimize::{initialize_with_boundary, minimize_with_continuation, InitMode, MinimizeOptions, SMOOTHING_SCHEDULE};

pub fn run_example() -> (f64, f64) {
    let w = WellSystem::new(2f64.sqrt()).unwrap();
    let n = 8;
    let dom = Arc::new(LatticeDomain::standard(n).unwrap());
    let mode = InitMode::Perturbed { base: Box::new(InitMode::Affine(w.f_lambda(0.5))), amplitude: 0.2 / n as f64, seed: 1 };
    let u = initialize_with_boundary(dom, &mode, &w, 0.5, Vec2::zeros()).unwrap();
    let start = energy(&u, &w, &Density::Truncated).unwrap();
    let opts = MinimizeOptions::for_resolution(n).with_max_iters(150);
    let c = minimize_with_continuation(&u, &w, &Density::Truncated, &opts, &SMOOTHING_SCHEDULE).unwrap();
    let end = *c.result.energy_trace.last().unwrap();
    println!("H_n: {start:.4} -> {end:.4} ({:?}, admissible: {})", c.result.termination, c.result.admissible);
    for s in &c.stages {
        println!("  ε = {:.0e}: surrogate {:.4} after {} iterations", s.eps, s.surrogate, s.iterations);
    }
    (start, end)
}

#[allow(dead_code)]
fn main() {
    run_example();
}
