// An exact U0 | QU1 laminate: zero bulk energy, interface cost ~ 1/n, recovered normal.

use std::sync::Arc;

use twowell::analysis::interface_extract;
use twowell::energy::{energy, Density, Sign, WellSystem};
use twowell::lattice::LatticeDomain;
use twowell::optimize::{initialize, InitMode, Laminate};

pub fn run_example() -> Vec<(u32, f64)> {
    let w = WellSystem::new(2f64.sqrt()).unwrap();
    let lam = Laminate { sign: Sign::Plus, offsets: vec![0.0], phases: vec![w.u0, w.q * w.u1] };
    let mut rows = Vec::new();
    for n in [8, 16, 32] {
        let dom = Arc::new(LatticeDomain::standard(n).unwrap());
        let u = initialize(dom, &InitMode::Laminate(lam.clone()), &w).unwrap();
        let e = energy(&u, &w, &Density::Truncated).unwrap();
        let summary = interface_extract(&u, &w, 0.1 * w.cbar);
        println!(
            "n = {n:3}: n H_n = {:.5}, {} interface(s), max normal deviation {:.2}°",
            n as f64 * e,
            summary.segments.len(),
            summary.max_angle_deviation()
        );
        rows.push((n, n as f64 * e));
    }
    rows
}

#[allow(dead_code)]
fn main() {
    run_example();
}
