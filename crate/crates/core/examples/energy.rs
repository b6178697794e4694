// Lattice Hamiltonian of affine states: zero on the wells, positive at the boundary data.

use std::sync::Arc;

use twowell::energy::{energy, energy_report, Density, WellSystem};
use twowell::lattice::{Deformation, LatticeDomain};
use twowell::linalg::Vec2;

pub fn run_example() -> (f64, f64) {
    let w = WellSystem::new(2f64.sqrt()).unwrap();
    let dom = Arc::new(LatticeDomain::standard(16).unwrap());
    let on_well = Deformation::affine(dom.clone(), w.q * w.u1, Vec2::new(0.5, -1.0));
    let data = Deformation::affine(dom, w.f_lambda(0.5), Vec2::zeros());
    let e_well = energy(&on_well, &w, &Density::Truncated).unwrap();
    let rep = energy_report(&data, &w, &Density::Truncated).unwrap();
    println!("H_n(QU1 x + b) = {e_well:.3e}");
    println!("H_n(F_1/2 x)   = {:.6}  (n H_n = {:.4})", rep.total, rep.rescaled);
    let worst = rep.site_density.iter().cloned().fold(0.0, f64::max);
    println!("largest site density {worst:.4}");
    (e_well, rep.total)
}

#[allow(dead_code)]
fn main() {
    run_example();
}
