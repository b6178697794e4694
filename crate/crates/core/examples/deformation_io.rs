// Writing and reading the text deformation format; the round trip is bit-exact.

use std::sync::Arc;

use twowell::energy::WellSystem;
use twowell::lattice::format::{read_deformation, write_deformation};
use twowell::lattice::LatticeDomain;
use twowell::linalg::Vec2;
use twowell::optimize::{initialize_with_boundary, InitMode};

pub fn run_example() -> usize {
    let w = WellSystem::new(2f64.sqrt()).unwrap();
    let dom = Arc::new(LatticeDomain::standard(4).unwrap());
    let mode = InitMode::Perturbed { base: Box::new(InitMode::Affine(w.f_lambda(0.5))), amplitude: 0.05, seed: 9 };
    let u = initialize_with_boundary(dom, &mode, &w, 0.5, Vec2::new(0.1, 0.0)).unwrap();
    let text = write_deformation(&u, &w);
    let (back, _) = read_deformation(&text).unwrap();
    assert_eq!(back.positions(), u.positions());
    println!("{}", text.lines().take(8).collect::<Vec<_>>().join("\n"));
    println!("... {} lines, round trip exact", text.lines().count());
    text.len()
}

#[allow(dead_code)]
fn main() {
    run_example();
}
