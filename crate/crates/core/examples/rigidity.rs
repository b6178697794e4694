// Two-point rigidity diagnostic for a U0 state with a thin QU1 needle.

use twowell::energy::WellSystem;
use twowell::fixtures::{reference_needle, rigidity_configuration, rigidity_params, Fixture};
use twowell::analysis::rigidity_sample;

pub fn run_example() -> f64 {
    let w = WellSystem::new(2f64.sqrt()).unwrap();
    let u = rigidity_configuration(32, &w, &reference_needle()).unwrap();
    let rec = rigidity_sample(&u, &w, &rigidity_params(2000, 5)).unwrap();
    let c = Fixture::bundled().thresholds.rigidity;
    let frac = rec.fraction_within(c);
    println!("μ = {:.3e}, η = {:.3e}, {} nodes in the hull", rec.mu, rec.eta, rec.nodes_in_hull);
    println!("{:.1}% of pairs within 1 ± cμ (c = {c:.3})", 100.0 * frac);
    frac
}

#[allow(dead_code)]
fn main() {
    run_example();
}
