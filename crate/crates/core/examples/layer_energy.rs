// Internal layer energy C+(U0, QU1) on the unit strip, extrapolated in 1/n.

use twowell::energy::{Sign, WellSystem};
use twowell::layers::{estimate_layer_energy, LayerKind, LayerOptions};

pub fn run_example() -> f64 {
    let w = WellSystem::new(2f64.sqrt()).unwrap();
    let opts = LayerOptions { max_iters: 60, ..LayerOptions::default() };
    let est = estimate_layer_energy(LayerKind::CPlus, &w.u0, &(w.q * w.u1), Sign::Plus, 1.0, 1.0, &[4, 8], &w, &opts).unwrap();
    for r in &est.per_n {
        println!("n = {:2}: start {:.4}, minimum {:.4}", r.n, r.initial, r.rescaled.unwrap());
    }
    println!("extrapolated E∞ = {:.4} (fit residual {:.1e})", est.extrapolated, est.fit_residual);
    est.extrapolated
}

#[allow(dead_code)]
fn main() {
    run_example();
}
