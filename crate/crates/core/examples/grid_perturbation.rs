// The bad-set recursion x_m = θ/(1 - x_{m-1}) and the cell-level chain selection.

use twowell::gridperturb::{recursion_limit, recursion_sequence, simulate_chain_selection, Placement};

pub fn run_example() -> f64 {
    for theta in [0.1, 0.2, 0.25, 0.26] {
        let t = recursion_sequence(theta, 100_000).unwrap();
        println!(
            "θ = {theta}: {:?} after {} steps, last {:.6}, closed form {:?}",
            t.status,
            t.sequence.len() - 1,
            t.last(),
            recursion_limit(theta).unwrap()
        );
    }
    let chain = simulate_chain_selection(0.25, 40, 0, 1000, Placement::WorstCase, 1).unwrap();
    let last = chain.steps.last().unwrap();
    println!("worst-case chain: bad fraction {:.4} after {} intervals", last.bad_fraction, chain.steps.len());
    last.bad_fraction
}

#[allow(dead_code)]
fn main() {
    run_example();
}
