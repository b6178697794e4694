// Density and field inequalities over a small randomized suite, against the bundled fixture.

use twowell::fixtures::{inequality_checks, verification_seed, Fixture, DEFAULT_SEED};

pub fn run_example() -> usize {
    let fx = Fixture::bundled();
    let checks = inequality_checks(&fx, verification_seed(DEFAULT_SEED), 20).unwrap();
    for c in &checks {
        println!(
            "{:16} {} violations {:>6} of {:>6}, extreme {:.4e} vs {:?}",
            c.name,
            if c.passed { "pass" } else { "FAIL" },
            c.violations,
            c.evaluated,
            c.extreme,
            c.threshold
        );
    }
    checks.len()
}

#[allow(dead_code)]
fn main() {
    run_example();
}
