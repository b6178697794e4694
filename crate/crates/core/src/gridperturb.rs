//! Feasibility of the rigid-point selection along a chain of intervals: the worst-case
//! bad-set recursion `x_m = θ / (1 - x_{m-1})`, its limit, and a cell-level simulation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RecursionStatus {
    Converged,
    /// Some `x_m ≥ 1`: the bad set swallowed the interval.
    Diverged,
    MaxSteps,
}

#[derive(Clone, Debug, Serialize)]
pub struct RecursionTrace {
    pub theta: f64,
    /// `x_0 = θ, x_1, …`
    pub sequence: Vec<f64>,
    pub status: RecursionStatus,
    pub limit: Option<f64>,
}

impl RecursionTrace {
    pub fn last(&self) -> f64 {
        *self.sequence.last().expect("sequence starts with theta")
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if !(0.0..1.0).contains(&theta) {
        return Err(Error::Config(format!("theta must lie in [0, 1), got {theta}")));
    }
    Ok(())
}

/// Iterates from `x_0 = θ` until consecutive terms differ by at most `1e-12`, some term
/// reaches 1, or `m_max` steps have been taken.
pub fn recursion_sequence(theta: f64, m_max: usize) -> Result<RecursionTrace> {
    check_theta(theta)?;
    if m_max == 0 {
        return Err(Error::Config("m_max must be at least 1".into()));
    }
    let mut seq = vec![theta];
    let mut status = RecursionStatus::MaxSteps;
    let mut x = theta;
    for _ in 0..m_max {
        let next = theta / (1.0 - x);
        seq.push(next);
        if next >= 1.0 || !next.is_finite() || next < 0.0 {
            status = RecursionStatus::Diverged;
            break;
        }
        if (next - x).abs() <= 1e-12 {
            status = RecursionStatus::Converged;
            x = next;
            break;
        }
        x = next;
    }
    let limit = (status == RecursionStatus::Converged).then_some(x);
    Ok(RecursionTrace { theta, sequence: seq, status, limit })
}

/// `(1 - √(1 - 4θ)) / 2` for `θ ≤ 1/4`, `None` (divergence) above.
pub fn recursion_limit(theta: f64) -> Result<Option<f64>> {
    check_theta(theta)?;
    if theta > 0.25 {
        return Ok(None);
    }
    Ok(Some(0.5 * (1.0 - (1.0 - 4.0 * theta).sqrt())))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    /// Non-rigid pairs stacked on the still-feasible points, maximizing deletions.
    WorstCase,
    /// Non-rigid pairs at uniformly random cells.
    Uniform,
}

#[derive(Clone, Debug, Serialize)]
pub struct ChainStep {
    pub step: usize,
    pub feasible_fraction: f64,
    pub bad_fraction: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ChainTrace {
    pub theta: f64,
    /// `θ` after division by the neighbor count.
    pub effective_theta: f64,
    pub placement: Placement,
    pub resolution: usize,
    pub seed: u64,
    pub steps: Vec<ChainStep>,
    /// `1 - x̄(θ_eff) - 2/resolution`, the guaranteed floor in the worst case.
    pub bound: Option<f64>,
    pub min_feasible: f64,
}

/// Runs the selection on a chain of `chain_length` intervals of `resolution` cells.
///
/// For each neighboring pair a set of `⌊θ R²⌉` non-rigid cell pairs is placed; a cell of
/// the next interval stays feasible when it forms a rigid pair with at least one
/// feasible cell of the current interval. With several neighbors per vertex the
/// per-pair fraction is `θ / neighbors`.
///
/// A feasible fraction of zero in the worst case for `θ_eff ≤ 1/4`, or below the
/// analytic floor, is reported as a falsification.
pub fn simulate_chain_selection(
    theta: f64,
    chain_length: usize,
    seed: u64,
    resolution: usize,
    placement: Placement,
    neighbors: usize,
) -> Result<ChainTrace> {
    if !(0.0..=0.25).contains(&theta) {
        return Err(Error::Config(format!("theta must lie in [0, 1/4], got {theta}")));
    }
    if resolution < 1000 {
        return Err(Error::Config(format!("resolution must be at least 1000 cells, got {resolution}")));
    }
    if neighbors == 0 || chain_length == 0 {
        return Err(Error::Config("chain_length and neighbors must be positive".into()));
    }
    let eff = theta / neighbors as f64;
    let r = resolution;
    let nonrigid = (eff * (r * r) as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // feasibility of the cells of the current interval
    let mut feasible = vec![true; r];
    let mut steps = Vec::with_capacity(chain_length);
    for step in 0..chain_length {
        let good: Vec<usize> = (0..r).filter(|&i| feasible[i]).collect();
        let g = good.len();
        let mut next = vec![true; r];
        match placement {
            Placement::WorstCase => {
                // whole columns of non-rigid pairs over the feasible cells
                let j = if g == 0 { r } else { (nonrigid / g).min(r) };
                next[..j].iter_mut().for_each(|c| *c = false);
            }
            Placement::Uniform => {
                let mut hit = vec![0usize; r];
                let mut taken = vec![false; r * r];
                let mut placed = 0;
                while placed < nonrigid {
                    let x = rng.random_range(0..r);
                    let y = rng.random_range(0..r);
                    if taken[x * r + y] {
                        continue;
                    }
                    taken[x * r + y] = true;
                    placed += 1;
                    if feasible[x] {
                        hit[y] += 1;
                    }
                }
                for y in 0..r {
                    next[y] = hit[y] < g;
                }
            }
        }
        let ok = next.iter().filter(|&&c| c).count();
        let frac = ok as f64 / r as f64;
        steps.push(ChainStep { step, feasible_fraction: frac, bad_fraction: 1.0 - frac });
        feasible = next;
    }
    let bound = recursion_limit(eff)?.map(|x| 1.0 - x - 2.0 / r as f64);
    let min_feasible = steps.iter().map(|s| s.feasible_fraction).fold(1.0, f64::min);
    if let Some(b) = bound {
        if min_feasible <= 0.0 || min_feasible < b {
            return Err(Error::Falsification(format!(
                "feasible fraction {min_feasible} fell below the floor {b} (θ = {theta}, {placement:?})"
            )));
        }
    }
    Ok(ChainTrace { theta, effective_theta: eff, placement, resolution, seed, steps, bound, min_feasible })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_theta_is_constant() {
        let t = recursion_sequence(0.0, 10).unwrap();
        assert_eq!(t.status, RecursionStatus::Converged);
        assert!(t.sequence.iter().all(|&x| x == 0.0));
        assert_eq!(recursion_limit(0.0).unwrap(), Some(0.0));
    }

    #[test]
    fn figure_values() {
        assert_eq!(recursion_limit(0.25).unwrap(), Some(0.5));
        let t = recursion_sequence(0.1, 1000).unwrap();
        assert_eq!(t.status, RecursionStatus::Converged);
        assert!((t.limit.unwrap() - 0.112702).abs() < 1e-5);
        let t = recursion_sequence(0.25, 10_000_000).unwrap();
        assert!((t.last() - 0.5).abs() < 1e-6, "{}", t.last());
    }

    #[test]
    fn above_a_quarter_diverges() {
        let t = recursion_sequence(0.26, 100_000).unwrap();
        assert_eq!(t.status, RecursionStatus::Diverged);
        assert_eq!(recursion_limit(0.26).unwrap(), None);
    }

    #[test]
    fn closed_form_matches_iteration() {
        let theta = 0.2;
        let want = (1.0 - 0.2f64.sqrt()) / 2.0;
        assert!((recursion_limit(theta).unwrap().unwrap() - want).abs() < 1e-15);
        let t = recursion_sequence(theta, 100_000).unwrap();
        assert!((t.limit.unwrap() - want).abs() < 1e-10);
    }

    #[test]
    fn worst_case_chain_tracks_the_recursion() {
        let t = simulate_chain_selection(0.25, 50, 0, 1000, Placement::WorstCase, 1).unwrap();
        let last = t.steps.last().unwrap().feasible_fraction;
        // x_m approaches 1/2 like 1/m, so after 50 steps the bad set is still a bit below it
        assert!(last >= 0.5 - 2e-3 && last < 0.6, "{last}");
        let rec = recursion_sequence(0.25, 49).unwrap();
        for (s, x) in t.steps.iter().zip(&rec.sequence) {
            assert!(s.bad_fraction <= x + 1e-12);
            assert!(s.bad_fraction >= x - 2e-2);
        }
    }

    #[test]
    fn zero_theta_keeps_everything() {
        for p in [Placement::WorstCase, Placement::Uniform] {
            let t = simulate_chain_selection(0.0, 5, 1, 1000, p, 1).unwrap();
            assert!(t.steps.iter().all(|s| s.feasible_fraction == 1.0));
        }
    }

    #[test]
    fn uniform_chain_stays_above_the_limit() {
        for seed in 0..5 {
            let t = simulate_chain_selection(0.1, 10, seed, 1000, Placement::Uniform, 1).unwrap();
            assert!(t.min_feasible >= 1.0 - 0.112702 - 2e-3);
        }
    }

    #[test]
    fn neighbors_shrink_theta() {
        let t = simulate_chain_selection(0.2, 20, 0, 1000, Placement::WorstCase, 4).unwrap();
        assert_eq!(t.effective_theta, 0.05);
        assert!(t.min_feasible >= 1.0 - recursion_limit(0.05).unwrap().unwrap() - 2e-3);
    }

    proptest! {
        #[test]
        fn limit_is_a_fixed_point(theta in 0.0f64..=0.25) {
            let x = recursion_limit(theta).unwrap().unwrap();
            prop_assert!((x - theta / (1.0 - x)).abs() < 1e-12);
        }

        #[test]
        fn sequence_is_nondecreasing(theta in 0.0f64..0.25) {
            let t = recursion_sequence(theta, 2000).unwrap();
            prop_assert!(t.sequence.windows(2).all(|p| p[1] >= p[0]));
            prop_assert!(t.sequence.iter().all(|&x| x <= 0.5));
        }
    }
}
