//! Monte Carlo of the full growth cascade: seeds are generated, converted
//! pairwise up the schedule, and optionally recycled, until one register of
//! the target size is delivered.
//!
//! Every trial runs the same pool loop. Deliver the target if present;
//! otherwise attempt the available conversion whose product is fewest steps
//! from the target; otherwise spend four fresh qubits on a seed attempt.
//! Seed attempts succeed with the four-node acceptance rate η⁴/2.
//! Conversion attempts succeed with η² times the mode's growth weight,
//! because only the two growth-heralding detections ride on photons; the
//! recycle branch is read directly off the ancillas and keeps its full
//! weight, and the remainder is lost.
//!
//! Under the greedy policy a recycled register re-enters the pool when it
//! can still grow, which means size 3 or larger; recycled pairs of size 2
//! cannot grow (2(s−1) = s) and are delivered as byproducts, as is whatever
//! the pool still holds when the target appears. Conversions that would
//! overshoot the target are never attempted, so oversized off-schedule
//! registers park in the pool as byproducts too. The no-recycling policy
//! sends every recycled register straight to the byproduct list.
//!
//! Click accounting follows the heralding convention: four detection events
//! per successful seed, two per conversion attempt. Each ledger checks
//! clicks = 4·seeds + 2·conversion attempts before it is aggregated.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{breed_step_distribution, BreedingError, ProbabilityMode, Result};
use crate::resources::schedule_k_of;

/// Hard per-trial step cap; hitting it reports an error instead of looping.
pub const DELIVERY_STEP_CAP: u64 = 100_000_000;

/// What to do with the two leftover registers of a recycle branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RecyclingPolicy {
    #[serde(rename = "no-recycling")]
    NoRecycling,
    #[serde(rename = "greedy-recycling")]
    GreedyRecycling,
}

impl std::fmt::Display for RecyclingPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RecyclingPolicy::NoRecycling => "no-recycling",
            RecyclingPolicy::GreedyRecycling => "greedy-recycling",
        })
    }
}

/// Parameters of one breeding-sequence ensemble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SequenceConfig {
    /// Delivered register size; must be a schedule size 2^(k+1)+2.
    pub target: u64,
    pub mode: ProbabilityMode,
    pub policy: RecyclingPolicy,
    /// Combined detection efficiency applied to seed and growth heralds.
    pub eta: f64,
}

impl SequenceConfig {
    fn validate(&self) -> Result<usize> {
        let k = schedule_k_of(self.target)?;
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(BreedingError::BadEfficiency { eta: self.eta });
        }
        Ok(k)
    }
}

/// Resource counts for one delivered target register.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ResourceLedger {
    pub seed_attempts: u64,
    /// Successful seed generations (each adds four clicks and one size-4
    /// register).
    pub seeds: u64,
    pub conversion_attempts: u64,
    pub conversions_succeeded: u64,
    /// Attempts that ended in the recycle branch.
    pub recycles: u64,
    /// Heralding detection events along the accounting convention.
    pub clicks: u64,
    /// Fresh qubits consumed: four per seed attempt.
    pub qubits: u64,
    /// Register sizes left beside the delivered target: non-reentering
    /// recycled registers plus whatever remained in the pool.
    pub byproducts: BTreeMap<u64, u64>,
}

impl ResourceLedger {
    pub fn click_accounting_holds(&self) -> bool {
        self.clicks == 4 * self.seeds + 2 * self.conversion_attempts
    }
}

/// Ensemble summary over independent deliveries.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceStats {
    pub target: u64,
    pub mode: ProbabilityMode,
    pub policy: RecyclingPolicy,
    pub eta: f64,
    pub trials: u64,
    pub mean_qubits: f64,
    pub stderr_qubits: f64,
    pub mean_clicks: f64,
    pub stderr_clicks: f64,
    pub mean_seed_attempts: f64,
    pub mean_seeds: f64,
    pub mean_conversion_attempts: f64,
    pub mean_conversions_succeeded: f64,
    pub mean_recycles: f64,
    /// Mean count of each byproduct size per delivery.
    pub byproduct_means: BTreeMap<u64, f64>,
}

/// Conversions separating `size` from the target, if `size` sits on the
/// doubling path; the produced sizes walk 4 → 6 → 10 → … → target.
fn conversions_to_target(size: u64, target: u64, target_k: usize) -> Option<u64> {
    if size == target {
        return Some(0);
    }
    if size < target && size >= 4 && (size - 2).is_power_of_two() {
        let k = (size - 2).trailing_zeros() as usize - 1;
        return Some((target_k - k) as u64);
    }
    None
}

/// The best pair size to convert next: closest product to the target, never
/// overshooting, off-path pairs only when nothing on the path is ready.
fn pick_pair(pool: &BTreeMap<u64, u64>, target: u64, target_k: usize) -> Option<u64> {
    let mut best: Option<(u64, u64)> = None;
    for (&size, &count) in pool {
        if count < 2 || size < 3 {
            continue;
        }
        let grown = 2 * (size - 1);
        if grown > target {
            continue;
        }
        let rank = conversions_to_target(grown, target, target_k).unwrap_or(u64::MAX);
        let better = match best {
            None => true,
            Some((best_rank, best_size)) => {
                rank < best_rank || (rank == best_rank && size > best_size)
            }
        };
        if better {
            best = Some((rank, size));
        }
    }
    best.map(|(_, size)| size)
}

fn take_from_pool(pool: &mut BTreeMap<u64, u64>, size: u64, count: u64) {
    let entry = pool.get_mut(&size).expect("pool entry exists");
    *entry -= count;
    if *entry == 0 {
        pool.remove(&size);
    }
}

fn run_one_delivery(
    config: &SequenceConfig,
    target_k: usize,
    p_seed: f64,
    rng: &mut ChaCha8Rng,
) -> Result<ResourceLedger> {
    let mut ledger = ResourceLedger::default();
    let mut pool: BTreeMap<u64, u64> = BTreeMap::new();
    for _ in 0..DELIVERY_STEP_CAP {
        if pool.get(&config.target).copied().unwrap_or(0) >= 1 {
            take_from_pool(&mut pool, config.target, 1);
            for (size, count) in pool {
                *ledger.byproducts.entry(size).or_insert(0) += count;
            }
            if !ledger.click_accounting_holds() {
                return Err(BreedingError::InvariantViolation(format!(
                    "click accounting broke: {} clicks vs {} seeds, {} attempts",
                    ledger.clicks, ledger.seeds, ledger.conversion_attempts
                )));
            }
            return Ok(ledger);
        }
        match pick_pair(&pool, config.target, target_k) {
            Some(size) => {
                take_from_pool(&mut pool, size, 2);
                ledger.conversion_attempts += 1;
                ledger.clicks += 2;
                let step = breed_step_distribution(size as usize, config.mode)?;
                let p_grow = config.eta * config.eta * step.converted;
                let u: f64 = rng.gen();
                if u < p_grow {
                    ledger.conversions_succeeded += 1;
                    *pool.entry(2 * (size - 1)).or_insert(0) += 1;
                } else if u < p_grow + step.recycled {
                    ledger.recycles += 1;
                    let leftover = size - 1;
                    let reenters =
                        config.policy == RecyclingPolicy::GreedyRecycling && leftover >= 3;
                    if reenters {
                        *pool.entry(leftover).or_insert(0) += 2;
                    } else {
                        *ledger.byproducts.entry(leftover).or_insert(0) += 2;
                    }
                }
            }
            None => {
                ledger.seed_attempts += 1;
                ledger.qubits += 4;
                if rng.gen::<f64>() < p_seed {
                    ledger.seeds += 1;
                    ledger.clicks += 4;
                    *pool.entry(4).or_insert(0) += 1;
                }
            }
        }
    }
    Err(BreedingError::DeliveryStalled { cap: DELIVERY_STEP_CAP })
}

fn mean_and_stderr(values: impl Iterator<Item = u64> + Clone, trials: u64) -> (f64, f64) {
    let t = trials as f64;
    let mean = values.clone().map(|v| v as f64).sum::<f64>() / t;
    if trials < 2 {
        return (mean, 0.0);
    }
    let ss = values.map(|v| (v as f64 - mean).powi(2)).sum::<f64>();
    (mean, (ss / (t - 1.0)).sqrt() / t.sqrt())
}

/// Run independent deliveries and summarize their ledgers.
///
/// Trial k draws from stream k of `seed`; results do not depend on the
/// worker-thread count.
pub fn breed_sequence_mc(
    config: &SequenceConfig,
    trials: u64,
    seed: u64,
) -> Result<SequenceStats> {
    let target_k = config.validate()?;
    if trials == 0 {
        return Err(BreedingError::NoTrials);
    }
    // Four-node seed acceptance rate; equals the seeding module's closed
    // form at (N, m) = (4, 1).
    let p_seed = 0.5 * config.eta.powi(4);

    let ledgers: Vec<Result<ResourceLedger>> = (0..trials)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k);
            run_one_delivery(config, target_k, p_seed, &mut rng)
        })
        .collect();

    let mut done = Vec::with_capacity(ledgers.len());
    for ledger in ledgers {
        done.push(ledger?);
    }

    let (mean_qubits, stderr_qubits) = mean_and_stderr(done.iter().map(|l| l.qubits), trials);
    let (mean_clicks, stderr_clicks) = mean_and_stderr(done.iter().map(|l| l.clicks), trials);
    let t = trials as f64;
    let mut byproduct_means: BTreeMap<u64, f64> = BTreeMap::new();
    for ledger in &done {
        for (&size, &count) in &ledger.byproducts {
            *byproduct_means.entry(size).or_insert(0.0) += count as f64;
        }
    }
    for value in byproduct_means.values_mut() {
        *value /= t;
    }

    Ok(SequenceStats {
        target: config.target,
        mode: config.mode,
        policy: config.policy,
        eta: config.eta,
        trials,
        mean_qubits,
        stderr_qubits,
        mean_clicks,
        stderr_clicks,
        mean_seed_attempts: done.iter().map(|l| l.seed_attempts as f64).sum::<f64>() / t,
        mean_seeds: done.iter().map(|l| l.seeds as f64).sum::<f64>() / t,
        mean_conversion_attempts: done
            .iter()
            .map(|l| l.conversion_attempts as f64)
            .sum::<f64>()
            / t,
        mean_conversions_succeeded: done
            .iter()
            .map(|l| l.conversions_succeeded as f64)
            .sum::<f64>()
            / t,
        mean_recycles: done.iter().map(|l| l.recycles as f64).sum::<f64>() / t,
        byproduct_means,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::resources::overhead_breeding;

    fn config(
        target: u64,
        mode: ProbabilityMode,
        policy: RecyclingPolicy,
        eta: f64,
    ) -> SequenceConfig {
        SequenceConfig { target, mode, policy, eta }
    }

    #[test]
    fn four_node_deliveries_cost_one_seed_each() {
        let cfg = config(4, ProbabilityMode::Paper, RecyclingPolicy::NoRecycling, 1.0);
        let stats = breed_sequence_mc(&cfg, 4000, 11).unwrap();
        assert!((stats.mean_qubits - 8.0).abs() < 3.0 * stats.stderr_qubits);
        // A delivered seed is exactly one success and four clicks.
        assert_eq!(stats.mean_seeds, 1.0);
        assert_eq!(stats.mean_clicks, 4.0);
        assert_eq!(stats.mean_conversion_attempts, 0.0);
        assert!(stats.byproduct_means.is_empty());
    }

    #[test]
    fn no_recycling_means_match_the_closed_form_overheads() {
        for (target, mode, eta, trials) in [
            (6, ProbabilityMode::Paper, 1.0, 4000),
            (6, ProbabilityMode::Exact, 1.0, 4000),
            (6, ProbabilityMode::Paper, 0.7, 2500),
            (10, ProbabilityMode::Paper, 1.0, 1500),
        ] {
            let cfg = config(target, mode, RecyclingPolicy::NoRecycling, eta);
            let stats = breed_sequence_mc(&cfg, trials, 5).unwrap();
            let expected = overhead_breeding(target, eta, mode).unwrap();
            let pull = (stats.mean_qubits - expected).abs() / stats.stderr_qubits;
            assert!(
                pull < 3.0,
                "target {target} mode {mode} eta {eta}: mean {} vs {expected} ({pull:.1} sigma)",
                stats.mean_qubits
            );
        }
    }

    #[test]
    fn click_means_respect_the_accounting_identity() {
        let cfg = config(6, ProbabilityMode::Paper, RecyclingPolicy::GreedyRecycling, 1.0);
        let stats = breed_sequence_mc(&cfg, 3000, 2).unwrap();
        let predicted = 4.0 * stats.mean_seeds + 2.0 * stats.mean_conversion_attempts;
        assert!((stats.mean_clicks - predicted).abs() < 1e-9);
    }

    #[test]
    fn greedy_recycling_saves_qubits_at_target_six() {
        let trials = 20_000;
        let plain = breed_sequence_mc(
            &config(6, ProbabilityMode::Paper, RecyclingPolicy::NoRecycling, 1.0),
            trials,
            3,
        )
        .unwrap();
        let greedy = breed_sequence_mc(
            &config(6, ProbabilityMode::Paper, RecyclingPolicy::GreedyRecycling, 1.0),
            trials,
            4,
        )
        .unwrap();
        let gap = plain.mean_qubits - greedy.mean_qubits;
        let sigma = (plain.stderr_qubits.powi(2) + greedy.stderr_qubits.powi(2)).sqrt();
        assert!(
            gap > 3.0 * sigma,
            "no gain: {} vs {} (gap {gap:.2}, sigma {sigma:.2})",
            plain.mean_qubits,
            greedy.mean_qubits
        );
    }

    #[test]
    fn byproduct_sizes_follow_the_policy() {
        let plain = breed_sequence_mc(
            &config(6, ProbabilityMode::Paper, RecyclingPolicy::NoRecycling, 1.0),
            2000,
            7,
        )
        .unwrap();
        // Without recycling the only leftovers are the discarded pairs of
        // threes.
        assert!(plain.byproduct_means.keys().all(|&s| s == 3));
        assert!(plain.byproduct_means[&3] > 0.5);

        let greedy = breed_sequence_mc(
            &config(6, ProbabilityMode::Paper, RecyclingPolicy::GreedyRecycling, 1.0),
            2000,
            7,
        )
        .unwrap();
        assert!(greedy.byproduct_means.keys().all(|&s| (2..=4).contains(&s)));
        // Failed conversions of recycled threes leave dead pairs of twos.
        assert!(greedy.byproduct_means.contains_key(&2));
    }

    #[test]
    fn same_seed_reproduces_the_ensemble() {
        let cfg = config(6, ProbabilityMode::Exact, RecyclingPolicy::GreedyRecycling, 0.9);
        let a = breed_sequence_mc(&cfg, 500, 42).unwrap();
        let b = breed_sequence_mc(&cfg, 500, 42).unwrap();
        assert_eq!(a, b);
        let c = breed_sequence_mc(&cfg, 500, 43).unwrap();
        assert!(a.mean_qubits != c.mean_qubits);
    }

    #[test]
    fn invalid_targets_and_efficiencies_are_refused() {
        let err = breed_sequence_mc(
            &config(8, ProbabilityMode::Paper, RecyclingPolicy::NoRecycling, 1.0),
            10,
            0,
        )
        .unwrap_err();
        assert!(err.to_string().contains("6 and 10"));
        assert!(matches!(
            breed_sequence_mc(
                &config(6, ProbabilityMode::Paper, RecyclingPolicy::NoRecycling, 0.0),
                10,
                0
            ),
            Err(BreedingError::BadEfficiency { .. })
        ));
        assert!(matches!(
            breed_sequence_mc(
                &config(6, ProbabilityMode::Paper, RecyclingPolicy::NoRecycling, 1.0),
                0,
                0
            ),
            Err(BreedingError::NoTrials)
        ));
    }

    #[test]
    fn greedy_pair_choice_prefers_the_shortest_route() {
        let mut pool = BTreeMap::new();
        pool.insert(3u64, 2u64);
        pool.insert(4, 2);
        // Both pairs available at target 6: fours produce the target now.
        assert_eq!(pick_pair(&pool, 6, 1), Some(4));
        pool.remove(&4);
        assert_eq!(pick_pair(&pool, 6, 1), Some(3));
        // A lone four cannot pair.
        pool.insert(4, 1);
        assert_eq!(pick_pair(&pool, 6, 1), Some(3));
        // Twos never convert, and pairs that would overshoot are skipped.
        let mut dead = BTreeMap::new();
        dead.insert(2u64, 10u64);
        assert_eq!(pick_pair(&dead, 6, 1), None);
        let mut over = BTreeMap::new();
        over.insert(4u64, 2u64);
        assert_eq!(pick_pair(&over, 4, 0), None);
    }
}
