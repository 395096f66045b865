//! Trajectory ensembles and their summary statistics.
//!
//! Trials are embarrassingly parallel; reproducibility across thread counts
//! comes from giving trial k its own counter-mode stream of the master seed
//! and folding the per-trial summaries in trial order afterwards. The same
//! seed therefore produces bit-identical statistics on any machine.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{PatternKey, ProtocolConfig, Result, TrajectoryEngine};

/// Corrected fidelity at or above 1 − this counts as "reached the target
/// exactly" when classifying accepted trajectories.
pub const FACTORABLE_TOLERANCE: f64 = 1e-9;

/// Aggregate outcome of a seeding ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedRunStats {
    pub trials: u64,
    pub accepted: u64,
    /// Trajectories cut off by a finite round window.
    pub leftover_rejected: u64,
    pub acceptance_rate: f64,
    /// Binomial standard error of the acceptance rate.
    pub acceptance_stderr: f64,
    /// Mean corrected fidelity over accepted trajectories.
    pub mean_fidelity: Option<f64>,
    pub min_fidelity: Option<f64>,
    /// Accepted trajectories whose sign mask came from the click record.
    pub mask_from_clicks: u64,
    /// Accepted trajectories reaching the target within
    /// [`FACTORABLE_TOLERANCE`] after their sign correction.
    pub factorable: u64,
    /// Accepted click patterns and how often each occurred.
    pub pattern_counts: BTreeMap<PatternKey, u64>,
    /// First-round click counts over all completed trajectories.
    pub round1_clicks: BTreeMap<usize, u64>,
}

impl SeedRunStats {
    /// Fraction of accepted trajectories that reached the target exactly.
    pub fn factorable_fraction(&self) -> Option<f64> {
        (self.accepted > 0).then(|| self.factorable as f64 / self.accepted as f64)
    }
}

#[derive(Debug, Clone)]
struct TrialSummary {
    accepted: bool,
    leftover: bool,
    round1_clicks: usize,
    pattern: Option<PatternKey>,
    fidelity: Option<f64>,
    mask_from_clicks: bool,
}

/// Run `trials` independent protocol attempts and summarize them.
///
/// Trial k draws from stream k of `seed`; the result is independent of the
/// number of worker threads.
pub fn estimate_success(config: &ProtocolConfig, trials: u64, seed: u64) -> Result<SeedRunStats> {
    // Validate the configuration (and the derived network) up front so the
    // per-worker engine constructors below cannot fail.
    TrajectoryEngine::new(config)?;

    let summaries: Vec<Result<TrialSummary>> = (0..trials)
        .into_par_iter()
        .map_init(
            || TrajectoryEngine::new(config).expect("config validated above"),
            |engine, k| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(k);
                let r = engine.run(&mut rng)?;
                Ok(TrialSummary {
                    accepted: r.accepted,
                    leftover: r.leftover_rejected,
                    round1_clicks: r.clicks.round_count(1),
                    pattern: r.accepted.then(|| PatternKey::from_record(&r.clicks)),
                    fidelity: r.correction.as_ref().map(|c| c.fidelity),
                    mask_from_clicks: r
                        .correction
                        .as_ref()
                        .map(|c| c.mask_from_clicks)
                        .unwrap_or(false),
                })
            },
        )
        .collect();

    let mut stats = SeedRunStats {
        trials,
        accepted: 0,
        leftover_rejected: 0,
        acceptance_rate: 0.0,
        acceptance_stderr: 0.0,
        mean_fidelity: None,
        min_fidelity: None,
        mask_from_clicks: 0,
        factorable: 0,
        pattern_counts: BTreeMap::new(),
        round1_clicks: BTreeMap::new(),
    };
    let mut fidelity_sum = 0.0;
    for summary in summaries {
        let s = summary?;
        if s.leftover {
            stats.leftover_rejected += 1;
            continue;
        }
        *stats.round1_clicks.entry(s.round1_clicks).or_insert(0) += 1;
        if s.accepted {
            stats.accepted += 1;
            if let Some(key) = s.pattern {
                *stats.pattern_counts.entry(key).or_insert(0) += 1;
            }
            if let Some(f) = s.fidelity {
                fidelity_sum += f;
                stats.min_fidelity =
                    Some(stats.min_fidelity.map_or(f, |m: f64| m.min(f)));
                if f >= 1.0 - FACTORABLE_TOLERANCE {
                    stats.factorable += 1;
                }
            }
            if s.mask_from_clicks {
                stats.mask_from_clicks += 1;
            }
        }
    }
    if trials > 0 {
        let p = stats.accepted as f64 / trials as f64;
        stats.acceptance_rate = p;
        stats.acceptance_stderr = (p * (1.0 - p) / trials as f64).sqrt();
    }
    if stats.accepted > 0 {
        stats.mean_fidelity = Some(fidelity_sum / stats.accepted as f64);
    }
    Ok(stats)
}
