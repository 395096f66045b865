//! Resource accounting for growing W states: how many seed qubits and
//! heralding clicks one large register costs.
//!
//! The growth schedule doubles through sizes N_k = 2^(k+1) + 2, since each
//! conversion maps two size-M registers to one of size 2(M−1). Chaining the
//! per-step success probabilities gives the sequence probability
//!
//! ```text
//! p_N = (η⁴/2) · ∏_{k=1..K} η² (2^k + 1)/(2^k + 2)²        (paper mode)
//! ```
//!
//! with every product term doubled in exact mode, and K = log₂(N−2) − 1
//! conversions in total. The expected number of seed qubits consumed per
//! delivered register is R_N = 4·2^K / p_N, which also falls out of the
//! recursion E(4) = 4/p_seed, E(2(M−1)) = 2·E(M)/p_conv(M); both routes are
//! implemented and must agree. The alternative of entangling N nodes in one
//! shot through the interference network succeeds with probability
//! N η^N/2^(N−1), so its overhead 2^(N−1)/η^N is exponential where breeding
//! is quasi-polynomial, log₂R_N = O((log₂N)²).
//!
//! All 2^k factors are built in exact integer arithmetic; the schedule
//! refuses depths beyond k = 30 rather than overflow quietly.

use thiserror::Error;

use crate::breeding::ProbabilityMode;

/// Deepest supported schedule index.
pub const MAX_SCHEDULE_K: usize = 30;

#[derive(Debug, Error)]
pub enum ResourceError {
    #[error("schedule depth {k} exceeds the supported maximum {max}")]
    ScheduleTooDeep { k: usize, max: usize },
    #[error("{n} is not a schedule size 2^(k+1)+2; nearest valid sizes: {nearest}")]
    NotInSchedule { n: u64, nearest: String },
    #[error("concatenated entangling needs a power-of-two register, got {n}")]
    NotPowerOfTwo { n: u64 },
    #[error("register size {n} too large for overhead arithmetic (max {max})")]
    RegisterTooLarge { n: u64, max: u64 },
    #[error("efficiency {eta} outside (0, 1]")]
    BadEfficiency { eta: f64 },
    #[error("{what} must not be empty")]
    EmptyInput { what: &'static str },
}

pub type Result<T, E = ResourceError> = std::result::Result<T, E>;

/// Register sizes reachable by breeding, N_k = 2^(k+1) + 2 for k = 0..=k_max.
pub fn breeding_schedule(k_max: usize) -> Result<Vec<u64>> {
    if k_max > MAX_SCHEDULE_K {
        return Err(ResourceError::ScheduleTooDeep { k: k_max, max: MAX_SCHEDULE_K });
    }
    Ok((0..=k_max).map(|k| (1u64 << (k + 1)) + 2).collect())
}

/// Invert the schedule: the k with N = 2^(k+1) + 2.
pub fn schedule_k_of(n: u64) -> Result<usize> {
    if n >= 4 && (n - 2).is_power_of_two() {
        let k = (n - 2).trailing_zeros() as usize - 1;
        if k > MAX_SCHEDULE_K {
            return Err(ResourceError::ScheduleTooDeep { k, max: MAX_SCHEDULE_K });
        }
        return Ok(k);
    }
    // Bracket n between the two nearest schedule sizes for the message.
    let below = (1..=MAX_SCHEDULE_K + 1)
        .map(|j| (1u64 << j) + 2)
        .take_while(|&s| s <= n)
        .last();
    let above = (1..=MAX_SCHEDULE_K + 1)
        .map(|j| (1u64 << j) + 2)
        .find(|&s| s >= n)
        .unwrap_or((1u64 << (MAX_SCHEDULE_K + 1)) + 2);
    let nearest = match below {
        Some(b) if b != above => format!("{b} and {above}"),
        _ => format!("{above}"),
    };
    Err(ResourceError::NotInSchedule { n, nearest })
}

fn check_eta(eta: f64) -> Result<f64> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(ResourceError::BadEfficiency { eta });
    }
    Ok(eta)
}

/// Probability that one full breeding sequence up to size N succeeds: the
/// four-click seed times one doubly clicked conversion per schedule step.
pub fn p_breed(n: u64, eta: f64, mode: ProbabilityMode) -> Result<f64> {
    let k = schedule_k_of(n)?;
    check_eta(eta)?;
    let mut p = 0.5 * eta.powi(4);
    let step_scale = match mode {
        ProbabilityMode::Paper => 1.0,
        ProbabilityMode::Exact => 2.0,
    };
    for j in 1..=k {
        let two_j = 1u64 << j;
        let denom = (two_j + 2) as f64;
        p *= step_scale * eta * eta * (two_j + 1) as f64 / (denom * denom);
    }
    Ok(p)
}

/// Expected seed qubits per delivered |W_N⟩ by breeding, R_N = 4·2^K / p_N.
pub fn overhead_breeding(n: u64, eta: f64, mode: ProbabilityMode) -> Result<f64> {
    let k = schedule_k_of(n)?;
    Ok(4.0 * (1u64 << k) as f64 / p_breed(n, eta, mode)?)
}

/// The same overhead from the step-by-step recursion E(4) = 4/p_seed,
/// E(2(M−1)) = 2·E(M)/p_conv(M), with per-step probabilities taken from the
/// conversion model rather than the closed-form product.
pub fn overhead_recursion(n: u64, eta: f64, mode: ProbabilityMode) -> Result<f64> {
    let k = schedule_k_of(n)?;
    check_eta(eta)?;
    let mut expected = 4.0 / (0.5 * eta.powi(4));
    for m in breeding_schedule(k)?.iter().take(k) {
        let step = crate::breeding::breed_step_distribution(*m as usize, mode)
            .expect("schedule sizes are at least 4");
        expected = 2.0 * expected / (eta * eta * step.converted);
    }
    Ok(expected)
}

/// Largest register accepted by the concatenated-entangling formulas.
pub const MAX_CONCAT_N: u64 = 1024;

/// Success probability of entangling all N nodes in one shot: N surviving
/// single-excitation patterns out of 2^(N−1), every photon detected.
pub fn p_concat(n: u64, eta: f64) -> Result<f64> {
    check_concat_n(n)?;
    check_eta(eta)?;
    Ok(n as f64 * (eta.log2() * n as f64 - (n - 1) as f64).exp2())
}

/// Expected qubits per delivered register for concatenated entangling,
/// 2^(N−1)/η^N.
pub fn overhead_concat(n: u64, eta: f64) -> Result<f64> {
    check_concat_n(n)?;
    check_eta(eta)?;
    let log2_r = (n - 1) as f64 - n as f64 * eta.log2();
    if log2_r >= 1024.0 {
        return Err(ResourceError::RegisterTooLarge { n, max: MAX_CONCAT_N });
    }
    Ok(log2_r.exp2())
}

fn check_concat_n(n: u64) -> Result<()> {
    if !n.is_power_of_two() || n < 2 {
        return Err(ResourceError::NotPowerOfTwo { n });
    }
    if n > MAX_CONCAT_N {
        return Err(ResourceError::RegisterTooLarge { n, max: MAX_CONCAT_N });
    }
    Ok(())
}

/// Detection events on the success path of one breeding sequence: four for
/// the seed plus two per conversion.
pub fn total_clicks(n: u64) -> Result<u64> {
    Ok(4 + 2 * schedule_k_of(n)? as u64)
}

/// One byproduct line: a smaller W register recoverable from failed
/// conversions while breeding toward size N.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ByproductRow {
    pub m: u64,
    pub size: u64,
    pub probability: f64,
    pub resources: f64,
}

/// Byproduct registers |W_(N−2M)⟩ for 1 ≤ M ≤ N/2 − 1, with the yield
/// (N−2M)·p_N/N and expected cost 4·2^K·(N/(N−2M))/p_N of each.
pub fn byproduct_table(n: u64, eta: f64, mode: ProbabilityMode) -> Result<Vec<ByproductRow>> {
    let k = schedule_k_of(n)?;
    let p = p_breed(n, eta, mode)?;
    let base = 4.0 * (1u64 << k) as f64;
    Ok((1..=n / 2 - 1)
        .map(|m| {
            let size = n - 2 * m;
            ByproductRow {
                m,
                size,
                probability: size as f64 * p / n as f64,
                resources: base * (n as f64 / size as f64) / p,
            }
        })
        .collect())
}

/// Generation scheme an overhead row refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Breeding,
    Concatenated,
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::Breeding => "breeding",
            Scheme::Concatenated => "concatenated",
        })
    }
}

/// One row of the overhead table.
///
/// `mode` is `None` for concatenated rows, whose probabilities do not depend
/// on the conversion model; those rows also carry k = 0 and N clicks (one
/// per photon).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverheadPoint {
    pub scheme: Scheme,
    pub n: u64,
    pub k: u64,
    pub eta: f64,
    pub mode: Option<ProbabilityMode>,
    pub p: f64,
    pub r: f64,
    pub clicks: u64,
}

/// Overhead rows for both schemes over the requested sizes, efficiencies and
/// conversion models.
///
/// Row order is fixed: scheme (breeding first), then efficiency descending,
/// then size ascending, then mode (paper before exact). Inputs are sorted
/// and deduplicated, so callers cannot change the order.
pub fn fig3_table(
    breeding_sizes: &[u64],
    concat_sizes: &[u64],
    etas: &[f64],
    modes: &[ProbabilityMode],
) -> Result<Vec<OverheadPoint>> {
    if breeding_sizes.is_empty() && concat_sizes.is_empty() {
        return Err(ResourceError::EmptyInput { what: "size lists" });
    }
    if etas.is_empty() {
        return Err(ResourceError::EmptyInput { what: "efficiency list" });
    }
    if modes.is_empty() && !breeding_sizes.is_empty() {
        return Err(ResourceError::EmptyInput { what: "mode list" });
    }
    let mut etas: Vec<f64> = etas.to_vec();
    for &eta in &etas {
        check_eta(eta)?;
    }
    etas.sort_by(|a, b| b.partial_cmp(a).expect("validated finite"));
    etas.dedup();
    let mut breeding: Vec<u64> = breeding_sizes.to_vec();
    breeding.sort_unstable();
    breeding.dedup();
    let mut concat: Vec<u64> = concat_sizes.to_vec();
    concat.sort_unstable();
    concat.dedup();
    let modes: Vec<ProbabilityMode> = [ProbabilityMode::Paper, ProbabilityMode::Exact]
        .into_iter()
        .filter(|m| modes.contains(m))
        .collect();

    let mut rows = Vec::new();
    for &eta in &etas {
        for &n in &breeding {
            for &mode in &modes {
                rows.push(OverheadPoint {
                    scheme: Scheme::Breeding,
                    n,
                    k: schedule_k_of(n)? as u64,
                    eta,
                    mode: Some(mode),
                    p: p_breed(n, eta, mode)?,
                    r: overhead_breeding(n, eta, mode)?,
                    clicks: total_clicks(n)?,
                });
            }
        }
    }
    for &eta in &etas {
        for &n in &concat {
            rows.push(OverheadPoint {
                scheme: Scheme::Concatenated,
                n,
                k: 0,
                eta,
                mode: None,
                p: p_concat(n, eta)?,
                r: overhead_concat(n, eta)?,
                clicks: n,
            });
        }
    }
    Ok(rows)
}
