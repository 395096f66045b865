//! Exact click-pattern statistics by direct enumeration.
//!
//! This module never touches the trajectory machinery. It computes heralding
//! probabilities and heralded states from first principles: the register
//! starts uniformly over excitation subsets, a round with k emitters routes
//! its photons through the network with amplitude `perm(A[P, S]) / √(N^k)`
//! for click multiset P and emitter subset S (times a shared time-envelope
//! that cancels in every ratio), and the two rounds tensor together over
//! complementary subsets. Everything reduces to integer permanents of ±1
//! submatrices, so the numbers here are exact and serve as ground truth for
//! the Monte Carlo histograms.

use std::collections::BTreeMap;

use num_complex::Complex64;

use super::{AcceptanceMode, DetectorNetwork, PatternKey, Result, SeedingError};
use crate::hilbert::{LevelLayout, StateVector};

/// All sorted detector multisets of the given size; `distinct` restricts to
/// strictly increasing ones.
pub fn detector_multisets(n: usize, size: usize, distinct: bool) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(size);
    fn rec(n: usize, size: usize, distinct: bool, start: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if current.len() == size {
            out.push(current.clone());
            return;
        }
        for d in start..n {
            current.push(d);
            let next = if distinct { d + 1 } else { d };
            rec(n, size, distinct, next, current, out);
            current.pop();
        }
    }
    rec(n, size, distinct, 0, &mut current, &mut out);
    out
}

fn multiplicity_factorial(pattern: &[usize]) -> f64 {
    let mut acc = 1.0;
    let mut run = 1u64;
    for w in pattern.windows(2) {
        if w[0] == w[1] {
            run += 1;
            acc *= run as f64;
        } else {
            run = 1;
        }
    }
    acc
}

/// Σ_S [perm(A[P₁, S]) · perm(A[P₂, S̄])]² over emitter subsets S of size
/// |P₁|, plus the per-subset signed weights themselves.
fn subset_weights(
    p1: &[usize],
    p2: &[usize],
    network: &DetectorNetwork,
) -> Result<Vec<(usize, i64)>> {
    let n = network.ports();
    if p1.len() + p2.len() != n {
        return Err(SeedingError::InvariantViolation(format!(
            "round patterns with {} + {} clicks cannot come from {} emitters",
            p1.len(),
            p2.len(),
            n
        )));
    }
    let k = p1.len();
    let mut weights = Vec::new();
    for mask in 0..(1usize << n) {
        if (mask as u32).count_ones() as usize != k {
            continue;
        }
        let s: Vec<usize> = (0..n).filter(|&j| mask & (1 << j) != 0).collect();
        let sbar: Vec<usize> = (0..n).filter(|&j| mask & (1 << j) == 0).collect();
        let w = network.submatrix_permanent(p1, &s)? * network.submatrix_permanent(p2, &sbar)?;
        weights.push((mask, w));
    }
    Ok(weights)
}

/// Joint probability of observing exactly the unordered click multisets
/// (P₁, P₂) in the two rounds, at unit efficiency.
pub fn pattern_probability(p1: &[usize], p2: &[usize], network: &DetectorNetwork) -> Result<f64> {
    let n = network.ports();
    let weights = subset_weights(p1, p2, network)?;
    let sum: f64 = weights.iter().map(|&(_, w)| (w as f64) * (w as f64)).sum();
    let norm = 2.0f64.powi(n as i32)
        * (n as f64).powi(n as i32)
        * multiplicity_factorial(p1)
        * multiplicity_factorial(p2);
    Ok(sum / norm)
}

/// The atomic state heralded by a click record (P₁, P₂) at unit efficiency:
/// round-one emitters end in |0⟩, round-two emitters in |1⟩, and each subset
/// carries its permanent-product amplitude. Real by construction.
pub fn heralded_state(p1: &[usize], p2: &[usize], network: &DetectorNetwork) -> Result<StateVector> {
    let n = network.ports();
    let weights = subset_weights(p1, p2, network)?;
    let layout = LevelLayout::uniform(n, 2);
    let mut state = StateVector::zero(layout);
    for (mask, w) in weights {
        if w == 0 {
            continue;
        }
        // Atom j reads |1⟩ iff j emitted in round two, i.e. j ∉ S. Site 0 is
        // the most significant position in the qubit index.
        let mut idx = 0usize;
        for site in 0..n {
            if mask & (1 << site) == 0 {
                idx |= 1 << (n - 1 - site);
            }
        }
        state.amplitudes_mut()[idx] = Complex64::new(w as f64, 0.0);
    }
    state.normalize().map_err(|_| SeedingError::CannotCorrect)?;
    Ok(state)
}

/// Distribution of the unordered click multiset of a single round, given that
/// exactly k atoms emit.
pub fn round_pattern_given_sector(n: usize, k: usize) -> Result<BTreeMap<Vec<usize>, f64>> {
    if n > 4 {
        return Err(SeedingError::OracleTooLarge { n, mode: "sector" });
    }
    let network = DetectorNetwork::for_nodes(n)?;
    let mut out = BTreeMap::new();
    let mut total = 0.0;
    let sector_count = {
        let mut c = 1f64;
        for i in 0..k {
            c = c * (n - i) as f64 / (i + 1) as f64;
        }
        c
    };
    for pattern in detector_multisets(n, k, false) {
        let mut sum = 0.0;
        for mask in 0..(1usize << n) {
            if (mask as u32).count_ones() as usize != k {
                continue;
            }
            let s: Vec<usize> = (0..n).filter(|&j| mask & (1 << j) != 0).collect();
            let perm = network.submatrix_permanent(&pattern, &s)?;
            sum += (perm as f64) * (perm as f64);
        }
        let prob = sum / (sector_count * (n as f64).powi(k as i32) * multiplicity_factorial(&pattern));
        total += prob;
        out.insert(pattern, prob);
    }
    debug_assert!((total - 1.0).abs() < 1e-9);
    Ok(out)
}

fn oracle_guard(n: usize, mode: AcceptanceMode) -> Result<()> {
    let limit = match mode {
        AcceptanceMode::Permissive => 4,
        AcceptanceMode::StrictDistinct => 8,
    };
    if n > limit {
        let label = match mode {
            AcceptanceMode::Permissive => "permissive",
            AcceptanceMode::StrictDistinct => "strict-distinct",
        };
        return Err(SeedingError::OracleTooLarge { n, mode: label });
    }
    Ok(())
}

/// Absolute probability of every accepted click pattern for split
/// (m, N−m) at unit efficiency. Values sum to the acceptance rate.
pub fn accepted_pattern_distribution(
    n: usize,
    target_m: usize,
    mode: AcceptanceMode,
) -> Result<BTreeMap<PatternKey, f64>> {
    oracle_guard(n, mode)?;
    if target_m == 0 || target_m >= n {
        return Err(SeedingError::BadTargetPattern { m: target_m, n });
    }
    let network = DetectorNetwork::for_nodes(n)?;
    let distinct = mode == AcceptanceMode::StrictDistinct;
    let mut sectors = vec![target_m];
    if n - target_m != target_m {
        sectors.push(n - target_m);
    }
    let mut out = BTreeMap::new();
    for k in sectors {
        for p1 in detector_multisets(n, k, distinct) {
            for p2 in detector_multisets(n, n - k, distinct) {
                let prob = pattern_probability(&p1, &p2, &network)?;
                if prob > 0.0 {
                    out.insert(PatternKey::new(&p1, &p2), prob);
                }
            }
        }
    }
    Ok(out)
}

/// Exact acceptance rate at unit efficiency; scale by η^N for lossy
/// detection (acceptance needs all N photons recorded).
pub fn acceptance_rate_exact(n: usize, target_m: usize, mode: AcceptanceMode) -> Result<f64> {
    Ok(accepted_pattern_distribution(n, target_m, mode)?.values().sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::seed_success_formula;

    #[test]
    fn round_multisets_enumerate_correctly() {
        assert_eq!(detector_multisets(4, 3, false).len(), 20);
        assert_eq!(detector_multisets(4, 3, true).len(), 4);
        assert_eq!(detector_multisets(8, 7, true).len(), 8);
        assert_eq!(detector_multisets(2, 0, false), vec![Vec::<usize>::new()]);
    }

    #[test]
    fn multiplicity_factorials() {
        assert_eq!(multiplicity_factorial(&[0, 1, 2]), 1.0);
        assert_eq!(multiplicity_factorial(&[0, 0, 0]), 6.0);
        assert_eq!(multiplicity_factorial(&[0, 0, 1, 1, 1]), 12.0);
    }

    #[test]
    fn joint_distribution_is_normalized() {
        for n in [2usize, 4] {
            let network = DetectorNetwork::for_nodes(n).unwrap();
            let mut total = 0.0;
            for k in 0..=n {
                for p1 in detector_multisets(n, k, false) {
                    for p2 in detector_multisets(n, n - k, false) {
                        total += pattern_probability(&p1, &p2, &network).unwrap();
                    }
                }
            }
            assert!((total - 1.0).abs() < 1e-12, "n={n} total={total}");
        }
    }

    #[test]
    fn three_emitter_sector_splits_by_pattern_shape() {
        let dist = round_pattern_given_sector(4, 3).unwrap();
        assert!((dist[&vec![0, 0, 0]] - 3.0 / 32.0).abs() < 1e-12);
        assert!((dist[&vec![0, 0, 1]] - 1.0 / 32.0).abs() < 1e-12);
        assert!((dist[&vec![0, 1, 2]] - 1.0 / 16.0).abs() < 1e-12);
    }

    #[test]
    fn acceptance_rates_match_the_closed_form() {
        for (n, m) in [(2usize, 1usize), (4, 1), (4, 2)] {
            let exact = acceptance_rate_exact(n, m, AcceptanceMode::Permissive).unwrap();
            let formula = seed_success_formula(n, m, 1.0).unwrap();
            assert!((exact - formula).abs() < 1e-12, "n={n} m={m}: {exact} vs {formula}");
        }
    }

    #[test]
    fn strict_acceptance_is_an_eighth_at_four_nodes() {
        let rate = acceptance_rate_exact(4, 1, AcceptanceMode::StrictDistinct).unwrap();
        assert!((rate - 0.125).abs() < 1e-12);
    }

    #[test]
    fn oracle_rejects_untractable_sizes() {
        assert!(matches!(
            accepted_pattern_distribution(8, 1, AcceptanceMode::Permissive),
            Err(SeedingError::OracleTooLarge { .. })
        ));
        assert!(acceptance_rate_exact(8, 1, AcceptanceMode::StrictDistinct).is_ok());
    }

    #[test]
    fn heralded_states_match_hand_calculations() {
        // {1}|{2} at N=2 heralds (−|01⟩ + |10⟩)/√2 up to a global sign.
        let network = DetectorNetwork::for_nodes(2).unwrap();
        let state = heralded_state(&[0], &[1], &network).unwrap();
        let a01 = state.amplitude(&[0, 1]).unwrap();
        let a10 = state.amplitude(&[1, 0]).unwrap();
        assert!((a01.re + a10.re).abs() < 1e-14, "opposite signs expected");
        assert!((a01.norm() - 0.5f64.sqrt()).abs() < 1e-14);

        // The all-distinct four-node record heralds the exact W state.
        let network4 = DetectorNetwork::for_nodes(4).unwrap();
        let w = heralded_state(&[0, 1, 2], &[3], &network4).unwrap();
        let target = crate::seeding::target_state(4, 1).unwrap();
        let f = crate::hilbert::fidelity(&w, &target).unwrap();
        assert!((f - 1.0).abs() < 1e-12);
    }
}
