//! Pairwise conversion of W registers: two size-N registers merge into one
//! of size 2(N−1), at the price of a probabilistic ancilla measurement.
//!
//! Each |W_N⟩ singles out one qubit as an ancilla,
//!
//! ```text
//! |W_N⟩ = (1/√N) |1⟩ᵃ |0…0⟩  +  √((N−1)/N) |0⟩ᵃ |W_{N−1}⟩,
//! ```
//!
//! so a pair of them lives in a four-dimensional effective space indexed by
//! the two ancilla values, with the payload registers slaved to them. A CNOT
//! between the ancillas followed by a Z readout of the target ancilla splits
//! the pair into a growth branch and a fallback branch:
//!
//! * Z reads 1: an X readout of the control ancilla leaves the two payloads
//!   in (|W,0⟩ ± |0,W⟩)/√2. The − sign is removed by phase flips on every
//!   qubit of the first register, and either way the payload concatenation
//!   is exactly |W_{2(N−1)}⟩. Probability 2(N−1)/N².
//! * Z reads 0: a Z readout of the control ancilla either certifies both
//!   payloads as intact |W_{N−1}⟩ registers, probability (N−1)²/N², which
//!   can be recycled, or finds both excitations sitting in the ancillas,
//!   probability 1/N², in which case nothing usable remains.
//!
//! [`ProbabilityMode`] selects between these exact branch weights and the
//! published variant in which the optical projection realizing the ancilla
//! readout succeeds only half the time, moving (N−1)/N² of growth weight
//! into the loss column.
//!
//! The ancilla ket is written with the control ancilla first and the payload
//! slots in register order; a target slot reading 1 marks the first payload
//! as empty and a control slot reading 1 the second, which is why |10⟩ rides
//! with |W,0⟩ above. [`oracle`] rebuilds everything from a brute-force
//! statevector on all 2N qubits and must agree branch for branch, and
//! [`sequence`] runs the conversion cascade as a Monte Carlo with resource
//! ledgers.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hilbert::{HilbertError, LevelLayout, StateVector};

pub mod oracle;
pub mod sequence;

pub use oracle::{effective_oracle_delta, statevector_oracle, OracleBranch, OracleReport};
pub use sequence::{
    breed_sequence_mc, RecyclingPolicy, ResourceLedger, SequenceConfig, SequenceStats,
};

/// Tolerance for the unit-norm check on effective amplitudes.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-12;

/// Largest payload register (2(N−1) qubits) that may be expanded into a full
/// statevector certificate.
pub const MAX_CERTIFICATE_QUBITS: usize = 22;

#[derive(Debug, Error)]
pub enum BreedingError {
    #[error("register size {n} is too small to breed (need N >= 2)")]
    RegisterTooSmall { n: usize },
    #[error("effective amplitudes have squared norm {norm_sq}, not 1")]
    NotNormalized { norm_sq: f64 },
    #[error("record {record:?} is not a conversion branch")]
    NotAConversion { record: BreedRecord },
    #[error("branch {record:?} has zero probability for this pair")]
    BranchHasNoSupport { record: BreedRecord },
    #[error("certificate for 2(N-1) = {qubits} qubits exceeds the {max}-qubit cap")]
    CertificateTooLarge { qubits: usize, max: usize },
    #[error("statevector oracle supports 2 <= N <= {max}, got {n}")]
    OracleOutOfRange { n: usize, max: usize },
    #[error("efficiency {eta} outside (0, 1]")]
    BadEfficiency { eta: f64 },
    #[error("trials must be at least 1")]
    NoTrials,
    #[error("delivery loop exceeded {cap} steps; efficiency or probabilities too small")]
    DeliveryStalled { cap: u64 },
    #[error("numerical invariant violated: {0}")]
    InvariantViolation(String),
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
    #[error(transparent)]
    Schedule(#[from] crate::resources::ResourceError),
    #[error(transparent)]
    Target(#[from] crate::seeding::SeedingError),
}

pub type Result<T, E = BreedingError> = std::result::Result<T, E>;

/// Which branch weights to use for the conversion.
///
/// `Exact` follows the CNOT-and-measure algebra. `Paper` models the optical
/// realization of the ancilla projection, which succeeds with an extra
/// factor 1/2; the missing growth weight is heralded as loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProbabilityMode {
    #[serde(rename = "exact")]
    Exact,
    #[serde(rename = "paper")]
    Paper,
}

impl std::fmt::Display for ProbabilityMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ProbabilityMode::Exact => "exact",
            ProbabilityMode::Paper => "paper",
        })
    }
}

/// Classical record of the two ancilla readouts in one conversion attempt.
///
/// The target ancilla is always read first, in the Z basis. Reading 1 routes
/// the control ancilla to an X readout (the growth path); reading 0 routes
/// it to a Z readout (the recycle-or-lose path).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BreedRecord {
    /// Z read 1, X read +: the payloads already form the grown W state.
    GrowPlus,
    /// Z read 1, X read −: grown after a phase flip on every qubit of the
    /// first register.
    GrowMinus,
    /// Both Z readouts gave 0: the payloads are two intact smaller W states.
    Recycle,
    /// Z readouts (0, 1): the excitations sat in the ancillas; nothing left.
    Lose,
}

/// What one conversion attempt left behind.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BreedResult {
    /// One W register of the stated size.
    Converted { size: usize },
    /// Two W registers, each of the stated size.
    Recycled { size: usize },
    Lost,
}

/// One measurement branch of a conversion attempt.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BreedBranch {
    pub record: BreedRecord,
    pub probability: f64,
    pub result: BreedResult,
}

/// Probabilities of the three coarse outcomes of one attempt.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutcomeDistribution {
    pub converted: f64,
    pub recycled: f64,
    pub lost: f64,
}

impl OutcomeDistribution {
    pub fn as_tuple(self) -> (f64, f64, f64) {
        (self.converted, self.recycled, self.lost)
    }

    pub fn total(self) -> f64 {
        self.converted + self.recycled + self.lost
    }
}

/// Two W registers of size N in the four-dimensional effective basis
/// spanned by the ancilla pair.
///
/// Amplitude order: (c11, c10, c01, c00) over ancilla kets |11⟩, |10⟩,
/// |01⟩, |00⟩. The payload attached to each ket is fixed by the basis:
/// |11⟩ carries |0,0⟩, |10⟩ carries |W,0⟩, |01⟩ carries |0,W⟩ and |00⟩
/// carries |W,W⟩, where the slots are (first register, second register)
/// and W stands for |W_{N−1}⟩.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveWPair {
    n: usize,
    c11: f64,
    c10: f64,
    c01: f64,
    c00: f64,
}

impl EffectiveWPair {
    pub fn new(n: usize, amplitudes: [f64; 4]) -> Result<Self> {
        if n < 2 {
            return Err(BreedingError::RegisterTooSmall { n });
        }
        let [c11, c10, c01, c00] = amplitudes;
        let norm_sq = c11 * c11 + c10 * c10 + c01 * c01 + c00 * c00;
        if (norm_sq - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(BreedingError::NotNormalized { norm_sq });
        }
        Ok(EffectiveWPair { n, c11, c10, c01, c00 })
    }

    pub fn register_size(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> [f64; 4] {
        [self.c11, self.c10, self.c01, self.c00]
    }
}

/// The effective expansion of |W_N⟩ ⊗ |W_N⟩.
pub fn initial_pair(n: usize) -> Result<EffectiveWPair> {
    if n < 2 {
        return Err(BreedingError::RegisterTooSmall { n });
    }
    let nf = n as f64;
    let root = (nf - 1.0).sqrt();
    EffectiveWPair::new(n, [1.0 / nf, root / nf, root / nf, (nf - 1.0) / nf])
}

/// All four measurement branches of one conversion attempt on `pair`.
///
/// Branch order is [`BreedRecord::GrowPlus`], [`GrowMinus`](BreedRecord::GrowMinus),
/// [`Recycle`](BreedRecord::Recycle), [`Lose`](BreedRecord::Lose); the
/// probabilities sum to 1. The CNOT maps ancilla amplitudes
/// (c11, c10, c01, c00) to (c10, c11, c01, c00), after which the Z readout
/// of the target ancilla splits {|11⟩, |01⟩} from {|10⟩, |00⟩}.
pub fn breed_step_exact(pair: &EffectiveWPair) -> Result<Vec<BreedBranch>> {
    let n = pair.n;
    let grow = 0.5 * (pair.c10 * pair.c10 + pair.c01 * pair.c01);
    let branches = vec![
        BreedBranch {
            record: BreedRecord::GrowPlus,
            probability: grow,
            result: BreedResult::Converted { size: 2 * (n - 1) },
        },
        BreedBranch {
            record: BreedRecord::GrowMinus,
            probability: grow,
            result: BreedResult::Converted { size: 2 * (n - 1) },
        },
        BreedBranch {
            record: BreedRecord::Recycle,
            probability: pair.c00 * pair.c00,
            result: BreedResult::Recycled { size: n - 1 },
        },
        BreedBranch {
            record: BreedRecord::Lose,
            probability: pair.c11 * pair.c11,
            result: BreedResult::Lost,
        },
    ];
    Ok(branches)
}

/// Coarse outcome probabilities for converting two |W_N⟩ registers.
pub fn breed_step_distribution(n: usize, mode: ProbabilityMode) -> Result<OutcomeDistribution> {
    if n < 2 {
        return Err(BreedingError::RegisterTooSmall { n });
    }
    let nf = n as f64;
    let nsq = nf * nf;
    let recycled = (nf - 1.0) * (nf - 1.0) / nsq;
    Ok(match mode {
        ProbabilityMode::Exact => OutcomeDistribution {
            converted: 2.0 * (nf - 1.0) / nsq,
            recycled,
            lost: 1.0 / nsq,
        },
        ProbabilityMode::Paper => OutcomeDistribution {
            converted: (nf - 1.0) / nsq,
            recycled,
            lost: 1.0 / nf,
        },
    })
}

/// The payload state left by a successful conversion branch, expanded on all
/// 2(N−1) qubits with the first register's qubits in front.
///
/// For the symmetric initial pair this is exactly the uniform W state; for a
/// lopsided pair it is the corresponding two-term superposition. The X = −
/// branch includes the register-wide phase flip, so both conversion records
/// give the same state.
pub fn conversion_result_state(
    pair: &EffectiveWPair,
    record: BreedRecord,
) -> Result<StateVector> {
    match record {
        BreedRecord::GrowPlus | BreedRecord::GrowMinus => {}
        other => return Err(BreedingError::NotAConversion { record: other }),
    }
    let weight = pair.c10 * pair.c10 + pair.c01 * pair.c01;
    if weight <= 0.0 {
        return Err(BreedingError::BranchHasNoSupport { record });
    }
    let half = pair.n - 1;
    let qubits = 2 * half;
    if qubits > MAX_CERTIFICATE_QUBITS {
        return Err(BreedingError::CertificateTooLarge {
            qubits,
            max: MAX_CERTIFICATE_QUBITS,
        });
    }
    let scale = (weight * half as f64).sqrt().recip();
    let layout = LevelLayout::uniform(qubits, 2);
    let mut state = StateVector::zero(layout);
    // Qubit `site` maps to the bit of weight 2^(qubits-1-site), matching the
    // uniform-layout convention used by the seeding register extraction.
    for site in 0..half {
        let idx = 1usize << (qubits - 1 - site);
        state.amplitudes_mut()[idx] = (pair.c10 * scale).into();
    }
    for site in half..qubits {
        let idx = 1usize << (qubits - 1 - site);
        state.amplitudes_mut()[idx] = (pair.c01 * scale).into();
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::fidelity;
    use crate::seeding::target_state;

    #[test]
    fn initial_pairs_match_the_expansion_coefficients() {
        let pair = initial_pair(2).unwrap();
        assert_eq!(pair.amplitudes(), [0.5, 0.5, 0.5, 0.5]);

        let pair = initial_pair(4).unwrap();
        let root3 = 3.0f64.sqrt();
        let expected = [0.25, root3 / 4.0, root3 / 4.0, 0.75];
        for (got, want) in pair.amplitudes().iter().zip(expected) {
            assert!((got - want).abs() < 1e-15, "got {got}, want {want}");
        }

        let amps = initial_pair(100).unwrap().amplitudes();
        let norm_sq: f64 = amps.iter().map(|a| a * a).sum();
        assert!((norm_sq - 1.0).abs() < 1e-12);

        assert!(matches!(
            initial_pair(1),
            Err(BreedingError::RegisterTooSmall { n: 1 })
        ));
    }

    #[test]
    fn constructor_rejects_unnormalized_amplitudes() {
        assert!(EffectiveWPair::new(3, [0.5, 0.5, 0.5, 0.5]).is_ok());
        let err = EffectiveWPair::new(3, [0.5, 0.5, 0.5, 0.6]).unwrap_err();
        assert!(matches!(err, BreedingError::NotNormalized { .. }));
    }

    #[test]
    fn exact_branches_carry_the_closed_form_weights() {
        for n in 2..=10 {
            let branches = breed_step_exact(&initial_pair(n).unwrap()).unwrap();
            let nf = n as f64;
            let expected = [
                (nf - 1.0) / (nf * nf),
                (nf - 1.0) / (nf * nf),
                (nf - 1.0) * (nf - 1.0) / (nf * nf),
                1.0 / (nf * nf),
            ];
            let total: f64 = branches.iter().map(|b| b.probability).sum();
            assert!((total - 1.0).abs() < 1e-12);
            for (branch, want) in branches.iter().zip(expected) {
                assert!(
                    (branch.probability - want).abs() < 1e-15,
                    "n={n} {:?}: {} vs {want}",
                    branch.record,
                    branch.probability
                );
            }
            assert_eq!(
                branches[0].result,
                BreedResult::Converted { size: 2 * (n - 1) }
            );
            assert_eq!(branches[2].result, BreedResult::Recycled { size: n - 1 });
            assert_eq!(branches[3].result, BreedResult::Lost);
        }
    }

    #[test]
    fn four_register_distribution_matches_both_modes() {
        let exact = breed_step_distribution(4, ProbabilityMode::Exact).unwrap();
        assert_eq!(exact.as_tuple(), (0.375, 0.5625, 0.0625));
        let paper = breed_step_distribution(4, ProbabilityMode::Paper).unwrap();
        assert_eq!(paper.as_tuple(), (0.1875, 0.5625, 0.25));
    }

    #[test]
    fn distributions_normalize_even_for_huge_registers() {
        for mode in [ProbabilityMode::Exact, ProbabilityMode::Paper] {
            for n in [2usize, 3, 7, 100, 10_000, 1_000_000] {
                let d = breed_step_distribution(n, mode).unwrap();
                assert!(
                    (d.total() - 1.0).abs() < 1e-12,
                    "mode {mode} n {n}: total {}",
                    d.total()
                );
            }
        }
    }

    #[test]
    fn conversion_probability_shrinks_like_one_over_n() {
        for mode in [ProbabilityMode::Exact, ProbabilityMode::Paper] {
            let mut last = f64::INFINITY;
            for n in [10usize, 100, 1_000, 10_000] {
                let d = breed_step_distribution(n, mode).unwrap();
                assert!(d.converted < last);
                // n * p_converted approaches the mode's constant (2 or 1).
                let scaled = n as f64 * d.converted;
                let limit = match mode {
                    ProbabilityMode::Exact => 2.0,
                    ProbabilityMode::Paper => 1.0,
                };
                assert!((scaled - limit).abs() < 2.5 * limit / n as f64);
                last = d.converted;
            }
        }
    }

    #[test]
    fn converted_states_are_uniform_w_states() {
        for n in [2usize, 3, 4] {
            let pair = initial_pair(n).unwrap();
            for record in [BreedRecord::GrowPlus, BreedRecord::GrowMinus] {
                let state = conversion_result_state(&pair, record).unwrap();
                let target = target_state(2 * (n - 1), 1).unwrap();
                let f = fidelity(&state, &target).unwrap();
                assert!((f - 1.0).abs() < 1e-12, "n={n} {record:?}: fidelity {f}");
            }
        }
    }

    #[test]
    fn lopsided_pairs_keep_their_imbalance_after_conversion() {
        // c10 twice the weight of c01: the grown state leans toward the
        // first register by the same 2:1 amplitude ratio.
        let pair = EffectiveWPair::new(3, [0.0, 0.8, 0.4, 0.447213595499958]).unwrap();
        let state = conversion_result_state(&pair, BreedRecord::GrowPlus).unwrap();
        let amps = state.amplitudes();
        // Sites 0..1 are the first register, 2..3 the second (bit weight
        // 2^(3-site)).
        let first = amps[0b1000].re;
        let second = amps[0b0010].re;
        assert!((first / second - 2.0).abs() < 1e-12);
        assert!((state.norm_sq() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn non_conversion_records_are_rejected() {
        let pair = initial_pair(4).unwrap();
        assert!(matches!(
            conversion_result_state(&pair, BreedRecord::Recycle),
            Err(BreedingError::NotAConversion { .. })
        ));
        let dead = EffectiveWPair::new(4, [0.6, 0.0, 0.0, 0.8]).unwrap();
        assert!(matches!(
            conversion_result_state(&dead, BreedRecord::GrowPlus),
            Err(BreedingError::BranchHasNoSupport { .. })
        ));
    }
}
