//! Brute-force check of the conversion algebra on the full 2N-qubit space.
//!
//! Nothing here reuses the four-amplitude effective representation: the two
//! W registers are laid out qubit by qubit, the ancilla CNOT is a real
//! two-site gate, and every readout is a projective measurement on the
//! statevector. Register 1 occupies the first N sites with its ancilla at
//! site 0, register 2 the next N with its ancilla at site N. The ancilla
//! ket convention of the parent module maps onto this layout with the CNOT
//! control at site N and the target at site 0; the X readout of the control
//! is realized as a Hadamard followed by a Z readout, and the X = − repair
//! is a Z gate on each of the first register's payload qubits.
//!
//! The payload states handed back have the ancillas projected out, first
//! register's qubits in front, so they compare directly against the
//! certificates produced by the effective algebra.

use num_complex::Complex64;

use super::{
    breed_step_exact, conversion_result_state, initial_pair, BreedRecord, BreedingError,
    OutcomeDistribution, Result,
};
use crate::hilbert::{
    apply_local, fidelity, measure_projective, LevelLayout, LocalOperator, StateVector,
};
use crate::seeding::target_state;

/// Largest register size the oracle will expand (2^(2N) amplitudes).
pub const MAX_ORACLE_N: usize = 7;

/// One measured branch of the brute-force conversion.
#[derive(Debug, Clone)]
pub struct OracleBranch {
    pub record: BreedRecord,
    pub probability: f64,
    /// Post-measurement state of the 2(N−1) payload qubits.
    pub payload: StateVector,
}

/// Everything the brute force knows about one conversion attempt.
#[derive(Debug, Clone)]
pub struct OracleReport {
    pub n: usize,
    /// Branches in the fixed order grow+, grow−, recycle, lose.
    pub branches: Vec<OracleBranch>,
    /// Worst overlap² of the two grow branches with the uniform W target.
    pub converted_fidelity: f64,
    /// Overlap² of the recycle branch with two intact smaller W states.
    pub recycled_fidelity: f64,
    /// Overlap² of the lose branch with the empty register.
    pub lost_fidelity: f64,
}

impl OracleReport {
    pub fn distribution(&self) -> OutcomeDistribution {
        OutcomeDistribution {
            converted: self.branches[0].probability + self.branches[1].probability,
            recycled: self.branches[2].probability,
            lost: self.branches[3].probability,
        }
    }
}

fn cnot_matrix() -> Vec<Complex64> {
    // Row/column order (control, target): 00, 01, 10, 11; the gate flips
    // the target when the control is 1.
    let one = Complex64::ONE;
    let zero = Complex64::ZERO;
    vec![
        one, zero, zero, zero, //
        zero, one, zero, zero, //
        zero, zero, zero, one, //
        zero, zero, one, zero,
    ]
}

fn hadamard() -> Vec<Complex64> {
    let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    vec![h, h, h, -h]
}

fn z_gate() -> Vec<Complex64> {
    vec![
        Complex64::ONE,
        Complex64::ZERO,
        Complex64::ZERO,
        -Complex64::ONE,
    ]
}

/// |W_N⟩ ⊗ |W_N⟩ on 2N qubits, one amplitude 1/N per excitation pair.
fn pair_statevector(n: usize) -> Result<StateVector> {
    let layout = LevelLayout::uniform(2 * n, 2);
    let mut state = StateVector::zero(layout.clone());
    let amp = Complex64::new((n as f64).recip(), 0.0);
    let mut config = vec![0usize; 2 * n];
    for i in 0..n {
        for j in 0..n {
            config.fill(0);
            config[i] = 1;
            config[n + j] = 1;
            let idx = layout.basis_index(&config)?;
            state.amplitudes_mut()[idx] = amp;
        }
    }
    Ok(state)
}

/// Drop the two measured ancillas, keeping the payload qubits in register
/// order. The ancilla levels must match the measurement record; any
/// amplitude outside them would mean the collapse failed.
fn extract_payload(
    state: &StateVector,
    n: usize,
    ancilla_first: usize,
    ancilla_second: usize,
) -> Result<StateVector> {
    let reduced_layout = LevelLayout::uniform(2 * (n - 1), 2);
    let mut out = StateVector::zero(reduced_layout.clone());
    let mut full_config = vec![0usize; 2 * n];
    for idx in 0..reduced_layout.total_dim() {
        let cfg = reduced_layout.config_of(idx);
        full_config[0] = ancilla_first;
        full_config[n] = ancilla_second;
        full_config[1..n].copy_from_slice(&cfg[..n - 1]);
        full_config[n + 1..2 * n].copy_from_slice(&cfg[n - 1..]);
        out.amplitudes_mut()[idx] = state.amplitude(&full_config)?;
    }
    let kept = out.norm_sq();
    if (kept - 1.0).abs() > 1e-9 {
        return Err(BreedingError::InvariantViolation(format!(
            "payload extraction kept weight {kept}, expected 1"
        )));
    }
    Ok(out)
}

/// Run the conversion on the explicit statevector and report every branch.
pub fn statevector_oracle(n: usize) -> Result<OracleReport> {
    if !(2..=MAX_ORACLE_N).contains(&n) {
        return Err(BreedingError::OracleOutOfRange { n, max: MAX_ORACLE_N });
    }
    let mut state = pair_statevector(n)?;
    let control = n;
    let target = 0;
    apply_local(&mut state, &LocalOperator::pair(control, target, 2, 2, cnot_matrix())?)?;

    let z_split = measure_projective(&state, target, &[vec![0], vec![1]])?;

    // Z read 1: X readout of the control ancilla.
    let mut grow = z_split[1].post_state.clone();
    let p_z1 = z_split[1].probability;
    apply_local(&mut grow, &LocalOperator::single(control, 2, hadamard())?)?;
    let x_split = measure_projective(&grow, control, &[vec![0], vec![1]])?;
    let plus_payload = extract_payload(&x_split[0].post_state, n, 1, 0)?;
    let mut minus_state = x_split[1].post_state.clone();
    for site in 1..n {
        apply_local(&mut minus_state, &LocalOperator::single(site, 2, z_gate())?)?;
    }
    let minus_payload = extract_payload(&minus_state, n, 1, 1)?;

    // Z read 0: Z readout of the control ancilla.
    let p_z0 = z_split[0].probability;
    let fallback = measure_projective(&z_split[0].post_state, control, &[vec![0], vec![1]])?;
    let recycle_payload = extract_payload(&fallback[0].post_state, n, 0, 0)?;
    let lose_payload = extract_payload(&fallback[1].post_state, n, 0, 1)?;

    let branches = vec![
        OracleBranch {
            record: BreedRecord::GrowPlus,
            probability: p_z1 * x_split[0].probability,
            payload: plus_payload,
        },
        OracleBranch {
            record: BreedRecord::GrowMinus,
            probability: p_z1 * x_split[1].probability,
            payload: minus_payload,
        },
        OracleBranch {
            record: BreedRecord::Recycle,
            probability: p_z0 * fallback[0].probability,
            payload: recycle_payload,
        },
        OracleBranch {
            record: BreedRecord::Lose,
            probability: p_z0 * fallback[1].probability,
            payload: lose_payload,
        },
    ];

    let grown_target = target_state(2 * (n - 1), 1)?;
    let converted_fidelity = branches[..2]
        .iter()
        .map(|b| fidelity(&b.payload, &grown_target).expect("same layout"))
        .fold(f64::INFINITY, f64::min);
    let recycled_fidelity = fidelity(&branches[2].payload, &two_w_target(n)?)?;
    let empty = StateVector::basis(
        LevelLayout::uniform(2 * (n - 1), 2),
        &vec![0usize; 2 * (n - 1)],
    )?;
    let lost_fidelity = fidelity(&branches[3].payload, &empty)?;

    Ok(OracleReport {
        n,
        branches,
        converted_fidelity,
        recycled_fidelity,
        lost_fidelity,
    })
}

/// |W_{N−1}⟩ ⊗ |W_{N−1}⟩ on the payload qubits.
fn two_w_target(n: usize) -> Result<StateVector> {
    let half = n - 1;
    let layout = LevelLayout::uniform(2 * half, 2);
    let mut state = StateVector::zero(layout.clone());
    let amp = Complex64::new((half as f64).recip(), 0.0);
    let mut config = vec![0usize; 2 * half];
    for i in 0..half {
        for j in 0..half {
            config.fill(0);
            config[i] = 1;
            config[half + j] = 1;
            let idx = layout.basis_index(&config)?;
            state.amplitudes_mut()[idx] = amp;
        }
    }
    Ok(state)
}

/// Worst disagreement between the effective algebra and the brute force:
/// the largest branch-probability gap or post-state infidelity.
pub fn effective_oracle_delta(n: usize) -> Result<f64> {
    let report = statevector_oracle(n)?;
    let pair = initial_pair(n)?;
    let effective = breed_step_exact(&pair)?;
    let mut delta: f64 = 0.0;
    for (eff, ora) in effective.iter().zip(&report.branches) {
        if eff.record != ora.record {
            return Err(BreedingError::InvariantViolation(format!(
                "branch order mismatch: {:?} vs {:?}",
                eff.record, ora.record
            )));
        }
        delta = delta.max((eff.probability - ora.probability).abs());
    }
    let certificate = conversion_result_state(&pair, BreedRecord::GrowPlus)?;
    for branch in &report.branches[..2] {
        delta = delta.max(1.0 - fidelity(&certificate, &branch.payload)?);
    }
    delta = delta.max(1.0 - report.recycled_fidelity);
    delta = delta.max(1.0 - report.lost_fidelity);
    Ok(delta)
}
