//! Acceptance rules and the click-conditioned local correction.
//!
//! An accepted click record heralds the target Dicke state only up to local
//! signs: each atomic basis component picks up a product of network entries
//! determined by which detectors fired. For records where one round produced
//! a single click (the W family), those signs factor into one ±1 per node and
//! are a closed-form function of the record, so a layer of Z gates restores
//! the all-plus target exactly. Balanced Dicke records (m = N−m) carry no
//! such guarantee; there the best factorable sign layer is found by search
//! and its quality is reported instead of assumed.
//!
//! Sign masks are canonicalized to start with +1 on node 0; a global sign is
//! unobservable.

use num_complex::Complex64;

use super::{
    AcceptanceMode, ClickRecord, DetectorNetwork, ProtocolConfig, Result, SeedingError,
};
use crate::hilbert::{fidelity, LevelLayout, StateVector};

/// Outcome of correcting one accepted trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionReport {
    /// Per-node Z-layer signs, first entry +1 by convention.
    pub signs: Vec<i8>,
    /// Whether a collective X flip was applied to match the target weight.
    pub collective_flip: bool,
    /// Overlap² with the target after correction.
    pub fidelity: f64,
    /// True when the mask came from the click record's closed form; false
    /// when it had to be found by search (balanced Dicke records).
    pub mask_from_clicks: bool,
}

/// Does the click record satisfy the acceptance rule for split (m, N−m)?
pub fn accept_pattern(record: &ClickRecord, n: usize, target_m: usize, mode: AcceptanceMode) -> bool {
    let r1 = record.round_count(1);
    let r2 = record.round_count(2);
    let counts_ok = (r1 == target_m && r2 == n - target_m)
        || (r1 == n - target_m && r2 == target_m);
    if !counts_ok {
        return false;
    }
    match mode {
        AcceptanceMode::Permissive => true,
        AcceptanceMode::StrictDistinct => {
            for round in [1, 2] {
                let pattern = record.round_pattern(round);
                if pattern.windows(2).any(|w| w[0] == w[1]) {
                    return false;
                }
            }
            true
        }
    }
}

/// The N-qubit Dicke state with m excitations and uniform positive
/// amplitudes; m = 1 is the W state.
pub fn target_state(n: usize, m: usize) -> Result<StateVector> {
    if n == 0 || m > n {
        return Err(SeedingError::BadTargetPattern { m, n });
    }
    let layout = LevelLayout::uniform(n, 2);
    let mut state = StateVector::zero(layout);
    let count = binomial(n, m);
    let amp = Complex64::new((count as f64).recip().sqrt(), 0.0);
    for idx in 0..(1usize << n) {
        if (idx as u32).count_ones() as usize == m {
            state.amplitudes_mut()[idx] = amp;
        }
    }
    Ok(state)
}

fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc = 1u64;
    for i in 0..k {
        acc = acc * (n - i) as u64 / (i + 1) as u64;
    }
    acc
}

/// Success probability of the permissive acceptance rule: the register starts
/// uniformly over excitation sectors, the accepted sectors are m and N−m, and
/// every one of the N emitted photons must survive detection.
pub fn seed_success_formula(n: usize, m: usize, eta: f64) -> Result<f64> {
    if !n.is_power_of_two() || n < 2 {
        return Err(SeedingError::BadNodeCount { n, max: 1 << super::network::MAX_NETWORK_LEVEL });
    }
    if m == 0 || m >= n {
        return Err(SeedingError::BadTargetPattern { m, n });
    }
    if !(0.0..=1.0).contains(&eta) {
        return Err(SeedingError::BadEfficiency { which: "combined", value: eta });
    }
    let mut sectors = binomial(n, m) as f64;
    if m != n - m {
        sectors += binomial(n, n - m) as f64;
    }
    Ok(eta.powi(n as i32) * sectors / 2.0f64.powi(n as i32))
}

/// Closed-form sign mask for a record with round click counts {1, N−1}.
///
/// Writing P for the (N−1)-click round's detector multiset and i for the
/// lone detector of the other round, the heralded amplitude on the component
/// singling out node q is perm(A[P, cols≠q]) · A_{i,q}. All those permanents
/// share one magnitude, and translating the column set shows
/// perm(A[P, cols≠q]) = perm(A[P, cols≠0]) · ∏_{r∈P} A_{r,q}, so the
/// canonical mask is s_q = A_{i,q} · ∏_{r∈P} A_{r,q} with no permanent
/// evaluation needed. One permanent is still computed to reject the
/// degenerate all-zero case, which a physically produced record never hits.
pub fn phase_correction(record: &ClickRecord, network: &DetectorNetwork) -> Result<Vec<i8>> {
    let n = network.ports();
    let r1 = record.round_count(1);
    let r2 = record.round_count(2);
    let (single, multi) = if r1 == 1 && r2 == n - 1 {
        (record.round_pattern(1)[0], record.round_pattern(2))
    } else if r2 == 1 && r1 == n - 1 {
        (record.round_pattern(2)[0], record.round_pattern(1))
    } else {
        return Err(SeedingError::MaskNeedsSingleRound { r1, r2 });
    };

    let cols: Vec<usize> = (1..n).collect();
    if network.submatrix_permanent(&multi, &cols)? == 0 {
        return Err(SeedingError::CannotCorrect);
    }

    let mut signs = Vec::with_capacity(n);
    for q in 0..n {
        let mut s = network.sign(single, q);
        for &r in &multi {
            s *= network.sign(r, q);
        }
        signs.push(s as i8);
    }
    // Column 0 of the network is all-plus, so the canonical form holds
    // already; normalize defensively anyway.
    let s0 = signs[0];
    for s in signs.iter_mut() {
        *s *= s0;
    }
    Ok(signs)
}

/// Apply a per-node Z layer: component |b⟩ gains ∏_{q: b_q = 1} signs[q].
pub fn apply_sign_mask(state: &mut StateVector, signs: &[i8]) -> Result<()> {
    let n = state.layout().sites();
    if signs.len() != n || state.layout().dims().iter().any(|&d| d != 2) {
        return Err(SeedingError::InvariantViolation(
            "sign mask needs one ±1 per qubit".into(),
        ));
    }
    for (idx, amp) in state.amplitudes_mut().iter_mut().enumerate() {
        let mut phase = 1i8;
        for (site, &s) in signs.iter().enumerate() {
            if idx & (1 << (n - 1 - site)) != 0 {
                phase *= s;
            }
        }
        if phase < 0 {
            *amp = -*amp;
        }
    }
    Ok(())
}

/// Collective X flip |b⟩ → |b̄⟩ on a qubit register.
pub fn apply_collective_flip(state: &mut StateVector) -> Result<()> {
    let n = state.layout().sites();
    if state.layout().dims().iter().any(|&d| d != 2) {
        return Err(SeedingError::InvariantViolation("collective flip needs qubits".into()));
    }
    let mask = (1usize << n) - 1;
    let amps = state.amplitudes_mut();
    for idx in 0..amps.len() {
        let partner = idx ^ mask;
        if idx < partner {
            amps.swap(idx, partner);
        }
    }
    Ok(())
}

/// Search all canonical sign layers for the one maximizing overlap with the
/// target. Exhaustive over 2^{N−1} masks; N is small here.
pub fn best_sign_correction(
    atoms: &StateVector,
    target: &StateVector,
) -> Result<(Vec<i8>, f64)> {
    let n = atoms.layout().sites();
    if target.layout() != atoms.layout() {
        return Err(SeedingError::InvariantViolation(
            "state and target must share a layout".into(),
        ));
    }
    let mut best = (vec![1i8; n], -1.0f64);
    for mask_bits in 0..(1usize << (n - 1)) {
        let signs: Vec<i8> = (0..n)
            .map(|q| if q > 0 && mask_bits & (1 << (q - 1)) != 0 { -1 } else { 1 })
            .collect();
        let mut overlap = Complex64::new(0.0, 0.0);
        for (idx, (a, t)) in atoms.amplitudes().iter().zip(target.amplitudes()).enumerate() {
            let mut phase = 1i8;
            for (site, &s) in signs.iter().enumerate() {
                if s < 0 && idx & (1 << (n - 1 - site)) != 0 {
                    phase = -phase;
                }
            }
            let signed = if phase < 0 { -*a } else { *a };
            overlap += t.conj() * signed;
        }
        let f = overlap.norm_sqr();
        if f > best.1 {
            best = (signs, f);
        }
    }
    Ok(best)
}

/// Correct one accepted trajectory's atomic register and score it against the
/// configured target.
pub fn correct_and_score(
    atoms: &StateVector,
    record: &ClickRecord,
    network: &DetectorNetwork,
    config: &ProtocolConfig,
) -> Result<CorrectionReport> {
    let n = config.n();
    let m = config.target_m();
    let r1 = record.round_count(1);
    let r2 = record.round_count(2);
    let mut working = atoms.clone();

    // The heralded weight is N − r1 ones; flip when that misses the target.
    let collective_flip = n - r1 != m;
    if collective_flip {
        apply_collective_flip(&mut working)?;
    }

    let target = target_state(n, m)?;
    if r1.min(r2) == 1 && r1.max(r2) == n - 1 {
        let signs = phase_correction(record, network)?;
        apply_sign_mask(&mut working, &signs)?;
        let f = fidelity(&working, &target)?;
        Ok(CorrectionReport { signs, collective_flip, fidelity: f, mask_from_clicks: true })
    } else {
        let (signs, f) = best_sign_correction(&working, &target)?;
        Ok(CorrectionReport { signs, collective_flip, fidelity: f, mask_from_clicks: false })
    }
}
