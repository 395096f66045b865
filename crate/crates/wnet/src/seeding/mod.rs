//! Two-round heralded seeding of small W and Dicke states.
//!
//! N three-level atoms (ground `|0⟩`, storage `|1⟩`, excited `|e⟩`) each sit
//! in a single-sided cavity whose output feeds a balanced 2^L-port detector
//! network. Every atom is prepared in `(|0⟩+|e⟩)/√2`; excited atoms emit one
//! cavity photon apiece, and the network erases which-node information so a
//! round's click pattern heralds a symmetric superposition. A collective flip
//! plus π-pulse then makes the complementary set of atoms emit in a second
//! round. Click counts of (m, N−m) across the two rounds herald an N-qubit
//! Dicke state (the W state for m = 1) up to single-qubit phases that are a
//! deterministic function of the click record.
//!
//! The simulation is a quantum-jump unraveling of the conditional dynamics:
//! between clicks the joint state evolves under the non-Hermitian Hamiltonian,
//! jump times come from inverting the survival norm, detectors are drawn with
//! probability ∝ ‖â_i ψ‖², and detection inefficiency thins clicks after the
//! photon is already gone.

use thiserror::Error;

mod correction;
mod dynamics;
mod monte_carlo;
mod network;
pub mod pattern_oracle;
mod trajectory;

pub use correction::{
    accept_pattern, best_sign_correction, correct_and_score, phase_correction,
    seed_success_formula, target_state, CorrectionReport,
};
pub use dynamics::{
    alpha_beta, conditional_propagator, emission_density, emission_total, evolve_conditional,
    integrate_adaptive, survival_one, NodeAmplitudes,
};
pub use monte_carlo::{estimate_success, SeedRunStats, FACTORABLE_TOLERANCE};
pub use network::{DetectorNetwork, MAX_NETWORK_LEVEL};
pub use trajectory::{
    apply_detector_mode, build_initial_state, detector_probabilities, drained_weight,
    extract_atom_state, flip_and_excite, project_drained, propagate, run_trajectory,
    sample_and_apply_jump, sample_jump_time, JumpSample, TrajectoryEngine, TrajectoryResult,
    ATOM_LEVELS, JUMP_TIME_TOLERANCE, NODE_LEVELS,
};

use crate::hilbert::HilbertError;

#[derive(Debug, Error)]
pub enum SeedingError {
    #[error("cavity coupling must be positive, got g = {g}")]
    NonPositiveCoupling { g: f64 },
    #[error("overdamped regime required: kappa = {kappa} must exceed g = {g}")]
    NotOverdamped { g: f64, kappa: f64 },
    #[error("node count {n} is not a power of two between 2 and {max}")]
    BadNodeCount { n: usize, max: usize },
    #[error("detector network level {level} exceeds the supported maximum {max}")]
    NetworkTooLarge { level: u32, max: u32 },
    #[error("efficiency {value} for {which} lies outside [0, 1]")]
    BadEfficiency { which: &'static str, value: f64 },
    #[error("target click split m = {m} must satisfy 1 <= m <= N-1 for N = {n}")]
    BadTargetPattern { m: usize, n: usize },
    #[error("threshold {value} must be positive and tiny (≤ 1e-6)")]
    BadThreshold { value: f64 },
    #[error("round window {value} must be positive")]
    BadRoundWindow { value: f64 },
    #[error("click at detector {detector} out of range for {n} detectors")]
    DetectorOutOfRange { detector: usize, n: usize },
    #[error("click times must increase strictly within a round")]
    NonMonotonicClickTimes,
    #[error("round index {round} is not 1 or 2")]
    BadRoundIndex { round: usize },
    #[error("residual excited or photon weight {weight:.3e} above threshold {threshold:.3e} at a round boundary")]
    ProtocolSequence { weight: f64, threshold: f64 },
    #[error("internal invariant violated: {0}")]
    InvariantViolation(String),
    #[error("correction undefined: every candidate phase pattern has zero amplitude")]
    CannotCorrect,
    #[error("correction mask needs a click record with round counts {{1, N-1}}, got ({r1}, {r2})")]
    MaskNeedsSingleRound { r1: usize, r2: usize },
    #[error("exact pattern enumeration is not tractable for {n} nodes in {mode} mode")]
    OracleTooLarge { n: usize, mode: &'static str },
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
}

type Result<T> = std::result::Result<T, SeedingError>;

/// Atom-cavity parameters of one network node.
///
/// The conditional Hamiltonian per node is
/// `H = (g/2)(|1⟩⟨e| ĉ† + |e⟩⟨1| ĉ) − iκ ĉ†ĉ`
/// and the protocol lives in the overdamped regime `κ > g`, where both decay
/// exponents `ω± = (−κ ± √(κ²−g²))/2` are real and negative, so an excited
/// atom leaks exactly one photon and never re-absorbs it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CavityParams {
    g: f64,
    kappa: f64,
}

impl CavityParams {
    pub fn new(g: f64, kappa: f64) -> Result<Self> {
        if !(g > 0.0) {
            return Err(SeedingError::NonPositiveCoupling { g });
        }
        if !(kappa > g) {
            return Err(SeedingError::NotOverdamped { g, kappa });
        }
        Ok(CavityParams { g, kappa })
    }

    /// Protocol defaults: κ = 1 sets the time unit, g = κ/2 keeps the node
    /// comfortably overdamped.
    pub fn default_protocol() -> Self {
        CavityParams { g: 0.5, kappa: 1.0 }
    }

    pub fn g(&self) -> f64 {
        self.g
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// `√(κ² − g²)`, the gap between the two decay exponents.
    pub fn discriminant(&self) -> f64 {
        (self.kappa * self.kappa - self.g * self.g).sqrt()
    }

    /// Slow decay exponent `ω₊ = (−κ + √(κ²−g²))/2` (negative).
    pub fn omega_plus(&self) -> f64 {
        (-self.kappa + self.discriminant()) / 2.0
    }

    /// Fast decay exponent `ω₋ = (−κ − √(κ²−g²))/2` (negative).
    pub fn omega_minus(&self) -> f64 {
        (-self.kappa - self.discriminant()) / 2.0
    }
}

/// Which click records count as protocol successes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum AcceptanceMode {
    /// Round click counts are (m, N−m) in either order; repeated detectors
    /// within a round are fine. This is the mode whose success probability has
    /// the clean closed form N/2^{N−1} at m = 1, η = 1.
    #[serde(rename = "permissive")]
    Permissive,
    /// Additionally demands that all clicks within each round land on pairwise
    /// distinct detectors.
    #[serde(rename = "strict-distinct")]
    StrictDistinct,
}

impl std::fmt::Display for AcceptanceMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AcceptanceMode::Permissive => write!(f, "permissive"),
            AcceptanceMode::StrictDistinct => write!(f, "strict-distinct"),
        }
    }
}

/// Full parameter set for one seeding run.
#[derive(Debug, Clone)]
pub struct ProtocolConfig {
    n: usize,
    cavity: CavityParams,
    eta_detector: f64,
    eta_transmission: f64,
    acceptance: AcceptanceMode,
    target_m: usize,
    residual_threshold: f64,
    round_window: Option<f64>,
}

/// Largest node count for full trajectory simulation (state dimension 6^8).
pub const MAX_TRAJECTORY_NODES: usize = 8;

impl ProtocolConfig {
    pub fn new(n: usize) -> Result<Self> {
        if !n.is_power_of_two() || n < 2 || n > MAX_TRAJECTORY_NODES {
            return Err(SeedingError::BadNodeCount { n, max: MAX_TRAJECTORY_NODES });
        }
        Ok(ProtocolConfig {
            n,
            cavity: CavityParams::default_protocol(),
            eta_detector: 1.0,
            eta_transmission: 1.0,
            acceptance: AcceptanceMode::Permissive,
            target_m: 1,
            residual_threshold: 1e-12,
            round_window: None,
        })
    }

    pub fn with_cavity(mut self, cavity: CavityParams) -> Self {
        self.cavity = cavity;
        self
    }

    pub fn with_detector_efficiency(mut self, eta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(SeedingError::BadEfficiency { which: "detector", value: eta });
        }
        self.eta_detector = eta;
        Ok(self)
    }

    pub fn with_transmission(mut self, eta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(SeedingError::BadEfficiency { which: "transmission", value: eta });
        }
        self.eta_transmission = eta;
        Ok(self)
    }

    pub fn with_acceptance(mut self, mode: AcceptanceMode) -> Self {
        self.acceptance = mode;
        self
    }

    /// Target click split: m clicks in one round, N−m in the other. m = 1
    /// heralds the W state, larger m a balanced Dicke state.
    pub fn with_target_m(mut self, m: usize) -> Result<Self> {
        if m == 0 || m >= self.n {
            return Err(SeedingError::BadTargetPattern { m, n: self.n });
        }
        self.target_m = m;
        Ok(self)
    }

    pub fn with_residual_threshold(mut self, threshold: f64) -> Result<Self> {
        if !(threshold > 0.0 && threshold <= 1e-6) {
            return Err(SeedingError::BadThreshold { value: threshold });
        }
        self.residual_threshold = threshold;
        Ok(self)
    }

    /// Finite round window t_w for sensitivity studies. Trajectories with
    /// excitation left at the window edge are rejected. `None` (the default)
    /// runs each round until the excitation has fully drained, the idealized
    /// t_w → ∞ protocol.
    pub fn with_round_window(mut self, t_w: Option<f64>) -> Result<Self> {
        if let Some(t) = t_w {
            if !(t > 0.0) {
                return Err(SeedingError::BadRoundWindow { value: t });
            }
        }
        self.round_window = t_w;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn cavity(&self) -> &CavityParams {
        &self.cavity
    }

    pub fn eta_detector(&self) -> f64 {
        self.eta_detector
    }

    pub fn eta_transmission(&self) -> f64 {
        self.eta_transmission
    }

    /// Probability that an emitted photon produces a click: η_d · η_l.
    pub fn combined_efficiency(&self) -> f64 {
        self.eta_detector * self.eta_transmission
    }

    pub fn acceptance(&self) -> AcceptanceMode {
        self.acceptance
    }

    pub fn target_m(&self) -> usize {
        self.target_m
    }

    pub fn residual_threshold(&self) -> f64 {
        self.residual_threshold
    }

    pub fn round_window(&self) -> Option<f64> {
        self.round_window
    }

    /// Network recursion depth L with 2^L = N.
    pub fn network_level(&self) -> u32 {
        self.n.trailing_zeros()
    }
}

/// One detector click: which round, which detector (0-based), and when within
/// the round (time measured from the round start).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClickEvent {
    pub round: usize,
    pub detector: usize,
    pub time: f64,
}

/// Chronological click record of one trajectory.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClickRecord {
    events: Vec<ClickEvent>,
}

impl ClickRecord {
    pub fn new() -> Self {
        ClickRecord { events: Vec::new() }
    }

    pub fn push(&mut self, event: ClickEvent, n_detectors: usize) -> Result<()> {
        if event.round != 1 && event.round != 2 {
            return Err(SeedingError::BadRoundIndex { round: event.round });
        }
        if event.detector >= n_detectors {
            return Err(SeedingError::DetectorOutOfRange { detector: event.detector, n: n_detectors });
        }
        if let Some(last) = self.events.iter().rev().find(|e| e.round == event.round) {
            if event.time <= last.time {
                return Err(SeedingError::NonMonotonicClickTimes);
            }
        }
        self.events.push(event);
        Ok(())
    }

    pub fn events(&self) -> &[ClickEvent] {
        &self.events
    }

    pub fn round_count(&self, round: usize) -> usize {
        self.events.iter().filter(|e| e.round == round).count()
    }

    /// Detector multiset of a round, sorted ascending.
    pub fn round_pattern(&self, round: usize) -> Vec<usize> {
        let mut pattern: Vec<usize> =
            self.events.iter().filter(|e| e.round == round).map(|e| e.detector).collect();
        pattern.sort_unstable();
        pattern
    }
}

/// Canonical text form of a two-round click pattern: 1-based detector
/// numbers, ascending within each round, rounds joined by `|`, an empty round
/// written `-`. Example: `1+2+3|4`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PatternKey(String);

impl PatternKey {
    pub fn new(round1: &[usize], round2: &[usize]) -> Self {
        fn side(detectors: &[usize]) -> String {
            if detectors.is_empty() {
                return "-".to_string();
            }
            let mut sorted = detectors.to_vec();
            sorted.sort_unstable();
            sorted.iter().map(|d| (d + 1).to_string()).collect::<Vec<_>>().join("+")
        }
        PatternKey(format!("{}|{}", side(round1), side(round2)))
    }

    pub fn from_record(record: &ClickRecord) -> Self {
        Self::new(&record.round_pattern(1), &record.round_pattern(2))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for PatternKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cavity_params_guard_the_overdamped_regime() {
        assert!(matches!(CavityParams::new(0.0, 1.0), Err(SeedingError::NonPositiveCoupling { .. })));
        assert!(matches!(CavityParams::new(1.0, 0.5), Err(SeedingError::NotOverdamped { .. })));
        assert!(matches!(CavityParams::new(1.0, 1.0), Err(SeedingError::NotOverdamped { .. })));
        let p = CavityParams::new(0.5, 1.0).unwrap();
        assert!(p.omega_plus() < 0.0);
        assert!(p.omega_minus() < p.omega_plus());
    }

    #[test]
    fn decay_exponents_solve_the_characteristic_equation() {
        let p = CavityParams::new(0.7, 1.3).unwrap();
        for omega in [p.omega_plus(), p.omega_minus()] {
            let residual = omega * omega + p.kappa() * omega + p.g() * p.g() / 4.0;
            assert!(residual.abs() < 1e-14);
        }
    }

    #[test]
    fn config_rejects_bad_node_counts() {
        assert!(matches!(ProtocolConfig::new(3), Err(SeedingError::BadNodeCount { .. })));
        assert!(matches!(ProtocolConfig::new(1), Err(SeedingError::BadNodeCount { .. })));
        assert!(matches!(ProtocolConfig::new(16), Err(SeedingError::BadNodeCount { .. })));
        assert!(ProtocolConfig::new(4).is_ok());
        assert!(ProtocolConfig::new(8).is_ok());
    }

    #[test]
    fn config_validates_efficiencies_and_target() {
        let config = ProtocolConfig::new(4).unwrap();
        assert!(matches!(
            config.clone().with_detector_efficiency(1.5),
            Err(SeedingError::BadEfficiency { .. })
        ));
        assert!(matches!(config.clone().with_target_m(0), Err(SeedingError::BadTargetPattern { .. })));
        assert!(matches!(config.clone().with_target_m(4), Err(SeedingError::BadTargetPattern { .. })));
        let c = config.with_detector_efficiency(0.9).unwrap().with_transmission(0.8).unwrap();
        assert!((c.combined_efficiency() - 0.72).abs() < 1e-15);
    }

    #[test]
    fn pattern_keys_are_canonical() {
        assert_eq!(PatternKey::new(&[2, 0, 1], &[3]).as_str(), "1+2+3|4");
        assert_eq!(PatternKey::new(&[], &[0, 0]).as_str(), "-|1+1");
        let mut record = ClickRecord::new();
        record.push(ClickEvent { round: 1, detector: 3, time: 0.4 }, 4).unwrap();
        record.push(ClickEvent { round: 2, detector: 2, time: 0.1 }, 4).unwrap();
        record.push(ClickEvent { round: 2, detector: 0, time: 0.9 }, 4).unwrap();
        record.push(ClickEvent { round: 2, detector: 2, time: 1.3 }, 4).unwrap();
        assert_eq!(PatternKey::from_record(&record).as_str(), "4|1+3+3");
    }

    #[test]
    fn click_record_enforces_round_monotonic_times() {
        let mut record = ClickRecord::new();
        record.push(ClickEvent { round: 1, detector: 0, time: 1.0 }, 4).unwrap();
        record.push(ClickEvent { round: 1, detector: 2, time: 2.0 }, 4).unwrap();
        assert!(matches!(
            record.push(ClickEvent { round: 1, detector: 1, time: 1.5 }, 4),
            Err(SeedingError::NonMonotonicClickTimes)
        ));
        // A new round restarts the clock.
        record.push(ClickEvent { round: 2, detector: 1, time: 0.5 }, 4).unwrap();
        assert_eq!(record.round_count(1), 2);
        assert_eq!(record.round_pattern(1), vec![0, 2]);
        assert!(matches!(
            record.push(ClickEvent { round: 3, detector: 0, time: 1.0 }, 4),
            Err(SeedingError::BadRoundIndex { round: 3 })
        ));
        assert!(matches!(
            record.push(ClickEvent { round: 2, detector: 9, time: 1.0 }, 4),
            Err(SeedingError::DetectorOutOfRange { .. })
        ));
    }
}
