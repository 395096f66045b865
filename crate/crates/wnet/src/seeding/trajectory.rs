//! Quantum-jump trajectories of the two-round seeding protocol.
//!
//! Two representations cooperate here. The public operations at the bottom of
//! the file act on full 6-level-per-node state vectors and spell out every
//! step (conditional propagation, survival bisection, detector-mode
//! application, collective flip) in terms of `hilbert` primitives; they are
//! slow but transparent. [`TrajectoryEngine`] runs the same protocol on a
//! compact 4-level-per-node encoding that drops the two node levels the
//! protocol can never populate (`|0,1⟩` and `|e,1⟩`), which shrinks the state
//! by (2/3)^N and lets jump times come from a scalar survival polynomial
//! instead of repeated dense propagation. Cross-agreement of the two routes,
//! click for click on a shared random stream, is part of the test suite.
//!
//! Per jump the random stream is consumed in a fixed order: waiting-time draw,
//! detector draw, detection-loss draw. The loss draw happens even at unit
//! efficiency so that histories stay aligned across efficiency settings.

use num_complex::Complex64;
use rand::Rng;

use super::correction::{correct_and_score, CorrectionReport};
use super::dynamics::{alpha_beta, conditional_propagator, survival_one};
use super::{
    accept_pattern, CavityParams, ClickEvent, ClickRecord, DetectorNetwork, ProtocolConfig,
    Result, SeedingError,
};
use crate::hilbert::{apply_local, LevelLayout, StateVector};

/// Node dimension in the explicit representation: atom ∈ {ground, storage,
/// excited} × photon ∈ {0, 1}, level = 2·atom + photon.
pub const NODE_LEVELS: usize = 6;
/// Atomic dimension alone.
pub const ATOM_LEVELS: usize = 3;

/// Waiting-time bisection stops when the bracket is this narrow (units 1/κ).
pub const JUMP_TIME_TOLERANCE: f64 = 1e-10;

// Compact per-node levels: 0 = |0,0⟩, 1 = |1,0⟩, 2 = |1,1⟩, 3 = |e,0⟩.
const C_GROUND: usize = 0;
const C_STORED: usize = 1;
const C_PHOTON: usize = 2;
const C_EXCITED: usize = 3;

/// Everything one simulated protocol attempt produces.
#[derive(Debug, Clone)]
pub struct TrajectoryResult {
    pub clicks: ClickRecord,
    /// Click record satisfies the configured acceptance rule.
    pub accepted: bool,
    /// Finite round window expired with excitation still undetected.
    pub leftover_rejected: bool,
    /// Final atomic register (qubits, storage = `|1⟩`), absent only when the
    /// trajectory was cut off by the window.
    pub final_atoms: Option<StateVector>,
    /// Phase-correction outcome, present iff accepted.
    pub correction: Option<CorrectionReport>,
}

/// Reusable trajectory runner for one protocol configuration.
pub struct TrajectoryEngine {
    config: ProtocolConfig,
    network: DetectorNetwork,
    n: usize,
    dim: usize,
    shifts: Vec<u32>,
    exc_count: Vec<u8>,
    amps: Vec<Complex64>,
    reduced: Vec<Complex64>,
    mode_buf: Vec<Complex64>,
    weights: Vec<f64>,
    probs: Vec<f64>,
}

impl TrajectoryEngine {
    pub fn new(config: &ProtocolConfig) -> Result<Self> {
        let n = config.n();
        let network = DetectorNetwork::for_nodes(n)?;
        let dim = 1usize << (2 * n);
        let shifts: Vec<u32> = (0..n).map(|s| (2 * (n - 1 - s)) as u32).collect();
        let mut exc_count = vec![0u8; dim];
        for (idx, count) in exc_count.iter_mut().enumerate() {
            *count = shifts
                .iter()
                .filter(|&&sh| {
                    let level = (idx >> sh) & 3;
                    level == C_PHOTON || level == C_EXCITED
                })
                .count() as u8;
        }
        Ok(TrajectoryEngine {
            config: config.clone(),
            network,
            n,
            dim,
            shifts,
            exc_count,
            amps: vec![Complex64::new(0.0, 0.0); dim],
            reduced: vec![Complex64::new(0.0, 0.0); n * dim],
            mode_buf: vec![Complex64::new(0.0, 0.0); dim],
            weights: vec![0.0; n + 1],
            probs: vec![0.0; n],
        })
    }

    pub fn config(&self) -> &ProtocolConfig {
        &self.config
    }

    pub fn network(&self) -> &DetectorNetwork {
        &self.network
    }

    fn level(&self, idx: usize, site: usize) -> usize {
        (idx >> self.shifts[site]) & 3
    }

    /// Product state (|0,0⟩ + |e,0⟩)^⊗N / 2^{N/2}.
    fn reset(&mut self) {
        self.amps.iter_mut().for_each(|a| *a = Complex64::new(0.0, 0.0));
        let amp = Complex64::new(2.0f64.powi(-(self.n as i32)).sqrt(), 0.0);
        for mask in 0..(1usize << self.n) {
            let mut idx = 0usize;
            for site in 0..self.n {
                if mask & (1 << site) != 0 {
                    idx |= C_EXCITED << self.shifts[site];
                }
            }
            self.amps[idx] = amp;
        }
    }

    fn norm_sq(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    fn renormalize(&mut self) -> Result<()> {
        let n2 = self.norm_sq();
        if n2 <= 0.0 {
            return Err(SeedingError::InvariantViolation("state norm collapsed to zero".into()));
        }
        let inv = 1.0 / n2.sqrt();
        self.amps.iter_mut().for_each(|a| *a *= inv);
        Ok(())
    }

    /// Weight in each excitation sector (count of nodes still holding their
    /// excitation, in the atom or as a cavity photon).
    fn compute_sector_weights(&mut self) {
        self.weights.iter_mut().for_each(|w| *w = 0.0);
        for (idx, amp) in self.amps.iter().enumerate() {
            let w = amp.norm_sqr();
            if w > 0.0 {
                self.weights[self.exc_count[idx] as usize] += w;
            }
        }
        let total: f64 = self.weights.iter().sum();
        if total > 0.0 {
            self.weights.iter_mut().for_each(|w| *w /= total);
        }
    }

    /// Apply the exact jump-free propagator over a span to every node.
    fn evolve(&mut self, span: f64, p: &CavityParams) {
        if span <= 0.0 {
            return;
        }
        let a = alpha_beta(span, p);
        let d = p.discriminant();
        let ep = (p.omega_plus() * span).exp();
        let em = (p.omega_minus() * span).exp();
        let photon_stay = Complex64::new((p.omega_plus() * ep - p.omega_minus() * em) / d, 0.0);
        for site in 0..self.n {
            let stride = 1usize << self.shifts[site];
            let block = stride * 4;
            let mut base = 0usize;
            while base < self.dim {
                for inner in 0..stride {
                    let i_photon = base + C_PHOTON * stride + inner;
                    let i_excited = base + C_EXCITED * stride + inner;
                    let ph = self.amps[i_photon];
                    let ex = self.amps[i_excited];
                    self.amps[i_photon] = photon_stay * ph + a.photon * ex;
                    self.amps[i_excited] = a.photon * ph + a.excited * ex;
                }
                base += block;
            }
        }
    }

    /// Zero every component that still holds excitation and renormalize: the
    /// exact infinite-time limit of the conditional evolution.
    fn project_ground(&mut self) -> Result<()> {
        for (idx, amp) in self.amps.iter_mut().enumerate() {
            if self.exc_count[idx] > 0 {
                *amp = Complex64::new(0.0, 0.0);
            }
        }
        self.renormalize()
    }

    /// Conditional no-jump survival after a further `s`, given the round has
    /// been running for `tau`. Every node still excited carries the pair
    /// amplitude (β(τ), α(τ)) up to a shared factor, so a sector with j
    /// excited nodes rescales by ρ^j with ρ the single-node survival ratio,
    /// and the total survival is the sector-weight polynomial in ρ.
    fn survival_poly(&self, rho: f64) -> f64 {
        let mut acc = 0.0;
        let mut pow = 1.0;
        for &w in &self.weights {
            acc += w * pow;
            pow *= rho;
        }
        acc
    }

    fn solve_jump_delay(&self, tau: f64, u: f64, p: &CavityParams) -> Result<f64> {
        let sigma_tau = survival_one(tau, p);
        if sigma_tau < 1e-250 {
            return Err(SeedingError::InvariantViolation(format!(
                "single-node survival underflow at round time {tau}"
            )));
        }
        let f = |s: f64| {
            let rho = survival_one(tau + s, p) / sigma_tau;
            self.survival_poly(rho) - u
        };
        let mut hi = 1.0 / p.kappa();
        let mut doublings = 0;
        while f(hi) > 0.0 {
            hi *= 2.0;
            doublings += 1;
            if doublings > 128 {
                return Err(SeedingError::InvariantViolation(
                    "failed to bracket the jump time".into(),
                ));
            }
        }
        let mut lo = 0.0;
        while hi - lo > JUMP_TIME_TOLERANCE {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Fill `reduced` with the N photon-removed vectors ĉ_j ψ.
    fn build_reduced(&mut self) {
        self.reduced.iter_mut().for_each(|a| *a = Complex64::new(0.0, 0.0));
        for site in 0..self.n {
            let stride = 1usize << self.shifts[site];
            let block = stride * 4;
            let row = site * self.dim;
            let mut base = 0usize;
            while base < self.dim {
                for inner in 0..stride {
                    let i_photon = base + C_PHOTON * stride + inner;
                    let amp = self.amps[i_photon];
                    if amp.norm_sqr() > 0.0 {
                        self.reduced[row + i_photon - stride] = amp;
                    }
                }
                base += block;
            }
        }
    }

    /// Norm² of â_i ψ for every detector; their sum is the photon weight.
    fn detector_probabilities(&mut self) -> f64 {
        self.build_reduced();
        let scale = 1.0 / (self.n as f64).sqrt();
        let mut total = 0.0;
        for i in 0..self.n {
            let mut p = 0.0;
            for idx in 0..self.dim {
                let mut v = Complex64::new(0.0, 0.0);
                for j in 0..self.n {
                    let c = self.network.sign(i, j) as f64 * scale;
                    v += c * self.reduced[j * self.dim + idx];
                }
                p += v.norm_sqr();
            }
            self.probs[i] = p;
            total += p;
        }
        total
    }

    /// Overwrite the state with the (renormalized) post-click state â_i ψ.
    fn apply_detector(&mut self, detector: usize) -> Result<()> {
        let scale = 1.0 / (self.n as f64).sqrt();
        for idx in 0..self.dim {
            let mut v = Complex64::new(0.0, 0.0);
            for j in 0..self.n {
                let c = self.network.sign(detector, j) as f64 * scale;
                v += c * self.reduced[j * self.dim + idx];
            }
            self.mode_buf[idx] = v;
        }
        std::mem::swap(&mut self.amps, &mut self.mode_buf);
        self.renormalize()
    }

    /// One emission: detector draw, mode application, loss draw.
    fn jump<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<(usize, bool)> {
        let total = self.detector_probabilities();
        if total <= 0.0 {
            return Err(SeedingError::InvariantViolation(
                "jump fired with zero photon weight".into(),
            ));
        }
        let u_det: f64 = rng.gen();
        let target = u_det * total;
        let mut acc = 0.0;
        let mut detector = self.n - 1;
        for (i, &p) in self.probs.iter().enumerate() {
            acc += p;
            if target < acc {
                detector = i;
                break;
            }
        }
        self.apply_detector(detector)?;
        let u_thin: f64 = rng.gen();
        let recorded = u_thin < self.config.combined_efficiency();
        Ok((detector, recorded))
    }

    fn excited_fraction(&mut self) -> f64 {
        self.compute_sector_weights();
        1.0 - self.weights[0]
    }

    /// Run one emission round to completion. Returns false when a finite
    /// window closed on non-negligible excitation (trajectory rejected).
    fn run_round<R: Rng + ?Sized>(
        &mut self,
        round: usize,
        clicks: &mut ClickRecord,
        rng: &mut R,
    ) -> Result<bool> {
        let p = *self.config.cavity();
        let window = self.config.round_window();
        let mut tau = 0.0;
        loop {
            self.compute_sector_weights();
            let u_time: f64 = rng.gen();
            if u_time <= self.weights[0] {
                self.project_ground()?;
                return Ok(true);
            }
            let s = self.solve_jump_delay(tau, u_time, &p)?;
            if let Some(t_w) = window {
                if tau + s > t_w {
                    self.evolve(t_w - tau, &p);
                    self.renormalize()?;
                    let leftover = self.excited_fraction();
                    if leftover > self.config.residual_threshold() {
                        return Ok(false);
                    }
                    self.project_ground()?;
                    return Ok(true);
                }
            }
            self.evolve(s, &p);
            tau += s;
            self.renormalize()?;
            let (detector, recorded) = self.jump(rng)?;
            if recorded {
                clicks.push(ClickEvent { round, detector, time: tau }, self.n)?;
            }
        }
    }

    /// Collective flip between rounds: ground → excited, storage → ground.
    /// Requires the register to be fully drained (no photons, no excited
    /// atoms) up to the configured threshold.
    fn flip_and_excite_compact(&mut self) -> Result<()> {
        let residual = {
            self.compute_sector_weights();
            1.0 - self.weights[0]
        };
        if residual > self.config.residual_threshold() {
            return Err(SeedingError::ProtocolSequence {
                weight: residual,
                threshold: self.config.residual_threshold(),
            });
        }
        self.mode_buf.iter_mut().for_each(|a| *a = Complex64::new(0.0, 0.0));
        for idx in 0..self.dim {
            let amp = self.amps[idx];
            if amp.norm_sqr() == 0.0 || self.exc_count[idx] > 0 {
                continue;
            }
            let mut target = 0usize;
            for site in 0..self.n {
                let level = self.level(idx, site);
                let flipped = if level == C_GROUND { C_EXCITED } else { C_GROUND };
                target |= flipped << self.shifts[site];
            }
            self.mode_buf[target] = amp;
        }
        std::mem::swap(&mut self.amps, &mut self.mode_buf);
        self.renormalize()
    }

    /// Read out the atomic register as an N-qubit state (storage = |1⟩).
    fn extract_atoms(&self) -> Result<StateVector> {
        let layout = LevelLayout::uniform(self.n, 2);
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << self.n];
        let mut dropped = 0.0;
        for idx in 0..self.dim {
            let amp = self.amps[idx];
            if amp.norm_sqr() == 0.0 {
                continue;
            }
            if self.exc_count[idx] > 0 {
                dropped += amp.norm_sqr();
                continue;
            }
            let mut q = 0usize;
            for site in 0..self.n {
                if self.level(idx, site) == C_STORED {
                    q |= 1 << (self.n - 1 - site);
                }
            }
            amps[q] = amp;
        }
        if dropped > self.config.residual_threshold() {
            return Err(SeedingError::ProtocolSequence {
                weight: dropped,
                threshold: self.config.residual_threshold(),
            });
        }
        let mut state = StateVector::from_amplitudes(layout, amps)?;
        state.normalize()?;
        Ok(state)
    }

    /// Simulate one full protocol attempt.
    pub fn run<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<TrajectoryResult> {
        self.reset();
        let mut clicks = ClickRecord::new();
        for round in [1usize, 2] {
            let completed = self.run_round(round, &mut clicks, rng)?;
            if !completed {
                return Ok(TrajectoryResult {
                    clicks,
                    accepted: false,
                    leftover_rejected: true,
                    final_atoms: None,
                    correction: None,
                });
            }
            if round == 1 {
                self.flip_and_excite_compact()?;
            }
        }
        let atoms = self.extract_atoms()?;
        let accepted = accept_pattern(
            &clicks,
            self.n,
            self.config.target_m(),
            self.config.acceptance(),
        );
        let correction = if accepted {
            Some(correct_and_score(&atoms, &clicks, &self.network, &self.config)?)
        } else {
            None
        };
        Ok(TrajectoryResult {
            clicks,
            accepted,
            leftover_rejected: false,
            final_atoms: Some(atoms),
            correction,
        })
    }
}

/// Simulate one protocol attempt with a fresh engine.
pub fn run_trajectory<R: Rng + ?Sized>(
    config: &ProtocolConfig,
    rng: &mut R,
) -> Result<TrajectoryResult> {
    TrajectoryEngine::new(config)?.run(rng)
}

// ---------------------------------------------------------------------------
// Explicit 6-level operations. These spell the protocol out on full state
// vectors and exist to be read and to cross-check the engine; the engine never
// calls them.
// ---------------------------------------------------------------------------

/// Outcome of one explicit jump-sampling step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JumpSample {
    /// A photon reached a detector after `delay`; `recorded` is false when
    /// detection loss swallowed the click.
    Emitted { delay: f64, detector: usize, recorded: bool },
    /// The waiting-time draw fell below the asymptotic survival: no further
    /// emission this round. The state has been projected onto the drained
    /// subspace.
    Drained,
    /// A finite window closed before the sampled jump; the state has been
    /// evolved exactly to the window edge and still holds `excited_weight`.
    WindowClosed { excited_weight: f64 },
}

/// Product state (|0,0⟩ + |e,0⟩)^⊗N / 2^{N/2} on 6-level nodes.
pub fn build_initial_state(n: usize) -> Result<StateVector> {
    let layout = LevelLayout::uniform(n, NODE_LEVELS);
    let mut state = StateVector::zero(layout.clone());
    let amp = Complex64::new((1.0f64 / 2.0f64.powi(n as i32)).sqrt(), 0.0);
    let mut config = vec![0usize; n];
    for mask in 0..(1usize << n) {
        for (site, level) in config.iter_mut().enumerate() {
            *level = if mask & (1 << site) != 0 { 4 } else { 0 };
        }
        let idx = layout.basis_index(&config)?;
        state.amplitudes_mut()[idx] = amp;
    }
    Ok(state)
}

fn node_count(state: &StateVector) -> usize {
    state.layout().sites()
}

fn check_six_level(state: &StateVector) -> Result<()> {
    if state.layout().dims().iter().any(|&d| d != NODE_LEVELS) {
        return Err(SeedingError::InvariantViolation(
            "operation expects 6-level nodes".into(),
        ));
    }
    Ok(())
}

/// Weight on components with no photons and no excited atoms.
pub fn drained_weight(state: &StateVector) -> Result<f64> {
    check_six_level(state)?;
    let n = node_count(state);
    let layout = state.layout().clone();
    let mut w = 0.0;
    for (idx, amp) in state.amplitudes().iter().enumerate() {
        let drained = (0..n).all(|s| matches!(layout.level_at(idx, s), 0 | 2));
        if drained {
            w += amp.norm_sqr();
        }
    }
    Ok(w)
}

/// Project onto the drained subspace (the t → ∞ limit of the conditional
/// evolution) and renormalize.
pub fn project_drained(state: &mut StateVector) -> Result<()> {
    check_six_level(state)?;
    let n = node_count(state);
    let layout = state.layout().clone();
    for (idx, amp) in state.amplitudes_mut().iter_mut().enumerate() {
        let drained = (0..n).all(|s| matches!(layout.level_at(idx, s), 0 | 2));
        if !drained {
            *amp = Complex64::new(0.0, 0.0);
        }
    }
    state.normalize()?;
    Ok(())
}

/// Evolve a normalized state by the exact conditional propagator.
pub fn propagate(state: &mut StateVector, span: f64, p: &CavityParams) -> Result<()> {
    check_six_level(state)?;
    for site in 0..node_count(state) {
        apply_local(state, &conditional_propagator(site, span, p))?;
    }
    Ok(())
}

/// Solve ‖E(t)ψ‖² = u for the waiting time by bisection. `None` means the
/// survival never drops to u (the register drains without another emission).
/// Expects a normalized state.
pub fn sample_jump_time(state: &StateVector, u: f64, p: &CavityParams) -> Result<Option<f64>> {
    check_six_level(state)?;
    let floor = drained_weight(state)?;
    if u <= floor {
        return Ok(None);
    }
    let survival = |t: f64| -> Result<f64> {
        let mut probe = state.clone();
        propagate(&mut probe, t, p)?;
        Ok(probe.norm_sq())
    };
    let mut hi = 1.0 / p.kappa();
    let mut doublings = 0;
    while survival(hi)? > u {
        hi *= 2.0;
        doublings += 1;
        if doublings > 128 {
            return Err(SeedingError::InvariantViolation(
                "failed to bracket the jump time".into(),
            ));
        }
    }
    let mut lo = 0.0;
    while hi - lo > JUMP_TIME_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if survival(mid)? > u {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}

/// Norm² of â_i ψ for each detector mode.
pub fn detector_probabilities(state: &StateVector, network: &DetectorNetwork) -> Result<Vec<f64>> {
    check_six_level(state)?;
    let n = node_count(state);
    if network.ports() != n {
        return Err(SeedingError::InvariantViolation(format!(
            "network has {} ports for {} nodes",
            network.ports(),
            n
        )));
    }
    let reduced = reduced_vectors(state);
    let scale = 1.0 / (n as f64).sqrt();
    let dim = state.layout().total_dim();
    let mut probs = vec![0.0; n];
    for (i, prob) in probs.iter_mut().enumerate() {
        let mut p = 0.0;
        for idx in 0..dim {
            let mut v = Complex64::new(0.0, 0.0);
            for (j, row) in reduced.iter().enumerate() {
                v += network.sign(i, j) as f64 * scale * row[idx];
            }
            p += v.norm_sqr();
        }
        *prob = p;
    }
    Ok(probs)
}

/// ĉ_j ψ for every node: photon occupation lowered by one, nodes without a
/// photon contribute nothing.
fn reduced_vectors(state: &StateVector) -> Vec<Vec<Complex64>> {
    let n = node_count(state);
    let layout = state.layout().clone();
    let dim = layout.total_dim();
    let mut rows = vec![vec![Complex64::new(0.0, 0.0); dim]; n];
    for (idx, amp) in state.amplitudes().iter().enumerate() {
        if amp.norm_sqr() == 0.0 {
            continue;
        }
        for (site, row) in rows.iter_mut().enumerate() {
            let level = layout.level_at(idx, site);
            if level % 2 == 1 {
                row[idx - layout.stride(site)] = *amp;
            }
        }
    }
    rows
}

/// Replace ψ with the renormalized post-click state â_i ψ; returns the click
/// weight ‖â_i ψ‖².
pub fn apply_detector_mode(
    state: &mut StateVector,
    network: &DetectorNetwork,
    detector: usize,
) -> Result<f64> {
    check_six_level(state)?;
    let n = node_count(state);
    if detector >= n {
        return Err(SeedingError::DetectorOutOfRange { detector, n });
    }
    let reduced = reduced_vectors(state);
    let scale = 1.0 / (n as f64).sqrt();
    let dim = state.layout().total_dim();
    let mut weight = 0.0;
    {
        let amps = state.amplitudes_mut();
        for idx in 0..dim {
            let mut v = Complex64::new(0.0, 0.0);
            for (j, row) in reduced.iter().enumerate() {
                v += network.sign(detector, j) as f64 * scale * row[idx];
            }
            weight += v.norm_sqr();
            amps[idx] = v;
        }
    }
    state.normalize()?;
    Ok(weight)
}

/// One explicit jump step: sample the waiting time from `u_time = rng.gen()`,
/// stop at `window` if the jump falls beyond it, otherwise evolve, pick the
/// detector, apply the mode, and decide whether the click is recorded.
/// Mirrors the engine's random-stream consumption exactly.
pub fn sample_and_apply_jump<R: Rng + ?Sized>(
    state: &mut StateVector,
    network: &DetectorNetwork,
    p: &CavityParams,
    efficiency: f64,
    window: Option<f64>,
    rng: &mut R,
) -> Result<JumpSample> {
    check_six_level(state)?;
    let u_time: f64 = rng.gen();
    let t = match sample_jump_time(state, u_time, p)? {
        None => {
            project_drained(state)?;
            return Ok(JumpSample::Drained);
        }
        Some(t) => t,
    };
    if let Some(w) = window {
        if t > w {
            propagate(state, w, p)?;
            state.normalize()?;
            let excited_weight = 1.0 - drained_weight(state)?;
            return Ok(JumpSample::WindowClosed { excited_weight });
        }
    }
    propagate(state, t, p)?;
    state.normalize()?;
    let probs = detector_probabilities(state, network)?;
    let total: f64 = probs.iter().sum();
    if total <= 0.0 {
        return Err(SeedingError::InvariantViolation("jump fired with zero photon weight".into()));
    }
    let u_det: f64 = rng.gen();
    let target = u_det * total;
    let mut acc = 0.0;
    let mut detector = node_count(state) - 1;
    for (i, &pi) in probs.iter().enumerate() {
        acc += pi;
        if target < acc {
            detector = i;
            break;
        }
    }
    apply_detector_mode(state, network, detector)?;
    let u_thin: f64 = rng.gen();
    Ok(JumpSample::Emitted { delay: t, detector, recorded: u_thin < efficiency })
}

/// Collective round-boundary flip on 6-level nodes: atom ground → excited,
/// storage → ground, excited → storage, photon occupation untouched. Requires
/// residual photon/excited weight at most `threshold`.
pub fn flip_and_excite(state: &mut StateVector, threshold: f64) -> Result<()> {
    check_six_level(state)?;
    let residual = 1.0 - drained_weight(state)? / state.norm_sq();
    if residual > threshold {
        return Err(SeedingError::ProtocolSequence { weight: residual, threshold });
    }
    let n = node_count(state);
    // Atom permutation g → e → s → g, acting as a relabeling level map
    // 2a + ph → 2σ(a) + ph.
    let map = [4usize, 5, 0, 1, 2, 3];
    let layout = state.layout().clone();
    let mut out = vec![Complex64::new(0.0, 0.0); layout.total_dim()];
    for (idx, amp) in state.amplitudes().iter().enumerate() {
        if amp.norm_sqr() == 0.0 {
            continue;
        }
        let mut target = 0usize;
        for site in 0..n {
            target += map[layout.level_at(idx, site)] * layout.stride(site);
        }
        out[target] = *amp;
    }
    state.amplitudes_mut().copy_from_slice(&out);
    Ok(())
}

/// Read the atomic register out of a drained 6-level state as qubits
/// (storage = |1⟩). Residual weight outside the drained subspace must not
/// exceed `threshold`.
pub fn extract_atom_state(state: &StateVector, threshold: f64) -> Result<StateVector> {
    check_six_level(state)?;
    let n = node_count(state);
    let layout = state.layout().clone();
    let qubit_layout = LevelLayout::uniform(n, 2);
    let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n];
    let mut dropped = 0.0;
    for (idx, amp) in state.amplitudes().iter().enumerate() {
        if amp.norm_sqr() == 0.0 {
            continue;
        }
        let mut q = 0usize;
        let mut ok = true;
        for site in 0..n {
            match layout.level_at(idx, site) {
                0 => {}
                2 => q |= 1 << (n - 1 - site),
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            amps[q] = *amp;
        } else {
            dropped += amp.norm_sqr();
        }
    }
    if dropped > threshold {
        return Err(SeedingError::ProtocolSequence { weight: dropped, threshold });
    }
    let mut out = StateVector::from_amplitudes(qubit_layout, amps)?;
    out.normalize()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::fidelity;
    use crate::seeding::AcceptanceMode;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Run the protocol with the explicit 6-level operations, consuming the
    /// random stream exactly as the engine does.
    fn run_trajectory_dense<R: Rng + ?Sized>(
        config: &ProtocolConfig,
        rng: &mut R,
    ) -> Result<TrajectoryResult> {
        let n = config.n();
        let network = DetectorNetwork::for_nodes(n)?;
        let p = *config.cavity();
        let eta = config.combined_efficiency();
        let mut state = build_initial_state(n)?;
        let mut clicks = ClickRecord::new();
        for round in [1usize, 2] {
            let mut tau = 0.0;
            loop {
                let window = config.round_window().map(|t_w| t_w - tau);
                match sample_and_apply_jump(&mut state, &network, &p, eta, window, rng)? {
                    JumpSample::Drained => break,
                    JumpSample::WindowClosed { excited_weight } => {
                        if excited_weight > config.residual_threshold() {
                            return Ok(TrajectoryResult {
                                clicks,
                                accepted: false,
                                leftover_rejected: true,
                                final_atoms: None,
                                correction: None,
                            });
                        }
                        project_drained(&mut state)?;
                        break;
                    }
                    JumpSample::Emitted { delay, detector, recorded } => {
                        tau += delay;
                        if recorded {
                            clicks.push(ClickEvent { round, detector, time: tau }, n)?;
                        }
                    }
                }
            }
            if round == 1 {
                flip_and_excite(&mut state, config.residual_threshold())?;
            }
        }
        let atoms = extract_atom_state(&state, config.residual_threshold())?;
        let accepted = accept_pattern(&clicks, n, config.target_m(), config.acceptance());
        let correction = if accepted {
            Some(correct_and_score(&atoms, &clicks, &network, config)?)
        } else {
            None
        };
        Ok(TrajectoryResult {
            clicks,
            accepted,
            leftover_rejected: false,
            final_atoms: Some(atoms),
            correction,
        })
    }

    #[test]
    fn initial_state_is_the_uniform_bright_dark_product() {
        let state = build_initial_state(3).unwrap();
        assert!((state.norm() - 1.0).abs() < 1e-14);
        let amp = state.amplitude(&[4, 0, 4]).unwrap();
        assert!((amp.re - 8f64.sqrt().recip()).abs() < 1e-14);
        assert_eq!(state.amplitude(&[1, 0, 0]).unwrap().norm(), 0.0);
    }

    #[test]
    fn two_node_detector_split_is_even_initially() {
        let p = CavityParams::default_protocol();
        let network = DetectorNetwork::for_nodes(2).unwrap();
        let mut state = build_initial_state(2).unwrap();
        propagate(&mut state, 1.3, &p).unwrap();
        let probs = detector_probabilities(&state, &network).unwrap();
        assert!((probs[0] - probs[1]).abs() < 1e-12);
        // Total photon weight equals the expected photon population.
        let mut photon_weight = 0.0;
        let layout = state.layout().clone();
        for (idx, amp) in state.amplitudes().iter().enumerate() {
            let photons: usize = (0..2).map(|s| layout.level_at(idx, s) % 2).sum();
            photon_weight += photons as f64 * amp.norm_sqr();
        }
        assert!((probs.iter().sum::<f64>() - photon_weight).abs() < 1e-12);
    }

    #[test]
    fn sampled_jump_times_invert_the_survival() {
        let p = CavityParams::default_protocol();
        let mut state = build_initial_state(2).unwrap();
        propagate(&mut state, 0.7, &p).unwrap();
        state.normalize().unwrap();
        for &u in &[0.9, 0.6, 0.4] {
            let t = sample_jump_time(&state, u, &p).unwrap().unwrap();
            let mut probe = state.clone();
            propagate(&mut probe, t, &p).unwrap();
            assert!((probe.norm_sq() - u).abs() < 1e-8, "u={u}");
        }
        // Below the drained weight there is no jump to find.
        let floor = drained_weight(&state).unwrap();
        assert!(sample_jump_time(&state, floor * 0.5, &p).unwrap().is_none());
    }

    #[test]
    fn flip_exchanges_ground_and_excited_roles() {
        let layout = LevelLayout::uniform(2, 6);
        // (|0,0⟩|1,0⟩ + |1,0⟩|0,0⟩)/√2: one node stored, one untouched.
        let mut state = StateVector::zero(layout.clone());
        let inv = Complex64::new(0.5f64.sqrt(), 0.0);
        let i1 = layout.basis_index(&[0, 2]).unwrap();
        let i2 = layout.basis_index(&[2, 0]).unwrap();
        state.amplitudes_mut()[i1] = inv;
        state.amplitudes_mut()[i2] = inv;
        flip_and_excite(&mut state, 1e-12).unwrap();
        let j1 = layout.basis_index(&[4, 0]).unwrap();
        let j2 = layout.basis_index(&[0, 4]).unwrap();
        assert!((state.amplitudes()[j1] - inv).norm() < 1e-15);
        assert!((state.amplitudes()[j2] - inv).norm() < 1e-15);
        assert!((state.norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn flip_refuses_undrained_registers() {
        let layout = LevelLayout::uniform(1, 6);
        let mut state = StateVector::basis(layout, &[4]).unwrap();
        assert!(matches!(
            flip_and_excite(&mut state, 1e-12),
            Err(SeedingError::ProtocolSequence { .. })
        ));
    }

    #[test]
    fn engine_reproduces_the_explicit_operations_click_for_click() {
        for n in [2usize, 4] {
            let config = ProtocolConfig::new(n)
                .unwrap()
                .with_detector_efficiency(0.8)
                .unwrap();
            let seeds = if n == 2 { 12 } else { 5 };
            for seed in 0..seeds as u64 {
                let mut rng_a = ChaCha8Rng::seed_from_u64(500 + seed);
                let mut rng_b = ChaCha8Rng::seed_from_u64(500 + seed);
                let dense = run_trajectory_dense(&config, &mut rng_a).unwrap();
                let fast = run_trajectory(&config, &mut rng_b).unwrap();
                assert_eq!(dense.accepted, fast.accepted, "n={n} seed={seed}");
                assert_eq!(
                    dense.clicks.events().len(),
                    fast.clicks.events().len(),
                    "n={n} seed={seed}"
                );
                for (a, b) in dense.clicks.events().iter().zip(fast.clicks.events()) {
                    assert_eq!(a.round, b.round);
                    assert_eq!(a.detector, b.detector);
                    assert!((a.time - b.time).abs() < 1e-7, "n={n} seed={seed}");
                }
                let sa = dense.final_atoms.as_ref().unwrap();
                let sb = fast.final_atoms.as_ref().unwrap();
                assert!(fidelity(sa, sb).unwrap() > 1.0 - 1e-9, "n={n} seed={seed}");
            }
        }
    }

    #[test]
    fn every_node_emits_exactly_once_at_unit_efficiency() {
        let config = ProtocolConfig::new(4).unwrap();
        let mut engine = TrajectoryEngine::new(&config).unwrap();
        for seed in 0..60u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(9000 + seed);
            let result = engine.run(&mut rng).unwrap();
            assert_eq!(result.clicks.events().len(), 4);
            assert!(!result.leftover_rejected);
            // Each round's clicks count the atoms that flipped to the
            // complementary register state.
            let r1 = result.clicks.round_count(1);
            let r2 = result.clicks.round_count(2);
            assert_eq!(r1 + r2, 4);
            let atoms = result.final_atoms.as_ref().unwrap();
            for (idx, amp) in atoms.amplitudes().iter().enumerate() {
                if amp.norm_sqr() > 1e-18 {
                    assert_eq!((idx as u32).count_ones() as usize, r2, "seed={seed}");
                }
            }
        }
    }

    #[test]
    fn zero_efficiency_records_nothing_but_still_drains() {
        let config = ProtocolConfig::new(2)
            .unwrap()
            .with_detector_efficiency(0.0)
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let result = run_trajectory(&config, &mut rng).unwrap();
        assert_eq!(result.clicks.events().len(), 0);
        assert!(!result.accepted);
        assert!(!result.leftover_rejected);
        // The register still ends in a definite atomic configuration.
        assert!(result.final_atoms.is_some());
    }

    #[test]
    fn tiny_windows_reject_most_trajectories() {
        let config = ProtocolConfig::new(2)
            .unwrap()
            .with_round_window(Some(0.05))
            .unwrap();
        let mut engine = TrajectoryEngine::new(&config).unwrap();
        let mut rejected = 0;
        for seed in 0..40u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let r = engine.run(&mut rng).unwrap();
            if r.leftover_rejected {
                rejected += 1;
            }
        }
        // At t_w = 0.05/κ essentially no excitation has drained.
        assert!(rejected >= 38, "only {rejected} of 40 rejected");
    }

    #[test]
    fn generous_windows_match_the_unwindowed_protocol() {
        let base = ProtocolConfig::new(2).unwrap();
        let windowed = ProtocolConfig::new(2).unwrap().with_round_window(Some(4000.0)).unwrap();
        for seed in 0..15u64 {
            let mut rng_a = ChaCha8Rng::seed_from_u64(7000 + seed);
            let mut rng_b = ChaCha8Rng::seed_from_u64(7000 + seed);
            let a = run_trajectory(&base, &mut rng_a).unwrap();
            let b = run_trajectory(&windowed, &mut rng_b).unwrap();
            assert_eq!(a.accepted, b.accepted);
            assert_eq!(a.clicks, b.clicks);
        }
    }

    #[test]
    fn accepted_four_node_runs_herald_perfect_w_states() {
        let config = ProtocolConfig::new(4)
            .unwrap()
            .with_acceptance(AcceptanceMode::Permissive);
        let mut engine = TrajectoryEngine::new(&config).unwrap();
        let mut seen = 0;
        for seed in 0..80u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(31000 + seed);
            let result = engine.run(&mut rng).unwrap();
            if let Some(report) = result.correction {
                seen += 1;
                assert!(
                    report.fidelity > 1.0 - 1e-9,
                    "corrected fidelity {} at seed {seed}",
                    report.fidelity
                );
            }
        }
        assert!(seen >= 20, "only {seen} accepted runs in 80 attempts");
    }
}
