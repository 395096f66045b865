//! Closed-form single-node conditional dynamics and a numeric integrator to
//! check them against.
//!
//! Under the non-Hermitian node Hamiltonian the pair of amplitudes
//! (excited-no-photon, storage-plus-photon) evolves autonomously:
//!
//! ```text
//!   d/dt (x_e, x_p) = (-i g/2 x_p, -i g/2 x_e - κ x_p)
//! ```
//!
//! with solutions built from `e^{ω± t}`, `ω± = (−κ ± √(κ²−g²))/2`. Everything
//! the trajectory engine needs between jumps follows from this 2×2 block; the
//! remaining node levels either sit still (no photon, no excitation) or decay
//! as `e^{−κt}` (photon present, no coupling partner).

use num_complex::Complex64;

use super::{CavityParams, Result, SeedingError};
use crate::hilbert::{LocalOperator, StateVector};

/// Conditional amplitudes of a node that started in `|e, 0⟩` at t = 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeAmplitudes {
    /// Amplitude remaining on `|e, 0⟩` (real, decays 1 → 0).
    pub excited: Complex64,
    /// Amplitude on `|1, 1⟩`, the storage state with the photon still in the
    /// cavity (purely imaginary, 0 → 0 with a single hump).
    pub photon: Complex64,
}

/// Closed-form node amplitudes at time `t` after excitation.
pub fn alpha_beta(t: f64, p: &CavityParams) -> NodeAmplitudes {
    let d = p.discriminant();
    let ep = (p.omega_plus() * t).exp();
    let em = (p.omega_minus() * t).exp();
    let excited = Complex64::new((p.omega_plus() * em - p.omega_minus() * ep) / d, 0.0);
    let photon = Complex64::new(0.0, -p.g() / (2.0 * d) * (ep - em));
    NodeAmplitudes { excited, photon }
}

/// Norm still in the excited/photon pair at time `t`: the probability that a
/// node excited at t = 0 has not yet emitted into the detector line.
pub fn survival_one(t: f64, p: &CavityParams) -> f64 {
    let a = alpha_beta(t, p);
    a.excited.norm_sqr() + a.photon.norm_sqr()
}

/// Emission rate `2κ |α(t)|²`; integrates to exactly 1 over t ∈ [0, ∞).
pub fn emission_density(t: f64, p: &CavityParams) -> f64 {
    2.0 * p.kappa() * alpha_beta(t, p).photon.norm_sqr()
}

/// Quadrature of the emission density over [0, horizon], robust to the hump
/// sitting anywhere on a long interval: adaptive Simpson on octave panels.
pub fn emission_total(p: &CavityParams, horizon: f64, tol: f64) -> f64 {
    let density = |t: f64| emission_density(t, p);
    let mut acc = 0.0;
    let mut lo = 0.0;
    let mut hi = 1.0 / p.kappa();
    while lo < horizon {
        let end = hi.min(horizon);
        acc += integrate_adaptive(&density, lo, end, tol);
        lo = end;
        hi *= 2.0;
    }
    acc
}

/// Exact conditional propagator for one 6-level node over a jump-free span.
///
/// Levels are ordered `2·atom + photon` with atom 0 = ground, 1 = storage,
/// 2 = excited: `|0,0⟩, |0,1⟩, |1,0⟩, |1,1⟩, |e,0⟩, |e,1⟩`. The matrix is the
/// identity on the photonless uncoupled levels, `e^{−κt}` on the spectator
/// photon levels, and the symmetric 2×2 block on `(|1,1⟩, |e,0⟩)`.
// Indices below spell out row * 6 + col so the matrix reads like the level
// table above.
#[allow(clippy::erasing_op, clippy::identity_op)]
pub fn conditional_propagator(site: usize, t: f64, p: &CavityParams) -> LocalOperator {
    let d = p.discriminant();
    let ep = (p.omega_plus() * t).exp();
    let em = (p.omega_minus() * t).exp();
    let a = alpha_beta(t, p);
    // Photon amplitude staying put when the node starts in |1,1⟩.
    let photon_stay = Complex64::new((p.omega_plus() * ep - p.omega_minus() * em) / d, 0.0);
    let decay = Complex64::new((-p.kappa() * t).exp(), 0.0);
    let one = Complex64::new(1.0, 0.0);

    let mut m = [Complex64::new(0.0, 0.0); 36];
    m[0 * 6 + 0] = one;
    m[2 * 6 + 2] = one;
    m[1 * 6 + 1] = decay;
    m[5 * 6 + 5] = decay;
    m[3 * 6 + 3] = photon_stay;
    m[4 * 6 + 4] = a.excited;
    m[3 * 6 + 4] = a.photon;
    m[4 * 6 + 3] = a.photon;
    LocalOperator::single(site, 6, m.to_vec()).expect("6x6 block is well formed")
}

/// Integrate the conditional Schrödinger equation numerically (classic
/// fixed-step fourth-order Runge-Kutta, step ≤ 0.002/κ) on a register of
/// 6-level nodes. Deliberately independent of the closed forms above so the
/// two routes cross-check each other.
pub fn evolve_conditional(state: &mut StateVector, dt: f64, p: &CavityParams) -> Result<()> {
    if dt < 0.0 {
        return Err(SeedingError::InvariantViolation(format!("negative evolution span {dt}")));
    }
    if state.layout().dims().iter().any(|&d| d != 6) {
        return Err(SeedingError::InvariantViolation(
            "conditional evolution expects 6-level nodes".into(),
        ));
    }
    if dt == 0.0 {
        return Ok(());
    }
    let steps = (dt * p.kappa() / 0.002).ceil().max(1.0) as usize;
    let h = dt / steps as f64;
    let layout = state.layout().clone();
    let dim = layout.total_dim();
    let n = layout.sites();

    let mut k1 = vec![Complex64::new(0.0, 0.0); dim];
    let mut k2 = k1.clone();
    let mut k3 = k1.clone();
    let mut k4 = k1.clone();
    let mut stage = k1.clone();

    // y' = -i H y, accumulated node by node.
    let deriv = |y: &[Complex64], out: &mut [Complex64]| {
        let half_g = Complex64::new(0.0, -p.g() / 2.0);
        let kappa = p.kappa();
        for v in out.iter_mut() {
            *v = Complex64::new(0.0, 0.0);
        }
        for idx in 0..dim {
            let mut photons = 0usize;
            for site in 0..n {
                let level = layout.level_at(idx, site);
                photons += level & 1;
                let stride = layout.stride(site);
                match level {
                    3 => out[idx] += half_g * y[idx + stride],
                    4 => out[idx] += half_g * y[idx - stride],
                    _ => {}
                }
            }
            out[idx] -= Complex64::new(kappa * photons as f64, 0.0) * y[idx];
        }
    };

    for _ in 0..steps {
        let y = state.amplitudes_mut();
        deriv(y, &mut k1);
        for i in 0..dim {
            stage[i] = y[i] + 0.5 * h * k1[i];
        }
        deriv(&stage, &mut k2);
        for i in 0..dim {
            stage[i] = y[i] + 0.5 * h * k2[i];
        }
        deriv(&stage, &mut k3);
        for i in 0..dim {
            stage[i] = y[i] + h * k3[i];
        }
        deriv(&stage, &mut k4);
        for i in 0..dim {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    Ok(())
}

/// Adaptive Simpson quadrature. Used by tests and the self-check suite to
/// integrate emission densities without reference to the closed-form algebra
/// being verified.
pub fn integrate_adaptive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(a: f64, fa: f64, b: f64, fb: f64, fm: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(a, fa, m, fm, flm);
        let right = simpson(m, fm, b, fb, frm);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, fa, m, fm, flm, left, tol / 2.0, depth - 1)
                + recurse(f, m, fm, b, fb, frm, right, tol / 2.0, depth - 1)
        }
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson(a, fa, b, fb, fm);
    recurse(f, a, fa, b, fb, fm, whole, tol, 48)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::LevelLayout;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params() -> CavityParams {
        CavityParams::new(0.5, 1.0).unwrap()
    }

    #[test]
    fn amplitudes_start_excited_and_drain() {
        let p = params();
        let a0 = alpha_beta(0.0, &p);
        assert!((a0.excited - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        assert!(a0.photon.norm() < 1e-15);
        let late = alpha_beta(400.0, &p);
        assert!(late.excited.norm() < 1e-11);
        assert!(late.photon.norm() < 1e-11);
        // The photon amplitude is purely imaginary throughout.
        for i in 1..50 {
            let a = alpha_beta(0.3 * i as f64, &p);
            assert!(a.photon.re.abs() < 1e-15);
            assert!(a.excited.im.abs() < 1e-15);
        }
    }

    #[test]
    fn closed_forms_satisfy_the_coupled_odes() {
        let p = CavityParams::new(0.8, 1.1).unwrap();
        let h = 1e-5;
        for &t in &[0.1, 0.5, 1.7, 4.0, 9.3] {
            let a = alpha_beta(t, &p);
            let plus = alpha_beta(t + h, &p);
            let minus = alpha_beta(t - h, &p);
            let de = (plus.excited - minus.excited) / (2.0 * h);
            let dp = (plus.photon - minus.photon) / (2.0 * h);
            let rhs_e = Complex64::new(0.0, -p.g() / 2.0) * a.photon;
            let rhs_p = Complex64::new(0.0, -p.g() / 2.0) * a.excited
                - Complex64::new(p.kappa(), 0.0) * a.photon;
            assert!((de - rhs_e).norm() < 1e-9, "excited ODE residual at t={t}");
            assert!((dp - rhs_p).norm() < 1e-9, "photon ODE residual at t={t}");
        }
    }

    #[test]
    fn every_excitation_eventually_emits() {
        // One photon per excited atom: the emission density is a probability
        // density over time. Checked by quadrature, not by the same algebra.
        for (g, kappa) in [(0.5, 1.0), (0.2, 1.0), (0.9, 1.0), (0.5, 2.5)] {
            let p = CavityParams::new(g, kappa).unwrap();
            let horizon = 60.0 / p.omega_plus().abs();
            let total = emission_total(&p, horizon, 1e-10);
            assert!((total - 1.0).abs() < 1e-6, "emission total {total} for g={g}, kappa={kappa}");
        }
    }

    #[test]
    fn survival_equals_one_minus_emitted_weight() {
        let p = params();
        for &t in &[0.5, 2.0, 8.0, 20.0] {
            let emitted = integrate_adaptive(&|s| emission_density(s, &p), 0.0, t, 1e-10);
            assert!((survival_one(t, &p) - (1.0 - emitted)).abs() < 1e-8);
        }
    }

    #[test]
    fn propagator_forms_a_semigroup() {
        let p = params();
        let layout = LevelLayout::uniform(1, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let amps: Vec<Complex64> = (0..6)
            .map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
            .collect();
        let mut simple = StateVector::from_amplitudes(layout.clone(), amps.clone()).unwrap();
        simple.normalize().unwrap();
        let mut split = simple.clone();

        crate::hilbert::apply_local(&mut simple, &conditional_propagator(0, 3.1, &p)).unwrap();
        crate::hilbert::apply_local(&mut split, &conditional_propagator(0, 1.2, &p)).unwrap();
        crate::hilbert::apply_local(&mut split, &conditional_propagator(0, 1.9, &p)).unwrap();
        for (a, b) in simple.amplitudes().iter().zip(split.amplitudes()) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn spectator_photon_levels_decay_exponentially() {
        let p = params();
        let layout = LevelLayout::uniform(1, 6);
        for level in [1usize, 5] {
            let mut state = StateVector::basis(layout.clone(), &[level]).unwrap();
            crate::hilbert::apply_local(&mut state, &conditional_propagator(0, 2.0, &p)).unwrap();
            let expected = (-p.kappa() * 2.0).exp();
            assert!((state.amplitudes()[level].re - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn numeric_integration_reproduces_the_closed_forms() {
        let p = params();
        let layout = LevelLayout::uniform(1, 6);
        let mut state = StateVector::basis(layout.clone(), &[4]).unwrap();
        let mut t = 0.0;
        let mut worst = 0.0f64;
        while t < 40.0 {
            let step = 2.5;
            evolve_conditional(&mut state, step, &p).unwrap();
            t += step;
            let a = alpha_beta(t, &p);
            worst = worst.max((state.amplitudes()[4] - a.excited).norm());
            worst = worst.max((state.amplitudes()[3] - a.photon).norm());
        }
        assert!(worst < 1e-9, "numeric-vs-closed-form deviation {worst}");
    }

    #[test]
    fn numeric_integration_matches_propagator_on_two_nodes() {
        let p = params();
        let layout = LevelLayout::uniform(2, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        // Random state over the protocol-reachable levels (|e,1⟩ never gets
        // populated between jumps, so leave it empty).
        let amps: Vec<Complex64> = (0..36)
            .map(|i| {
                let reachable = layout.level_at(i, 0) != 5 && layout.level_at(i, 1) != 5;
                if reachable {
                    Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect();
        let mut numeric = StateVector::from_amplitudes(layout.clone(), amps).unwrap();
        numeric.normalize().unwrap();
        let mut exact = numeric.clone();

        evolve_conditional(&mut numeric, 3.0, &p).unwrap();
        for site in 0..2 {
            crate::hilbert::apply_local(&mut exact, &conditional_propagator(site, 3.0, &p))
                .unwrap();
        }
        for (a, b) in numeric.amplitudes().iter().zip(exact.amplitudes()) {
            assert!((a - b).norm() < 1e-10);
        }
        assert!(numeric.norm() <= 1.0 + 1e-12);
    }
}
