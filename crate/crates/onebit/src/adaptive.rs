//! Online threshold learning: estimate the positive-output rate by a
//! damped average and steer the threshold toward a target rate, one
//! measurement at a time.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::model::{derive_seed, sample_matrix, streams};

/// Parameters of the learning rule.
///
/// `delta = 0` is allowed and freezes the threshold at `lambda0`, which
/// reduces the run to the fixed strategy (useful as a consistency check).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptiveParams {
    /// Target positive-output rate `T`.
    pub target_t: f64,
    /// Damping factor of the running average.
    pub gamma: f64,
    /// Threshold step size per measurement.
    pub delta: f64,
    /// Initial threshold.
    pub lambda0: f64,
}

impl Default for AdaptiveParams {
    fn default() -> Self {
        Self {
            target_t: 0.8,
            gamma: 0.8,
            delta: 0.01,
            lambda0: 0.5,
        }
    }
}

impl AdaptiveParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.target_t > 0.0 && self.target_t < 1.0) {
            return Err(Error::Domain(format!(
                "adaptive: target_t = {} outside (0,1)",
                self.target_t
            )));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Domain(format!(
                "adaptive: gamma = {} outside (0,1)",
                self.gamma
            )));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::Domain(format!(
                "adaptive: delta = {} must be finite and >= 0",
                self.delta
            )));
        }
        if !self.lambda0.is_finite() {
            return Err(Error::Domain("adaptive: non-finite lambda0".into()));
        }
        Ok(())
    }
}

/// Running state of the learner.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveState {
    /// Measurement counter.
    pub k: usize,
    /// Damped count of positive outputs.
    pub u_acc: f64,
    /// Damped total weight.
    pub v_acc: f64,
    /// Current estimate `u_acc / v_acc` of the positive rate.
    pub t_est: f64,
    /// Threshold to be used by the next measurement.
    pub lambda: f64,
}

impl AdaptiveState {
    pub fn new(lambda0: f64) -> Self {
        Self {
            k: 0,
            u_acc: 0.0,
            v_acc: 0.0,
            t_est: 0.0,
            lambda: lambda0,
        }
    }
}

/// One measurement followed by the estimator and threshold updates.
///
/// The measurement uses the threshold carried in by the state (i.e. the
/// one produced after the previous step); the threshold update happens
/// last. Returns the measured sign and the updated state.
pub fn adaptive_step(
    state: &AdaptiveState,
    phi_row: &[f64],
    x0: &[f64],
    params: &AdaptiveParams,
) -> Result<(i8, AdaptiveState)> {
    if phi_row.len() != x0.len() {
        return Err(Error::Dimension(format!(
            "adaptive_step: row length {} vs signal length {}",
            phi_row.len(),
            x0.len()
        )));
    }
    let mut next = state.clone();
    let y: i8 = if dot(phi_row, x0) + state.lambda >= 0.0 {
        1
    } else {
        -1
    };
    next.k += 1;
    next.u_acc = (if y > 0 { 1.0 } else { 0.0 }) + params.gamma * state.u_acc;
    next.v_acc = 1.0 + params.gamma * state.v_acc;
    next.t_est = next.u_acc / next.v_acc;
    // sign(0) := 0 here: an exact hit leaves the threshold alone rather
    // than entering a +-delta limit cycle.
    let diff = params.target_t - next.t_est;
    if diff > 0.0 {
        next.lambda += params.delta;
    } else if diff < 0.0 {
        next.lambda -= params.delta;
    }
    Ok((y, next))
}

/// Damped positive-output average computed directly from the history:
/// `T = sum_n gamma^n [y_{last-n} = +1] / sum_n gamma^n`.
///
/// Reference oracle for the online recursion in [`adaptive_step`].
pub fn batch_t(y_history: &[i8], gamma: f64) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    let mut g = 1.0;
    for &y in y_history.iter().rev() {
        if y > 0 {
            num += g;
        }
        den += g;
        g *= gamma;
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Warm-start search for the initial threshold by probing.
///
/// Measures a batch of `probe_size` outputs at the current threshold; if
/// they are all `+1` the threshold is halved (toward zero), if all `-1`
/// it is doubled (or stepped away from zero by `max(step_hint, 0.01)` in
/// the direction the batch indicates). Stops as soon as a batch contains
/// both signs, or after 30 rounds.
///
/// Probe measurements are extra draws from the oracle and are not reused
/// for reconstruction.
pub fn probe_init_lambda<F>(
    mut measure_oracle: F,
    lambda_seed: f64,
    probe_size: usize,
    step_hint: f64,
) -> Result<f64>
where
    F: FnMut(f64) -> Result<i8>,
{
    if probe_size < 4 {
        return Err(Error::Domain(format!(
            "probe_init_lambda: probe_size = {probe_size} < 4"
        )));
    }
    let mut lambda = lambda_seed;
    for _ in 0..30 {
        let mut plus = false;
        let mut minus = false;
        for _ in 0..probe_size {
            if measure_oracle(lambda)? > 0 {
                plus = true;
            } else {
                minus = true;
            }
        }
        if plus && minus {
            return Ok(lambda);
        }
        let escalation = step_hint.max(0.01);
        if plus {
            // outputs saturated at +1: shrink toward zero / go negative
            lambda = if lambda == 0.0 {
                -escalation
            } else {
                lambda / 2.0
            };
        } else {
            // saturated at -1: grow (or step positive from zero)
            lambda = if lambda == 0.0 {
                escalation
            } else {
                lambda * 2.0
            };
        }
    }
    Ok(lambda)
}

/// Everything produced by a full adaptive measurement run.
#[derive(Debug, Clone)]
pub struct AdaptiveRun {
    pub y: Vec<i8>,
    /// Threshold used at each measurement (before that step's update).
    pub lambda_vec: Vec<f64>,
    /// Estimator trajectory after each step, for trace logs.
    pub t_series: Vec<f64>,
    pub phi: Matrix,
}

/// Run the learner for `m` measurements against a fresh Gaussian
/// measurement matrix drawn from the instance seed's matrix substream.
pub fn run_adaptive(x0: &[f64], m: usize, params: &AdaptiveParams, seed: u64) -> Result<AdaptiveRun> {
    params.validate()?;
    if x0.is_empty() || m == 0 {
        return Err(Error::Domain("run_adaptive: empty problem".into()));
    }
    let phi = sample_matrix(m, x0.len(), derive_seed(seed, streams::MATRIX))?;
    let mut state = AdaptiveState::new(params.lambda0);
    let mut y = Vec::with_capacity(m);
    let mut lambda_vec = Vec::with_capacity(m);
    let mut t_series = Vec::with_capacity(m);
    for k in 0..m {
        lambda_vec.push(state.lambda);
        let (yk, next) = adaptive_step(&state, phi.row(k), x0, params)?;
        y.push(yk);
        t_series.push(next.t_est);
        state = next;
    }
    Ok(AdaptiveRun {
        y,
        lambda_vec,
        t_series,
        phi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        measure, sample_signal, sample_thresholds, SignalModel, ThresholdStrategy,
    };
    use rand::Rng;

    fn params(t: f64, gamma: f64, delta: f64, lambda0: f64) -> AdaptiveParams {
        AdaptiveParams {
            target_t: t,
            gamma,
            delta,
            lambda0,
        }
    }

    #[test]
    fn first_step_recursion() {
        let p = params(0.8, 0.8, 0.05, 1.0);
        let s = AdaptiveState::new(1.0);
        // phi.x0 = 2 > 0 so y = +1
        let (y, s1) = adaptive_step(&s, &[1.0], &[2.0], &p).unwrap();
        assert_eq!(y, 1);
        assert_eq!(s1.u_acc, 1.0);
        assert_eq!(s1.v_acc, 1.0);
        assert_eq!(s1.t_est, 1.0);
        // T = 0.8 < 1 so lambda decreases by delta
        assert!((s1.lambda - (1.0 - 0.05)).abs() < 1e-15);

        let (y2, s2) = adaptive_step(&s1, &[1.0], &[2.0], &p).unwrap();
        assert_eq!(y2, 1);
        assert!((s2.u_acc - 1.8).abs() < 1e-15);
        assert!((s2.v_acc - 1.8).abs() < 1e-15);
        assert!((s2.t_est - 1.0).abs() < 1e-15);
    }

    #[test]
    fn exact_hit_freezes_threshold() {
        // with gamma = 0.5 and history (+1, -1, +1, ...) choose target so
        // t_est == target exactly: easier to force via all +1 and T = 1?
        // T must be < 1; instead drive t_est to 0.5 with alternating signs
        // won't hit exactly. Use a two-step construction: U/V = 1/(1+g)
        let g = 0.5;
        let p = params(1.0 / (1.0 + g), g, 0.1, 0.0);
        let s = AdaptiveState::new(0.0);
        // step 1: y = -1 (phi.x0 + 0 < 0)
        let (_, s1) = adaptive_step(&s, &[1.0], &[-1.0], &p).unwrap();
        // step 2: y = +1 -> U = 1, V = 1 + g, t_est = 1/(1+g) = target
        let lam_before = s1.lambda;
        let (_, s2) = adaptive_step(&s1, &[1.0], &[5.0], &p).unwrap();
        assert!((s2.t_est - p.target_t).abs() < 1e-15);
        assert_eq!(s2.lambda, lam_before);
    }

    #[test]
    fn online_matches_batch_formula() {
        let mut rng = crate::model::rng_from(12345);
        for &gamma in &[0.5, 0.8, 0.95] {
            let p = params(0.7, gamma, 0.01, 0.2);
            let mut state = AdaptiveState::new(p.lambda0);
            let mut hist: Vec<i8> = Vec::new();
            for _ in 0..1000 {
                // random signal sign stream via random +-1 signals
                let v: f64 = rng.random::<f64>() - 0.5;
                let (y, next) = adaptive_step(&state, &[1.0], &[v * 10.0], &p).unwrap();
                hist.push(y);
                assert!(
                    (next.t_est - batch_t(&hist, gamma)).abs() < 1e-12,
                    "k = {}, gamma = {gamma}",
                    hist.len()
                );
                state = next;
            }
        }
    }

    #[test]
    fn batch_t_edge_values() {
        assert_eq!(batch_t(&[1, 1, 1, 1], 0.8), 1.0);
        assert_eq!(batch_t(&[-1, -1, -1], 0.8), 0.0);
        // single +1 most recent, gamma = 0.5, two samples: 1/(1+0.5)
        assert!((batch_t(&[-1, 1], 0.5) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn lambda_walk_is_bounded() {
        let p = params(0.8, 0.8, 0.03, 0.5);
        let model = SignalModel::new(0.25, 1.0).unwrap();
        let x0 = sample_signal(32, &model, 5).unwrap();
        let run = run_adaptive(&x0, 200, &p, 6).unwrap();
        for (k, lam) in run.lambda_vec.iter().enumerate() {
            assert!((lam - p.lambda0).abs() <= k as f64 * p.delta + 1e-12);
        }
    }

    #[test]
    fn steering_direction() {
        let p = params(0.8, 0.8, 0.05, 0.0);
        let model = SignalModel::new(0.25, 1.0).unwrap();
        let x0 = sample_signal(32, &model, 15).unwrap();
        let phi = sample_matrix(300, 32, 16).unwrap();
        let mut state = AdaptiveState::new(p.lambda0);
        for k in 0..300 {
            let before = state.lambda;
            let (_, next) = adaptive_step(&state, phi.row(k), &x0, &p).unwrap();
            if next.t_est < p.target_t {
                assert!(next.lambda >= before);
            } else if next.t_est > p.target_t {
                assert!(next.lambda <= before);
            }
            state = next;
        }
    }

    #[test]
    fn zero_step_reduces_to_fixed_strategy() {
        let model = SignalModel::new(0.25, 2.0).unwrap();
        let x0 = sample_signal(24, &model, 77).unwrap();
        let p = params(0.8, 0.8, 0.0, 0.37);
        let seed = 901;
        let run = run_adaptive(&x0, 50, &p, seed).unwrap();
        assert!(run.lambda_vec.iter().all(|&l| l == 0.37));

        let phi = sample_matrix(50, 24, derive_seed(seed, streams::MATRIX)).unwrap();
        assert_eq!(phi, run.phi);
        let lam = sample_thresholds(
            &ThresholdStrategy::Fixed { lambda: 0.37 },
            50,
            derive_seed(seed, streams::THRESHOLDS),
        )
        .unwrap();
        let y = measure(&phi, &x0, &lam).unwrap();
        assert_eq!(y, run.y);
    }

    #[test]
    fn probe_returns_seed_when_mixed() {
        let mut flip = false;
        let lam = probe_init_lambda(
            |_| {
                flip = !flip;
                Ok(if flip { 1 } else { -1 })
            },
            0.8,
            8,
            0.01,
        )
        .unwrap();
        assert_eq!(lam, 0.8);
    }

    #[test]
    fn probe_halves_until_threshold_small() {
        // oracle: all +1 while lambda > 0.1, mixed afterwards
        let mut flip = false;
        let lam = probe_init_lambda(
            |l| {
                if l > 0.1 {
                    Ok(1)
                } else {
                    flip = !flip;
                    Ok(if flip { 1 } else { -1 })
                }
            },
            0.8,
            8,
            0.01,
        )
        .unwrap();
        assert!(lam <= 0.1, "lambda = {lam}");
        assert!(lam > 0.0);
    }

    #[test]
    fn probe_escapes_zero_seed() {
        // all -1 at any threshold below 0.5: from seed 0 must step positive
        let lam = probe_init_lambda(|l| Ok(if l >= 0.5 { 1 } else { -1 }), 0.0, 4, 0.02).unwrap();
        assert!(lam > 0.0);
    }

    #[test]
    fn probe_on_synthetic_model_gives_mixed_batches() {
        let model = SignalModel::new(0.0625, 2.0).unwrap();
        let x0 = sample_signal(128, &model, 31).unwrap();
        let mut rng_seed = 0u64;
        let mut oracle = |lam: f64| -> Result<i8> {
            rng_seed += 1;
            let row = sample_matrix(1, 128, derive_seed(4242, rng_seed))?;
            Ok(if dot(row.row(0), &x0) + lam >= 0.0 { 1 } else { -1 })
        };
        let lam0 = probe_init_lambda(&mut oracle, 0.8, 16, 0.01).unwrap();
        // fresh batch at the returned lambda must have both signs present
        // with overwhelming probability
        let mut plus = 0;
        for _ in 0..64 {
            if oracle(lam0).unwrap() > 0 {
                plus += 1;
            }
        }
        assert!(plus > 0 && plus < 64, "positive count {plus}");
    }

    #[test]
    fn probe_rejects_tiny_batches() {
        assert!(probe_init_lambda(|_| Ok(1), 0.5, 3, 0.01).is_err());
    }
}
