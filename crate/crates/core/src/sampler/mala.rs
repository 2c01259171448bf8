//! Metropolis-adjusted Langevin steps with a fixed diagonal preconditioner.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{BimaError, Result};

/// Log-density and gradient at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Eval {
    pub lp: f64,
    pub grad: DVector<f64>,
}

/// Result of one MALA transition.
#[derive(Debug, Clone)]
pub struct MalaStep {
    pub theta: DVector<f64>,
    pub eval: Eval,
    pub accepted: bool,
}

fn log_q(to: &DVector<f64>, from: &DVector<f64>, grad_from: &DVector<f64>, step: f64, precond: &DVector<f64>) -> f64 {
    let h2 = step * step;
    let mut acc = 0.0;
    for l in 0..to.len() {
        let mean = from[l] + 0.5 * h2 * precond[l] * grad_from[l];
        let d = to[l] - mean;
        acc += d * d / precond[l];
    }
    -acc / (2.0 * h2)
}

/// One MALA transition from `theta` (with cached `current` evaluation).
///
/// Proposal: `θ* = θ + (h²/2) m ⊙ ∇ + h √m ⊙ z`. A non-finite density at the
/// proposal is a rejection; a non-finite density at `theta` is an error.
pub fn mala_step<F, R>(
    theta: &DVector<f64>,
    current: &Eval,
    mut target: F,
    step: f64,
    precond: &DVector<f64>,
    rng: &mut R,
) -> Result<MalaStep>
where
    F: FnMut(&DVector<f64>) -> Eval,
    R: Rng + ?Sized,
{
    if !(step > 0.0) {
        return Err(BimaError::InvalidArgument(format!("MALA step must be positive, got {step}")));
    }
    if !current.lp.is_finite() || current.grad.iter().any(|g| !g.is_finite()) {
        return Err(BimaError::InvalidState("non-finite log-density at the current state".into()));
    }
    let h2 = step * step;
    let proposal = DVector::from_fn(theta.len(), |l, _| {
        let z: f64 = rng.sample(StandardNormal);
        theta[l] + 0.5 * h2 * precond[l] * current.grad[l] + step * precond[l].sqrt() * z
    });
    let prop_eval = target(&proposal);
    let u: f64 = rng.random();
    if !prop_eval.lp.is_finite() || prop_eval.grad.iter().any(|g| !g.is_finite()) {
        return Ok(MalaStep {
            theta: theta.clone(),
            eval: current.clone(),
            accepted: false,
        });
    }
    let log_ratio = prop_eval.lp - current.lp + log_q(theta, &proposal, &prop_eval.grad, step, precond)
        - log_q(&proposal, theta, &current.grad, step, precond);
    if u.ln() < log_ratio {
        Ok(MalaStep {
            theta: proposal,
            eval: prop_eval,
            accepted: true,
        })
    } else {
        Ok(MalaStep {
            theta: theta.clone(),
            eval: current.clone(),
            accepted: false,
        })
    }
}

/// Multiplicative step update: `step · exp(rate · (accept − target))`.
pub fn adapt_step(step: f64, recent_accept: f64, target: f64, rate: f64) -> f64 {
    step * (rate * (recent_accept - target)).exp()
}

/// Default per-region acceptance target, `clamp(scale / L, 0.2, 0.4)`.
pub fn default_target(n_basis: usize, scale: f64) -> f64 {
    (scale / n_basis.max(1) as f64).clamp(0.2, 0.4)
}
