//! Posterior sampling for the outcome and mediator models.
//!
//! Spatial coefficient fields are updated region by region with MALA; every
//! other parameter has a conjugate full conditional and is drawn by Gibbs.

mod lasso;
mod mala;
mod mediator;
mod outcome;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::kernel_basis::BasisSet;
use crate::sem_model::Priors;
use crate::stgp::eval_field;

pub use lasso::{lasso_coordinate_descent, lasso_lambda_max, LassoFit};
pub use mala::{adapt_step, default_target, mala_step, Eval, MalaStep};
pub use mediator::{
    eta_unconstrained_draw, gibbs_eta_constrained, gibbs_mediator_variances, gibbs_zeta, init_mediator,
    project_out_design, run_mediator_chain, DesignProjector,
};
pub use outcome::{gibbs_gamma_xi, gibbs_outcome_variances, init_outcome, run_outcome_chain};

/// How the subject-specific mediator effects are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EtaUpdate {
    /// Constrained Gibbs updates.
    Full,
    /// Held at zero throughout.
    FixedZero,
}

/// Diagonal scaling of MALA proposals within a region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preconditioner {
    Identity,
    /// Proportional to the kernel eigenvalues `λ_l / λ_1`.
    PriorDiagonal,
    /// Inverse diagonal of the conditional Hessian at the initial state.
    Curvature,
}

/// How the spatial coefficient block is updated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldUpdate {
    Mala,
    /// Exact conjugate draw; only valid with a zero threshold.
    ConjugateGibbs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    /// Posterior means of a short unthresholded conjugate chain.
    GpWorkingModel,
    /// Lasso estimate pushed outward by the threshold, then projected.
    LassoThreshold,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub iters: usize,
    pub burnin_frac: f64,
    pub thin: usize,
    pub seed: u64,
    /// Soft threshold of the fitted field.
    pub nu: f64,
    /// Per-region initial MALA step; derived from the initial curvature when absent.
    pub step_init: Option<Vec<f64>>,
    /// Per-region acceptance targets; `clamp(target_scale / L_r, 0.2, 0.4)` when absent.
    pub target_accept: Option<Vec<f64>>,
    pub target_scale: f64,
    pub adapt_window: usize,
    pub adapt_rate: f64,
    /// Fraction of burn-in during which step sizes adapt.
    pub adapt_frac: f64,
    /// Outcome model: fraction of iterations that update only the image coefficients.
    pub beta_only_frac: f64,
    pub eta_update: EtaUpdate,
    pub preconditioner: Preconditioner,
    pub field_update: FieldUpdate,
    pub init: InitStrategy,
    pub init_iters: usize,
    /// Lasso penalty as a fraction of the smallest penalty giving an empty fit.
    pub lasso_lambda_frac: f64,
    pub priors: Priors,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            iters: 100_000,
            burnin_frac: 0.5,
            thin: 10,
            seed: 0,
            nu: 0.5,
            step_init: None,
            target_accept: None,
            target_scale: 20.0,
            adapt_window: 100,
            adapt_rate: 0.5,
            adapt_frac: 0.8,
            beta_only_frac: 0.2,
            eta_update: EtaUpdate::Full,
            preconditioner: Preconditioner::Curvature,
            field_update: FieldUpdate::Mala,
            init: InitStrategy::GpWorkingModel,
            init_iters: 200,
            lasso_lambda_frac: 0.05,
            priors: Priors::default(),
        }
    }
}

impl SamplerConfig {
    /// Defaults for the mediator model (shorter chains).
    pub fn mediator_default() -> Self {
        Self {
            iters: 5_000,
            thin: 5,
            ..Self::default()
        }
    }

    pub fn validate(&self, n_regions: usize) -> Result<()> {
        if self.iters == 0 {
            return invalid("iters must be positive");
        }
        if !(self.burnin_frac > 0.0 && self.burnin_frac < 1.0) {
            return invalid(format!("burnin_frac must lie in (0,1), got {}", self.burnin_frac));
        }
        if self.thin == 0 {
            return invalid("thin must be at least 1");
        }
        if !(self.nu >= 0.0 && self.nu.is_finite()) {
            return invalid("threshold must be finite and non-negative");
        }
        if !(self.beta_only_frac >= 0.0 && self.beta_only_frac < 1.0) {
            return invalid("beta_only_frac must lie in [0,1)");
        }
        if self.adapt_window == 0 || !(self.adapt_rate >= 0.0) || !(0.0..=1.0).contains(&self.adapt_frac) {
            return invalid("invalid adaptation settings");
        }
        if !(self.target_scale > 0.0) {
            return invalid("target_scale must be positive");
        }
        if let Some(s) = &self.step_init {
            if s.len() != n_regions || s.iter().any(|v| !(*v > 0.0)) {
                return invalid("step_init needs one positive value per region");
            }
        }
        if let Some(t) = &self.target_accept {
            if t.len() != n_regions || t.iter().any(|v| !(0.2..=0.4).contains(v)) {
                return invalid("target_accept needs one value in [0.2, 0.4] per region");
            }
        }
        if self.field_update == FieldUpdate::ConjugateGibbs && self.nu != 0.0 {
            return invalid("conjugate field updates require a zero threshold");
        }
        if !(self.priors.ig_shape > 0.0 && self.priors.ig_rate > 0.0 && self.priors.sigma2_fixed > 0.0) {
            return invalid("prior hyperparameters must be positive");
        }
        Ok(())
    }

    pub fn burnin_iters(&self) -> usize {
        (self.iters as f64 * self.burnin_frac).floor() as usize
    }

    pub fn n_draws(&self) -> usize {
        (self.iters - self.burnin_iters()) / self.thin
    }

    pub(crate) fn records(&self, iter: usize) -> bool {
        let b = self.burnin_iters();
        iter >= b && (iter - b + 1) % self.thin == 0
    }

    pub(crate) fn adapting(&self, iter: usize) -> bool {
        (iter as f64) < self.adapt_frac * self.burnin_iters() as f64
    }

    pub(crate) fn targets(&self, bases: &BasisSet) -> Vec<f64> {
        match &self.target_accept {
            Some(t) => t.clone(),
            None => bases
                .regions
                .iter()
                .map(|b| default_target(b.n_basis(), self.target_scale))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Outcome,
    Mediator,
}

/// Thinned post-burn-in draws of one chain.
///
/// Row `t` of each matrix is draw `t`. For the outcome model `fixed` holds
/// `(γ, ξ)` and `zeta` is empty; for the mediator `fixed` is empty and
/// `zeta` holds `θ_ζ` flattened region by region, column-major per block.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainTrace {
    pub model: ModelKind,
    pub nu: f64,
    pub basis_sizes: Vec<usize>,
    pub theta: DMatrix<f64>,
    pub fixed: DMatrix<f64>,
    pub variances: DMatrix<f64>,
    pub variance_names: Vec<String>,
    pub zeta: DMatrix<f64>,
    /// Mediator only: `max |X̃ᵀ θ_η|` at each recorded draw.
    pub constraint_residual: Vec<f64>,
    pub accept_rates: Vec<f64>,
    pub step_final: Vec<f64>,
    pub target_accept: Vec<f64>,
    pub seed: u64,
    pub iters: usize,
    pub burnin: usize,
    pub thin: usize,
}

impl ChainTrace {
    pub fn n_draws(&self) -> usize {
        self.theta.nrows()
    }

    /// Coefficients of draw `t`, split by region.
    pub fn theta_draw(&self, t: usize, bases: &BasisSet) -> Result<Vec<DVector<f64>>> {
        if t >= self.n_draws() {
            return invalid(format!("draw {t} out of range ({} draws)", self.n_draws()));
        }
        let flat: Vec<f64> = self.theta.row(t).iter().copied().collect();
        bases.split(&flat)
    }

    /// Thresholded field of draw `t` on the voxel grid.
    pub fn field_draw(&self, t: usize, bases: &BasisSet) -> Result<Vec<f64>> {
        eval_field(bases, &self.theta_draw(t, bases)?, self.nu)
    }

    /// Voxelwise posterior mean of the thresholded field.
    pub fn field_mean(&self, bases: &BasisSet) -> Result<Vec<f64>> {
        let mut mean = vec![0.0; bases.n_voxels()];
        for t in 0..self.n_draws() {
            for (m, v) in mean.iter_mut().zip(self.field_draw(t, bases)?) {
                *m += v;
            }
        }
        let k = self.n_draws().max(1) as f64;
        Ok(mean.into_iter().map(|m| m / k).collect())
    }

    /// Posterior mean of column `col` of `fixed` (0 is `γ`).
    pub fn fixed_mean(&self, col: usize) -> f64 {
        if self.n_draws() == 0 || col >= self.fixed.ncols() {
            return 0.0;
        }
        self.fixed.column(col).mean()
    }

    pub fn variance_mean(&self, name: &str) -> Option<f64> {
        let c = self.variance_names.iter().position(|n| n == name)?;
        (self.n_draws() > 0).then(|| self.variances.column(c).mean())
    }

    /// Keep only the first `t` draws.
    pub fn truncated(&self, t: usize) -> Self {
        let t = t.min(self.n_draws());
        let mut out = self.clone();
        out.theta = self.theta.rows(0, t).into_owned();
        out.fixed = self.fixed.rows(0, t).into_owned();
        out.variances = self.variances.rows(0, t).into_owned();
        out.zeta = self.zeta.rows(0, t).into_owned();
        out.constraint_residual.truncate(t);
        out
    }
}

/// One draw from `IG(shape, rate)`.
/// Coefficients whose thresholded field equals the projected field of `theta`.
pub(crate) fn push_out(bases: &BasisSet, theta: &[DVector<f64>], nu: f64) -> Result<Vec<DVector<f64>>> {
    if nu == 0.0 {
        return Ok(theta.to_vec());
    }
    let mut latent = vec![0.0; bases.n_voxels()];
    for (b, t) in bases.regions.iter().zip(theta) {
        for (&v, f) in b.voxels.iter().zip((&b.q * t).iter()) {
            latent[v] = if *f == 0.0 { 0.0 } else { f + f.signum() * nu };
        }
    }
    bases.project(&latent)
}

pub(crate) fn draw_inv_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    let g = Gamma::new(shape, 1.0 / rate).expect("inverse-gamma parameters must be positive");
    1.0 / g.sample(rng)
}

/// Draw from `N(P⁻¹ b, P⁻¹)` given the precision `P`.
pub(crate) fn draw_gaussian_precision<R: Rng + ?Sized>(
    precision: DMatrix<f64>,
    b: &DVector<f64>,
    rng: &mut R,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let chol = precision
        .cholesky()
        .ok_or_else(|| crate::error::BimaError::NumericalRank("posterior precision is not positive definite".into()))?;
    let mean = chol.solve(b);
    let z = DVector::from_fn(b.len(), |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
    let dev = chol
        .l()
        .transpose()
        .solve_upper_triangular(&z)
        .ok_or_else(|| crate::error::BimaError::NumericalRank("singular Cholesky factor".into()))?;
    Ok((&mean + dev, mean))
}

/// `Σ_l θ_l² / λ_l` summed over regions.
pub(crate) fn scaled_square_sum<'a, I>(blocks: I, bases: &BasisSet) -> f64
where
    I: IntoIterator<Item = &'a DVector<f64>>,
{
    blocks
        .into_iter()
        .zip(&bases.regions)
        .map(|(t, b)| t.iter().zip(b.eigvals.iter()).map(|(v, l)| v * v / l).sum::<f64>())
        .sum()
}

/// Per-region acceptance and step bookkeeping shared by both chains.
#[derive(Debug, Clone)]
pub(crate) struct StepTuner {
    pub steps: Vec<f64>,
    pub targets: Vec<f64>,
    window_accepts: Vec<usize>,
    window_len: usize,
    post_accepts: Vec<usize>,
    post_total: usize,
}

impl StepTuner {
    pub fn new(steps: Vec<f64>, targets: Vec<f64>) -> Self {
        let r = steps.len();
        Self {
            steps,
            targets,
            window_accepts: vec![0; r],
            window_len: 0,
            post_accepts: vec![0; r],
            post_total: 0,
        }
    }

    pub fn record(&mut self, region: usize, accepted: bool, post_burnin: bool) {
        if accepted {
            self.window_accepts[region] += 1;
            if post_burnin {
                self.post_accepts[region] += 1;
            }
        }
    }

    /// Close iteration `iter`; adapt at the end of each window while adapting.
    pub fn end_iteration(&mut self, config: &SamplerConfig, iter: usize, post_burnin: bool) {
        self.window_len += 1;
        if post_burnin {
            self.post_total += 1;
        }
        if self.window_len == config.adapt_window {
            if config.adapting(iter) {
                for r in 0..self.steps.len() {
                    let rate = self.window_accepts[r] as f64 / self.window_len as f64;
                    self.steps[r] = adapt_step(self.steps[r], rate, self.targets[r], config.adapt_rate);
                }
            }
            self.window_accepts.iter_mut().for_each(|a| *a = 0);
            self.window_len = 0;
        }
    }

    pub fn accept_rates(&self) -> Vec<f64> {
        self.post_accepts
            .iter()
            .map(|&a| if self.post_total == 0 { 0.0 } else { a as f64 / self.post_total as f64 })
            .collect()
    }
}

/// Initial step from the largest preconditioned curvature: `h = 1.5 · L^{-1/6} / sqrt(max m_l H_ll)`.
pub(crate) fn curvature_step(precond: &DVector<f64>, hess_diag: &DVector<f64>) -> f64 {
    let worst = precond
        .iter()
        .zip(hess_diag.iter())
        .map(|(m, h)| m * h)
        .fold(0.0, f64::max);
    let l = precond.len().max(1) as f64;
    if worst > 0.0 {
        1.5 * l.powf(-1.0 / 6.0) / worst.sqrt()
    } else {
        0.1
    }
}

/// Proposal scaling for one region given the conditional Hessian diagonal.
pub(crate) fn make_preconditioner(kind: Preconditioner, eigvals: &DVector<f64>, hess_diag: &DVector<f64>) -> DVector<f64> {
    match kind {
        Preconditioner::Identity => DVector::from_element(eigvals.len(), 1.0),
        Preconditioner::PriorDiagonal => {
            let top = eigvals.max();
            eigvals.map(|l| l / top)
        }
        Preconditioner::Curvature => {
            let inv = hess_diag.map(|h| 1.0 / h);
            let top = inv.max();
            inv.map(|v| v / top)
        }
    }
}
