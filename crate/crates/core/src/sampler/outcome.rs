use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    curvature_step, draw_gaussian_precision, draw_inv_gamma, lasso_coordinate_descent, lasso_lambda_max,
    make_preconditioner, mala_step, push_out, scaled_square_sum, ChainTrace, Eval, FieldUpdate, InitStrategy, ModelKind,
    SamplerConfig, StepTuner,
};
use crate::error::{invalid, BimaError, Result};
use crate::kernel_basis::BasisSet;
use crate::sem_model::{MediationDataset, OutcomeState, Priors};
use crate::stgp::{eval_field, soft_threshold, soft_threshold_grad};

/// Outcome-model state plus the per-region fitted contributions
/// `c_r = M_r T_ν(Q_r θ_r) / p` and the current residual.
struct OutcomeSampler<'a> {
    data: &'a MediationDataset,
    bases: &'a BasisSet,
    priors: Priors,
    blocks: Vec<DMatrix<f64>>,
    design: DMatrix<f64>,
    state: OutcomeState,
    contrib: Vec<DVector<f64>>,
    fixed: DVector<f64>,
    resid: DVector<f64>,
    inv_p: f64,
    /// `Z_r = M_r Q_r / p` and `Z_rᵀ Z_r`, built on demand.
    reduced: Vec<Option<(DMatrix<f64>, DMatrix<f64>)>>,
}

impl<'a> OutcomeSampler<'a> {
    fn new(data: &'a MediationDataset, bases: &'a BasisSet, state: OutcomeState, priors: Priors) -> Result<Self> {
        let blocks: Vec<DMatrix<f64>> = bases
            .regions
            .iter()
            .map(|b| DMatrix::from_fn(data.n(), b.n_voxels(), |i, k| data.m[(i, b.voxels[k])]))
            .collect();
        let n = data.n();
        let mut s = Self {
            data,
            bases,
            priors,
            blocks,
            design: data.exposure_design(),
            contrib: vec![DVector::zeros(n); bases.n_regions()],
            fixed: DVector::zeros(n),
            resid: DVector::zeros(n),
            inv_p: 1.0 / data.p() as f64,
            reduced: vec![None; bases.n_regions()],
            state,
        };
        for r in 0..bases.n_regions() {
            s.contrib[r] = s.region_contrib(r, &s.state.theta_beta[r]);
        }
        s.set_fixed(s.state.gamma, s.state.xi.clone());
        Ok(s)
    }

    fn region_contrib(&self, r: usize, theta: &DVector<f64>) -> DVector<f64> {
        let latent = &self.bases.regions[r].q * theta;
        let block = &self.blocks[r];
        let mut c = DVector::zeros(self.data.n());
        for (k, &l) in latent.iter().enumerate() {
            let v = soft_threshold(l, self.state.nu_beta);
            if v != 0.0 {
                c.axpy(v * self.inv_p, &block.column(k), 1.0);
            }
        }
        c
    }

    fn refresh_resid(&mut self) {
        let mut r = &self.data.y - &self.fixed;
        for c in &self.contrib {
            r -= c;
        }
        self.resid = r;
    }

    fn set_fixed(&mut self, gamma: f64, xi: DVector<f64>) {
        self.state.gamma = gamma;
        self.state.xi = xi;
        self.fixed = &self.data.x * gamma + &self.data.c * &self.state.xi;
        self.refresh_resid();
    }

    fn set_region(&mut self, r: usize, theta: DVector<f64>, contrib: DVector<f64>) {
        self.state.theta_beta[r] = theta;
        self.contrib[r] = contrib;
        self.refresh_resid();
    }

    /// Conditional log-density of `θ_{β,r}` (up to a constant) and its gradient.
    fn eval_region(&self, r: usize, theta: &DVector<f64>) -> (Eval, DVector<f64>) {
        let b = &self.bases.regions[r];
        let st = &self.state;
        let latent = &b.q * theta;
        let block = &self.blocks[r];
        let mut c = DVector::zeros(self.data.n());
        for (k, &l) in latent.iter().enumerate() {
            let v = soft_threshold(l, st.nu_beta);
            if v != 0.0 {
                c.axpy(v * self.inv_p, &block.column(k), 1.0);
            }
        }
        let e = &self.resid + &self.contrib[r] - &c;
        let mut g = DVector::zeros(b.n_voxels());
        for (k, &l) in latent.iter().enumerate() {
            if soft_threshold_grad(l, st.nu_beta) != 0.0 {
                g[k] = block.column(k).dot(&e) * self.inv_p;
            }
        }
        let mut grad = b.q.tr_mul(&g) / st.sigma2_y;
        let mut lp = -e.norm_squared() / (2.0 * st.sigma2_y);
        for l in 0..theta.len() {
            let pv = st.sigma2_beta * b.eigvals[l];
            grad[l] -= theta[l] / pv;
            lp -= theta[l] * theta[l] / (2.0 * pv);
        }
        (Eval { lp, grad }, c)
    }

    fn reduced(&mut self, r: usize) -> &(DMatrix<f64>, DMatrix<f64>) {
        if self.reduced[r].is_none() {
            let z = &self.blocks[r] * &self.bases.regions[r].q * self.inv_p;
            let ztz = z.tr_mul(&z);
            self.reduced[r] = Some((z, ztz));
        }
        self.reduced[r].as_ref().unwrap()
    }

    /// Diagonal of the negative conditional Hessian, counting every voxel as active.
    fn hess_diag(&mut self, r: usize) -> DVector<f64> {
        let (s2y, s2b) = (self.state.sigma2_y, self.state.sigma2_beta);
        let eig = self.bases.regions[r].eigvals.clone();
        let (_, ztz) = self.reduced(r);
        DVector::from_fn(eig.len(), |l, _| ztz[(l, l)] / s2y + 1.0 / (s2b * eig[l]))
    }

    /// Exact draw of `θ_{β,r}` under a zero threshold.
    fn gibbs_region<R: Rng + ?Sized>(&mut self, r: usize, rng: &mut R) -> Result<()> {
        let (s2y, s2b) = (self.state.sigma2_y, self.state.sigma2_beta);
        let eig = self.bases.regions[r].eigvals.clone();
        let partial = &self.resid + &self.contrib[r];
        let (z, ztz) = self.reduced(r);
        let mut prec = ztz / s2y;
        for l in 0..eig.len() {
            prec[(l, l)] += 1.0 / (s2b * eig[l]);
        }
        let rhs = z.tr_mul(&partial) / s2y;
        let (theta, _) = draw_gaussian_precision(prec, &rhs, rng)?;
        let c = self.region_contrib(r, &theta);
        self.set_region(r, theta, c);
        Ok(())
    }

    fn draw_fixed<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let offset = &self.resid + &self.fixed;
        let (gamma, xi) = draw_fixed_effects(&self.design, &offset, self.state.sigma2_y, self.priors.sigma2_fixed, rng)?;
        self.set_fixed(gamma, xi);
        Ok(())
    }

    fn draw_variances<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let (s2y, s2b) = outcome_variance_draw(
            self.resid.norm_squared(),
            self.data.n(),
            &self.state.theta_beta,
            self.bases,
            &self.priors,
            rng,
        );
        self.state.sigma2_y = s2y;
        self.state.sigma2_beta = s2b;
    }
}

fn draw_fixed_effects<R: Rng + ?Sized>(
    design: &DMatrix<f64>,
    offset: &DVector<f64>,
    sigma2_y: f64,
    sigma2_fixed: f64,
    rng: &mut R,
) -> Result<(f64, DVector<f64>)> {
    let k = design.ncols();
    let mut prec = design.tr_mul(design) / sigma2_y;
    for j in 0..k {
        prec[(j, j)] += 1.0 / sigma2_fixed;
    }
    let rhs = design.tr_mul(offset) / sigma2_y;
    let (draw, _) = draw_gaussian_precision(prec, &rhs, rng)?;
    Ok((draw[0], draw.rows(1, k - 1).into_owned()))
}

fn outcome_variance_draw<R: Rng + ?Sized>(
    rss: f64,
    n: usize,
    theta: &[DVector<f64>],
    bases: &BasisSet,
    priors: &Priors,
    rng: &mut R,
) -> (f64, f64) {
    let (a, b) = (priors.ig_shape, priors.ig_rate);
    let s2y = draw_inv_gamma(a + n as f64 / 2.0, b + rss / 2.0, rng);
    let ss = scaled_square_sum(theta, bases);
    let s2b = draw_inv_gamma(a + bases.total_basis() as f64 / 2.0, b + ss / 2.0, rng);
    (s2y, s2b)
}

/// Joint Gaussian full-conditional draw of `(γ, ξ)`.
pub fn gibbs_gamma_xi<R: Rng + ?Sized>(
    state: &OutcomeState,
    data: &MediationDataset,
    bases: &BasisSet,
    priors: &Priors,
    rng: &mut R,
) -> Result<(f64, DVector<f64>)> {
    state.validate()?;
    let beta = DVector::from_vec(eval_field(bases, &state.theta_beta, state.nu_beta)?);
    let offset = &data.y - (&data.m * beta) / data.p() as f64;
    draw_fixed_effects(&data.exposure_design(), &offset, state.sigma2_y, priors.sigma2_fixed, rng)
}

/// Inverse-gamma draws of `(σ_Y², σ_β²)`.
pub fn gibbs_outcome_variances<R: Rng + ?Sized>(
    state: &OutcomeState,
    data: &MediationDataset,
    bases: &BasisSet,
    priors: &Priors,
    rng: &mut R,
) -> Result<(f64, f64)> {
    let e = crate::sem_model::outcome_residuals(state, data, bases)?;
    Ok(outcome_variance_draw(e.norm_squared(), data.n(), &state.theta_beta, bases, priors, rng))
}

fn check_inputs(data: &MediationDataset, bases: &BasisSet, config: &SamplerConfig) -> Result<()> {
    config.validate(bases.n_regions())?;
    if bases.n_voxels() != data.p() {
        return invalid(format!(
            "bases cover {} voxels but the data has {}",
            bases.n_voxels(),
            data.p()
        ));
    }
    Ok(())
}

fn sample_variance(v: &DVector<f64>) -> f64 {
    let n = v.len() as f64;
    let m = v.mean();
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0).max(1.0)).max(1e-8)
}

/// Starting state for the outcome chain.
pub fn init_outcome<R: Rng + ?Sized>(
    data: &MediationDataset,
    bases: &BasisSet,
    config: &SamplerConfig,
    rng: &mut R,
) -> Result<OutcomeState> {
    check_inputs(data, bases, config)?;
    let zero = OutcomeState::zeros(bases, data.q(), config.nu);
    match config.init {
        InitStrategy::Zero => Ok(zero),
        InitStrategy::GpWorkingModel => {
            let mut start = OutcomeState::zeros(bases, data.q(), 0.0);
            start.sigma2_y = sample_variance(&data.y);
            let mut s = OutcomeSampler::new(data, bases, start, config.priors)?;
            let iters = config.init_iters.max(2);
            let keep_from = iters / 2;
            let mut mean = OutcomeState::zeros(bases, data.q(), config.nu);
            mean.sigma2_y = 0.0;
            mean.sigma2_beta = 0.0;
            for it in 0..iters {
                for r in 0..bases.n_regions() {
                    s.gibbs_region(r, rng)?;
                }
                s.draw_fixed(rng)?;
                s.draw_variances(rng);
                if it >= keep_from {
                    for (m, t) in mean.theta_beta.iter_mut().zip(&s.state.theta_beta) {
                        *m += t;
                    }
                    mean.gamma += s.state.gamma;
                    mean.xi += &s.state.xi;
                    mean.sigma2_y += s.state.sigma2_y;
                    mean.sigma2_beta += s.state.sigma2_beta;
                }
            }
            let k = (iters - keep_from) as f64;
            mean.theta_beta.iter_mut().for_each(|t| *t /= k);
            mean.gamma /= k;
            mean.xi /= k;
            mean.sigma2_y /= k;
            mean.sigma2_beta /= k;
            mean.theta_beta = push_out(bases, &mean.theta_beta, config.nu)?;
            Ok(mean)
        }
        InitStrategy::LassoThreshold => {
            let (n, p, q) = (data.n(), data.p(), data.q());
            let mut a = DMatrix::zeros(n, p + 1 + q);
            a.columns_mut(0, p).copy_from(&(&data.m / p as f64));
            a.columns_mut(p, 1 + q).copy_from(&data.exposure_design());
            let penalized: Vec<bool> = (0..p + 1 + q).map(|j| j < p).collect();
            let lambda = config.lasso_lambda_frac * lasso_lambda_max(&a, &data.y, &penalized)?;
            match lasso_coordinate_descent(&a, &data.y, &penalized, lambda, 20_000, 1e-6) {
                Ok(fit) => {
                    let latent: Vec<f64> = (0..p)
                        .map(|j| {
                            let b = fit.coef[j];
                            if b == 0.0 {
                                0.0
                            } else {
                                b + b.signum() * config.nu
                            }
                        })
                        .collect();
                    let mut st = zero;
                    st.theta_beta = bases.project(&latent)?;
                    st.gamma = fit.coef[p];
                    st.xi = fit.coef.rows(p + 1, q).into_owned();
                    let rss = (&data.y - &a * &fit.coef).norm_squared();
                    st.sigma2_y = (rss / n as f64).max(1e-8);
                    Ok(st)
                }
                Err(BimaError::InitializationFailed(msg)) => {
                    log::warn!("{msg}; starting from zero");
                    Ok(zero)
                }
                Err(e) => Err(e),
            }
        }
    }
}

/// Run the outcome-model chain. Fully determined by `config.seed`.
pub fn run_outcome_chain(data: &MediationDataset, bases: &BasisSet, config: &SamplerConfig) -> Result<ChainTrace> {
    check_inputs(data, bases, config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let init = init_outcome(data, bases, config, &mut rng)?;
    let mut s = OutcomeSampler::new(data, bases, init, config.priors)?;
    let n_regions = bases.n_regions();

    let mut preconds = Vec::with_capacity(n_regions);
    let mut steps = Vec::with_capacity(n_regions);
    for r in 0..n_regions {
        let h = s.hess_diag(r);
        let m = make_preconditioner(config.preconditioner, &bases.regions[r].eigvals, &h);
        steps.push(curvature_step(&m, &h));
        preconds.push(m);
    }
    if let Some(given) = &config.step_init {
        steps = given.clone();
    }
    let mut tuner = StepTuner::new(steps, config.targets(bases));

    let burnin = config.burnin_iters();
    let beta_only = (config.iters as f64 * config.beta_only_frac).floor() as usize;
    let n_draws = config.n_draws();
    let q = data.q();
    let mut theta_rows = DMatrix::zeros(n_draws, bases.total_basis());
    let mut fixed_rows = DMatrix::zeros(n_draws, 1 + q);
    let mut var_rows = DMatrix::zeros(n_draws, 2);
    let mut t = 0;

    for iter in 0..config.iters {
        let post = iter >= burnin;
        for r in 0..n_regions {
            match config.field_update {
                FieldUpdate::ConjugateGibbs => {
                    s.gibbs_region(r, &mut rng)?;
                    tuner.record(r, true, post);
                }
                FieldUpdate::Mala => {
                    let theta = s.state.theta_beta[r].clone();
                    let (cur, _) = s.eval_region(r, &theta);
                    if !cur.lp.is_finite() {
                        return Err(BimaError::Diverged(format!(
                            "outcome log-density became non-finite at iteration {iter}, region {r}"
                        )));
                    }
                    let mut last = None;
                    let step = mala_step(
                        &theta,
                        &cur,
                        |th| {
                            let (e, c) = s.eval_region(r, th);
                            last = Some(c);
                            e
                        },
                        tuner.steps[r],
                        &preconds[r],
                        &mut rng,
                    )?;
                    if step.accepted {
                        s.set_region(r, step.theta, last.expect("proposal was evaluated"));
                    }
                    tuner.record(r, step.accepted, post);
                }
            }
        }
        if iter >= beta_only {
            s.draw_fixed(&mut rng)?;
            s.draw_variances(&mut rng);
        }
        tuner.end_iteration(config, iter, post);
        if config.records(iter) {
            let flat = bases.flatten(&s.state.theta_beta);
            theta_rows.row_mut(t).copy_from_slice(&flat);
            fixed_rows[(t, 0)] = s.state.gamma;
            for k in 0..q {
                fixed_rows[(t, 1 + k)] = s.state.xi[k];
            }
            var_rows[(t, 0)] = s.state.sigma2_y;
            var_rows[(t, 1)] = s.state.sigma2_beta;
            t += 1;
        }
    }
    debug_assert_eq!(t, n_draws);

    Ok(ChainTrace {
        model: ModelKind::Outcome,
        nu: config.nu,
        basis_sizes: bases.regions.iter().map(|b| b.n_basis()).collect(),
        theta: theta_rows,
        fixed: fixed_rows,
        variances: var_rows,
        variance_names: vec!["sigma2_y".into(), "sigma2_beta".into()],
        zeta: DMatrix::zeros(n_draws, 0),
        constraint_residual: Vec::new(),
        accept_rates: tuner.accept_rates(),
        step_final: tuner.steps.clone(),
        target_accept: tuner.targets.clone(),
        seed: config.seed,
        iters: config.iters,
        burnin,
        thin: config.thin,
    })
}
