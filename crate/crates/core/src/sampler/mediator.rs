use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{
    curvature_step, draw_inv_gamma, make_preconditioner, mala_step, push_out, scaled_square_sum, ChainTrace, EtaUpdate, Eval,
    FieldUpdate, InitStrategy, ModelKind, SamplerConfig, StepTuner,
};
use crate::error::{invalid, BimaError, Result};
use crate::kernel_basis::BasisSet;
use crate::sem_model::{MediationDataset, MediatorState, Priors};
use crate::stgp::{soft_threshold, soft_threshold_grad};

/// Orthogonal projection onto the complement of `col(X̃)`.
#[derive(Debug, Clone)]
pub struct DesignProjector {
    basis: DMatrix<f64>,
}

impl DesignProjector {
    /// Fails with an identifiability error when `design` lacks full column rank.
    pub fn new(design: &DMatrix<f64>) -> Result<Self> {
        let (n, k) = design.shape();
        if k > n {
            return Err(BimaError::Identifiability(format!(
                "design has {k} columns but only {n} rows"
            )));
        }
        let scale = (0..k).map(|j| design.column(j).norm()).fold(0.0, f64::max);
        let qr = design.clone().qr();
        let r = qr.r();
        for j in 0..k {
            if !(r[(j, j)].abs() > 1e-10 * scale) {
                return Err(BimaError::Identifiability(
                    "exposure and confounders are linearly dependent".into(),
                ));
            }
        }
        Ok(Self { basis: qr.q() })
    }

    pub fn project_out(&self, v: &DVector<f64>) -> DVector<f64> {
        v - &self.basis * self.basis.tr_mul(v)
    }

    pub fn project_out_matrix(&self, v: &DMatrix<f64>) -> DMatrix<f64> {
        v - &self.basis * self.basis.tr_mul(v)
    }
}

/// `(I − X̃(X̃ᵀX̃)⁻¹X̃ᵀ) v`.
pub fn project_out_design(design: &DMatrix<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
    Ok(DesignProjector::new(design)?.project_out(v))
}

/// Data summaries that make every mediator update independent of `p`
/// except the α step, which is linear in the region size.
struct RegionStats {
    /// `P_r = M_r Q_r`, `n × L_r`.
    proj: DMatrix<f64>,
    /// `M_rᵀ X`.
    xm: DVector<f64>,
    sumsq: f64,
    /// `P_rᵀ C`, `L_r × q`.
    ptc: DMatrix<f64>,
}

struct MediatorStats {
    xx: f64,
    cx: DVector<f64>,
    ctc: DMatrix<f64>,
    regions: Vec<RegionStats>,
}

impl MediatorStats {
    fn new(data: &MediationDataset, bases: &BasisSet) -> Self {
        let regions = bases
            .regions
            .iter()
            .map(|b| {
                let block = DMatrix::from_fn(data.n(), b.n_voxels(), |i, k| data.m[(i, b.voxels[k])]);
                let proj = &block * &b.q;
                let ptc = proj.tr_mul(&data.c);
                RegionStats {
                    xm: block.tr_mul(&data.x),
                    sumsq: block.norm_squared(),
                    proj,
                    ptc,
                }
            })
            .collect();
        Self {
            xx: data.x.norm_squared(),
            cx: data.c.tr_mul(&data.x),
            ctc: data.c.tr_mul(&data.c),
            regions,
        }
    }
}

struct MediatorSampler<'a> {
    data: &'a MediationDataset,
    bases: &'a BasisSet,
    stats: MediatorStats,
    priors: Priors,
    state: MediatorState,
    projector: Option<DesignProjector>,
}

impl<'a> MediatorSampler<'a> {
    fn new(
        data: &'a MediationDataset,
        bases: &'a BasisSet,
        state: MediatorState,
        priors: Priors,
        eta_update: EtaUpdate,
    ) -> Result<Self> {
        let projector = match eta_update {
            EtaUpdate::Full => Some(DesignProjector::new(&data.exposure_design())?),
            EtaUpdate::FixedZero => None,
        };
        Ok(Self {
            data,
            bases,
            stats: MediatorStats::new(data, bases),
            priors,
            state,
            projector,
        })
    }

    fn alpha_region(&self, r: usize, theta: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let latent = &self.bases.regions[r].q * theta;
        let alpha = latent.map(|v| soft_threshold(v, self.state.nu_alpha));
        (latent, alpha)
    }

    /// `Bᵀ X` with `B = C θ_ζᵀ + θ_η` for region `r`.
    fn smooth_cross_x(&self, r: usize) -> DVector<f64> {
        &self.state.theta_zeta[r] * &self.stats.cx + self.state.theta_eta[r].tr_mul(&self.data.x)
    }

    /// `S_r = M_rᵀX − Q_r Bᵀ X`.
    fn alpha_score(&self, r: usize) -> DVector<f64> {
        &self.stats.regions[r].xm - &self.bases.regions[r].q * self.smooth_cross_x(r)
    }

    fn eval_alpha(&self, r: usize, theta: &DVector<f64>, score: &DVector<f64>) -> Eval {
        let b = &self.bases.regions[r];
        let st = &self.state;
        let (latent, alpha) = self.alpha_region(r, theta);
        let xx = self.stats.xx;
        let mut lp = -(xx * alpha.norm_squared() - 2.0 * alpha.dot(score)) / (2.0 * st.sigma2_m);
        let g = DVector::from_fn(b.n_voxels(), |k, _| {
            soft_threshold_grad(latent[k], st.nu_alpha) * (score[k] - xx * alpha[k])
        });
        let mut grad = b.q.tr_mul(&g) / st.sigma2_m;
        for l in 0..theta.len() {
            let pv = st.sigma2_alpha * b.eigvals[l];
            grad[l] -= theta[l] / pv;
            lp -= theta[l] * theta[l] / (2.0 * pv);
        }
        Eval { lp, grad }
    }

    fn alpha_hess_diag(&self, r: usize) -> DVector<f64> {
        let b = &self.bases.regions[r];
        b.eigvals
            .map(|l| self.stats.xx / self.state.sigma2_m + 1.0 / (self.state.sigma2_alpha * l))
    }

    fn gibbs_alpha<R: Rng + ?Sized>(&mut self, r: usize, rng: &mut R) {
        let b = &self.bases.regions[r];
        let proj_score = b.q.tr_mul(&self.alpha_score(r));
        let st = &self.state;
        let theta = DVector::from_fn(b.n_basis(), |l, _| {
            let prec = self.stats.xx / st.sigma2_m + 1.0 / (st.sigma2_alpha * b.eigvals[l]);
            let z: f64 = rng.sample(StandardNormal);
            proj_score[l] / (st.sigma2_m * prec) + z / prec.sqrt()
        });
        self.state.theta_alpha[r] = theta;
    }

    fn draw_zeta<R: Rng + ?Sized>(&self, r: usize, k: usize, rng: &mut R) -> DVector<f64> {
        let b = &self.bases.regions[r];
        let rs = &self.stats.regions[r];
        let st = &self.state;
        let (_, alpha) = self.alpha_region(r, &st.theta_alpha[r]);
        let a = b.q.tr_mul(&alpha);
        let z = &st.theta_zeta[r];
        let eta_c = st.theta_eta[r].tr_mul(&self.data.c.column(k));
        let q = self.data.q();
        DVector::from_fn(b.n_basis(), |l, _| {
            let mut num = rs.ptc[(l, k)] - a[l] * self.stats.cx[k] - eta_c[l];
            for kk in 0..q {
                if kk != k {
                    num -= z[(l, kk)] * self.stats.ctc[(kk, k)];
                }
            }
            let prec = self.stats.ctc[(k, k)] / st.sigma2_m + 1.0 / (st.sigma2_zeta * b.eigvals[l]);
            let u: f64 = rng.sample(StandardNormal);
            num / (st.sigma2_m * prec) + u / prec.sqrt()
        })
    }

    /// Unconstrained conjugate draw of `θ_{η,·,(r,l)}` across subjects.
    fn draw_eta_unconstrained<R: Rng + ?Sized>(&self, r: usize, l: usize, a_l: f64, rng: &mut R) -> DVector<f64> {
        let st = &self.state;
        let lam = self.bases.regions[r].eigvals[l];
        let tau = 1.0 / st.sigma2_m + 1.0 / (st.sigma2_eta * lam);
        let sd = tau.sqrt().recip();
        let proj = &self.stats.regions[r].proj;
        let z = &st.theta_zeta[r];
        DVector::from_fn(self.data.n(), |i, _| {
            let mut c = proj[(i, l)] - a_l * self.data.x[i];
            for k in 0..self.data.q() {
                c -= z[(l, k)] * self.data.c[(i, k)];
            }
            let u: f64 = rng.sample(StandardNormal);
            c / (st.sigma2_m * tau) + sd * u
        })
    }

    fn alpha_basis_coords(&self, r: usize) -> DVector<f64> {
        let (_, alpha) = self.alpha_region(r, &self.state.theta_alpha[r]);
        self.bases.regions[r].q.tr_mul(&alpha)
    }

    fn gibbs_eta<R: Rng + ?Sized>(&mut self, r: usize, rng: &mut R) -> Result<()> {
        let projector = self
            .projector
            .as_ref()
            .ok_or_else(|| BimaError::InvalidState("η updates need the exposure design projector".into()))?;
        let a = self.alpha_basis_coords(r);
        for l in 0..self.bases.regions[r].n_basis() {
            let u = self.draw_eta_unconstrained(r, l, a[l], rng);
            let v = projector.project_out(&u);
            self.state.theta_eta[r].set_column(l, &v);
        }
        Ok(())
    }

    fn rss(&self) -> f64 {
        let mut total = 0.0;
        for (r, b) in self.bases.regions.iter().enumerate() {
            let rs = &self.stats.regions[r];
            let (_, alpha) = self.alpha_region(r, &self.state.theta_alpha[r]);
            let a = b.q.tr_mul(&alpha);
            let bmat = &self.data.c * self.state.theta_zeta[r].transpose() + &self.state.theta_eta[r];
            let bx = bmat.tr_mul(&self.data.x);
            total += rs.sumsq + self.stats.xx * alpha.norm_squared() + bmat.norm_squared()
                - 2.0 * alpha.dot(&rs.xm)
                - 2.0 * bmat.dot(&rs.proj)
                + 2.0 * a.dot(&bx);
        }
        total.max(0.0)
    }

    fn variance_draw<R: Rng + ?Sized>(&self, eta_update: EtaUpdate, rng: &mut R) -> (f64, f64, f64, f64) {
        let st = &self.state;
        let (a0, b0) = (self.priors.ig_shape, self.priors.ig_rate);
        let (n, p, q) = (self.data.n(), self.data.p(), self.data.q());
        let total_l = self.bases.total_basis() as f64;
        let s2m = draw_inv_gamma(a0 + (n * p) as f64 / 2.0, b0 + self.rss() / 2.0, rng);
        let ss_a = scaled_square_sum(&st.theta_alpha, self.bases);
        let s2a = draw_inv_gamma(a0 + total_l / 2.0, b0 + ss_a / 2.0, rng);
        let s2e = match eta_update {
            EtaUpdate::Full => {
                let mut ss = 0.0;
                for (e, b) in st.theta_eta.iter().zip(&self.bases.regions) {
                    for l in 0..b.n_basis() {
                        ss += e.column(l).norm_squared() / b.eigvals[l];
                    }
                }
                // Each constrained column lives in an (n − q − 1)-dimensional subspace.
                let dof = (n - q - 1) as f64 * total_l;
                draw_inv_gamma(a0 + dof / 2.0, b0 + ss / 2.0, rng)
            }
            EtaUpdate::FixedZero => st.sigma2_eta,
        };
        let s2z = if q > 0 {
            let mut ss = 0.0;
            for (z, b) in st.theta_zeta.iter().zip(&self.bases.regions) {
                for l in 0..b.n_basis() {
                    ss += z.row(l).norm_squared() / b.eigvals[l];
                }
            }
            draw_inv_gamma(a0 + q as f64 * total_l / 2.0, b0 + ss / 2.0, rng)
        } else {
            st.sigma2_zeta
        };
        (s2m, s2a, s2e, s2z)
    }

    fn sweep_nuisance<R: Rng + ?Sized>(&mut self, eta_update: EtaUpdate, rng: &mut R) -> Result<()> {
        for r in 0..self.bases.n_regions() {
            for k in 0..self.data.q() {
                let z = self.draw_zeta(r, k, rng);
                self.state.theta_zeta[r].set_column(k, &z);
            }
        }
        if eta_update == EtaUpdate::Full {
            for r in 0..self.bases.n_regions() {
                self.gibbs_eta(r, rng)?;
            }
        }
        let (s2m, s2a, s2e, s2z) = self.variance_draw(eta_update, rng);
        self.state.sigma2_m = s2m;
        self.state.sigma2_alpha = s2a;
        self.state.sigma2_eta = s2e;
        self.state.sigma2_zeta = s2z;
        Ok(())
    }
}

fn checked_sampler<'a>(
    state: &MediatorState,
    data: &'a MediationDataset,
    bases: &'a BasisSet,
    eta_update: EtaUpdate,
) -> Result<MediatorSampler<'a>> {
    crate::sem_model::mediator_residuals(state, data, bases)?;
    MediatorSampler::new(data, bases, state.clone(), Priors::default(), eta_update)
}

/// Gaussian full-conditional draw of `θ_{ζ,k,r}`.
pub fn gibbs_zeta<R: Rng + ?Sized>(
    state: &MediatorState,
    data: &MediationDataset,
    bases: &BasisSet,
    region: usize,
    k: usize,
    rng: &mut R,
) -> Result<DVector<f64>> {
    if region >= bases.n_regions() || k >= data.q() {
        return invalid("region or confounder index out of range");
    }
    let s = checked_sampler(state, data, bases, EtaUpdate::FixedZero)?;
    Ok(s.draw_zeta(region, k, rng))
}

/// Unconstrained full-conditional draw of basis coefficient `l` of region
/// `region` for every subject's individual effect.
pub fn eta_unconstrained_draw<R: Rng + ?Sized>(
    state: &MediatorState,
    data: &MediationDataset,
    bases: &BasisSet,
    region: usize,
    l: usize,
    rng: &mut R,
) -> Result<DVector<f64>> {
    if region >= bases.n_regions() || l >= bases.regions[region].n_basis() {
        return invalid("region or basis index out of range");
    }
    let s = checked_sampler(state, data, bases, EtaUpdate::FixedZero)?;
    let a = s.alpha_basis_coords(region);
    Ok(s.draw_eta_unconstrained(region, l, a[l], rng))
}

/// Draw of `θ_{η,·,(r,l)}` conditioned on `X̃ᵀ θ = 0`.
pub fn gibbs_eta_constrained<R: Rng + ?Sized>(
    state: &MediatorState,
    data: &MediationDataset,
    bases: &BasisSet,
    region: usize,
    l: usize,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let projector = DesignProjector::new(&data.exposure_design())?;
    let u = eta_unconstrained_draw(state, data, bases, region, l, rng)?;
    Ok(projector.project_out(&u))
}

/// Inverse-gamma draws of `(σ_M², σ_α², σ_η², σ_ζ²)`. Under
/// [`EtaUpdate::FixedZero`] `σ_η²` is returned unchanged, as is `σ_ζ²` when
/// there are no confounders.
pub fn gibbs_mediator_variances<R: Rng + ?Sized>(
    state: &MediatorState,
    data: &MediationDataset,
    bases: &BasisSet,
    priors: &Priors,
    eta_update: EtaUpdate,
    rng: &mut R,
) -> Result<(f64, f64, f64, f64)> {
    let mut s = checked_sampler(state, data, bases, EtaUpdate::FixedZero)?;
    s.priors = *priors;
    Ok(s.variance_draw(eta_update, rng))
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

/// Voxelwise least squares of `M` on `(X, C)` projected onto the bases.
///
/// Exposure slopes are pushed outward by `nu` so that thresholding returns
/// roughly the slope. Subject effects come from the residuals, which already
/// satisfy the orthogonality constraint; variances are moment estimates.
fn least_squares_start(
    data: &MediationDataset,
    bases: &BasisSet,
    eta_update: EtaUpdate,
    nu: f64,
) -> Result<MediatorState> {
    let (n, q, p) = (data.n(), data.q(), data.p());
    let design = data.exposure_design();
    let coef = design
        .clone()
        .svd(true, true)
        .solve(&data.m, 1e-12)
        .map_err(|e| BimaError::NumericalRank(e.to_string()))?;
    let resid = &data.m - &design * &coef;
    let mut st = MediatorState::zeros(bases, n, q, nu);
    let mut left = 0.0;
    for (r, b) in bases.regions.iter().enumerate() {
        let row = |k: usize| DVector::from_fn(b.n_voxels(), |j, _| coef[(k, b.voxels[j])]);
        let latent = row(0).map(|a| a + a.signum() * nu);
        st.theta_alpha[r] = b.q.tr_mul(&latent);
        for k in 0..q {
            st.theta_zeta[r].set_column(k, &b.q.tr_mul(&row(1 + k)));
        }
        let rr = DMatrix::from_fn(n, b.n_voxels(), |i, j| resid[(i, b.voxels[j])]);
        if eta_update == EtaUpdate::Full {
            st.theta_eta[r] = &rr * &b.q;
            left += (&rr - &st.theta_eta[r] * b.q.transpose()).norm_squared();
        } else {
            left += rr.norm_squared();
        }
    }
    let total = bases.total_basis() as f64;
    let floor = 1e-8;
    st.sigma2_m = (left / (n * p) as f64).max(floor);
    st.sigma2_alpha = (scaled_square_sum(&st.theta_alpha, bases) / total).max(floor);
    if q > 0 {
        let ss: f64 = st
            .theta_zeta
            .iter()
            .zip(&bases.regions)
            .map(|(z, b)| (0..q).map(|k| z.column(k).iter().zip(b.eigvals.iter()).map(|(v, l)| v * v / l).sum::<f64>()).sum::<f64>())
            .sum();
        st.sigma2_zeta = (ss / (total * q as f64)).max(floor);
    }
    if eta_update == EtaUpdate::Full {
        let ss: f64 = st
            .theta_eta
            .iter()
            .zip(&bases.regions)
            .map(|(e, b)| (0..b.n_basis()).map(|l| e.column(l).norm_squared() / b.eigvals[l]).sum::<f64>())
            .sum();
        st.sigma2_eta = (ss / (total * n as f64)).max(floor);
    }
    Ok(st)
}

/// Starting state for the mediator chain.
pub fn init_mediator<R: Rng + ?Sized>(
    data: &MediationDataset,
    bases: &BasisSet,
    config: &SamplerConfig,
    rng: &mut R,
) -> Result<MediatorState> {
    check_inputs(data, bases, config)?;
    let (n, q) = (data.n(), data.q());
    let zero = MediatorState::zeros(bases, n, q, config.nu);
    match config.init {
        InitStrategy::Zero => Ok(zero),
        InitStrategy::LassoThreshold => least_squares_start(data, bases, config.eta_update, config.nu),
        InitStrategy::GpWorkingModel => {
            let start = least_squares_start(data, bases, config.eta_update, 0.0)?;
            let mut s = MediatorSampler::new(data, bases, start, config.priors, config.eta_update)?;
            let iters = config.init_iters.max(2);
            let keep_from = iters / 2;
            let mut mean = MediatorState::zeros(bases, n, q, config.nu);
            mean.sigma2_m = 0.0;
            mean.sigma2_alpha = 0.0;
            mean.sigma2_eta = 0.0;
            mean.sigma2_zeta = 0.0;
            for it in 0..iters {
                for r in 0..bases.n_regions() {
                    s.gibbs_alpha(r, rng);
                }
                s.sweep_nuisance(config.eta_update, rng)?;
                if it >= keep_from {
                    let st = &s.state;
                    for r in 0..bases.n_regions() {
                        mean.theta_alpha[r] += &st.theta_alpha[r];
                        mean.theta_zeta[r] += &st.theta_zeta[r];
                        mean.theta_eta[r] += &st.theta_eta[r];
                    }
                    mean.sigma2_m += st.sigma2_m;
                    mean.sigma2_alpha += st.sigma2_alpha;
                    mean.sigma2_eta += st.sigma2_eta;
                    mean.sigma2_zeta += st.sigma2_zeta;
                }
            }
            let k = (iters - keep_from) as f64;
            for r in 0..bases.n_regions() {
                mean.theta_alpha[r] /= k;
                mean.theta_zeta[r] /= k;
                mean.theta_eta[r] /= k;
            }
            mean.sigma2_m /= k;
            mean.sigma2_alpha /= k;
            mean.sigma2_eta /= k;
            mean.sigma2_zeta /= k;
            mean.theta_alpha = push_out(bases, &mean.theta_alpha, config.nu)?;
            Ok(mean)
        }
    }
}

/// Run the mediator-model chain. Fully determined by `config.seed`.
pub fn run_mediator_chain(data: &MediationDataset, bases: &BasisSet, config: &SamplerConfig) -> Result<ChainTrace> {
    check_inputs(data, bases, config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let init = init_mediator(data, bases, config, &mut rng)?;
    let mut s = MediatorSampler::new(data, bases, init, config.priors, config.eta_update)?;
    let n_regions = bases.n_regions();
    let design = data.exposure_design();

    let mut preconds = Vec::with_capacity(n_regions);
    let mut steps = Vec::with_capacity(n_regions);
    for r in 0..n_regions {
        let h = s.alpha_hess_diag(r);
        let m = make_preconditioner(config.preconditioner, &bases.regions[r].eigvals, &h);
        steps.push(curvature_step(&m, &h));
        preconds.push(m);
    }
    if let Some(given) = &config.step_init {
        steps = given.clone();
    }
    let mut tuner = StepTuner::new(steps, config.targets(bases));

    let burnin = config.burnin_iters();
    let n_draws = config.n_draws();
    let q = data.q();
    let mut theta_rows = DMatrix::zeros(n_draws, bases.total_basis());
    let mut var_rows = DMatrix::zeros(n_draws, 4);
    let mut zeta_rows = DMatrix::zeros(n_draws, bases.total_basis() * q);
    let mut residuals = Vec::with_capacity(n_draws);
    let mut t = 0;

    for iter in 0..config.iters {
        let post = iter >= burnin;
        for r in 0..n_regions {
            match config.field_update {
                FieldUpdate::ConjugateGibbs => {
                    s.gibbs_alpha(r, &mut rng);
                    tuner.record(r, true, post);
                }
                FieldUpdate::Mala => {
                    let score = s.alpha_score(r);
                    let theta = s.state.theta_alpha[r].clone();
                    let cur = s.eval_alpha(r, &theta, &score);
                    if !cur.lp.is_finite() {
                        return Err(BimaError::Diverged(format!(
                            "mediator log-density became non-finite at iteration {iter}, region {r}"
                        )));
                    }
                    let step = mala_step(
                        &theta,
                        &cur,
                        |th| s.eval_alpha(r, th, &score),
                        tuner.steps[r],
                        &preconds[r],
                        &mut rng,
                    )?;
                    if step.accepted {
                        s.state.theta_alpha[r] = step.theta;
                    }
                    tuner.record(r, step.accepted, post);
                }
            }
        }
        s.sweep_nuisance(config.eta_update, &mut rng)?;
        tuner.end_iteration(config, iter, post);
        if config.records(iter) {
            let st = &s.state;
            theta_rows.row_mut(t).copy_from_slice(&bases.flatten(&st.theta_alpha));
            var_rows[(t, 0)] = st.sigma2_m;
            var_rows[(t, 1)] = st.sigma2_alpha;
            var_rows[(t, 2)] = st.sigma2_eta;
            var_rows[(t, 3)] = st.sigma2_zeta;
            let zeta: Vec<f64> = st.theta_zeta.iter().flat_map(|z| z.as_slice().iter().copied()).collect();
            zeta_rows.row_mut(t).copy_from_slice(&zeta);
            residuals.push(st.constraint_residual(&design));
            t += 1;
        }
    }
    debug_assert_eq!(t, n_draws);

    Ok(ChainTrace {
        model: ModelKind::Mediator,
        nu: config.nu,
        basis_sizes: bases.regions.iter().map(|b| b.n_basis()).collect(),
        theta: theta_rows,
        fixed: DMatrix::zeros(n_draws, 0),
        variances: var_rows,
        variance_names: vec!["sigma2_m".into(), "sigma2_alpha".into(), "sigma2_eta".into(), "sigma2_zeta".into()],
        zeta: zeta_rows,
        constraint_residual: residuals,
        accept_rates: tuner.accept_rates(),
        step_final: tuner.steps.clone(),
        target_accept: tuner.targets.clone(),
        seed: config.seed,
        iters: config.iters,
        burnin,
        thin: config.thin,
    })
}
