//! Structural equation models: data containers, log-posteriors and gradients.
//!
//! Outcome model: `Y_i = Σ_j β(s_j) M_i(s_j)/p + γ X_i + ξᵀC_i + ε_Y`.
//! Mediator model: `M_i(s_j) = α(s_j) X_i + ζ(s_j)ᵀC_i + η_i(s_j) + ε_M`.
//!
//! The functions here evaluate everything by direct summation over subjects
//! and voxels. The sampler keeps incremental caches instead, and its tests
//! cross-check against these.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, BimaError, Result};
use crate::grid::VoxelGrid;
use crate::kernel_basis::{check_shapes, BasisSet};
use crate::stgp::{eval_field, soft_threshold_grad};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Observed data for `n` subjects.
#[derive(Debug, Clone, PartialEq)]
pub struct MediationDataset {
    pub y: DVector<f64>,
    pub x: DVector<f64>,
    /// `n × q` confounders.
    pub c: DMatrix<f64>,
    /// `n × p` image intensities `M_i(s_j)`.
    pub m: DMatrix<f64>,
    pub grid: VoxelGrid,
}

impl MediationDataset {
    pub fn new(
        y: DVector<f64>,
        x: DVector<f64>,
        c: DMatrix<f64>,
        m: DMatrix<f64>,
        grid: VoxelGrid,
    ) -> Result<Self> {
        let n = y.len();
        if x.len() != n || c.nrows() != n || m.nrows() != n {
            return invalid(format!(
                "subject counts disagree: Y {}, X {}, C {}, M {}",
                n,
                x.len(),
                c.nrows(),
                m.nrows()
            ));
        }
        if m.ncols() != grid.len() {
            return invalid(format!(
                "image has {} voxels but the grid has {}",
                m.ncols(),
                grid.len()
            ));
        }
        if n < c.ncols() + 2 {
            return invalid(format!(
                "need n >= q + 2 subjects (n = {n}, q = {})",
                c.ncols()
            ));
        }
        let finite = y.iter().chain(x.iter()).chain(c.iter()).chain(m.iter()).all(|v| v.is_finite());
        if !finite {
            return invalid("dataset contains non-finite values");
        }
        Ok(Self { y, x, c, m, grid })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.m.ncols()
    }

    pub fn q(&self) -> usize {
        self.c.ncols()
    }

    /// `[X, C]`, the exposure-plus-confounder design.
    pub fn exposure_design(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut w = DMatrix::zeros(n, 1 + self.q());
        w.set_column(0, &self.x);
        for k in 0..self.q() {
            w.set_column(k + 1, &self.c.column(k));
        }
        w
    }

    /// Subjects `rows`, in the given order.
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        let n = rows.len();
        let y = DVector::from_iterator(n, rows.iter().map(|&i| self.y[i]));
        let x = DVector::from_iterator(n, rows.iter().map(|&i| self.x[i]));
        let c = DMatrix::from_fn(n, self.q(), |a, k| self.c[(rows[a], k)]);
        let m = DMatrix::from_fn(n, self.p(), |a, j| self.m[(rows[a], j)]);
        Self::new(y, x, c, m, self.grid.clone())
    }
}

/// Hyperparameters shared by both models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Priors {
    /// Inverse-gamma shape for every variance parameter.
    pub ig_shape: f64,
    /// Inverse-gamma rate for every variance parameter.
    pub ig_rate: f64,
    /// Prior variance of `γ` and each `ξ_k`.
    pub sigma2_fixed: f64,
    /// When false, log-posteriors reduce to the log-likelihood.
    pub include_priors: bool,
}

impl Default for Priors {
    fn default() -> Self {
        Self {
            ig_shape: 1.0,
            ig_rate: 1.0,
            sigma2_fixed: 100.0,
            include_priors: true,
        }
    }
}

impl Priors {
    pub fn flat() -> Self {
        Self {
            include_priors: false,
            ..Self::default()
        }
    }
}

/// Parameters of the outcome model.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeState {
    pub theta_beta: Vec<DVector<f64>>,
    pub gamma: f64,
    pub xi: DVector<f64>,
    pub sigma2_y: f64,
    pub sigma2_beta: f64,
    pub nu_beta: f64,
}

impl OutcomeState {
    pub fn zeros(bases: &BasisSet, q: usize, nu_beta: f64) -> Self {
        Self {
            theta_beta: bases.zeros(),
            gamma: 0.0,
            xi: DVector::zeros(q),
            sigma2_y: 1.0,
            sigma2_beta: 1.0,
            nu_beta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2_y > 0.0 && self.sigma2_beta > 0.0) {
            return Err(BimaError::InvalidState(format!(
                "variances must be positive (sigma2_y = {}, sigma2_beta = {})",
                self.sigma2_y, self.sigma2_beta
            )));
        }
        if !(self.nu_beta >= 0.0) {
            return Err(BimaError::InvalidState("threshold must be non-negative".into()));
        }
        Ok(())
    }
}

/// Parameters of the mediator model.
#[derive(Debug, Clone, PartialEq)]
pub struct MediatorState {
    pub theta_alpha: Vec<DVector<f64>>,
    /// Per region, `L_r × q`; column `k` holds `θ_{ζ,k,r}`.
    pub theta_zeta: Vec<DMatrix<f64>>,
    /// Per region, `n × L_r`; row `i` holds `θ_{η,i,r}`.
    pub theta_eta: Vec<DMatrix<f64>>,
    pub sigma2_m: f64,
    pub sigma2_alpha: f64,
    pub sigma2_eta: f64,
    pub sigma2_zeta: f64,
    pub nu_alpha: f64,
}

impl MediatorState {
    pub fn zeros(bases: &BasisSet, n: usize, q: usize, nu_alpha: f64) -> Self {
        Self {
            theta_alpha: bases.zeros(),
            theta_zeta: bases.regions.iter().map(|b| DMatrix::zeros(b.n_basis(), q)).collect(),
            theta_eta: bases.regions.iter().map(|b| DMatrix::zeros(n, b.n_basis())).collect(),
            sigma2_m: 1.0,
            sigma2_alpha: 1.0,
            sigma2_eta: 1.0,
            sigma2_zeta: 1.0,
            nu_alpha,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let vars = [self.sigma2_m, self.sigma2_alpha, self.sigma2_eta, self.sigma2_zeta];
        if vars.iter().any(|v| !(*v > 0.0)) {
            return Err(BimaError::InvalidState(format!(
                "variances must be positive, got {vars:?}"
            )));
        }
        if !(self.nu_alpha >= 0.0) {
            return Err(BimaError::InvalidState("threshold must be non-negative".into()));
        }
        Ok(())
    }

    fn check_shapes(&self, bases: &BasisSet, n: usize, q: usize) -> Result<()> {
        check_shapes(bases, &self.theta_alpha)?;
        if self.theta_zeta.len() != bases.n_regions() || self.theta_eta.len() != bases.n_regions() {
            return invalid("ζ/η blocks do not match the number of regions");
        }
        for (b, (z, e)) in bases.regions.iter().zip(self.theta_zeta.iter().zip(&self.theta_eta)) {
            if z.shape() != (b.n_basis(), q) || e.shape() != (n, b.n_basis()) {
                return invalid("ζ/η block shape does not match bases and data");
            }
        }
        Ok(())
    }

    /// Largest `|X̃ᵀ θ_{η,·,(r,l)}|` over all basis indices.
    pub fn constraint_residual(&self, design: &DMatrix<f64>) -> f64 {
        self.theta_eta
            .iter()
            .map(|e| (design.transpose() * e).amax())
            .fold(0.0, f64::max)
    }
}

/// `𝓜_i(Δ_j) ≈ M_i(s_j) / p`.
pub fn intensity_measure(m_row: &[f64], grid: &VoxelGrid) -> Result<Vec<f64>> {
    if m_row.len() != grid.len() {
        return invalid("image row length does not match the grid");
    }
    let w = grid.voxel_measure();
    Ok(m_row.iter().map(|v| v * w).collect())
}

fn gaussian_prior(theta: &DVector<f64>, eigvals: &DVector<f64>, sigma2: f64) -> f64 {
    theta
        .iter()
        .zip(eigvals.iter())
        .map(|(t, l)| -0.5 * (LN_2PI + (sigma2 * l).ln()) - t * t / (2.0 * sigma2 * l))
        .sum()
}

fn scalar_prior(v: f64, sigma2: f64) -> f64 {
    -0.5 * (LN_2PI + sigma2.ln()) - v * v / (2.0 * sigma2)
}

fn check_outcome_inputs(state: &OutcomeState, data: &MediationDataset, bases: &BasisSet) -> Result<()> {
    state.validate()?;
    check_shapes(bases, &state.theta_beta)?;
    if bases.n_voxels() != data.p() {
        return invalid("bases and data disagree on the number of voxels");
    }
    if state.xi.len() != data.q() {
        return invalid("ξ length does not match the number of confounders");
    }
    Ok(())
}

/// Outcome residuals `Y_i - ⟨β, M_i⟩_p - γ X_i - ξᵀC_i`.
pub fn outcome_residuals(state: &OutcomeState, data: &MediationDataset, bases: &BasisSet) -> Result<DVector<f64>> {
    check_outcome_inputs(state, data, bases)?;
    let beta = DVector::from_vec(eval_field(bases, &state.theta_beta, state.nu_beta)?);
    let image_part = (&data.m * beta) / data.p() as f64;
    Ok(&data.y - image_part - &data.x * state.gamma - &data.c * &state.xi)
}

pub fn outcome_logpost(state: &OutcomeState, data: &MediationDataset, bases: &BasisSet, priors: &Priors) -> Result<f64> {
    let e = outcome_residuals(state, data, bases)?;
    let n = data.n() as f64;
    let mut lp = -0.5 * n * (LN_2PI + state.sigma2_y.ln()) - e.norm_squared() / (2.0 * state.sigma2_y);
    if priors.include_priors {
        for (t, b) in state.theta_beta.iter().zip(&bases.regions) {
            lp += gaussian_prior(t, &b.eigvals, state.sigma2_beta);
        }
        lp += scalar_prior(state.gamma, priors.sigma2_fixed);
        lp += state.xi.iter().map(|v| scalar_prior(*v, priors.sigma2_fixed)).sum::<f64>();
    }
    Ok(lp)
}

/// Gradient of [`outcome_logpost`] with respect to `θ_{β,r}`, using the
/// threshold subgradient at kinks.
pub fn outcome_grad_theta(
    state: &OutcomeState,
    data: &MediationDataset,
    bases: &BasisSet,
    region: usize,
    priors: &Priors,
) -> Result<DVector<f64>> {
    if region >= bases.n_regions() {
        return invalid(format!("region {region} out of range"));
    }
    let e = outcome_residuals(state, data, bases)?;
    let b = &bases.regions[region];
    let theta = &state.theta_beta[region];
    let latent = &b.q * theta;
    let p = data.p() as f64;
    let g_vox = DVector::from_iterator(
        b.n_voxels(),
        b.voxels.iter().enumerate().map(|(k, &j)| {
            soft_threshold_grad(latent[k], state.nu_beta) * data.m.column(j).dot(&e) / p
        }),
    );
    let mut grad = b.q.tr_mul(&g_vox) / state.sigma2_y;
    if priors.include_priors {
        for l in 0..grad.len() {
            grad[l] -= theta[l] / (state.sigma2_beta * b.eigvals[l]);
        }
    }
    Ok(grad)
}

fn check_mediator_inputs(state: &MediatorState, data: &MediationDataset, bases: &BasisSet) -> Result<()> {
    state.validate()?;
    if bases.n_voxels() != data.p() {
        return invalid("bases and data disagree on the number of voxels");
    }
    state.check_shapes(bases, data.n(), data.q())
}

/// `n × p` mediator residuals `M_i(s_j) - α(s_j)X_i - ζ(s_j)ᵀC_i - η_i(s_j)`.
pub fn mediator_residuals(state: &MediatorState, data: &MediationDataset, bases: &BasisSet) -> Result<DMatrix<f64>> {
    check_mediator_inputs(state, data, bases)?;
    let alpha = eval_field(bases, &state.theta_alpha, state.nu_alpha)?;
    let mut resid = data.m.clone();
    for (r, b) in bases.regions.iter().enumerate() {
        // Per-subject smooth part in basis coordinates: Σ_k θ_ζk C_ik + θ_ηi.
        let coef = &data.c * state.theta_zeta[r].transpose() + &state.theta_eta[r];
        let smooth = coef * b.q.transpose();
        for (k, &j) in b.voxels.iter().enumerate() {
            for i in 0..data.n() {
                resid[(i, j)] -= alpha[j] * data.x[i] + smooth[(i, k)];
            }
        }
    }
    Ok(resid)
}

pub fn mediator_logpost(state: &MediatorState, data: &MediationDataset, bases: &BasisSet, priors: &Priors) -> Result<f64> {
    let resid = mediator_residuals(state, data, bases)?;
    let np = (data.n() * data.p()) as f64;
    let mut lp = -0.5 * np * (LN_2PI + state.sigma2_m.ln()) - resid.norm_squared() / (2.0 * state.sigma2_m);
    if priors.include_priors {
        for (r, b) in bases.regions.iter().enumerate() {
            lp += gaussian_prior(&state.theta_alpha[r], &b.eigvals, state.sigma2_alpha);
            for k in 0..data.q() {
                lp += gaussian_prior(&state.theta_zeta[r].column(k).into_owned(), &b.eigvals, state.sigma2_zeta);
            }
            for i in 0..data.n() {
                lp += gaussian_prior(&state.theta_eta[r].row(i).transpose(), &b.eigvals, state.sigma2_eta);
            }
        }
    }
    Ok(lp)
}

/// Gradient of [`mediator_logpost`] with respect to `θ_{α,r}`.
pub fn mediator_grad_theta_alpha(
    state: &MediatorState,
    data: &MediationDataset,
    bases: &BasisSet,
    region: usize,
    priors: &Priors,
) -> Result<DVector<f64>> {
    if region >= bases.n_regions() {
        return invalid(format!("region {region} out of range"));
    }
    let resid = mediator_residuals(state, data, bases)?;
    let b = &bases.regions[region];
    let theta = &state.theta_alpha[region];
    let latent = &b.q * theta;
    let g_vox = DVector::from_iterator(
        b.n_voxels(),
        b.voxels.iter().enumerate().map(|(k, &j)| {
            soft_threshold_grad(latent[k], state.nu_alpha) * resid.column(j).dot(&data.x)
        }),
    );
    let mut grad = b.q.tr_mul(&g_vox) / state.sigma2_m;
    if priors.include_priors {
        for l in 0..grad.len() {
            grad[l] -= theta[l] / (state.sigma2_alpha * b.eigvals[l]);
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel_basis::{BasisSize, KernelSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{Continuous, Normal};

    pub(crate) fn toy(n: usize, side: usize, q: usize, seed: u64) -> (MediationDataset, BasisSet) {
        let grid = VoxelGrid::image(side, side, 2).unwrap();
        let bases = BasisSet::build(&grid, &KernelSpec::matern(1.0, 0.01), BasisSize::Fixed(3)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = grid.len();
        let m = DMatrix::from_fn(n, p, |_, _| rng.random_range(-2.0..2.0));
        let c = DMatrix::from_fn(n, q, |_, _| rng.random_range(-1.0..1.0));
        let x = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let y = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        (MediationDataset::new(y, x, c, m, grid).unwrap(), bases)
    }

    fn random_outcome(bases: &BasisSet, q: usize, rng: &mut ChaCha8Rng) -> OutcomeState {
        OutcomeState {
            theta_beta: bases.regions.iter().map(|b| DVector::from_fn(b.n_basis(), |_, _| rng.random_range(-2.0..2.0))).collect(),
            gamma: rng.random_range(-1.0..1.0),
            xi: DVector::from_fn(q, |_, _| rng.random_range(-1.0..1.0)),
            sigma2_y: rng.random_range(0.2..2.0),
            sigma2_beta: rng.random_range(0.2..2.0),
            nu_beta: rng.random_range(0.0..0.5),
        }
    }

    fn random_mediator(bases: &BasisSet, n: usize, q: usize, rng: &mut ChaCha8Rng) -> MediatorState {
        MediatorState {
            theta_alpha: bases.regions.iter().map(|b| DVector::from_fn(b.n_basis(), |_, _| rng.random_range(-2.0..2.0))).collect(),
            theta_zeta: bases.regions.iter().map(|b| DMatrix::from_fn(b.n_basis(), q, |_, _| rng.random_range(-1.0..1.0))).collect(),
            theta_eta: bases.regions.iter().map(|b| DMatrix::from_fn(n, b.n_basis(), |_, _| rng.random_range(-1.0..1.0))).collect(),
            sigma2_m: rng.random_range(0.2..2.0),
            sigma2_alpha: rng.random_range(0.2..2.0),
            sigma2_eta: rng.random_range(0.2..2.0),
            sigma2_zeta: rng.random_range(0.2..2.0),
            nu_alpha: rng.random_range(0.0..0.5),
        }
    }

    #[test]
    fn intensity_measure_examples() {
        let g4 = VoxelGrid::line(4, 1).unwrap();
        assert_eq!(intensity_measure(&[2.0; 4], &g4).unwrap(), vec![0.5; 4]);
        assert_eq!(intensity_measure(&[0.0; 4], &g4).unwrap(), vec![0.0; 4]);
        let g2 = VoxelGrid::line(2, 1).unwrap();
        assert_eq!(intensity_measure(&[1.0, -3.0], &g2).unwrap(), vec![0.5, -1.5]);
        assert!(intensity_measure(&[1.0], &g2).is_err());
    }

    #[test]
    fn inner_product_via_intensity_measure() {
        let (data, bases) = toy(4, 6, 1, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let beta: Vec<f64> = (0..data.p()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let _ = bases;
        for i in 0..data.n() {
            let row: Vec<f64> = data.m.row(i).iter().copied().collect();
            let meas = intensity_measure(&row, &data.grid).unwrap();
            let a: f64 = beta.iter().zip(&meas).map(|(b, m)| b * m).sum();
            let b: f64 = beta.iter().zip(&row).map(|(b, m)| b * m).sum::<f64>() / data.p() as f64;
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-300));
        }
    }

    #[test]
    fn outcome_logpost_at_zero_residuals() {
        let (mut data, bases) = toy(7, 4, 1, 1);
        data.y = DVector::zeros(7);
        let mut st = OutcomeState::zeros(&bases, 1, 0.3);
        st.sigma2_y = 0.7;
        let lp = outcome_logpost(&st, &data, &bases, &Priors::flat()).unwrap();
        let want = -3.5 * (2.0 * std::f64::consts::PI * 0.7).ln();
        assert!((lp - want).abs() < 1e-12);
        st.sigma2_y = 1.4;
        let lp2 = outcome_logpost(&st, &data, &bases, &Priors::flat()).unwrap();
        assert!((lp - lp2 - 3.5 * 2f64.ln()).abs() < 1e-12);
        st.sigma2_y = 0.0;
        assert!(matches!(outcome_logpost(&st, &data, &bases, &Priors::flat()), Err(BimaError::InvalidState(_))));
    }

    #[test]
    fn outcome_logpost_matches_direct_density() {
        let (data, bases) = toy(5, 4, 2, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let st = random_outcome(&bases, 2, &mut rng);
        // Oracle: explicit loops over voxels and statrs densities.
        let latent = bases.latent(&st.theta_beta).unwrap();
        let mut want = 0.0;
        for i in 0..data.n() {
            let mut mean = st.gamma * data.x[i];
            for k in 0..2 {
                mean += st.xi[k] * data.c[(i, k)];
            }
            for j in 0..data.p() {
                let l = latent[j];
                let beta = if l.abs() > st.nu_beta { l - l.signum() * st.nu_beta } else { 0.0 };
                mean += beta * data.m[(i, j)] / data.p() as f64;
            }
            want += Normal::new(mean, st.sigma2_y.sqrt()).unwrap().ln_pdf(data.y[i]);
        }
        for (t, b) in st.theta_beta.iter().zip(&bases.regions) {
            for l in 0..t.len() {
                want += Normal::new(0.0, (st.sigma2_beta * b.eigvals[l]).sqrt()).unwrap().ln_pdf(t[l]);
            }
        }
        let s0 = Normal::new(0.0, 10.0).unwrap();
        want += s0.ln_pdf(st.gamma) + s0.ln_pdf(st.xi[0]) + s0.ln_pdf(st.xi[1]);
        let got = outcome_logpost(&st, &data, &bases, &Priors::default()).unwrap();
        assert!((got - want).abs() < 1e-10 * want.abs());
    }

    #[test]
    fn outcome_translation_invariance() {
        let (data, bases) = toy(6, 4, 1, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let st = random_outcome(&bases, 1, &mut rng);
        let mut shifted_data = data.clone();
        shifted_data.x = DVector::from_element(6, 1.0);
        let mut base = st.clone();
        base.gamma = 0.0;
        let mut shifted = st.clone();
        shifted.gamma = 2.5;
        shifted_data.y = data.y.add_scalar(2.5);
        let mut orig_data = data.clone();
        orig_data.x = DVector::from_element(6, 1.0);
        let a = outcome_logpost(&base, &orig_data, &bases, &Priors::flat()).unwrap();
        let b = outcome_logpost(&shifted, &shifted_data, &bases, &Priors::flat()).unwrap();
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn outcome_gradient_zero_at_origin_with_threshold() {
        let (mut data, bases) = toy(5, 4, 1, 4);
        data.y.fill(0.0);
        data.m.fill(0.0);
        let st = OutcomeState::zeros(&bases, 1, 0.5);
        for r in 0..bases.n_regions() {
            let g = outcome_grad_theta(&st, &data, &bases, r, &Priors::default()).unwrap();
            assert!(g.amax() == 0.0);
        }
        assert!(outcome_grad_theta(&st, &data, &bases, 99, &Priors::default()).is_err());
    }

    #[test]
    fn outcome_gradient_linear_case_closed_form() {
        let (data, bases) = toy(6, 4, 1, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut st = random_outcome(&bases, 1, &mut rng);
        st.nu_beta = 0.0;
        // With no threshold the model is linear: Y = Σ_r Z_r θ_r + W γ̃ + ε,
        // Z_r = M_r Q_r / p, so ∇_r = Z_rᵀ e / σ² - D_r⁻¹ θ_r / σ_β².
        let e = outcome_residuals(&st, &data, &bases).unwrap();
        for (r, b) in bases.regions.iter().enumerate() {
            let m_r = DMatrix::from_fn(data.n(), b.n_voxels(), |i, k| data.m[(i, b.voxels[k])]);
            let z = m_r * &b.q / data.p() as f64;
            let mut want = z.tr_mul(&e) / st.sigma2_y;
            for l in 0..want.len() {
                want[l] -= st.theta_beta[r][l] / (st.sigma2_beta * b.eigvals[l]);
            }
            let got = outcome_grad_theta(&st, &data, &bases, r, &Priors::default()).unwrap();
            assert!((got - want).amax() < 1e-10);
        }
    }

    #[test]
    fn mediator_logpost_examples() {
        let (mut data, bases) = toy(3, 4, 1, 7);
        data.m.fill(0.0);
        let mut st = MediatorState::zeros(&bases, 3, 1, 0.2);
        st.sigma2_m = 0.6;
        let lp = mediator_logpost(&st, &data, &bases, &Priors::flat()).unwrap();
        let np = 3.0 * 16.0;
        assert!((lp + 0.5 * np * (2.0 * std::f64::consts::PI * 0.6).ln()).abs() < 1e-10);

        // Shift M by a constant absorbed into η: likelihood unchanged.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let st = random_mediator(&bases, 3, 1, &mut rng);
        let (data, _) = toy(3, 4, 1, 7);
        let base = mediator_logpost(&st, &data, &bases, &Priors::flat()).unwrap();
        let mut shifted_data = data.clone();
        let mut shifted = st.clone();
        let shift = DVector::from_fn(2, |l, _| 0.4 - 0.3 * l as f64);
        for (r, b) in bases.regions.iter().enumerate() {
            let s = DVector::from_fn(3, |l, _| 0.4 - 0.3 * (l % 2) as f64 + 0.1 * r as f64);
            let surf = &b.q * &s;
            for i in 0..3 {
                for l in 0..3 {
                    shifted.theta_eta[r][(i, l)] += s[l];
                }
                for (k, &j) in b.voxels.iter().enumerate() {
                    shifted_data.m[(i, j)] += surf[k];
                }
            }
        }
        let _ = shift;
        let moved = mediator_logpost(&shifted, &shifted_data, &bases, &Priors::flat()).unwrap();
        assert!((base - moved).abs() < 1e-9 * base.abs());
    }

    #[test]
    fn mediator_logpost_matches_direct_density() {
        let (data, bases) = toy(4, 4, 2, 21);
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let st = random_mediator(&bases, 4, 2, &mut rng);
        let alpha = eval_field(&bases, &st.theta_alpha, st.nu_alpha).unwrap();
        let mut want = 0.0;
        for (r, b) in bases.regions.iter().enumerate() {
            for (k, &j) in b.voxels.iter().enumerate() {
                for i in 0..data.n() {
                    let mut mean = alpha[j] * data.x[i];
                    for l in 0..b.n_basis() {
                        let mut coef = st.theta_eta[r][(i, l)];
                        for kk in 0..2 {
                            coef += st.theta_zeta[r][(l, kk)] * data.c[(i, kk)];
                        }
                        mean += b.q[(k, l)] * coef;
                    }
                    want += Normal::new(mean, st.sigma2_m.sqrt()).unwrap().ln_pdf(data.m[(i, j)]);
                }
            }
            for l in 0..b.n_basis() {
                let lam = b.eigvals[l];
                want += Normal::new(0.0, (st.sigma2_alpha * lam).sqrt()).unwrap().ln_pdf(st.theta_alpha[r][l]);
                for kk in 0..2 {
                    want += Normal::new(0.0, (st.sigma2_zeta * lam).sqrt()).unwrap().ln_pdf(st.theta_zeta[r][(l, kk)]);
                }
                for i in 0..data.n() {
                    want += Normal::new(0.0, (st.sigma2_eta * lam).sqrt()).unwrap().ln_pdf(st.theta_eta[r][(i, l)]);
                }
            }
        }
        let got = mediator_logpost(&st, &data, &bases, &Priors::default()).unwrap();
        assert!((got - want).abs() < 1e-10 * want.abs());
    }

    #[test]
    fn mediator_gradient_prior_only_without_exposure() {
        let (mut data, bases) = toy(4, 4, 1, 31);
        data.x.fill(0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let st = random_mediator(&bases, 4, 1, &mut rng);
        for (r, b) in bases.regions.iter().enumerate() {
            let g = mediator_grad_theta_alpha(&st, &data, &bases, r, &Priors::default()).unwrap();
            let want = DVector::from_fn(b.n_basis(), |l, _| -st.theta_alpha[r][l] / (st.sigma2_alpha * b.eigvals[l]));
            assert!((g - want).amax() < 1e-12);
        }
    }

    #[test]
    fn mediator_gradient_linear_case_closed_form() {
        let (data, bases) = toy(5, 4, 1, 41);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut st = random_mediator(&bases, 5, 1, &mut rng);
        st.nu_alpha = 0.0;
        let resid = mediator_residuals(&st, &data, &bases).unwrap();
        for (r, b) in bases.regions.iter().enumerate() {
            // d/dθ of -Σ_i ‖R_i - Q θ X_i‖²/(2σ²) = Qᵀ Σ_i X_i R_i / σ².
            let mut s = DVector::zeros(b.n_voxels());
            for (k, &j) in b.voxels.iter().enumerate() {
                for i in 0..5 {
                    s[k] += data.x[i] * resid[(i, j)];
                }
            }
            let mut want = b.q.tr_mul(&s) / st.sigma2_m;
            for l in 0..want.len() {
                want[l] -= st.theta_alpha[r][l] / (st.sigma2_alpha * b.eigvals[l]);
            }
            let got = mediator_grad_theta_alpha(&st, &data, &bases, r, &Priors::default()).unwrap();
            assert!((got - want).amax() < 1e-10);
        }
    }

    #[test]
    fn dataset_validation() {
        let grid = VoxelGrid::line(3, 1).unwrap();
        let ok = MediationDataset::new(
            DVector::zeros(3),
            DVector::zeros(3),
            DMatrix::zeros(3, 1),
            DMatrix::zeros(3, 3),
            grid.clone(),
        );
        assert!(ok.is_ok());
        let too_few = MediationDataset::new(DVector::zeros(2), DVector::zeros(2), DMatrix::zeros(2, 1), DMatrix::zeros(2, 3), grid.clone());
        assert!(too_few.is_err());
        let mut m = DMatrix::zeros(3, 3);
        m[(0, 0)] = f64::NAN;
        assert!(MediationDataset::new(DVector::zeros(3), DVector::zeros(3), DMatrix::zeros(3, 1), m, grid).is_err());
    }
}
