//! Synthetic mediation datasets with known spatial effects.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, BimaError, Result};
use crate::grid::VoxelGrid;
use crate::kernel_basis::{BasisSet, BasisSize, KernelSpec};
use crate::mediation::{selection_metrics, MediationReport};
use crate::sampler::DesignProjector;
use crate::sem_model::MediationDataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Pattern {
    /// One blob per region.
    Dense,
    /// Larger blobs in half of the regions, nothing elsewhere.
    Sparse,
    Custom { alpha0: Vec<f64>, beta0: Vec<f64> },
}

impl Pattern {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "dense" => Ok(Self::Dense),
            "sparse" => Ok(Self::Sparse),
            _ => invalid(format!("unknown pattern '{s}' (expected dense or sparse)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimDesign {
    pub n: usize,
    pub side_x: usize,
    pub side_y: usize,
    /// Regions per side; the image has `blocks²` equal regions.
    pub blocks: usize,
    pub pattern: Pattern,
    pub sigma_y: f64,
    pub sigma_m: f64,
    /// Threshold that scales the peak amplitude `2 nu_true peak_ratio`.
    pub nu_true: f64,
    /// Peak amplitude in units of `2 nu_true`; effects fall to zero at blob edges.
    pub peak_ratio: f64,
    pub gamma0: f64,
    pub xi0: Vec<f64>,
    pub zeta_scale: f64,
    pub eta_scale: f64,
    /// Share of the active voxels per region for the dense pattern.
    pub dense_frac: f64,
    /// Share of all voxels for the sparse pattern.
    pub sparse_frac: f64,
    /// Kernel and per-region basis fraction for the smooth nuisance fields.
    pub kernel: KernelSpec,
    pub basis_frac: f64,
    pub binary_exposure: bool,
    pub seed: u64,
}

impl Default for SimDesign {
    fn default() -> Self {
        Self {
            n: 200,
            side_x: 20,
            side_y: 20,
            blocks: 2,
            pattern: Pattern::Dense,
            sigma_y: 0.1,
            sigma_m: 0.5,
            nu_true: 0.5,
            peak_ratio: 1.5,
            gamma0: 1.0,
            xi0: vec![0.5, -0.5],
            zeta_scale: 1.0,
            eta_scale: 10.0,
            dense_frac: 0.25,
            sparse_frac: 0.06,
            kernel: KernelSpec::matern(0.2, 2.0),
            basis_frac: 0.2,
            binary_exposure: false,
            seed: 0,
        }
    }
}

impl SimDesign {
    pub fn validate(&self) -> Result<()> {
        if self.n < self.xi0.len() + 2 {
            return invalid(format!("need n >= q + 2 subjects, got n = {}", self.n));
        }
        let finite = [
            self.sigma_y,
            self.sigma_m,
            self.nu_true,
            self.peak_ratio,
            self.zeta_scale,
            self.eta_scale,
        ];
        if finite.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return invalid("noise scales, threshold and amplitudes must be finite and non-negative");
        }
        if self.peak_ratio < 1.0 {
            return invalid("peak_ratio must be at least 1");
        }
        if !(self.dense_frac > 0.0 && self.dense_frac < 1.0 && self.sparse_frac > 0.0 && self.sparse_frac < 1.0) {
            return invalid("support fractions must lie in (0,1)");
        }
        if !(self.basis_frac > 0.0 && self.basis_frac <= 1.0) {
            return invalid("basis_frac must lie in (0,1]");
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<VoxelGrid> {
        VoxelGrid::image(self.side_x, self.side_y, self.blocks)
    }

    /// Bases used to draw the nuisance fields; simulation fits reuse them.
    pub fn bases(&self, grid: &VoxelGrid) -> Result<BasisSet> {
        BasisSet::build(grid, &self.kernel, BasisSize::RegionFraction(self.basis_frac))
    }
}

/// Ground truth behind a simulated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTruth {
    pub alpha0: Vec<f64>,
    pub beta0: Vec<f64>,
    pub svme0: Vec<f64>,
    pub gamma0: f64,
    pub xi0: Vec<f64>,
    /// `q × p` confounder effects on the mediator.
    pub zeta0: DMatrix<f64>,
    /// `n × p` subject-specific effects.
    pub eta: DMatrix<f64>,
}

impl SimTruth {
    pub fn support(&self) -> Vec<bool> {
        self.svme0.iter().map(|v| *v != 0.0).collect()
    }
}

/// Voxels of `members` ordered by distance to `center`, ties by index.
fn nearest(grid: &VoxelGrid, members: &[usize], center: &[f64]) -> Vec<(usize, f64)> {
    let mut d: Vec<(usize, f64)> = members
        .iter()
        .map(|&j| {
            let c = grid.coord(j);
            (j, c.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
        })
        .collect();
    d.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    d
}

struct Blob {
    region: usize,
    center: Vec<f64>,
    size: usize,
    sign: f64,
}

fn paint(grid: &VoxelGrid, blob: &Blob, peak: f64, field: &mut [f64]) -> Result<()> {
    let members = grid.members(blob.region);
    let order = nearest(grid, members, &blob.center);
    if blob.size == 0 || blob.size >= members.len() {
        return Err(BimaError::Design(format!(
            "blob of {} voxels does not fit region {}",
            blob.size, blob.region
        )));
    }
    let chosen = &order[..blob.size];
    // The blob must not touch the region boundary.
    let lo: Vec<f64> = (0..grid.dim())
        .map(|a| members.iter().map(|&j| grid.coord(j)[a]).fold(f64::INFINITY, f64::min))
        .collect();
    let hi: Vec<f64> = (0..grid.dim())
        .map(|a| members.iter().map(|&j| grid.coord(j)[a]).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    for &(j, _) in chosen {
        let c = grid.coord(j);
        if (0..grid.dim()).any(|a| c[a] <= lo[a] || c[a] >= hi[a]) {
            return Err(BimaError::Design(format!(
                "blob in region {} reaches the region boundary",
                blob.region
            )));
        }
    }
    // Zero at the first voxel outside the blob, so the field is continuous.
    let edge = order[blob.size].1.max(1e-12);
    for &(j, d) in chosen {
        field[j] = blob.sign * peak * (1.0 - (d / edge).powi(2));
    }
    Ok(())
}

fn region_center(grid: &VoxelGrid, r: usize) -> Vec<f64> {
    let m = grid.members(r);
    (0..grid.dim())
        .map(|a| m.iter().map(|&j| grid.coord(j)[a]).sum::<f64>() / m.len() as f64)
        .collect()
}

/// Voxel spacing along each axis (smallest positive coordinate gap).
fn spacing(grid: &VoxelGrid) -> Vec<f64> {
    (0..grid.dim())
        .map(|a| {
            let mut v: Vec<f64> = (0..grid.len()).map(|j| grid.coord(j)[a]).collect();
            v.sort_by(|x, y| x.total_cmp(y));
            v.windows(2).map(|w| w[1] - w[0]).filter(|d| *d > 1e-12).fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// True exposure and mediator effect fields for `design.pattern`.
///
/// Each active region carries one blob for `α₀` and a slightly smaller,
/// slightly shifted blob for `β₀`, so the indirect effect is nonzero where
/// they overlap. `α₀` is positive; the sign of `β₀` varies by region.
pub fn make_pattern<R: Rng + ?Sized>(grid: &VoxelGrid, design: &SimDesign, rng: &mut R) -> Result<(Vec<f64>, Vec<f64>)> {
    let p = grid.len();
    if let Pattern::Custom { alpha0, beta0 } = &design.pattern {
        if alpha0.len() != p || beta0.len() != p {
            return Err(BimaError::Design("custom fields do not match the grid".into()));
        }
        return Ok((alpha0.clone(), beta0.clone()));
    }
    let n_regions = grid.n_regions();
    let (active, frac): (Vec<usize>, f64) = match design.pattern {
        Pattern::Dense => ((0..n_regions).collect(), design.dense_frac),
        Pattern::Sparse => {
            let k = n_regions.div_ceil(2);
            let mut regions: Vec<usize> = (0..n_regions).collect();
            for i in 0..k {
                let j = rng.random_range(i..n_regions);
                regions.swap(i, j);
            }
            let mut chosen = regions[..k].to_vec();
            chosen.sort_unstable();
            (chosen, design.sparse_frac * n_regions as f64 / k as f64)
        }
        Pattern::Custom { .. } => unreachable!(),
    };
    let peak = 2.0 * design.nu_true * design.peak_ratio;
    let step = spacing(grid);
    let mut alpha0 = vec![0.0; p];
    let mut beta0 = vec![0.0; p];
    for r in active {
        let size = grid.members(r).len();
        let center = region_center(grid, r);
        let shift: Vec<f64> = step.iter().map(|s| s * rng.random_range(-0.5..0.5)).collect();
        let b_center: Vec<f64> = center.iter().zip(&shift).map(|(c, s)| c + s).collect();
        let b_size = (frac * size as f64).round() as usize;
        let a_size = ((1.2 * frac * size as f64).round() as usize).max(b_size);
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        paint(grid, &Blob { region: r, center, size: a_size, sign: 1.0 }, peak, &mut alpha0)?;
        paint(grid, &Blob { region: r, center: b_center, size: b_size, sign }, peak, &mut beta0)?;
    }
    Ok((alpha0, beta0))
}

/// Draw a dataset and its truth.
pub fn generate(design: &SimDesign) -> Result<(MediationDataset, SimTruth)> {
    let grid = design.grid()?;
    let bases = design.bases(&grid)?;
    generate_with_bases(design, &grid, &bases)
}

/// [`generate`] with precomputed nuisance bases.
pub fn generate_with_bases(
    design: &SimDesign,
    grid: &VoxelGrid,
    bases: &BasisSet,
) -> Result<(MediationDataset, SimTruth)> {
    design.validate()?;
    if bases.n_voxels() != grid.len() {
        return invalid("bases do not match the grid");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(design.seed);
    let (n, p, q) = (design.n, grid.len(), design.xi0.len());
    let (alpha0, beta0) = make_pattern(grid, design, &mut rng)?;
    let normal = |rng: &mut ChaCha8Rng| -> f64 { rng.sample(StandardNormal) };

    let x = DVector::from_fn(n, |_, _| {
        if design.binary_exposure {
            if rng.random::<bool>() { 1.0 } else { 0.0 }
        } else {
            normal(&mut rng)
        }
    });
    let c = DMatrix::from_fn(n, q, |_, _| normal(&mut rng));

    let mut zeta0 = DMatrix::zeros(q, p);
    for k in 0..q {
        for b in &bases.regions {
            let theta = DVector::from_fn(b.n_basis(), |l, _| design.zeta_scale * b.eigvals[l].sqrt() * normal(&mut rng));
            let field = &b.q * theta;
            for (i, &j) in b.voxels.iter().enumerate() {
                zeta0[(k, j)] = field[i];
            }
        }
    }

    let mut design_x = DMatrix::zeros(n, 1 + q);
    design_x.set_column(0, &x);
    for k in 0..q {
        design_x.set_column(1 + k, &c.column(k));
    }
    let projector = DesignProjector::new(&design_x)?;
    let mut eta = DMatrix::zeros(n, p);
    for b in &bases.regions {
        let raw = DMatrix::from_fn(n, b.n_basis(), |_, l| design.eta_scale * b.eigvals[l].sqrt() * normal(&mut rng));
        let theta = projector.project_out_matrix(&raw);
        let field = theta * b.q.transpose();
        for (i, &j) in b.voxels.iter().enumerate() {
            eta.set_column(j, &field.column(i));
        }
    }

    let mut m = &x * DVector::from_vec(alpha0.clone()).transpose() + &c * &zeta0 + &eta;
    for v in m.iter_mut() {
        *v += design.sigma_m * normal(&mut rng);
    }
    let beta = DVector::from_vec(beta0.clone());
    let xi = DVector::from_vec(design.xi0.clone());
    let mut y = (&m * &beta) / p as f64 + &x * design.gamma0 + &c * &xi;
    for v in y.iter_mut() {
        *v += design.sigma_y * normal(&mut rng);
    }
    let svme0 = alpha0.iter().zip(&beta0).map(|(a, b)| a * b).collect();
    let data = MediationDataset::new(y, x, c, m, grid.clone())?;
    Ok((
        data,
        SimTruth {
            alpha0,
            beta0,
            svme0,
            gamma0: design.gamma0,
            xi0: design.xi0.clone(),
            zeta0,
            eta,
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicationScore {
    pub fdr: f64,
    pub tpr: f64,
    pub acc: f64,
    pub mse_activation: f64,
}

/// Selection rates and mean squared error of the reported estimate over the
/// true active voxels.
pub fn score_one(report: &MediationReport, truth: &SimTruth) -> Result<ReplicationScore> {
    let p = truth.svme0.len();
    if report.estimate.len() != p {
        return invalid("report and truth cover different numbers of voxels");
    }
    let support = truth.support();
    let m = selection_metrics(&report.selected, &support);
    let active: Vec<usize> = (0..p).filter(|&j| support[j]).collect();
    let mse = if active.is_empty() {
        0.0
    } else {
        active
            .iter()
            .map(|&j| (report.estimate[j] - truth.svme0[j]).powi(2))
            .sum::<f64>()
            / active.len() as f64
    };
    Ok(ReplicationScore { fdr: m.fdr, tpr: m.tpr, acc: m.acc, mse_activation: mse })
}

/// Mean and standard deviation (×100) of each metric over replications.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub replications: usize,
    pub fdr: (f64, f64),
    pub tpr: (f64, f64),
    pub acc: (f64, f64),
    pub mse_activation: (f64, f64),
}

fn mean_sd_x100(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = if v.len() > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (100.0 * mean, 100.0 * sd)
}

pub fn summarize_scores(scores: &[ReplicationScore]) -> Result<ScoreSummary> {
    if scores.is_empty() {
        return invalid("no replications to summarize");
    }
    let col = |f: fn(&ReplicationScore) -> f64| -> Vec<f64> { scores.iter().map(f).collect() };
    Ok(ScoreSummary {
        replications: scores.len(),
        fdr: mean_sd_x100(&col(|s| s.fdr)),
        tpr: mean_sd_x100(&col(|s| s.tpr)),
        acc: mean_sd_x100(&col(|s| s.acc)),
        mse_activation: mean_sd_x100(&col(|s| s.mse_activation)),
    })
}

pub fn score_replication(reports: &[MediationReport], truths: &[SimTruth]) -> Result<ScoreSummary> {
    if reports.len() != truths.len() {
        return invalid("reports and truths differ in number");
    }
    let scores = reports
        .iter()
        .zip(truths)
        .map(|(r, t)| score_one(r, t))
        .collect::<Result<Vec<_>>>()?;
    summarize_scores(&scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mediation::SelectionMode;

    #[test]
    fn sparse_support_fraction() {
        let grid = VoxelGrid::image(20, 20, 2).unwrap();
        for seed in 0..10 {
            let design = SimDesign { pattern: Pattern::Sparse, ..SimDesign::default() };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (a, b) = make_pattern(&grid, &design, &mut rng).unwrap();
            let frac = a.iter().filter(|v| **v != 0.0).count() as f64 / 400.0;
            assert!(frac <= 0.1, "exposure support fraction {frac}");
            let frac = b.iter().filter(|v| **v != 0.0).count() as f64 / 400.0;
            assert!((0.04..=0.08).contains(&frac), "support fraction {frac}");
        }
    }

    #[test]
    fn amplitude_profile_overlap_and_determinism() {
        let grid = VoxelGrid::image(20, 20, 2).unwrap();
        let design = SimDesign::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (a, b) = make_pattern(&grid, &design, &mut rng).unwrap();
        let peak = 2.0 * design.nu_true * design.peak_ratio;
        assert!(a.iter().chain(&b).all(|v| v.abs() <= peak + 1e-12));
        assert!(a.iter().fold(0.0_f64, |m, v| m.max(v.abs())) > 0.9 * peak);
        // Values just inside a blob edge are small: the field has no jump.
        let edge_min = a.iter().filter(|v| **v != 0.0).fold(f64::INFINITY, |m, v| m.min(v.abs()));
        assert!(edge_min < 0.5 * peak);
        let sa = a.iter().filter(|v| **v != 0.0).count();
        let sb = b.iter().filter(|v| **v != 0.0).count();
        let both = a.iter().zip(&b).filter(|(x, y)| **x != 0.0 && **y != 0.0).count();
        assert!(both * 2 >= sa && both * 2 >= sb);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(make_pattern(&grid, &design, &mut rng).unwrap(), (a, b));
    }

    #[test]
    fn oversized_blob_is_a_design_error() {
        let grid = VoxelGrid::image(20, 20, 2).unwrap();
        let design = SimDesign { dense_frac: 0.9, ..SimDesign::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(make_pattern(&grid, &design, &mut rng), Err(BimaError::Design(_))));
    }

    #[test]
    fn noiseless_outcome_identity_and_truth_constraint() {
        let design = SimDesign {
            n: 30,
            sigma_y: 0.0,
            sigma_m: 0.0,
            eta_scale: 3.0,
            ..SimDesign::default()
        };
        let (data, truth) = generate(&design).unwrap();
        let beta = DVector::from_vec(truth.beta0.clone());
        let xi = DVector::from_vec(truth.xi0.clone());
        let want = (&data.m * beta) / data.p() as f64 + &data.x * truth.gamma0 + &data.c * xi;
        assert!((want - &data.y).amax() < 1e-12);
        // Individual effects are orthogonal to (X, C) across subjects at every voxel.
        let resid = data.exposure_design().tr_mul(&truth.eta).amax();
        assert!(resid < 1e-10, "constraint residual {resid}");
        assert_eq!(generate(&design).unwrap().0, data);
    }

    #[test]
    fn mediator_noise_variance() {
        let design = SimDesign { n: 300, sigma_m: 0.7, ..SimDesign::default() };
        let (data, truth) = generate(&design).unwrap();
        let alpha = DVector::from_vec(truth.alpha0.clone());
        let mean = &data.x * alpha.transpose() + &data.c * &truth.zeta0 + &truth.eta;
        let resid = &data.m - mean;
        let var = resid.norm_squared() / resid.len() as f64;
        assert!((var / 0.49 - 1.0).abs() < 0.02, "variance {var}");
    }

    fn toy_report(estimate: Vec<f64>, selected: Vec<usize>) -> MediationReport {
        let p = estimate.len();
        MediationReport {
            n_draws: 1,
            x: 1.0,
            x_prime: 0.0,
            svme_mean: estimate.clone(),
            svme_ci: vec![(0.0, 0.0); p],
            pip: vec![0.0; p],
            estimate,
            nie_mean: 0.0,
            nie_ci: (0.0, 0.0),
            nde_mean: 0.0,
            nde_ci: (0.0, 0.0),
            mode: SelectionMode::Pip(0.1),
            threshold: 0.1,
            achieved_fdr: None,
            selected,
            region_table: Vec::new(),
        }
    }

    fn toy_truth(svme0: Vec<f64>) -> SimTruth {
        let p = svme0.len();
        SimTruth {
            alpha0: vec![0.0; p],
            beta0: vec![0.0; p],
            svme0,
            gamma0: 0.0,
            xi0: Vec::new(),
            zeta0: DMatrix::zeros(0, p),
            eta: DMatrix::zeros(0, p),
        }
    }

    #[test]
    fn perfect_recovery_scores() {
        let svme = vec![0.0, 1.5, -2.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0, 0.0];
        let report = toy_report(svme.clone(), vec![1, 2, 5]);
        let s = score_replication(&[report], &[toy_truth(svme)]).unwrap();
        assert_eq!(s.fdr.0, 0.0);
        assert_eq!(s.tpr.0, 100.0);
        assert_eq!(s.acc.0, 100.0);
        assert_eq!(s.mse_activation.0, 0.0);
    }

    #[test]
    fn hand_counted_toy() {
        // Truth {1,2,5}; selected {1,3}: TP 1, FP 1, FN 2, TN 6.
        let svme0 = vec![0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0];
        let mut est = vec![0.0; 10];
        est[1] = 0.5;
        est[3] = 0.2;
        let s = score_one(&toy_report(est, vec![1, 3]), &toy_truth(svme0)).unwrap();
        assert_eq!(s.fdr, 0.5);
        assert!((s.tpr - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.acc, 0.7);
        assert!((s.mse_activation - (0.25 + 1.0 + 1.0) / 3.0).abs() < 1e-15);
    }
}
