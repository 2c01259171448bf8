//! Two-fold predictive checks of the outcome model over threshold and kernel grids.

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::kernel_basis::{BasisSet, BasisSize, KernelFamily, KernelSpec};
use crate::sampler::{run_outcome_chain, ChainTrace, SamplerConfig};
use crate::sem_model::MediationDataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub nu: f64,
    /// Multiplier applied to the kernel range; 1 for threshold grids.
    pub rho_scale: f64,
    pub train_mse: f64,
    pub test_mse: f64,
}

/// Shuffle subjects with `seed` and cut them in half; the first half trains.
pub fn split_subjects(n: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 4 {
        return invalid(format!("need at least 4 subjects to split, got {n}"));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = idx.split_off(n / 2);
    idx.sort_unstable();
    let mut test = test;
    test.sort_unstable();
    Ok((idx, test))
}

/// Outcome predictions from the posterior means of the field and fixed effects.
pub fn predict_outcome(trace: &ChainTrace, bases: &BasisSet, data: &MediationDataset) -> Result<DVector<f64>> {
    if trace.fixed.ncols() != 1 + data.q() {
        return invalid("trace does not hold outcome fixed effects for this dataset");
    }
    let beta = DVector::from_vec(trace.field_mean(bases)?);
    let xi = DVector::from_fn(data.q(), |k, _| trace.fixed_mean(1 + k));
    Ok((&data.m * beta) / data.p() as f64 + &data.x * trace.fixed_mean(0) + &data.c * xi)
}

pub fn prediction_mse(trace: &ChainTrace, bases: &BasisSet, data: &MediationDataset) -> Result<f64> {
    let pred = predict_outcome(trace, bases, data)?;
    Ok((pred - &data.y).norm_squared() / data.n() as f64)
}

fn fit_and_score(
    train: &MediationDataset,
    test: &MediationDataset,
    bases: &BasisSet,
    config: &SamplerConfig,
) -> Result<(f64, f64)> {
    let trace = run_outcome_chain(train, bases, config)?;
    Ok((prediction_mse(&trace, bases, train)?, prediction_mse(&trace, bases, test)?))
}

/// Train/test MSE of the outcome model for each threshold in `nus`.
pub fn threshold_grid(
    data: &MediationDataset,
    bases: &BasisSet,
    nus: &[f64],
    config: &SamplerConfig,
    split_seed: u64,
) -> Result<Vec<SensitivityRow>> {
    if nus.is_empty() {
        return invalid("threshold grid is empty");
    }
    let (tr, te) = split_subjects(data.n(), split_seed)?;
    let (train, test) = (data.subset(&tr)?, data.subset(&te)?);
    nus.iter()
        .map(|&nu| {
            let cfg = SamplerConfig { nu, ..config.clone() };
            let (train_mse, test_mse) = fit_and_score(&train, &test, bases, &cfg)?;
            Ok(SensitivityRow { nu, rho_scale: 1.0, train_mse, test_mse })
        })
        .collect()
}

/// Scale the kernel range: `rho` for Matérn, `1/b` for the modified squared exponential.
pub fn scale_kernel(spec: &KernelSpec, factor: f64) -> Result<KernelSpec> {
    if !(factor.is_finite() && factor > 0.0) {
        return invalid(format!("kernel scale factor must be positive, got {factor}"));
    }
    let family = match spec.family {
        KernelFamily::Matern { u, rho } => KernelFamily::Matern { u, rho: rho * factor },
        KernelFamily::ModifiedSe { a, b } => KernelFamily::ModifiedSe { a, b: b / factor },
    };
    let per_region = spec.per_region.iter().map(|(&r, &(u, rho))| (r, (u, rho * factor))).collect();
    Ok(KernelSpec { family, per_region })
}

/// Train/test MSE for each kernel range factor at a fixed threshold.
pub fn kernel_grid(
    data: &MediationDataset,
    kernel: &KernelSpec,
    size: BasisSize,
    scales: &[f64],
    config: &SamplerConfig,
    split_seed: u64,
) -> Result<Vec<SensitivityRow>> {
    if scales.is_empty() {
        return invalid("kernel grid is empty");
    }
    let (tr, te) = split_subjects(data.n(), split_seed)?;
    let (train, test) = (data.subset(&tr)?, data.subset(&te)?);
    scales
        .iter()
        .map(|&s| {
            let bases = BasisSet::build(&data.grid, &scale_kernel(kernel, s)?, size)?;
            let (train_mse, test_mse) = fit_and_score(&train, &test, &bases, config)?;
            Ok(SensitivityRow { nu: config.nu, rho_scale: s, train_mse, test_mse })
        })
        .collect()
}

pub fn rows_to_csv(rows: &[SensitivityRow]) -> String {
    let mut out = String::from("nu,rho_scale,train_mse,test_mse\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", r.nu, r.rho_scale, r.train_mse, r.test_mse));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::InitStrategy;
    use crate::simgen::{generate, SimDesign};

    #[test]
    fn split_is_a_seeded_partition() {
        let (a, b) = split_subjects(11, 3).unwrap();
        assert_eq!(a.len(), 5);
        assert_eq!(b.len(), 6);
        let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..11).collect::<Vec<_>>());
        assert_eq!(split_subjects(11, 3).unwrap(), (a.clone(), b));
        assert_ne!(split_subjects(11, 4).unwrap().0, a);
        assert!(split_subjects(3, 0).is_err());
    }

    #[test]
    fn single_threshold_gives_one_row() {
        let design = SimDesign { n: 20, ..SimDesign::default() };
        let (data, _) = generate(&design).unwrap();
        let bases = BasisSet::build(&data.grid, &KernelSpec::matern(0.2, 2.0), BasisSize::Fixed(3)).unwrap();
        let config = SamplerConfig { iters: 60, thin: 2, init: InitStrategy::Zero, ..SamplerConfig::default() };
        let rows = threshold_grid(&data, &bases, &[0.5], &config, 1).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].train_mse.is_finite() && rows[0].test_mse.is_finite());
        assert_eq!(rows_to_csv(&rows).lines().count(), 2);
    }

    #[test]
    fn kernel_scaling() {
        let k = scale_kernel(&KernelSpec::matern(0.2, 2.0), 0.5).unwrap();
        assert_eq!(k.family, KernelFamily::Matern { u: 0.2, rho: 1.0 });
        let k = scale_kernel(&KernelSpec::modified_se(0.01, 10.0), 2.0).unwrap();
        assert_eq!(k.family, KernelFamily::ModifiedSe { a: 0.01, b: 5.0 });
        assert!(scale_kernel(&KernelSpec::matern(0.2, 2.0), 0.0).is_err());
    }
}
