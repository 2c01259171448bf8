//! Soft-thresholded Gaussian process fields.

use nalgebra::DVector;

use crate::error::Result;
use crate::kernel_basis::{check_shapes, BasisSet};

/// `T_nu(x) = (x - sgn(x) nu) 1(|x| > nu)`.
#[inline]
pub fn soft_threshold(x: f64, nu: f64) -> f64 {
    if x > nu {
        x - nu
    } else if x < -nu {
        x + nu
    } else {
        0.0
    }
}

/// Subgradient used by the Langevin proposals: `1(|x| >= nu)`.
#[inline]
pub fn soft_threshold_grad(x: f64, nu: f64) -> f64 {
    if x.abs() >= nu {
        1.0
    } else {
        0.0
    }
}

/// Per-voxel `T_nu(Q_r θ_r)` over the whole grid.
pub fn eval_field(bases: &BasisSet, theta: &[DVector<f64>], nu: f64) -> Result<Vec<f64>> {
    let mut latent = bases.latent(theta)?;
    for v in latent.iter_mut() {
        *v = soft_threshold(*v, nu);
    }
    Ok(latent)
}

/// A thresholded field together with the coefficients that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdedField {
    theta: Vec<DVector<f64>>,
    nu: f64,
    latent: Vec<f64>,
    values: Vec<f64>,
}

impl ThresholdedField {
    pub fn new(bases: &BasisSet, theta: Vec<DVector<f64>>, nu: f64) -> Result<Self> {
        check_shapes(bases, &theta)?;
        let latent = bases.latent(&theta)?;
        let values = latent.iter().map(|&v| soft_threshold(v, nu)).collect();
        Ok(Self {
            theta,
            nu,
            latent,
            values,
        })
    }

    pub fn theta(&self) -> &[DVector<f64>] {
        &self.theta
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn latent(&self) -> &[f64] {
        &self.latent
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Replace one region's coefficients; only that region's voxels are recomputed.
    pub fn set_region(&mut self, bases: &BasisSet, region: usize, theta_r: DVector<f64>) -> Result<()> {
        let b = &bases.regions[region];
        if theta_r.len() != b.n_basis() {
            return crate::error::invalid("region coefficient length mismatch");
        }
        let local = &b.q * &theta_r;
        for (k, &j) in b.voxels.iter().enumerate() {
            self.latent[j] = local[k];
            self.values[j] = soft_threshold(local[k], self.nu);
        }
        self.theta[region] = theta_r;
        Ok(())
    }

    pub fn support_size(&self) -> usize {
        self.values.iter().filter(|v| **v != 0.0).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel_basis::{BasisSize, KernelFamily, KernelSpec, RegionBasis};
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    #[test]
    fn threshold_examples() {
        assert_eq!(soft_threshold(0.3, 0.5), 0.0);
        assert!((soft_threshold(1.2, 0.5) - 0.7).abs() < 1e-15);
        assert!((soft_threshold(-0.8, 0.5) + 0.3).abs() < 1e-15);
        assert_eq!(soft_threshold_grad(0.49, 0.5), 0.0);
        assert_eq!(soft_threshold_grad(0.5, 0.5), 1.0);
        assert_eq!(soft_threshold_grad(-2.0, 0.5), 1.0);
    }

    fn two_voxel_bases() -> BasisSet {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let b = RegionBasis {
            region: 0,
            voxels: vec![0, 1],
            q: DMatrix::from_column_slice(2, 1, &[h, h]),
            eigvals: DVector::from_element(1, 1.0),
            cutoff_frac: 1.0,
            kernel: KernelFamily::Matern { u: 1.0, rho: 1.0 },
        };
        BasisSet::new(vec![b], 2).unwrap()
    }

    #[test]
    fn eval_field_examples() {
        let bases = two_voxel_bases();
        let theta = vec![DVector::from_element(1, 2f64.sqrt())];
        let v = eval_field(&bases, &theta, 0.5).unwrap();
        assert!((v[0] - 0.5).abs() < 1e-15 && (v[1] - 0.5).abs() < 1e-15);
        assert_eq!(eval_field(&bases, &[DVector::zeros(1)], 0.5).unwrap(), vec![0.0, 0.0]);
        assert!(eval_field(&bases, &[DVector::zeros(2)], 0.5).is_err());

        let grid = crate::grid::VoxelGrid::image(6, 6, 1).unwrap();
        let bases = BasisSet::build(&grid, &KernelSpec::matern(1.0, 0.01), BasisSize::Fixed(6)).unwrap();
        let theta = vec![DVector::from_iterator(6, (0..6).map(|l| 0.3 * l as f64 - 0.7))];
        assert_eq!(eval_field(&bases, &theta, 0.0).unwrap(), bases.latent(&theta).unwrap());
    }

    #[test]
    fn region_update_matches_rebuild() {
        let grid = crate::grid::VoxelGrid::image(6, 6, 3).unwrap();
        let bases = BasisSet::build(&grid, &KernelSpec::matern(1.0, 0.01), BasisSize::Fixed(2)).unwrap();
        let mut f = ThresholdedField::new(&bases, bases.zeros(), 0.1).unwrap();
        let t = DVector::from_vec(vec![1.0, -0.5]);
        f.set_region(&bases, 4, t.clone()).unwrap();
        let mut theta = bases.zeros();
        theta[4] = t;
        let rebuilt = ThresholdedField::new(&bases, theta, 0.1).unwrap();
        assert_eq!(f, rebuilt);
    }

    proptest! {
        #[test]
        fn lipschitz(x in -10.0f64..10.0, y in -10.0f64..10.0, nu in 0.0f64..5.0) {
            prop_assert!((soft_threshold(x, nu) - soft_threshold(y, nu)).abs() <= (x - y).abs() * (1.0 + 1e-12) + 1e-14);
        }

        #[test]
        fn magnitude_and_sign(x in -10.0f64..10.0, nu in 0.0f64..5.0) {
            let t = soft_threshold(x, nu);
            prop_assert!((t.abs() - (x.abs() - nu).max(0.0)).abs() < 1e-12);
            prop_assert!(t == 0.0 || t.signum() == x.signum());
        }

        #[test]
        fn idempotent_reconstruction(x in -10.0f64..10.0, nu in 0.0f64..5.0) {
            let t = soft_threshold(x, nu);
            if t != 0.0 {
                prop_assert!((soft_threshold(t + t.signum() * nu, nu) - t).abs() < 1e-12);
            }
        }

        #[test]
        fn support_shrinks_with_threshold(seed in 0u64..50, nu1 in 0.0f64..1.0, dnu in 0.0f64..1.0) {
            use rand::{Rng, SeedableRng};
            let grid = crate::grid::VoxelGrid::image(6, 6, 2).unwrap();
            let bases = BasisSet::build(&grid, &KernelSpec::matern(1.0, 0.01), BasisSize::Fixed(4)).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let theta: Vec<DVector<f64>> = (0..4).map(|_| DVector::from_fn(4, |_, _| rng.random_range(-2.0..2.0))).collect();
            let a = ThresholdedField::new(&bases, theta.clone(), nu1).unwrap();
            let b = ThresholdedField::new(&bases, theta, nu1 + dnu).unwrap();
            prop_assert!(b.support_size() <= a.support_size());
        }
    }
}
