use bima_core::grid::VoxelGrid;
use bima_core::kernel_basis::{region_kernel_matrix, BasisSet, BasisSize, KernelSpec};
use bima_validation::oracle::jacobi_eigen;
use proptest::prelude::*;

#[test]
fn leading_eigenpairs_match_jacobi() {
    let grid = VoxelGrid::image(12, 12, 2).unwrap();
    let spec = KernelSpec::matern(0.5, 0.02);
    let bases = BasisSet::build(&grid, &spec, BasisSize::Fixed(10)).unwrap();
    for b in &bases.regions {
        let k = region_kernel_matrix(&grid, b.region, &spec).unwrap();
        let (vals, vecs) = jacobi_eigen(&k);
        for l in 0..b.n_basis() {
            assert!((b.eigvals[l] - vals[l]).abs() <= 1e-10 * vals[0]);
            // Eigenvalues here are simple, so each column matches up to sign.
            if (vals[l] - vals[l + 1]).abs() > 1e-6 * vals[0] && (l == 0 || (vals[l - 1] - vals[l]).abs() > 1e-6 * vals[0]) {
                let dot = b.q.column(l).dot(&vecs.column(l)).abs();
                assert!((dot - 1.0).abs() <= 1e-8, "column {l}: |<q, v>| = {dot}");
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn bases_are_orthonormal_and_nested(u in 0.3f64..3.0, rho in 0.01f64..2.0, cut in 0.5f64..0.95) {
        let grid = VoxelGrid::image(8, 8, 2).unwrap();
        let spec = KernelSpec::matern(u, rho);
        let small = BasisSet::build(&grid, &spec, BasisSize::Cutoff(cut)).unwrap();
        let large = BasisSet::build(&grid, &spec, BasisSize::Cutoff((cut + 0.04).min(1.0))).unwrap();
        for (s, l) in small.regions.iter().zip(&large.regions) {
            prop_assert!(s.orthonormality_error() <= 1e-10);
            prop_assert!(s.n_basis() <= l.n_basis());
            prop_assert!(s.eigvals.iter().all(|v| *v > 0.0));
            prop_assert!(s.eigvals.as_slice().windows(2).all(|w| w[0] >= w[1]));
        }
    }
}
