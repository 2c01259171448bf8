//! Covariance kernels on the voxel grid and truncated per-region eigenbases.
//!
//! Each region gets its own dense kernel matrix. The leading eigenvectors are
//! re-orthonormalized with a thin QR so that `QᵀQ = I` holds to machine
//! precision, which the conjugate updates downstream rely on.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{invalid, BimaError, Result};
use crate::grid::VoxelGrid;
use crate::special::ln_bessel_k;

/// Relative floor below which eigenpairs are treated as numerical null modes.
pub const NULL_MODE_REL: f64 = 1e-12;

/// Normalized Matérn correlation
/// `C_u(t) = 2^(1-u)/Gamma(u) * (sqrt(2u) t)^u * K_u(sqrt(2u) t)`.
pub fn matern_c(t: f64, u: f64) -> Result<f64> {
    if !t.is_finite() || t < 0.0 {
        return invalid(format!("Matérn argument must be finite and >= 0, got {t}"));
    }
    if !u.is_finite() || u <= 0.0 {
        return invalid(format!("Matérn smoothness must be > 0, got {u}"));
    }
    if t == 0.0 {
        return Ok(1.0);
    }
    let x = (2.0 * u).sqrt() * t;
    let ln_c = (1.0 - u) * std::f64::consts::LN_2 - ln_gamma(u) + u * x.ln() + ln_bessel_k(u, x);
    Ok(ln_c.exp().min(1.0))
}

/// Kernel family shared by all regions unless overridden.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KernelFamily {
    /// `C_u(‖s - s'‖² / rho)`; note the squared distance.
    Matern { u: f64, rho: f64 },
    /// `exp(-a (‖s‖² + ‖s'‖²) - b ‖s - s'‖²)`.
    ModifiedSe { a: f64, b: f64 },
}

impl KernelFamily {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelFamily::Matern { u, rho } => {
                if !(u > 0.0 && u.is_finite() && rho > 0.0 && rho.is_finite()) {
                    return invalid(format!("Matérn needs u > 0 and rho > 0 (u={u}, rho={rho})"));
                }
            }
            KernelFamily::ModifiedSe { a, b } => {
                if !(a >= 0.0 && a.is_finite() && b > 0.0 && b.is_finite()) {
                    return invalid(format!("modified SE needs a >= 0 and b > 0 (a={a}, b={b})"));
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, s: &[f64], s2: &[f64]) -> Result<f64> {
        if s.len() != s2.len() {
            return invalid(format!("point dimensions differ: {} vs {}", s.len(), s2.len()));
        }
        let sq_dist: f64 = s.iter().zip(s2).map(|(a, b)| (a - b) * (a - b)).sum();
        match *self {
            KernelFamily::Matern { u, rho } => matern_c(sq_dist / rho, u),
            KernelFamily::ModifiedSe { a, b } => {
                let n1: f64 = s.iter().map(|v| v * v).sum();
                let n2: f64 = s2.iter().map(|v| v * v).sum();
                Ok((-a * (n1 + n2) - b * sq_dist).exp())
            }
        }
    }
}

/// Kernel choice with optional per-region Matérn `(u, rho)` overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_region: BTreeMap<usize, (f64, f64)>,
}

impl KernelSpec {
    pub fn matern(u: f64, rho: f64) -> Self {
        Self {
            family: KernelFamily::Matern { u, rho },
            per_region: BTreeMap::new(),
        }
    }

    pub fn modified_se(a: f64, b: f64) -> Self {
        Self {
            family: KernelFamily::ModifiedSe { a, b },
            per_region: BTreeMap::new(),
        }
    }

    pub fn family_for(&self, region: usize) -> KernelFamily {
        match self.per_region.get(&region) {
            Some(&(u, rho)) => KernelFamily::Matern { u, rho },
            None => self.family,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.family.validate()?;
        for &(u, rho) in self.per_region.values() {
            KernelFamily::Matern { u, rho }.validate()?;
        }
        Ok(())
    }
}

/// Evaluate the kernel between two points using the base family.
pub fn kernel_eval(s: &[f64], s2: &[f64], spec: &KernelSpec) -> Result<f64> {
    spec.family.eval(s, s2)
}

/// How many eigenpairs to keep per region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", content = "value", rename_all = "snake_case")]
pub enum BasisSize {
    /// Smallest `L` whose leading eigenvalues reach this share of the positive spectrum.
    Cutoff(f64),
    /// `L = round(frac * p_r)`, at least 1.
    RegionFraction(f64),
    Fixed(usize),
}

/// Truncated orthonormal eigenbasis for one region.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionBasis {
    pub region: usize,
    /// Global voxel indices covered by this region, in row order of `q`.
    pub voxels: Vec<usize>,
    /// `p_r × L_r`, orthonormal columns.
    pub q: DMatrix<f64>,
    /// Nonincreasing, strictly positive.
    pub eigvals: DVector<f64>,
    /// Share of the positive spectrum captured by `eigvals`.
    pub cutoff_frac: f64,
    pub kernel: KernelFamily,
}

impl RegionBasis {
    pub fn n_basis(&self) -> usize {
        self.q.ncols()
    }

    pub fn n_voxels(&self) -> usize {
        self.q.nrows()
    }

    /// `max |QᵀQ - I|`.
    pub fn orthonormality_error(&self) -> f64 {
        let g = self.q.transpose() * &self.q;
        let mut worst: f64 = 0.0;
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g[(i, j)] - target).abs());
            }
        }
        worst
    }

    /// `Q diag(eigvals) Qᵀ`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let scaled = &self.q * DMatrix::from_diagonal(&self.eigvals);
        scaled * self.q.transpose()
    }
}

/// Dense kernel matrix over the voxels of one region.
pub fn region_kernel_matrix(grid: &VoxelGrid, region: usize, spec: &KernelSpec) -> Result<DMatrix<f64>> {
    if region >= grid.n_regions() {
        return invalid(format!("region {region} out of range"));
    }
    let family = spec.family_for(region);
    family.validate()?;
    let idx = grid.members(region);
    let m = idx.len();
    let mut k = DMatrix::zeros(m, m);
    for a in 0..m {
        for b in a..m {
            let v = family.eval(grid.coord(idx[a]), grid.coord(idx[b]))?;
            k[(a, b)] = v;
            k[(b, a)] = v;
        }
    }
    Ok(k)
}

/// Truncated eigenbasis of an arbitrary symmetric kernel matrix.
pub fn basis_from_kernel_matrix(
    k: DMatrix<f64>,
    region: usize,
    voxels: Vec<usize>,
    kernel: KernelFamily,
    size: BasisSize,
) -> Result<RegionBasis> {
    let m = k.nrows();
    if k.ncols() != m || voxels.len() != m {
        return invalid("kernel matrix must be square and match the voxel list");
    }
    match size {
        BasisSize::Cutoff(f) if !(f > 0.0 && f <= 1.0) => {
            return invalid(format!("cutoff fraction must be in (0,1], got {f}"));
        }
        BasisSize::RegionFraction(f) if !(f > 0.0 && f <= 1.0) => {
            return invalid(format!("region fraction must be in (0,1], got {f}"));
        }
        BasisSize::Fixed(0) => return invalid("fixed basis size must be positive"),
        _ => {}
    }
    let eig = SymmetricEigen::new(k);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let top = eig.eigenvalues[order[0]];
    if !(top > 0.0) {
        return Err(BimaError::DegenerateKernel(format!(
            "region {region}: no positive eigenvalue"
        )));
    }
    let kept: Vec<usize> = order
        .into_iter()
        .filter(|&i| eig.eigenvalues[i] > NULL_MODE_REL * top)
        .collect();
    let total: f64 = kept.iter().map(|&i| eig.eigenvalues[i]).sum();
    let n_keep = match size {
        BasisSize::Cutoff(frac) => {
            let goal = frac * total * (1.0 - 1e-12);
            let mut acc = 0.0;
            let mut l = kept.len();
            for (pos, &i) in kept.iter().enumerate() {
                acc += eig.eigenvalues[i];
                if acc >= goal {
                    l = pos + 1;
                    break;
                }
            }
            l
        }
        BasisSize::RegionFraction(frac) => ((frac * m as f64).round() as usize).clamp(1, kept.len()),
        BasisSize::Fixed(l) => l.min(kept.len()),
    };
    let chosen = &kept[..n_keep];
    let mut v = DMatrix::zeros(m, n_keep);
    for (c, &i) in chosen.iter().enumerate() {
        v.set_column(c, &eig.eigenvectors.column(i));
    }
    let q = v.qr().q();
    let eigvals = DVector::from_iterator(n_keep, chosen.iter().map(|&i| eig.eigenvalues[i]));
    let captured = eigvals.sum() / total;
    let cutoff_frac = match size {
        BasisSize::Cutoff(frac) => frac,
        _ => captured.min(1.0),
    };
    Ok(RegionBasis {
        region,
        voxels,
        q,
        eigvals,
        cutoff_frac,
        kernel,
    })
}

/// Build the basis of one region with the eigenvalue-share cutoff rule.
pub fn build_region_basis(
    grid: &VoxelGrid,
    region: usize,
    spec: &KernelSpec,
    cutoff_frac: f64,
) -> Result<RegionBasis> {
    build_region_basis_sized(grid, region, spec, BasisSize::Cutoff(cutoff_frac))
}

pub fn build_region_basis_sized(
    grid: &VoxelGrid,
    region: usize,
    spec: &KernelSpec,
    size: BasisSize,
) -> Result<RegionBasis> {
    let k = region_kernel_matrix(grid, region, spec)?;
    basis_from_kernel_matrix(
        k,
        region,
        grid.members(region).to_vec(),
        spec.family_for(region),
        size,
    )
}

/// Bases for every region of a grid, with flat coefficient offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSet {
    pub regions: Vec<RegionBasis>,
    p: usize,
    offsets: Vec<usize>,
}

impl BasisSet {
    pub fn new(regions: Vec<RegionBasis>, p: usize) -> Result<Self> {
        let mut seen = vec![false; p];
        for (r, b) in regions.iter().enumerate() {
            if b.region != r {
                return invalid(format!("basis {r} is labelled region {}", b.region));
            }
            for &j in &b.voxels {
                if j >= p || seen[j] {
                    return invalid(format!("voxel {j} is out of range or covered twice"));
                }
                seen[j] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return invalid("bases do not cover every voxel");
        }
        let mut offsets = Vec::with_capacity(regions.len() + 1);
        let mut acc = 0;
        offsets.push(0);
        for b in &regions {
            acc += b.n_basis();
            offsets.push(acc);
        }
        Ok(Self { regions, p, offsets })
    }

    pub fn build(grid: &VoxelGrid, spec: &KernelSpec, size: BasisSize) -> Result<Self> {
        spec.validate()?;
        let regions = (0..grid.n_regions())
            .map(|r| build_region_basis_sized(grid, r, spec, size))
            .collect::<Result<Vec<_>>>()?;
        Self::new(regions, grid.len())
    }

    pub fn n_voxels(&self) -> usize {
        self.p
    }

    pub fn n_regions(&self) -> usize {
        self.regions.len()
    }

    /// Total number of coefficients across regions.
    pub fn total_basis(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    /// Flat coefficient range of a region.
    pub fn range(&self, region: usize) -> std::ops::Range<usize> {
        self.offsets[region]..self.offsets[region + 1]
    }

    pub fn region_sizes(&self) -> Vec<usize> {
        self.regions.iter().map(|b| b.n_basis()).collect()
    }

    /// Split a flat coefficient vector into per-region blocks.
    pub fn split(&self, flat: &[f64]) -> Result<Vec<DVector<f64>>> {
        if flat.len() != self.total_basis() {
            return invalid(format!(
                "coefficient vector has {} entries, bases need {}",
                flat.len(),
                self.total_basis()
            ));
        }
        Ok((0..self.n_regions())
            .map(|r| DVector::from_column_slice(&flat[self.range(r)]))
            .collect())
    }

    pub fn flatten(&self, blocks: &[DVector<f64>]) -> Vec<f64> {
        blocks.iter().flat_map(|b| b.iter().copied()).collect()
    }

    /// Zero coefficients shaped for these bases.
    pub fn zeros(&self) -> Vec<DVector<f64>> {
        self.regions.iter().map(|b| DVector::zeros(b.n_basis())).collect()
    }

    /// Project a full-grid surface onto the bases: `θ_r = Q_rᵀ f_r`.
    pub fn project(&self, surface: &[f64]) -> Result<Vec<DVector<f64>>> {
        if surface.len() != self.p {
            return invalid("surface length does not match the grid");
        }
        Ok(self
            .regions
            .iter()
            .map(|b| {
                let local = DVector::from_iterator(b.voxels.len(), b.voxels.iter().map(|&j| surface[j]));
                b.q.tr_mul(&local)
            })
            .collect())
    }

    /// Scatter `Q_r θ_r` into a full-grid vector (no thresholding).
    pub fn latent(&self, theta: &[DVector<f64>]) -> Result<Vec<f64>> {
        check_shapes(self, theta)?;
        let mut out = vec![0.0; self.p];
        for (b, t) in self.regions.iter().zip(theta) {
            let local = &b.q * t;
            for (k, &j) in b.voxels.iter().enumerate() {
                out[j] = local[k];
            }
        }
        Ok(out)
    }
}

pub(crate) fn check_shapes(bases: &BasisSet, theta: &[DVector<f64>]) -> Result<()> {
    if theta.len() != bases.n_regions() {
        return invalid(format!(
            "{} coefficient blocks for {} regions",
            theta.len(),
            bases.n_regions()
        ));
    }
    for (r, (b, t)) in bases.regions.iter().zip(theta).enumerate() {
        if t.len() != b.n_basis() {
            return invalid(format!(
                "region {r}: {} coefficients for {} basis functions",
                t.len(),
                b.n_basis()
            ));
        }
    }
    Ok(())
}

/// Sample correlation matrix between the columns `cols` of an `n × p` matrix.
pub fn empirical_correlation(m: &DMatrix<f64>, cols: &[usize]) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    if n < 2 {
        return invalid("need at least two subjects for a correlation");
    }
    let k = cols.len();
    let mut z = DMatrix::zeros(n, k);
    for (c, &j) in cols.iter().enumerate() {
        let col = m.column(j);
        let mean = col.mean();
        let sd = (col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
        if !(sd > 0.0) {
            return invalid(format!("voxel {j} has zero variance"));
        }
        for i in 0..n {
            z[(i, c)] = (col[i] - mean) / sd;
        }
    }
    let mut corr = z.tr_mul(&z) / (n as f64 - 1.0);
    for c in 0..k {
        corr[(c, c)] = 1.0;
    }
    Ok(corr)
}

/// Up to `max_points` voxels of `region` closest to the region centroid, ascending by index.
pub fn voxels_near_centroid(grid: &VoxelGrid, region: usize, max_points: usize) -> Vec<usize> {
    let idx = grid.members(region);
    let d = grid.dim();
    let mut centroid = vec![0.0; d];
    for &j in idx {
        for (c, v) in centroid.iter_mut().zip(grid.coord(j)) {
            *c += v / idx.len() as f64;
        }
    }
    let mut by_dist: Vec<(f64, usize)> = idx
        .iter()
        .map(|&j| {
            let dist: f64 = grid
                .coord(j)
                .iter()
                .zip(&centroid)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            (dist, j)
        })
        .collect();
    by_dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut out: Vec<usize> = by_dist.into_iter().take(max_points).map(|(_, j)| j).collect();
    out.sort_unstable();
    out
}

/// Grid search for Matérn `(u, rho)` whose implied correlation over `points`
/// is closest in Frobenius norm to `empirical_corr`. Ties go to the smaller
/// `rho`, then the smaller `u`.
pub fn fit_kernel_params(
    empirical_corr: &DMatrix<f64>,
    points: &[Vec<f64>],
    grid_points: &[(f64, f64)],
) -> Result<(f64, f64)> {
    if grid_points.is_empty() {
        return invalid("kernel parameter grid is empty");
    }
    let m = points.len();
    if empirical_corr.nrows() != m || empirical_corr.ncols() != m {
        return invalid("correlation matrix does not match the number of points");
    }
    let mut best: Option<(f64, f64, f64)> = None;
    for &(u, rho) in grid_points {
        let family = KernelFamily::Matern { u, rho };
        family.validate()?;
        let mut dist2 = 0.0;
        for a in 0..m {
            for b in 0..m {
                let diff = family.eval(&points[a], &points[b])? - empirical_corr[(a, b)];
                dist2 += diff * diff;
            }
        }
        let better = match best {
            None => true,
            Some((bd, bu, brho)) => {
                dist2 < bd || (dist2 == bd && (rho < brho || (rho == brho && u < bu)))
            }
        };
        if better {
            best = Some((dist2, u, rho));
        }
    }
    let (_, u, rho) = best.unwrap();
    Ok((u, rho))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matern_examples() {
        assert_eq!(matern_c(0.0, 0.7).unwrap(), 1.0);
        let e1 = (-1.0f64).exp();
        assert!((matern_c(1.0, 0.5).unwrap() - e1).abs() < 1e-14);
        let s3 = 3f64.sqrt();
        let want = (1.0 + s3) * (-s3).exp();
        assert!((matern_c(1.0, 1.5).unwrap() - want).abs() < 1e-14);
        assert!(matern_c(-1.0, 0.5).is_err());
        assert!(matern_c(f64::NAN, 0.5).is_err());
        assert!(matern_c(1.0, 0.0).is_err());
    }

    #[test]
    fn matern_is_decreasing_and_finite() {
        for &u in &[0.2, 0.5, 1.0, 2.7] {
            let mut prev = 1.0;
            let mut t = 1e-6;
            while t <= 1e3 {
                let c = matern_c(t, u).unwrap();
                assert!(c.is_finite());
                assert!(c <= prev, "u={u} t={t}");
                prev = c;
                t *= 1.3;
            }
        }
    }

    #[test]
    fn kernel_eval_examples() {
        let se = KernelSpec::modified_se(0.01, 10.0);
        assert_eq!(kernel_eval(&[0.0], &[0.0], &se).unwrap(), 1.0);
        let se0 = KernelSpec::modified_se(0.0, 10.0);
        assert!((kernel_eval(&[0.0], &[0.1], &se0).unwrap() - (-0.1f64).exp()).abs() < 1e-15);
        let m = KernelSpec::matern(0.5, 2.0);
        let v = kernel_eval(&[0.0, 0.0], &[1.0, 1.0], &m).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-14);
        assert!(kernel_eval(&[0.0], &[0.0, 1.0], &m).is_err());
        let s = [0.3, 0.4];
        let at_self = kernel_eval(&s, &s, &se).unwrap();
        assert!((at_self - (-2.0 * 0.01 * 0.25f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn identity_and_rank_one_cutoffs() {
        let k = DMatrix::<f64>::identity(10, 10);
        let b = basis_from_kernel_matrix(k, 0, (0..10).collect(), KernelFamily::Matern { u: 1.0, rho: 1.0 }, BasisSize::Cutoff(0.9)).unwrap();
        assert_eq!(b.n_basis(), 9);
        assert!(b.eigvals.iter().all(|&l| (l - 1.0).abs() < 1e-12));

        let v = DVector::from_iterator(10, (0..10).map(|i| 1.0 + i as f64));
        let k = &v * v.transpose();
        let b = basis_from_kernel_matrix(k, 0, (0..10).collect(), KernelFamily::Matern { u: 1.0, rho: 1.0 }, BasisSize::Cutoff(0.9)).unwrap();
        assert_eq!(b.n_basis(), 1);
        assert!(b.orthonormality_error() < 1e-12);
    }

    #[test]
    fn degenerate_kernel_is_reported() {
        let k = DMatrix::<f64>::zeros(4, 4);
        let err = basis_from_kernel_matrix(k, 0, (0..4).collect(), KernelFamily::Matern { u: 1.0, rho: 1.0 }, BasisSize::Cutoff(0.9));
        assert!(matches!(err, Err(BimaError::DegenerateKernel(_))));
        let k = -DMatrix::<f64>::identity(3, 3);
        let err = basis_from_kernel_matrix(k, 0, (0..3).collect(), KernelFamily::Matern { u: 1.0, rho: 1.0 }, BasisSize::Cutoff(0.9));
        assert!(matches!(err, Err(BimaError::DegenerateKernel(_))));
    }

    #[test]
    fn region_fraction_rule() {
        let grid = VoxelGrid::image(10, 10, 1).unwrap();
        let b = build_region_basis_sized(&grid, 0, &KernelSpec::matern(0.2, 2.0), BasisSize::RegionFraction(0.2)).unwrap();
        assert_eq!(b.n_basis(), 20);
        assert!(b.orthonormality_error() < 1e-10);
        assert!(b.eigvals.iter().all(|&l| l > 0.0));
        assert!(b.eigvals.as_slice().windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn projection_roundtrip_on_basis_span() {
        let grid = VoxelGrid::image(8, 8, 2).unwrap();
        let bases = BasisSet::build(&grid, &KernelSpec::matern(1.0, 0.01), BasisSize::Fixed(5)).unwrap();
        assert_eq!(bases.total_basis(), 20);
        let theta: Vec<DVector<f64>> = (0..4)
            .map(|r| DVector::from_iterator(5, (0..5).map(|l| (r * 5 + l) as f64 * 0.1 - 1.0)))
            .collect();
        let surface = bases.latent(&theta).unwrap();
        let back = bases.project(&surface).unwrap();
        for (a, b) in theta.iter().zip(&back) {
            assert!((a - b).amax() < 1e-12);
        }
        let flat = bases.flatten(&theta);
        assert_eq!(bases.split(&flat).unwrap(), theta);
    }

    #[test]
    fn kernel_grid_search_examples() {
        let pts: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64 / 5.0]).collect();
        let truth = KernelFamily::Matern { u: 0.2, rho: 2.0 };
        let corr = DMatrix::from_fn(6, 6, |a, b| truth.eval(&pts[a], &pts[b]).unwrap());
        let grid = [(0.5, 1.0), (0.2, 2.0), (1.0, 4.0)];
        assert_eq!(fit_kernel_params(&corr, &pts, &grid).unwrap(), (0.2, 2.0));
        assert_eq!(fit_kernel_params(&corr, &pts, &[(1.0, 4.0)]).unwrap(), (1.0, 4.0));
        assert!(fit_kernel_params(&corr, &pts, &[]).is_err());
        // Tie: identical candidates resolve to the smaller rho, then smaller u.
        let ident = DMatrix::<f64>::identity(1, 1);
        let one = vec![vec![0.0]];
        assert_eq!(fit_kernel_params(&ident, &one, &[(2.0, 3.0), (1.0, 3.0), (5.0, 1.0)]).unwrap(), (5.0, 1.0));
    }
}
