//! On-disk formats: BIMT tensors, dataset directories, chain traces and reports.
//!
//! Numeric payloads are raw little-endian tensors; metadata is pretty-printed
//! JSON. Every writer is a pure function of its inputs so repeated runs
//! produce identical bytes.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{BimaError, Result};
use crate::grid::VoxelGrid;
use crate::kernel_basis::{BasisSet, KernelFamily, RegionBasis};
use crate::mediation::MediationReport;
use crate::sampler::{ChainTrace, ModelKind, SamplerConfig};
use crate::sem_model::MediationDataset;
use crate::simgen::{SimDesign, SimTruth};

pub const BIMT_MAGIC: &[u8; 4] = b"BIMT";
pub const BIMT_VERSION: u32 = 1;
const DTYPE_F64: u8 = 0;

fn format_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(BimaError::Format(msg.into()))
}

/// Dense row-major `f64` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if dims.len() > u8::MAX as usize {
            return format_err("too many tensor dimensions");
        }
        let len = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        if len != Some(data.len()) {
            return format_err(format!("dims {dims:?} do not match {} values", data.len()));
        }
        Ok(Self { dims, data })
    }

    pub fn from_vec(v: &[f64]) -> Self {
        Self { dims: vec![v.len()], data: v.to_vec() }
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let (r, c) = m.shape();
        let data = (0..r).flat_map(|i| (0..c).map(move |j| m[(i, j)])).collect();
        Self { dims: vec![r, c], data }
    }

    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        match self.dims[..] {
            [r, c] => Ok(DMatrix::from_row_slice(r, c, &self.data)),
            [r] => Ok(DMatrix::from_row_slice(r, 1, &self.data)),
            _ => format_err(format!("expected a matrix, found dims {:?}", self.dims)),
        }
    }

    pub fn to_dvector(&self) -> Result<DVector<f64>> {
        match self.dims[..] {
            [_] | [_, 1] => Ok(DVector::from_column_slice(&self.data)),
            _ => format_err(format!("expected a vector, found dims {:?}", self.dims)),
        }
    }
}

pub fn encode_tensor(t: &Tensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(10 + 8 * t.dims.len() + 8 * t.data.len());
    out.extend_from_slice(BIMT_MAGIC);
    out.extend_from_slice(&BIMT_VERSION.to_le_bytes());
    out.push(DTYPE_F64);
    out.push(t.dims.len() as u8);
    for &d in &t.dims {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in &t.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_tensor(bytes: &[u8]) -> Result<Tensor> {
    if bytes.len() < 10 || &bytes[..4] != BIMT_MAGIC {
        return format_err("missing BIMT header");
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != BIMT_VERSION {
        return format_err(format!("unsupported BIMT version {version}"));
    }
    if bytes[8] != DTYPE_F64 {
        return format_err(format!("unsupported BIMT dtype {}", bytes[8]));
    }
    let ndim = bytes[9] as usize;
    let head = 10 + 8 * ndim;
    if bytes.len() < head {
        return format_err("truncated BIMT dimensions");
    }
    let dims: Vec<usize> = (0..ndim)
        .map(|k| u64::from_le_bytes(bytes[10 + 8 * k..18 + 8 * k].try_into().unwrap()) as usize)
        .collect();
    let len = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
    let want = len.and_then(|l| l.checked_mul(8)).and_then(|b| b.checked_add(head));
    if want != Some(bytes.len()) {
        return format_err(format!("BIMT payload does not match dims {dims:?}"));
    }
    let data = bytes[head..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Tensor::new(dims, data)
}

pub fn write_tensor(path: &Path, t: &Tensor) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_tensor(t))?;
    Ok(())
}

pub fn read_tensor(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path).map_err(|e| BimaError::Format(format!("{}: {e}", path.display())))?;
    decode_tensor(&bytes).map_err(|e| BimaError::Format(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| BimaError::Format(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| BimaError::Format(format!("{}: {e}", path.display())))
}

fn indices_to_f64(v: &[usize]) -> Vec<f64> {
    v.iter().map(|&i| i as f64).collect()
}

fn f64_to_indices(v: &[f64], what: &str) -> Result<Vec<usize>> {
    v.iter()
        .map(|&x| {
            if x >= 0.0 && x.fract() == 0.0 && x < 2f64.powi(53) {
                Ok(x as usize)
            } else {
                format_err(format!("{what} holds a non-index value {x}"))
            }
        })
        .collect()
}

/// Write a grid as `coords.bimt` (`p × dim`) and `regions.bimt` (length `p`).
pub fn write_grid(dir: &Path, grid: &VoxelGrid) -> Result<()> {
    fs::create_dir_all(dir)?;
    let coords = Tensor::new(vec![grid.len(), grid.dim()], grid.coords().to_vec())?;
    write_tensor(&dir.join("coords.bimt"), &coords)?;
    write_tensor(&dir.join("regions.bimt"), &Tensor::from_vec(&indices_to_f64(grid.region_map())))
}

pub fn read_grid(dir: &Path) -> Result<VoxelGrid> {
    let coords = read_tensor(&dir.join("coords.bimt"))?;
    let regions = read_tensor(&dir.join("regions.bimt"))?;
    let [p, dim] = coords.dims[..] else {
        return format_err("coords.bimt must be a matrix");
    };
    if regions.data.len() != p {
        return format_err("region map and coordinates disagree on the voxel count");
    }
    VoxelGrid::new(dim, coords.data, f64_to_indices(&regions.data, "regions.bimt")?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFiles {
    pub alpha0: String,
    pub beta0: String,
    pub svme0: String,
    pub zeta0: String,
    pub eta: String,
    pub gamma0: f64,
    pub xi0: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub grid_dim: usize,
    pub n_regions: usize,
    pub coords_file: String,
    pub region_file: String,
    pub y_file: String,
    pub x_file: String,
    pub c_file: String,
    pub m_file: String,
    pub truth: Option<TruthFiles>,
    pub seed: Option<u64>,
    pub design: Option<SimDesign>,
}

pub const MANIFEST: &str = "manifest.json";

/// Write a dataset directory, optionally with its simulation truth.
pub fn write_dataset(
    dir: &Path,
    data: &MediationDataset,
    truth: Option<&SimTruth>,
    design: Option<&SimDesign>,
) -> Result<DatasetManifest> {
    fs::create_dir_all(dir)?;
    write_grid(dir, &data.grid)?;
    write_tensor(&dir.join("y.bimt"), &Tensor::from_vec(data.y.as_slice()))?;
    write_tensor(&dir.join("x.bimt"), &Tensor::from_vec(data.x.as_slice()))?;
    write_tensor(&dir.join("c.bimt"), &Tensor::from_matrix(&data.c))?;
    write_tensor(&dir.join("m.bimt"), &Tensor::from_matrix(&data.m))?;
    let truth_files = match truth {
        Some(t) => {
            write_tensor(&dir.join("alpha0.bimt"), &Tensor::from_vec(&t.alpha0))?;
            write_tensor(&dir.join("beta0.bimt"), &Tensor::from_vec(&t.beta0))?;
            write_tensor(&dir.join("svme0.bimt"), &Tensor::from_vec(&t.svme0))?;
            write_tensor(&dir.join("zeta0.bimt"), &Tensor::from_matrix(&t.zeta0))?;
            write_tensor(&dir.join("eta.bimt"), &Tensor::from_matrix(&t.eta))?;
            Some(TruthFiles {
                alpha0: "alpha0.bimt".into(),
                beta0: "beta0.bimt".into(),
                svme0: "svme0.bimt".into(),
                zeta0: "zeta0.bimt".into(),
                eta: "eta.bimt".into(),
                gamma0: t.gamma0,
                xi0: t.xi0.clone(),
            })
        }
        None => None,
    };
    let manifest = DatasetManifest {
        n: data.n(),
        p: data.p(),
        q: data.q(),
        grid_dim: data.grid.dim(),
        n_regions: data.grid.n_regions(),
        coords_file: "coords.bimt".into(),
        region_file: "regions.bimt".into(),
        y_file: "y.bimt".into(),
        x_file: "x.bimt".into(),
        c_file: "c.bimt".into(),
        m_file: "m.bimt".into(),
        truth: truth_files,
        seed: design.map(|d| d.seed),
        design: design.cloned(),
    };
    write_json(&dir.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub data: MediationDataset,
    pub truth: Option<SimTruth>,
    pub manifest: DatasetManifest,
}

fn check_dims(t: &Tensor, want: &[usize], name: &str) -> Result<()> {
    let ok = t.dims == want || (want.len() == 2 && want[1] == 1 && t.dims == want[..1]);
    if ok {
        Ok(())
    } else {
        Err(BimaError::InvalidArgument(format!(
            "{name} has dims {:?}, expected {want:?}",
            t.dims
        )))
    }
}

pub fn read_dataset(dir: &Path) -> Result<LoadedDataset> {
    let manifest: DatasetManifest = read_json(&dir.join(MANIFEST))?;
    let (n, p, q) = (manifest.n, manifest.p, manifest.q);
    let coords = read_tensor(&dir.join(&manifest.coords_file))?;
    let regions = read_tensor(&dir.join(&manifest.region_file))?;
    check_dims(&coords, &[p, manifest.grid_dim], "coordinates")?;
    check_dims(&regions, &[p], "region map")?;
    let grid = VoxelGrid::new(manifest.grid_dim, coords.data, f64_to_indices(&regions.data, "region map")?)?;
    let load = |file: &str, dims: &[usize], name: &str| -> Result<Tensor> {
        let t = read_tensor(&dir.join(file))?;
        check_dims(&t, dims, name)?;
        Ok(t)
    };
    let y = load(&manifest.y_file, &[n], "Y")?.to_dvector()?;
    let x = load(&manifest.x_file, &[n], "X")?.to_dvector()?;
    let c = if q == 0 {
        DMatrix::zeros(n, 0)
    } else {
        load(&manifest.c_file, &[n, q], "C")?.to_matrix()?
    };
    let m = load(&manifest.m_file, &[n, p], "M")?.to_matrix()?;
    let data = MediationDataset::new(y, x, c, m, grid)?;
    let truth = match &manifest.truth {
        Some(tf) => Some(SimTruth {
            alpha0: load(&tf.alpha0, &[p], "alpha0")?.data,
            beta0: load(&tf.beta0, &[p], "beta0")?.data,
            svme0: load(&tf.svme0, &[p], "svme0")?.data,
            zeta0: if q == 0 { DMatrix::zeros(0, p) } else { load(&tf.zeta0, &[q, p], "zeta0")?.to_matrix()? },
            eta: load(&tf.eta, &[n, p], "eta")?.to_matrix()?,
            gamma0: tf.gamma0,
            xi0: tf.xi0.clone(),
        }),
        None => None,
    };
    Ok(LoadedDataset { data, truth, manifest })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RegionBasisMeta {
    region: usize,
    voxels: Vec<usize>,
    eigvals: Vec<f64>,
    cutoff_frac: f64,
    kernel: KernelFamily,
    q_file: String,
}

/// Write bases as `basis.json` plus one `q_<r>.bimt` per region.
pub fn write_bases(dir: &Path, bases: &BasisSet) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut meta = Vec::with_capacity(bases.n_regions());
    for b in &bases.regions {
        let q_file = format!("q_{}.bimt", b.region);
        write_tensor(&dir.join(&q_file), &Tensor::from_matrix(&b.q))?;
        meta.push(RegionBasisMeta {
            region: b.region,
            voxels: b.voxels.clone(),
            eigvals: b.eigvals.iter().copied().collect(),
            cutoff_frac: b.cutoff_frac,
            kernel: b.kernel,
            q_file,
        });
    }
    write_json(&dir.join("basis.json"), &(bases.n_voxels(), meta))
}

pub fn read_bases(dir: &Path) -> Result<BasisSet> {
    let (p, meta): (usize, Vec<RegionBasisMeta>) = read_json(&dir.join("basis.json"))?;
    let regions = meta
        .into_iter()
        .map(|m| {
            let q = read_tensor(&dir.join(&m.q_file))?.to_matrix()?;
            if q.nrows() != m.voxels.len() || q.ncols() != m.eigvals.len() {
                return format_err(format!("basis {} has inconsistent shapes", m.region));
            }
            Ok(RegionBasis {
                region: m.region,
                voxels: m.voxels,
                q,
                eigvals: DVector::from_vec(m.eigvals),
                cutoff_frac: m.cutoff_frac,
                kernel: m.kernel,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    BasisSet::new(regions, p)
}

/// Metadata stored next to the draws of a chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub model: ModelKind,
    pub nu: f64,
    pub basis_sizes: Vec<usize>,
    pub variance_names: Vec<String>,
    pub n_draws: usize,
    pub accept_rates: Vec<f64>,
    pub step_final: Vec<f64>,
    pub target_accept: Vec<f64>,
    pub seed: u64,
    pub iters: usize,
    pub burnin: usize,
    pub thin: usize,
    pub config: SamplerConfig,
    pub dataset: Option<String>,
    pub max_constraint_residual: Option<f64>,
}

pub const TRACE_META: &str = "trace.json";

/// Write a chain with its bases (`bases/`) and grid so it can be summarized alone.
pub fn write_trace(
    dir: &Path,
    trace: &ChainTrace,
    bases: &BasisSet,
    grid: &VoxelGrid,
    config: &SamplerConfig,
    dataset: Option<&str>,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_tensor(&dir.join("theta.bimt"), &Tensor::from_matrix(&trace.theta))?;
    write_tensor(&dir.join("fixed.bimt"), &Tensor::from_matrix(&trace.fixed))?;
    write_tensor(&dir.join("variances.bimt"), &Tensor::from_matrix(&trace.variances))?;
    write_tensor(&dir.join("zeta.bimt"), &Tensor::from_matrix(&trace.zeta))?;
    write_tensor(&dir.join("constraint_residual.bimt"), &Tensor::from_vec(&trace.constraint_residual))?;
    write_bases(&dir.join("bases"), bases)?;
    write_grid(&dir.join("grid"), grid)?;
    let meta = TraceMeta {
        model: trace.model,
        nu: trace.nu,
        basis_sizes: trace.basis_sizes.clone(),
        variance_names: trace.variance_names.clone(),
        n_draws: trace.n_draws(),
        accept_rates: trace.accept_rates.clone(),
        step_final: trace.step_final.clone(),
        target_accept: trace.target_accept.clone(),
        seed: trace.seed,
        iters: trace.iters,
        burnin: trace.burnin,
        thin: trace.thin,
        config: config.clone(),
        dataset: dataset.map(str::to_owned),
        max_constraint_residual: trace.constraint_residual.iter().copied().reduce(f64::max),
    };
    write_json(&dir.join(TRACE_META), &meta)
}

#[derive(Debug, Clone)]
pub struct LoadedTrace {
    pub trace: ChainTrace,
    pub meta: TraceMeta,
    pub bases: BasisSet,
    pub grid: VoxelGrid,
}

pub fn read_trace(dir: &Path) -> Result<LoadedTrace> {
    let meta: TraceMeta = read_json(&dir.join(TRACE_META))?;
    let mat = |name: &str| -> Result<DMatrix<f64>> { read_tensor(&dir.join(name))?.to_matrix() };
    let theta = mat("theta.bimt")?;
    let fixed = mat("fixed.bimt")?;
    let variances = mat("variances.bimt")?;
    let zeta = mat("zeta.bimt")?;
    let constraint_residual = read_tensor(&dir.join("constraint_residual.bimt"))?.data;
    let t = meta.n_draws;
    if theta.nrows() != t || fixed.nrows() != t || variances.nrows() != t || zeta.nrows() != t {
        return format_err("trace files disagree on the number of draws");
    }
    let bases = read_bases(&dir.join("bases"))?;
    let grid = read_grid(&dir.join("grid"))?;
    if bases.total_basis() != theta.ncols() || bases.n_voxels() != grid.len() {
        return format_err("trace, bases and grid do not fit together");
    }
    let trace = ChainTrace {
        model: meta.model,
        nu: meta.nu,
        basis_sizes: meta.basis_sizes.clone(),
        theta,
        fixed,
        variances,
        variance_names: meta.variance_names.clone(),
        zeta,
        constraint_residual,
        accept_rates: meta.accept_rates.clone(),
        step_final: meta.step_final.clone(),
        target_accept: meta.target_accept.clone(),
        seed: meta.seed,
        iters: meta.iters,
        burnin: meta.burnin,
        thin: meta.thin,
    };
    Ok(LoadedTrace { trace, meta, bases, grid })
}

/// Write `report.json`, the per-voxel `voxels.csv` and `regions.csv`.
pub fn write_report(dir: &Path, report: &MediationReport, grid: &VoxelGrid) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let json = dir.join("report.json");
    write_json(&json, report)?;

    let mut selected = vec![false; grid.len()];
    for &j in &report.selected {
        selected[j] = true;
    }
    let mut csv = String::from("voxel,region");
    for a in 0..grid.dim() {
        csv.push_str(&format!(",coord{a}"));
    }
    csv.push_str(",svme_mean,ci_lower,ci_upper,pip,selected,estimate\n");
    for j in 0..grid.len() {
        csv.push_str(&format!("{j},{}", grid.region_of(j)));
        for c in grid.coord(j) {
            csv.push_str(&format!(",{c}"));
        }
        csv.push_str(&format!(
            ",{},{},{},{},{},{}\n",
            report.svme_mean[j],
            report.svme_ci[j].0,
            report.svme_ci[j].1,
            report.pip[j],
            u8::from(selected[j]),
            report.estimate[j]
        ));
    }
    let voxels = dir.join("voxels.csv");
    fs::write(&voxels, csv)?;

    let mut csv = String::from("region,nie,nie_positive,nie_negative,avg_pip,n_active\n");
    for r in &report.region_table {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.region, r.nie, r.nie_pos, r.nie_neg, r.avg_pip, r.n_active
        ));
    }
    let regions = dir.join("regions.csv");
    fs::write(&regions, csv)?;
    Ok(vec![json, voxels, regions])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel_basis::{BasisSize, KernelSpec};
    use crate::sampler::{run_mediator_chain, run_outcome_chain, InitStrategy};
    use crate::simgen::generate;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let t = Tensor::new(vec![2, 1], vec![1.0, -2.5]).unwrap();
        let b = encode_tensor(&t);
        assert_eq!(&b[..4], b"BIMT");
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 1);
        assert_eq!(b[8], 0);
        assert_eq!(b[9], 2);
        assert_eq!(u64::from_le_bytes(b[10..18].try_into().unwrap()), 2);
        assert_eq!(b.len(), 10 + 16 + 16);
        assert_eq!(f64::from_le_bytes(b[34..42].try_into().unwrap()), -2.5);
    }

    #[test]
    fn rejects_corrupt_input() {
        let t = Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap();
        let mut b = encode_tensor(&t);
        assert!(decode_tensor(&b[..b.len() - 1]).is_err());
        b[0] = b'X';
        assert!(decode_tensor(&b).is_err());
        let mut b = encode_tensor(&t);
        b[4] = 2;
        assert!(decode_tensor(&b).is_err());
        assert!(Tensor::new(vec![2, 2], vec![0.0; 3]).is_err());
    }

    proptest! {
        #[test]
        fn tensor_round_trip_is_bit_exact(
            dims in prop::collection::vec(0usize..6, 0..4),
            seed in any::<u64>(),
        ) {
            let len: usize = dims.iter().product();
            let mut state = seed;
            let data: Vec<f64> = (0..len)
                .map(|_| {
                    state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    f64::from_bits(state)
                })
                .collect();
            let t = Tensor::new(dims, data).unwrap();
            let back = decode_tensor(&encode_tensor(&t)).unwrap();
            prop_assert_eq!(&back.dims, &t.dims);
            let same = back.data.iter().zip(&t.data).all(|(a, b)| a.to_bits() == b.to_bits());
            prop_assert!(same);
        }
    }

    #[test]
    fn dataset_round_trip() {
        let design = SimDesign { n: 12, ..SimDesign::default() };
        let (data, truth) = generate(&design).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &data, Some(&truth), Some(&design)).unwrap();
        let back = read_dataset(dir.path()).unwrap();
        assert_eq!(back.data, data);
        assert_eq!(back.truth.unwrap(), truth);
        assert_eq!(back.manifest.design.unwrap(), design);
    }

    #[test]
    fn dataset_dims_are_checked() {
        let design = SimDesign { n: 12, ..SimDesign::default() };
        let (data, _) = generate(&design).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &data, None, None).unwrap();
        write_tensor(&dir.path().join("y.bimt"), &Tensor::from_vec(&[0.0; 5])).unwrap();
        assert!(matches!(read_dataset(dir.path()), Err(BimaError::InvalidArgument(_))));
    }

    #[test]
    fn trace_round_trip() {
        let design = SimDesign { n: 12, ..SimDesign::default() };
        let (data, _) = generate(&design).unwrap();
        let bases = BasisSet::build(&data.grid, &KernelSpec::matern(0.2, 2.0), BasisSize::Fixed(4)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        for (k, model) in ["outcome", "mediator"].iter().enumerate() {
            let config = SamplerConfig { iters: 40, thin: 2, init: InitStrategy::Zero, ..SamplerConfig::default() };
            let trace = if k == 0 {
                run_outcome_chain(&data, &bases, &config).unwrap()
            } else {
                run_mediator_chain(&data, &bases, &config).unwrap()
            };
            let path = dir.path().join(model);
            write_trace(&path, &trace, &bases, &data.grid, &config, Some("data")).unwrap();
            let back = read_trace(&path).unwrap();
            assert_eq!(back.trace, trace);
            assert_eq!(back.bases, bases);
            assert_eq!(back.grid, data.grid);
            assert_eq!(back.meta.config, config);
        }
    }
}
