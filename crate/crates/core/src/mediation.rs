//! Mediation effects from paired posterior draws: SVME, NIE/NDE, inclusion
//! probabilities, voxel selection, and per-region summaries.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::grid::VoxelGrid;
use crate::kernel_basis::BasisSet;
use crate::sampler::{ChainTrace, ModelKind};

/// `T × p` matrix of `α_t(s_j) β_t(s_j)`, pairing draws by index and dropping
/// the tail of the longer trace.
pub fn svme_draws(
    outcome: &ChainTrace,
    mediator: &ChainTrace,
    outcome_bases: &BasisSet,
    mediator_bases: &BasisSet,
) -> Result<DMatrix<f64>> {
    if outcome.model != ModelKind::Outcome || mediator.model != ModelKind::Mediator {
        return invalid("expected an outcome trace and a mediator trace");
    }
    let t = outcome.n_draws().min(mediator.n_draws());
    if t == 0 {
        return invalid("both traces need at least one draw");
    }
    let p = outcome_bases.n_voxels();
    if mediator_bases.n_voxels() != p {
        return invalid("outcome and mediator bases cover different grids");
    }
    let mut out = DMatrix::zeros(t, p);
    for k in 0..t {
        let beta = outcome.field_draw(k, outcome_bases)?;
        let alpha = mediator.field_draw(k, mediator_bases)?;
        for j in 0..p {
            out[(k, j)] = alpha[j] * beta[j];
        }
    }
    Ok(out)
}

/// `(NIE, NDE)` for one draw, contrasting exposure `x` against `x_prime`.
pub fn nie_nde(svme_row: &[f64], gamma: f64, x: f64, x_prime: f64) -> (f64, f64) {
    let dx = x - x_prime;
    let p = svme_row.len().max(1) as f64;
    (dx * svme_row.iter().sum::<f64>() / p, gamma * dx)
}

/// Fraction of draws that are nonzero.
pub fn pip(draws: &[f64]) -> Result<f64> {
    if draws.is_empty() {
        return invalid("inclusion probability needs at least one draw");
    }
    Ok(draws.iter().filter(|v| **v != 0.0).count() as f64 / draws.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", content = "value", rename_all = "snake_case")]
pub enum SelectionMode {
    /// Tune the inclusion-probability cut against a known truth.
    Fdr(f64),
    /// Select voxels whose inclusion probability exceeds a fixed cut.
    Pip(f64),
}

impl SelectionMode {
    /// Parse `fdr:<target>` or `pip:<cut>`.
    pub fn parse(s: &str) -> Result<Self> {
        let (kind, value) = s
            .split_once(':')
            .ok_or_else(|| crate::error::BimaError::InvalidArgument(format!("mode '{s}' is not kind:value")))?;
        let v: f64 = value
            .parse()
            .map_err(|_| crate::error::BimaError::InvalidArgument(format!("mode value '{value}' is not a number")))?;
        match kind {
            "fdr" if v > 0.0 && v < 1.0 => Ok(Self::Fdr(v)),
            "pip" if (0.0..1.0).contains(&v) => Ok(Self::Pip(v)),
            "fdr" | "pip" => invalid(format!("mode value {v} out of range")),
            _ => invalid(format!("unknown selection mode '{kind}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub threshold: f64,
    pub selected: Vec<usize>,
    /// Only known when the truth is supplied.
    pub achieved_fdr: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionMetrics {
    pub fdr: f64,
    pub tpr: f64,
    pub acc: f64,
}

/// Confusion-matrix rates. FDR is 0 for an empty selection and TPR is 1 for
/// an empty truth.
pub fn selection_metrics(selected: &[usize], truth: &[bool]) -> SelectionMetrics {
    let p = truth.len();
    let sel: BTreeSet<usize> = selected.iter().copied().filter(|&j| j < p).collect();
    let tp = sel.iter().filter(|&&j| truth[j]).count();
    let fp = sel.len() - tp;
    let positives = truth.iter().filter(|t| **t).count();
    let fn_ = positives - tp;
    let tn = p - tp - fp - fn_;
    SelectionMetrics {
        fdr: if sel.is_empty() { 0.0 } else { fp as f64 / sel.len() as f64 },
        tpr: if positives == 0 { 1.0 } else { tp as f64 / positives as f64 },
        acc: if p == 0 { 1.0 } else { (tp + tn) as f64 / p as f64 },
    }
}

fn select_at(pip: &[f64], t: f64) -> Vec<usize> {
    (0..pip.len()).filter(|&j| pip[j] >= t).collect()
}

/// Voxel selection from inclusion probabilities.
///
/// `Fdr(target)` scans every distinct positive inclusion probability as a
/// cut `pip >= t` and keeps the smallest cut whose true FDR is at most the
/// target, falling back to the largest cut. `Pip(t0)` keeps `pip > t0`.
pub fn select_voxels(pip: &[f64], mode: SelectionMode, truth: Option<&[bool]>) -> Result<Selection> {
    if let Some(t) = truth {
        if t.len() != pip.len() {
            return invalid("truth support length differs from the number of voxels");
        }
    }
    match mode {
        SelectionMode::Pip(t0) => {
            let selected: Vec<usize> = (0..pip.len()).filter(|&j| pip[j] > t0).collect();
            let achieved_fdr = truth.map(|t| selection_metrics(&selected, t).fdr);
            Ok(Selection { threshold: t0, selected, achieved_fdr })
        }
        SelectionMode::Fdr(target) => {
            let truth = truth.ok_or_else(|| {
                crate::error::BimaError::InvalidArgument("FDR-tuned selection needs the true support".into())
            })?;
            if !(target > 0.0 && target < 1.0) {
                return invalid("target FDR must lie in (0,1)");
            }
            let mut cuts: Vec<f64> = pip.iter().copied().filter(|v| *v > 0.0).collect();
            cuts.sort_by(|a, b| a.total_cmp(b));
            cuts.dedup();
            let Some(&largest) = cuts.last() else {
                return Ok(Selection { threshold: 1.0, selected: Vec::new(), achieved_fdr: None });
            };
            for &t in &cuts {
                let sel = select_at(pip, t);
                let fdr = selection_metrics(&sel, truth).fdr;
                if fdr <= target {
                    return Ok(Selection { threshold: t, selected: sel, achieved_fdr: Some(fdr) });
                }
            }
            let sel = select_at(pip, largest);
            let fdr = selection_metrics(&sel, truth).fdr;
            Ok(Selection { threshold: largest, selected: sel, achieved_fdr: Some(fdr) })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionRow {
    pub region: usize,
    pub nie: f64,
    pub nie_pos: f64,
    pub nie_neg: f64,
    pub avg_pip: f64,
    pub n_active: usize,
}

/// Per-region indirect effects (all scaled by the global `1/p`), mean
/// inclusion probability, and number of selected voxels.
pub fn region_summary(svme: &[f64], pip: &[f64], selected: &[usize], grid: &VoxelGrid) -> Result<Vec<RegionRow>> {
    let p = grid.len();
    if svme.len() != p || pip.len() != p {
        return invalid("per-voxel inputs do not match the grid");
    }
    let w = 1.0 / p as f64;
    let sel: BTreeSet<usize> = selected.iter().copied().collect();
    Ok((0..grid.n_regions())
        .map(|r| {
            let members = grid.members(r);
            let pos: f64 = members.iter().map(|&j| svme[j].max(0.0)).sum::<f64>() * w;
            let neg: f64 = members.iter().map(|&j| svme[j].min(0.0)).sum::<f64>() * w;
            RegionRow {
                region: r,
                nie: pos + neg,
                nie_pos: pos,
                nie_neg: neg,
                avg_pip: members.iter().map(|&j| pip[j]).sum::<f64>() / members.len() as f64,
                n_active: members.iter().filter(|j| sel.contains(j)).count(),
            }
        })
        .collect())
}

/// Equal-tailed empirical quantile with linear interpolation.
pub fn quantile(sorted: &[f64], prob: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * prob.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn interval(values: &mut [f64], level: f64) -> (f64, f64) {
    values.sort_by(|a, b| a.total_cmp(b));
    let tail = (1.0 - level) / 2.0;
    (quantile(values, tail), quantile(values, 1.0 - tail))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediationReport {
    pub n_draws: usize,
    pub x: f64,
    pub x_prime: f64,
    pub svme_mean: Vec<f64>,
    pub svme_ci: Vec<(f64, f64)>,
    pub pip: Vec<f64>,
    /// Posterior mean on selected voxels, zero elsewhere.
    pub estimate: Vec<f64>,
    pub nie_mean: f64,
    pub nie_ci: (f64, f64),
    pub nde_mean: f64,
    pub nde_ci: (f64, f64),
    pub mode: SelectionMode,
    pub threshold: f64,
    pub achieved_fdr: Option<f64>,
    pub selected: Vec<usize>,
    pub region_table: Vec<RegionRow>,
}

/// Everything needed to summarize a pair of fitted chains.
pub struct ReportInputs<'a> {
    pub outcome: &'a ChainTrace,
    pub mediator: &'a ChainTrace,
    pub outcome_bases: &'a BasisSet,
    pub mediator_bases: &'a BasisSet,
    pub grid: &'a VoxelGrid,
    pub mode: SelectionMode,
    pub truth: Option<&'a [bool]>,
    pub x: f64,
    pub x_prime: f64,
}

pub fn build_report(inp: &ReportInputs<'_>) -> Result<MediationReport> {
    let draws = svme_draws(inp.outcome, inp.mediator, inp.outcome_bases, inp.mediator_bases)?;
    let (t, p) = draws.shape();
    if inp.grid.len() != p {
        return invalid("grid does not match the fitted bases");
    }
    let mut svme_mean = Vec::with_capacity(p);
    let mut svme_ci = Vec::with_capacity(p);
    let mut pips = Vec::with_capacity(p);
    for j in 0..p {
        let mut col: Vec<f64> = draws.column(j).iter().copied().collect();
        pips.push(pip(&col)?);
        svme_mean.push(col.iter().sum::<f64>() / t as f64);
        svme_ci.push(interval(&mut col, 0.95));
    }
    let mut nie = Vec::with_capacity(t);
    let mut nde = Vec::with_capacity(t);
    for k in 0..t {
        let row: Vec<f64> = draws.row(k).iter().copied().collect();
        let (a, b) = nie_nde(&row, inp.outcome.fixed[(k, 0)], inp.x, inp.x_prime);
        nie.push(a);
        nde.push(b);
    }
    let nie_mean = nie.iter().sum::<f64>() / t as f64;
    let nde_mean = nde.iter().sum::<f64>() / t as f64;
    let selection = select_voxels(&pips, inp.mode, inp.truth)?;
    let mut estimate = vec![0.0; p];
    for &j in &selection.selected {
        estimate[j] = svme_mean[j];
    }
    let region_table = region_summary(&svme_mean, &pips, &selection.selected, inp.grid)?;
    Ok(MediationReport {
        n_draws: t,
        x: inp.x,
        x_prime: inp.x_prime,
        svme_mean,
        svme_ci,
        pip: pips,
        estimate,
        nie_mean,
        nie_ci: interval(&mut nie, 0.95),
        nde_mean,
        nde_ci: interval(&mut nde, 0.95),
        mode: inp.mode,
        threshold: selection.threshold,
        achieved_fdr: selection.achieved_fdr,
        selected: selection.selected,
        region_table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn nie_nde_examples() {
        assert_eq!(nie_nde(&[1.0, 2.0], 0.7, 1.0, 1.0), (0.0, 0.0));
        let (nie, nde) = nie_nde(&[0.3; 5], 2.0, 1.0, 0.0);
        assert!((nie - 0.3).abs() < 1e-15);
        assert_eq!(nde, 2.0);
    }

    #[test]
    fn pip_examples() {
        assert_eq!(pip(&[0.0, 0.0, 1.2, -0.3]).unwrap(), 0.5);
        assert_eq!(pip(&[0.0; 3]).unwrap(), 0.0);
        assert_eq!(pip(&[1.0, -2.0]).unwrap(), 1.0);
        assert!(pip(&[]).is_err());
    }

    #[test]
    fn metrics_examples() {
        let truth = [false, true, true, false];
        let m = selection_metrics(&[1, 3], &truth);
        assert_eq!((m.fdr, m.tpr), (0.5, 0.5));
        let m = selection_metrics(&[1, 2], &truth);
        assert_eq!((m.fdr, m.tpr, m.acc), (0.0, 1.0, 1.0));
        let mut t10 = [false; 10];
        t10[..4].iter_mut().for_each(|v| *v = true);
        let m = selection_metrics(&[], &t10);
        assert_eq!((m.fdr, m.tpr, m.acc), (0.0, 0.0, 0.6));
    }

    #[test]
    fn fdr_selection_with_exact_pip() {
        let truth = [true, false, true, false, false];
        let pip: Vec<f64> = truth.iter().map(|t| if *t { 1.0 } else { 0.0 }).collect();
        let s = select_voxels(&pip, SelectionMode::Fdr(0.1), Some(&truth)).unwrap();
        let m = selection_metrics(&s.selected, &truth);
        assert_eq!((m.fdr, m.tpr), (0.0, 1.0));
        assert!(select_voxels(&pip, SelectionMode::Fdr(0.1), None).is_err());
        let s = select_voxels(&[0.05, 0.1, 0.5], SelectionMode::Pip(0.1), None).unwrap();
        assert_eq!(s.selected, vec![2]);
    }

    #[test]
    fn fdr_fallback_uses_largest_cut() {
        let truth = [false, false, true];
        let pip = [0.9, 0.8, 0.5];
        let s = select_voxels(&pip, SelectionMode::Fdr(0.1), Some(&truth)).unwrap();
        assert_eq!(s.threshold, 0.9);
        assert_eq!(s.selected, vec![0]);
        assert_eq!(s.achieved_fdr, Some(1.0));
    }

    #[test]
    fn region_summary_examples() {
        let grid = VoxelGrid::line(2, 1).unwrap();
        let rows = region_summary(&[2.0, -1.0], &[1.0, 0.5], &[0], &grid).unwrap();
        assert_eq!(rows[0].nie, 0.5);
        assert_eq!(rows[0].nie_pos, 1.0);
        assert_eq!(rows[0].nie_neg, -0.5);
        assert_eq!(rows[0].avg_pip, 0.75);
        assert_eq!(rows[0].n_active, 1);
        let rows = region_summary(&[0.0, 0.0], &[0.2, 0.4], &[], &grid).unwrap();
        assert_eq!((rows[0].nie, rows[0].nie_pos, rows[0].nie_neg, rows[0].n_active), (0.0, 0.0, 0.0, 0));
    }

    #[test]
    fn selection_mode_parsing() {
        assert_eq!(SelectionMode::parse("fdr:0.1").unwrap(), SelectionMode::Fdr(0.1));
        assert_eq!(SelectionMode::parse("pip:0.1").unwrap(), SelectionMode::Pip(0.1));
        assert!(SelectionMode::parse("fdr:1.5").is_err());
        assert!(SelectionMode::parse("foo:0.1").is_err());
        assert!(SelectionMode::parse("0.1").is_err());
    }

    #[test]
    fn quantile_interpolates() {
        let v = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), 2.0);
        assert_eq!(quantile(&v, 0.125), 0.5);
        assert_eq!(quantile(&v, 1.0), 4.0);
    }

    proptest! {
        #[test]
        fn metrics_match_brute_force(bits in proptest::collection::vec((any::<bool>(), any::<bool>()), 1..40)) {
            let truth: Vec<bool> = bits.iter().map(|b| b.0).collect();
            let sel: Vec<usize> = (0..bits.len()).filter(|&j| bits[j].1).collect();
            let m = selection_metrics(&sel, &truth);
            let (mut tp, mut fp, mut tn, mut fn_) = (0.0, 0.0, 0.0, 0.0);
            for (t, s) in &bits {
                match (t, s) {
                    (true, true) => tp += 1.0,
                    (false, true) => fp += 1.0,
                    (false, false) => tn += 1.0,
                    (true, false) => fn_ += 1.0,
                }
            }
            let fdr = if tp + fp == 0.0 { 0.0 } else { fp / (tp + fp) };
            let tpr = if tp + fn_ == 0.0 { 1.0 } else { tp / (tp + fn_) };
            prop_assert!((m.fdr - fdr).abs() < 1e-12);
            prop_assert!((m.tpr - tpr).abs() < 1e-12);
            prop_assert!((m.acc - (tp + tn) / bits.len() as f64).abs() < 1e-12);
        }

        #[test]
        fn fdr_cut_matches_exhaustive_scan(
            entries in proptest::collection::vec((0u8..6, any::<bool>()), 2..30),
            target in 0.05f64..0.6,
        ) {
            let pip: Vec<f64> = entries.iter().map(|e| e.0 as f64 / 5.0).collect();
            let truth: Vec<bool> = entries.iter().map(|e| e.1).collect();
            let s = select_voxels(&pip, SelectionMode::Fdr(target), Some(&truth)).unwrap();
            // Oracle: every cut in (0,1], smallest admissible, else the most selective nonempty one.
            let mut best: Option<f64> = None;
            let mut largest_nonempty: Option<f64> = None;
            for k in 1..=5 {
                let t = k as f64 / 5.0;
                let sel: Vec<usize> = (0..pip.len()).filter(|&j| pip[j] >= t).collect();
                if sel.is_empty() { continue; }
                largest_nonempty = Some(t);
                let fp = sel.iter().filter(|&&j| !truth[j]).count() as f64;
                if fp / sel.len() as f64 <= target && best.is_none() {
                    best = Some(t);
                }
            }
            match best.or(largest_nonempty) {
                Some(t) => {
                    let want: Vec<usize> = (0..pip.len()).filter(|&j| pip[j] >= t).collect();
                    prop_assert_eq!(s.selected, want);
                }
                None => prop_assert!(s.selected.is_empty()),
            }
        }

        #[test]
        fn selections_are_nested(pip in proptest::collection::vec(0.0f64..1.0, 1..50), t1 in 0.0f64..1.0, dt in 0.0f64..1.0) {
            let a = select_voxels(&pip, SelectionMode::Pip(t1), None).unwrap().selected;
            let b = select_voxels(&pip, SelectionMode::Pip((t1 + dt).min(0.999)), None).unwrap().selected;
            prop_assert!(b.iter().all(|j| a.contains(j)));
        }
    }
}
