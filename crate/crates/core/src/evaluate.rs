//! Simulate, fit both models, summarize and score, over many replications.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::grid::VoxelGrid;
use crate::kernel_basis::{BasisSet, BasisSize, KernelSpec};
use crate::mediation::{build_report, MediationReport, ReportInputs, SelectionMode};
use crate::sampler::{run_mediator_chain, run_outcome_chain, SamplerConfig};
use crate::simgen::{generate_with_bases, score_one, summarize_scores, ReplicationScore, ScoreSummary, SimDesign};

/// How each replication is fitted and summarized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSettings {
    pub outcome: SamplerConfig,
    pub mediator: SamplerConfig,
    pub kernel: KernelSpec,
    pub basis: BasisSize,
    pub mode: SelectionMode,
}

impl FitSettings {
    pub fn bases(&self, grid: &VoxelGrid) -> Result<BasisSet> {
        BasisSet::build(grid, &self.kernel, self.basis)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationResult {
    pub seed: u64,
    pub score: ReplicationScore,
    pub outcome_accept: Vec<f64>,
    pub mediator_accept: Vec<f64>,
}

/// Chain seeds derived from the data seed so replications stay independent.
pub fn chain_seeds(data_seed: u64) -> (u64, u64) {
    let mix = |x: u64| {
        let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    };
    (mix(data_seed.wrapping_mul(2)), mix(data_seed.wrapping_mul(2).wrapping_add(1)))
}

/// One replication with precomputed bases; returns the report and its score.
pub fn run_replication(
    design: &SimDesign,
    grid: &VoxelGrid,
    design_bases: &BasisSet,
    fit_bases: &BasisSet,
    settings: &FitSettings,
) -> Result<(MediationReport, ReplicationResult)> {
    let (data, truth) = generate_with_bases(design, grid, design_bases)?;
    let (so, sm) = chain_seeds(design.seed);
    let outcome = run_outcome_chain(&data, fit_bases, &SamplerConfig { seed: so, ..settings.outcome.clone() })?;
    let mediator = run_mediator_chain(&data, fit_bases, &SamplerConfig { seed: sm, ..settings.mediator.clone() })?;
    let support = truth.support();
    let report = build_report(&ReportInputs {
        outcome: &outcome,
        mediator: &mediator,
        outcome_bases: fit_bases,
        mediator_bases: fit_bases,
        grid,
        mode: settings.mode,
        truth: Some(&support),
        x: 1.0,
        x_prime: 0.0,
    })?;
    let score = score_one(&report, &truth)?;
    Ok((
        report,
        ReplicationResult {
            seed: design.seed,
            score,
            outcome_accept: outcome.accept_rates,
            mediator_accept: mediator.accept_rates,
        },
    ))
}

/// Run every design on up to `threads` workers. Results keep the input order
/// and do not depend on the worker count.
pub fn evaluate(designs: &[SimDesign], settings: &FitSettings, threads: usize) -> Result<(Vec<ReplicationResult>, ScoreSummary)> {
    if designs.is_empty() {
        return invalid("at least one replication is required");
    }
    let grid = designs[0].grid()?;
    if designs.iter().any(|d| d.grid().ok().as_ref() != Some(&grid) || d.kernel != designs[0].kernel || d.basis_frac != designs[0].basis_frac) {
        return invalid("all replications must share the grid and nuisance basis");
    }
    let design_bases = designs[0].bases(&grid)?;
    let fit_bases = settings.bases(&grid)?;
    let threads = threads.clamp(1, designs.len());
    let started = Instant::now();
    let mut slots: Vec<Option<Result<ReplicationResult>>> = (0..designs.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let chunks: Vec<&mut [Option<Result<ReplicationResult>>]> = {
            let per = designs.len().div_ceil(threads);
            slots.chunks_mut(per).collect()
        };
        let per = designs.len().div_ceil(threads);
        for (w, chunk) in chunks.into_iter().enumerate() {
            let (grid, design_bases, fit_bases) = (&grid, &design_bases, &fit_bases);
            scope.spawn(move || {
                for (k, slot) in chunk.iter_mut().enumerate() {
                    let d = &designs[w * per + k];
                    *slot = Some(run_replication(d, grid, design_bases, fit_bases, settings).map(|r| r.1));
                    log::info!("replication seed {} done after {:.1}s", d.seed, started.elapsed().as_secs_f64());
                }
            });
        }
    });
    let results = slots
        .into_iter()
        .map(|s| s.expect("every replication slot is filled"))
        .collect::<Result<Vec<_>>>()?;
    let scores: Vec<ReplicationScore> = results.iter().map(|r| r.score).collect();
    let summary = summarize_scores(&scores)?;
    Ok((results, summary))
}

/// Table with one row per replication and a final `mean(sd)` row, ×100.
pub fn results_to_csv(results: &[ReplicationResult], summary: &ScoreSummary) -> String {
    let mut out = String::from("replication,seed,fdr,tpr,acc,mse_activation\n");
    for (i, r) in results.iter().enumerate() {
        out.push_str(&format!(
            "{i},{},{},{},{},{}\n",
            r.seed,
            100.0 * r.score.fdr,
            100.0 * r.score.tpr,
            100.0 * r.score.acc,
            100.0 * r.score.mse_activation
        ));
    }
    let cell = |(m, s): (f64, f64)| format!("{m:.2} ({s:.2})");
    out.push_str(&format!(
        "mean(sd),,{},{},{},{}\n",
        cell(summary.fdr),
        cell(summary.tpr),
        cell(summary.acc),
        cell(summary.mse_activation)
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::InitStrategy;

    fn quick_settings() -> FitSettings {
        let cfg = SamplerConfig { iters: 60, thin: 2, init: InitStrategy::Zero, ..SamplerConfig::default() };
        FitSettings {
            outcome: cfg.clone(),
            mediator: cfg,
            kernel: KernelSpec::matern(0.2, 2.0),
            basis: BasisSize::Fixed(4),
            mode: SelectionMode::Fdr(0.1),
        }
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let designs: Vec<SimDesign> = (0..3).map(|s| SimDesign { n: 16, seed: s, ..SimDesign::default() }).collect();
        let (a, sa) = evaluate(&designs, &quick_settings(), 1).unwrap();
        let (b, sb) = evaluate(&designs, &quick_settings(), 2).unwrap();
        assert_eq!(a, b);
        assert_eq!(sa, sb);
        let csv = results_to_csv(&a, &sa);
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.starts_with("replication,seed,fdr,tpr,acc,mse_activation"));
    }

    #[test]
    fn empty_and_mixed_inputs_are_rejected() {
        assert!(evaluate(&[], &quick_settings(), 1).is_err());
        let designs = [SimDesign { n: 16, ..SimDesign::default() }, SimDesign { n: 16, side_x: 24, ..SimDesign::default() }];
        assert!(evaluate(&designs, &quick_settings(), 1).is_err());
    }

    #[test]
    fn chain_seeds_differ() {
        let (a, b) = chain_seeds(0);
        let (c, d) = chain_seeds(1);
        assert!(a != b && a != c && a != d && b != c && b != d && c != d);
    }
}
