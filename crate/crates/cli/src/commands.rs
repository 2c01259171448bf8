use std::fs;
use std::path::Path;
use std::time::Instant;

use bima_core::evaluate::{evaluate as run_evaluate, results_to_csv, FitSettings};
use bima_core::grid::parse_image_layout;
use bima_core::io::{read_bases, read_dataset, read_trace, write_dataset, write_json, write_report, write_trace};
use bima_core::kernel_basis::BasisSet;
use bima_core::mediation::{build_report, ReportInputs, SelectionMode};
use bima_core::sampler::{run_mediator_chain, run_outcome_chain, SamplerConfig};
use bima_core::sensitivity::{kernel_grid, rows_to_csv, threshold_grid};
use bima_core::simgen::{generate, Pattern, SimDesign};
use bima_core::{BimaError, Result};
use serde::Serialize;

use crate::{
    DesignArgs, EtaArg, EvaluateArgs, FitArgs, MediateArgs, ModelArg, PatternArg, SensitivityArgs, SimulateArgs,
};

fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(BimaError::InvalidArgument(msg.into()))
}

fn design(args: &DesignArgs, pattern: Pattern, seed: u64) -> Result<SimDesign> {
    let (side_x, side_y, blocks) = parse_image_layout(&args.grid)?;
    let d = SimDesign {
        n: args.n,
        side_x,
        side_y,
        blocks,
        pattern,
        sigma_y: args.sigma_y,
        sigma_m: args.sigma_m,
        nu_true: args.nu_true,
        eta_scale: args.eta_scale,
        basis_frac: args.sim_basis_frac,
        binary_exposure: args.binary_exposure,
        seed,
        ..SimDesign::default()
    };
    d.validate()?;
    Ok(d)
}

fn parse_list(s: &str, what: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| BimaError::InvalidArgument(format!("{what} entry '{v}' is not a number")))
        })
        .collect()
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, text)?;
    Ok(())
}

#[derive(Serialize)]
struct Timing {
    wall_seconds: f64,
}

fn worker_count() -> usize {
    let available = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    match std::env::var("BIMA_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        Some(cap) if cap > 0 => cap.min(available),
        _ => available,
    }
}

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    let pattern = match args.pattern {
        PatternArg::Dense => Pattern::Dense,
        PatternArg::Sparse => Pattern::Sparse,
        PatternArg::Mixed => return invalid("the mixed pattern only applies to evaluate"),
    };
    let d = design(&args.design, pattern, args.seed)?;
    let (data, truth) = generate(&d)?;
    write_dataset(&args.out, &data, Some(&truth), Some(&d))?;
    log::info!("wrote n={} p={} to {}", data.n(), data.p(), args.out.display());
    Ok(())
}

pub fn fit(args: &FitArgs) -> Result<()> {
    let loaded = read_dataset(&args.data)?;
    let data = &loaded.data;
    let bases = match &args.bases {
        Some(dir) => read_bases(dir)?,
        None => BasisSet::build(&data.grid, &args.basis.kernel()?, args.basis.size())?,
    };
    if bases.n_voxels() != data.p() {
        return invalid(format!("bases cover {} voxels, dataset has {}", bases.n_voxels(), data.p()));
    }
    let started = Instant::now();
    let (trace, config) = match args.model {
        ModelArg::Outcome => {
            let c = args.chain.config(SamplerConfig::default());
            (run_outcome_chain(data, &bases, &c)?, c)
        }
        ModelArg::Mediator => {
            let c = args.chain.config(SamplerConfig::mediator_default());
            (run_mediator_chain(data, &bases, &c)?, c)
        }
    };
    let wall_seconds = started.elapsed().as_secs_f64();
    write_trace(&args.out, &trace, &bases, &data.grid, &config, Some(&args.data.to_string_lossy()))?;
    write_json(&args.out.join("timing.json"), &Timing { wall_seconds })?;
    log::info!("{} draws in {wall_seconds:.1}s, acceptance {:?}", trace.n_draws(), trace.accept_rates);
    Ok(())
}

pub fn mediate(args: &MediateArgs) -> Result<()> {
    let mode = SelectionMode::parse(&args.mode)?;
    if matches!(mode, SelectionMode::Fdr(_)) && args.truth.is_none() {
        return invalid("fdr mode needs --truth");
    }
    let support = match &args.truth {
        Some(dir) => match read_dataset(dir)?.truth {
            Some(t) => Some(t.support()),
            None => return invalid(format!("{} holds no true effects", dir.display())),
        },
        None => None,
    };
    let outcome = read_trace(&args.outcome_trace)?;
    let mediator = read_trace(&args.mediator_trace)?;
    if outcome.grid != mediator.grid {
        return invalid("the two traces were fitted on different grids");
    }
    let report = build_report(&ReportInputs {
        outcome: &outcome.trace,
        mediator: &mediator.trace,
        outcome_bases: &outcome.bases,
        mediator_bases: &mediator.bases,
        grid: &outcome.grid,
        mode,
        truth: support.as_deref(),
        x: args.x,
        x_prime: args.xprime,
    })?;
    write_report(&args.out, &report, &outcome.grid)?;
    log::info!("selected {} voxels, NIE {:.4}", report.selected.len(), report.nie_mean);
    Ok(())
}

pub fn sensitivity(args: &SensitivityArgs) -> Result<()> {
    let data = read_dataset(&args.data)?.data;
    if data.n() < 4 {
        return invalid(format!("need at least 4 subjects to split, got {}", data.n()));
    }
    let config = args.chain.config(SamplerConfig::default());
    let kernel = args.basis.kernel()?;
    let rows = match (&args.nu_grid, &args.rho_scales) {
        (Some(nus), None) => {
            let bases = BasisSet::build(&data.grid, &kernel, args.basis.size())?;
            threshold_grid(&data, &bases, &parse_list(nus, "threshold")?, &config, args.split_seed)?
        }
        (None, Some(scales)) => kernel_grid(
            &data,
            &kernel,
            args.basis.size(),
            &parse_list(scales, "range multiplier")?,
            &config,
            args.split_seed,
        )?,
        _ => return invalid("give exactly one of --nu-grid and --rho-scales"),
    };
    write_text(&args.out, &rows_to_csv(&rows))
}

pub fn evaluate(args: &EvaluateArgs) -> Result<()> {
    if args.replications == 0 {
        return invalid("--replications must be positive");
    }
    let designs = (0..args.replications)
        .map(|i| {
            let pattern = match args.pattern {
                PatternArg::Dense => Pattern::Dense,
                PatternArg::Sparse => Pattern::Sparse,
                PatternArg::Mixed if i % 2 == 0 => Pattern::Dense,
                PatternArg::Mixed => Pattern::Sparse,
            };
            design(&args.design, pattern, args.seed + i as u64)
        })
        .collect::<Result<Vec<_>>>()?;
    let eta_update = match args.eta {
        EtaArg::Full => bima_core::sampler::EtaUpdate::Full,
        EtaArg::Zero => bima_core::sampler::EtaUpdate::FixedZero,
    };
    let settings = FitSettings {
        outcome: SamplerConfig {
            iters: args.outcome_iters,
            burnin_frac: args.outcome_burnin,
            thin: args.outcome_thin,
            nu: args.nu,
            ..SamplerConfig::default()
        },
        mediator: SamplerConfig {
            iters: args.mediator_iters,
            burnin_frac: args.mediator_burnin,
            thin: args.mediator_thin,
            nu: args.nu,
            eta_update,
            ..SamplerConfig::mediator_default()
        },
        kernel: args.basis.kernel()?,
        basis: args.basis.size(),
        mode: SelectionMode::parse(&args.mode)?,
    };
    let started = Instant::now();
    let (results, summary) = run_evaluate(&designs, &settings, worker_count())?;
    fs::create_dir_all(&args.out)?;
    write_text(&args.out.join("metrics.csv"), &results_to_csv(&results, &summary))?;
    write_json(&args.out.join("summary.json"), &summary)?;
    write_json(&args.out.join("settings.json"), &(&designs, &settings))?;
    write_json(&args.out.join("timing.json"), &Timing { wall_seconds: started.elapsed().as_secs_f64() })?;
    Ok(())
}
