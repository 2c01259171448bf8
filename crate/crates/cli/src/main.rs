//! `bima`: simulate, fit, summarize and evaluate image mediation models.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use bima_core::kernel_basis::{BasisSize, KernelSpec};
use bima_core::sampler::{EtaUpdate, InitStrategy, Preconditioner, SamplerConfig};
use bima_core::BimaError;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "bima", version, about = "Bayesian image mediation analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a dataset with known mediation effects.
    Simulate(SimulateArgs),
    /// Fit the outcome or mediator model and write its trace.
    Fit(FitArgs),
    /// Combine two traces into voxel-level mediation effects.
    Mediate(MediateArgs),
    /// Two-fold predictive check over thresholds or kernel ranges.
    Sensitivity(SensitivityArgs),
    /// Repeat simulate, fit, mediate and score over replications.
    Evaluate(EvaluateArgs),
}

#[derive(Args, Clone)]
pub struct DesignArgs {
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    /// Image layout `WxHxR` with `R` a perfect square.
    #[arg(long, default_value = "20x20x4")]
    pub grid: String,
    #[arg(long, default_value_t = 0.1)]
    pub sigma_y: f64,
    #[arg(long, default_value_t = 0.5)]
    pub sigma_m: f64,
    #[arg(long, default_value_t = 0.5)]
    pub nu_true: f64,
    #[arg(long, default_value_t = 10.0)]
    pub eta_scale: f64,
    /// Basis fraction of the smooth nuisance fields.
    #[arg(long, default_value_t = 0.2)]
    pub sim_basis_frac: f64,
    /// Draw a 0/1 exposure instead of a standard normal one.
    #[arg(long)]
    pub binary_exposure: bool,
}

#[derive(Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub design: DesignArgs,
    #[arg(long, value_enum, default_value_t = PatternArg::Dense)]
    pub pattern: PatternArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PatternArg {
    Dense,
    Sparse,
    /// Alternate dense and sparse across replications (evaluate only).
    Mixed,
}

#[derive(Args, Clone)]
pub struct BasisArgs {
    /// `matern:<u>,<rho>` or `mse:<a>,<b>`.
    #[arg(long, default_value = "matern:0.2,2")]
    pub kernel: String,
    /// Keep eigenpairs until this share of the trace is reached.
    #[arg(long, group = "size")]
    pub cutoff: Option<f64>,
    /// Keep this fraction of each region's voxel count.
    #[arg(long, group = "size")]
    pub basis_frac: Option<f64>,
    #[arg(long, group = "size")]
    pub basis_count: Option<usize>,
}

impl BasisArgs {
    pub fn kernel(&self) -> Result<KernelSpec, BimaError> {
        parse_kernel(&self.kernel)
    }

    pub fn size(&self) -> BasisSize {
        match (self.cutoff, self.basis_frac, self.basis_count) {
            (Some(c), _, _) => BasisSize::Cutoff(c),
            (_, Some(f), _) => BasisSize::RegionFraction(f),
            (_, _, Some(k)) => BasisSize::Fixed(k),
            _ => BasisSize::RegionFraction(0.2),
        }
    }
}

pub fn parse_kernel(s: &str) -> Result<KernelSpec, BimaError> {
    let bad = || BimaError::InvalidArgument(format!("kernel '{s}' is not matern:<u>,<rho> or mse:<a>,<b>"));
    let (family, params) = s.split_once(':').ok_or_else(bad)?;
    let (a, b) = params.split_once(',').ok_or_else(bad)?;
    let a: f64 = a.trim().parse().map_err(|_| bad())?;
    let b: f64 = b.trim().parse().map_err(|_| bad())?;
    let spec = match family {
        "matern" => KernelSpec::matern(a, b),
        "mse" => KernelSpec::modified_se(a, b),
        _ => return Err(bad()),
    };
    spec.validate()?;
    Ok(spec)
}

#[derive(Clone, Copy, ValueEnum)]
pub enum InitArg {
    Zero,
    Gp,
    Lasso,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum EtaArg {
    Full,
    Zero,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum PrecondArg {
    Identity,
    Prior,
    Curvature,
}

/// Sampler flags shared by every command that runs a chain.
#[derive(Args, Clone)]
pub struct ChainArgs {
    #[arg(long, default_value_t = 0.5)]
    pub nu: f64,
    /// Defaults to 100000 for the outcome model and 5000 for the mediator model.
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long, default_value_t = 0.5)]
    pub burnin: f64,
    /// Defaults to 10 for the outcome model and 5 for the mediator model.
    #[arg(long)]
    pub thin: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = InitArg::Gp)]
    pub init: InitArg,
    #[arg(long, value_enum, default_value_t = EtaArg::Full)]
    pub eta: EtaArg,
    #[arg(long, default_value_t = 0.2)]
    pub beta_only_frac: f64,
    #[arg(long, value_enum, default_value_t = PrecondArg::Curvature)]
    pub preconditioner: PrecondArg,
    #[arg(long, default_value_t = 1.0)]
    pub ig_shape: f64,
    #[arg(long, default_value_t = 1.0)]
    pub ig_rate: f64,
}

impl ChainArgs {
    pub fn config(&self, base: SamplerConfig) -> SamplerConfig {
        let mut c = SamplerConfig {
            iters: self.iters.unwrap_or(base.iters),
            thin: self.thin.unwrap_or(base.thin),
            burnin_frac: self.burnin,
            seed: self.seed,
            nu: self.nu,
            beta_only_frac: self.beta_only_frac,
            init: match self.init {
                InitArg::Zero => InitStrategy::Zero,
                InitArg::Gp => InitStrategy::GpWorkingModel,
                InitArg::Lasso => InitStrategy::LassoThreshold,
            },
            eta_update: match self.eta {
                EtaArg::Full => EtaUpdate::Full,
                EtaArg::Zero => EtaUpdate::FixedZero,
            },
            preconditioner: match self.preconditioner {
                PrecondArg::Identity => Preconditioner::Identity,
                PrecondArg::Prior => Preconditioner::PriorDiagonal,
                PrecondArg::Curvature => Preconditioner::Curvature,
            },
            ..base
        };
        c.priors.ig_shape = self.ig_shape;
        c.priors.ig_rate = self.ig_rate;
        c
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Outcome,
    Mediator,
}

#[derive(Args)]
pub struct FitArgs {
    #[arg(long, value_enum)]
    pub model: ModelArg,
    /// Dataset directory written by `simulate`.
    #[arg(long)]
    pub data: PathBuf,
    /// Precomputed bases directory; overrides the kernel flags.
    #[arg(long)]
    pub bases: Option<PathBuf>,
    #[command(flatten)]
    pub basis: BasisArgs,
    #[command(flatten)]
    pub chain: ChainArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct MediateArgs {
    #[arg(long)]
    pub outcome_trace: PathBuf,
    #[arg(long)]
    pub mediator_trace: PathBuf,
    /// `fdr:<target>` (needs --truth) or `pip:<cut>`.
    #[arg(long, default_value = "pip:0.1")]
    pub mode: String,
    /// Simulated dataset directory holding the true effects.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    pub x: f64,
    #[arg(long, default_value_t = 0.0)]
    pub xprime: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct SensitivityArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Comma-separated thresholds.
    #[arg(long, group = "grid_kind", required = true)]
    pub nu_grid: Option<String>,
    /// Comma-separated kernel range multipliers, fitted at --nu.
    #[arg(long, group = "grid_kind", required = true)]
    pub rho_scales: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
    #[command(flatten)]
    pub basis: BasisArgs,
    #[command(flatten)]
    pub chain: ChainArgs,
    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct EvaluateArgs {
    #[arg(long, default_value_t = 10)]
    pub replications: usize,
    #[command(flatten)]
    pub design: DesignArgs,
    #[arg(long, value_enum, default_value_t = PatternArg::Mixed)]
    pub pattern: PatternArg,
    /// Replication `i` simulates with seed `seed + i`.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub basis: BasisArgs,
    #[arg(long, default_value_t = 0.5)]
    pub nu: f64,
    #[arg(long, default_value_t = 20_000)]
    pub outcome_iters: usize,
    #[arg(long, default_value_t = 0.5)]
    pub outcome_burnin: f64,
    #[arg(long, default_value_t = 10)]
    pub outcome_thin: usize,
    #[arg(long, default_value_t = 5_000)]
    pub mediator_iters: usize,
    #[arg(long, default_value_t = 0.5)]
    pub mediator_burnin: f64,
    #[arg(long, default_value_t = 5)]
    pub mediator_thin: usize,
    #[arg(long, value_enum, default_value_t = EtaArg::Full)]
    pub eta: EtaArg,
    #[arg(long, default_value = "fdr:0.1")]
    pub mode: String,
    #[arg(long)]
    pub out: PathBuf,
}

fn exit_code(e: &BimaError) -> u8 {
    match e {
        BimaError::Diverged(_) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Fit(a) => commands::fit(&a),
        Command::Mediate(a) => commands::mediate(&a),
        Command::Sensitivity(a) => commands::sensitivity(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
