use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use lgd_core::flightlog::CampaignOptions;
use lgd_core::guideline::MoeaParams;
use lgd_core::pipeline::{Inputs, Pipeline, RunOptions, ValidateOptions};
use lgd_core::predictor::{PredictorHyperparams, ThresholdSplit};
use lgd_core::search::{SearchParams, DEFAULT_CLUSTER_SAMPLE};

const EXIT_USAGE: u8 = 1;
const EXIT_STAGE: u8 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "lgd",
    version,
    about = "Search quadrotor control parameters for range specification bugs"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// Parameter table CSV (built-in table when omitted).
    #[arg(long, global = true)]
    table: Option<PathBuf>,

    /// Waypoint mission file (built-in mission when omitted).
    #[arg(long, global = true)]
    mission: Option<PathBuf>,

    /// Pre-arm rules JSON (built-in rules when omitted).
    #[arg(long, global = true)]
    prearm: Option<PathBuf>,

    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Worker threads; 0 uses one per core.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,

    /// Run directory. `LGD_OUT` takes precedence when set.
    #[arg(long, global = true, default_value = "lgd-out")]
    out_dir: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fly a campaign of stable-ish configurations and keep the logs.
    Genlogs(GenlogsArgs),
    /// Fit the surrogate model and its deviation threshold.
    Train(TrainArgs),
    /// Cluster segments and search for high-deviation configurations.
    Search(SearchArgs),
    /// Fly every potential configuration and record its verdict.
    Validate(ValidateArgs),
    /// Derive Pareto-optimal range guidelines from the records.
    Guideline(GuidelineArgs),
    /// Tally verdicts and the true-positive ratio.
    Report,
    /// Run every stage in order.
    RunAll(RunAllArgs),
}

#[derive(Debug, Clone, Args)]
struct GenlogsArgs {
    #[arg(long, default_value_t = 300, value_parser = clap::value_parser!(u64).range(1..))]
    flights: u64,

    /// Campaign sampler standard deviation, as a fraction of each range.
    #[arg(long, default_value_t = 0.15)]
    sigma: f64,
}

#[derive(Debug, Clone, Args)]
struct TrainArgs {
    #[arg(long, default_value_t = 4)]
    h: usize,

    #[arg(long, default_value_t = 64)]
    hidden: usize,

    #[arg(long, default_value_t = 50)]
    epochs: usize,

    #[arg(long, default_value_t = 1e-3)]
    lr: f64,

    #[arg(long, default_value_t = 64)]
    batch_size: usize,

    #[arg(long, default_value_t = 0.2)]
    val_fraction: f64,

    #[arg(long, default_value_t = 5)]
    patience: usize,

    #[arg(long, default_value_t = 6000)]
    max_windows: usize,

    /// Predict the one-step state change instead of the state.
    #[arg(long)]
    residual: bool,

    /// Split used to calibrate the deviation threshold: `train` or `val`.
    #[arg(long, default_value = "train")]
    threshold_split: ThresholdSplit,
}

#[derive(Debug, Clone, Args)]
struct SearchArgs {
    #[arg(long, default_value_t = 200)]
    np: usize,

    #[arg(long, default_value_t = 0.4)]
    f: f64,

    #[arg(long, default_value_t = 0.9)]
    cr: f64,

    #[arg(long, default_value_t = 200)]
    gmax: usize,

    #[arg(long, default_value_t = 0.1)]
    stagnation_eps: f64,

    /// Generations without improvement before stopping; 0 disables the check.
    #[arg(long, default_value_t = 10)]
    stagnation_window: usize,

    #[arg(long, default_value_t = 10)]
    top_k: usize,

    /// Representatives per cluster.
    #[arg(long, default_value_t = 3)]
    m: usize,

    /// Initial population half-width around the defaults (fraction of range).
    #[arg(long, default_value_t = 1.0)]
    init_spread: f64,

    /// Meanshift bandwidth; estimated from the segments when omitted.
    #[arg(long)]
    bandwidth: Option<f64>,

    #[arg(long, default_value_t = DEFAULT_CLUSTER_SAMPLE)]
    cluster_sample: usize,
}

#[derive(Debug, Clone, Args)]
struct ValidateArgs {
    /// Seconds into the mission at which a pre-arm-rejected config is injected.
    #[arg(long, default_value_t = 20.0)]
    injection_time: f64,
}

#[derive(Debug, Clone, Args)]
struct GuidelineArgs {
    #[arg(long, default_value_t = 100)]
    population: usize,

    #[arg(long, default_value_t = 200)]
    generations: usize,

    /// Snap bounds to this many evenly spaced points per range.
    #[arg(long)]
    grid: Option<usize>,
}

#[derive(Debug, Clone, Args)]
struct RunAllArgs {
    #[command(flatten)]
    genlogs: GenlogsArgs,
    #[command(flatten)]
    train: TrainArgs,
    #[command(flatten)]
    search: SearchArgs,
    #[command(flatten)]
    validate: ValidateArgs,
    #[command(flatten)]
    guideline: GuidelineArgs,
}

impl GenlogsArgs {
    fn options(&self) -> CampaignOptions {
        CampaignOptions {
            n_flights: self.flights as usize,
            sigma_fraction: self.sigma,
            ..CampaignOptions::default()
        }
    }
}

impl TrainArgs {
    fn hyperparams(&self) -> PredictorHyperparams {
        PredictorHyperparams {
            h: self.h,
            hidden_size: self.hidden,
            epochs: self.epochs,
            learning_rate: self.lr,
            batch_size: self.batch_size,
            validation_fraction: self.val_fraction,
            patience: self.patience,
            max_windows: self.max_windows,
            residual: self.residual,
        }
    }
}

impl SearchArgs {
    fn params(&self) -> SearchParams {
        SearchParams {
            np: self.np,
            f: self.f,
            cr: self.cr,
            g_max: self.gmax,
            stagnation_eps: self.stagnation_eps,
            stagnation_window: self.stagnation_window,
            top_k: self.top_k,
            m: self.m,
            init_spread: self.init_spread,
        }
    }
}

impl ValidateArgs {
    fn options(&self) -> ValidateOptions {
        ValidateOptions {
            injection_time: self.injection_time,
            ..ValidateOptions::default()
        }
    }
}

impl GuidelineArgs {
    fn params(&self) -> MoeaParams {
        MoeaParams {
            population: self.population,
            generations: self.generations,
            grid: self.grid,
            ..MoeaParams::default()
        }
    }
}

/// Failure class, mapped to the process exit code.
enum Failure {
    Usage(anyhow::Error),
    Stage(anyhow::Error),
}

fn usage<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Usage(e.into())
}

fn stage<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Stage(e.into())
}

fn check_sigma(sigma: f64) -> Result<(), Failure> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(usage(anyhow::anyhow!("--sigma must be positive")))
    }
}

fn check_bandwidth(bw: Option<f64>) -> Result<(), Failure> {
    match bw {
        Some(b) if !(b > 0.0 && b.is_finite()) => Err(usage(anyhow::anyhow!("--bandwidth must be positive"))),
        _ => Ok(()),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let g = &cli.global;
    if g.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(g.jobs)
            .build_global()
            .map_err(stage)?;
    }
    let out_dir = std::env::var_os("LGD_OUT").map_or_else(|| g.out_dir.clone(), PathBuf::from);

    // Validate stage options before touching the run directory.
    match &cli.command {
        Command::Genlogs(a) => check_sigma(a.sigma)?,
        Command::Train(a) => a.hyperparams().validate().map_err(usage)?,
        Command::Search(a) => {
            a.params().validate().map_err(usage)?;
            check_bandwidth(a.bandwidth)?;
        }
        Command::Guideline(a) => a.params().validate().map_err(usage)?,
        Command::RunAll(a) => {
            check_sigma(a.genlogs.sigma)?;
            a.train.hyperparams().validate().map_err(usage)?;
            a.search.params().validate().map_err(usage)?;
            check_bandwidth(a.search.bandwidth)?;
            a.guideline.params().validate().map_err(usage)?;
        }
        Command::Validate(_) | Command::Report => {}
    }

    let inputs = Inputs::load(g.table.as_deref(), g.mission.as_deref(), g.prearm.as_deref())
        .context("loading inputs")
        .map_err(stage)?;
    let mut p = Pipeline::open(&out_dir, g.seed, inputs).map_err(stage)?;

    match &cli.command {
        Command::Genlogs(a) => {
            let logs = p.genlogs(&a.options()).map_err(stage)?;
            println!(
                "genlogs: kept {} of {} flights in {}",
                logs.stats.retained,
                logs.stats.attempted,
                out_dir.join(lgd_core::pipeline::LOG_DIR).display()
            );
        }
        Command::Train(a) => {
            let model = p.train(&a.hyperparams(), a.threshold_split).map_err(stage)?;
            println!(
                "train: h = {}, threshold = {:.6}, best validation loss = {:.6}",
                model.h,
                model.threshold,
                model.training.best_val_loss()
            );
        }
        Command::Search(a) => {
            let set = p.search(&a.params(), a.bandwidth, a.cluster_sample).map_err(stage)?;
            println!(
                "search: {} potential configurations from {} representatives",
                set.entries.len(),
                set.metadata.representatives.len()
            );
        }
        Command::Validate(a) => {
            let set = p.validate(&a.options()).map_err(stage)?;
            let bad = set.records.iter().filter(|r| r.incorrect()).count();
            println!("validate: {bad} of {} configurations incorrect", set.records.len());
        }
        Command::Guideline(a) => {
            let front = p.guideline(&a.params()).map_err(stage)?;
            println!("guideline: {} guidelines on the front", front.len());
        }
        Command::Report => {
            let report = p.report().map_err(stage)?;
            print!("{}", report.to_csv_string());
        }
        Command::RunAll(a) => {
            let opts = RunOptions {
                campaign: a.genlogs.options(),
                predictor: a.train.hyperparams(),
                threshold_split: a.train.threshold_split,
                search: a.search.params(),
                bandwidth: a.search.bandwidth,
                cluster_sample: a.search.cluster_sample,
                validate: a.validate.options(),
                moea: a.guideline.params(),
            };
            let report = p.run_all(&opts).map_err(stage)?;
            print!("{}", report.to_csv_string());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Stage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_STAGE)
        }
    }
}
