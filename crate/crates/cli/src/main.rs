//! `cpdetect`: threshold calibration, changepoint detection on score streams,
//! synthetic data, continual-learning runs and evaluation.
//!
//! Exit status: 0 success, 1 usage error, 2 data error, 3 numeric failure.

mod commands;
mod config;
mod error;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cpdetect::Method;

use config::{
    resolve, to_pretty_json, CalibrateConfig, ClRunConfig, ClTasksConfig, CommandConfig, DetectConfig, EvaluateConfig,
    MeanShiftConfig, ModelKind, NormalityConfig, Overrides,
};
use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(
    name = "cpdetect",
    version,
    about = "Changepoint detection on the prediction scores of online-trained models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Monte Carlo null quantiles of the scan statistic.
    Calibrate(CalibrateArgs),
    /// Online detection over a score CSV.
    Detect(DetectArgs),
    /// Synthetic data.
    #[command(subcommand)]
    Simulate(SimulateCommand),
    /// Continual-learning run on a synthetic task stream.
    ClRun(ClRunArgs),
    /// Tolerance-matching metrics of detected against true changepoints.
    Evaluate(EvaluateArgs),
    /// D'Agostino-Pearson normality test of a score CSV.
    DiagnoseNormality(NormalityArgs),
}

#[derive(Debug, Subcommand)]
enum SimulateCommand {
    /// Piecewise-constant mean with Gaussian noise, as a score CSV.
    MeanShift(MeanShiftArgs),
    /// Labelled examples of a stream of classification tasks.
    ClTasks(ClTasksArgs),
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// Configuration document; explicit flags override its values.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    dump_config: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Checkpoint,
    Bayescd,
    Simplecd,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Checkpoint => Method::Checkpoint,
            MethodArg::Bayescd => Method::Bayescd,
            MethodArg::Simplecd => Method::Simplecd,
        }
    }
}

/// Comma-separated numbers.
#[derive(Debug, Clone)]
struct List(Vec<f64>);

impl std::str::FromStr for List {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        s.split(',')
            .map(|x| x.trim().parse::<f64>().map_err(|_| format!("`{x}` is not a number")))
            .collect::<std::result::Result<_, _>>()
            .map(List)
    }
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    #[command(flatten)]
    common: ConfigArgs,
    /// Window size T.
    #[arg(long)]
    window: Option<usize>,
    /// Border alpha; defaults to T/4.
    #[arg(long)]
    alpha: Option<usize>,
    #[arg(long)]
    sims: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated error levels.
    #[arg(long)]
    deltas: Option<List>,
    /// Table file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DetectArgs {
    #[command(flatten)]
    common: ConfigArgs,
    /// Score CSV: `t` then one column per batch item.
    #[arg(long)]
    scores: Option<PathBuf>,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    #[arg(long, value_enum)]
    model: Option<ModelKind>,
    /// Moving-average learning rate.
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    alpha: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    /// Restore the nearest checkpoint before each detected change.
    #[arg(long)]
    recover: Option<bool>,
    /// Calibration table; the bundled reference table when absent.
    #[arg(long)]
    table: Option<PathBuf>,
    /// Baseline cutoff.
    #[arg(long)]
    cutoff: Option<f64>,
    /// Event log file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-test diagnostics CSV.
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MeanShiftArgs {
    #[command(flatten)]
    common: ConfigArgs,
    #[arg(long)]
    segments: Option<usize>,
    /// Observations per step.
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    min_len: Option<usize>,
    #[arg(long)]
    max_len: Option<usize>,
    /// Smallest mean jump in noise standard deviations.
    #[arg(long)]
    shift: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// True changepoint CSV.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct StreamArgs {
    #[arg(long)]
    tasks: Option<usize>,
    /// Examples per step.
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    min_segment: Option<usize>,
    /// Per-step changepoint probability after the minimum segment length.
    #[arg(long)]
    cp_prob: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

impl StreamArgs {
    fn apply(&self, o: &mut Overrides) {
        o.set("stream.num_tasks", self.tasks)
            .set("stream.batch", self.batch)
            .set("stream.min_segment", self.min_segment)
            .set("stream.cp_prob", self.cp_prob)
            .set("stream.seed", self.seed);
    }
}

#[derive(Debug, Args)]
struct ClTasksArgs {
    #[command(flatten)]
    common: ConfigArgs,
    #[command(flatten)]
    stream: StreamArgs,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ClRunArgs {
    #[command(flatten)]
    common: ConfigArgs,
    #[command(flatten)]
    stream: StreamArgs,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    /// Learner step size.
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    alpha: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    recover: Option<bool>,
    #[arg(long)]
    table: Option<PathBuf>,
    /// Comma-separated baseline cutoffs to sweep.
    #[arg(long)]
    cutoffs: Option<List>,
    #[arg(long)]
    tolerance: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[command(flatten)]
    common: ConfigArgs,
    /// CSV with a single `t` column.
    #[arg(long = "true")]
    truth: Option<PathBuf>,
    /// Event log JSON or a `t` CSV.
    #[arg(long)]
    detected: Option<PathBuf>,
    #[arg(long)]
    tolerance: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct NormalityArgs {
    #[command(flatten)]
    common: ConfigArgs,
    #[arg(long)]
    scores: Option<PathBuf>,
    /// Test every score instead of per-step means.
    #[arg(long)]
    per_item: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run_config<C: CommandConfig>(common: &ConfigArgs, o: &Overrides, exec: fn(&C) -> Result<()>) -> Result<()> {
    let cfg: C = resolve(common.config.as_deref(), o)?;
    if common.dump_config {
        return io::emit(None, &to_pretty_json(&cfg));
    }
    exec(&cfg)
}

fn dispatch(command: Command) -> Result<()> {
    let mut o = Overrides::default();
    match command {
        Command::Calibrate(a) => {
            o.set("window", a.window)
                .set("alpha", a.alpha)
                .set("n_sims", a.sims)
                .set("seed", a.seed)
                .set("deltas", a.deltas.map(|l| l.0))
                .set("out", a.out);
            run_config::<CalibrateConfig>(&a.common, &o, commands::calibrate)
        }
        Command::Detect(a) => {
            o.set("scores", a.scores)
                .set("method", a.method.map(Method::from))
                .set("model", a.model)
                .set("moving_average.rho", a.rho)
                .set("detector.window", a.window)
                .set("detector.alpha", a.alpha)
                .set("detector.delta", a.delta)
                .set("detector.eta", a.eta)
                .set("detector.recover", a.recover)
                .set("table", a.table)
                .set("cutoff", a.cutoff)
                .set("out", a.out)
                .set("plot", a.plot);
            run_config::<DetectConfig>(&a.common, &o, commands::detect)
        }
        Command::Simulate(SimulateCommand::MeanShift(a)) => {
            o.set("series.segments", a.segments)
                .set("series.batch", a.batch)
                .set("series.min_len", a.min_len)
                .set("series.max_len", a.max_len)
                .set("series.shift", a.shift)
                .set("series.sigma", a.sigma)
                .set("series.seed", a.seed)
                .set("out", a.out)
                .set("truth", a.truth);
            run_config::<MeanShiftConfig>(&a.common, &o, commands::simulate_mean_shift)
        }
        Command::Simulate(SimulateCommand::ClTasks(a)) => {
            a.stream.apply(&mut o);
            o.set("out", a.out).set("truth", a.truth);
            run_config::<ClTasksConfig>(&a.common, &o, commands::simulate_cl_tasks)
        }
        Command::ClRun(a) => {
            a.stream.apply(&mut o);
            o.set("learner.seed", a.stream.seed)
                .set("learner.rho", a.rho)
                .set("method", a.method.map(Method::from))
                .set("detector.window", a.window)
                .set("detector.alpha", a.alpha)
                .set("detector.delta", a.delta)
                .set("detector.eta", a.eta)
                .set("detector.recover", a.recover)
                .set("table", a.table)
                .set("cutoffs", a.cutoffs.map(|l| l.0))
                .set("tolerance", a.tolerance)
                .set("out", a.out)
                .set("plot", a.plot);
            run_config::<ClRunConfig>(&a.common, &o, commands::cl_run)
        }
        Command::Evaluate(a) => {
            o.set("truth", a.truth)
                .set("detected", a.detected)
                .set("tolerance", a.tolerance)
                .set("out", a.out);
            run_config::<EvaluateConfig>(&a.common, &o, commands::evaluate)
        }
        Command::DiagnoseNormality(a) => {
            o.set("scores", a.scores)
                .set("per_item", a.per_item.then_some(true))
                .set("out", a.out);
            run_config::<NormalityConfig>(&a.common, &o, commands::diagnose_normality)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = match e {
                CliError::Usage(_) => "usage error",
                CliError::Data(_) => "data error",
                CliError::Numeric(_) => "numeric failure",
            };
            eprintln!("cpdetect: {kind}: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
