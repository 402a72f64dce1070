use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use jumpeuler_cli::report::{real, table_csv, terminals_csv};
use jumpeuler_cli::{
    plan, plan_csv, run_experiment, simulate, CliError, DeltaSource, ExperimentConfig, LayoutSetting, ModelChoice,
    PlanRequest, SimulateRequest, WorkersSetting,
};

#[derive(Parser)]
#[command(name = "jumpeuler", version, about = "Randomized Euler experiments for jump-diffusion SDEs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate strong errors along a schedule and fit the convergence slope.
    Run(RunArgs),
    /// Cheapest (M, n) reaching a target error.
    Plan(PlanArgs),
    /// Terminal values of independent trajectories.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct Common {
    /// "auto", "max" or a worker count; defaults to the config, then
    /// $JUMPEULER_WORKERS, then auto.
    #[arg(long)]
    workers: Option<String>,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration (JSON).
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Suppress per-row progress on standard error.
    #[arg(long)]
    quiet: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.5)]
    gamma: f64,
    /// Exponent of the power diffusion tail.
    #[arg(long, conflicts_with = "delta_table", required_unless_present = "delta_table")]
    alpha: Option<f64>,
    /// File listing δ(1), δ(2), ...
    #[arg(long)]
    delta_table: Option<PathBuf>,
    /// Rate constant of the error bound.
    #[arg(long, default_value_t = 1.0)]
    kc: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Preset name, or a JSON file holding a model.
    #[arg(long)]
    model: String,
    #[arg(short = 'M', long = "m")]
    m: usize,
    #[arg(short = 'n', long = "n")]
    n: usize,
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "auto")]
    layout: String,
    #[command(flatten)]
    common: Common,
}

fn write_output(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|source| CliError::Write {
            path: path.to_path_buf(),
            source,
        }),
        None => std::io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|source| CliError::Write {
                path: "<stdout>".into(),
                source,
            }),
    }
}

fn run(args: RunArgs) -> Result<(), CliError> {
    let mut config = ExperimentConfig::from_path(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let workers = WorkersSetting::resolve(args.common.workers.as_deref(), config.workers)?;
    let rows = config.rows()?.len();
    let quiet = args.quiet;
    let table = run_experiment(&config, workers, &mut |i, row| {
        if !quiet {
            eprintln!(
                "[{}/{rows}] M={} n={} error={} std_error={}",
                i + 1,
                row.m,
                row.n,
                real(row.error),
                real(row.std_error)
            );
        }
    })?;
    write_output(args.common.out.as_deref(), &table_csv(&table))
}

fn plan_command(args: PlanArgs) -> Result<(), CliError> {
    let delta = match (&args.delta_table, args.alpha) {
        (Some(path), _) => DeltaSource::read_table(path)?,
        (None, Some(alpha)) => DeltaSource::Power(alpha),
        (None, None) => return Err(CliError::config("plan: give --alpha or --delta-table")),
    };
    let request = PlanRequest {
        epsilon: args.epsilon,
        gamma: args.gamma,
        delta,
        rate_constant: args.kc,
    };
    let report = plan(&request)?;
    write_output(args.out.as_deref(), &plan_csv(&request, &report))
}

fn simulate_command(args: SimulateArgs) -> Result<(), CliError> {
    let request = SimulateRequest {
        model: ModelChoice::from_arg(&args.model)?,
        m: args.m,
        n: args.n,
        count: args.count,
        seed: args.seed,
        layout: LayoutSetting::parse(&args.layout)?,
    };
    let workers = WorkersSetting::resolve(args.common.workers.as_deref(), None)?;
    let values = simulate(&request, workers)?;
    write_output(args.common.out.as_deref(), &terminals_csv(&values))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Plan(args) => plan_command(args),
        Command::Simulate(args) => simulate_command(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("jumpeuler: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
