//! Command-line workbench for the estimator and closed-loop trade-off
//! experiments. `main` is a thin wrapper over [`run`].

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, Parser, Subcommand};

use config::{Experiment, ExperimentConfig};
use error::{CliError, CliResult};

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "PARETO_FILTER_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "pareto-filter",
    version,
    about = "Accuracy/robustness trade-off experiments for linear estimators"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Pareto curve of sensitivity against nominal performance.
    Tradeoff(RunArgs),
    /// A single gain: Kalman, optimal at `--lambda` or robust at `--gamma`.
    Design(RunArgs),
    /// Monte Carlo runs of a designed filter, or the tracking RMSE
    /// comparison when the config lists noise `scales`.
    Simulate(RunArgs),
    /// Empirical sensitivity of estimators designed along a δ grid.
    Sweep(RunArgs),
    /// Closed-loop cost/sensitivity trade-off.
    ClosedloopTradeoff(RunArgs),
    /// Run whichever experiment the config file names.
    Run(RunArgs),
    /// Print a built-in config as JSON.
    Preset(PresetArgs),
}

#[derive(Debug, Clone, Default, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["config", "preset"])))]
pub struct RunArgs {
    /// JSON experiment config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Built-in config: example1 or vehicle.
    #[arg(long)]
    pub preset: Option<String>,
    /// Output CSV; stdout when neither this nor the config names one.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub delta_min: Option<f64>,
    #[arg(long)]
    pub delta_max: Option<f64>,
    #[arg(long)]
    pub delta_steps: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// all, optimize-both, fix-L-lqr or fix-K-kalman.
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub trials: Option<usize>,
}

#[derive(Debug, Args)]
struct PresetArgs {
    name: String,
    /// Experiment recorded in the emitted config.
    #[arg(long, value_enum)]
    experiment: Option<Experiment>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn apply(&self, config: &mut ExperimentConfig) {
        let p = &mut config.parameters;
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field.clone() {
                    p.$field = Some(v);
                }
            )*};
        }
        set!(
            seed,
            delta_min,
            delta_max,
            delta_steps,
            lambda,
            gamma,
            mode,
            horizon,
            trials
        );
        if let Some(out) = &self.out {
            config.output_path = Some(out.to_string_lossy().into_owned());
        }
    }
}

/// Build the effective config: source, subcommand check, then overrides.
/// Returns the config and the directory relative paths resolve against.
pub fn resolve(
    args: &RunArgs,
    experiment: Option<Experiment>,
) -> CliResult<(ExperimentConfig, PathBuf)> {
    let (mut config, base_dir) = match (&args.config, &args.preset) {
        (Some(path), None) => {
            let loaded = config::load_config(path)?;
            if let Some(e) = experiment {
                if loaded.config.experiment != e {
                    return Err(CliError::validation(format!(
                        "experiment: config selects {}, command is {}",
                        loaded.config.experiment.as_str(),
                        e.as_str()
                    )));
                }
            }
            (loaded.config, loaded.base_dir)
        }
        (None, Some(name)) => {
            let e = experiment.ok_or_else(|| {
                CliError::validation("run needs --config; use a subcommand with --preset")
            })?;
            (config::preset(name, e)?, PathBuf::from("."))
        }
        _ => return Err(CliError::parse("give exactly one of --config and --preset")),
    };
    args.apply(&mut config);
    Ok((config, base_dir))
}

fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        CliError::validation(format!(
            "{THREADS_ENV}: expected a positive integer, got {raw:?}"
        ))
    })?;
    // a pool may already exist when called twice in one process
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global();
    Ok(())
}

fn execute(args: &RunArgs, experiment: Option<Experiment>) -> CliResult<()> {
    configure_threads()?;
    let (config, base_dir) = resolve(args, experiment)?;
    let table = experiments::run_experiment(&config, &base_dir)?;
    let seed = config.parameters.seed.unwrap_or(experiments::DEFAULT_SEED);
    let provenance = output::provenance(&config, seed);
    let out = config
        .output_path
        .as_deref()
        .map(|p| resolve_output(p, args, &base_dir));
    output::write_table(out.as_deref(), &provenance, &table)
}

/// `--out` is relative to the working directory; a config `output_path`
/// is relative to the config file.
fn resolve_output(path: &str, args: &RunArgs, base_dir: &Path) -> PathBuf {
    if args.out.is_some() {
        PathBuf::from(path)
    } else {
        base_dir.join(path)
    }
}

fn print_preset(args: &PresetArgs) -> CliResult<()> {
    let experiment = args.experiment.unwrap_or(if args.name == "vehicle" {
        Experiment::ClosedloopTradeoff
    } else {
        Experiment::Tradeoff
    });
    let config = config::preset(&args.name, experiment)?;
    let text = config::to_json(&config) + "\n";
    match &args.out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Parse `args` (including the program name), run, and return the exit
/// code. Failures print a JSON error record to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let err = CliError::parse(e.to_string().trim_end());
            eprintln!("{}", err.record());
            return err.exit_code();
        }
    };
    let result = match &cli.command {
        Command::Tradeoff(a) => execute(a, Some(Experiment::Tradeoff)),
        Command::Design(a) => execute(a, Some(Experiment::Design)),
        Command::Simulate(a) => execute(a, Some(Experiment::Simulate)),
        Command::Sweep(a) => execute(a, Some(Experiment::Sweep)),
        Command::ClosedloopTradeoff(a) => execute(a, Some(Experiment::ClosedloopTradeoff)),
        Command::Run(a) => execute(a, None),
        Command::Preset(a) => print_preset(a),
    };
    match result {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("{}", err.record());
            err.exit_code()
        }
    }
}
