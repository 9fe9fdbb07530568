use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sgdg_app::output::{self, OutputError};
use sgdg_app::{run_convergence, run_scenario, Config, ConfigError, RunError, ScenarioId};

/// Runs self-gravitating gas dynamics scenarios with a discontinuous Galerkin solver.
#[derive(Parser)]
#[command(name = "sgdg", version)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Write results here instead of the configured `output_dir`.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Use the large reference resolutions instead of the desk-scale defaults.
    #[arg(long, global = true)]
    full_scale: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario on its `mesh` resolution.
    Run { config: PathBuf },
    /// Run a scenario on every resolution in `meshes` and tabulate convergence orders.
    Convergence { config: PathBuf },
    /// List the available scenario ids.
    ListScenarios,
}

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_IO: u8 = 1;

enum Failure {
    Config(ConfigError),
    Run(RunError),
    Output(OutputError),
    Threads(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) | Failure::Threads(_) => EXIT_CONFIG,
            Failure::Run(RunError::Setup(_)) => EXIT_CONFIG,
            Failure::Run(_) => EXIT_NUMERICAL,
            Failure::Output(_) => EXIT_IO,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(e) => write!(f, "configuration error: {e}"),
            Failure::Run(e) => write!(f, "{e}"),
            Failure::Output(e) => write!(f, "{e}"),
            Failure::Threads(e) => write!(f, "cannot start thread pool: {e}"),
        }
    }
}

fn load(path: &Path, cli: &Cli) -> Result<Config, Failure> {
    let mut config = Config::from_file(path).map_err(Failure::Config)?;
    if cli.full_scale {
        config = config.full_scale();
    }
    if let Some(dir) = &cli.output_dir {
        config.output_dir = dir.clone();
    }
    Ok(config)
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    // Output is informational; a closed pipe (e.g. `| head`) must not abort a run.
    let mut out = std::io::stdout().lock();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Failure::Threads(e.to_string()))?;
    }
    match &cli.command {
        Command::ListScenarios => {
            for id in ScenarioId::ALL {
                let _ = writeln!(out, "{:<22} {}D  {}", id.name(), id.dim(), id.description());
            }
        }
        Command::Run { config } => {
            let config = load(config, cli)?;
            let run = run_scenario(&config).map_err(Failure::Run)?;
            let files = output::write_run(&run, &config.output_dir).map_err(Failure::Output)?;
            let _ = writeln!(
                out,
                "{} on {} cells per axis: {} steps to t = {}, {:.1} s, {} invalid-state flags",
                config.scenario.name(),
                run.mesh,
                run.steps,
                run.final_time,
                run.wall_seconds,
                run.invalid_flags
            );
            if run.energy.records.len() > 1 {
                let _ = writeln!(out, "max relative total-energy drift {:.3e}", run.energy.max_relative_drift());
            }
            for f in files {
                let _ = writeln!(out, "wrote {}", f.display());
            }
        }
        Command::Convergence { config } => {
            let config = load(config, cli)?;
            let conv = run_convergence(&config).map_err(Failure::Run)?;
            let _ = write!(out, "{}", output::errors_csv(&conv.table));
            let finest = conv.runs.last().expect("meshes is non-empty");
            let files =
                output::write_convergence(&config, &conv.table, finest, &config.output_dir).map_err(Failure::Output)?;
            for f in files {
                let _ = writeln!(out, "wrote {}", f.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sgdg: {e}");
            ExitCode::from(e.code())
        }
    }
}
