//! `ionkerr` — batch front door for the trapped-ion cross-Kerr simulator.
//!
//! Exit codes: 0 success, 1 regime failure under --strict-regime,
//! 2 numerical failure, 64 usage/config error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ionkerr_cli::config::{parse_config, ConfigFile};
use ionkerr_cli::scenario::{run_gate, run_simulate, run_sweep, run_validate, RunError, RunOutcome};

const EXIT_REGIME: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;
const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(
    name = "ionkerr",
    about = "Trapped-ion/cavity cross-Kerr simulator: scenarios, gate reports, validity checks, sweeps",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Propagate one initial state and write a trajectory CSV.
    Simulate(RunArgs),
    /// Run the phase-gate protocol and write a gate report.
    Gate(RunArgs),
    /// Write regime diagnostics, full-vs-effective infidelity, and the
    /// transition-probability bound check.
    Validate(RunArgs),
    /// Run the cartesian product of the [sweep.*] axes and tabulate
    /// reductions.
    Sweep(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario config file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (must exist).
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Exit with status 1 when any regime verdict is a fail.
    #[arg(long)]
    strict_regime: bool,
    /// Worker threads for sweep execution (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

fn load(args: &RunArgs) -> Result<ConfigFile, String> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| format!("cannot read config '{}': {e}", args.config.display()))?;
    parse_config(&text).map_err(|e| e.to_string())
}

fn finish(args: &RunArgs, result: Result<RunOutcome, RunError>) -> ExitCode {
    match result {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            if args.strict_regime && outcome.worst == ionkerr::hamiltonian::Verdict::Fail {
                eprintln!("regime check failed (strict mode)");
                return ExitCode::from(EXIT_REGIME);
            }
            ExitCode::SUCCESS
        }
        Err(RunError::Config(e)) => {
            eprintln!("{e}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(RunError::Io(e)) => {
            eprintln!("cannot write output: {e}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(EXIT_NUMERICAL)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version are successful exits; anything else is usage
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let args = match &cli.command {
        Command::Simulate(a) | Command::Gate(a) | Command::Validate(a) | Command::Sweep(a) => a,
    };
    let config = match load(args) {
        Ok(c) => c,
        Err(msg) => {
            eprintln!("{msg}");
            return ExitCode::from(EXIT_USAGE);
        }
    };

    if let Some(n) = args.threads {
        if n == 0 {
            eprintln!("--threads must be at least 1");
            return ExitCode::from(EXIT_USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("cannot configure {n} worker threads: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }

    match (&cli.command, config) {
        (Command::Simulate(a), ConfigFile::Scenario(cfg)) => finish(a, run_simulate(&cfg, &a.out)),
        (Command::Gate(a), ConfigFile::Scenario(cfg)) => finish(a, run_gate(&cfg, &a.out)),
        (Command::Validate(a), ConfigFile::Scenario(cfg)) => finish(a, run_validate(&cfg, &a.out)),
        (Command::Sweep(a), ConfigFile::Sweep(cfg)) => finish(a, run_sweep(&cfg, &a.out)),
        (Command::Sweep(_), ConfigFile::Scenario(_)) => {
            eprintln!("sweep needs at least one [sweep.<param>] section in the config");
            ExitCode::from(EXIT_USAGE)
        }
        (_, ConfigFile::Sweep(_)) => {
            eprintln!("config contains [sweep.*] sections; use the sweep subcommand");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
