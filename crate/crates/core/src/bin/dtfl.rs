//! Command-line entry point.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dtfl::config::{parse_config, print_defaults};
use dtfl::experiment::run_experiment;
use dtfl::selftest::formula_checks;
use dtfl::Error;

#[derive(Parser)]
#[command(name = "dtfl", version, about = "Digital-twin federated learning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override `scenario.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Override `experiment.output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print every config key with its default value.
    PrintDefaults,
    /// Check the core formulas against hand-computed values.
    Selftest,
}

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

fn is_config_error(e: &Error) -> bool {
    matches!(
        e,
        Error::BadConfig(_) | Error::Parse { .. } | Error::UnknownKey { .. } | Error::BadRange { .. }
    )
}

fn configure_threads() -> Result<(), String> {
    let Ok(value) = std::env::var("DTFL_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("DTFL_THREADS must be a positive integer, got {value:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn run(config: PathBuf, seed: Option<u64>, out: Option<PathBuf>) -> ExitCode {
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(EXIT_CONFIG);
    }
    let mut spec = match parse_config(&config) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            let code = if matches!(e, Error::Io { .. }) || is_config_error(&e) { EXIT_CONFIG } else { EXIT_RUNTIME };
            return ExitCode::from(code);
        }
    };
    if let Some(seed) = seed {
        spec.sim.scenario.seed = seed;
    }
    if let Some(out) = out {
        spec.experiment.output_dir = out;
    }
    if let Err(e) = spec.validate() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_CONFIG);
    }
    match run_experiment(&spec) {
        Ok(report) => {
            for f in report.run_files.iter().chain(&report.summary_files) {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if is_config_error(&e) { EXIT_CONFIG } else { EXIT_RUNTIME })
        }
    }
}

fn selftest() -> ExitCode {
    let checks = formula_checks();
    let failed = checks.iter().filter(|c| !c.passed()).count();
    for c in &checks {
        let status = if c.passed() { "ok" } else { "FAIL" };
        println!("{status:4} {}: expected {} got {}", c.name, c.expected, c.got);
    }
    println!("{} checks, {failed} failed", checks.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_RUNTIME)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_CONFIG) } else { ExitCode::SUCCESS };
        }
    };
    match cli.command {
        Command::Run { config, seed, out } => run(config, seed, out),
        Command::PrintDefaults => {
            print!("{}", print_defaults());
            ExitCode::SUCCESS
        }
        Command::Selftest => selftest(),
    }
}
