use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use koboshi_sim::engine::{run_headless, RunError};
use koboshi_sim::scenario::{load_scenario, parse_scenario, Scenario, ScenarioError};
use koboshi_sim::serve::{serve_live, ServeError, ServeOptions, DEFAULT_TELEMETRY_DIV};

/// Exit code for a scenario that does not parse or validate.
const EXIT_VALIDATION: u8 = 1;
/// Exit code for everything else that goes wrong at run time.
const EXIT_RUNTIME: u8 = 2;

#[derive(Parser)]
#[command(name = "koboshi-sim", version, about = "Simulate fleets of weight-shifting roly-poly units")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario headless and write its telemetry.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the scenario duration, in seconds.
        #[arg(long)]
        duration: Option<f64>,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the physics step, in milliseconds.
        #[arg(long)]
        dt: Option<f64>,
    },
    /// Run a scenario in real time and accept console connections.
    Serve {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, env = "KOBOSHI_SIM_PORT", default_value_t = koboshi_sim::serve::DEFAULT_PORT)]
        port: u16,
        /// Publish telemetry every K control ticks.
        #[arg(long, default_value_t = DEFAULT_TELEMETRY_DIV)]
        telemetry_div: u32,
        /// Also record all telemetry to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a scenario file and report every problem found.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
}

enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Io(_) => Failure::Runtime(e.to_string()),
            _ => Failure::Validation(e.to_string()),
        }
    }
}

fn load_with(path: &PathBuf, patch: impl FnOnce(&mut Scenario)) -> Result<Scenario, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Runtime(format!("cannot read {}: {e}", path.display())))?;
    let mut sc = parse_scenario(&text)?;
    patch(&mut sc);
    sc.validate()?;
    Ok(sc)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Validate { scenario } => {
            let sc = load_scenario(&scenario)?;
            println!(
                "ok: {} unit(s), {} ticks, {} scripted event(s)",
                sc.units.len(),
                sc.total_ticks(),
                sc.events.len()
            );
            Ok(())
        }
        Command::Run { scenario, out, duration, seed, dt } => {
            let sc = load_with(&scenario, |sc| {
                if let Some(d) = duration {
                    sc.globals.duration_s = d;
                }
                if let Some(s) = seed {
                    sc.globals.seed = s;
                }
                if let Some(ms) = dt {
                    sc.globals.dt_s = ms * 1e-3;
                }
            })?;
            let summary = run_headless(&sc, &out).map_err(|e| match e {
                RunError::Scenario(e) => Failure::from(e),
                RunError::Io(e) => Failure::Runtime(format!("{}: {e}", out.display())),
            })?;
            println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
            Ok(())
        }
        Command::Serve { scenario, port, telemetry_div, out } => {
            let sc = load_with(&scenario, |_| {})?;
            let opts = ServeOptions { port, telemetry_div, out, ..ServeOptions::default() };
            let handle = serve_live(&sc, opts).map_err(|e| match e {
                ServeError::Scenario(e) => Failure::from(e),
                other => Failure::Runtime(other.to_string()),
            })?;
            eprintln!("serving {} unit(s) on {}", sc.units.len(), handle.local_addr());
            handle.join().map(drop).map_err(|e| Failure::Runtime(e.to_string()))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(EXIT_VALIDATION)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
