use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use tclsim_cli::output::{emit_csv, emit_plotdata};
use tclsim_cli::report::{check_log, first_failure, parse_csv, render_report, run_checks};
use tclsim_cli::runner::run_scenario;
use tclsim_cli::scenario::{RunMode, ScenarioConfig};

/// Thermostatic load population simulator: agent and field models under
/// aggregate power tracking control.
#[derive(Parser)]
#[command(name = "tclsim", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and emit the log, plot data and invariant report.
    Run {
        /// Scenario file (TOML). Unset sections fall back to the benchmark.
        #[arg(long)]
        config: PathBuf,
        /// Override the scenario's mode (agents|pde|coupled).
        #[arg(long)]
        mode: Option<RunMode>,
        /// Override the population seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: $TCLSIM_OUT or ./out).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run the invariant checks on an emitted run log.
    Check {
        /// Run log CSV produced by `run` or `demo`.
        #[arg(long)]
        log: PathBuf,
        /// Scenario the log was produced with (controller gain, envelopes).
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run the built-in benchmark scenario.
    Demo {
        /// Output directory (default: $TCLSIM_OUT or ./out).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os("TCLSIM_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn execute_run(cfg: ScenarioConfig, out: PathBuf) -> Result<bool> {
    let scenario = cfg.resolve()?;
    let result = run_scenario(&scenario)?;
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    emit_csv(&result.log, &out.join("run.csv"))?;
    emit_plotdata(&result.log, &out)?;
    let checks = run_checks(&result);
    let report = render_report(&checks);
    fs::write(out.join("report.txt"), &report).context("writing report.txt")?;
    print!("{report}");
    if let Some(last) = result.log.rows.last() {
        println!(
            "rows = {}  # final t={} h, power={:.4}, x_ref={:.4}",
            result.log.rows.len(),
            last.t,
            last.power,
            last.x_ref
        );
    }
    if let Some(failure) = first_failure(&checks) {
        eprintln!("invariant failed: {}", failure.name);
        return Ok(false);
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run {
            config,
            mode,
            seed,
            out,
        } => (|| -> Result<bool> {
            let text = fs::read_to_string(&config)
                .with_context(|| format!("reading {}", config.display()))?;
            let mut cfg = ScenarioConfig::from_toml(&text)?;
            if let Some(mode) = mode {
                cfg.run.mode = mode;
            }
            if let Some(seed) = seed {
                cfg.population.seed = seed;
            }
            execute_run(cfg, out_dir(out))
        })(),
        Command::Demo { out } => execute_run(ScenarioConfig::default(), out_dir(out)),
        Command::Check { log, config } => (|| -> Result<bool> {
            let text =
                fs::read_to_string(&log).with_context(|| format!("reading {}", log.display()))?;
            let parsed = parse_csv(&text)?;
            let cfg = match config {
                Some(path) => {
                    let text = fs::read_to_string(&path)
                        .with_context(|| format!("reading {}", path.display()))?;
                    ScenarioConfig::from_toml(&text)?
                }
                None => ScenarioConfig::default(),
            };
            let scenario = cfg.resolve()?;
            let checks = check_log(&parsed, &scenario)?;
            print!("{}", render_report(&checks));
            if let Some(failure) = first_failure(&checks) {
                eprintln!("invariant failed: {}", failure.name);
                return Ok(false);
            }
            Ok(true)
        })(),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
