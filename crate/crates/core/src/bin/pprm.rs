use std::fs::File;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use pprm::harness::{compare_eta_modes, Method};
use pprm::io::{
    cmd_calibrate, cmd_experiment, cmd_monitor, cmd_simulate, CalibrationMethod, CalibrationRecord,
    RunConfig, EXIT_ERROR,
};

/// Anytime-valid risk monitoring from labeled and synthetic-label losses.
#[derive(Debug, Parser)]
#[command(name = "pprm", version)]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the scenario seed and the experiment base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the scenario horizon.
    #[arg(long, global = true)]
    horizon: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Upper-bound the source risk; writes calibration JSON.
    Calibrate {
        /// Source file (stream format, `-` for stdin).
        source: PathBuf,
        /// hoeffding, betting or urm.
        #[arg(long, default_value = "betting")]
        method: CalibrationMethod,
        /// Output file; stdout when omitted.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Run a monitor over a stream; writes a CSV trace and prints a JSON
    /// summary. Exits 0 when censored, 3 on alarm, 1 on error.
    Monitor {
        /// Stream file (`-` for stdin).
        stream: PathBuf,
        /// Calibration JSON from `calibrate`.
        #[arg(long)]
        calibration: PathBuf,
        /// srm, pprm-fixed, pprm-adaptive or urm.
        #[arg(long, default_value = "pprm-adaptive")]
        method: Method,
        /// Trace CSV path; stdout when omitted.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Write `stream.jsonl` and `source.jsonl` for the configured scenario.
    Simulate {
        #[arg(long)]
        output_dir: PathBuf,
    },
    /// Replicated runs of the configured methods; prints the summary JSON.
    Experiment {
        /// Also write `summary.json` and per-replication traces here.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Fixed vs adaptive eta across `experiment.agreement_levels`.
    CompareEta,
    /// Print the effective configuration as TOML.
    ShowConfig,
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.set_seed(seed);
    }
    if let Some(h) = cli.horizon {
        config.set_horizon(h)?;
    }
    Ok(config)
}

fn write_json(value: &impl serde::Serialize, output: Option<&PathBuf>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match output {
        Some(path) => std::fs::write(path, text + "\n")
            .with_context(|| format!("writing {}", path.display()))?,
        None => println!("{text}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<i32> {
    let config = load_config(&cli)?;
    match cli.command {
        Command::Calibrate {
            source,
            method,
            output,
        } => {
            let rec = cmd_calibrate(&source, &config, method)
                .with_context(|| format!("calibrating from {}", source.display()))?;
            write_json(&rec, output.as_ref())?;
        }
        Command::Monitor {
            stream,
            calibration,
            method,
            output,
        } => {
            let calib = CalibrationRecord::load(&calibration)
                .with_context(|| format!("reading {}", calibration.display()))?;
            let outcome = match &output {
                Some(path) => cmd_monitor(&stream, &calib, &config, method, File::create(path)?),
                None => cmd_monitor(&stream, &calib, &config, method, std::io::stdout().lock()),
            }
            .with_context(|| format!("monitoring {}", stream.display()))?;
            let summary = serde_json::to_string(&outcome)?;
            if output.is_some() {
                println!("{summary}");
            } else {
                eprintln!("{summary}");
            }
            return Ok(outcome.exit_code());
        }
        Command::Simulate { output_dir } => {
            let out = cmd_simulate(&config, &output_dir)?;
            write_json(&out, None)?;
        }
        Command::Experiment { output_dir } => {
            let summary = cmd_experiment(&config, output_dir.as_deref())?;
            if output_dir.is_none() {
                write_json(&summary, None)?;
            } else {
                for m in &summary.methods {
                    println!(
                        "{}: pfa={} mean_alarm_time={:?} censored={}",
                        m.method, m.pfa, m.mean_alarm_time, m.censored
                    );
                }
            }
        }
        Command::CompareEta => {
            let rows = compare_eta_modes(&config.experiment_plan())?;
            write_json(&rows, None)?;
        }
        Command::ShowConfig => {
            print!("{}", config.to_toml_string()?);
        }
    }
    std::io::stdout().flush()?;
    Ok(0)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}
