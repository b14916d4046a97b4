//! `fedel` command line: run experiments from config files, fuzz the
//! selection solver against its exhaustive oracle, and sweep ablation axes.
//!
//! Exit codes: 0 success, 1 property/assertion or run failure, 2 usage or
//! configuration error.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use fedel_core::federation::{
    build_dataset, write_metrics_csv, RoundRecord, RunConfig, TThSpec, Trainer, Variant,
};

mod fuzz;

#[derive(Parser)]
#[command(name = "fedel", version, about = "Federated elastic learning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a JSON config file.
    Run {
        config: PathBuf,
        /// Also run a fedavg-full reference with the same seed and report
        /// the time-to-accuracy speedup against it.
        #[arg(long)]
        baseline: bool,
        /// Output directory for the run log, metrics, and profile.
        #[arg(long, default_value = "fedel-out")]
        out: PathBuf,
        /// Override the config's training variant.
        #[arg(long)]
        variant: Option<String>,
    },
    /// Cross-check the selection solver against the exhaustive oracle on
    /// random instances.
    FuzzSelector {
        #[arg(long, default_value_t = 1000)]
        trials: u64,
        #[arg(long, default_value_t = 12)]
        max_tensors: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Where to dump replayable counterexamples.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run the sweep listed under the config's `sweep` section for one axis.
    Ablate {
        config: PathBuf,
        #[arg(long, value_enum)]
        axis: Axis,
        #[arg(long, default_value = "fedel-out")]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Axis {
    Beta,
    #[value(name = "t_th")]
    TTh,
    Variant,
}

/// Command failures carrying their exit code.
enum CliError {
    /// Bad usage or configuration: exit 2.
    Usage(String),
    /// A property or run failed: exit 1.
    Failure(String),
}

impl CliError {
    fn usage(msg: impl Into<String>) -> CliError {
        CliError::Usage(msg.into())
    }

    fn failure(msg: impl Into<String>) -> CliError {
        CliError::Failure(msg.into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            baseline,
            out,
            variant,
        } => cmd_run(&config, baseline, &out, variant.as_deref()),
        Command::FuzzSelector {
            trials,
            max_tensors,
            seed,
            out,
        } => fuzz::cmd_fuzz_selector(trials, max_tensors, seed, &out),
        Command::Ablate { config, axis, out } => cmd_ablate(&config, axis, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Failure(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

/// Loads a config file, applying the FEDEL_SEED override and an optional
/// variant override.
fn load_config(path: &Path, variant: Option<&str>) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
    let mut cfg = RunConfig::from_json(&text)
        .map_err(|e| CliError::usage(format!("invalid config {}: {e}", path.display())))?;
    if let Some(name) = variant {
        cfg.variant =
            Variant::parse(name).map_err(|e| CliError::usage(format!("--variant: {e}")))?;
    }
    if let Ok(seed_text) = std::env::var("FEDEL_SEED") {
        let seed = seed_text
            .trim()
            .parse::<u64>()
            .map_err(|_| CliError::usage(format!("FEDEL_SEED is not an integer: {seed_text}")))?;
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn ensure_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path)
        .map_err(|e| CliError::failure(format!("cannot create {}: {e}", path.display())))
}

/// Runs one experiment, streaming the run log so partial output survives a
/// mid-run failure.
fn run_to_dir(cfg: &RunConfig, out: &Path) -> Result<Vec<RoundRecord>, CliError> {
    ensure_dir(out)?;
    let dataset = build_dataset(cfg)
        .map_err(|e| CliError::usage(format!("cannot build dataset: {e}")))?;
    let mut trainer =
        Trainer::new(cfg, &dataset).map_err(|e| CliError::usage(format!("cannot start run: {e}")))?;

    std::fs::write(
        out.join("config.json"),
        cfg.to_json().map_err(|e| CliError::failure(e.to_string()))? + "\n",
    )
    .map_err(|e| CliError::failure(e.to_string()))?;
    std::fs::write(
        out.join("profile.json"),
        trainer
            .base_timing()
            .to_json()
            .map_err(|e| CliError::failure(e.to_string()))?
            + "\n",
    )
    .map_err(|e| CliError::failure(e.to_string()))?;

    let log_path = out.join("run_log.jsonl");
    let mut log = std::io::BufWriter::new(
        std::fs::File::create(&log_path).map_err(|e| CliError::failure(e.to_string()))?,
    );
    let mut records = Vec::with_capacity(cfg.rounds);
    let mut run_error = None;
    for _ in 0..cfg.rounds {
        match trainer.step() {
            Ok(record) => {
                let line =
                    serde_json::to_string(&record).map_err(|e| CliError::failure(e.to_string()))?;
                log.write_all(line.as_bytes())
                    .and_then(|_| log.write_all(b"\n"))
                    .map_err(|e| CliError::failure(e.to_string()))?;
                records.push(record);
            }
            Err(e) => {
                run_error = Some(e);
                break;
            }
        }
    }
    log.flush().map_err(|e| CliError::failure(e.to_string()))?;
    write_metrics_csv(&records, out.join("metrics.csv"))
        .map_err(|e| CliError::failure(e.to_string()))?;
    match run_error {
        Some(e) => Err(CliError::failure(format!(
            "run failed after {} rounds (partial logs in {}): {e}",
            records.len(),
            out.display()
        ))),
        None => Ok(records),
    }
}

/// First simulated wall-clock time at which the accuracy reaches `target`.
fn time_to_accuracy(records: &[RoundRecord], target: f64) -> Option<f64> {
    records
        .iter()
        .find(|r| r.accuracy >= target)
        .map(|r| r.wall_clock_seconds)
}

fn cmd_run(
    config: &Path,
    baseline: bool,
    out: &Path,
    variant: Option<&str>,
) -> Result<(), CliError> {
    let cfg = load_config(config, variant)?;
    let records = run_to_dir(&cfg, out)?;

    let final_accuracy = records.last().map(|r| r.accuracy).unwrap_or(0.0);
    let wall = records.last().map(|r| r.wall_clock_seconds).unwrap_or(0.0);
    println!("variant: {}", cfg.variant.name());
    println!("rounds: {}", records.len());
    println!("final_accuracy: {final_accuracy:.4}");
    println!("wall_clock_s: {wall:.6}");

    if baseline {
        let mut base_cfg = cfg.clone();
        base_cfg.variant = Variant::FedAvgFull;
        let base_records = run_to_dir(&base_cfg, &out.join("baseline"))?;
        let base_final = base_records.last().map(|r| r.accuracy).unwrap_or(0.0);
        let target = 0.9 * base_final;
        let base_time = time_to_accuracy(&base_records, target);
        let this_time = time_to_accuracy(&records, target);
        match (base_time, this_time) {
            (Some(b), Some(t)) if t > 0.0 => {
                println!("baseline_final_accuracy: {base_final:.4}");
                println!("speedup_vs_fedavg_full: {:.2}x", b / t);
            }
            _ => println!("speedup_vs_fedavg_full: n/a (target accuracy not reached)"),
        }
    }
    Ok(())
}

fn cmd_ablate(config: &Path, axis: Axis, out: &Path) -> Result<(), CliError> {
    let cfg = load_config(config, None)?;
    let sweep = cfg
        .sweep
        .clone()
        .ok_or_else(|| CliError::usage("config has no sweep section"))?;

    let runs: Vec<(String, RunConfig)> = match axis {
        Axis::Beta => {
            let values = sweep
                .beta
                .ok_or_else(|| CliError::usage("config sweep lists no beta values"))?;
            values
                .into_iter()
                .map(|beta| {
                    let mut c = cfg.clone();
                    c.beta = beta;
                    (format_value(beta), c)
                })
                .collect()
        }
        Axis::TTh => {
            let values = sweep
                .t_th
                .ok_or_else(|| CliError::usage("config sweep lists no t_th values"))?;
            values
                .into_iter()
                .map(|t| {
                    let mut c = cfg.clone();
                    c.t_th = TThSpec::Seconds(t);
                    (format_value(t), c)
                })
                .collect()
        }
        Axis::Variant => {
            let values = sweep
                .variant
                .ok_or_else(|| CliError::usage("config sweep lists no variant values"))?;
            values
                .into_iter()
                .map(|v| {
                    let mut c = cfg.clone();
                    c.variant = v;
                    (v.name().to_string(), c)
                })
                .collect()
        }
    };
    if runs.is_empty() {
        return Err(CliError::usage("sweep axis has no values"));
    }

    ensure_dir(out)?;
    let axis_name = match axis {
        Axis::Beta => "beta",
        Axis::TTh => "t_th",
        Axis::Variant => "variant",
    };
    let mut combined = csv::Writer::from_path(out.join(format!("ablate_{axis_name}.csv")))
        .map_err(|e| CliError::failure(e.to_string()))?;
    combined
        .write_record([
            axis_name,
            "round",
            "wall_clock_s",
            "accuracy",
            "o1",
            "mean_gamma",
            "o1_param_weighted",
        ])
        .map_err(|e| CliError::failure(e.to_string()))?;

    for (label, run_cfg) in &runs {
        let dir = out.join(format!("{axis_name}-{label}"));
        let records = run_to_dir(run_cfg, &dir)?;
        for r in &records {
            combined
                .write_record([
                    label.clone(),
                    r.round.to_string(),
                    format_value(r.wall_clock_seconds),
                    format_value(r.accuracy),
                    format_value(r.o1),
                    r.mean_gamma.map(format_value).unwrap_or_default(),
                    format_value(r.o1_param_weighted),
                ])
                .map_err(|e| CliError::failure(e.to_string()))?;
        }
        let final_acc = records.last().map(|r| r.accuracy).unwrap_or(0.0);
        println!("{axis_name}={label}: final_accuracy {final_acc:.4}");
    }
    combined.flush().map_err(|e| CliError::failure(e.to_string()))?;
    Ok(())
}

/// Shortest round-trip float formatting, shared with the metrics writer.
fn format_value(v: f64) -> String {
    let mut s = serde_json::to_string(&v).expect("finite float");
    if s.ends_with(".0") {
        s.truncate(s.len() - 2);
    }
    s
}
