//! `intercept`: run single trials, seeded batches and robustness sweeps
//! from a JSON scenario file.
//!
//! Exit codes: 0 when the run (or batch) met its goal, 2 when it ran but
//! the mission failed, 1 for any tool error including bad arguments.
//! Data goes to files under `--out`; stdout carries one summary line and
//! diagnostics go to stderr at the level set by `INTERCEPT_LOG_LEVEL`.

mod grid;
mod schema;

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use intercept_core::harness::io::{batch_json, result_json, write_sweep_csv, write_ticks_csv};
use intercept_core::harness::{corruption_sweep, dropout_sweep, run_batch, run_trial, RunOptions, Scenario};
use log::{debug, info, warn};

use grid::{Grid, SweepMode};

#[derive(Debug, Parser)]
#[command(name = "intercept", version, about = "Closed-loop target interception trials")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Run one trial and write result.json (and optionally ticks.csv).
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides `run.seed` from the scenario file.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Also write the per-tick log to ticks.csv.
        #[arg(long)]
        log_ticks: bool,
    },
    /// Run seeds base-seed..base-seed+trials and write batch.json.
    Batch {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        base_seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads; 1 runs sequentially. Defaults to all cores.
        #[arg(long)]
        parallel: Option<usize>,
        /// Exit 2 when the success rate falls below this fraction.
        #[arg(long, default_value_t = 0.0)]
        min_success: f64,
    },
    /// Sweep dropout or corruption settings with prediction on and off.
    Sweep {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_enum)]
        mode: SweepMode,
        /// e.g. `durations=0,3,5,7,9` or `rates=5,10,30;pcorrupt=0,0.25,0.5,0.75`.
        #[arg(long)]
        grid: String,
        /// Trials per cell and arm.
        #[arg(long)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        base_seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        parallel: Option<usize>,
    },
    /// Print the scenario schema with all defaults as one JSON line.
    Schema {
        /// Write an indented copy here instead of printing.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn init_logging() {
    let raw = std::env::var("INTERCEPT_LOG_LEVEL").ok();
    let level = match raw.as_deref().map(str::to_ascii_lowercase).as_deref() {
        None | Some("error") => Some(log::LevelFilter::Error),
        Some("info") => Some(log::LevelFilter::Info),
        Some("debug") => Some(log::LevelFilter::Debug),
        Some(_) => None,
    };
    env_logger::Builder::new()
        .filter_level(level.unwrap_or(log::LevelFilter::Error))
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();
    if level.is_none() {
        warn!("INTERCEPT_LOG_LEVEL={:?} not one of error, info, debug; using error", raw.unwrap_or_default());
    }
}

fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let s = Scenario::from_json(&text).with_context(|| format!("{}", path.display()))?;
    debug!("loaded {} ({:?}, {} s)", path.display(), s.platform, s.run.duration);
    Ok(s)
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn check_threads(parallel: Option<usize>) -> Result<()> {
    if parallel == Some(0) {
        bail!("--parallel must be at least 1");
    }
    Ok(())
}

fn cmd_run(scenario: &Path, seed: Option<u64>, out: &Path, log_ticks: bool) -> Result<ExitCode> {
    let mut s = load_scenario(scenario)?;
    if let Some(seed) = seed {
        s = s.with_seed(seed);
    }
    create_dir(out)?;
    let started = Instant::now();
    let outcome = run_trial(&s, &RunOptions { record_ticks: log_ticks, ..Default::default() })?;
    info!("trial seed {} finished in {:.2} s", s.run.seed, started.elapsed().as_secs_f64());
    let r = &outcome.result;
    write_file(out, "result.json", result_json(r)?.as_bytes())?;
    if log_ticks {
        let path = out.join("ticks.csv");
        let f = fs::File::create(&path).with_context(|| format!("writing {}", path.display()))?;
        write_ticks_csv(BufWriter::new(f), &outcome.ticks)?;
    }
    match &r.failure_reason {
        None => println!("seed {}: success, final error {:.3} m / {:.3} rad", r.seed, r.final_pos_m, r.final_ang_rad),
        Some(why) => println!("seed {}: failure ({why}), final error {:.3} m / {:.3} rad", r.seed, r.final_pos_m, r.final_ang_rad),
    }
    Ok(if r.success { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn cmd_batch(
    scenario: &Path,
    trials: usize,
    base_seed: u64,
    out: &Path,
    parallel: Option<usize>,
    min_success: f64,
) -> Result<ExitCode> {
    if trials == 0 {
        bail!("--trials must be at least 1");
    }
    if !(0.0..=1.0).contains(&min_success) {
        bail!("--min-success must lie in [0, 1]");
    }
    check_threads(parallel)?;
    let s = load_scenario(scenario)?;
    create_dir(out)?;
    let started = Instant::now();
    let report = run_batch(&s, trials, base_seed, parallel)?;
    info!("{trials} trials finished in {:.2} s", started.elapsed().as_secs_f64());

    let trial_dir = out.join("trials");
    create_dir(&trial_dir)?;
    for r in &report.trials {
        write_file(&trial_dir, &format!("result_seed{}.json", r.seed), result_json(r)?.as_bytes())?;
    }
    write_file(out, "batch.json", batch_json(&report)?.as_bytes())?;
    println!(
        "success {} ({:.0}%), station-keeping {:.3} ± {:.3} m",
        report.success,
        100.0 * report.success_rate,
        report.sk_pos_mean_m.mean,
        report.sk_pos_mean_m.std
    );
    Ok(if report.success_rate >= min_success { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn cmd_sweep(
    scenario: &Path,
    mode: SweepMode,
    spec: &str,
    trials: usize,
    base_seed: u64,
    out: &Path,
    parallel: Option<usize>,
) -> Result<ExitCode> {
    let grid = grid::parse(mode, spec).context("bad --grid")?;
    if trials == 0 {
        bail!("--trials must be at least 1");
    }
    check_threads(parallel)?;
    let s = load_scenario(scenario)?;
    create_dir(out)?;
    let started = Instant::now();
    let rows = match &grid {
        Grid::Dropout { durations } => dropout_sweep(&s, durations, trials, base_seed, parallel)?,
        Grid::Corruption { rates, p_corrupt } => corruption_sweep(&s, rates, p_corrupt, trials, base_seed, parallel)?,
    };
    info!("{} rows finished in {:.2} s", rows.len(), started.elapsed().as_secs_f64());
    let path = out.join("sweep.csv");
    let f = fs::File::create(&path).with_context(|| format!("writing {}", path.display()))?;
    write_sweep_csv(BufWriter::new(f), &rows)?;
    println!("{} rows of {} trials written to {}", rows.len(), trials, path.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_schema(out: Option<&Path>) -> Result<ExitCode> {
    let doc = schema::document();
    match out {
        Some(path) => {
            let mut text = serde_json::to_string_pretty(&doc)?;
            text.push('\n');
            fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
            println!("schema written to {}", path.display());
        }
        None => println!("{}", serde_json::to_string(&doc)?),
    }
    Ok(ExitCode::SUCCESS)
}

fn dispatch(cmd: Cmd) -> Result<ExitCode> {
    match cmd {
        Cmd::Run { scenario, seed, out, log_ticks } => cmd_run(&scenario, seed, &out, log_ticks),
        Cmd::Batch { scenario, trials, base_seed, out, parallel, min_success } => {
            cmd_batch(&scenario, trials, base_seed, &out, parallel, min_success)
        }
        Cmd::Sweep { scenario, mode, grid, trials, base_seed, out, parallel } => {
            cmd_sweep(&scenario, mode, &grid, trials, base_seed, &out, parallel)
        }
        Cmd::Schema { out } => cmd_schema(out.as_deref()),
    }
}

fn main() -> ExitCode {
    // clap exits 2 on usage errors, which would read as a mission failure.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    init_logging();
    match dispatch(cli.cmd) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
