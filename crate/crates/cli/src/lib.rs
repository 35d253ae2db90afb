//! Command-line front end for the quadpend simulator: scenario files in,
//! CSV or JSON time series and a flat metrics object out.
//!
//! Exit codes: 0 success, 1 I/O or usage failure, 2 validation error,
//! 3 simulation abort (the partial log is still written).

pub mod file;
pub mod output;

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use std::collections::BTreeSet;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use quadpend_core::harness::{compute_metrics, run_scenario, SimError};

use file::{load_scenarios, Format, LoadedScenario, Override, SCENARIO_EXTENSION};
use output::{render_metrics, write_outputs, RunStatus};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_ABORTED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "quadpend", version, about = "Quadrotor and inverted pendulum scenario runner")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one or more scenario files.
    Run {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Time-series format; defaults to the file's choice, else csv.
        #[arg(long, value_enum)]
        format: Option<Format>,
        /// Noise seed for every scenario.
        #[arg(long)]
        seed: Option<u64>,
        /// Override a scenario key, e.g. `--set trajectory.radius=2`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Scenarios run concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// List the scenario files in a directory.
    ListScenarios {
        #[arg(long, default_value = "scenarios")]
        dir: PathBuf,
    },
    /// Check scenario files without running them.
    Validate {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

/// Parses arguments and runs the command, writing human-readable output to
/// `out` and diagnostics to `err`. Returns the exit status.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = if e.use_stderr() { write!(err, "{e}") } else { write!(out, "{e}") };
            return code;
        }
    };
    match cli.command {
        Command::Run { files, out: dir, format, seed, overrides, jobs } => {
            run_command(&files, &dir, format, seed, &overrides, jobs, out, err)
        }
        Command::ListScenarios { dir } => list_command(&dir, out, err),
        Command::Validate { files, overrides } => validate_command(&files, &overrides, out, err),
    }
}

fn parse_overrides(specs: &[String], err: &mut dyn Write) -> Option<Vec<Override>> {
    let mut parsed = Vec::with_capacity(specs.len());
    for s in specs {
        match Override::parse(s) {
            Ok(o) => parsed.push(o),
            Err(m) => {
                let _ = writeln!(err, "error: bad override `{s}`: {m}");
                return None;
            }
        }
    }
    Some(parsed)
}

fn load_all(files: &[PathBuf], overrides: &[Override], err: &mut dyn Write) -> Option<Vec<LoadedScenario>> {
    let mut all = Vec::new();
    let mut ok = true;
    for f in files {
        match load_scenarios(f, overrides) {
            Ok(s) => all.extend(s),
            Err(e) => {
                let _ = writeln!(err, "error: {e}");
                ok = false;
            }
        }
    }
    let mut names = BTreeSet::new();
    for s in &all {
        if !names.insert(s.scenario.name.clone()) {
            let _ = writeln!(err, "error: scenario `{}` appears more than once", s.scenario.name);
            ok = false;
        }
    }
    ok.then_some(all)
}

enum Outcome {
    Completed(String),
    Aborted(String),
    Invalid(String),
    Failed(String),
}

fn run_one(loaded: &LoadedScenario, dir: &Path, format: Format) -> Outcome {
    let sc = &loaded.scenario;
    let (log, status) = match run_scenario(sc) {
        Ok(log) => (log, RunStatus::Completed),
        Err(SimError::Aborted(abort)) => {
            let reason = abort.cause.to_string();
            let status = RunStatus::Aborted { time: abort.time, reason };
            (abort.log, status)
        }
        Err(e @ SimError::Invalid { .. }) => return Outcome::Invalid(e.to_string()),
    };
    let metrics = match compute_metrics(&log, &sc.metrics) {
        Ok(m) => m,
        Err(e) => return Outcome::Failed(format!("scenario `{}`: metrics: {e}", sc.name)),
    };
    let text = render_metrics(&log, &metrics, &status);
    let written = match write_outputs(dir, &log, &text, format) {
        Ok(w) => w,
        Err(e) => return Outcome::Failed(format!("scenario `{}`: writing {}: {e}", sc.name, dir.display())),
    };
    match status {
        RunStatus::Completed => Outcome::Completed(format!(
            "ok {} ({} samples, tail rms {:.3e} m) -> {}",
            sc.name,
            metrics.samples,
            metrics.rms_position_norm,
            written.series.display()
        )),
        RunStatus::Aborted { time, reason } => Outcome::Aborted(format!(
            "scenario `{}` aborted at t = {time}: {reason} (partial log in {})",
            sc.name,
            written.series.display()
        )),
    }
}

#[allow(clippy::too_many_arguments)]
fn run_command(
    files: &[PathBuf],
    dir: &Path,
    format: Option<Format>,
    seed: Option<u64>,
    overrides: &[String],
    jobs: usize,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let Some(overrides) = parse_overrides(overrides, err) else {
        return EXIT_INVALID;
    };
    let Some(mut scenarios) = load_all(files, &overrides, err) else {
        return EXIT_INVALID;
    };
    if let Some(seed) = seed {
        for s in &mut scenarios {
            s.scenario.noise.seed = seed;
        }
    }
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build() {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(err, "error: thread pool: {e}");
            return EXIT_FAILURE;
        }
    };
    let outcomes: Vec<Outcome> = pool.install(|| {
        scenarios
            .par_iter()
            .map(|s| run_one(s, dir, format.or(s.format).unwrap_or_default()))
            .collect()
    });

    let (mut invalid, mut failed, mut aborted) = (false, false, false);
    for o in outcomes {
        match o {
            Outcome::Completed(msg) => {
                let _ = writeln!(out, "{msg}");
            }
            Outcome::Aborted(msg) => {
                aborted = true;
                let _ = writeln!(err, "error: {msg}");
            }
            Outcome::Invalid(msg) => {
                invalid = true;
                let _ = writeln!(err, "error: {msg}");
            }
            Outcome::Failed(msg) => {
                failed = true;
                let _ = writeln!(err, "error: {msg}");
            }
        }
    }
    if invalid {
        EXIT_INVALID
    } else if failed {
        EXIT_FAILURE
    } else if aborted {
        EXIT_ABORTED
    } else {
        EXIT_OK
    }
}

fn scenario_files(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == SCENARIO_EXTENSION))
        .collect();
    files.sort();
    Ok(files)
}

fn list_command(dir: &Path, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let files = match scenario_files(dir) {
        Ok(f) => f,
        Err(e) => {
            let _ = writeln!(err, "error: {}: {e}", dir.display());
            return EXIT_FAILURE;
        }
    };
    let mut code = EXIT_OK;
    for f in files {
        match load_scenarios(&f, &[]) {
            Ok(list) => {
                for s in list {
                    let sc = &s.scenario;
                    let _ = writeln!(
                        out,
                        "{:<28} {:<14} {:>6} s  {}",
                        sc.name,
                        sc.controller.name(),
                        sc.duration,
                        sc.description
                    );
                }
            }
            Err(e) => {
                let _ = writeln!(err, "error: {e}");
                code = EXIT_INVALID;
            }
        }
    }
    code
}

fn validate_command(files: &[PathBuf], overrides: &[String], out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let Some(overrides) = parse_overrides(overrides, err) else {
        return EXIT_INVALID;
    };
    match load_all(files, &overrides, err) {
        Some(list) => {
            for s in list {
                let _ = writeln!(out, "ok {}", s.scenario.name);
            }
            EXIT_OK
        }
        None => EXIT_INVALID,
    }
}
