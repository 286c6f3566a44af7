//! Command-line surface.
//!
//! Three subcommands wrap the library: `simulate` writes one path's trace
//! and driving CSVs, `verify` runs a named identity suite and writes a
//! JSON report, and `plot` renders a trace CSV to SVG. The process exit
//! code is a stable contract:
//!
//! * `0` — success,
//! * `1` — a verification or post-hoc check failed,
//! * `2` — usage or configuration error,
//! * `3` — the simulation stopped before its horizon (artifacts are still
//!   written; the manifest records the stopping reason).
//!
//! The driver itself is single-threaded; Monte-Carlo parallelism lives in
//! the ensemble engine and respects the `MSLE_THREADS` cap.

pub mod artifacts;
pub mod config;
pub mod verify;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use crate::dynamics::{simulate_path, trace_points, PathRecord, Stopping};
use crate::error::{Error, Result};
use crate::rng::path_seed;
use artifacts::{driving_csv, parse_trace_csv, plot_svg, tool_version, trace_csv, write_manifest, RunManifest};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_EARLY_STOP: i32 = 3;

/// Tolerance of the optional post-hoc mirror-symmetry check.
const SYMMETRY_TOL: f64 = 1e-6;

#[derive(Parser)]
#[command(
    name = "msle",
    version,
    about = "Simulate multiple chordal Loewner curves and verify their identities"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Simulate one path and write trace/driving CSVs plus a manifest.
    Simulate {
        /// Flat key=value configuration file.
        config: PathBuf,
        /// Output directory (created if missing).
        #[arg(long, default_value = "msle-out")]
        out: PathBuf,
        /// Check that a two-curve trace is mirror-symmetric about the
        /// imaginary axis (for symmetric deterministic configs).
        #[arg(long)]
        check_symmetry: bool,
    },
    /// Run a verification suite and write a JSON report plus a manifest.
    Verify {
        /// One of: nve, commutation, covariance, reparam, martingale, hcap.
        suite: String,
        /// Output directory (created if missing).
        #[arg(long, default_value = "msle-out")]
        out: PathBuf,
    },
    /// Render a trace CSV to a deterministic SVG.
    Plot {
        /// Trace CSV produced by `simulate`.
        trace: PathBuf,
        /// Output file (defaults to the input path with extension `.svg`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Entry point for the binary: parse real process arguments.
pub fn run() -> i32 {
    run_from(std::env::args_os())
}

/// Parse and execute; separated so tests can drive the CLI in-process.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(cli),
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_CONFIG,
            };
            let _ = e.print();
            code
        }
    }
}

pub fn execute(cli: Cli) -> i32 {
    match cli.command {
        Command::Simulate { config, out, check_symmetry } => cmd_simulate(&config, &out, check_symmetry),
        Command::Verify { suite, out } => cmd_verify(&suite, &out),
        Command::Plot { trace, out } => cmd_plot(&trace, out),
    }
}

fn fail(code: i32, err: &Error) -> i32 {
    eprintln!("error: {err}");
    code
}

fn cmd_simulate(config_path: &Path, out: &Path, check_symmetry: bool) -> i32 {
    let start = Instant::now();
    let run = match config::parse_file(config_path) {
        Ok(r) => r,
        Err(e) => return fail(EXIT_CONFIG, &e),
    };
    let sim = &run.ensemble.simulation;
    let path = match simulate_path(sim, path_seed(run.ensemble.seed, 0)) {
        Ok(p) => p,
        Err(e) => return fail(EXIT_CONFIG, &e),
    };
    // Trace points are read just above the fold height of one step's slit.
    let max_speed = sim.speeds.iter().fold(1.0_f64, |m, &s| m.max(s));
    let lift = 2.0 * (max_speed * sim.dt).sqrt();
    let trace = match trace_csv(&path, lift) {
        Ok(t) => t,
        Err(e) => return fail(EXIT_CONFIG, &e),
    };
    if let Err(e) = std::fs::create_dir_all(out) {
        return fail(EXIT_CONFIG, &e.into());
    }
    let driving = driving_csv(&path);
    for (name, body) in [("trace.csv", &trace), ("driving.csv", &driving)] {
        if let Err(e) = std::fs::write(out.join(name), body) {
            return fail(EXIT_CONFIG, &e.into());
        }
    }
    let symmetry_defect = if check_symmetry {
        match mirror_defect(&path, lift) {
            Ok(d) => Some(d),
            Err(e) => return fail(EXIT_CONFIG, &e),
        }
    } else {
        None
    };
    let manifest = RunManifest {
        command: "simulate".to_string(),
        version: tool_version(),
        seed: run.ensemble.seed,
        config: run.echo.clone(),
        artifacts: vec!["trace.csv".into(), "driving.csv".into()],
        stopping: stopping_note(&path),
        symmetry_defect,
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    if let Err(e) = write_manifest(out, &manifest) {
        return fail(EXIT_CONFIG, &e);
    }
    if path.collapsed() {
        eprintln!("simulation stopped before the horizon: {}", manifest.stopping.as_deref().unwrap_or("unknown"));
        return EXIT_EARLY_STOP;
    }
    if let Some(d) = symmetry_defect {
        if !(d <= SYMMETRY_TOL) {
            eprintln!("mirror-symmetry defect {d} exceeds {SYMMETRY_TOL}");
            return EXIT_CHECK_FAILED;
        }
    }
    EXIT_OK
}

fn stopping_note(path: &PathRecord) -> Option<String> {
    match path.stopping {
        Stopping::HorizonReached => None,
        Stopping::GapCollapsed { index, time } => {
            Some(format!("gap_collapsed(curves {index}-{}, t={time})", index + 1))
        }
        Stopping::DomainError { time } => Some(format!("domain_error(t={time})")),
    }
}

/// Largest deviation of a two-curve trace from mirror symmetry about the
/// imaginary axis.
fn mirror_defect(path: &PathRecord, lift: f64) -> Result<f64> {
    if path.n() != 2 {
        return Err(Error::config("the symmetry check needs exactly two curves"));
    }
    let left = trace_points(path, 0, lift)?;
    let right = trace_points(path, 1, lift)?;
    let mut defect = 0.0_f64;
    for (a, b) in left.iter().zip(right.iter()) {
        defect = defect.max((a.re + b.re).abs()).max((a.im - b.im).abs());
    }
    Ok(defect)
}

fn cmd_verify(suite: &str, out: &Path) -> i32 {
    let start = Instant::now();
    let report = match verify::run_suite(suite) {
        Ok(r) => r,
        Err(e @ (Error::Config(_) | Error::Io(_) | Error::InvalidKappa(_))) => {
            return fail(EXIT_CONFIG, &e)
        }
        // A suite that cannot produce its numbers has failed verification.
        Err(e) => return fail(EXIT_CHECK_FAILED, &e),
    };
    if let Err(e) = std::fs::create_dir_all(out) {
        return fail(EXIT_CONFIG, &e.into());
    }
    let body = match serde_json::to_string_pretty(&report) {
        Ok(b) => b,
        Err(e) => return fail(EXIT_CHECK_FAILED, &Error::config(format!("report: {e}"))),
    };
    if let Err(e) = std::fs::write(out.join("report.json"), body + "\n") {
        return fail(EXIT_CONFIG, &e.into());
    }
    let manifest = RunManifest {
        command: format!("verify {suite}"),
        version: tool_version(),
        seed: 0,
        config: [("suite".to_string(), suite.to_string())].into_iter().collect(),
        artifacts: vec!["report.json".into()],
        stopping: None,
        symmetry_defect: None,
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    if let Err(e) = write_manifest(out, &manifest) {
        return fail(EXIT_CONFIG, &e);
    }
    for c in &report.cases {
        println!(
            "{} {}: value {:.6e} target {:.6e} tol {:.3e}",
            if c.pass { "pass" } else { "FAIL" },
            c.name,
            c.value,
            c.target,
            c.tolerance
        );
    }
    if report.passed {
        EXIT_OK
    } else {
        EXIT_CHECK_FAILED
    }
}

fn cmd_plot(trace: &Path, out: Option<PathBuf>) -> i32 {
    let text = match std::fs::read_to_string(trace) {
        Ok(t) => t,
        Err(e) => return fail(EXIT_CONFIG, &e.into()),
    };
    let rows = match parse_trace_csv(&text) {
        Ok(r) => r,
        Err(e) => return fail(EXIT_CONFIG, &e),
    };
    let svg = plot_svg(&rows);
    let target = out.unwrap_or_else(|| trace.with_extension("svg"));
    if let Err(e) = std::fs::write(&target, svg) {
        return fail(EXIT_CONFIG, &e.into());
    }
    EXIT_OK
}
