//! Batch driver for `widthlab` experiments.
//!
//! A run resolves its configuration (JSON file plus flag overrides),
//! validates it, computes everything in memory and only then writes
//! `results.csv`, `report.json` and, when requested, `plot.svg` into the
//! output directory.
//!
//! Exit codes: 0 success, 2 configuration error (nothing written),
//! 3 numerical nonconvergence (report written with flags), 4 I/O error.

pub mod args;
pub mod config;
pub mod experiments;
pub mod plot;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Parser;
use serde_json::json;

pub use args::Cli;
pub use config::ExperimentConfig;
pub use experiments::Outcome;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("nonconvergence: {0}")]
    NonConvergence(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::NonConvergence(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl From<widthlab::Error> for CliError {
    fn from(e: widthlab::Error) -> Self {
        match e {
            widthlab::Error::NonConvergence(_) => CliError::NonConvergence(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Parses arguments and resolves the final configuration.
pub fn configure<I, T>(args: I) -> Result<ExperimentConfig, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| match e.kind() {
        clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
            // Help and version are successful exits.
            let _ = e.print();
            std::process::exit(0)
        }
        _ => CliError::Config(e.to_string()),
    })?;
    let base = cli.config.as_deref().map(load_config).transpose()?;
    let cfg = args::resolve(&cli, base)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Computes the experiment on a pool with the configured thread count.
pub fn execute(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cfg.threads {
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    pool.install(|| experiments::run(cfg))
}

pub fn render_csv(outcome: &Outcome) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(&outcome.header).map_err(csv_err)?;
    for row in &outcome.rows {
        debug_assert_eq!(row.len(), outcome.header.len());
        w.write_record(row).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.to_string()))
}

pub fn render_report(cfg: &ExperimentConfig, outcome: &Outcome, error: Option<&str>) -> Vec<u8> {
    let status = if error.is_some() || outcome.nonconverged {
        "nonconvergence"
    } else {
        "ok"
    };
    let report = json!({
        "tool": "widthlab",
        "version": env!("CARGO_PKG_VERSION"),
        "command": cfg.experiment.name(),
        "seed": cfg.seed,
        "status": status,
        "error": error,
        "flags": outcome.flags,
        "summary": outcome.summary,
        "config": cfg,
    });
    let mut s = serde_json::to_string_pretty(&report).expect("report is valid JSON");
    s.push('\n');
    s.into_bytes()
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| io_err(&path, e))
}

pub fn out_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out.clone().unwrap_or_else(|| PathBuf::from(config::DEFAULT_OUT))
}

/// Writes the three output files; plot failures only warn.
pub fn write_outputs(cfg: &ExperimentConfig, outcome: &Outcome, error: Option<&str>) -> Result<(), CliError> {
    let dir = out_dir(cfg);
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    write_file(&dir, "results.csv", &render_csv(outcome)?)?;
    write_file(&dir, "report.json", &render_report(cfg, outcome, error))?;
    if cfg.plot {
        match outcome.plot.as_ref().and_then(plot::render) {
            Some(svg) => {
                if let Err(e) = write_file(&dir, "plot.svg", svg.as_bytes()) {
                    log::warn!("plot not written: {e}");
                }
            }
            None if outcome.plot.is_some() => log::warn!("plot skipped: no positive data"),
            None => {}
        }
    }
    Ok(())
}

/// Full run; returns the process exit code.
pub fn run_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cfg = match configure(args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("widthlab: {e}");
            return e.exit_code();
        }
    };
    let (outcome, error) = match execute(&cfg) {
        Ok(o) => (o, None),
        Err(e @ CliError::NonConvergence(_)) => {
            let mut o = Outcome {
                header: vec!["quantity", "value"],
                rows: Vec::new(),
                summary: serde_json::Value::Null,
                flags: Vec::new(),
                nonconverged: true,
                plot: None,
            };
            o.flags.push(e.to_string());
            (o, Some(e))
        }
        Err(e) => {
            eprintln!("widthlab: {e}");
            return e.exit_code();
        }
    };
    let msg = error.as_ref().map(|e| e.to_string());
    if let Err(e) = write_outputs(&cfg, &outcome, msg.as_deref()) {
        eprintln!("widthlab: {e}");
        return e.exit_code();
    }
    if error.is_some() || outcome.nonconverged {
        for f in &outcome.flags {
            eprintln!("widthlab: {f}");
        }
        return 3;
    }
    0
}
