//! Experiment driver behind the `kingman` binary.

pub mod config;
pub mod experiments;
pub mod report;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use thiserror::Error;

pub use config::{ConfigOverrides, Experiment, ExperimentConfig, Format};
pub use report::{Report, Table, TestRecord};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("unknown experiment {0:?}")]
    UnknownExperiment(String),
    #[error("i/o failure: {0}")]
    Io(#[from] io::Error),
    #[error("csv failure: {0}")]
    Csv(#[from] csv::Error),
    #[error("json failure: {0}")]
    Json(#[from] serde_json::Error),
}

/// Runs the configured experiment.
pub fn run(config: &ExperimentConfig) -> anyhow::Result<Report> {
    config.validate()?;
    let start = Instant::now();
    let out = experiments::dispatch(config)?;
    for t in out.tests.iter().filter(|t| !t.pass) {
        log::warn!("check {} failed: statistic {}", t.name, t.statistic);
    }
    Ok(Report {
        experiment: config.experiment.name().to_string(),
        params: config.clone(),
        seed: config.seed,
        results: out.results,
        tests: out.tests,
        wall_time_s: start.elapsed().as_secs_f64(),
        table: out.table,
    })
}

/// Path of the JSON report written next to a CSV table.
pub fn report_path_for(csv_path: &Path) -> std::path::PathBuf {
    csv_path.with_extension("report.json")
}

/// Writes the report as configured.
///
/// JSON goes to `--out` or stdout. With `--format csv` the table goes to
/// `--out` (report alongside, see [`report_path_for`]) or to stdout with the
/// report on stderr.
pub fn write_outputs(report: &Report) -> Result<(), CliError> {
    let json = report.to_json()?;
    let out = report.params.output_path.as_deref();
    match (report.params.format, out) {
        (Format::Json, Some(p)) => std::fs::write(p, json + "\n")?,
        (Format::Json, None) => writeln!(io::stdout().lock(), "{json}")?,
        (Format::Csv, Some(p)) => {
            report.table.write_csv(BufWriter::new(File::create(p)?))?;
            std::fs::write(report_path_for(p), json + "\n")?;
        }
        (Format::Csv, None) => {
            report.table.write_csv(io::stdout().lock())?;
            writeln!(io::stderr().lock(), "{json}")?;
        }
    }
    Ok(())
}
