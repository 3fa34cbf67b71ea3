use std::io::Write;

use serde::Serialize;
use serde_json::Value;

use kingman_core::stats::TestResult;

use crate::config::ExperimentConfig;

/// One embedded check. `p_value` is absent for distance thresholds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestRecord {
    pub name: String,
    pub statistic: f64,
    pub p_value: Option<f64>,
    pub pass: bool,
}

impl TestRecord {
    /// Passes when the p-value exceeds `level`.
    pub fn from_test(name: &str, t: &TestResult, level: f64) -> Self {
        TestRecord {
            name: name.to_string(),
            statistic: t.statistic,
            p_value: Some(t.p_value),
            pass: t.p_value > level,
        }
    }

    /// Passes when `statistic < bound`.
    pub fn below(name: &str, statistic: f64, bound: f64) -> Self {
        TestRecord {
            name: name.to_string(),
            statistic,
            p_value: None,
            pass: statistic < bound,
        }
    }
}

/// A plot-ready table with a fixed column schema per experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: Vec<&'static str>) -> Self {
        Table {
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push<I: IntoIterator<Item = String>>(&mut self, row: I) {
        self.rows.push(row.into_iter().collect());
    }

    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&self.columns)?;
        for r in &self.rows {
            out.write_record(r)?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub experiment: String,
    pub params: ExperimentConfig,
    pub seed: u64,
    pub results: Value,
    pub tests: Vec<TestRecord>,
    pub wall_time_s: f64,
    #[serde(skip)]
    pub table: Table,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.tests.iter().all(|t| t.pass)
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }
}
