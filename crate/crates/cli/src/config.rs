use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::ValueEnum;
use serde::Serialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    /// Block-count law of exact stationary samples.
    ErosionStationary,
    /// Coupling sampler against the generator oracle (n <= 8).
    OracleCheck,
    /// Pooled block sizes against the critical branching progeny law.
    BlockSizeDist,
    /// Mean block count over sqrt(n) against sqrt(2 d).
    BlockCountScaling,
    /// Occupancy of the immigration block-count chain.
    ImmigrationStationary,
    /// Death counts of the ancestral process.
    AncestralProgeny,
    /// Frequencies from the conditioned Wright-Fisher hierarchy.
    FrequenciesDiffusion,
    /// Block frequencies from the flow-of-bridges sampler.
    FrequenciesBridges,
    /// Coupling and flow-of-bridges samplers against each other.
    CrossValidateSamplers,
    /// Hierarchy frequencies against finite-n block frequencies.
    Theorem1Compare,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::ErosionStationary => "erosion-stationary",
            Experiment::OracleCheck => "oracle-check",
            Experiment::BlockSizeDist => "block-size-dist",
            Experiment::BlockCountScaling => "block-count-scaling",
            Experiment::ImmigrationStationary => "immigration-stationary",
            Experiment::AncestralProgeny => "ancestral-progeny",
            Experiment::FrequenciesDiffusion => "frequencies-diffusion",
            Experiment::FrequenciesBridges => "frequencies-bridges",
            Experiment::CrossValidateSamplers => "cross-validate-samplers",
            Experiment::Theorem1Compare => "theorem1-compare",
        }
    }

    /// Default `(n, replicates)`.
    fn defaults(self) -> (usize, usize) {
        match self {
            Experiment::ErosionStationary => (100, 1000),
            Experiment::OracleCheck => (4, 100_000),
            Experiment::BlockSizeDist => (20_000, 500),
            Experiment::BlockCountScaling => (10_000, 200),
            Experiment::ImmigrationStationary => (1, 1),
            Experiment::AncestralProgeny => (10_000, 100_000),
            Experiment::FrequenciesDiffusion => (1, 1000),
            Experiment::FrequenciesBridges => (100, 1000),
            Experiment::CrossValidateSamplers => (50, 10_000),
            Experiment::Theorem1Compare => (5000, 1000),
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Experiment::value_variants()
            .iter()
            .copied()
            .find(|e| e.name() == s)
            .ok_or_else(|| CliError::UnknownExperiment(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum, Default)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

/// Fully resolved experiment parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub n: usize,
    pub d: f64,
    pub replicates: usize,
    pub seed: u64,
    pub dt: f64,
    /// Diffusion horizon, or the path length for `immigration-stationary`.
    pub horizon: f64,
    #[serde(rename = "K")]
    pub k: usize,
    pub output_path: Option<PathBuf>,
    pub format: Format,
}

/// Parameters as given on the command line; missing values take
/// per-experiment defaults.
#[derive(Debug, Clone, Default)]
pub struct ConfigOverrides {
    pub n: Option<usize>,
    pub d: Option<f64>,
    pub replicates: Option<usize>,
    pub seed: Option<u64>,
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub k: Option<usize>,
    pub output_path: Option<PathBuf>,
    pub format: Format,
}

pub const DEFAULT_SEED: u64 = 1;
/// Path length of the block-count chain when no horizon is given.
pub const DEFAULT_CHAIN_LENGTH: f64 = 1e5;

impl ExperimentConfig {
    pub fn resolve(experiment: Experiment, o: ConfigOverrides) -> Result<Self, CliError> {
        let (n, replicates) = experiment.defaults();
        let d = o.d.unwrap_or(1.0);
        let horizon = o.horizon.unwrap_or(match experiment {
            Experiment::ImmigrationStationary => DEFAULT_CHAIN_LENGTH,
            _ => kingman_core::diffusions::default_horizon(d),
        });
        let config = ExperimentConfig {
            experiment,
            n: o.n.unwrap_or(n),
            d,
            replicates: o.replicates.unwrap_or(replicates),
            seed: o.seed.unwrap_or(DEFAULT_SEED),
            dt: o.dt.unwrap_or(kingman_core::diffusions::DEFAULT_DT),
            horizon,
            k: o.k.unwrap_or(kingman_core::diffusions::DEFAULT_K),
            output_path: o.output_path,
            format: o.format,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: &str| Err(CliError::InvalidConfig(msg.to_string()));
        if self.n == 0 {
            return bad("n must be at least 1");
        }
        if !(self.d > 0.0 && self.d.is_finite()) {
            return bad("d must be positive");
        }
        if self.replicates == 0 {
            return bad("replicates must be at least 1");
        }
        if !(self.dt > 0.0 && self.horizon >= self.dt && self.horizon.is_finite()) {
            return bad("need dt > 0 and horizon >= dt");
        }
        if self.k == 0 {
            return bad("K must be at least 1");
        }
        if self.experiment == Experiment::OracleCheck
            && self.n > kingman_core::erosion::ORACLE_MAX_N
        {
            return bad("oracle-check needs n <= 8");
        }
        Ok(())
    }
}
