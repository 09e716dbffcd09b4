use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::harness::config::ExperimentConfig;

/// What a command produced. Series and artifacts are keyed by name; artifact
/// paths are relative to the record's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub command: String,
    pub config_name: String,
    pub config_hash: String,
    pub seed: u64,
    #[serde(default)]
    pub series: BTreeMap<String, Vec<f64>>,
    #[serde(default)]
    pub artifacts: BTreeMap<String, String>,
    /// Excluded from reproducibility comparisons.
    pub wall_clock_secs: f64,
}

impl RunRecord {
    pub fn new(command: &str, config: &ExperimentConfig, seed: u64) -> Result<Self> {
        Ok(RunRecord {
            command: command.into(),
            config_name: config.name.clone(),
            config_hash: config.hash()?,
            seed,
            series: BTreeMap::new(),
            artifacts: BTreeMap::new(),
            wall_clock_secs: 0.0,
        })
    }

    pub fn series(&mut self, name: &str, values: Vec<f64>) -> &mut Self {
        self.series.insert(name.into(), values);
        self
    }

    pub fn artifact(&mut self, name: &str, path: &str) -> &mut Self {
        self.artifacts.insert(name.into(), path.into());
        self
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    /// Equal apart from wall-clock time.
    pub fn same_results(&self, other: &RunRecord) -> bool {
        RunRecord {
            wall_clock_secs: 0.0,
            ..self.clone()
        } == RunRecord {
            wall_clock_secs: 0.0,
            ..other.clone()
        }
    }
}
