use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{KblError, Result};

/// Outcome of one experiment run.
///
/// Metrics are named scalars and must be finite; booleans go to `flags`.
/// Wall-clock time lives apart from the metrics so that reruns with the same
/// seed compare equal on everything but `elapsed_ms`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub seed: u64,
    pub metrics: BTreeMap<String, f64>,
    pub flags: BTreeMap<String, bool>,
    pub artifacts: Vec<String>,
    pub config: serde_json::Value,
    pub elapsed_ms: u64,
}

impl ExperimentReport {
    pub fn new(experiment: &str, seed: u64, config: &impl Serialize) -> Result<Self> {
        let config = serde_json::to_value(config).map_err(|e| KblError::Config(e.to_string()))?;
        Ok(ExperimentReport { experiment: experiment.to_string(), seed, config, ..Default::default() })
    }

    pub fn metric(&mut self, name: &str, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(KblError::Numerical(format!("metric {name} is not finite ({value})")));
        }
        self.metrics.insert(name.to_string(), value);
        Ok(())
    }

    pub fn flag(&mut self, name: &str, value: bool) {
        self.flags.insert(name.to_string(), value);
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| KblError::Config(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| KblError::Config(format!("report: {e}")))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}
