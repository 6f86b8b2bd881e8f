//! Experiment harness: configs, synthetic generators, metrics, file I/O and
//! the three application studies (spectrum cartography, matrix completion
//! with missing rows, network traffic prediction).

pub mod cartography;
pub mod config;
pub mod fit;
pub mod generators;
pub mod io;
pub mod matrix;
pub mod metrics;
pub mod report;
pub mod traffic;

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::Result;

pub use cartography::run_cartography;
pub use fit::{run_fit, run_sweep};
pub use config::{load_config, CartographyConfig, CompletionExperimentConfig, HarnessConfig, TrafficExperimentConfig};
pub use matrix::run_completion_experiment;
pub use metrics::{metric_recovery_db, ErrorRatio, DB_FLOOR};
pub use report::ExperimentReport;
pub use traffic::run_traffic_experiment;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

/// Where and how a run writes its artifacts.
#[derive(Clone, Debug)]
pub struct Output {
    pub dir: PathBuf,
    pub format: OutputFormat,
}

impl Output {
    pub fn new(dir: impl Into<PathBuf>, format: OutputFormat) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Output { dir, format })
    }

    /// Writes `m` as `<stem>.csv` or `<stem>.json` and returns the file name.
    pub fn matrix(&self, stem: &str, m: &DMatrix<f64>) -> Result<String> {
        match self.format {
            OutputFormat::Csv => {
                let name = format!("{stem}.csv");
                io::write_matrix_csv(&self.dir.join(&name), m)?;
                Ok(name)
            }
            OutputFormat::Json => {
                let name = format!("{stem}.json");
                let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
                let text = serde_json::to_string(&rows).map_err(|e| crate::KblError::Config(e.to_string()))?;
                std::fs::write(self.dir.join(&name), text + "\n")?;
                Ok(name)
            }
        }
    }

    /// Writes a table with named columns; JSON output is a list of records.
    pub fn table(&self, stem: &str, header: &[&str], rows: &[Vec<f64>]) -> Result<String> {
        match self.format {
            OutputFormat::Csv => {
                let name = format!("{stem}.csv");
                io::write_table_csv(&self.dir.join(&name), header, rows)?;
                Ok(name)
            }
            OutputFormat::Json => {
                let name = format!("{stem}.json");
                let records: Vec<serde_json::Map<String, serde_json::Value>> = rows
                    .iter()
                    .map(|r| header.iter().zip(r).map(|(h, v)| (h.to_string(), serde_json::json!(v))).collect())
                    .collect();
                let text = serde_json::to_string(&records).map_err(|e| crate::KblError::Config(e.to_string()))?;
                std::fs::write(self.dir.join(&name), text + "\n")?;
                Ok(name)
            }
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }
}

pub fn report_path(dir: &Path) -> PathBuf {
    dir.join("report.json")
}
