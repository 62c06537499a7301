use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    pub recall_ns: Vec<usize>,
    pub shots: Option<usize>,
    pub checkpoint: Option<String>,
    pub micro: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetReport {
    /// Metric name to value, e.g. `recall@20`, `accuracy`, `macro_f1`.
    pub metrics: BTreeMap<String, f64>,
    pub queries: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub settings: EvalSettings,
    pub datasets: BTreeMap<String, DatasetReport>,
}

impl EvalReport {
    pub fn new(settings: EvalSettings) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            settings,
            datasets: BTreeMap::new(),
        }
    }

    /// True when every metric is a number in [0, 1].
    pub fn is_valid(&self) -> bool {
        self.datasets
            .values()
            .flat_map(|d| d.metrics.values())
            .all(|v| (0.0..=1.0).contains(v))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let r: Self = serde_json::from_slice(&std::fs::read(path)?)?;
        if r.schema_version != REPORT_SCHEMA_VERSION {
            return Err(Error::format(
                path,
                format!("report schema {} (expected {REPORT_SCHEMA_VERSION})", r.schema_version),
            ));
        }
        Ok(r)
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut names: Vec<&String> = self.datasets.values().flat_map(|d| d.metrics.keys()).collect();
        names.sort();
        names.dedup();
        let width = self.datasets.keys().map(|k| k.len()).max().unwrap_or(0).max(7);
        write!(f, "{:<width$}", "dataset")?;
        for n in &names {
            write!(f, "  {n:>10}")?;
        }
        writeln!(f)?;
        for (name, d) in &self.datasets {
            write!(f, "{name:<width$}")?;
            for n in &names {
                match d.metrics.get(*n) {
                    Some(v) => write!(f, "  {v:>10.4}")?,
                    None => write!(f, "  {:>10}", "-")?,
                }
            }
            writeln!(f)?;
        }
        Ok(())
    }
}
