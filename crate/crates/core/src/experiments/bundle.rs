use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::config::ExperimentConfig;
use super::criteria::{evaluate, CriterionLine};
use super::ExperimentId;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub name: String,
    pub n: Option<i64>,
    pub mean: f64,
    pub stderr: f64,
    pub replicas: usize,
}

#[derive(Clone, Debug, Default)]
pub struct Metrics {
    pub rows: Vec<MetricRow>,
}

impl Metrics {
    pub fn push(&mut self, name: &str, n: Option<i64>, mean: f64, stderr: f64, replicas: usize) {
        self.rows.push(MetricRow { name: name.to_string(), n, mean, stderr, replicas });
    }

    pub fn scalar(&mut self, name: &str, value: f64) {
        self.push(name, None, value, 0.0, 0);
    }

    pub fn get(&self, name: &str, n: Option<i64>) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.name == name && r.n == n)
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.get(name, None).map(|r| r.mean)
    }

    /// Rows named `name`, ordered by n.
    pub fn series(&self, name: &str) -> Vec<&MetricRow> {
        let mut v: Vec<&MetricRow> = self.rows.iter().filter(|r| r.name == name && r.n.is_some()).collect();
        v.sort_by_key(|r| r.n);
        v
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("name,n,mean,stderr,replicas\n");
        for r in &self.rows {
            let n = r.n.map(|n| n.to_string()).unwrap_or_default();
            s.push_str(&format!("{},{},{:?},{:?},{}\n", r.name, n, r.mean, r.stderr, r.replicas));
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(Error::Config(format!("metrics.csv line {}: expected 5 fields", i + 1)));
            }
            let bad = |what: &str| Error::Config(format!("metrics.csv line {}: bad {what}", i + 1));
            rows.push(MetricRow {
                name: f[0].to_string(),
                n: if f[1].is_empty() { None } else { Some(f[1].parse().map_err(|_| bad("n"))?) },
                mean: f[2].parse().map_err(|_| bad("mean"))?,
                stderr: f[3].parse().map_err(|_| bad("stderr"))?,
                replicas: f[4].parse().map_err(|_| bad("replicas"))?,
            });
        }
        Ok(Self { rows })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: ExperimentId,
    pub seed: u64,
    pub config_hash: String,
    pub code_version: String,
    pub config: ExperimentConfig,
    pub criteria: Vec<CriterionLine>,
    pub elapsed_seconds: f64,
    pub tables: Vec<String>,
}

/// Result of one experiment run.
#[derive(Clone, Debug)]
pub struct ResultBundle {
    pub experiment: ExperimentId,
    pub metrics: Metrics,
    pub tables: BTreeMap<String, String>,
    pub config: ExperimentConfig,
    pub elapsed_seconds: f64,
}

impl ResultBundle {
    pub fn criteria(&self) -> Vec<CriterionLine> {
        evaluate(Some(self.experiment), &self.metrics)
    }

    pub fn passed(&self) -> bool {
        self.criteria().iter().all(|c| !c.failed())
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            experiment: self.experiment,
            seed: self.config.seed,
            config_hash: self.config.hash(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            config: self.config.clone(),
            criteria: self.criteria(),
            elapsed_seconds: self.elapsed_seconds,
            tables: self.tables.keys().cloned().collect(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("metrics.csv"), self.metrics.to_csv())?;
        for (name, body) in &self.tables {
            fs::write(dir.join(name), body)?;
        }
        fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&self.manifest())?)?;
        Ok(())
    }
}

/// Loads what a bundle directory holds; absent files yield empty parts.
pub fn load_bundle(dir: &Path) -> Result<(Option<Manifest>, Metrics)> {
    let manifest = match fs::read_to_string(dir.join("manifest.json")) {
        Ok(t) => Some(serde_json::from_str(&t)?),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
        Err(e) => return Err(e.into()),
    };
    let metrics = match fs::read_to_string(dir.join("metrics.csv")) {
        Ok(t) => Metrics::from_csv(&t)?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Metrics::default(),
        Err(e) => return Err(e.into()),
    };
    Ok((manifest, metrics))
}
