//! Experiment orchestration: configs, the named runners, result bundles
//! and verification against the acceptance table.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub mod bundle;
pub mod config;
pub mod criteria;
mod e1;
mod e2;
mod e3;
mod e4;
mod e5;
mod e6;
mod e7;
mod e8;
mod e9;
pub mod structural;

pub use bundle::{load_bundle, Manifest, MetricRow, Metrics, ResultBundle};
pub use config::ExperimentConfig;
pub use criteria::{evaluate, CriterionLine, Verdict};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ExperimentId {
    E1,
    E2,
    E3,
    E4,
    E5,
    E6,
    E7,
    E8,
    E9,
    #[serde(rename = "S")]
    Structural,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 10] = [Self::E1, Self::E2, Self::E3, Self::E4, Self::E5, Self::E6, Self::E7, Self::E8, Self::E9, Self::Structural];

    pub fn code(self) -> &'static str {
        match self {
            Self::E1 => "E1",
            Self::E2 => "E2",
            Self::E3 => "E3",
            Self::E4 => "E4",
            Self::E5 => "E5",
            Self::E6 => "E6",
            Self::E7 => "E7",
            Self::E8 => "E8",
            Self::E9 => "E9",
            Self::Structural => "S",
        }
    }

    pub fn coupling_related(self) -> bool {
        matches!(self, Self::E6 | Self::E8)
    }

    /// Smallest n_max the runner can work with.
    pub fn min_levels(self) -> usize {
        match self {
            Self::E2 => 7,
            Self::E3 => 9,
            Self::E4 => 5,
            Self::E5 => 5,
            Self::E6 => 7,
            Self::E7 => 2,
            Self::E8 => 9,
            Self::E9 => 7,
            _ => 1,
        }
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for ExperimentId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let u = s.trim().to_ascii_uppercase();
        Self::ALL
            .iter()
            .copied()
            .find(|e| e.code() == u || (u == "STRUCTURAL" && *e == Self::Structural))
            .ok_or_else(|| Error::Config(format!("unknown experiment '{s}'")))
    }
}

pub struct CatalogEntry {
    pub id: ExperimentId,
    pub title: &'static str,
    pub anchor: &'static str,
    pub runtime: &'static str,
}

pub fn catalog() -> Vec<CatalogEntry> {
    use ExperimentId::*;
    vec![
        CatalogEntry { id: E1, title: "Covariance exactness", anchor: "covariance Σ cos(2πk(t-s))/k of the trigonometric field and its log-correlation", runtime: "2 min" },
        CatalogEntry { id: E2, title: "Partition-function law", anchor: "log Z̃_n = (γ²/2) n log 2 + O(1) for the tree normalizer", runtime: "1 min" },
        CatalogEntry { id: E3, title: "Thick-point exponent", anchor: "first-moment count of descendants of thick points", runtime: "10 min" },
        CatalogEntry { id: E4, title: "Chaining decay", anchor: "summable sup-bound on the block discrepancies Y_m", runtime: "10 min" },
        CatalogEntry { id: E5, title: "Continuum/tree ratio", anchor: "comparison of the continuum and hierarchical chaos by chaining", runtime: "15 min" },
        CatalogEntry { id: E6, title: "Yurinskii validation", anchor: "Gaussian coupling of sums of independent vectors with the β functional", runtime: "10 min" },
        CatalogEntry { id: E7, title: "Reconstruction roundtrip", anchor: "i.i.d. Gaussian coefficients recovered from the coupled increments", runtime: "5 min" },
        CatalogEntry { id: E8, title: "Coupled RN diagnostic", anchor: "Radon-Nikodym candidate between coupled hierarchical measures", runtime: "20 min" },
        CatalogEntry { id: E9, title: "Degeneracy dichotomy", anchor: "total mass degenerates above the critical inverse temperature", runtime: "10 min" },
        CatalogEntry { id: Structural, title: "Structural suite", anchor: "partition combinatorics and the martingale property of total masses", runtime: "5 min" },
    ]
}

/// Runs one experiment. Deterministic given the config.
pub fn run(id: ExperimentId, cfg: &ExperimentConfig) -> Result<ResultBundle> {
    cfg.validate(id)?;
    let start = Instant::now();
    let mut metrics = Metrics::default();
    let mut tables = std::collections::BTreeMap::new();
    match id {
        ExperimentId::E1 => e1::run(cfg, &mut metrics, &mut tables)?,
        ExperimentId::E2 => e2::run(cfg, &mut metrics, &mut tables)?,
        ExperimentId::E3 => e3::run(cfg, &mut metrics, &mut tables)?,
        ExperimentId::E4 => e4::run(cfg, &mut metrics, &mut tables)?,
        ExperimentId::E5 => e5::run(cfg, &mut metrics, &mut tables)?,
        ExperimentId::E6 => e6::run(cfg, &mut metrics, &mut tables)?,
        ExperimentId::E7 => e7::run(cfg, &mut metrics, &mut tables)?,
        ExperimentId::E8 => e8::run(cfg, &mut metrics, &mut tables)?,
        ExperimentId::E9 => e9::run(cfg, &mut metrics, &mut tables)?,
        ExperimentId::Structural => structural::run(cfg, &mut metrics, &mut tables)?,
    }
    let mut config = cfg.clone();
    config.experiment = Some(id);
    Ok(ResultBundle { experiment: id, metrics, tables, config, elapsed_seconds: start.elapsed().as_secs_f64() })
}

/// Verdict lines for a bundle directory; every criterion is listed, with
/// "not run" when its metrics are absent.
pub fn verify_dir(dir: &Path) -> Result<Vec<CriterionLine>> {
    let (manifest, metrics) = load_bundle(dir)?;
    Ok(evaluate(manifest.map(|m| m.experiment), &metrics))
}

pub(crate) type Tables = std::collections::BTreeMap<String, String>;
