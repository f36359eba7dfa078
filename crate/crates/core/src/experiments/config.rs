use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coeffs::{CoefficientModel, Law};
use crate::error::{Error, Result};
use crate::partition::EXACT_LEVEL_LIMIT;

use super::ExperimentId;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoefficientsConfig {
    pub law: Law,
    pub params: Vec<f64>,
}

impl Default for CoefficientsConfig {
    fn default() -> Self {
        Self { law: Law::Rademacher, params: Vec::new() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CouplingConfig {
    #[serde(rename = "M")]
    pub m: usize,
    pub delta_override: Option<f64>,
}

impl Default for CouplingConfig {
    fn default() -> Self {
        Self { m: 1024, delta_override: None }
    }
}

/// Run configuration. Unset `replicas` means the experiment's own
/// acceptance-scale count; unset `alpha` means (γ + √2) / 2.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub experiment: Option<ExperimentId>,
    pub coefficients: CoefficientsConfig,
    pub gamma: f64,
    pub delta: f64,
    pub alpha: Option<f64>,
    pub n_max: usize,
    pub replicas: Option<usize>,
    pub seed: u64,
    pub coupling: CouplingConfig,
    pub output: Option<String>,
    pub overrides: BTreeMap<String, serde_json::Value>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: None,
            coefficients: CoefficientsConfig::default(),
            gamma: 1.2,
            delta: 0.1,
            alpha: None,
            n_max: 12,
            replicas: None,
            seed: 20_240_611,
            coupling: CouplingConfig::default(),
            output: None,
            overrides: BTreeMap::new(),
        }
    }
}

impl ExperimentConfig {
    pub fn for_experiment(id: ExperimentId) -> Self {
        Self { experiment: Some(id), ..Self::default() }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn model(&self) -> Result<CoefficientModel> {
        CoefficientModel::new(self.coefficients.law, &self.coefficients.params)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or((self.gamma + std::f64::consts::SQRT_2) / 2.0)
    }

    pub fn replicas_or(&self, default: usize) -> usize {
        self.replicas.unwrap_or(default)
    }

    pub fn override_usize(&self, key: &str, default: usize) -> usize {
        self.overrides.get(key).and_then(|v| v.as_u64()).map(|v| v as usize).unwrap_or(default)
    }

    pub fn override_f64(&self, key: &str, default: f64) -> f64 {
        self.overrides.get(key).and_then(|v| v.as_f64()).unwrap_or(default)
    }

    pub fn validate(&self, id: ExperimentId) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 2.0) {
            return Err(Error::Config(format!("gamma must lie in (0, 2), got {}", self.gamma)));
        }
        if self.replicas == Some(0) {
            return Err(Error::Config("replicas must be at least 1".into()));
        }
        if id.coupling_related() && !(self.gamma - self.delta > 1.0) {
            return Err(Error::Config(format!("coupling experiments need gamma - delta > 1, got {}", self.gamma - self.delta)));
        }
        if self.n_max > EXACT_LEVEL_LIMIT {
            return Err(Error::Capacity { level: self.n_max, count: "n_max".into(), limit: EXACT_LEVEL_LIMIT });
        }
        if self.n_max < id.min_levels() {
            return Err(Error::Config(format!("{} needs n_max >= {}", id.code(), id.min_levels())));
        }
        if let Some(a) = self.alpha {
            if !(a > self.gamma) {
                return Err(Error::Config(format!("alpha {a} must exceed gamma {}", self.gamma)));
            }
        }
        if self.coupling.m == 0 || self.coupling.m > crate::coupling::MAX_SAMPLES {
            return Err(Error::Config(format!("coupling.M must lie in 1..={}", crate::coupling::MAX_SAMPLES)));
        }
        self.model()?;
        Ok(())
    }

    /// First 16 hex digits of SHA-256 over the canonical JSON form.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = None;
        let text = serde_json::to_string(&c).unwrap_or_default();
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}
