//! Experiment configuration files (TOML).
//!
//! ```toml
//! seeds = [0, 1, 2, 3, 4]
//! n_train = 1000
//! n_eval = 1000
//! output_dir = "results/study"
//! choice_mode = "position"
//!
//! [[models]]
//! variant = "M0"
//!
//! [[models]]
//! variant = "Mstar"
//! policy = { eta = 0.002, beta = 20.0 }
//! pathways = [{ leak_rates = [0.23] }, { leak_rates = [0.59] }]
//! ```
//!
//! Pathway entries override the variant defaults field by field; omitted
//! pathways keep their defaults entirely.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::harness::SimulationSpec;
use crate::model::{ModelConfig, PathwayConfig, TopologyConfig, Variant};
use crate::policy::PolicyParams;
use crate::task::{ChoiceMode, TimingRanges};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_trials")]
    pub n_train: usize,
    #[serde(default = "default_trials")]
    pub n_eval: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub choice_mode: ChoiceMode,
    #[serde(default)]
    pub timing: TimingRanges,
    pub models: Vec<ModelEntry>,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_trials() -> usize {
    1000
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

fn default_units() -> usize {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEntry {
    pub variant: Variant,
    #[serde(default = "default_units")]
    pub total_units: usize,
    #[serde(default)]
    pub readout_sparsity: f64,
    #[serde(default)]
    pub policy: PolicyParams,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pathways: Vec<PathwayOverride>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathwayOverride {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leak_rates: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectral_radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rec_connectivity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_connectivity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_scaling: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feedback_scaling: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topology: Option<TopologyOverride>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyOverride {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angle_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_connect: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_decay: Option<f64>,
}

impl PathwayOverride {
    fn apply(&self, p: &mut PathwayConfig) -> Result<()> {
        if let Some(v) = &self.leak_rates {
            p.leak_rates = v.clone();
        }
        if let Some(v) = self.spectral_radius {
            p.spectral_radius = Some(v);
        }
        if let Some(v) = self.rec_connectivity {
            p.rec_connectivity = v;
        }
        if let Some(v) = self.input_connectivity {
            p.input_connectivity = v;
        }
        if let Some(v) = self.input_scaling {
            p.input_scaling = v;
        }
        if let Some(v) = self.feedback_scaling {
            p.feedback_scaling = v;
        }
        if let Some(t) = &self.topology {
            let topo = p
                .topology
                .as_mut()
                .ok_or_else(|| Error::Config("`topology` is only valid for Mstar pathways".into()))?;
            if let Some(v) = t.radius {
                topo.radius = v;
            }
            if let Some(v) = t.angle_deg {
                topo.angle_deg = v;
            }
            if let Some(v) = t.p_connect {
                topo.p_connect = v;
            }
            if let Some(v) = t.input_decay {
                topo.input_decay = v;
            }
        }
        Ok(())
    }

    /// Fully explicit override reproducing `p`.
    pub fn from_pathway(p: &PathwayConfig) -> Self {
        PathwayOverride {
            leak_rates: Some(p.leak_rates.clone()),
            spectral_radius: p.spectral_radius,
            rec_connectivity: Some(p.rec_connectivity),
            input_connectivity: Some(p.input_connectivity),
            input_scaling: Some(p.input_scaling),
            feedback_scaling: Some(p.feedback_scaling),
            topology: p.topology.as_ref().map(|t: &TopologyConfig| TopologyOverride {
                radius: Some(t.radius),
                angle_deg: Some(t.angle_deg),
                p_connect: Some(t.p_connect),
                input_decay: Some(t.input_decay),
            }),
        }
    }
}

impl ModelEntry {
    pub fn new(variant: Variant) -> Self {
        ModelEntry {
            variant,
            total_units: default_units(),
            readout_sparsity: 0.0,
            policy: PolicyParams::default(),
            pathways: Vec::new(),
        }
    }

    /// Explicit entry for a resolved model and policy.
    pub fn from_parts(model: &ModelConfig, policy: &PolicyParams) -> Self {
        ModelEntry {
            variant: model.variant,
            total_units: model.total_units,
            readout_sparsity: model.readout_sparsity,
            policy: policy.clone(),
            pathways: model.pathways.iter().map(PathwayOverride::from_pathway).collect(),
        }
    }

    /// Variant defaults with this entry's overrides applied.
    pub fn model_config(&self) -> Result<ModelConfig> {
        let mut cfg = ModelConfig::for_variant(self.variant);
        cfg.total_units = self.total_units;
        cfg.readout_sparsity = self.readout_sparsity;
        if self.pathways.len() > cfg.pathways.len() {
            return Err(Error::Config(format!(
                "{} has {} pathway(s), config lists {}",
                self.variant,
                cfg.pathways.len(),
                self.pathways.len()
            )));
        }
        for (o, p) in self.pathways.iter().zip(cfg.pathways.iter_mut()) {
            o.apply(p)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: ExperimentConfig = toml::from_str(&text).map_err(|e| Error::parse(path, e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    /// Checks every component invariant reachable from the config.
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("`seeds` must not be empty".into()));
        }
        if self.n_eval == 0 {
            return Err(Error::Config("`n_eval` must be at least 1".into()));
        }
        if self.models.is_empty() {
            return Err(Error::Config("at least one [[models]] entry is required".into()));
        }
        self.timing.validate()?;
        for m in &self.models {
            m.model_config()?;
            m.policy.validate()?;
        }
        Ok(())
    }

    pub fn simulation_spec(&self, entry: &ModelEntry) -> Result<SimulationSpec> {
        Ok(SimulationSpec {
            model: entry.model_config()?,
            policy: entry.policy.clone(),
            timing: self.timing.clone(),
            mode: self.choice_mode,
            n_train: self.n_train,
            n_eval: self.n_eval,
        })
    }

    pub fn simulation_specs(&self) -> Result<Vec<SimulationSpec>> {
        self.models.iter().map(|m| self.simulation_spec(m)).collect()
    }

    /// Hex SHA-256 of the canonical TOML form, so equivalent files hash alike.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
