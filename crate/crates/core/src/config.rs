//! JSON run configuration.
//!
//! The config is fail-closed: unknown keys are rejected everywhere, and the
//! `version` field must be 1. Distributions are declared as tagged objects,
//! e.g. `{"kind":"lognormal","mean":9.3,"sd":2.54}`; fields that do not
//! belong to the declared kind are rejected rather than ignored.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::distributions::{
    LifetimeDistribution, OffspringDistribution, PairOffspringDistribution,
};
use crate::engine::{InitialGroup, ProcessKind, ProcessSpec, DEFAULT_POPULATION_CAP};
use crate::error::{Error, Result};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub process: ProcessConfig,
    pub observation_times: ObservationTimes,
    pub replicates: u32,
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_sweep: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outputs: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleGridConfig>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleGridConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
}

/// Either an explicit list of times or a uniform grid
/// `{ "t_max": T, "n_points": n }` meaning `T/n, 2T/n, ..., T`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ObservationTimes {
    List(Vec<f64>),
    Grid { t_max: f64, n_points: u32 },
}

impl ObservationTimes {
    pub fn resolve(&self) -> Result<Vec<f64>> {
        let times = match self {
            Self::List(ts) => ts.clone(),
            Self::Grid { t_max, n_points } => {
                let valid = *t_max > 0.0 && *n_points > 0;
                if !valid {
                    return Err(Error::InvalidObservationTimes);
                }
                (1..=*n_points)
                    .map(|i| t_max * i as f64 / *n_points as f64)
                    .collect()
            }
        };
        if times.is_empty()
            || times.iter().any(|t| !t.is_finite() || *t < 0.0)
            || times.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::InvalidObservationTimes);
        }
        Ok(times)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessConfig {
    #[serde(default = "default_n_types")]
    pub n_types: u8,
    // single-type fields
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lifetime: Option<DistConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offspring: Option<ScalarOffspringConfig>,
    // two-type fields
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lifetime1: Option<DistConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lifetime2: Option<DistConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offspring_type1: Option<PairOffspringConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offspring_type2: Option<ScalarOffspringConfig>,
    #[serde(default)]
    pub p_label_loss: f64,
    /// Defaults to a single labeled type-1 cell.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<InitialConfig>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub population_cap: Option<u64>,
}

fn default_n_types() -> u8 {
    1
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    #[serde(default = "default_cell_type")]
    pub cell_type: u8,
    pub count: u64,
    #[serde(default = "default_labeled")]
    pub labeled: bool,
}

fn default_cell_type() -> u8 {
    1
}

fn default_labeled() -> bool {
    true
}

/// Tagged lifetime-law declaration. Exactly the parameters of the declared
/// kind may be present.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistConfig {
    pub kind: DistKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sd: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistKind {
    Exponential,
    Lognormal,
    Gamma,
    Deterministic,
}

impl DistConfig {
    pub fn build(&self) -> Result<LifetimeDistribution> {
        let mut allowed: Vec<(&str, Option<f64>)> = vec![
            ("rate", self.rate),
            ("mean", self.mean),
            ("sd", self.sd),
            ("shape", self.shape),
            ("scale", self.scale),
            ("value", self.value),
        ];
        let take = |allowed: &mut Vec<(&str, Option<f64>)>, name: &str| -> Result<f64> {
            let slot = allowed
                .iter_mut()
                .find(|(n, _)| *n == name)
                .expect("known parameter name");
            slot.1.take().ok_or_else(|| {
                Error::InvalidConfig(format!("distribution kind requires parameter {name:?}"))
            })
        };
        let dist = match self.kind {
            DistKind::Exponential => LifetimeDistribution::Exponential {
                rate: take(&mut allowed, "rate")?,
            },
            DistKind::Lognormal => LifetimeDistribution::LogNormal {
                mean: take(&mut allowed, "mean")?,
                sd: take(&mut allowed, "sd")?,
            },
            DistKind::Gamma => LifetimeDistribution::Gamma {
                shape: take(&mut allowed, "shape")?,
                scale: take(&mut allowed, "scale")?,
            },
            DistKind::Deterministic => LifetimeDistribution::Deterministic {
                value: take(&mut allowed, "value")?,
            },
        };
        if let Some((name, _)) = allowed.iter().find(|(_, v)| v.is_some()) {
            return Err(Error::InvalidConfig(format!(
                "parameter {name:?} does not belong to distribution kind {:?}",
                self.kind
            )));
        }
        dist.validate()?;
        Ok(dist)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalarOffspringConfig {
    pub outcomes: Vec<u32>,
    pub probs: Vec<f64>,
}

impl ScalarOffspringConfig {
    pub fn build(&self) -> Result<OffspringDistribution> {
        OffspringDistribution::new(self.outcomes.clone(), self.probs.clone())
    }
}

/// Type-1 offspring law of the two-type model: either an explicit joint pmf
/// or a total-count pmf with an independent per-child type-2 probability.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairOffspringConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joint: Option<Vec<JointEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total: Option<ScalarOffspringConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub type2_child_prob: Option<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointEntry {
    pub n1: u32,
    pub n2: u32,
    pub prob: f64,
}

impl PairOffspringConfig {
    pub fn build(&self) -> Result<PairOffspringDistribution> {
        match (&self.joint, &self.total, self.type2_child_prob) {
            (Some(joint), None, None) => {
                let outcomes = joint.iter().map(|e| (e.n1, e.n2)).collect();
                let probs = joint.iter().map(|e| e.prob).collect();
                PairOffspringDistribution::new(outcomes, probs)
            }
            (None, Some(total), Some(beta)) => {
                PairOffspringDistribution::from_total_and_type2_prob(&total.build()?, beta)
            }
            _ => Err(Error::InvalidConfig(
                "offspring_type1 takes either `joint` or both `total` and `type2_child_prob`"
                    .into(),
            )),
        }
    }
}

impl ProcessConfig {
    fn reject(&self, field: &str, present: bool, n_types: u8) -> Result<()> {
        if present {
            return Err(Error::InvalidConfig(format!(
                "field {field:?} does not apply to a {n_types}-type process"
            )));
        }
        Ok(())
    }

    pub fn build(&self) -> Result<ProcessSpec> {
        let kind = match self.n_types {
            1 => {
                self.reject("lifetime1", self.lifetime1.is_some(), 1)?;
                self.reject("lifetime2", self.lifetime2.is_some(), 1)?;
                self.reject("offspring_type1", self.offspring_type1.is_some(), 1)?;
                self.reject("offspring_type2", self.offspring_type2.is_some(), 1)?;
                let lifetime = self
                    .lifetime
                    .as_ref()
                    .ok_or_else(|| Error::InvalidConfig("missing `lifetime`".into()))?
                    .build()?;
                let offspring = self
                    .offspring
                    .as_ref()
                    .ok_or_else(|| Error::InvalidConfig("missing `offspring`".into()))?
                    .build()?;
                ProcessKind::SingleType {
                    lifetime,
                    offspring,
                }
            }
            2 => {
                self.reject("lifetime", self.lifetime.is_some(), 2)?;
                self.reject("offspring", self.offspring.is_some(), 2)?;
                let lifetime1 = self
                    .lifetime1
                    .as_ref()
                    .ok_or_else(|| Error::InvalidConfig("missing `lifetime1`".into()))?
                    .build()?;
                let lifetime2 = self
                    .lifetime2
                    .as_ref()
                    .ok_or_else(|| Error::InvalidConfig("missing `lifetime2`".into()))?
                    .build()?;
                let offspring1 = self
                    .offspring_type1
                    .as_ref()
                    .ok_or_else(|| Error::InvalidConfig("missing `offspring_type1`".into()))?
                    .build()?;
                let offspring2 = self
                    .offspring_type2
                    .as_ref()
                    .ok_or_else(|| Error::InvalidConfig("missing `offspring_type2`".into()))?
                    .build()?;
                ProcessKind::TwoType {
                    lifetime1,
                    lifetime2,
                    offspring1,
                    offspring2,
                }
            }
            other => {
                return Err(Error::InvalidConfig(format!(
                    "n_types must be 1 or 2, got {other}"
                )))
            }
        };

        let initial = self
            .initial
            .clone()
            .unwrap_or_else(|| {
                vec![InitialConfig {
                    cell_type: 1,
                    count: 1,
                    labeled: true,
                }]
            })
            .iter()
            .map(|g| InitialGroup {
                cell_type: g.cell_type,
                count: g.count,
                labeled: g.labeled,
            })
            .collect();

        let spec = ProcessSpec {
            kind,
            p_label_loss: self.p_label_loss,
            initial,
            population_cap: self.population_cap.unwrap_or(DEFAULT_POPULATION_CAP),
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: RunConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::InvalidConfig(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if self.replicates == 0 {
            return Err(Error::InvalidConfig("replicates must be >= 1".into()));
        }
        if let Some(sweep) = &self.p_sweep {
            if sweep.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::InvalidConfig(
                    "p_sweep entries must lie in [0, 1]".into(),
                ));
            }
        }
        self.process.build()?;
        self.observation_times.resolve()?;
        Ok(())
    }

    pub fn process_spec(&self) -> Result<ProcessSpec> {
        self.process.build()
    }

    pub fn times(&self) -> Result<Vec<f64>> {
        self.observation_times.resolve()
    }
}
