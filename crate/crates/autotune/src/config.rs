//! Experiment configuration files.
//!
//! One JSON document describes a whole experiment: which benchmark, its
//! workload block, the objective, the optimizer settings, and where runs
//! go. `space` optionally overrides the benchmark's built-in search-space
//! document.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::Objective;
use crate::experiment::OptimizerRecord;
use crate::optimizer::{OptimizerKind, StrategyMode, DEFAULT_SLICE};
use crate::tunables::{ComponentSpec, TunableValue};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config io ({path}): {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config parse ({path}): {source}")]
    Parse {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("search space ({path}): {message}")]
    Space { path: PathBuf, message: String },
    #[error("budget must be set for optimize")]
    MissingBudget,
}

/// Optimizer block: `{kind, seed, budget, strategy, slice}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub budget: Option<usize>,
    #[serde(default)]
    pub strategy: StrategyMode,
    #[serde(default = "default_slice")]
    pub slice: usize,
}

fn default_slice() -> usize {
    DEFAULT_SLICE
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            kind: OptimizerKind::RandomSearch,
            seed: 0,
            budget: None,
            strategy: StrategyMode::AllAtOnce,
            slice: DEFAULT_SLICE,
        }
    }
}

impl OptimizerConfig {
    pub fn record(&self) -> OptimizerRecord {
        OptimizerRecord {
            kind: self.kind,
            seed: self.seed,
            strategy: self.strategy,
            slice: self.slice,
        }
    }
}

/// The experiment config document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Optional search-space document path; defaults to the benchmark's
    /// built-in spec.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub space: Option<PathBuf>,
    pub benchmark: String,
    #[serde(default = "empty_object")]
    pub workload: serde_json::Value,
    pub objective: Objective,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    /// Transport file for channel-attached components.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transport: Option<PathBuf>,
    /// Run store path; required by `optimize`, optional for `run`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Explicit assignment for `run`; defaults come from the space.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assignment: Option<BTreeMap<String, TunableValue>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub episode_id: Option<String>,
}

fn empty_object() -> serde_json::Value {
    serde_json::json!({})
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })
    }

    /// The search space: the `space` document when given, otherwise `None`
    /// (callers fall back to the benchmark's built-in spec).
    pub fn load_space(&self) -> Result<Option<ComponentSpec>, ConfigError> {
        let Some(path) = &self.space else {
            return Ok(None);
        };
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.clone(),
            source,
        })?;
        let spec = ComponentSpec::from_json(&text).map_err(|e| ConfigError::Space {
            path: path.clone(),
            message: e.to_string(),
        })?;
        spec.validate().map_err(|e| ConfigError::Space {
            path: path.clone(),
            message: e.to_string(),
        })?;
        Ok(Some(spec))
    }

    pub fn episode_id(&self) -> String {
        self.episode_id
            .clone()
            .unwrap_or_else(crate::experiment::new_run_id)
    }
}
