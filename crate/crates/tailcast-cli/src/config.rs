//! Run configuration: a TOML file plus command-line overrides.

use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use tailcast::forest::ForestConfig;
use tailcast::mgpred::MgpFamily;
use tailcast::preprocess::{ShiftScope, TrainSide};
use tailcast::roxane::RegressorSpec;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    /// Global seed; `TAILCAST_SEED` is the fallback when absent.
    pub seed: Option<u64>,
    pub stations: Vec<StationEntry>,
    pub split: SplitConfig,
    #[serde(default)]
    pub preprocess: PreprocessConfig,
    #[serde(default)]
    pub regressor: RegressorConfig,
    #[serde(default)]
    pub mgp: MgpConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub reconstruct: ReconstructConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StationEntry {
    pub id: String,
    pub path: PathBuf,
    pub role: StationRole,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StationRole {
    Covariate,
    Target,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitConfig {
    pub cut: DateTime<Utc>,
    pub train_side: TrainSide,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub median_preselect: bool,
    pub shift_scope: ShiftScope,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            median_preselect: true,
            shift_scope: ShiftScope::Pooled,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegressorConfig {
    pub kind: RegressorKind,
    pub n_trees: usize,
    pub depth_grid: Vec<u32>,
    pub cv_folds: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegressorKind {
    Ols,
    Forest,
}

impl Default for RegressorConfig {
    fn default() -> Self {
        Self {
            kind: RegressorKind::Ols,
            n_trees: 200,
            depth_grid: vec![2, 3, 4, 6, 8],
            cv_folds: 5,
        }
    }
}

impl RegressorConfig {
    pub fn to_spec(&self, seed: u64) -> RegressorSpec {
        match self.kind {
            RegressorKind::Ols => RegressorSpec::Ols,
            RegressorKind::Forest => RegressorSpec::Forest(ForestConfig {
                n_trees: self.n_trees,
                max_depth_grid: self.depth_grid.clone(),
                cv_folds: self.cv_folds,
                seed,
            }),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MgpConfig {
    pub families: Vec<MgpFamily>,
    /// Monte-Carlo draws per prediction (the paper samples 100).
    pub mc_samples: usize,
}

impl Default for MgpConfig {
    fn default() -> Self {
        Self {
            families: vec![MgpFamily::GumbelT, MgpFamily::GumbelU, MgpFamily::RevExpT],
            mc_samples: 100,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub paper_format: bool,
    pub dump_mc: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            paper_format: false,
            dump_mc: false,
        }
    }
}

/// Optional date window for the reconstruction command.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ReconstructConfig {
    pub from: Option<DateTime<Utc>>,
    pub to: Option<DateTime<Utc>>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Unreadable {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Unreadable {
            path: path.to_path_buf(),
            source,
        })?;
        let config: RunConfig =
            toml::from_str(&text).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let targets = self
            .stations
            .iter()
            .filter(|s| s.role == StationRole::Target)
            .count();
        if targets != 1 {
            return Err(ConfigError::Invalid(format!(
                "exactly one target station required, found {targets}"
            )));
        }
        if self.stations.len() - targets < 1 {
            return Err(ConfigError::Invalid("at least one covariate station required".into()));
        }
        if self.mgp.families.is_empty() {
            return Err(ConfigError::Invalid("mgp.families must be non-empty".into()));
        }
        if self.mgp.mc_samples == 0 {
            return Err(ConfigError::Invalid("mgp.mc_samples must be positive".into()));
        }
        Ok(())
    }

    /// Effective seed: config value, then `TAILCAST_SEED`, then 0.
    pub fn effective_seed(&self, flag: Option<u64>) -> u64 {
        flag.or(self.seed)
            .or_else(|| {
                std::env::var("TAILCAST_SEED")
                    .ok()
                    .and_then(|v| v.parse().ok())
            })
            .unwrap_or(0)
    }

    pub fn covariate_entries(&self) -> Vec<&StationEntry> {
        self.stations
            .iter()
            .filter(|s| s.role == StationRole::Covariate)
            .collect()
    }

    pub fn target_entry(&self) -> &StationEntry {
        self.stations
            .iter()
            .find(|s| s.role == StationRole::Target)
            .expect("validated config has a target")
    }

    /// Station ids in frame order: covariates then target.
    pub fn frame_station_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.covariate_entries().iter().map(|s| s.id.clone()).collect();
        ids.push(self.target_entry().id.clone());
        ids
    }
}
