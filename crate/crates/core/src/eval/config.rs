//! Declarative run configuration: one TOML file drives every subcommand,
//! and the frequently swept knobs are overridable on the command line.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::{EncoderConfig, DEFAULT_PROJECTION_SEED};
use crate::env::{GridConfig, SuccessCriterion};
use crate::policy::PolicyConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Which policy drives the episodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    /// Retrieval with situation persistence and re-search triggers.
    Zip,
    /// Fresh nearest search every step, no persistence.
    KnnStep,
    /// Uniform random actions.
    Random,
    /// Retrieval with both re-search triggers disabled.
    ReplayOnly,
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            PolicyKind::Zip => "zip",
            PolicyKind::KnnStep => "knn-step",
            PolicyKind::Random => "random",
            PolicyKind::ReplayOnly => "replay-only",
        };
        f.write_str(s)
    }
}

/// Named hyperparameter presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyPreset {
    /// max_steps=128, divergence_factor=2.0.
    Default,
    /// max_steps=32, divergence_factor=1.0 (best cells of the sweep).
    AblationPick,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    /// Where the dataset file lives.
    pub path: PathBuf,
    /// Number of expert demonstrations to generate.
    pub demos: u32,
    /// Base seed; demonstration i uses map seed mix(base_seed, i).
    pub base_seed: u64,
    /// Per-move probability of a two-step expert detour.
    pub detour_probability: f64,
    /// In-goal dwell steps appended to each demonstration.
    pub dwell: u64,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            path: PathBuf::from("data/demos.zipd"),
            demos: 100,
            base_seed: 424242,
            detour_probability: 0.2,
            dwell: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub width: usize,
    pub height: usize,
    /// Observation window side length, shared with the encoder.
    pub window: usize,
    pub goal_room: usize,
    /// Dead-end braiding probability of the maze generator.
    pub braid: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        let g = GridConfig::default();
        Self {
            width: g.width,
            height: g.height,
            window: g.window_size,
            goal_room: g.goal_room,
            braid: g.braid,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderSection {
    pub dimension: usize,
    pub smoothing_window: usize,
    /// Seed of the frozen projection matrix (must fit in an i64 for TOML).
    pub projection_seed: u64,
}

impl Default for EncoderSection {
    fn default() -> Self {
        Self {
            dimension: 32,
            smoothing_window: 4,
            projection_seed: DEFAULT_PROJECTION_SEED,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicySection {
    pub kind: PolicyKind,
    pub max_steps: u64,
    pub divergence_factor: f64,
    pub epsilon: f64,
}

impl Default for PolicySection {
    fn default() -> Self {
        let p = PolicyConfig::default();
        Self {
            kind: PolicyKind::Zip,
            max_steps: p.max_steps,
            divergence_factor: p.divergence_scaling_factor,
            epsilon: p.zero_distance_epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    /// Held-out evaluation seeds (duplicate-free).
    pub seeds: Vec<u64>,
    pub runs_per_seed: u32,
    pub max_episode_steps: u64,
    /// K of the success criterion.
    pub success_consecutive: u64,
    /// Where to write the report JSON (stdout table is always printed).
    pub report: Option<PathBuf>,
    /// If set, per-episode JSONL logs are written here.
    pub logs_dir: Option<PathBuf>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seeds: (1001..=1020).collect(),
            runs_per_seed: 3,
            max_episode_steps: 200,
            success_consecutive: 5,
            report: None,
            logs_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationSection {
    /// The fixed seed the sweep derives its episode seeds from.
    pub fixed_seed: u64,
    /// Episodes per run in each cell.
    pub episodes: u32,
    /// Runs per cell.
    pub runs: u32,
    /// Episode step budget for sweep cells (defaults to the run section's).
    pub max_episode_steps: Option<u64>,
    pub report: Option<PathBuf>,
}

impl Default for AblationSection {
    fn default() -> Self {
        Self {
            fixed_seed: 4242,
            episodes: 10,
            runs: 3,
            max_episode_steps: None,
            report: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExportSection {
    /// How many leading trajectories to export.
    pub count: u32,
    pub output: PathBuf,
}

impl Default for ExportSection {
    fn default() -> Self {
        Self {
            count: 10,
            output: PathBuf::from("embeddings.csv"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub dataset: DatasetSection,
    pub grid: GridSection,
    pub encoder: EncoderSection,
    pub policy: PolicySection,
    pub run: RunSection,
    pub ablation: AblationSection,
    pub export: ExportSection,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let config: Config = toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.run.seeds.is_empty() {
            return Err(ConfigError::Invalid("seed list must not be empty".into()));
        }
        let mut sorted = self.run.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.run.seeds.len() {
            return Err(ConfigError::Invalid("seed list contains duplicates".into()));
        }
        if self.run.runs_per_seed == 0 {
            return Err(ConfigError::Invalid("runs_per_seed must be >= 1".into()));
        }
        if self.run.max_episode_steps == 0 {
            return Err(ConfigError::Invalid("max_episode_steps must be >= 1".into()));
        }
        if self.run.success_consecutive == 0 {
            return Err(ConfigError::Invalid("success_consecutive must be >= 1".into()));
        }
        if self.dataset.demos == 0 {
            return Err(ConfigError::Invalid("demos must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dataset.detour_probability) {
            return Err(ConfigError::Invalid(
                "detour_probability must be in [0, 1)".into(),
            ));
        }
        if self.ablation.episodes == 0 || self.ablation.runs == 0 {
            return Err(ConfigError::Invalid(
                "ablation episodes and runs must be >= 1".into(),
            ));
        }
        self.policy_config()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }

    pub fn grid_config(&self) -> GridConfig {
        GridConfig {
            width: self.grid.width,
            height: self.grid.height,
            window_size: self.grid.window,
            goal_room: self.grid.goal_room,
            braid: self.grid.braid,
        }
    }

    pub fn encoder_config(&self) -> EncoderConfig {
        EncoderConfig {
            dimension: self.encoder.dimension,
            smoothing_window: self.encoder.smoothing_window,
            window_size: self.grid.window,
            projection_seed: self.encoder.projection_seed,
        }
    }

    /// The policy config for the configured kind (replay-only maps to the
    /// disabled-triggers preset with the configured epsilon).
    pub fn policy_config(&self) -> PolicyConfig {
        match self.policy.kind {
            PolicyKind::ReplayOnly => PolicyConfig {
                zero_distance_epsilon: self.policy.epsilon,
                ..PolicyConfig::replay_only()
            },
            _ => PolicyConfig {
                max_steps: self.policy.max_steps,
                divergence_scaling_factor: self.policy.divergence_factor,
                zero_distance_epsilon: self.policy.epsilon,
            },
        }
    }

    pub fn criterion(&self) -> SuccessCriterion {
        SuccessCriterion {
            required_consecutive: self.run.success_consecutive,
        }
    }

    pub fn apply_preset(&mut self, preset: PolicyPreset) {
        let p = match preset {
            PolicyPreset::Default => PolicyConfig::default(),
            PolicyPreset::AblationPick => PolicyConfig::ablation_pick(),
        };
        self.policy.max_steps = p.max_steps;
        self.policy.divergence_factor = p.divergence_scaling_factor;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        Config::default().validate().unwrap();
        assert_eq!(Config::default().run.seeds.len(), 20);
    }

    #[test]
    fn parse_partial_toml_keeps_other_defaults() {
        let text = r#"
[policy]
kind = "knn-step"
max_steps = 64

[run]
seeds = [1, 2, 3]
"#;
        let config: Config = toml::from_str(text).unwrap();
        assert_eq!(config.policy.kind, PolicyKind::KnnStep);
        assert_eq!(config.policy.max_steps, 64);
        assert_eq!(config.policy.divergence_factor, 2.0);
        assert_eq!(config.run.seeds, vec![1, 2, 3]);
        assert_eq!(config.run.runs_per_seed, 3);
        assert_eq!(config.dataset.demos, 100);
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = "[policy]\nmax_stepz = 12\n";
        assert!(toml::from_str::<Config>(text).is_err());
    }

    #[test]
    fn duplicate_seeds_rejected() {
        let mut config = Config::default();
        config.run.seeds = vec![1, 2, 1];
        assert!(config.validate().is_err());
    }

    #[test]
    fn empty_seed_list_rejected() {
        let mut config = Config::default();
        config.run.seeds.clear();
        assert!(config.validate().is_err());
    }

    #[test]
    fn preset_overrides_policy_knobs() {
        let mut config = Config::default();
        config.apply_preset(PolicyPreset::AblationPick);
        assert_eq!(config.policy.max_steps, 32);
        assert_eq!(config.policy.divergence_factor, 1.0);
    }

    #[test]
    fn replay_only_disables_triggers() {
        let mut config = Config::default();
        config.policy.kind = PolicyKind::ReplayOnly;
        let p = config.policy_config();
        assert_eq!(p.max_steps, u64::MAX);
        assert!(p.divergence_scaling_factor.is_infinite());
    }
}
