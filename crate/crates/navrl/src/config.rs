//! One flat run configuration with sections per module.
//!
//! A TOML file (all sections optional) is merged with `--set key=value`
//! overrides, validated against every module's invariants before any work
//! starts, and hashed into a digest that names the run directory. Output
//! paths are excluded from the digest so reruns into different directories
//! stay byte-comparable.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{EnvConfig, FEATURE_LEN, INSTRUCTION_COUNT};
use crate::grpo::GrpoConfig;
use crate::policy::PolicyConfig;
use crate::response::ActionRegistry;
use crate::reward::RewardWeights;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config io: {0}")]
    Io(#[from] std::io::Error),
    #[error("config parse: {0}")]
    Parse(String),
    #[error("invalid override `{0}` (expected section.key=value)")]
    BadOverride(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunSection {
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection { seed: 0, out_dir: PathBuf::from("runs") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegistrySection {
    pub actions: Vec<String>,
}

impl Default for RegistrySection {
    fn default() -> Self {
        RegistrySection {
            actions: ActionRegistry::default().labels().to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SftSection {
    pub learning_rate: f64,
    pub epochs_phase1: usize,
    pub epochs_phase2: usize,
    pub batch_size: usize,
    /// Cap on step-level samples used in phase 2 (seeded subsample).
    pub step_subset: usize,
    /// Duplication factor for stop-labeled step samples in phase 2.
    pub stop_oversample: usize,
}

impl Default for SftSection {
    fn default() -> Self {
        SftSection {
            learning_rate: 0.08,
            epochs_phase1: 20,
            epochs_phase2: 50,
            batch_size: 16,
            step_subset: 500,
            stop_oversample: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteSection {
    pub train_easy: usize,
    pub train_medium: usize,
    pub train_hard: usize,
    pub eval_easy: usize,
    pub eval_medium: usize,
    pub eval_hard: usize,
}

impl Default for SuiteSection {
    fn default() -> Self {
        SuiteSection {
            train_easy: 12,
            train_medium: 10,
            train_hard: 8,
            eval_easy: 25,
            eval_medium: 25,
            eval_hard: 25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataSection {
    /// "mock" or "process".
    pub teacher: String,
    /// argv for the external line-oriented teacher adapter.
    pub teacher_cmd: Vec<String>,
    pub malform_rate: f64,
    pub concurrency: usize,
    pub backoff_ms: u64,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            teacher: "mock".into(),
            teacher_cmd: vec![],
            malform_rate: 0.05,
            concurrency: 4,
            backoff_ms: 250,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationSection {
    pub seeds: usize,
    pub updates: usize,
}

impl Default for AblationSection {
    fn default() -> Self {
        AblationSection { seeds: 5, updates: 400 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct RunConfig {
    pub run: RunSection,
    pub env: EnvConfig,
    pub policy: PolicyConfig,
    pub registry: RegistrySection,
    pub reward: RewardWeights,
    pub sft: SftSection,
    pub grpo: GrpoConfig,
    pub suites: SuiteSection,
    pub data: DataSection,
    pub metrics: crate::metrics::MetricsConfig,
    pub ablation: AblationSection,
}

impl RunConfig {
    /// Load from an optional TOML file, then apply `section.key=value`
    /// overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig, ConfigError> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)?,
            None => String::new(),
        };
        let mut table: toml::Table =
            text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        for item in overrides {
            apply_override(&mut table, item)?;
        }
        let config: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        Ok(config)
    }

    pub fn action_registry(&self) -> Result<ActionRegistry, ConfigError> {
        ActionRegistry::new(self.registry.actions.clone())
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Validate every module's invariants before side effects.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.action_registry()?;
        self.env.validate().map_err(ConfigError::Invalid)?;
        self.reward.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.grpo.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let p = &self.policy;
        if p.embed_dim == 0 || p.hidden_dim == 0 || p.max_len < 8 {
            return Err(ConfigError::Invalid(
                "policy dims must be positive (max_len >= 8)".into(),
            ));
        }
        if p.feature_len != FEATURE_LEN {
            return Err(ConfigError::Invalid(format!(
                "policy.feature_len must equal the environment feature length {FEATURE_LEN}"
            )));
        }
        if p.instruction_count != INSTRUCTION_COUNT {
            return Err(ConfigError::Invalid(format!(
                "policy.instruction_count must equal the instruction catalog size {INSTRUCTION_COUNT}"
            )));
        }
        if self.sft.epochs_phase1 == 0 || self.sft.epochs_phase2 == 0 || self.sft.batch_size == 0 {
            return Err(ConfigError::Invalid("sft epochs and batch_size must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.data.malform_rate) {
            return Err(ConfigError::Invalid("data.malform_rate must be in [0, 1]".into()));
        }
        if self.data.concurrency == 0 {
            return Err(ConfigError::Invalid("data.concurrency must be >= 1".into()));
        }
        if self.data.teacher != "mock" && self.data.teacher != "process" {
            return Err(ConfigError::Invalid("data.teacher must be `mock` or `process`".into()));
        }
        if self.data.teacher == "process" && self.data.teacher_cmd.is_empty() {
            return Err(ConfigError::Invalid("data.teacher_cmd required for process teacher".into()));
        }
        if self.metrics.resolution <= 0.0 || self.metrics.d_threshold <= 0.0 {
            return Err(ConfigError::Invalid("metrics values must be positive".into()));
        }
        if self.ablation.seeds == 0 {
            return Err(ConfigError::Invalid("ablation.seeds must be >= 1".into()));
        }
        Ok(())
    }

    /// Digest over everything except output paths.
    pub fn digest(&self) -> String {
        let mut semantic = self.clone();
        semantic.run.out_dir = PathBuf::new();
        let json = serde_json::to_string(&semantic).expect("config serializes");
        crate::digest_of(&json)
    }

    /// Run directory: out_dir/<digest>-s<seed>.
    pub fn run_dir(&self) -> PathBuf {
        self.run.out_dir.join(format!("{}-s{}", self.digest(), self.run.seed))
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.run_dir().join("manifests/cot.jsonl")
    }

    pub fn checkpoint_path(&self, stage: &str) -> PathBuf {
        self.run_dir().join(format!("checkpoints/{stage}.json"))
    }

    pub fn log_path(&self, name: &str) -> PathBuf {
        self.run_dir().join(format!("logs/{name}.jsonl"))
    }

    pub fn report_path(&self, name: &str) -> PathBuf {
        self.run_dir().join(format!("reports/{name}"))
    }
}

fn apply_override(table: &mut toml::Table, item: &str) -> Result<(), ConfigError> {
    let (key, value) = item
        .split_once('=')
        .ok_or_else(|| ConfigError::BadOverride(item.to_string()))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.is_empty() || parts.iter().any(|p| p.is_empty()) {
        return Err(ConfigError::BadOverride(item.to_string()));
    }
    // Parse the value through the TOML grammar; fall back to a string.
    let parsed: toml::Value = format!("v = {}", value.trim())
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.trim().to_string()));
    let mut cursor = table;
    for part in &parts[..parts.len() - 1] {
        cursor = cursor
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()))
            .as_table_mut()
            .ok_or_else(|| ConfigError::BadOverride(item.to_string()))?;
    }
    cursor.insert(parts[parts.len() - 1].to_string(), parsed);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let config = RunConfig::default();
        config.validate().unwrap();
        assert_eq!(config.grpo.group_size, 8);
        assert_eq!(config.grpo.samples_per_step, 5);
        assert_eq!(config.grpo.clip_epsilon, 0.2);
        assert_eq!(config.grpo.kl_beta, 0.04);
    }

    #[test]
    fn partial_toml_and_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.toml");
        std::fs::write(&path, "[grpo]\nlearning_rate = 0.01\n[run]\nseed = 9\n").unwrap();
        let config = RunConfig::load(
            Some(&path),
            &["grpo.max_updates=50".into(), "data.malform_rate=0.1".into()],
        )
        .unwrap();
        assert_eq!(config.run.seed, 9);
        assert_eq!(config.grpo.learning_rate, 0.01);
        assert_eq!(config.grpo.max_updates, 50);
        assert_eq!(config.data.malform_rate, 0.1);
        // Untouched sections keep defaults.
        assert_eq!(config.grpo.group_size, 8);
    }

    #[test]
    fn digest_ignores_out_dir() {
        let a = RunConfig::default();
        let mut b = RunConfig::default();
        b.run.out_dir = PathBuf::from("elsewhere");
        assert_eq!(a.digest(), b.digest());
        let mut c = RunConfig::default();
        c.grpo.kl_beta = 0.1;
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn validation_rejects_bad_fields() {
        let mut c = RunConfig::default();
        c.grpo.clip_epsilon = 1.5;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.registry.actions = vec!["walk".into()];
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.data.malform_rate = 2.0;
        assert!(c.validate().is_err());
    }
}
