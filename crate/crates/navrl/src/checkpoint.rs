//! Versioned parameter checkpoints.
//!
//! A checkpoint is a flat named-tensor container with dimensions, the run
//! seed, and digests of the vocabulary and action registry it was built
//! against. Loading verifies dimensions; evaluation additionally refuses a
//! checkpoint whose digests do not match the current config, since silent
//! vocabulary drift would corrupt every metric.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy::{Mat, PolicyConfig, PolicyParams};
use crate::response::ActionRegistry;
use crate::vocab::Vocabulary;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checkpoint tensor `{0}` missing or misshapen")]
    Tensor(String),
    #[error("checkpoint was built for a different {0} (digest mismatch)")]
    DigestMismatch(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    /// Which pipeline stage produced this ("sft", "grpo", "init").
    pub stage: String,
    pub seed: u64,
    pub policy_config: PolicyConfig,
    pub vocab_size: usize,
    pub vocab_digest: String,
    pub registry_digest: String,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn from_params(
        params: &PolicyParams,
        vocab: &Vocabulary,
        registry: &ActionRegistry,
        stage: &str,
        seed: u64,
    ) -> Self {
        let t = |name: &str, m: &Mat| NamedTensor {
            name: name.to_string(),
            rows: m.rows,
            cols: m.cols,
            data: m.data.clone(),
        };
        Checkpoint {
            version: CHECKPOINT_VERSION,
            stage: stage.to_string(),
            seed,
            policy_config: params.config,
            vocab_size: params.vocab_size(),
            vocab_digest: vocab.digest(),
            registry_digest: registry.digest(),
            tensors: vec![
                t("token_embedding", &params.token_embedding),
                t("context_projection", &params.context_projection),
                t("output_weights", &params.output_weights),
                NamedTensor {
                    name: "output_bias".into(),
                    rows: 1,
                    cols: params.output_bias.len(),
                    data: params.output_bias.clone(),
                },
            ],
        }
    }

    fn tensor(&self, name: &str, rows: usize, cols: usize) -> Result<Mat, CheckpointError> {
        let t = self
            .tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| CheckpointError::Tensor(name.to_string()))?;
        if t.rows != rows || t.cols != cols || t.data.len() != rows * cols {
            return Err(CheckpointError::Tensor(name.to_string()));
        }
        Ok(Mat { rows, cols, data: t.data.clone() })
    }

    pub fn to_params(&self) -> Result<PolicyParams, CheckpointError> {
        if self.version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version(self.version));
        }
        let cfg = self.policy_config;
        Ok(PolicyParams {
            config: cfg,
            token_embedding: self.tensor("token_embedding", self.vocab_size, cfg.embed_dim)?,
            context_projection: self.tensor(
                "context_projection",
                cfg.context_dim(),
                cfg.hidden_dim,
            )?,
            output_weights: self.tensor("output_weights", cfg.step_input_dim(), self.vocab_size)?,
            output_bias: self.tensor("output_bias", 1, self.vocab_size)?.data,
        })
    }

    /// Refuse checkpoints whose vocabulary or registry digests differ from
    /// the active configuration.
    pub fn check_compat(
        &self,
        vocab: &Vocabulary,
        registry: &ActionRegistry,
    ) -> Result<(), CheckpointError> {
        if self.vocab_digest != vocab.digest() {
            return Err(CheckpointError::DigestMismatch("vocabulary"));
        }
        if self.registry_digest != registry.digest() {
            return Err(CheckpointError::DigestMismatch("action registry"));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}
