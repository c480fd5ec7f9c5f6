//! navrl: a reasoning-then-execution navigation RL testbed.
//!
//! A tiny autoregressive token policy emits structured
//! `<think>...</think><answer>...</answer>` responses that parse into
//! continuous control commands. Training is two-stage: supervised alignment
//! on rule-verified chain-of-thought records, then group-relative policy
//! optimization with movement/action/format rewards and a KL leash to the
//! frozen SFT snapshot. Everything runs deterministically from a single
//! seed: the arenas, the oracle controller, the mock teacher, sampling,
//! and both training stages.

pub mod data_engine;
pub mod env;
pub mod grpo;
pub mod metrics;
pub mod policy;
pub mod response;
pub mod reward;
pub mod rng;
pub mod sft;
pub mod task;
pub mod vocab;

pub mod checkpoint;
pub mod commands;
pub mod config;

pub use grpo::{GrpoConfig, GrpoTask, ResponseGroup, UpdateReport};
pub use policy::{ObservationContext, PolicyConfig, PolicyParams, SampledResponse};
pub use response::{
    check_format, parse_response, serialize_response, ActionLabel, ActionRegistry,
    ControlCommand, FailureReason, FormatVerdict, ParsedResponse, VelocityLimits,
};
pub use reward::{
    action_reward, composite_reward, format_reward, movement_reward, RewardBreakdown,
    RewardWeights, VelocityTriple,
};
pub use sft::{freeze_reference, train_sft, ReferencePolicy, SftConfig};
pub use vocab::Vocabulary;

use sha2::{Digest, Sha256};

/// Short hex digest used for vocab/registry/config fingerprints.
pub fn digest_of(text: &str) -> String {
    let hash = Sha256::digest(text.as_bytes());
    hash.iter().take(6).map(|b| format!("{b:02x}")).collect()
}
