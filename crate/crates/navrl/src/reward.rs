//! The three reward components and their weighted composite.
//!
//! Movement reward is the cosine similarity between predicted and
//! ground-truth velocity vectors, action reward is an exact label match,
//! and format reward is the strict template check. A response that fails
//! the format check earns zero on all three components: the movement and
//! action terms presuppose a parsed command.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::response::{
    check_format, parse_response, ActionLabel, ActionRegistry, ControlCommand, VelocityLimits,
};

/// Below this L2 norm a velocity vector is treated as zero for the cosine.
pub const ZERO_NORM_THRESHOLD: f64 = 1e-9;

/// The continuous part of a command.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityTriple {
    pub vx: f64,
    pub vy: f64,
    pub wyaw: f64,
}

impl VelocityTriple {
    pub fn new(vx: f64, vy: f64, wyaw: f64) -> Self {
        VelocityTriple { vx, vy, wyaw }
    }

    pub fn norm(&self) -> f64 {
        (self.vx * self.vx + self.vy * self.vy + self.wyaw * self.wyaw).sqrt()
    }

    pub fn dot(&self, other: &VelocityTriple) -> f64 {
        self.vx * other.vx + self.vy * other.vy + self.wyaw * other.wyaw
    }
}

impl From<&ControlCommand> for VelocityTriple {
    fn from(c: &ControlCommand) -> Self {
        VelocityTriple::new(c.vx, c.vy, c.wyaw)
    }
}

/// Cosine similarity between predicted and ground-truth velocities.
///
/// The cosine is undefined at zero norm; a zero target is a legitimate stop
/// and must not be punished, so both-zero scores 1 and exactly-one-zero
/// scores 0.
pub fn movement_reward(pred: &VelocityTriple, gt: &VelocityTriple) -> f64 {
    let np = pred.norm();
    let ng = gt.norm();
    let pred_zero = np < ZERO_NORM_THRESHOLD;
    let gt_zero = ng < ZERO_NORM_THRESHOLD;
    match (pred_zero, gt_zero) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        (false, false) => (pred.dot(gt) / (np * ng)).clamp(-1.0, 1.0),
    }
}

/// 1 if the predicted label equals the ground truth, else 0.
pub fn action_reward(pred: &ActionLabel, gt: &ActionLabel) -> f64 {
    if pred == gt {
        1.0
    } else {
        0.0
    }
}

/// 1 iff the raw text passes the strict format check.
pub fn format_reward(raw: &str, registry: &ActionRegistry, limits: VelocityLimits) -> f64 {
    if check_format(raw, registry, limits).valid {
        1.0
    } else {
        0.0
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum RewardConfigError {
    #[error("reward weights must be nonnegative")]
    NegativeWeight,
    #[error("reward weights must not all be zero")]
    AllZero,
}

/// Nonnegative weights for the three components; at least one positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardWeights {
    pub w_movement: f64,
    pub w_action: f64,
    pub w_format: f64,
}

impl RewardWeights {
    pub fn new(w_movement: f64, w_action: f64, w_format: f64) -> Result<Self, RewardConfigError> {
        let w = RewardWeights { w_movement, w_action, w_format };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), RewardConfigError> {
        if self.w_movement < 0.0 || self.w_action < 0.0 || self.w_format < 0.0 {
            return Err(RewardConfigError::NegativeWeight);
        }
        if self.w_movement + self.w_action + self.w_format <= 0.0 {
            return Err(RewardConfigError::AllZero);
        }
        Ok(())
    }

    /// Mask used by the ablation sweep: zero out deselected components.
    /// An all-false mask is the SFT-only row and is handled upstream, so
    /// the weight-validity rule is relaxed here.
    pub fn masked(&self, movement: bool, action: bool, format: bool) -> RewardWeights {
        RewardWeights {
            w_movement: if movement { self.w_movement } else { 0.0 },
            w_action: if action { self.w_action } else { 0.0 },
            w_format: if format { self.w_format } else { 0.0 },
        }
    }
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights { w_movement: 1.0, w_action: 1.0, w_format: 1.0 }
    }
}

/// Per-response reward decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_movement: f64,
    pub r_action: f64,
    pub r_format: f64,
    pub total: f64,
}

impl RewardBreakdown {
    pub fn zero() -> Self {
        RewardBreakdown { r_movement: 0.0, r_action: 0.0, r_format: 0.0, total: 0.0 }
    }
}

/// Parse and score a raw response against a ground-truth command.
///
/// On parse failure every component is zero. Pure and deterministic.
pub fn composite_reward(
    raw: &str,
    gt: &ControlCommand,
    weights: RewardWeights,
    registry: &ActionRegistry,
    limits: VelocityLimits,
) -> RewardBreakdown {
    let parsed = match parse_response(raw, registry, limits) {
        Ok(p) => p,
        Err(_) => return RewardBreakdown::zero(),
    };
    let r_movement = movement_reward(&(&parsed.command).into(), &gt.into());
    let r_action = action_reward(&parsed.command.action, &gt.action);
    let r_format = 1.0;
    RewardBreakdown {
        r_movement,
        r_action,
        r_format,
        total: weights.w_movement * r_movement
            + weights.w_action * r_action
            + weights.w_format * r_format,
    }
}
