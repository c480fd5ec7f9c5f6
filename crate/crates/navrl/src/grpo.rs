//! Group-relative policy optimization.
//!
//! Each update samples N responses per context, scores them, centers the
//! rewards within the group (advantage = reward minus group mean, divided
//! by the population standard deviation plus epsilon), and ascends the
//! clipped surrogate objective
//!
//! ```text
//! J = mean_j [ min(r_j * A_j, clip(r_j, 1-eps, 1+eps) * A_j) - beta * KL_j ]
//! ```
//!
//! with sequence-level importance ratios r_j against the pre-step snapshot
//! and an exact per-step categorical KL against the frozen reference
//! policy, summed over the realized sequence. The vocabulary is small
//! enough that the exact KL costs nothing, which removes estimator noise.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy::{
    backward_sequence, forward_sequence, objective_gradient, sample_group, DifferentiableLoss,
    GradTensors, ObservationContext, PolicyError, PolicyParams,
};
use crate::response::ControlCommand;
use crate::reward::RewardBreakdown;
use crate::rng;
use crate::vocab::Vocabulary;

/// Reference probabilities below this floor are clamped before taking logs.
pub const KL_PROB_FLOOR: f64 = 1e-12;

/// Log-ratio magnitude beyond which the importance ratio is treated as an
/// overflow rather than silently saturating.
pub const RATIO_LOG_LIMIT: f64 = 80.0;

#[derive(Debug, Error, PartialEq)]
pub enum GrpoError {
    #[error("reward group needs at least 2 entries, got {0}")]
    GroupTooSmall(usize),
    #[error("importance log-ratio {0} exceeds {RATIO_LOG_LIMIT}")]
    RatioOverflow(f64),
    #[error("importance ratio inputs must be finite")]
    NonFiniteLogprob,
    #[error("KL step counts differ: {0} vs {1}")]
    StepCountMismatch(usize, usize),
    #[error("KL distributions at step {0} have different sizes")]
    DistributionSizeMismatch(usize),
    #[error("reference probability underflowed to zero where the policy is positive")]
    ReferenceUnderflow,
    #[error("group lists have inconsistent lengths")]
    InconsistentGroup,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("invalid config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GrpoConfig {
    /// Responses sampled per context (N).
    pub group_size: usize,
    /// Contexts sampled per optimization step.
    pub samples_per_step: usize,
    /// Clip width for the importance ratio.
    pub clip_epsilon: f64,
    /// KL penalty coefficient (beta).
    pub kl_beta: f64,
    /// Epsilon added to the advantage normalizer.
    pub norm_epsilon: f64,
    /// Gradient-ascent step size.
    pub learning_rate: f64,
    /// Number of optimization steps a training run performs.
    pub max_updates: usize,
}

impl GrpoConfig {
    pub fn validate(&self) -> Result<(), GrpoError> {
        if self.group_size < 2 {
            return Err(GrpoError::Config("group_size must be >= 2".into()));
        }
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return Err(GrpoError::Config("clip_epsilon must be in (0, 1)".into()));
        }
        if self.kl_beta < 0.0 {
            return Err(GrpoError::Config("kl_beta must be >= 0".into()));
        }
        if self.norm_epsilon <= 0.0 {
            return Err(GrpoError::Config("norm_epsilon must be > 0".into()));
        }
        if self.samples_per_step == 0 {
            return Err(GrpoError::Config("samples_per_step must be >= 1".into()));
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(GrpoError::Config("learning_rate must be finite and >= 0".into()));
        }
        Ok(())
    }
}

impl Default for GrpoConfig {
    fn default() -> Self {
        GrpoConfig {
            group_size: 8,
            samples_per_step: 5,
            clip_epsilon: 0.2,
            kl_beta: 0.04,
            norm_epsilon: 1e-8,
            learning_rate: 0.05,
            max_updates: 1000,
        }
    }
}

/// Normalized advantages per the group-relative rule: center by the group
/// mean, divide by population standard deviation plus epsilon. All-equal
/// rewards yield all-zero advantages.
pub fn compute_advantages(rewards: &[f64], norm_epsilon: f64) -> Result<Vec<f64>, GrpoError> {
    if rewards.len() < 2 {
        return Err(GrpoError::GroupTooSmall(rewards.len()));
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let centered: Vec<f64> = rewards.iter().map(|r| r - mean).collect();
    let variance = centered.iter().map(|a| a * a).sum::<f64>() / n;
    let sigma = variance.sqrt();
    Ok(centered.into_iter().map(|a| a / (sigma + norm_epsilon)).collect())
}

/// exp(new - old), computed in log space; errors on |log ratio| > 80.
pub fn importance_ratio(new_logprob: f64, old_logprob: f64) -> Result<f64, GrpoError> {
    if !new_logprob.is_finite() || !old_logprob.is_finite() {
        return Err(GrpoError::NonFiniteLogprob);
    }
    let diff = new_logprob - old_logprob;
    if diff.abs() > RATIO_LOG_LIMIT {
        return Err(GrpoError::RatioOverflow(diff));
    }
    Ok(diff.exp())
}

/// min(ratio * adv, clip(ratio, 1-eps, 1+eps) * adv).
pub fn clipped_term(ratio: f64, advantage: f64, clip_epsilon: f64) -> f64 {
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - clip_epsilon, 1.0 + clip_epsilon) * advantage;
    unclipped.min(clipped)
}

/// Exact categorical KL summed over the steps of a realized sequence:
/// sum_t sum_k p_t[k] * (ln p_t[k] - ln q_t[k]).
pub fn kl_penalty(theta_dists: &[Vec<f64>], ref_dists: &[Vec<f64>]) -> Result<f64, GrpoError> {
    if theta_dists.len() != ref_dists.len() {
        return Err(GrpoError::StepCountMismatch(theta_dists.len(), ref_dists.len()));
    }
    let mut total = 0.0;
    for (t, (p, q)) in theta_dists.iter().zip(ref_dists).enumerate() {
        if p.len() != q.len() {
            return Err(GrpoError::DistributionSizeMismatch(t));
        }
        total += kl_step(p, q)?;
    }
    Ok(total)
}

fn kl_step(p: &[f64], q: &[f64]) -> Result<f64, GrpoError> {
    let mut d = 0.0;
    for (&pk, &qk) in p.iter().zip(q) {
        if pk <= 0.0 {
            continue;
        }
        if qk == 0.0 {
            return Err(GrpoError::ReferenceUnderflow);
        }
        d += pk * (pk.ln() - qk.max(KL_PROB_FLOOR).ln());
    }
    Ok(d)
}

/// N sampled responses for one context, with rewards, sampling-time
/// log-probabilities, and normalized advantages.
#[derive(Debug, Clone)]
pub struct ResponseGroup {
    pub context: ObservationContext,
    pub responses: Vec<crate::policy::SampledResponse>,
    pub rewards: Vec<RewardBreakdown>,
    pub old_logprobs: Vec<f64>,
    pub advantages: Vec<f64>,
}

impl ResponseGroup {
    pub fn assemble(
        context: ObservationContext,
        responses: Vec<crate::policy::SampledResponse>,
        rewards: Vec<RewardBreakdown>,
        norm_epsilon: f64,
    ) -> Result<Self, GrpoError> {
        if responses.len() != rewards.len() {
            return Err(GrpoError::InconsistentGroup);
        }
        let old_logprobs: Vec<f64> = responses.iter().map(|r| r.logprob).collect();
        let totals: Vec<f64> = rewards.iter().map(|r| r.total).collect();
        let advantages = compute_advantages(&totals, norm_epsilon)?;
        Ok(ResponseGroup { context, responses, rewards, old_logprobs, advantages })
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

struct GroupEval {
    objective: f64,
    mean_kl: f64,
    clipped: usize,
}

fn eval_group(
    params: &PolicyParams,
    ref_params: &PolicyParams,
    group: &ResponseGroup,
    config: &GrpoConfig,
) -> Result<GroupEval, GrpoError> {
    let g = group.len();
    if g < 2 || group.old_logprobs.len() != g || group.advantages.len() != g {
        return Err(GrpoError::InconsistentGroup);
    }
    let mut objective = 0.0;
    let mut kl_total = 0.0;
    let mut clipped = 0;
    for j in 0..g {
        let tokens = &group.responses[j].tokens;
        let fwd = forward_sequence(params, &group.context, tokens)?;
        let ratio = importance_ratio(fwd.logprob, group.old_logprobs[j])?;
        if ratio < 1.0 - config.clip_epsilon || ratio > 1.0 + config.clip_epsilon {
            clipped += 1;
        }
        let ref_fwd = forward_sequence(ref_params, &group.context, tokens)?;
        let kl = kl_penalty(&fwd.probs, &ref_fwd.probs)?;
        objective += clipped_term(ratio, group.advantages[j], config.clip_epsilon)
            - config.kl_beta * kl;
        kl_total += kl;
    }
    Ok(GroupEval {
        objective: objective / g as f64,
        mean_kl: kl_total / g as f64,
        clipped,
    })
}

/// The clipped, KL-regularized objective for one group; higher is better.
pub fn grpo_objective(
    group: &ResponseGroup,
    params: &PolicyParams,
    ref_params: &PolicyParams,
    config: &GrpoConfig,
) -> Result<f64, GrpoError> {
    Ok(eval_group(params, ref_params, group, config)?.objective)
}

/// The GRPO objective over a set of groups as a differentiable loss
/// (mean of per-group objectives). The gradient is exact: the policy-term
/// derivative follows the branch the min selects, and the KL derivative is
/// the closed-form softmax expression.
pub struct GrpoLoss<'a> {
    pub groups: &'a [ResponseGroup],
    pub ref_params: &'a PolicyParams,
    pub config: &'a GrpoConfig,
}

impl GrpoLoss<'_> {
    fn value_inner(&self, params: &PolicyParams) -> Result<f64, GrpoError> {
        let mut total = 0.0;
        for group in self.groups {
            total += grpo_objective(group, params, self.ref_params, self.config)?;
        }
        Ok(total / self.groups.len() as f64)
    }

    fn gradient_inner(&self, params: &PolicyParams) -> Result<GradTensors, GrpoError> {
        let mut grad = GradTensors::zeros_like(params);
        let n_groups = self.groups.len() as f64;
        let beta = self.config.kl_beta;
        for group in self.groups {
            let scale = 1.0 / (n_groups * group.len() as f64);
            for j in 0..group.len() {
                let tokens = &group.responses[j].tokens;
                let fwd = forward_sequence(params, &group.context, tokens)?;
                let ratio = importance_ratio(fwd.logprob, group.old_logprobs[j])?;
                let adv = group.advantages[j];
                let unclipped = ratio * adv;
                let clipped =
                    ratio.clamp(1.0 - self.config.clip_epsilon, 1.0 + self.config.clip_epsilon)
                        * adv;
                // The min's derivative: the unclipped branch when selected
                // (ties included; inside the clip window both branches have
                // the same derivative), zero otherwise.
                let pg_coeff = if unclipped <= clipped { adv * ratio } else { 0.0 };
                let ref_fwd = if beta > 0.0 {
                    Some(forward_sequence(self.ref_params, &group.context, tokens)?)
                } else {
                    None
                };
                let mut dlogits: Vec<Vec<f64>> = Vec::with_capacity(tokens.len());
                for (t, &tok) in tokens.iter().enumerate() {
                    let p = &fwd.probs[t];
                    let mut dz: Vec<f64> = p.iter().map(|&pk| -pg_coeff * pk).collect();
                    dz[tok] += pg_coeff;
                    if let Some(ref_fwd) = &ref_fwd {
                        let q = &ref_fwd.probs[t];
                        let mut d_t = 0.0;
                        for (&pk, &qk) in p.iter().zip(q) {
                            if pk > 0.0 {
                                if qk == 0.0 {
                                    return Err(GrpoError::ReferenceUnderflow);
                                }
                                d_t += pk * (pk.ln() - qk.max(KL_PROB_FLOOR).ln());
                            }
                        }
                        for (k, dzk) in dz.iter_mut().enumerate() {
                            let pk = p[k];
                            if pk > 0.0 {
                                let qk = q[k].max(KL_PROB_FLOOR);
                                *dzk -= beta * pk * (pk.ln() - qk.ln() - d_t);
                            }
                        }
                    }
                    for dzk in dz.iter_mut() {
                        *dzk *= scale;
                    }
                    dlogits.push(dz);
                }
                backward_sequence(params, &fwd.enc, tokens, &dlogits, &mut grad);
            }
        }
        Ok(grad)
    }
}

impl DifferentiableLoss for GrpoLoss<'_> {
    fn value(&self, params: &PolicyParams) -> Result<f64, PolicyError> {
        self.value_inner(params).map_err(grpo_to_policy_err)
    }

    fn gradient(&self, params: &PolicyParams) -> Result<GradTensors, PolicyError> {
        self.gradient_inner(params).map_err(grpo_to_policy_err)
    }
}

fn grpo_to_policy_err(e: GrpoError) -> PolicyError {
    match e {
        GrpoError::Policy(p) => p,
        other => PolicyError::Loss(other.to_string()),
    }
}

/// Scalar summary of one optimization step, evaluated at the pre-update
/// snapshot (so step 0 of a run started at the reference reports zero KL).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdateReport {
    pub objective_value: f64,
    pub mean_reward: f64,
    pub mean_reward_movement: f64,
    pub mean_reward_action: f64,
    pub mean_reward_format: f64,
    pub mean_kl: f64,
    /// Fraction of responses whose ratio fell outside the clip window.
    pub clip_fraction: f64,
    pub grad_norm: f64,
}

/// One sampled training problem: the observation the policy conditions on
/// and the ground-truth command rewards are computed against.
#[derive(Debug, Clone)]
pub struct TaskInstance {
    pub context: ObservationContext,
    pub target: ControlCommand,
}

/// A source of training contexts and a reward rule for responses to them.
pub trait GrpoTask {
    fn draw(&self, rng: &mut ChaCha8Rng) -> TaskInstance;
    fn score(&self, raw: &str, instance: &TaskInstance) -> RewardBreakdown;
}

/// One GRPO optimization step: sample contexts and groups from the current
/// snapshot, score, compute advantages, and take one gradient-ascent step
/// on the averaged objective. Deterministic for a fixed seed.
pub fn grpo_step<T: GrpoTask>(
    params: &PolicyParams,
    ref_params: &PolicyParams,
    vocab: &Vocabulary,
    task: &T,
    config: &GrpoConfig,
    step_seed: u64,
) -> Result<(PolicyParams, UpdateReport), GrpoError> {
    config.validate()?;
    let mut groups = Vec::with_capacity(config.samples_per_step);
    for k in 0..config.samples_per_step {
        let mut crng = rng::stream(step_seed, rng::purpose::GRPO_CONTEXT, k as u64);
        let instance = task.draw(&mut crng);
        let group_seed = rng::mix(step_seed, rng::purpose::GRPO_GROUP, k as u64);
        let responses =
            sample_group(params, vocab, &instance.context, config.group_size, group_seed)?;
        let rewards: Vec<RewardBreakdown> =
            responses.iter().map(|r| task.score(&r.text, &instance)).collect();
        groups.push(ResponseGroup::assemble(
            instance.context,
            responses,
            rewards,
            config.norm_epsilon,
        )?);
    }

    let mut objective = 0.0;
    let mut mean_kl = 0.0;
    let mut clipped = 0usize;
    for group in &groups {
        let eval = eval_group(params, ref_params, group, config)?;
        objective += eval.objective;
        mean_kl += eval.mean_kl;
        clipped += eval.clipped;
    }
    let n_groups = groups.len() as f64;
    objective /= n_groups;
    mean_kl /= n_groups;
    let n_responses: usize = groups.iter().map(|g| g.len()).sum();

    let mut sums = [0.0f64; 4];
    for group in &groups {
        for r in &group.rewards {
            sums[0] += r.total;
            sums[1] += r.r_movement;
            sums[2] += r.r_action;
            sums[3] += r.r_format;
        }
    }
    let denom = n_responses as f64;

    let loss = GrpoLoss { groups: &groups, ref_params, config };
    let grad = objective_gradient(params, &loss)?;
    let grad_norm = grad.l2_norm();
    let mut new_params = params.clone();
    new_params.axpy(config.learning_rate, &grad);
    if !new_params.all_finite() {
        return Err(GrpoError::NonFinite("updated parameters"));
    }

    let report = UpdateReport {
        objective_value: objective,
        mean_reward: sums[0] / denom,
        mean_reward_movement: sums[1] / denom,
        mean_reward_action: sums[2] / denom,
        mean_reward_format: sums[3] / denom,
        mean_kl,
        clip_fraction: clipped as f64 / denom,
        grad_norm,
    };
    Ok((new_params, report))
}

/// Mean composite reward of single responses sampled at fixed probe
/// contexts; the before/after measurement training claims are made on.
pub fn mean_probe_reward<T: GrpoTask>(
    params: &PolicyParams,
    vocab: &Vocabulary,
    task: &T,
    n: usize,
    seed: u64,
) -> Result<f64, GrpoError> {
    assert!(n > 0);
    let mut total = 0.0;
    for k in 0..n {
        let mut crng = rng::stream(seed, 0x9206e, k as u64);
        let instance = task.draw(&mut crng);
        let mut srng = rng::stream(seed, 0x9207e, k as u64);
        let response = crate::policy::sample_one(params, vocab, &instance.context, &mut srng)?;
        total += task.score(&response.text, &instance).total;
    }
    Ok(total / n as f64)
}

/// One line of the training log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingLogRecord {
    pub step: usize,
    pub objective_value: f64,
    pub mean_reward: f64,
    pub mean_reward_movement: f64,
    pub mean_reward_action: f64,
    pub mean_reward_format: f64,
    pub mean_kl: f64,
    pub clip_fraction: f64,
    pub grad_norm: f64,
    pub wall_ms: u64,
}

impl TrainingLogRecord {
    pub fn from_report(step: usize, report: &UpdateReport, wall_ms: u64) -> Self {
        TrainingLogRecord {
            step,
            objective_value: report.objective_value,
            mean_reward: report.mean_reward,
            mean_reward_movement: report.mean_reward_movement,
            mean_reward_action: report.mean_reward_action,
            mean_reward_format: report.mean_reward_format,
            mean_kl: report.mean_kl,
            clip_fraction: report.clip_fraction,
            grad_norm: report.grad_norm,
            wall_ms,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::PolicyConfig;
    use crate::response::ActionRegistry;
    use crate::reward::RewardBreakdown;

    #[test]
    fn advantages_hand_cases() {
        let a = compute_advantages(&[1.0, 0.0, 1.0, 0.0], 1e-8).unwrap();
        let expect = 0.5 / (0.5 + 1e-8);
        for (got, want) in a.iter().zip([expect, -expect, expect, -expect]) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }

        let b = compute_advantages(&[3.0, 1.0], 1e-8).unwrap();
        assert!((b[0] - 1.0).abs() < 1e-7);
        assert!((b[1] + 1.0).abs() < 1e-7);

        let c = compute_advantages(&[2.5; 6], 1e-8).unwrap();
        assert!(c.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn advantages_reject_tiny_groups() {
        assert_eq!(compute_advantages(&[1.0], 1e-8).unwrap_err(), GrpoError::GroupTooSmall(1));
    }

    #[test]
    fn ratio_identities() {
        assert_eq!(importance_ratio(-3.0, -3.0).unwrap(), 1.0);
        let two = importance_ratio(-1.0 + 2.0f64.ln(), -1.0).unwrap();
        assert!((two - 2.0).abs() < 1e-12);
        let quarter = importance_ratio(-1.0 - 4.0f64.ln(), -1.0).unwrap();
        assert!((quarter - 0.25).abs() < 1e-12);
        assert!(matches!(importance_ratio(0.0, -100.0), Err(GrpoError::RatioOverflow(_))));
    }

    #[test]
    fn clipped_term_cases() {
        assert_eq!(clipped_term(1.0, 0.7, 0.2), 0.7);
        assert!((clipped_term(1.5, 1.0, 0.2) - 1.2).abs() < 1e-15);
        // Negative advantage: unclipped = -0.5, clipped = 0.8 * -1 = -0.8,
        // min = -0.8.
        assert!((clipped_term(0.5, -1.0, 0.2) + 0.8).abs() < 1e-15);
    }

    #[test]
    fn kl_identities() {
        let p = vec![vec![0.5, 0.5]];
        let q = vec![vec![0.9, 0.1]];
        let kl = kl_penalty(&p, &q).unwrap();
        let expect = 0.5 * (0.5f64 / 0.9).ln() + 0.5 * (0.5f64 / 0.1).ln();
        assert!((kl - expect).abs() < 1e-12);
        assert!((kl - 0.5108).abs() < 1e-3);
        assert_eq!(kl_penalty(&p, &p.clone()).unwrap(), 0.0);
    }

    #[test]
    fn kl_rejects_mismatched_steps() {
        let p = vec![vec![0.5, 0.5], vec![0.5, 0.5]];
        let q = vec![vec![0.5, 0.5]];
        assert!(matches!(kl_penalty(&p, &q), Err(GrpoError::StepCountMismatch(2, 1))));
    }

    fn bandit_setup() -> (PolicyParams, Vocabulary, ObservationContext) {
        let vocab = Vocabulary::standard(&ActionRegistry::default());
        let cfg = PolicyConfig::default();
        let params = PolicyParams::init(cfg, vocab.len(), 11);
        let ctx = ObservationContext::new(vec![0.5; cfg.feature_len], 0);
        (params, vocab, ctx)
    }

    struct BanditTask {
        ctx: ObservationContext,
    }

    impl GrpoTask for BanditTask {
        fn draw(&self, _rng: &mut ChaCha8Rng) -> TaskInstance {
            TaskInstance { context: self.ctx.clone(), target: ControlCommand::stop() }
        }

        fn score(&self, raw: &str, _instance: &TaskInstance) -> RewardBreakdown {
            let r = if raw.starts_with("<think>") { 1.0 } else { 0.0 };
            RewardBreakdown { r_movement: 0.0, r_action: 0.0, r_format: r, total: r }
        }
    }

    #[test]
    fn objective_zero_at_sampling_snapshot_with_zero_beta() {
        let (params, vocab, ctx) = bandit_setup();
        let config = GrpoConfig { kl_beta: 0.0, ..GrpoConfig::default() };
        let responses = sample_group(&params, &vocab, &ctx, 8, 5).unwrap();
        // 0/1 rewards on a size-8 group make the advantage sum exactly zero.
        let rewards: Vec<RewardBreakdown> = responses
            .iter()
            .enumerate()
            .map(|(j, _)| {
                let r = if j % 2 == 0 { 1.0 } else { 0.0 };
                RewardBreakdown { r_movement: 0.0, r_action: 0.0, r_format: r, total: r }
            })
            .collect();
        let group = ResponseGroup::assemble(ctx, responses, rewards, 1e-8).unwrap();
        let obj = grpo_objective(&group, &params, &params, &config).unwrap();
        assert!(obj.abs() < 1e-10, "objective at snapshot = {obj}");
    }

    #[test]
    fn zero_advantages_give_zero_objective() {
        let (params, vocab, ctx) = bandit_setup();
        let config = GrpoConfig { kl_beta: 0.0, ..GrpoConfig::default() };
        let responses = sample_group(&params, &vocab, &ctx, 4, 6).unwrap();
        let rewards = vec![
            RewardBreakdown { r_movement: 0.0, r_action: 0.0, r_format: 1.0, total: 1.0 };
            4
        ];
        let group = ResponseGroup::assemble(ctx, responses, rewards, 1e-8).unwrap();
        let obj = grpo_objective(&group, &params, &params, &config).unwrap();
        assert_eq!(obj, 0.0);
    }

    #[test]
    fn step_with_zero_learning_rate_keeps_params() {
        let (params, vocab, ctx) = bandit_setup();
        let config = GrpoConfig {
            learning_rate: 0.0,
            samples_per_step: 2,
            group_size: 4,
            ..GrpoConfig::default()
        };
        let task = BanditTask { ctx };
        let (new_params, report) = grpo_step(&params, &params, &vocab, &task, &config, 3).unwrap();
        assert_eq!(new_params, params);
        assert!(report.grad_norm.is_finite());
        // At the sampling snapshot every ratio is exactly 1: nothing clips.
        assert_eq!(report.clip_fraction, 0.0);
        assert!(report.mean_kl.abs() < 1e-12);
    }

    #[test]
    fn step_is_deterministic() {
        let (params, vocab, ctx) = bandit_setup();
        let config =
            GrpoConfig { samples_per_step: 2, group_size: 4, ..GrpoConfig::default() };
        let task = BanditTask { ctx };
        let (a, ra) = grpo_step(&params, &params, &vocab, &task, &config, 9).unwrap();
        let (b, rb) = grpo_step(&params, &params, &vocab, &task, &config, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
    }

    #[test]
    fn reward_shift_invariance_of_objective_and_gradient() {
        let (params, vocab, ctx) = bandit_setup();
        let config = GrpoConfig::default();
        let responses = sample_group(&params, &vocab, &ctx, 6, 8).unwrap();
        let base: Vec<f64> = (0..6).map(|j| (j % 3) as f64).collect();
        let mk_group = |shift: f64| {
            let rewards: Vec<RewardBreakdown> = base
                .iter()
                .map(|&r| RewardBreakdown {
                    r_movement: 0.0,
                    r_action: 0.0,
                    r_format: 0.0,
                    total: r + shift,
                })
                .collect();
            ResponseGroup::assemble(ctx.clone(), responses.clone(), rewards, 1e-8).unwrap()
        };
        let g0 = mk_group(0.0);
        let g5 = mk_group(5.0);
        for (a, b) in g0.advantages.iter().zip(&g5.advantages) {
            assert!((a - b).abs() < 1e-12);
        }
        let groups0 = [g0];
        let groups5 = [g5];
        let l0 = GrpoLoss { groups: &groups0, ref_params: &params, config: &config };
        let l5 = GrpoLoss { groups: &groups5, ref_params: &params, config: &config };
        let v0 = l0.value(&params).unwrap();
        let v5 = l5.value(&params).unwrap();
        assert!((v0 - v5).abs() < 1e-12);
        let d0 = l0.gradient(&params).unwrap().to_flat();
        let d5 = l5.gradient(&params).unwrap().to_flat();
        for (a, b) in d0.iter().zip(&d5) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn bandit_toy_learns() {
        // Single-context task: reward 1 iff the response starts with the
        // think-open token. 200 steps of GRPO must raise the mean reward.
        let vocab = Vocabulary::standard(&ActionRegistry::default());
        let cfg = PolicyConfig { max_len: 4, ..PolicyConfig::default() };
        let mut params = PolicyParams::init(cfg, vocab.len(), 77);
        let ref_params = params.clone();
        let ctx = ObservationContext::new(vec![0.25; cfg.feature_len], 0);
        let task = BanditTask { ctx };
        let config = GrpoConfig {
            group_size: 8,
            samples_per_step: 1,
            learning_rate: 0.4,
            kl_beta: 0.0,
            max_updates: 200,
            ..GrpoConfig::default()
        };
        let mut first = None;
        let mut last = 0.0;
        for step in 0..config.max_updates {
            let (next, report) =
                grpo_step(&params, &ref_params, &vocab, &task, &config, 1000 + step as u64)
                    .unwrap();
            params = next;
            if first.is_none() {
                first = Some(report.mean_reward);
            }
            last = report.mean_reward;
        }
        let first = first.unwrap();
        assert!(
            last > first + 0.2,
            "bandit mean reward did not improve: {first} -> {last}"
        );
    }

    #[test]
    fn assemble_checks_lengths() {
        let (params, vocab, ctx) = bandit_setup();
        let responses = sample_group(&params, &vocab, &ctx, 3, 2).unwrap();
        let rewards = vec![RewardBreakdown::zero(); 2];
        assert!(matches!(
            ResponseGroup::assemble(ctx, responses, rewards, 1e-8),
            Err(GrpoError::InconsistentGroup)
        ));
    }
}
