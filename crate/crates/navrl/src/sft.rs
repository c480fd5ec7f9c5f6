//! Cold-start supervised alignment.
//!
//! Teacher-forced negative log-likelihood training on verified CoT records.
//! The pipeline runs it twice — first on episode/navigation summaries to fix
//! the output template, then on step-level records whose answers carry
//! executable commands — and the end-of-SFT snapshot becomes both the GRPO
//! initialization and the frozen reference policy.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy::{
    backward_sequence, forward_sequence, objective_gradient, DifferentiableLoss, GradTensors,
    ObservationContext, PolicyError, PolicyParams,
};
use crate::rng;
use crate::vocab::Vocabulary;

#[derive(Debug, Error, PartialEq)]
pub enum SftError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("target text is not tokenizable under the vocabulary: {0:?}")]
    Untokenizable(String),
    #[error("tokenized target has {got} tokens, max_len is {max}")]
    TargetTooLong { got: usize, max: usize },
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SftConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl SftConfig {
    pub fn validate(&self) -> Result<(), SftError> {
        if self.epochs < 1 {
            return Err(SftError::Config("epochs must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(SftError::Config("batch_size must be >= 1".into()));
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(SftError::Config("learning_rate must be finite and >= 0".into()));
        }
        Ok(())
    }
}

impl Default for SftConfig {
    fn default() -> Self {
        SftConfig { learning_rate: 0.05, epochs: 2, batch_size: 16, seed: 0 }
    }
}

/// One teacher-forced training pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SftExample {
    pub context: ObservationContext,
    pub tokens: Vec<usize>,
}

/// Tokenize a raw response text into a supervision target (with eos).
pub fn target_tokens(
    vocab: &Vocabulary,
    text: &str,
    max_len: usize,
) -> Result<Vec<usize>, SftError> {
    let tokens = vocab
        .tokenize_with_eos(text)
        .ok_or_else(|| SftError::Untokenizable(text.chars().take(60).collect()))?;
    if tokens.len() > max_len {
        return Err(SftError::TargetTooLong { got: tokens.len(), max: max_len });
    }
    Ok(tokens)
}

/// Mean negative log-likelihood over a batch.
pub fn nll_loss(params: &PolicyParams, batch: &[SftExample]) -> Result<f64, SftError> {
    if batch.is_empty() {
        return Err(SftError::EmptyDataset);
    }
    let mut total = 0.0;
    for ex in batch {
        total -= forward_sequence(params, &ex.context, &ex.tokens)?.logprob;
    }
    Ok(total / batch.len() as f64)
}

/// The batch NLL as a differentiable loss (for gradient descent and for
/// finite-difference checking).
pub struct NllLoss<'a>(pub &'a [SftExample]);

impl DifferentiableLoss for NllLoss<'_> {
    fn value(&self, params: &PolicyParams) -> Result<f64, PolicyError> {
        nll_loss(params, self.0).map_err(|e| match e {
            SftError::Policy(p) => p,
            other => PolicyError::Loss(other.to_string()),
        })
    }

    fn gradient(&self, params: &PolicyParams) -> Result<GradTensors, PolicyError> {
        let mut grad = GradTensors::zeros_like(params);
        let scale = 1.0 / self.0.len() as f64;
        for ex in self.0 {
            let fwd = forward_sequence(params, &ex.context, &ex.tokens)?;
            let dlogits: Vec<Vec<f64>> = ex
                .tokens
                .iter()
                .enumerate()
                .map(|(t, &tok)| {
                    let mut dz: Vec<f64> = fwd.probs[t].iter().map(|&p| p * scale).collect();
                    dz[tok] -= scale;
                    dz
                })
                .collect();
            backward_sequence(params, &fwd.enc, &ex.tokens, &dlogits, &mut grad);
        }
        Ok(grad)
    }
}

/// Seeded-shuffle minibatch gradient descent on the NLL. Returns the final
/// parameters; deterministic per config seed.
pub fn train_sft(
    init: &PolicyParams,
    examples: &[SftExample],
    config: &SftConfig,
) -> Result<PolicyParams, SftError> {
    config.validate()?;
    if examples.is_empty() {
        return Err(SftError::EmptyDataset);
    }
    let mut params = init.clone();
    let mut order: Vec<usize> = (0..examples.len()).collect();
    for epoch in 0..config.epochs {
        let mut shuffle_rng = rng::stream(config.seed, rng::purpose::SFT_SHUFFLE, epoch as u64);
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<SftExample> =
                chunk.iter().map(|&i| examples[i].clone()).collect();
            let grad = objective_gradient(&params, &NllLoss(&batch))?;
            params.axpy(-config.learning_rate, &grad);
        }
    }
    Ok(params)
}

/// Mean NLL per epoch, for training-curve logs.
pub fn epoch_nll(params: &PolicyParams, examples: &[SftExample]) -> Result<f64, SftError> {
    nll_loss(params, examples)
}

/// An immutable snapshot of the post-SFT policy. GRPO updates never touch
/// it; the KL penalty is computed against it.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePolicy {
    params: PolicyParams,
}

impl ReferencePolicy {
    pub fn params(&self) -> &PolicyParams {
        &self.params
    }
}

/// Deep-copy the parameters into a frozen reference handle.
pub fn freeze_reference(params: &PolicyParams) -> ReferencePolicy {
    ReferencePolicy { params: params.clone() }
}
