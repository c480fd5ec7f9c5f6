//! Autoregressive categorical token policy with exact gradients.
//!
//! The network is deliberately shallow so that every gradient used in
//! training can be written down in closed form and checked against finite
//! differences:
//!
//! ```text
//! h       = tanh(Wc' * [features ; onehot(instruction)])
//! x_t     = [h ; embed(prev token) ; onehot(phase t)]
//! logits  = Wo' * x_t + b
//! p_t     = softmax(logits)
//! ```
//!
//! The context encoding `h` is shared across all steps of a response; the
//! per-step inputs are the previous token's embedding and a grammar-slot
//! one-hot. A slot is a (phase, offset) pair: the phase counts how many
//! structural tokens (the four tags and the four answer keys — by
//! convention the first [`PHASE_TOKENS`] indices of the vocabulary) the
//! prefix contains, and the offset counts tokens emitted inside the
//! current phase, capped per phase. Last-token conditioning alone cannot
//! express the strict key order of the answer grammar (digit tokens recur
//! across fields), and an absolute position slot shifts whenever a value
//! grows a sign or an extra digit; grammar slots pin each field — the
//! action label always lands in the same slot — while keeping canonical
//! sequences fully memorizable. The end-of-sequence embedding doubles as
//! the start-of-sequence input (eos never occurs mid-sequence, so the row
//! is otherwise unused as an input).
//!
//! Matrices are stored input-major (`rows` = input dim, `cols` = output
//! dim) and applied transposed, matching the shapes used in checkpoints.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;
use crate::vocab::Vocabulary;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    /// Token embedding width.
    pub embed_dim: usize,
    /// Context encoder width.
    pub hidden_dim: usize,
    /// Length of the geometric feature vector.
    pub feature_len: usize,
    /// Number of instructions in the catalog (one-hot appended to features).
    pub instruction_count: usize,
    /// Maximum response length in tokens, including end-of-sequence.
    pub max_len: usize,
}

/// Vocabulary indices below this advance the grammar phase (the four
/// structural tags and the four answer keys in the standard vocabulary).
pub const PHASE_TOKENS: usize = 8;

/// Number of grammar phases: 0..=PHASE_TOKENS.
pub const PHASE_COUNT: usize = PHASE_TOKENS + 1;

/// Within-phase offsets are capped per phase: single-token phases get one
/// slot, the three velocity fields get sign + digits + exit, the think and
/// label phases get content + closing tag.
const PHASE_OFFSET_CAPS: [usize; PHASE_COUNT] = [1, 2, 1, 1, 7, 7, 7, 2, 1];

/// Total number of grammar slots (sum of the offset caps).
pub const STEP_SLOTS: usize = 29;

/// Cursor over the grammar slots; advanced by each emitted token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotCursor {
    phase: usize,
    offset: usize,
}

impl SlotCursor {
    pub fn start() -> Self {
        SlotCursor { phase: 0, offset: 0 }
    }

    pub fn slot(&self) -> usize {
        let base: usize = PHASE_OFFSET_CAPS[..self.phase].iter().sum();
        base + self.offset.min(PHASE_OFFSET_CAPS[self.phase] - 1)
    }

    pub fn advance(&mut self, token: usize) {
        if token < PHASE_TOKENS {
            self.phase = (self.phase + 1).min(PHASE_COUNT - 1);
            self.offset = 0;
        } else {
            self.offset += 1;
        }
    }

    pub fn of_prefix(prefix: &[usize]) -> Self {
        let mut c = SlotCursor::start();
        for &t in prefix {
            c.advance(t);
        }
        c
    }
}

impl PolicyConfig {
    pub fn context_dim(&self) -> usize {
        self.feature_len + self.instruction_count
    }

    pub fn step_input_dim(&self) -> usize {
        self.hidden_dim + self.embed_dim + STEP_SLOTS
    }
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            embed_dim: 8,
            hidden_dim: 16,
            feature_len: 8,
            instruction_count: 4,
            max_len: 32,
        }
    }
}

/// Weight initialization range; near-uniform initial policy.
pub const INIT_SCALE: f64 = 0.05;

/// What the policy conditions on: a fixed-length real feature vector plus
/// an instruction index, in place of the raw sensor streams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationContext {
    pub features: Vec<f64>,
    pub instruction_id: usize,
}

impl ObservationContext {
    pub fn new(features: Vec<f64>, instruction_id: usize) -> Self {
        ObservationContext { features, instruction_id }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("feature vector has length {got}, config expects {want}")]
    FeatureLength { got: usize, want: usize },
    #[error("instruction id {got} out of range ({count} instructions)")]
    InstructionRange { got: usize, count: usize },
    #[error("feature vector contains a non-finite entry")]
    NonFiniteFeature,
    #[error("token sequence longer than max_len {0}")]
    SequenceTooLong(usize),
    #[error("token index {0} out of vocabulary range")]
    TokenRange(usize),
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("params sized for vocabulary of {params}, got {vocab}")]
    VocabMismatch { params: usize, vocab: usize },
    #[error("loss evaluation failed: {0}")]
    Loss(String),
}

/// Dense input-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn uniform(rows: usize, cols: usize, scale: f64, rng: &mut ChaCha8Rng) -> Self {
        let data = (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect();
        Mat { rows, cols, data }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }

    /// Row slice (all outputs for one input index).
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

/// Learnable parameters. Total count stays under 20k at the default config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub config: PolicyConfig,
    /// |V| x embed_dim.
    pub token_embedding: Mat,
    /// context_dim x hidden_dim.
    pub context_projection: Mat,
    /// step_input_dim x |V|.
    pub output_weights: Mat,
    /// |V|.
    pub output_bias: Vec<f64>,
}

impl PolicyParams {
    /// Seed-controlled uniform initialization in [-INIT_SCALE, INIT_SCALE].
    pub fn init(config: PolicyConfig, vocab_size: usize, seed: u64) -> Self {
        let mut r = rng::stream(seed, rng::purpose::POLICY_INIT, 0);
        PolicyParams {
            config,
            token_embedding: Mat::uniform(vocab_size, config.embed_dim, INIT_SCALE, &mut r),
            context_projection: Mat::uniform(
                config.context_dim(),
                config.hidden_dim,
                INIT_SCALE,
                &mut r,
            ),
            output_weights: Mat::uniform(
                config.step_input_dim(),
                vocab_size,
                INIT_SCALE,
                &mut r,
            ),
            output_bias: (0..vocab_size).map(|_| r.random_range(-INIT_SCALE..INIT_SCALE)).collect(),
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.token_embedding.rows
    }

    pub fn param_count(&self) -> usize {
        self.token_embedding.data.len()
            + self.context_projection.data.len()
            + self.output_weights.data.len()
            + self.output_bias.len()
    }

    /// Flatten in a fixed order (embedding, projection, output, bias); the
    /// finite-difference oracle perturbs this view.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.param_count());
        v.extend_from_slice(&self.token_embedding.data);
        v.extend_from_slice(&self.context_projection.data);
        v.extend_from_slice(&self.output_weights.data);
        v.extend_from_slice(&self.output_bias);
        v
    }

    pub fn from_flat(&self, flat: &[f64]) -> PolicyParams {
        assert_eq!(flat.len(), self.param_count());
        let mut out = self.clone();
        let mut k = 0;
        for dst in [
            &mut out.token_embedding.data,
            &mut out.context_projection.data,
            &mut out.output_weights.data,
            &mut out.output_bias,
        ] {
            let len = dst.len();
            dst.copy_from_slice(&flat[k..k + len]);
            k += len;
        }
        out
    }

    /// params += alpha * grad.
    pub fn axpy(&mut self, alpha: f64, grad: &GradTensors) {
        for (p, g) in self.token_embedding.data.iter_mut().zip(&grad.token_embedding.data) {
            *p += alpha * g;
        }
        for (p, g) in self.context_projection.data.iter_mut().zip(&grad.context_projection.data) {
            *p += alpha * g;
        }
        for (p, g) in self.output_weights.data.iter_mut().zip(&grad.output_weights.data) {
            *p += alpha * g;
        }
        for (p, g) in self.output_bias.iter_mut().zip(&grad.output_bias) {
            *p += alpha * g;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.to_flat().iter().all(|v| v.is_finite())
    }
}

/// Gradient container, same shapes as [`PolicyParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradTensors {
    pub token_embedding: Mat,
    pub context_projection: Mat,
    pub output_weights: Mat,
    pub output_bias: Vec<f64>,
}

impl GradTensors {
    pub fn zeros_like(params: &PolicyParams) -> Self {
        GradTensors {
            token_embedding: Mat::zeros(params.token_embedding.rows, params.token_embedding.cols),
            context_projection: Mat::zeros(
                params.context_projection.rows,
                params.context_projection.cols,
            ),
            output_weights: Mat::zeros(params.output_weights.rows, params.output_weights.cols),
            output_bias: vec![0.0; params.output_bias.len()],
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::new();
        v.extend_from_slice(&self.token_embedding.data);
        v.extend_from_slice(&self.context_projection.data);
        v.extend_from_slice(&self.output_weights.data);
        v.extend_from_slice(&self.output_bias);
        v
    }

    pub fn scale(&mut self, s: f64) {
        for v in self
            .token_embedding
            .data
            .iter_mut()
            .chain(self.context_projection.data.iter_mut())
            .chain(self.output_weights.data.iter_mut())
            .chain(self.output_bias.iter_mut())
        {
            *v *= s;
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.to_flat().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.to_flat().iter().all(|v| v.is_finite())
    }
}

/// Per-sequence cached forward state for the context encoder.
#[derive(Debug, Clone)]
pub struct ContextEncoding {
    /// Assembled encoder input [features ; onehot(instruction)].
    pub input: Vec<f64>,
    /// tanh-activated hidden vector.
    pub hidden: Vec<f64>,
}

pub fn encode_context(
    params: &PolicyParams,
    ctx: &ObservationContext,
) -> Result<ContextEncoding, PolicyError> {
    let cfg = &params.config;
    if ctx.features.len() != cfg.feature_len {
        return Err(PolicyError::FeatureLength { got: ctx.features.len(), want: cfg.feature_len });
    }
    if ctx.instruction_id >= cfg.instruction_count {
        return Err(PolicyError::InstructionRange {
            got: ctx.instruction_id,
            count: cfg.instruction_count,
        });
    }
    if ctx.features.iter().any(|f| !f.is_finite()) {
        return Err(PolicyError::NonFiniteFeature);
    }
    let mut input = Vec::with_capacity(cfg.context_dim());
    input.extend_from_slice(&ctx.features);
    for i in 0..cfg.instruction_count {
        input.push(if i == ctx.instruction_id { 1.0 } else { 0.0 });
    }
    let mut hidden = vec![0.0; cfg.hidden_dim];
    for (i, &c) in input.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        let row = params.context_projection.row(i);
        for (h, w) in hidden.iter_mut().zip(row) {
            *h += c * w;
        }
    }
    for h in hidden.iter_mut() {
        *h = h.tanh();
    }
    Ok(ContextEncoding { input, hidden })
}

/// Logits for the next token given the previous token and grammar slot.
fn step_logits(params: &PolicyParams, enc: &ContextEncoding, prev: usize, slot: usize) -> Vec<f64> {
    let cfg = &params.config;
    let vocab = params.vocab_size();
    let mut logits = params.output_bias.clone();
    for (i, &h) in enc.hidden.iter().enumerate() {
        let row = params.output_weights.row(i);
        for (l, w) in logits.iter_mut().zip(row) {
            *l += h * w;
        }
    }
    let emb = params.token_embedding.row(prev);
    for (k, &e) in emb.iter().enumerate() {
        let row = params.output_weights.row(cfg.hidden_dim + k);
        for (l, w) in logits.iter_mut().zip(row) {
            *l += e * w;
        }
    }
    let slot_row = params.output_weights.row(cfg.hidden_dim + cfg.embed_dim + slot);
    for (l, w) in logits.iter_mut().zip(slot_row) {
        *l += w;
    }
    debug_assert_eq!(logits.len(), vocab);
    logits
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for p in out.iter_mut() {
        *p /= sum;
    }
    out
}

/// The per-step categorical distribution pi(token | context, prefix).
pub fn token_distribution(
    params: &PolicyParams,
    ctx: &ObservationContext,
    prefix: &[usize],
) -> Result<Vec<f64>, PolicyError> {
    if prefix.len() >= params.config.max_len {
        return Err(PolicyError::SequenceTooLong(params.config.max_len));
    }
    for &t in prefix {
        if t >= params.vocab_size() {
            return Err(PolicyError::TokenRange(t));
        }
    }
    let enc = encode_context(params, ctx)?;
    let prev = prev_token(params, prefix, prefix.len());
    let cursor = SlotCursor::of_prefix(prefix);
    Ok(softmax(&step_logits(params, &enc, prev, cursor.slot())))
}

#[inline]
fn prev_token(params: &PolicyParams, tokens: &[usize], pos: usize) -> usize {
    if pos == 0 {
        // Start-of-sequence input: reuse the eos embedding row, which never
        // appears as an input elsewhere. The eos row is the last one the
        // standard vocabulary assigns; params carry no vocab, so callers
        // must sample/score with the vocabulary the params were built for.
        params.vocab_size() - 1
    } else {
        tokens[pos - 1]
    }
}

/// One sampled response with everything needed to score and update it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledResponse {
    pub tokens: Vec<usize>,
    pub text: String,
    /// Sum of per-token log-probabilities under the sampling parameters.
    pub logprob: f64,
    /// Raw logits at each emitted step, retained for KL computation.
    pub per_step_logits: Vec<Vec<f64>>,
}

/// Ancestral sampling until end-of-sequence or max_len.
pub fn sample_one(
    params: &PolicyParams,
    vocab: &Vocabulary,
    ctx: &ObservationContext,
    rng: &mut ChaCha8Rng,
) -> Result<SampledResponse, PolicyError> {
    if vocab.len() != params.vocab_size() {
        return Err(PolicyError::VocabMismatch { params: params.vocab_size(), vocab: vocab.len() });
    }
    let enc = encode_context(params, ctx)?;
    let mut tokens: Vec<usize> = Vec::new();
    let mut logprob = 0.0;
    let mut per_step_logits = Vec::new();
    let mut cursor = SlotCursor::start();
    for pos in 0..params.config.max_len {
        let prev = prev_token(params, &tokens, pos);
        let logits = step_logits(params, &enc, prev, cursor.slot());
        let probs = softmax(&logits);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut chosen = probs.len() - 1;
        for (k, &p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                chosen = k;
                break;
            }
        }
        logprob += probs[chosen].ln();
        tokens.push(chosen);
        per_step_logits.push(logits);
        if chosen == vocab.eos() {
            break;
        }
        cursor.advance(chosen);
    }
    let text = vocab.detokenize(&tokens);
    Ok(SampledResponse { tokens, text, logprob, per_step_logits })
}

/// Sample `n` responses, each from an independent stream derived from
/// (seed, j). Identical inputs reproduce identical groups.
pub fn sample_group(
    params: &PolicyParams,
    vocab: &Vocabulary,
    ctx: &ObservationContext,
    n: usize,
    seed: u64,
) -> Result<Vec<SampledResponse>, PolicyError> {
    assert!(n >= 2, "group size must be at least 2");
    (0..n)
        .map(|j| {
            let mut r = rng::stream(seed, 0, j as u64);
            sample_one(params, vocab, ctx, &mut r)
        })
        .collect()
}

/// Teacher-forced log-probability of a token sequence. Uses the same step
/// arithmetic as the sampler, so re-scoring a sampled response reproduces
/// its recorded logprob exactly.
pub fn sequence_logprob(
    params: &PolicyParams,
    ctx: &ObservationContext,
    tokens: &[usize],
) -> Result<f64, PolicyError> {
    Ok(forward_sequence(params, ctx, tokens)?.logprob)
}

/// Forward pass over a fixed token sequence, retaining per-step
/// probabilities for gradient computation.
pub struct SequenceForward {
    pub enc: ContextEncoding,
    pub probs: Vec<Vec<f64>>,
    pub logprob: f64,
}

pub fn forward_sequence(
    params: &PolicyParams,
    ctx: &ObservationContext,
    tokens: &[usize],
) -> Result<SequenceForward, PolicyError> {
    if tokens.len() > params.config.max_len {
        return Err(PolicyError::SequenceTooLong(params.config.max_len));
    }
    for &t in tokens {
        if t >= params.vocab_size() {
            return Err(PolicyError::TokenRange(t));
        }
    }
    let enc = encode_context(params, ctx)?;
    let mut probs = Vec::with_capacity(tokens.len());
    let mut logprob = 0.0;
    let mut cursor = SlotCursor::start();
    for (pos, &tok) in tokens.iter().enumerate() {
        let prev = prev_token(params, tokens, pos);
        let p = softmax(&step_logits(params, &enc, prev, cursor.slot()));
        logprob += p[tok].ln();
        probs.push(p);
        cursor.advance(tok);
    }
    Ok(SequenceForward { enc, probs, logprob })
}

/// Accumulate d(loss)/d(params) for one sequence given d(loss)/d(logits)
/// at every step. This is the single reverse pass shared by the SFT NLL
/// and the GRPO objective.
pub fn backward_sequence(
    params: &PolicyParams,
    enc: &ContextEncoding,
    tokens: &[usize],
    dlogits: &[Vec<f64>],
    grad: &mut GradTensors,
) {
    let cfg = &params.config;
    let mut dhidden = vec![0.0; cfg.hidden_dim];
    let mut cursor = SlotCursor::start();
    for (pos, dz) in dlogits.iter().enumerate() {
        let prev = prev_token(params, tokens, pos);
        // Bias.
        for (g, d) in grad.output_bias.iter_mut().zip(dz) {
            *g += d;
        }
        // Hidden block of W and backprop into h.
        for (i, &h) in enc.hidden.iter().enumerate() {
            let wrow = params.output_weights.row(i);
            let grow = grad.output_weights.row_mut_internal(i);
            let mut acc = 0.0;
            for ((g, &w), &d) in grow.iter_mut().zip(wrow).zip(dz) {
                *g += h * d;
                acc += w * d;
            }
            dhidden[i] += acc;
        }
        // Embedding block of W and backprop into the previous embedding.
        let emb = params.token_embedding.row(prev);
        let mut demb = vec![0.0; cfg.embed_dim];
        for (k, &e) in emb.iter().enumerate() {
            let wrow = params.output_weights.row(cfg.hidden_dim + k);
            let grow = grad.output_weights.row_mut_internal(cfg.hidden_dim + k);
            let mut acc = 0.0;
            for ((g, &w), &d) in grow.iter_mut().zip(wrow).zip(dz) {
                *g += e * d;
                acc += w * d;
            }
            demb[k] = acc;
        }
        let demb_row = grad.token_embedding.row_mut_internal(prev);
        for (g, d) in demb_row.iter_mut().zip(&demb) {
            *g += d;
        }
        // Slot block of W (input is a one-hot, so only one row).
        let grow =
            grad.output_weights.row_mut_internal(cfg.hidden_dim + cfg.embed_dim + cursor.slot());
        for (g, d) in grow.iter_mut().zip(dz) {
            *g += d;
        }
        cursor.advance(tokens[pos]);
    }
    // Through tanh into the context projection.
    for (j, &h) in enc.hidden.iter().enumerate() {
        let du = dhidden[j] * (1.0 - h * h);
        if du == 0.0 {
            continue;
        }
        for (i, &c) in enc.input.iter().enumerate() {
            if c != 0.0 {
                *grad.context_projection.at_mut(i, j) += c * du;
            }
        }
    }
}

impl Mat {
    #[inline]
    fn row_mut_internal(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }
}

/// A scalar functional of the policy parameters with an analytic gradient.
pub trait DifferentiableLoss {
    fn value(&self, params: &PolicyParams) -> Result<f64, PolicyError>;
    fn gradient(&self, params: &PolicyParams) -> Result<GradTensors, PolicyError>;
}

/// Analytic gradient of a loss; signals non-finite intermediates.
pub fn objective_gradient(
    params: &PolicyParams,
    loss: &dyn DifferentiableLoss,
) -> Result<GradTensors, PolicyError> {
    let grad = loss.gradient(params)?;
    if !grad.all_finite() {
        return Err(PolicyError::NonFinite("gradient"));
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::response::ActionRegistry;

    fn tiny_ctx() -> ObservationContext {
        ObservationContext::new(vec![0.3, -1.2, 0.0, 2.0, 0.5, -0.1, 0.7, 1.0], 1)
    }

    fn standard_setup(seed: u64) -> (PolicyParams, Vocabulary) {
        let vocab = Vocabulary::standard(&ActionRegistry::default());
        let params = PolicyParams::init(PolicyConfig::default(), vocab.len(), seed);
        (params, vocab)
    }

    #[test]
    fn zero_params_give_uniform_distribution() {
        let (params, vocab) = standard_setup(0);
        let mut zero = params.clone();
        for v in [
            &mut zero.token_embedding.data,
            &mut zero.context_projection.data,
            &mut zero.output_weights.data,
            &mut zero.output_bias,
        ] {
            v.iter_mut().for_each(|x| *x = 0.0);
        }
        let probs = token_distribution(&zero, &tiny_ctx(), &[]).unwrap();
        let expect = 1.0 / vocab.len() as f64;
        for p in probs {
            assert!((p - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn distribution_is_normalized() {
        let (params, _) = standard_setup(3);
        let probs = token_distribution(&params, &tiny_ctx(), &[1, 5, 9]).unwrap();
        assert!(probs.iter().all(|&p| p >= 0.0));
        let sum: f64 = probs.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_shift_invariance() {
        let logits = vec![0.3, -0.7, 1.9, 0.0];
        let shifted: Vec<f64> = logits.iter().map(|l| l + 13.5).collect();
        let a = softmax(&logits);
        let b = softmax(&shifted);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn bias_perturbation_moves_only_target_probability_up() {
        let (params, _) = standard_setup(4);
        let base = token_distribution(&params, &tiny_ctx(), &[]).unwrap();
        let mut bumped = params.clone();
        bumped.output_bias[7] += 0.5;
        let after = token_distribution(&bumped, &tiny_ctx(), &[]).unwrap();
        assert!(after[7] > base[7]);
        for k in 0..base.len() {
            if k != 7 {
                assert!(after[k] < base[k]);
            }
        }
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let (params, vocab) = standard_setup(7);
        let a = sample_group(&params, &vocab, &tiny_ctx(), 8, 17).unwrap();
        let b = sample_group(&params, &vocab, &tiny_ctx(), 8, 17).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 8);
        for r in &a {
            assert!(r.logprob <= 0.0);
            assert!(r.tokens.len() <= params.config.max_len);
        }
    }

    #[test]
    fn scorer_matches_sampler_exactly() {
        let (params, vocab) = standard_setup(9);
        for r in sample_group(&params, &vocab, &tiny_ctx(), 4, 21).unwrap() {
            let scored = sequence_logprob(&params, &tiny_ctx(), &r.tokens).unwrap();
            assert_eq!(scored, r.logprob);
        }
    }

    #[test]
    fn uniform_policy_logprob_factorizes() {
        let (params, vocab) = standard_setup(0);
        let mut zero = params;
        for v in [
            &mut zero.token_embedding.data,
            &mut zero.context_projection.data,
            &mut zero.output_weights.data,
            &mut zero.output_bias,
        ] {
            v.iter_mut().for_each(|x| *x = 0.0);
        }
        let tokens = vec![1, 2, 3, 4, 5, 6, 7];
        let lp = sequence_logprob(&zero, &tiny_ctx(), &tokens).unwrap();
        let expect = 7.0 * (1.0 / vocab.len() as f64).ln();
        assert!((lp - expect).abs() < 1e-12);
    }

    #[test]
    fn empty_sequence_logprob_is_zero() {
        let (params, _) = standard_setup(2);
        assert_eq!(sequence_logprob(&params, &tiny_ctx(), &[]).unwrap(), 0.0);
    }

    #[test]
    fn saturated_params_sample_identically() {
        let (params, vocab) = standard_setup(5);
        let mut sat = params;
        // One dominant logit per step: drive a fixed non-structural token
        // via its bias, so every response is that token until truncation.
        let target = vocab.index_of("5").unwrap();
        for (v, b) in sat.output_bias.iter_mut().enumerate() {
            *b = if v == target { 50.0 } else { -50.0 };
        }
        let group = sample_group(&sat, &vocab, &tiny_ctx(), 8, 33).unwrap();
        for r in &group {
            assert_eq!(r.tokens, group[0].tokens);
            assert_eq!(r.tokens.len(), sat.config.max_len);
        }
    }

    #[test]
    fn feature_length_checked() {
        let (params, _) = standard_setup(1);
        let bad = ObservationContext::new(vec![0.0; 3], 0);
        assert!(matches!(
            token_distribution(&params, &bad, &[]),
            Err(PolicyError::FeatureLength { .. })
        ));
    }
}
