//! Acceptance suite: one test per release criterion, each printing a
//! PASS line (visible with `cargo test --test acceptance -- --nocapture`).
//!
//! Oracles here are written independently of the library paths they check:
//! finite differences for gradients, a from-scratch network evaluation for
//! the surrogate objective, brute-force alignment enumeration for DTW, and
//! the mock teacher's ground-truth labels for the data engine.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use navrl::commands::{self, TrainStage};
use navrl::config::{RunConfig, SuiteSection};
use navrl::data_engine::teacher::MockTeacher;
use navrl::data_engine::{self, Granularity};
use navrl::env::{make_arena_suite, Difficulty, EnvConfig};
use navrl::grpo::{
    clipped_term, compute_advantages, grpo_objective, kl_penalty, mean_probe_reward, GrpoConfig,
    GrpoLoss, ResponseGroup,
};
use navrl::metrics::{dtw, navigation_error, spl, success_and_oracle};
use navrl::policy::{
    sample_group, DifferentiableLoss, ObservationContext, PolicyConfig, PolicyParams, SlotCursor,
};
use navrl::response::{
    parse_response, serialize_response, ActionLabel, ActionRegistry, ControlCommand,
    FailureReason, VelocityLimits,
};
use navrl::reward::{action_reward, format_reward, movement_reward, RewardBreakdown, VelocityTriple};
use navrl::rng::stream;
use navrl::sft::{NllLoss, SftExample};
use navrl::task::NavTask;
use navrl::vocab::{Token, Vocabulary, EOS_NAME};

fn pass(n: u32, what: &str) {
    println!("ACCEPTANCE {n} PASS — {what}");
}

// ---------------------------------------------------------------------
// 1. Reward identities
// ---------------------------------------------------------------------

#[test]
fn acceptance_01_reward_identities() {
    let started = std::time::Instant::now();
    let v = VelocityTriple::new;
    assert_eq!(movement_reward(&v(1.0, 0.0, 0.0), &v(1.0, 0.0, 0.0)), 1.0);
    assert_eq!(movement_reward(&v(1.0, 0.0, 0.0), &v(0.0, 1.0, 0.0)), 0.0);
    assert_eq!(movement_reward(&v(0.5, 0.0, 0.0), &v(-1.0, 0.0, 0.0)), -1.0);

    let registry = ActionRegistry::default();
    let limits = VelocityLimits::default();
    let m = ActionLabel::new("move");
    let s = ActionLabel::new("stop");
    for r in [
        action_reward(&m, &m),
        action_reward(&m, &s),
        format_reward("<think>t</think><answer>vx=0.000 vy=0.000 wyaw=0.000 action=stop</answer>", &registry, limits),
        format_reward("nope", &registry, limits),
    ] {
        assert!(r == 0.0 || r == 1.0, "binary reward produced {r}");
    }

    let mut rng = stream(11, 0, 0);
    for _ in 0..1000 {
        let mut draw = || {
            v(
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
            )
        };
        let (a, b) = (draw(), draw());
        if a.norm() < 1e-3 || b.norm() < 1e-3 {
            continue;
        }
        let alpha: f64 = rng.random_range(0.1..10.0);
        let beta: f64 = rng.random_range(0.1..10.0);
        let scaled_a = v(alpha * a.vx, alpha * a.vy, alpha * a.wyaw);
        let scaled_b = v(beta * b.vx, beta * b.vy, beta * b.wyaw);
        let d = (movement_reward(&a, &b) - movement_reward(&scaled_a, &scaled_b)).abs();
        assert!(d < 1e-12, "scale invariance violated by {d}");
    }
    assert!(started.elapsed().as_secs() < 1);
    pass(1, "reward identities and positive-scale invariance");
}

// ---------------------------------------------------------------------
// 2. Advantage contract
// ---------------------------------------------------------------------

#[test]
fn acceptance_02_advantage_contract() {
    let started = std::time::Instant::now();
    let mut rng = stream(22, 0, 0);
    for _ in 0..1000 {
        let n = rng.random_range(2..=16usize);
        let rewards: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let adv = compute_advantages(&rewards, 1e-8).unwrap();
        let sum: f64 = adv.iter().sum();
        assert!(sum.abs() <= 1e-9 * n as f64, "advantage sum {sum} for n={n}");

        let c: f64 = rng.random_range(-5.0..5.0);
        let shifted: Vec<f64> = rewards.iter().map(|r| r + c).collect();
        let adv_shifted = compute_advantages(&shifted, 1e-8).unwrap();
        for (a, b) in adv.iter().zip(&adv_shifted) {
            assert!((a - b).abs() <= 1e-12, "shift changed advantage by {}", (a - b).abs());
        }
    }
    assert!(started.elapsed().as_secs() < 1);
    pass(2, "advantages center to zero and are shift-invariant");
}

// ---------------------------------------------------------------------
// 3. Objective oracle
// ---------------------------------------------------------------------

/// From-scratch evaluation of the policy network and the clipped
/// objective, sharing no code with the library implementation.
mod reference_eval {
    use super::*;

    fn naive_probs(params: &PolicyParams, ctx: &ObservationContext, prefix: &[usize]) -> Vec<f64> {
        let cfg = &params.config;
        let mut input = ctx.features.clone();
        for i in 0..cfg.instruction_count {
            input.push(if i == ctx.instruction_id { 1.0 } else { 0.0 });
        }
        let mut hidden = vec![0.0; cfg.hidden_dim];
        for (j, h) in hidden.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (i, c) in input.iter().enumerate() {
                acc += c * params.context_projection.at(i, j);
            }
            *h = acc.tanh();
        }
        let prev = *prefix.last().unwrap_or(&(params.vocab_size() - 1));
        let slot = SlotCursor::of_prefix(prefix).slot();
        let vocab = params.vocab_size();
        let mut logits = vec![0.0; vocab];
        for (v, logit) in logits.iter_mut().enumerate() {
            let mut acc = params.output_bias[v];
            for (i, h) in hidden.iter().enumerate() {
                acc += h * params.output_weights.at(i, v);
            }
            for k in 0..cfg.embed_dim {
                acc += params.token_embedding.at(prev, k)
                    * params.output_weights.at(cfg.hidden_dim + k, v);
            }
            acc += params.output_weights.at(cfg.hidden_dim + cfg.embed_dim + slot, v);
            *logit = acc;
        }
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
        let z: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / z).collect()
    }

    fn naive_logprob(params: &PolicyParams, ctx: &ObservationContext, tokens: &[usize]) -> f64 {
        let mut lp = 0.0;
        for (t, &tok) in tokens.iter().enumerate() {
            lp += naive_probs(params, ctx, &tokens[..t])[tok].ln();
        }
        lp
    }

    pub fn objective(
        group: &ResponseGroup,
        params: &PolicyParams,
        ref_params: &PolicyParams,
        config: &GrpoConfig,
    ) -> f64 {
        let mut total = 0.0;
        for j in 0..group.len() {
            let tokens = &group.responses[j].tokens;
            let lp = naive_logprob(params, &group.context, tokens);
            let ratio = (lp - group.old_logprobs[j]).exp();
            let adv = group.advantages[j];
            let clipped = ratio.clamp(1.0 - config.clip_epsilon, 1.0 + config.clip_epsilon);
            let term = (ratio * adv).min(clipped * adv);
            let mut kl = 0.0;
            for t in 0..tokens.len() {
                let p = naive_probs(params, &group.context, &tokens[..t]);
                let q = naive_probs(ref_params, &group.context, &tokens[..t]);
                for (pk, qk) in p.iter().zip(&q) {
                    if *pk > 0.0 {
                        kl += pk * (pk.ln() - qk.max(1e-12).ln());
                    }
                }
            }
            total += term - config.kl_beta * kl;
        }
        total / group.len() as f64
    }
}

fn standard_setup(seed: u64) -> (PolicyParams, Vocabulary) {
    let vocab = Vocabulary::standard(&ActionRegistry::default());
    let params = PolicyParams::init(PolicyConfig::default(), vocab.len(), seed);
    (params, vocab)
}

fn random_context(rng: &mut ChaCha8Rng) -> ObservationContext {
    let features: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
    ObservationContext::new(features, rng.random_range(0..4))
}

fn zero_one_rewards(n: usize, rng: &mut ChaCha8Rng) -> Vec<RewardBreakdown> {
    // 0/1 totals that are not all equal, so advantages are well defined
    // and sum to exactly zero in floating point.
    loop {
        let r: Vec<f64> = (0..n).map(|_| if rng.random_range(0.0..1.0) < 0.5 { 1.0 } else { 0.0 }).collect();
        if r.iter().any(|&x| x != r[0]) {
            return r
                .into_iter()
                .map(|total| RewardBreakdown { r_movement: 0.0, r_action: 0.0, r_format: total, total })
                .collect();
        }
    }
}

#[test]
fn acceptance_03_objective_oracle() {
    let started = std::time::Instant::now();
    let mut rng = stream(33, 0, 0);
    for case in 0..100u64 {
        let (old_params, vocab) = standard_setup(1000 + case);
        let ctx = random_context(&mut rng);
        let responses = sample_group(&old_params, &vocab, &ctx, 8, 50 + case).unwrap();
        let rewards = zero_one_rewards(8, &mut rng);
        let group = ResponseGroup::assemble(ctx, responses, rewards, 1e-8).unwrap();
        let config = GrpoConfig { kl_beta: if case % 2 == 0 { 0.04 } else { 0.0 }, ..GrpoConfig::default() };

        // Evaluation params: perturbed copy so ratios differ from 1.
        let flat = old_params.to_flat();
        let mut srng = stream(9000, case, 0);
        let perturbed: Vec<f64> = flat.iter().map(|v| v + srng.random_range(-0.02..0.02)).collect();
        let params = old_params.from_flat(&perturbed);
        let ref_params = PolicyParams::init(PolicyConfig::default(), vocab.len(), 7000 + case);

        let fast = grpo_objective(&group, &params, &ref_params, &config).unwrap();
        let slow = reference_eval::objective(&group, &params, &ref_params, &config);
        assert!((fast - slow).abs() < 1e-10, "objective {fast} vs reference {slow}");

        // At the sampling snapshot with beta = 0 the objective vanishes.
        let zero_beta = GrpoConfig { kl_beta: 0.0, ..config };
        let at_snapshot = grpo_objective(&group, &old_params, &ref_params, &zero_beta).unwrap();
        assert!(at_snapshot.abs() < 1e-10, "snapshot objective {at_snapshot}");
    }
    assert!(started.elapsed().as_secs() < 5);
    pass(3, "surrogate objective matches the straight-line reference");
}

// ---------------------------------------------------------------------
// 4. Gradient check
// ---------------------------------------------------------------------

fn tiny_setup(seed: u64) -> (PolicyParams, Vocabulary) {
    let mut tokens: Vec<Token> = ["a", "b", "c"]
        .iter()
        .map(|s| Token { name: s.to_string(), surface: s.to_string() })
        .collect();
    tokens.push(Token { name: EOS_NAME.into(), surface: String::new() });
    let vocab = Vocabulary::new(tokens).unwrap();
    let cfg = PolicyConfig {
        embed_dim: 2,
        hidden_dim: 3,
        feature_len: 4,
        instruction_count: 2,
        max_len: 8,
    };
    let params = PolicyParams::init(cfg, vocab.len(), seed);
    assert!(params.param_count() <= 200, "{} params", params.param_count());
    (params, vocab)
}

fn tiny_context(rng: &mut ChaCha8Rng) -> ObservationContext {
    ObservationContext::new(
        (0..4).map(|_| rng.random_range(-1.5..1.5)).collect(),
        rng.random_range(0..2),
    )
}

/// Central finite differences over the flattened parameters.
fn fd_gradient(
    loss: &dyn DifferentiableLoss,
    params: &PolicyParams,
    h: f64,
) -> Vec<f64> {
    let flat = params.to_flat();
    let mut out = Vec::with_capacity(flat.len());
    for i in 0..flat.len() {
        let mut plus = flat.clone();
        plus[i] += h;
        let mut minus = flat.clone();
        minus[i] -= h;
        let fp = loss.value(&params.from_flat(&plus)).unwrap();
        let fm = loss.value(&params.from_flat(&minus)).unwrap();
        out.push((fp - fm) / (2.0 * h));
    }
    out
}

fn max_relative_error(analytic: &[f64], fd: &[f64]) -> f64 {
    let gmax = fd.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    analytic
        .iter()
        .zip(fd)
        .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(1e-6 * gmax))
        .fold(0.0, f64::max)
}

#[test]
fn acceptance_04_gradient_check() {
    let started = std::time::Instant::now();
    for seed in 0..20u64 {
        let (params, vocab) = tiny_setup(seed);
        let mut rng = stream(44, seed, 0);

        // SFT NLL.
        let examples: Vec<SftExample> = (0..3)
            .map(|_| {
                let len = rng.random_range(2..=6usize);
                SftExample {
                    context: tiny_context(&mut rng),
                    tokens: (0..len).map(|_| rng.random_range(0..vocab.len())).collect(),
                }
            })
            .collect();
        let nll = NllLoss(&examples);
        let err = max_relative_error(
            &nll.gradient(&params).unwrap().to_flat(),
            &fd_gradient(&nll, &params, 1e-5),
        );
        assert!(err < 1e-4, "NLL gradient error {err} at seed {seed}");

        // Full GRPO objective with clipping and KL active.
        let old_params = PolicyParams::init(params.config, vocab.len(), 500 + seed);
        let ref_params = PolicyParams::init(params.config, vocab.len(), 900 + seed);
        let ctx = tiny_context(&mut rng);
        let responses = sample_group(&old_params, &vocab, &ctx, 4, 77 + seed).unwrap();
        let rewards: Vec<RewardBreakdown> = (0..4)
            .map(|_| {
                let total = rng.random_range(-1.0..1.5);
                RewardBreakdown { r_movement: total, r_action: 0.0, r_format: 0.0, total }
            })
            .collect();
        let groups = [ResponseGroup::assemble(ctx, responses, rewards, 1e-8).unwrap()];
        let config = GrpoConfig { kl_beta: 0.04, clip_epsilon: 0.2, ..GrpoConfig::default() };
        let loss = GrpoLoss { groups: &groups, ref_params: &ref_params, config: &config };
        let err = max_relative_error(
            &loss.gradient(&params).unwrap().to_flat(),
            &fd_gradient(&loss, &params, 1e-5),
        );
        assert!(err < 1e-4, "GRPO gradient error {err} at seed {seed}");
    }
    assert!(started.elapsed().as_secs() < 30);
    pass(4, "analytic gradients match central finite differences");
}

// ---------------------------------------------------------------------
// 5. KL properties
// ---------------------------------------------------------------------

#[test]
fn acceptance_05_kl_properties() {
    let started = std::time::Instant::now();
    let mut rng = stream(55, 0, 0);
    for _ in 0..1000 {
        let n = rng.random_range(2..=12usize);
        let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
            let z: f64 = raw.iter().sum();
            raw.into_iter().map(|v| v / z).collect()
        };
        let p = draw(&mut rng);
        let q = draw(&mut rng);
        let self_kl = kl_penalty(&[p.clone()], &[p.clone()]).unwrap();
        assert!(self_kl.abs() <= 1e-12, "self KL {self_kl}");
        let kl = kl_penalty(&[p], &[q]).unwrap();
        assert!(kl >= -1e-15, "negative KL {kl}");
    }
    let worked = kl_penalty(&[vec![0.5, 0.5]], &[vec![0.9, 0.1]]).unwrap();
    assert!((worked - 0.5108).abs() < 1e-3, "worked example {worked}");
    assert!(started.elapsed().as_secs() < 1);
    pass(5, "KL nonnegativity, self-divergence, and the worked example");
}

// ---------------------------------------------------------------------
// 6. Metric oracles
// ---------------------------------------------------------------------

fn dtw_brute(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    fn cost(p: (f64, f64), q: (f64, f64)) -> f64 {
        ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt()
    }
    fn rec(a: &[(f64, f64)], b: &[(f64, f64)], i: usize, j: usize) -> f64 {
        let c = cost(a[i], b[j]);
        if i + 1 == a.len() && j + 1 == b.len() {
            return c;
        }
        let mut best = f64::INFINITY;
        if i + 1 < a.len() {
            best = best.min(rec(a, b, i + 1, j));
        }
        if j + 1 < b.len() {
            best = best.min(rec(a, b, i, j + 1));
        }
        if i + 1 < a.len() && j + 1 < b.len() {
            best = best.min(rec(a, b, i + 1, j + 1));
        }
        c + best
    }
    rec(a, b, 0, 0)
}

#[test]
fn acceptance_06_metric_oracles() {
    let started = std::time::Instant::now();
    let mut rng = stream(66, 0, 0);
    for _ in 0..200 {
        let mk = |rng: &mut ChaCha8Rng| -> Vec<(f64, f64)> {
            let n = rng.random_range(1..=8usize);
            (0..n).map(|_| (rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0))).collect()
        };
        let a = mk(&mut rng);
        let b = mk(&mut rng);
        let fast = dtw(&a, &b);
        let slow = dtw_brute(&a, &b);
        assert!((fast - slow).abs() < 1e-9, "DTW {fast} vs brute force {slow}");
    }

    // Hand-derived values.
    use navrl::env::{EpisodeTrace, Termination};
    let trace = |poses: Vec<(f64, f64)>, t: Termination| EpisodeTrace {
        commands: vec![None; poses.len().saturating_sub(1)],
        raw_responses: vec![String::new(); poses.len().saturating_sub(1)],
        poses,
        terminated_by: t,
        behaviors_emitted: vec![],
    };
    let t345 = trace(vec![(0.0, 0.0), (3.0, 4.0)], Termination::StopAction);
    assert_eq!(navigation_error(&t345, (0.0, 0.0)), 5.0);
    assert!((spl(true, 10.0, 12.5) - 0.8).abs() < 1e-12);
    assert_eq!(spl(true, 10.0, 10.0), 1.0);
    assert_eq!(spl(false, 10.0, 5.0), 0.0);
    let (sr, os) = success_and_oracle(&t345, (3.0, 4.0), 3.0);
    assert!(sr && os);

    // sr implies os on every generated report, across policy qualities.
    let env = EnvConfig::default();
    let mcfg = navrl::metrics::MetricsConfig::default();
    let registry = ActionRegistry::default();
    let vocab = Vocabulary::standard(&registry);
    let params = PolicyParams::init(PolicyConfig::default(), vocab.len(), 5);
    for difficulty in [Difficulty::Easy, Difficulty::Medium, Difficulty::Hard] {
        for (i, arena) in make_arena_suite(12, 4, difficulty).iter().enumerate() {
            let planner = navrl::env::OraclePlanner::new(arena, &env).unwrap();
            let reference = planner.waypoints_from(arena.start_pose.x, arena.start_pose.y);
            // Random policy rollout.
            let rolled = navrl::env::rollout(
                &params, &vocab, arena, &env, &registry, env.limits(), 100 + i as u64,
            )
            .unwrap();
            // Oracle rollout.
            let (oracle_trace, _) = navrl::env::oracle_rollout(arena, &env).unwrap();
            for t in [rolled, oracle_trace] {
                let report = navrl::metrics::episode_report(&t, arena, &env, &mcfg, &reference).unwrap();
                assert!(!report.sr || report.os, "sr without os on {}", arena.id);
                assert!(report.spl <= 1.0 && report.spl >= 0.0);
                assert!(report.spl <= if report.sr { 1.0 } else { 0.0 } + 1e-12);
            }
        }
    }
    assert!(started.elapsed().as_secs() < 10);
    pass(6, "DTW equals brute force; SPL/NE/OS hand cases; sr implies os");
}

// ---------------------------------------------------------------------
// 7. Parser soundness
// ---------------------------------------------------------------------

#[test]
fn acceptance_07_parser_soundness() {
    let started = std::time::Instant::now();
    let registry = ActionRegistry::default();
    let limits = VelocityLimits::default();
    let labels = ["stop", "move", "crawl", "unload", "distinguish"];
    let mut rng = stream(77, 0, 0);

    // 1000 random valid pairs round-trip exactly.
    let mut valid_samples = Vec::new();
    for _ in 0..1000 {
        let think: String = {
            let len = rng.random_range(1..=30usize);
            (0..len)
                .map(|_| {
                    let c = rng.random_range(0..27u32);
                    if c == 26 { ' ' } else { char::from_u32('a' as u32 + c).unwrap() }
                })
                .collect::<String>()
                .trim()
                .to_string()
        };
        let think = if think.is_empty() { "go".to_string() } else { think };
        let cmd = ControlCommand::new(
            rng.random_range(-1000..=1000i32) as f64 / 1000.0,
            rng.random_range(-1000..=1000i32) as f64 / 1000.0,
            rng.random_range(-1000..=1000i32) as f64 / 1000.0,
            ActionLabel::new(labels[rng.random_range(0..labels.len())]),
        );
        let text = serialize_response(&think, &cmd).unwrap();
        let parsed = parse_response(&text, &registry, limits).unwrap();
        assert_eq!(parsed.think, think);
        assert_eq!(parsed.command, cmd);
        valid_samples.push(text);
    }

    // 500-case malformation corpus covering every failure reason.
    let mut corpus: Vec<(String, FailureReason)> = Vec::new();
    let base = |i: usize| valid_samples[i % valid_samples.len()].clone();
    let mut i = 0;
    while corpus.len() < 500 {
        let raw = base(i);
        let case = i % 10;
        let mutated: (String, FailureReason) = match case {
            0 => (raw.replacen("<think>", "", 1), FailureReason::MissingTag),
            1 => (raw.replacen("</answer>", "", 1), FailureReason::MissingTag),
            2 => {
                // Answer block before the think block.
                let think_end = raw.find("</think>").unwrap() + "</think>".len();
                let (think_part, answer_part) = raw.split_at(think_end);
                (format!("{answer_part}{think_part}"), FailureReason::TagOrder)
            }
            3 => (format!("{raw}<think>again</think>"), FailureReason::TagOrder),
            4 => {
                let after_think = raw.find("</think>").unwrap();
                let think_start = raw.find("<think>").unwrap() + "<think>".len();
                (format!("{}{}", &raw[..think_start], &raw[after_think..]), FailureReason::EmptyThink)
            }
            5 => (raw.replacen(" vy=", " vy =", 1), FailureReason::UnparseableAnswer),
            6 => (raw.replacen("vx=", "vx=e", 1), FailureReason::UnparseableAnswer),
            7 => {
                let at = raw.rfind("action=").unwrap() + "action=".len();
                let end = raw.rfind("</answer>").unwrap();
                (format!("{}hover{}", &raw[..at], &raw[end..]), FailureReason::UnknownAction)
            }
            8 => {
                let vx_at = raw.find("vx=").unwrap() + "vx=".len();
                let vy_at = raw.find(" vy=").unwrap();
                (format!("{}9.500{}", &raw[..vx_at], &raw[vy_at..]), FailureReason::VelocityOutOfRange)
            }
            _ => (format!("{raw} trailing note"), FailureReason::TrailingGarbage),
        };
        corpus.push(mutated);
        i += 1;
    }
    let mut seen = std::collections::BTreeSet::new();
    for (raw, expected) in &corpus {
        let got = parse_response(raw, &registry, limits).unwrap_err();
        assert_eq!(got, *expected, "wrong reason for {raw:?}");
        seen.insert(*expected);
    }
    assert_eq!(seen.len(), 7, "every failure reason represented: {seen:?}");
    assert!(started.elapsed().as_secs() < 1);
    pass(7, "1000 round-trips exact; 500 malformations classified correctly");
}

// ---------------------------------------------------------------------
// 8. Data-engine hermetic run
// ---------------------------------------------------------------------

#[test]
fn acceptance_08_data_engine_hermetic() {
    let started = std::time::Instant::now();
    let env = EnvConfig::default();
    let registry = ActionRegistry::default();
    let limits = env.limits();
    let mut suite = make_arena_suite(41, 36, Difficulty::Easy);
    suite.extend(make_arena_suite(41, 32, Difficulty::Medium));
    let episodes = data_engine::episodes_from_suite(&suite, &env).unwrap();
    let mock = MockTeacher::new(4242, 0.05);
    let mut samples = Vec::new();
    for granularity in [Granularity::Episode, Granularity::Step, Granularity::Nav] {
        samples.extend(data_engine::synthesize(&mock, &episodes, granularity, 4, 1));
    }
    assert!(samples.len() >= 1000, "only {} samples", samples.len());

    let manifest = data_engine::filter_dataset(samples, &registry, limits, 4242, "digest");
    let mut tp = 0;
    let mut fp = 0;
    let mut fn_ = 0;
    for s in &manifest.samples {
        let truth = mock.ground_truth_valid(&s.id);
        match (s.verified, truth) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    assert_eq!(fp, 0, "false positives: verifier accepted malformed output");
    assert_eq!(fn_, 0, "false negatives: verifier rejected valid output");
    assert!(tp > 0);

    // Byte-identical rerun.
    let dir = tempfile::tempdir().unwrap();
    let write = |path: &std::path::Path| {
        let mut samples = Vec::new();
        for granularity in [Granularity::Episode, Granularity::Step, Granularity::Nav] {
            samples.extend(data_engine::synthesize(&mock, &episodes, granularity, 4, 1));
        }
        let manifest = data_engine::filter_dataset(samples, &registry, limits, 4242, "digest");
        data_engine::write_manifest(path, &manifest).unwrap();
    };
    let p1 = dir.path().join("a.jsonl");
    let p2 = dir.path().join("b.jsonl");
    write(&p1);
    write(&p2);
    assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    assert!(started.elapsed().as_secs() < 10);
    pass(8, "verifier precision = recall = 1.0; rerun byte-identical");
}

// ---------------------------------------------------------------------
// 9. End-to-end learning
// ---------------------------------------------------------------------

fn learning_config(seed: u64, out_dir: std::path::PathBuf) -> RunConfig {
    let mut config = RunConfig::default();
    config.run.seed = seed;
    config.run.out_dir = out_dir;
    config.suites = SuiteSection {
        train_easy: 10,
        train_medium: 8,
        train_hard: 0,
        eval_easy: 25,
        eval_medium: 0,
        eval_hard: 0,
    };
    // The paper-pinned optimization settings.
    config.grpo = GrpoConfig {
        group_size: 8,
        samples_per_step: 5,
        clip_epsilon: 0.2,
        kl_beta: 0.04,
        norm_epsilon: 1e-8,
        learning_rate: 0.05,
        max_updates: 1000,
    };
    config
}

#[test]
fn acceptance_09_end_to_end_learning() {
    let started = std::time::Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut reward_ratios = Vec::new();
    let mut sr_gains = Vec::new();
    for seed in [1u64, 2, 3] {
        let config = learning_config(seed, dir.path().join(format!("s{seed}")));
        commands::cmd_gen_data(&config).unwrap();
        commands::cmd_train(&config, TrainStage::Sft).unwrap();
        let sft_eval = commands::cmd_eval(&config, &config.checkpoint_path("sft"), "sft").unwrap();
        commands::cmd_train(&config, TrainStage::Grpo).unwrap();
        let grpo_eval =
            commands::cmd_eval(&config, &config.checkpoint_path("grpo"), "grpo").unwrap();

        let registry = config.action_registry().unwrap();
        let vocab = Vocabulary::standard(&registry);
        let task = NavTask::new(
            commands::train_suite(&config),
            config.env,
            registry.clone(),
            config.reward,
        )
        .unwrap();
        let load = |stage: &str| {
            navrl::checkpoint::Checkpoint::load(&config.checkpoint_path(stage))
                .unwrap()
                .to_params()
                .unwrap()
        };
        let probe = |params: &PolicyParams| {
            mean_probe_reward(params, &vocab, &task, 400, 31415).unwrap()
        };
        let sft_reward = probe(&load("sft"));
        let grpo_reward = probe(&load("grpo"));
        println!(
            "  seed {seed}: probe reward {sft_reward:.3} -> {grpo_reward:.3}, easy SR {:.2} -> {:.2}",
            sft_eval.summary.overall.sr_rate, grpo_eval.summary.overall.sr_rate
        );
        reward_ratios.push(grpo_reward / sft_reward);
        sr_gains.push(grpo_eval.summary.overall.sr_rate - sft_eval.summary.overall.sr_rate);
    }
    let mean_ratio = reward_ratios.iter().sum::<f64>() / reward_ratios.len() as f64;
    let mean_gain = sr_gains.iter().sum::<f64>() / sr_gains.len() as f64;
    println!("  mean reward ratio {mean_ratio:.3}, mean SR gain {mean_gain:.3}");
    assert!(
        mean_ratio >= 1.20,
        "composite reward gain {:.1}% < 20%",
        (mean_ratio - 1.0) * 100.0
    );
    assert!(mean_gain >= 0.15, "SR gain {mean_gain:.3} < 0.15");
    assert!(started.elapsed().as_secs() < 600, "took {}s", started.elapsed().as_secs());
    pass(9, "1000 GRPO updates beat the SFT baseline on reward and SR");
}

// ---------------------------------------------------------------------
// 10. Ablation direction
// ---------------------------------------------------------------------

#[test]
fn acceptance_10_ablation_direction() {
    let started = std::time::Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut config = learning_config(10, dir.path().to_path_buf());
    config.suites = SuiteSection {
        train_easy: 0,
        train_medium: 10,
        train_hard: 0,
        eval_easy: 0,
        eval_medium: 25,
        eval_hard: 0,
    };
    config.ablation.seeds = 5;
    config.ablation.updates = 600;
    commands::cmd_gen_data(&config).unwrap();
    commands::cmd_train(&config, TrainStage::Sft).unwrap();
    let outcome = commands::cmd_ablate(&config).unwrap();
    println!("{}", commands::format_ablation_table(&outcome.report));

    let rows = &outcome.report.rows;
    let find = |m: bool, a: bool, f: bool| {
        rows.iter().find(|r| r.movement == m && r.action == a && r.format == f).unwrap()
    };
    let full = find(true, true, true);
    let sft_only = find(false, false, false);
    let singles = [find(true, false, false), find(false, true, false), find(false, false, true)];
    for single in singles {
        assert!(
            full.sr >= single.sr,
            "full SR {:.3} below single {:?} {:.3}",
            full.sr,
            (single.movement, single.action, single.format),
            single.sr
        );
        assert!(
            full.spl >= single.spl,
            "full SPL {:.3} below single {:?} {:.3}",
            full.spl,
            (single.movement, single.action, single.format),
            single.spl
        );
    }
    assert!(full.sr >= sft_only.sr && full.spl >= sft_only.spl);
    assert_eq!(rows.len(), 8);
    assert!(started.elapsed().as_secs() < 2700, "took {}s", started.elapsed().as_secs());
    pass(10, "full reward dominates singles and the supervised-only row");
}

// ---------------------------------------------------------------------
// 11. Determinism
// ---------------------------------------------------------------------

#[test]
fn acceptance_11_determinism() {
    let started = std::time::Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut small = RunConfig::default();
    small.run.seed = 77;
    small.suites = SuiteSection {
        train_easy: 3,
        train_medium: 2,
        train_hard: 1,
        eval_easy: 3,
        eval_medium: 2,
        eval_hard: 1,
    };
    small.sft.epochs_phase1 = 2;
    small.sft.epochs_phase2 = 4;
    small.grpo.max_updates = 2;

    let run = |out: std::path::PathBuf| -> (Vec<u8>, Vec<u8>, Vec<u8>, Vec<u8>) {
        let mut config = small.clone();
        config.run.out_dir = out;
        let gen = commands::cmd_gen_data(&config).unwrap();
        commands::cmd_train(&config, TrainStage::Sft).unwrap();
        let eval = commands::cmd_eval(&config, &config.checkpoint_path("sft"), "sft").unwrap();
        (
            std::fs::read(&gen.manifest_path).unwrap(),
            std::fs::read(&eval.summary_path).unwrap(),
            std::fs::read(&eval.table_path).unwrap(),
            std::fs::read(&eval.traces_path).unwrap(),
        )
    };
    let a = run(dir.path().join("a"));
    let b = run(dir.path().join("b"));
    assert_eq!(a.0, b.0, "manifest differs between reruns");
    assert_eq!(a.1, b.1, "summary differs between reruns");
    assert_eq!(a.2, b.2, "table differs between reruns");
    assert_eq!(a.3, b.3, "traces differ between reruns");
    assert!(started.elapsed().as_secs() < 60);
    pass(11, "gen-data and eval reruns are byte-identical");
}
