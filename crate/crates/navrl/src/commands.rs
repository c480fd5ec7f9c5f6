//! Pipeline commands behind the CLI: data generation, verification, the
//! two training stages, evaluation, the reward-mask ablation sweep, trace
//! replay, and report emission. Every command is reproducible: with the
//! mock teacher, (config, seed) determines all non-timing outputs
//! byte-identically.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::data_engine::{
    self, episodes_from_suite, filter_dataset, read_manifest, stats, synthesize, write_manifest,
    CotSample, DatasetManifest, DatasetStats, Granularity,
};
use crate::data_engine::teacher::{MockTeacher, ProcessTeacher, TeacherClient};
use crate::env::{
    make_arena_suite, rollout, Arena, Difficulty, EpisodeTrace, OraclePlanner,
};
use crate::grpo::{grpo_step, TrainingLogRecord};
use crate::metrics::{aggregate, episode_report, format_table, MetricReport, MetricSummary};
use crate::policy::PolicyParams;
use crate::response::ActionRegistry;
use crate::rng::{self, purpose};
use crate::sft::{freeze_reference, train_sft, SftConfig, SftExample};
use crate::task::NavTask;
use crate::vocab::Vocabulary;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainStage {
    Sft,
    Grpo,
}

impl TrainStage {
    pub fn as_str(self) -> &'static str {
        match self {
            TrainStage::Sft => "sft",
            TrainStage::Grpo => "grpo",
        }
    }
}

fn ensure_run_dirs(config: &RunConfig) -> Result<()> {
    for sub in ["manifests", "checkpoints", "logs", "reports"] {
        std::fs::create_dir_all(config.run_dir().join(sub))?;
    }
    Ok(())
}

/// Training arenas, ordered easy/medium/hard.
pub fn train_suite(config: &RunConfig) -> Vec<Arena> {
    let seed = rng::mix(config.run.seed, purpose::TRAIN_SUITE, 0);
    let mut arenas = make_arena_suite(seed, config.suites.train_easy, Difficulty::Easy);
    arenas.extend(make_arena_suite(seed, config.suites.train_medium, Difficulty::Medium));
    arenas.extend(make_arena_suite(seed, config.suites.train_hard, Difficulty::Hard));
    arenas
}

/// Held-out evaluation arenas, ordered easy/medium/hard.
pub fn eval_suite(config: &RunConfig) -> Vec<Arena> {
    let seed = rng::mix(config.run.seed, purpose::EVAL_SUITE, 0);
    let mut arenas = make_arena_suite(seed, config.suites.eval_easy, Difficulty::Easy);
    arenas.extend(make_arena_suite(seed, config.suites.eval_medium, Difficulty::Medium));
    arenas.extend(make_arena_suite(seed, config.suites.eval_hard, Difficulty::Hard));
    arenas
}

fn teacher_client(config: &RunConfig) -> Result<Box<dyn TeacherClient>> {
    match config.data.teacher.as_str() {
        "mock" => Ok(Box::new(MockTeacher::new(
            rng::mix(config.run.seed, purpose::TEACHER, 0),
            config.data.malform_rate,
        ))),
        "process" => Ok(Box::new(
            ProcessTeacher::spawn(&config.data.teacher_cmd)
                .map_err(|e| anyhow::anyhow!("{e}"))?,
        )),
        other => bail!("unknown teacher `{other}`"),
    }
}

pub struct GenDataOutcome {
    pub manifest_path: PathBuf,
    pub stats: DatasetStats,
}

/// Build the training suite, run oracle rollouts, synthesize CoT at all
/// three granularities, verify, and write the manifest.
pub fn cmd_gen_data(config: &RunConfig) -> Result<GenDataOutcome> {
    config.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
    ensure_run_dirs(config)?;
    let registry = config.action_registry().map_err(|e| anyhow::anyhow!("{e}"))?;
    let limits = config.env.limits();
    let arenas = train_suite(config);
    if arenas.is_empty() {
        bail!("suite config produced no training arenas");
    }
    let episodes = episodes_from_suite(&arenas, &config.env)?;
    let client = teacher_client(config)?;
    let mut samples: Vec<CotSample> = Vec::new();
    for granularity in [Granularity::Episode, Granularity::Step, Granularity::Nav] {
        samples.extend(synthesize(
            client.as_ref(),
            &episodes,
            granularity,
            config.data.concurrency,
            config.data.backoff_ms,
        ));
    }
    let manifest =
        filter_dataset(samples, &registry, limits, config.run.seed, &config.digest());
    let manifest_path = config.manifest_path();
    write_manifest(&manifest_path, &manifest)?;
    Ok(GenDataOutcome { manifest_path, stats: stats(&manifest) })
}

/// Re-run verification over an existing manifest; optionally export a
/// seeded random subset for human review.
pub fn cmd_verify_data(
    config: &RunConfig,
    manifest_path: Option<&Path>,
    export_review: Option<(usize, PathBuf)>,
) -> Result<DatasetStats> {
    let path = manifest_path.map(Path::to_path_buf).unwrap_or_else(|| config.manifest_path());
    let manifest = read_manifest(&path).with_context(|| format!("reading {}", path.display()))?;
    let registry = config.action_registry().map_err(|e| anyhow::anyhow!("{e}"))?;
    let limits = config.env.limits();
    let mut mismatches = 0usize;
    for sample in &manifest.samples {
        let (ok, _) = data_engine::verify(sample, &registry, limits);
        if ok != sample.verified {
            mismatches += 1;
        }
    }
    if mismatches > 0 {
        bail!("{mismatches} samples changed verdict on re-verification");
    }
    if let Some((count, out)) = export_review {
        export_review_subset(config, &manifest, count, &out)?;
    }
    Ok(stats(&manifest))
}

fn export_review_subset(
    config: &RunConfig,
    manifest: &DatasetManifest,
    count: usize,
    out: &Path,
) -> Result<()> {
    use rand::seq::SliceRandom;
    let mut indices: Vec<usize> = (0..manifest.samples.len()).collect();
    let mut r = rng::stream(config.run.seed, purpose::REVIEW_SAMPLE, 0);
    indices.shuffle(&mut r);
    indices.truncate(count);
    indices.sort_unstable();
    if let Some(parent) = out.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = std::io::BufWriter::new(std::fs::File::create(out)?);
    for i in indices {
        writeln!(w, "{}", serde_json::to_string(&manifest.samples[i])?)?;
    }
    Ok(())
}

fn sft_examples(
    samples: &[&CotSample],
    vocab: &Vocabulary,
    max_len: usize,
) -> Result<Vec<SftExample>> {
    samples
        .iter()
        .map(|s| {
            let tokens = crate::sft::target_tokens(vocab, &s.reconstruct_raw(), max_len)
                .with_context(|| format!("sample {}", s.id))?;
            Ok(SftExample {
                context: crate::policy::ObservationContext::new(
                    s.features.clone(),
                    s.instruction_id,
                ),
                tokens,
            })
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct SftLogRecord {
    phase: String,
    examples: usize,
    initial_nll: f64,
    final_nll: f64,
}

pub struct TrainOutcome {
    pub checkpoint_path: PathBuf,
    pub log_path: PathBuf,
}

/// Run one training stage. GRPO refuses to start without the SFT
/// checkpoint that serves as its frozen reference.
pub fn cmd_train(config: &RunConfig, stage: TrainStage) -> Result<TrainOutcome> {
    config.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
    ensure_run_dirs(config)?;
    let registry = config.action_registry().map_err(|e| anyhow::anyhow!("{e}"))?;
    let vocab = Vocabulary::standard(&registry);
    match stage {
        TrainStage::Sft => train_sft_stage(config, &registry, &vocab),
        TrainStage::Grpo => train_grpo_stage(config, &registry, &vocab),
    }
}

fn train_sft_stage(
    config: &RunConfig,
    registry: &ActionRegistry,
    vocab: &Vocabulary,
) -> Result<TrainOutcome> {
    let manifest = read_manifest(&config.manifest_path())
        .context("reading the CoT manifest; run gen-data first")?;
    let accepted: Vec<&CotSample> = manifest.accepted().collect();
    let phase1: Vec<&CotSample> = accepted
        .iter()
        .copied()
        .filter(|s| s.granularity != Granularity::Step)
        .collect();
    let mut step_samples: Vec<&CotSample> = accepted
        .iter()
        .copied()
        .filter(|s| s.granularity == Granularity::Step)
        .collect();
    if step_samples.is_empty() {
        bail!("manifest has no verified step-level samples");
    }
    // Seeded subsample of step-level data (the cold start uses a subset).
    {
        use rand::seq::SliceRandom;
        let mut r = rng::stream(config.run.seed, purpose::SFT_SUBSET, 0);
        step_samples.shuffle(&mut r);
        step_samples.truncate(config.sft.step_subset.max(1));
    }
    // Stop decisions are one step per episode; rebalance so the label head
    // sees them more than once per epoch.
    let stops: Vec<&CotSample> = step_samples
        .iter()
        .copied()
        .filter(|s| s.answer.ends_with("action=stop"))
        .collect();
    for _ in 0..config.sft.stop_oversample.saturating_sub(1) {
        step_samples.extend(stops.iter().copied());
    }

    let mut params = PolicyParams::init(config.policy, vocab.len(), config.run.seed);
    let mut log = Vec::new();
    let phases: [(&str, &[&CotSample], usize); 2] = [
        ("episode_nav", &phase1, config.sft.epochs_phase1),
        ("step", &step_samples, config.sft.epochs_phase2),
    ];
    for (idx, (name, samples, epochs)) in phases.into_iter().enumerate() {
        if samples.is_empty() {
            continue;
        }
        let examples = sft_examples(samples, vocab, config.policy.max_len)?;
        let sft_config = SftConfig {
            learning_rate: config.sft.learning_rate,
            epochs,
            batch_size: config.sft.batch_size,
            seed: rng::mix(config.run.seed, 0xa1f0 + idx as u64, 0),
        };
        let initial_nll = crate::sft::nll_loss(&params, &examples)?;
        params = train_sft(&params, &examples, &sft_config)?;
        let final_nll = crate::sft::nll_loss(&params, &examples)?;
        log.push(SftLogRecord {
            phase: name.to_string(),
            examples: examples.len(),
            initial_nll,
            final_nll,
        });
    }

    let checkpoint_path = config.checkpoint_path("sft");
    Checkpoint::from_params(&params, vocab, registry, "sft", config.run.seed)
        .save(&checkpoint_path)?;
    let log_path = config.log_path("sft");
    let mut w = std::io::BufWriter::new(std::fs::File::create(&log_path)?);
    for record in &log {
        writeln!(w, "{}", serde_json::to_string(record)?)?;
    }
    Ok(TrainOutcome { checkpoint_path, log_path })
}

fn train_grpo_stage(
    config: &RunConfig,
    registry: &ActionRegistry,
    vocab: &Vocabulary,
) -> Result<TrainOutcome> {
    let sft_path = config.checkpoint_path("sft");
    if !sft_path.exists() {
        bail!("reference policy missing: no SFT checkpoint at {}", sft_path.display());
    }
    let ckpt = Checkpoint::load(&sft_path)?;
    ckpt.check_compat(vocab, registry)?;
    let mut params = ckpt.to_params()?;
    let reference = freeze_reference(&params);
    let arenas = train_suite(config);
    if arenas.is_empty() {
        bail!("suite config produced no training arenas");
    }
    let task = NavTask::new(arenas, config.env, registry.clone(), config.reward)
        .map_err(|e| anyhow::anyhow!("{e}"))?;

    let log_path = config.log_path("grpo");
    let mut w = std::io::BufWriter::new(std::fs::File::create(&log_path)?);
    for step in 0..config.grpo.max_updates {
        let started = Instant::now();
        let step_seed = rng::mix(config.run.seed, purpose::GRPO_STEP, step as u64);
        let (next, report) = grpo_step(
            &params,
            reference.params(),
            vocab,
            &task,
            &config.grpo,
            step_seed,
        )
        .map_err(|e| anyhow::anyhow!("grpo step {step}: {e}"))?;
        params = next;
        let record =
            TrainingLogRecord::from_report(step, &report, started.elapsed().as_millis() as u64);
        writeln!(w, "{}", serde_json::to_string(&record)?)?;
    }
    drop(w);

    let checkpoint_path = config.checkpoint_path("grpo");
    Checkpoint::from_params(&params, vocab, registry, "grpo", config.run.seed)
        .save(&checkpoint_path)?;
    Ok(TrainOutcome { checkpoint_path, log_path })
}

/// One line of the traces file: everything replay needs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceRecord {
    pub arena: Arena,
    pub report: MetricReport,
    pub trace: EpisodeTrace,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalSummaryFile {
    pub label: String,
    pub config_digest: String,
    pub seed: u64,
    pub summary: MetricSummary,
}

pub struct EvalOutcome {
    pub summary: MetricSummary,
    pub summary_path: PathBuf,
    pub table_path: PathBuf,
    pub traces_path: PathBuf,
}

/// Evaluate a checkpoint (or explicit parameters) over arenas with
/// deterministic per-episode rollout seeds.
pub fn evaluate_params(
    config: &RunConfig,
    params: &PolicyParams,
    vocab: &Vocabulary,
    registry: &ActionRegistry,
    arenas: &[Arena],
    seed_salt: u64,
) -> Result<(MetricSummary, Vec<TraceRecord>)> {
    let limits = config.env.limits();
    let mut reports = Vec::with_capacity(arenas.len());
    let mut records = Vec::with_capacity(arenas.len());
    for (i, arena) in arenas.iter().enumerate() {
        let planner = OraclePlanner::new(arena, &config.env).map_err(|e| anyhow::anyhow!("{e}"))?;
        let reference = planner.waypoints_from(arena.start_pose.x, arena.start_pose.y);
        let seed = rng::mix(
            rng::mix(config.run.seed, purpose::EVAL_ROLLOUT, seed_salt),
            0xe7a1,
            i as u64,
        );
        let trace = rollout(params, vocab, arena, &config.env, registry, limits, seed)
            .map_err(|e| anyhow::anyhow!("{e}"))?;
        let report = episode_report(&trace, arena, &config.env, &config.metrics, &reference)
            .map_err(|e| anyhow::anyhow!("{e}"))?;
        reports.push(report);
        records.push(TraceRecord { arena: arena.clone(), report, trace });
    }
    Ok((aggregate(&reports), records))
}

/// Roll out a checkpoint over the evaluation suite, aggregate the metrics,
/// and write the summary record, the aligned table, and the trace file.
pub fn cmd_eval(config: &RunConfig, checkpoint: &Path, label: &str) -> Result<EvalOutcome> {
    config.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
    ensure_run_dirs(config)?;
    let registry = config.action_registry().map_err(|e| anyhow::anyhow!("{e}"))?;
    let vocab = Vocabulary::standard(&registry);
    let ckpt = Checkpoint::load(checkpoint)
        .with_context(|| format!("loading checkpoint {}", checkpoint.display()))?;
    ckpt.check_compat(&vocab, &registry)?;
    let params = ckpt.to_params()?;
    let arenas = eval_suite(config);
    if arenas.is_empty() {
        bail!("suite config produced no evaluation arenas");
    }
    let (summary, records) = evaluate_params(&config.clone(), &params, &vocab, &registry, &arenas, 0)?;

    let summary_path = config.report_path(&format!("eval_{label}.json"));
    let table_path = config.report_path(&format!("eval_{label}_table.txt"));
    let traces_path = config.report_path(&format!("traces_{label}.jsonl"));
    let file = EvalSummaryFile {
        label: label.to_string(),
        config_digest: config.digest(),
        seed: config.run.seed,
        summary: summary.clone(),
    };
    std::fs::write(&summary_path, serde_json::to_string_pretty(&file)?)?;
    std::fs::write(&table_path, format_table(&summary))?;
    let mut w = std::io::BufWriter::new(std::fs::File::create(&traces_path)?);
    for record in &records {
        writeln!(w, "{}", serde_json::to_string(record)?)?;
    }
    w.flush()?;
    Ok(EvalOutcome { summary, summary_path, table_path, traces_path })
}

/// The reward-mask sweep: (movement, action, format) on/off.
pub const ABLATION_MASKS: [(bool, bool, bool); 8] = [
    (false, false, false),
    (true, false, false),
    (false, true, false),
    (false, false, true),
    (true, true, false),
    (true, false, true),
    (false, true, true),
    (true, true, true),
];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationRow {
    pub movement: bool,
    pub action: bool,
    pub format: bool,
    pub sr: f64,
    pub spl: f64,
    pub seeds: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
    pub updates: usize,
    pub eval_episodes: usize,
}

pub struct AblateOutcome {
    pub report: AblationReport,
    pub json_path: PathBuf,
    pub table_path: PathBuf,
}

/// Run GRPO under each reward mask (the all-off row evaluates the SFT
/// checkpoint directly), averaging SR and SPL over the configured seeds.
pub fn cmd_ablate(config: &RunConfig) -> Result<AblateOutcome> {
    config.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
    ensure_run_dirs(config)?;
    let registry = config.action_registry().map_err(|e| anyhow::anyhow!("{e}"))?;
    let vocab = Vocabulary::standard(&registry);
    let sft_path = config.checkpoint_path("sft");
    if !sft_path.exists() {
        bail!("reference policy missing: no SFT checkpoint at {}", sft_path.display());
    }
    let ckpt = Checkpoint::load(&sft_path)?;
    ckpt.check_compat(&vocab, &registry)?;
    let sft_params = ckpt.to_params()?;
    let reference = freeze_reference(&sft_params);
    let train_arenas = train_suite(config);
    let eval_arenas = eval_suite(config);
    if train_arenas.is_empty() || eval_arenas.is_empty() {
        bail!("ablation needs non-empty train and eval suites");
    }
    let base_task = NavTask::new(train_arenas, config.env, registry.clone(), config.reward)
        .map_err(|e| anyhow::anyhow!("{e}"))?;

    let mut rows = Vec::with_capacity(ABLATION_MASKS.len());
    for (mask_idx, &(movement, action, format)) in ABLATION_MASKS.iter().enumerate() {
        let mut sr_sum = 0.0;
        let mut spl_sum = 0.0;
        for s in 0..config.ablation.seeds {
            let salt = (mask_idx as u64) << 32 | s as u64;
            let params = if !(movement || action || format) {
                sft_params.clone()
            } else {
                let weights = config.reward.masked(movement, action, format);
                let task = base_task.with_weights(weights);
                let mut params = sft_params.clone();
                for step in 0..config.ablation.updates {
                    let step_seed = rng::mix(
                        rng::mix(config.run.seed, purpose::ABLATION, salt),
                        0x57e9,
                        step as u64,
                    );
                    let (next, _) = grpo_step(
                        &params,
                        reference.params(),
                        &vocab,
                        &task,
                        &config.grpo,
                        step_seed,
                    )
                    .map_err(|e| anyhow::anyhow!("ablation mask {mask_idx} seed {s}: {e}"))?;
                    params = next;
                }
                params
            };
            let (summary, _) =
                evaluate_params(config, &params, &vocab, &registry, &eval_arenas, salt + 1)?;
            sr_sum += summary.overall.sr_rate;
            spl_sum += summary.overall.mean_spl;
        }
        rows.push(AblationRow {
            movement,
            action,
            format,
            sr: sr_sum / config.ablation.seeds as f64,
            spl: spl_sum / config.ablation.seeds as f64,
            seeds: config.ablation.seeds,
        });
    }
    let report = AblationReport {
        rows,
        updates: config.ablation.updates,
        eval_episodes: eval_arenas.len(),
    };
    let json_path = config.report_path("ablation.json");
    let table_path = config.report_path("ablation_table.txt");
    std::fs::write(&json_path, serde_json::to_string_pretty(&report)?)?;
    std::fs::write(&table_path, format_ablation_table(&report))?;
    Ok(AblateOutcome { report, json_path, table_path })
}

pub fn format_ablation_table(report: &AblationReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:^5} {:^6} {:^5} {:>8} {:>8}\n",
        "move", "action", "fmt", "SR\u{2191}", "SPL\u{2191}"
    ));
    for row in &report.rows {
        let mark = |b: bool| if b { "x" } else { "-" };
        let tag = if row.movement && row.action && row.format {
            "  (full)"
        } else if !(row.movement || row.action || row.format) {
            "  (supervised-only baseline)"
        } else {
            ""
        };
        out.push_str(&format!(
            "{:^5} {:^6} {:^5} {:>8.3} {:>8.3}{}\n",
            mark(row.movement),
            mark(row.action),
            mark(row.format),
            row.sr,
            row.spl,
            tag
        ));
    }
    out
}

/// ASCII replay of one recorded trace.
pub fn cmd_replay(traces_path: &Path, index: usize) -> Result<String> {
    let text = std::fs::read_to_string(traces_path)
        .with_context(|| format!("reading {}", traces_path.display()))?;
    let line = text
        .lines()
        .nth(index)
        .with_context(|| format!("trace index {index} out of range"))?;
    let record: TraceRecord = serde_json::from_str(line)?;
    Ok(render_trace(&record))
}

fn render_trace(record: &TraceRecord) -> String {
    let arena = &record.arena;
    let cols = 50usize;
    let rows = 25usize;
    let b = &arena.bounds;
    let to_cell = |x: f64, y: f64| -> (usize, usize) {
        let cx = ((x - b.min_x) / (b.max_x - b.min_x) * (cols as f64 - 1.0)).round() as i64;
        let cy = ((y - b.min_y) / (b.max_y - b.min_y) * (rows as f64 - 1.0)).round() as i64;
        (cx.clamp(0, cols as i64 - 1) as usize, (rows as i64 - 1 - cy.clamp(0, rows as i64 - 1)) as usize)
    };
    let mut canvas = vec![vec![' '; cols]; rows];
    for o in &arena.obstacles {
        for gy in 0..rows {
            for gx in 0..cols {
                let x = b.min_x + gx as f64 / (cols as f64 - 1.0) * (b.max_x - b.min_x);
                let y = b.min_y + (rows - 1 - gy) as f64 / (rows as f64 - 1.0) * (b.max_y - b.min_y);
                if o.contains(x, y) {
                    canvas[gy][gx] = '#';
                }
            }
        }
    }
    for zone in &arena.behavior_zones {
        let (cx, cy) = to_cell(zone.center.0, zone.center.1);
        canvas[cy][cx] = 'z';
    }
    for &(x, y) in &record.trace.poses {
        let (cx, cy) = to_cell(x, y);
        if canvas[cy][cx] == ' ' {
            canvas[cy][cx] = '.';
        }
    }
    if let Some(&(x, y)) = record.trace.poses.first() {
        let (cx, cy) = to_cell(x, y);
        canvas[cy][cx] = 'S';
    }
    if let Some(&(x, y)) = record.trace.poses.last() {
        let (cx, cy) = to_cell(x, y);
        canvas[cy][cx] = 'E';
    }
    let (gx, gy) = to_cell(arena.goal.0, arena.goal.1);
    canvas[gy][gx] = 'G';

    let mut out = String::new();
    out.push_str(&format!(
        "arena {} ({}) — instruction: {}\n",
        arena.id,
        arena.difficulty.as_str(),
        arena.instruction()
    ));
    out.push('+');
    out.push_str(&"-".repeat(cols));
    out.push_str("+\n");
    for row in &canvas {
        out.push('|');
        out.extend(row.iter());
        out.push_str("|\n");
    }
    out.push('+');
    out.push_str(&"-".repeat(cols));
    out.push_str("+\n");
    let r = &record.report;
    out.push_str(&format!(
        "steps {} | terminated {:?} | NE {:.2} | SR {} | SPL {:.2} | nDTW {:.2} | format failures {}\n",
        record.trace.commands.len(),
        record.trace.terminated_by,
        r.ne,
        r.sr,
        r.spl,
        r.ndtw,
        record.trace.format_failures(),
    ));
    out
}

/// Combine one or more evaluation summary files into aligned tables.
pub fn cmd_report(paths: &[PathBuf]) -> Result<String> {
    let mut out = String::new();
    for path in paths {
        let file: EvalSummaryFile = serde_json::from_str(
            &std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?,
        )?;
        out.push_str(&format!(
            "== {} (config {}, seed {}) ==\n{}",
            file.label,
            file.config_digest,
            file.seed,
            format_table(&file.summary)
        ));
        out.push('\n');
    }
    Ok(out)
}
