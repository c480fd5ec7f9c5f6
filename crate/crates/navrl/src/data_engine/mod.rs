//! Chain-of-thought data engine.
//!
//! Oracle rollouts become episode records; prompt templates turn them into
//! teacher requests at three granularities (episode outcome summaries,
//! step-level executable commands, navigation-level route plans); a
//! pluggable teacher client answers them (deterministic mock by default);
//! and a rule-based verifier re-parses every sample before it can reach
//! training. Verification is the automatic stage of the pipeline — a
//! review-export hook stands in for the manual pass, since humans cannot
//! sit inside the test loop.

pub mod teacher;

use std::io::{BufRead, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{oracle_rollout, Arena, EnvConfig, EnvError, Termination, FEATURE_LEN};
use crate::response::{
    check_tag_structure, parse_response, split_tags_strict, ActionRegistry, VelocityLimits,
};

use teacher::{RequestContext, TeacherClient, TeacherRequest};

/// Retry policy for teacher calls: up to 3 attempts with exponential
/// backoff starting here.
pub const MAX_ATTEMPTS: u32 = 3;
pub const DEFAULT_BACKOFF_MS: u64 = 250;

/// Rejection tag for samples whose teacher never answered.
pub const TEACHER_FAILED: &str = "teacher_failed";

#[derive(Debug, Error)]
pub enum DataEngineError {
    #[error("episode {0} has no steps")]
    EmptyEpisode(String),
    #[error("manifest io: {0}")]
    Io(#[from] std::io::Error),
    #[error("manifest parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("manifest is missing its header record")]
    MissingHeader,
    #[error(transparent)]
    Env(#[from] EnvError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    Episode,
    Step,
    Nav,
}

impl Granularity {
    pub fn as_str(self) -> &'static str {
        match self {
            Granularity::Episode => "episode",
            Granularity::Step => "step",
            Granularity::Nav => "nav",
        }
    }
}

/// One oracle-annotated step of a source episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStep {
    pub features: Vec<f64>,
    pub pose: (f64, f64),
    pub yaw: f64,
    pub think: String,
    /// Canonical serialized response for this step.
    pub raw: String,
}

/// One expert episode: the unit the data engine synthesizes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub id: String,
    pub arena_id: String,
    pub instruction: String,
    pub instruction_id: usize,
    pub success: bool,
    pub poses: Vec<(f64, f64)>,
    pub steps: Vec<EpisodeStep>,
}

/// Run the oracle over a suite and package the transcripts.
pub fn episodes_from_suite(
    suite: &[Arena],
    config: &EnvConfig,
) -> Result<Vec<EpisodeRecord>, DataEngineError> {
    suite
        .iter()
        .enumerate()
        .map(|(i, arena)| {
            let (trace, steps) = oracle_rollout(arena, config)?;
            let last = *trace.poses.last().expect("trace has poses");
            let ne =
                ((last.0 - arena.goal.0).powi(2) + (last.1 - arena.goal.1).powi(2)).sqrt();
            let success =
                trace.terminated_by == Termination::StopAction && ne < config.success_radius;
            Ok(EpisodeRecord {
                id: format!("ep{i}-{}", arena.id),
                arena_id: arena.id.clone(),
                instruction: arena.instruction().to_string(),
                instruction_id: arena.instruction_id,
                success,
                poses: trace.poses.clone(),
                steps: steps
                    .into_iter()
                    .map(|s| EpisodeStep {
                        features: s.context.features,
                        pose: s.pose,
                        yaw: s.yaw,
                        think: s.think,
                        raw: s.raw,
                    })
                    .collect(),
            })
        })
        .collect()
}

/// One chain-of-thought training record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CotSample {
    pub id: String,
    pub granularity: Granularity,
    pub instruction: String,
    pub observation_digest: String,
    pub think: String,
    pub answer: String,
    pub source_episode: String,
    /// Numeric context for supervised training (step: the step's features;
    /// episode/nav: the episode's start features).
    pub features: Vec<f64>,
    pub instruction_id: usize,
    pub verified: bool,
    pub rejection_reason: Option<String>,
    pub attempts: u32,
}

impl CotSample {
    /// The canonical raw text verification re-parses.
    pub fn reconstruct_raw(&self) -> String {
        format!("<think>{}</think><answer>{}</answer>", self.think, self.answer)
    }
}

fn digest_floats(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>().join(",")
}

fn pose_digest(poses: &[(f64, f64)], cap: usize) -> String {
    let stride = (poses.len() / cap).max(1);
    poses
        .iter()
        .step_by(stride)
        .map(|(x, y)| format!("({x:.1},{y:.1})"))
        .collect::<Vec<_>>()
        .join("->")
}

/// Instantiate the fixed prompt template for a granularity. Step prompts
/// carry the current state digest and the four answer keys; episode and
/// navigation prompts carry the waypoint digest. Deterministic.
pub fn build_prompt(
    granularity: Granularity,
    episode: &EpisodeRecord,
    step_index: Option<usize>,
) -> Result<TeacherRequest, DataEngineError> {
    if episode.steps.is_empty() {
        return Err(DataEngineError::EmptyEpisode(episode.id.clone()));
    }
    let answer_format = "vx=<float> vy=<float> wyaw=<float> action=<label>";
    let preamble = format!(
        "You control a ground robot in a {}-style walled arena. Instruction: {}.",
        "15x15 m", episode.instruction
    );
    let reason_rule = "Reason step by step inside <think></think> tags first, then give the \
                       final answer inside <answer></answer> tags with nothing else.";
    match granularity {
        Granularity::Step => {
            let idx = step_index.unwrap_or(0).min(episode.steps.len() - 1);
            let step = &episode.steps[idx];
            let pose = format!("pose=({:.2},{:.2},yaw {:.2})", step.pose.0, step.pose.1, step.yaw);
            let fdigest = digest_floats(&step.features);
            let prompt = format!(
                "{preamble} Current state: {pose}; observation features: [{fdigest}]. Decide \
                 the next control command in the exact form {answer_format}. {reason_rule}"
            );
            Ok(TeacherRequest {
                unit_key: format!("{}:step:{idx}", episode.id),
                granularity,
                prompt,
                context: RequestContext {
                    instruction: episode.instruction.clone(),
                    instruction_id: episode.instruction_id,
                    pose_digest: pose,
                    feature_digest: fdigest,
                    features: step.features.clone(),
                    oracle_raw: Some(step.raw.clone()),
                    success: None,
                },
            })
        }
        Granularity::Episode | Granularity::Nav => {
            let pdigest = pose_digest(&episode.poses, 8);
            let task = if granularity == Granularity::Episode {
                "Summarize the task outcome and the high-level execution plan."
            } else {
                "Produce the route-level reasoning connecting the instruction to the waypoint \
                 sequence."
            };
            let prompt =
                format!("{preamble} Full trajectory: {pdigest}. {task} {reason_rule}");
            Ok(TeacherRequest {
                unit_key: format!("{}:{}", episode.id, granularity.as_str()),
                granularity,
                prompt,
                context: RequestContext {
                    instruction: episode.instruction.clone(),
                    instruction_id: episode.instruction_id,
                    pose_digest: pdigest,
                    feature_digest: digest_floats(&episode.steps[0].features),
                    features: episode.steps[0].features.clone(),
                    oracle_raw: None,
                    success: Some(episode.success),
                },
            })
        }
    }
}

struct Unit {
    episode_index: usize,
    step_index: Option<usize>,
}

/// Synthesize raw samples for one granularity: one request per step for
/// step granularity, one per episode otherwise. At most `concurrency`
/// requests are in flight; each failed request is retried up to
/// [`MAX_ATTEMPTS`] times with exponential backoff; a unit that exhausts
/// its retries is kept as a failed sample rather than aborting the batch.
/// Output order matches unit order regardless of scheduling.
pub fn synthesize(
    client: &dyn TeacherClient,
    episodes: &[EpisodeRecord],
    granularity: Granularity,
    concurrency: usize,
    backoff_ms: u64,
) -> Vec<CotSample> {
    let mut units = Vec::new();
    for (e, episode) in episodes.iter().enumerate() {
        match granularity {
            Granularity::Step => {
                for s in 0..episode.steps.len() {
                    units.push(Unit { episode_index: e, step_index: Some(s) });
                }
            }
            _ => units.push(Unit { episode_index: e, step_index: None }),
        }
    }
    let results: Mutex<Vec<Option<CotSample>>> = Mutex::new(vec![None; units.len()]);
    let cursor = AtomicUsize::new(0);
    let workers = concurrency.clamp(1, 64);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = cursor.fetch_add(1, Ordering::SeqCst);
                if i >= units.len() {
                    break;
                }
                let unit = &units[i];
                let episode = &episodes[unit.episode_index];
                let sample = synthesize_unit(client, episode, granularity, unit, backoff_ms);
                results.lock().unwrap()[i] = Some(sample);
            });
        }
    });
    results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|s| s.expect("every unit produced a sample"))
        .collect()
}

fn synthesize_unit(
    client: &dyn TeacherClient,
    episode: &EpisodeRecord,
    granularity: Granularity,
    unit: &Unit,
    backoff_ms: u64,
) -> CotSample {
    let request = match build_prompt(granularity, episode, unit.step_index) {
        Ok(r) => r,
        Err(e) => {
            return CotSample {
                id: format!("{}:{}", episode.id, granularity.as_str()),
                granularity,
                instruction: episode.instruction.clone(),
                observation_digest: String::new(),
                think: String::new(),
                answer: String::new(),
                source_episode: episode.id.clone(),
                features: vec![0.0; FEATURE_LEN],
                instruction_id: episode.instruction_id,
                verified: false,
                rejection_reason: Some(format!("prompt: {e}")),
                attempts: 0,
            }
        }
    };
    let mut attempts = 0;
    let mut response = None;
    while attempts < MAX_ATTEMPTS {
        attempts += 1;
        match client.complete(&request) {
            Ok(r) => {
                response = Some(r);
                break;
            }
            Err(_) if attempts < MAX_ATTEMPTS => {
                std::thread::sleep(Duration::from_millis(backoff_ms << (attempts - 1)));
            }
            Err(_) => {}
        }
    }
    let (think, answer, rejection) = match &response {
        Some(r) => match split_tags_strict(&r.raw) {
            Ok((think, answer)) => (think.to_string(), answer.to_string(), None),
            // Tags not findable: keep the whole text as the answer so the
            // verifier sees (and rejects) the malformation.
            Err(_) => (String::new(), r.raw.clone(), None),
        },
        None => (String::new(), String::new(), Some(TEACHER_FAILED.to_string())),
    };
    CotSample {
        id: request.unit_key.clone(),
        granularity,
        instruction: episode.instruction.clone(),
        observation_digest: format!(
            "{} | features [{}]",
            request.context.pose_digest, request.context.feature_digest
        ),
        think,
        answer,
        source_episode: episode.id.clone(),
        features: request.context.features.clone(),
        instruction_id: episode.instruction_id,
        verified: false,
        rejection_reason: rejection,
        attempts,
    }
}

/// Rule-based verification: step samples must re-parse into a command that
/// passes registry and velocity checks; episode/nav samples must satisfy
/// the tag structure. First failure wins; pure.
pub fn verify(
    sample: &CotSample,
    registry: &ActionRegistry,
    limits: VelocityLimits,
) -> (bool, Option<String>) {
    if sample.rejection_reason.as_deref() == Some(TEACHER_FAILED) {
        return (false, Some(TEACHER_FAILED.to_string()));
    }
    let raw = sample.reconstruct_raw();
    match sample.granularity {
        Granularity::Step => match parse_response(&raw, registry, limits) {
            Ok(_) => (true, None),
            Err(reason) => (false, Some(reason.as_str().to_string())),
        },
        Granularity::Episode | Granularity::Nav => {
            let verdict = check_tag_structure(&raw);
            match verdict.failure_reason {
                None => (true, None),
                Some(reason) => (false, Some(reason.as_str().to_string())),
            }
        }
    }
}

/// Manifest of one synthesis run: all samples with verdicts, counts of
/// accepted samples per granularity, and the provenance header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub config_digest: String,
    pub samples: Vec<CotSample>,
    pub counts: std::collections::BTreeMap<String, usize>,
}

impl DatasetManifest {
    pub fn accepted(&self) -> impl Iterator<Item = &CotSample> {
        self.samples.iter().filter(|s| s.verified)
    }
}

/// Partition raw samples into accepted/rejected by running the verifier on
/// each. Sample content is never mutated, only verdicts.
pub fn filter_dataset(
    mut samples: Vec<CotSample>,
    registry: &ActionRegistry,
    limits: VelocityLimits,
    seed: u64,
    config_digest: &str,
) -> DatasetManifest {
    let mut counts: std::collections::BTreeMap<String, usize> = Default::default();
    for sample in samples.iter_mut() {
        let (ok, reason) = verify(sample, registry, limits);
        sample.verified = ok;
        sample.rejection_reason = reason;
        if ok {
            *counts.entry(sample.granularity.as_str().to_string()).or_insert(0) += 1;
        }
    }
    DatasetManifest { seed, config_digest: config_digest.to_string(), samples, counts }
}

/// Acceptance counts, rates, and the rejection histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub total: usize,
    pub accepted: usize,
    pub acceptance_rate: f64,
    /// granularity -> (total, accepted).
    pub per_granularity: std::collections::BTreeMap<String, (usize, usize)>,
    pub rejection_histogram: std::collections::BTreeMap<String, usize>,
}

pub fn stats(manifest: &DatasetManifest) -> DatasetStats {
    let mut per: std::collections::BTreeMap<String, (usize, usize)> = Default::default();
    let mut rejections: std::collections::BTreeMap<String, usize> = Default::default();
    let mut accepted = 0usize;
    for s in &manifest.samples {
        let entry = per.entry(s.granularity.as_str().to_string()).or_insert((0, 0));
        entry.0 += 1;
        if s.verified {
            entry.1 += 1;
            accepted += 1;
        } else if let Some(reason) = &s.rejection_reason {
            *rejections.entry(reason.clone()).or_insert(0) += 1;
        }
    }
    let total = manifest.samples.len();
    DatasetStats {
        total,
        accepted,
        acceptance_rate: if total == 0 { 0.0 } else { accepted as f64 / total as f64 },
        per_granularity: per,
        rejection_histogram: rejections,
    }
}

impl std::fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "{} samples, {} accepted ({:.1}%)",
            self.total,
            self.accepted,
            100.0 * self.acceptance_rate
        )?;
        for (g, (total, accepted)) in &self.per_granularity {
            writeln!(f, "  {g:<8} {accepted}/{total}")?;
        }
        if !self.rejection_histogram.is_empty() {
            writeln!(f, "  rejections:")?;
            for (reason, n) in &self.rejection_histogram {
                writeln!(f, "    {reason:<24} {n}")?;
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum ManifestLine {
    Header { version: u32, seed: u64, config_digest: String },
    Sample(Box<CotSample>),
}

/// Write the manifest: one header record, then one record per sample.
pub fn write_manifest(path: &Path, manifest: &DatasetManifest) -> Result<(), DataEngineError> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    let header = ManifestLine::Header {
        version: 1,
        seed: manifest.seed,
        config_digest: manifest.config_digest.clone(),
    };
    writeln!(w, "{}", serde_json::to_string(&header)?)?;
    for sample in &manifest.samples {
        writeln!(w, "{}", serde_json::to_string(&ManifestLine::Sample(Box::new(sample.clone())))?)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest, DataEngineError> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut header: Option<(u64, String)> = None;
    let mut samples = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<ManifestLine>(&line)? {
            ManifestLine::Header { seed, config_digest, .. } => {
                header = Some((seed, config_digest));
            }
            ManifestLine::Sample(s) => samples.push(*s),
        }
    }
    let (seed, config_digest) = header.ok_or(DataEngineError::MissingHeader)?;
    let mut counts: std::collections::BTreeMap<String, usize> = Default::default();
    for s in samples.iter().filter(|s| s.verified) {
        *counts.entry(s.granularity.as_str().to_string()).or_insert(0) += 1;
    }
    Ok(DatasetManifest { seed, config_digest, samples, counts })
}

#[cfg(test)]
mod tests {
    use super::teacher::{FlakyTeacher, MockTeacher};
    use super::*;
    use crate::env::{make_arena_suite, Difficulty};

    fn episodes() -> Vec<EpisodeRecord> {
        let suite = make_arena_suite(2, 3, Difficulty::Easy);
        episodes_from_suite(&suite, &EnvConfig::default()).unwrap()
    }

    #[test]
    fn prompts_are_deterministic_and_carry_keys() {
        let eps = episodes();
        let a = build_prompt(Granularity::Step, &eps[0], Some(1)).unwrap();
        let b = build_prompt(Granularity::Step, &eps[0], Some(1)).unwrap();
        assert_eq!(a, b);
        for key in ["vx=", "vy=", "wyaw=", "action="] {
            assert!(a.prompt.contains(key), "prompt missing {key}");
        }
        assert!(a.prompt.contains("pose=("));
        let e = build_prompt(Granularity::Episode, &eps[0], None).unwrap();
        assert!(e.prompt.contains("->"), "episode prompt carries the waypoint digest");
    }

    #[test]
    fn synthesize_counts_units() {
        let eps = episodes();
        let steps: usize = eps.iter().map(|e| e.steps.len()).sum();
        let mock = MockTeacher::new(0, 0.0);
        let step_samples = synthesize(&mock, &eps, Granularity::Step, 4, 1);
        assert_eq!(step_samples.len(), steps);
        let ep_samples = synthesize(&mock, &eps, Granularity::Episode, 2, 1);
        assert_eq!(ep_samples.len(), eps.len());
    }

    #[test]
    fn malformed_teacher_output_is_stored_then_rejected() {
        let eps = episodes();
        let mock = MockTeacher::new(3, 1.0);
        let samples = synthesize(&mock, &eps, Granularity::Step, 4, 1);
        let reg = ActionRegistry::default();
        let manifest = filter_dataset(samples, &reg, VelocityLimits::default(), 0, "d");
        assert!(manifest.samples.iter().all(|s| !s.verified));
        assert!(manifest.counts.is_empty());
    }

    #[test]
    fn retry_path_keeps_sample_and_logs_attempts() {
        let eps = episodes();
        let flaky = FlakyTeacher::new(MockTeacher::new(1, 0.0), 2);
        let samples = synthesize(&flaky, &eps[..1], Granularity::Episode, 1, 1);
        assert_eq!(samples.len(), 1);
        assert_eq!(samples[0].attempts, 3);
        assert!(samples[0].rejection_reason.is_none());
        let dead = FlakyTeacher::new(MockTeacher::new(1, 0.0), 99);
        let failed = synthesize(&dead, &eps[..1], Granularity::Episode, 1, 1);
        assert_eq!(failed[0].rejection_reason.as_deref(), Some(TEACHER_FAILED));
    }

    #[test]
    fn verifier_matches_mock_ground_truth() {
        let eps = episodes();
        let mock = MockTeacher::new(21, 0.3);
        let reg = ActionRegistry::default();
        let lim = VelocityLimits::default();
        for granularity in [Granularity::Step, Granularity::Episode, Granularity::Nav] {
            let samples = synthesize(&mock, &eps, granularity, 3, 1);
            for s in &samples {
                let (ok, _) = verify(s, &reg, lim);
                assert_eq!(
                    ok,
                    mock.ground_truth_valid(&s.id),
                    "verdict mismatch on {} ({granularity:?})",
                    s.id
                );
            }
        }
    }

    #[test]
    fn filter_preserves_content_and_counts() {
        let eps = episodes();
        let mock = MockTeacher::new(5, 0.2);
        let samples = synthesize(&mock, &eps, Granularity::Step, 4, 1);
        let texts: Vec<(String, String)> =
            samples.iter().map(|s| (s.think.clone(), s.answer.clone())).collect();
        let reg = ActionRegistry::default();
        let manifest = filter_dataset(samples, &reg, VelocityLimits::default(), 7, "digest");
        for (s, (think, answer)) in manifest.samples.iter().zip(&texts) {
            assert_eq!(&s.think, think);
            assert_eq!(&s.answer, answer);
        }
        let st = stats(&manifest);
        assert_eq!(st.total, manifest.samples.len());
        assert_eq!(
            st.accepted,
            manifest.samples.iter().filter(|s| s.verified).count()
        );
        let rejected: usize = st.rejection_histogram.values().sum();
        assert_eq!(rejected, st.total - st.accepted);
    }

    #[test]
    fn empty_input_gives_empty_manifest() {
        let reg = ActionRegistry::default();
        let manifest = filter_dataset(vec![], &reg, VelocityLimits::default(), 0, "d");
        assert!(manifest.samples.is_empty());
        let st = stats(&manifest);
        assert_eq!((st.total, st.accepted), (0, 0));
    }

    #[test]
    fn manifest_round_trips_through_file() {
        let eps = episodes();
        let mock = MockTeacher::new(9, 0.1);
        let samples = synthesize(&mock, &eps, Granularity::Nav, 2, 1);
        let reg = ActionRegistry::default();
        let manifest = filter_dataset(samples, &reg, VelocityLimits::default(), 9, "abc");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        write_manifest(&path, &manifest).unwrap();
        let back = read_manifest(&path).unwrap();
        assert_eq!(back, manifest);
    }
}
