//! Teacher transport: an abstract request/response client with a
//! deterministic mock and a line-oriented external-process adapter.
//!
//! The mock answers step-level requests with the oracle transcript carried
//! in the request context, and episode/navigation requests with canned
//! summaries, injecting one of four malformation classes at a configurable
//! rate. Malformation decisions are a pure function of (mock seed, unit
//! key), so tests can recover the ground-truth validity label for any
//! sample without replaying the batch, and concurrent synthesis cannot
//! perturb the stream.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;
use crate::vocab::phrases;

use super::Granularity;

#[derive(Debug, Error)]
pub enum TeacherError {
    #[error("teacher unavailable: {0}")]
    Unavailable(String),
    #[error("teacher protocol error: {0}")]
    Protocol(String),
}

/// Structured summary of the episode context a request is about. The
/// step-level oracle transcript rides along so the hermetic mock can answer
/// without reconstructing the environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestContext {
    pub instruction: String,
    pub instruction_id: usize,
    pub pose_digest: String,
    pub feature_digest: String,
    pub features: Vec<f64>,
    /// Canonical oracle response for step-granularity units.
    pub oracle_raw: Option<String>,
    /// Episode outcome for episode-granularity units.
    pub success: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherRequest {
    /// Stable unit identifier, e.g. "ep3:step:7".
    pub unit_key: String,
    pub granularity: Granularity,
    pub prompt: String,
    pub context: RequestContext,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherResponse {
    pub raw: String,
    pub latency_ms: u64,
    pub teacher_id: String,
}

pub trait TeacherClient: Send + Sync {
    fn complete(&self, request: &TeacherRequest) -> Result<TeacherResponse, TeacherError>;
    fn id(&self) -> &str;
}

/// The malformation classes the mock can inject.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MalformClass {
    MissingTag,
    UnknownAction,
    VelocityOutOfRange,
    TrailingGarbage,
}

const MALFORM_CLASSES: [MalformClass; 4] = [
    MalformClass::MissingTag,
    MalformClass::UnknownAction,
    MalformClass::VelocityOutOfRange,
    MalformClass::TrailingGarbage,
];

fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub struct MockTeacher {
    seed: u64,
    malform_rate: f64,
}

impl MockTeacher {
    pub fn new(seed: u64, malform_rate: f64) -> Self {
        assert!((0.0..=1.0).contains(&malform_rate), "malform_rate must be in [0, 1]");
        MockTeacher { seed, malform_rate }
    }

    /// The injected malformation for a unit, if any. Pure in (seed, key).
    pub fn planned_malformation(&self, unit_key: &str) -> Option<MalformClass> {
        let h = rng::mix(self.seed, fnv1a(unit_key), 0xfeed);
        let u = (h >> 11) as f64 / (1u64 << 53) as f64;
        if u < self.malform_rate {
            let pick = rng::mix(self.seed, fnv1a(unit_key), 0xbeef) as usize;
            Some(MALFORM_CLASSES[pick % MALFORM_CLASSES.len()])
        } else {
            None
        }
    }

    /// Ground-truth validity label for a unit's response.
    pub fn ground_truth_valid(&self, unit_key: &str) -> bool {
        self.planned_malformation(unit_key).is_none()
    }

    fn well_formed(&self, request: &TeacherRequest) -> Result<String, TeacherError> {
        match request.granularity {
            Granularity::Step => request.context.oracle_raw.clone().ok_or_else(|| {
                TeacherError::Protocol("step request carries no oracle transcript".into())
            }),
            Granularity::Episode => {
                let answer = if request.context.success.unwrap_or(false) {
                    phrases::EPISODE_DONE
                } else {
                    phrases::EPISODE_INCOMPLETE
                };
                Ok(format!(
                    "<think>{}</think><answer>{answer}</answer>",
                    phrases::EPISODE_THINK
                ))
            }
            Granularity::Nav => {
                let answer = if request.context.instruction_id == 0 {
                    phrases::NAV_PLAN_SIMPLE
                } else {
                    phrases::NAV_PLAN
                };
                Ok(format!("<think>{}</think><answer>{answer}</answer>", phrases::NAV_THINK))
            }
        }
    }

    fn malform(&self, raw: &str, class: MalformClass, granularity: Granularity) -> String {
        // Command-level classes only apply where there is a command.
        let class = match (granularity, class) {
            (Granularity::Step, c) => c,
            (_, MalformClass::UnknownAction) => MalformClass::MissingTag,
            (_, MalformClass::VelocityOutOfRange) => MalformClass::TrailingGarbage,
            (_, c) => c,
        };
        match class {
            MalformClass::MissingTag => raw.replacen("</think>", "", 1),
            MalformClass::UnknownAction => match raw.rfind("action=") {
                Some(i) => format!("{}action=hover</answer>", &raw[..i]),
                None => format!("{raw} action=hover"),
            },
            MalformClass::VelocityOutOfRange => raw.replacen("vx=", "vx=9", 1),
            MalformClass::TrailingGarbage => format!("{raw} confidence high"),
        }
    }
}

impl TeacherClient for MockTeacher {
    fn complete(&self, request: &TeacherRequest) -> Result<TeacherResponse, TeacherError> {
        let raw = self.well_formed(request)?;
        let raw = match self.planned_malformation(&request.unit_key) {
            Some(class) => self.malform(&raw, class, request.granularity),
            None => raw,
        };
        Ok(TeacherResponse { raw, latency_ms: 0, teacher_id: "mock".into() })
    }

    fn id(&self) -> &str {
        "mock"
    }
}

#[derive(Debug, Deserialize)]
struct ProcessReply {
    raw: String,
    #[serde(default)]
    teacher_id: Option<String>,
}

/// Generic adapter for an external teacher process speaking one JSON
/// request per line on stdin and one JSON reply (`{"raw": ...}`) per line
/// on stdout.
pub struct ProcessTeacher {
    id: String,
    child: Mutex<ProcessHandles>,
}

struct ProcessHandles {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

impl ProcessTeacher {
    pub fn spawn(argv: &[String]) -> Result<Self, TeacherError> {
        if argv.is_empty() {
            return Err(TeacherError::Unavailable("empty teacher command".into()));
        }
        let mut child = Command::new(&argv[0])
            .args(&argv[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| TeacherError::Unavailable(format!("spawn {}: {e}", argv[0])))?;
        let stdin = child.stdin.take().ok_or_else(|| {
            TeacherError::Unavailable("teacher process has no stdin".into())
        })?;
        let stdout = BufReader::new(child.stdout.take().ok_or_else(|| {
            TeacherError::Unavailable("teacher process has no stdout".into())
        })?);
        Ok(ProcessTeacher {
            id: argv[0].clone(),
            child: Mutex::new(ProcessHandles { child, stdin, stdout }),
        })
    }
}

impl TeacherClient for ProcessTeacher {
    fn complete(&self, request: &TeacherRequest) -> Result<TeacherResponse, TeacherError> {
        let mut handles = self
            .child
            .lock()
            .map_err(|_| TeacherError::Unavailable("teacher adapter poisoned".into()))?;
        let line = serde_json::to_string(request)
            .map_err(|e| TeacherError::Protocol(e.to_string()))?;
        handles
            .stdin
            .write_all(line.as_bytes())
            .and_then(|_| handles.stdin.write_all(b"\n"))
            .and_then(|_| handles.stdin.flush())
            .map_err(|e| TeacherError::Unavailable(format!("write: {e}")))?;
        let mut reply = String::new();
        let n = handles
            .stdout
            .read_line(&mut reply)
            .map_err(|e| TeacherError::Unavailable(format!("read: {e}")))?;
        if n == 0 {
            return Err(TeacherError::Unavailable("teacher process closed stdout".into()));
        }
        let parsed: ProcessReply =
            serde_json::from_str(reply.trim_end()).map_err(|e| TeacherError::Protocol(e.to_string()))?;
        Ok(TeacherResponse {
            raw: parsed.raw,
            latency_ms: 0,
            teacher_id: parsed.teacher_id.unwrap_or_else(|| self.id.clone()),
        })
    }

    fn id(&self) -> &str {
        &self.id
    }
}

impl Drop for ProcessTeacher {
    fn drop(&mut self) {
        if let Ok(mut handles) = self.child.lock() {
            let _ = handles.child.kill();
            let _ = handles.child.wait();
        }
    }
}

/// Test double that fails a fixed number of times before succeeding;
/// exercises the retry/backoff path.
pub struct FlakyTeacher<T: TeacherClient> {
    inner: T,
    failures_before_success: u32,
    calls: Mutex<std::collections::BTreeMap<String, u32>>,
}

impl<T: TeacherClient> FlakyTeacher<T> {
    pub fn new(inner: T, failures_before_success: u32) -> Self {
        FlakyTeacher { inner, failures_before_success, calls: Mutex::new(Default::default()) }
    }

    pub fn calls_for(&self, unit_key: &str) -> u32 {
        *self.calls.lock().unwrap().get(unit_key).unwrap_or(&0)
    }
}

impl<T: TeacherClient> TeacherClient for FlakyTeacher<T> {
    fn complete(&self, request: &TeacherRequest) -> Result<TeacherResponse, TeacherError> {
        let mut calls = self.calls.lock().unwrap();
        let count = calls.entry(request.unit_key.clone()).or_insert(0);
        *count += 1;
        if *count <= self.failures_before_success {
            return Err(TeacherError::Unavailable("scripted failure".into()));
        }
        drop(calls);
        self.inner.complete(request)
    }

    fn id(&self) -> &str {
        self.inner.id()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step_request(key: &str) -> TeacherRequest {
        TeacherRequest {
            unit_key: key.into(),
            granularity: Granularity::Step,
            prompt: "p".into(),
            context: RequestContext {
                instruction: "go".into(),
                instruction_id: 0,
                pose_digest: "pose".into(),
                feature_digest: "f".into(),
                features: vec![0.0; 8],
                oracle_raw: Some(
                    "<think>moving forward along the planned path</think>\
                     <answer>vx=1.000 vy=0.000 wyaw=0.000 action=move</answer>"
                        .into(),
                ),
                success: None,
            },
        }
    }

    #[test]
    fn mock_is_deterministic() {
        let a = MockTeacher::new(5, 0.3);
        let b = MockTeacher::new(5, 0.3);
        for i in 0..50 {
            let req = step_request(&format!("u{i}"));
            assert_eq!(a.complete(&req).unwrap().raw, b.complete(&req).unwrap().raw);
            assert_eq!(a.planned_malformation(&req.unit_key), b.planned_malformation(&req.unit_key));
        }
    }

    #[test]
    fn malform_rate_extremes() {
        let clean = MockTeacher::new(1, 0.0);
        let dirty = MockTeacher::new(1, 1.0);
        for i in 0..20 {
            let key = format!("k{i}");
            assert!(clean.ground_truth_valid(&key));
            assert!(!dirty.ground_truth_valid(&key));
        }
    }

    #[test]
    fn injected_malformations_break_the_format() {
        use crate::response::{check_format, ActionRegistry, VelocityLimits};
        let dirty = MockTeacher::new(9, 1.0);
        let reg = ActionRegistry::default();
        let lim = VelocityLimits::default();
        let mut seen = std::collections::BTreeSet::new();
        for i in 0..200 {
            let req = step_request(&format!("m{i}"));
            let raw = dirty.complete(&req).unwrap().raw;
            let verdict = check_format(&raw, &reg, lim);
            assert!(!verdict.valid, "mutation left text valid: {raw}");
            seen.insert(format!("{:?}", dirty.planned_malformation(&req.unit_key).unwrap()));
        }
        assert_eq!(seen.len(), 4, "all malformation classes exercised: {seen:?}");
    }

    #[test]
    fn flaky_teacher_counts_calls() {
        let flaky = FlakyTeacher::new(MockTeacher::new(1, 0.0), 2);
        let req = step_request("retry-me");
        assert!(flaky.complete(&req).is_err());
        assert!(flaky.complete(&req).is_err());
        assert!(flaky.complete(&req).is_ok());
        assert_eq!(flaky.calls_for("retry-me"), 3);
    }
}
