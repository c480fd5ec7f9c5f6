//! The reasoning-execution output grammar.
//!
//! A well-formed response is exactly
//!
//! ```text
//! <think>{reasoning}</think><answer>vx={f} vy={f} wyaw={f} action={label}</answer>
//! ```
//!
//! with optional whitespace around the whole thing and nothing else. Floats
//! are an optional minus sign, digits, and an optional fractional part; the
//! canonical serializer prints three decimal places so that serialize/parse
//! round-trips are exact. Parsing is a pure function of the raw text, the
//! action registry, and the velocity limits: malformed input never raises,
//! it yields a [`FailureReason`] which downstream reward code maps to a zero
//! format reward.

use serde::{Deserialize, Serialize};
use thiserror::Error;

const THINK_OPEN: &str = "<think>";
const THINK_CLOSE: &str = "</think>";
const ANSWER_OPEN: &str = "<answer>";
const ANSWER_CLOSE: &str = "</answer>";

/// The four structural tags, in canonical order.
pub const STRUCTURAL_TAGS: [&str; 4] = [THINK_OPEN, THINK_CLOSE, ANSWER_OPEN, ANSWER_CLOSE];

/// Why a raw response failed the strict format check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    /// One of the four structural tags is absent.
    MissingTag,
    /// Tags are duplicated or appear out of order.
    TagOrder,
    /// The think span is empty or whitespace-only.
    EmptyThink,
    /// The answer payload does not match the key-value grammar.
    UnparseableAnswer,
    /// The action label is not a member of the registry.
    UnknownAction,
    /// A velocity is non-finite or exceeds the configured limits.
    VelocityOutOfRange,
    /// Extra text outside (or between) the tag pairs.
    TrailingGarbage,
}

impl FailureReason {
    pub fn as_str(self) -> &'static str {
        match self {
            FailureReason::MissingTag => "missing_tag",
            FailureReason::TagOrder => "tag_order",
            FailureReason::EmptyThink => "empty_think",
            FailureReason::UnparseableAnswer => "unparseable_answer",
            FailureReason::UnknownAction => "unknown_action",
            FailureReason::VelocityOutOfRange => "velocity_out_of_range",
            FailureReason::TrailingGarbage => "trailing_garbage",
        }
    }
}

/// Verdict of the strict format check. `valid` is true iff `failure_reason`
/// is `None`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormatVerdict {
    pub valid: bool,
    pub failure_reason: Option<FailureReason>,
}

impl FormatVerdict {
    pub fn ok() -> Self {
        FormatVerdict { valid: true, failure_reason: None }
    }

    pub fn fail(reason: FailureReason) -> Self {
        FormatVerdict { valid: false, failure_reason: Some(reason) }
    }
}

/// A discrete high-level action drawn from the active registry.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionLabel(String);

impl ActionLabel {
    pub fn new(name: impl Into<String>) -> Self {
        ActionLabel(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for ActionLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// The distinguished label that terminates an episode.
pub const STOP_LABEL: &str = "stop";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RegistryError {
    #[error("action registry must not be empty")]
    Empty,
    #[error("action registry must contain the `stop` label")]
    MissingStop,
    #[error("duplicate action label `{0}`")]
    Duplicate(String),
    #[error("action label `{0}` must be non-empty and use only [A-Za-z0-9_]")]
    BadLabel(String),
}

/// Closed, case-sensitive set of action labels. Ordering is stable and is
/// what the policy vocabulary indexes by.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionRegistry {
    labels: Vec<String>,
}

impl ActionRegistry {
    pub fn new(labels: Vec<String>) -> Result<Self, RegistryError> {
        if labels.is_empty() {
            return Err(RegistryError::Empty);
        }
        if !labels.iter().any(|l| l == STOP_LABEL) {
            return Err(RegistryError::MissingStop);
        }
        for (i, l) in labels.iter().enumerate() {
            if !is_valid_label(l) {
                return Err(RegistryError::BadLabel(l.clone()));
            }
            if labels[..i].contains(l) {
                return Err(RegistryError::Duplicate(l.clone()));
            }
        }
        Ok(ActionRegistry { labels })
    }

    pub fn contains(&self, name: &str) -> bool {
        self.labels.iter().any(|l| l == name)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn stop(&self) -> ActionLabel {
        ActionLabel::new(STOP_LABEL)
    }

    pub fn digest(&self) -> String {
        crate::digest_of(&self.labels.join("\u{1f}"))
    }
}

impl Default for ActionRegistry {
    /// The default label set: `stop` plus the four behavior families the
    /// arena suites exercise.
    fn default() -> Self {
        ActionRegistry::new(
            ["stop", "move", "crawl", "unload", "distinguish"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        )
        .expect("default registry is valid")
    }
}

fn is_valid_label(s: &str) -> bool {
    !s.is_empty()
        && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
        && s.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
}

/// Body-frame velocity limits, from the environment config.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityLimits {
    /// Max |vx| and |vy| in m/s.
    pub v_max: f64,
    /// Max |wyaw| in rad/s.
    pub w_max: f64,
}

impl Default for VelocityLimits {
    fn default() -> Self {
        VelocityLimits { v_max: 1.0, w_max: 1.0 }
    }
}

/// The executable action vector: three body-frame velocities plus one
/// discrete action label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlCommand {
    /// Linear velocity, body-frame x, m/s.
    pub vx: f64,
    /// Linear velocity, body-frame y, m/s.
    pub vy: f64,
    /// Angular velocity about yaw, rad/s.
    pub wyaw: f64,
    pub action: ActionLabel,
}

impl ControlCommand {
    pub fn new(vx: f64, vy: f64, wyaw: f64, action: ActionLabel) -> Self {
        ControlCommand { vx, vy, wyaw, action }
    }

    /// Zero-velocity stop command.
    pub fn stop() -> Self {
        ControlCommand::new(0.0, 0.0, 0.0, ActionLabel::new(STOP_LABEL))
    }

    pub fn within_limits(&self, limits: VelocityLimits) -> bool {
        self.vx.is_finite()
            && self.vy.is_finite()
            && self.wyaw.is_finite()
            && self.vx.abs() <= limits.v_max
            && self.vy.abs() <= limits.v_max
            && self.wyaw.abs() <= limits.w_max
    }
}

/// A validated think/answer pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedResponse {
    pub think: String,
    pub command: ControlCommand,
    pub raw: String,
}

/// Locate the four tags and return the exact think/answer interiors, or the
/// structural failure. Shared by the parser, the tags-only check used for
/// free-text summaries, and the data-engine splitter.
pub fn split_tags_strict(raw: &str) -> Result<(&str, &str), FailureReason> {
    let mut pos = [0usize; 4];
    for (slot, tag) in STRUCTURAL_TAGS.iter().enumerate() {
        let mut found = None;
        let mut count = 0;
        let mut from = 0;
        while let Some(i) = raw[from..].find(tag) {
            count += 1;
            if found.is_none() {
                found = Some(from + i);
            }
            from += i + tag.len();
        }
        match (count, found) {
            (0, _) => return Err(FailureReason::MissingTag),
            (1, Some(i)) => pos[slot] = i,
            _ => return Err(FailureReason::TagOrder),
        }
    }
    // `</think>` contains `<think>`? No: distinct literals, but `</think>`
    // does contain no other tag and vice versa, so the counts above are
    // independent.
    if !(pos[0] < pos[1] && pos[1] < pos[2] && pos[2] < pos[3]) {
        return Err(FailureReason::TagOrder);
    }
    let before = &raw[..pos[0]];
    let between = &raw[pos[1] + THINK_CLOSE.len()..pos[2]];
    let after = &raw[pos[3] + ANSWER_CLOSE.len()..];
    if !before.trim().is_empty() || !between.is_empty() || !after.trim().is_empty() {
        return Err(FailureReason::TrailingGarbage);
    }
    let think = &raw[pos[0] + THINK_OPEN.len()..pos[1]];
    let answer = &raw[pos[2] + ANSWER_OPEN.len()..pos[3]];
    if think.trim().is_empty() {
        return Err(FailureReason::EmptyThink);
    }
    Ok((think, answer))
}

/// Tags-only structural check for responses whose answer is free text
/// (episode- and navigation-level summaries). The answer must be non-empty
/// but is not parsed as a command.
pub fn check_tag_structure(raw: &str) -> FormatVerdict {
    match split_tags_strict(raw) {
        Ok((_, answer)) => {
            if answer.trim().is_empty() {
                FormatVerdict::fail(FailureReason::UnparseableAnswer)
            } else {
                FormatVerdict::ok()
            }
        }
        Err(reason) => FormatVerdict::fail(reason),
    }
}

/// Scan a float token: optional minus sign, one or more digits, optional
/// '.' plus one or more digits. Exponents and non-finite spellings are
/// rejected by construction. Returns (consumed byte length, value).
fn scan_float(s: &str) -> Option<(usize, f64)> {
    let bytes = s.as_bytes();
    let mut i = 0;
    if bytes.first() == Some(&b'-') {
        i = 1;
    }
    let int_start = i;
    while i < bytes.len() && bytes[i].is_ascii_digit() {
        i += 1;
    }
    if i == int_start {
        return None;
    }
    if i < bytes.len() && bytes[i] == b'.' {
        let frac_start = i + 1;
        let mut j = frac_start;
        while j < bytes.len() && bytes[j].is_ascii_digit() {
            j += 1;
        }
        if j == frac_start {
            return None;
        }
        i = j;
    }
    let value: f64 = s[..i].parse().ok()?;
    Some((i, value))
}

fn eat<'a>(s: &'a str, lit: &str) -> Option<&'a str> {
    s.strip_prefix(lit)
}

/// Parse the answer payload `vx=F vy=F wyaw=F action=L`.
fn parse_answer(
    answer: &str,
    registry: &ActionRegistry,
    limits: VelocityLimits,
) -> Result<ControlCommand, FailureReason> {
    let mut rest = eat(answer, "vx=").ok_or(FailureReason::UnparseableAnswer)?;
    let mut vals = [0.0f64; 3];
    for (i, key) in [" vy=", " wyaw=", " action="].iter().enumerate() {
        let (n, v) = scan_float(rest).ok_or(FailureReason::UnparseableAnswer)?;
        vals[i] = v;
        rest = eat(&rest[n..], key).ok_or(FailureReason::UnparseableAnswer)?;
    }
    if rest.is_empty() || !is_valid_label(rest) {
        return Err(FailureReason::UnparseableAnswer);
    }
    if !registry.contains(rest) {
        return Err(FailureReason::UnknownAction);
    }
    let command = ControlCommand::new(vals[0], vals[1], vals[2], ActionLabel::new(rest));
    if !command.within_limits(limits) {
        return Err(FailureReason::VelocityOutOfRange);
    }
    Ok(command)
}

/// Deterministically parse raw model text into an executable command.
///
/// Failure order: structural tags, empty think, answer grammar, registry
/// membership, velocity bounds — first failure wins.
pub fn parse_response(
    raw: &str,
    registry: &ActionRegistry,
    limits: VelocityLimits,
) -> Result<ParsedResponse, FailureReason> {
    let (think, answer) = split_tags_strict(raw)?;
    let command = parse_answer(answer, registry, limits)?;
    Ok(ParsedResponse { think: think.to_string(), command, raw: raw.to_string() })
}

/// Strict format check: valid iff [`parse_response`] succeeds.
pub fn check_format(raw: &str, registry: &ActionRegistry, limits: VelocityLimits) -> FormatVerdict {
    match parse_response(raw, registry, limits) {
        Ok(_) => FormatVerdict::ok(),
        Err(reason) => FormatVerdict::fail(reason),
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SerializeError {
    #[error("think text is empty")]
    EmptyThink,
    #[error("think text contains the structural tag `{0}`")]
    TagInThink(&'static str),
    #[error("command velocity is not finite")]
    NonFiniteVelocity,
}

/// Print a velocity in the canonical fixed three-decimal form.
pub fn format_velocity(v: f64) -> String {
    format!("{v:.3}")
}

/// Emit the canonical response text for a (think, command) pair.
pub fn serialize_response(think: &str, command: &ControlCommand) -> Result<String, SerializeError> {
    if think.trim().is_empty() {
        return Err(SerializeError::EmptyThink);
    }
    for tag in STRUCTURAL_TAGS {
        if think.contains(tag) {
            return Err(SerializeError::TagInThink(tag));
        }
    }
    if !(command.vx.is_finite() && command.vy.is_finite() && command.wyaw.is_finite()) {
        return Err(SerializeError::NonFiniteVelocity);
    }
    Ok(format!(
        "<think>{think}</think><answer>vx={} vy={} wyaw={} action={}</answer>",
        format_velocity(command.vx),
        format_velocity(command.vy),
        format_velocity(command.wyaw),
        command.action,
    ))
}
