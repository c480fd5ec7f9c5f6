//! Token vocabulary over the response grammar.
//!
//! Tokens are whole surface strings: the four structural tags, the four
//! answer keys (each owning its leading space), sign/digit/decimal pieces
//! for velocities, the action labels, a bank of canned reasoning phrases,
//! and an end-of-sequence token with an empty surface. Detokenization is
//! plain concatenation; tokenization is greedy longest-match, so every
//! canonical response round-trips through the token stream.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::response::{ActionRegistry, STRUCTURAL_TAGS};

/// Hard cap on vocabulary size; keeps per-step softmax and checkpoints tiny.
pub const MAX_VOCAB: usize = 64;

pub const EOS_NAME: &str = "<eos>";

/// Canned reasoning phrases. The oracle controller emits these, the data
/// engine reuses them for teacher outputs, and the policy vocabulary carries
/// each as a single token.
pub mod phrases {
    pub const STOP: &str = "goal reached, stopping here";
    pub const TURN_LEFT: &str = "turning left toward the next waypoint";
    pub const TURN_RIGHT: &str = "turning right toward the next waypoint";
    pub const FORWARD: &str = "moving forward along the planned path";
    pub const ROTATE: &str = "rotating in place to face the waypoint";
    pub const CRAWL: &str = "crawling low to pass under the barrier";
    pub const UNLOAD: &str = "unloading the payload at the goal";
    pub const DISTINGUISH: &str = "inspecting the marker to distinguish the target";

    pub const EPISODE_THINK: &str = "reviewing the executed route and its outcome";
    pub const EPISODE_DONE: &str =
        "the route was completed and every required behavior was performed in order";
    pub const EPISODE_INCOMPLETE: &str = "the route ended before reaching the goal";

    pub const NAV_THINK: &str = "planning the waypoint sequence toward the goal";
    pub const NAV_PLAN: &str =
        "follow the planned waypoints in order, perform the required behavior, and stop at the goal";
    pub const NAV_PLAN_SIMPLE: &str =
        "head toward the goal, adjusting heading at each step, and stop inside the target circle";

    pub const ALL: [&str; 14] = [
        STOP,
        TURN_LEFT,
        TURN_RIGHT,
        FORWARD,
        ROTATE,
        CRAWL,
        UNLOAD,
        DISTINGUISH,
        EPISODE_THINK,
        EPISODE_DONE,
        EPISODE_INCOMPLETE,
        NAV_THINK,
        NAV_PLAN,
        NAV_PLAN_SIMPLE,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    /// Unique identifier. Equals the surface except for end-of-sequence.
    pub name: String,
    /// Text contributed on detokenization; empty for end-of-sequence.
    pub surface: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum VocabError {
    #[error("vocabulary exceeds {MAX_VOCAB} tokens ({0})")]
    TooLarge(usize),
    #[error("duplicate token name `{0}`")]
    DuplicateName(String),
    #[error("duplicate token surface `{0}`")]
    DuplicateSurface(String),
    #[error("vocabulary must contain the end-of-sequence token")]
    MissingEos,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<Token>,
    eos: usize,
    /// Non-eos token indices sorted by surface length, longest first.
    #[serde(skip)]
    match_order: Vec<usize>,
}

impl Vocabulary {
    pub fn new(tokens: Vec<Token>) -> Result<Self, VocabError> {
        if tokens.len() > MAX_VOCAB {
            return Err(VocabError::TooLarge(tokens.len()));
        }
        for (i, t) in tokens.iter().enumerate() {
            if tokens[..i].iter().any(|u| u.name == t.name) {
                return Err(VocabError::DuplicateName(t.name.clone()));
            }
            if !t.surface.is_empty() && tokens[..i].iter().any(|u| u.surface == t.surface) {
                return Err(VocabError::DuplicateSurface(t.surface.clone()));
            }
        }
        let eos = tokens
            .iter()
            .position(|t| t.name == EOS_NAME)
            .ok_or(VocabError::MissingEos)?;
        let mut vocab = Vocabulary { tokens, eos, match_order: Vec::new() };
        vocab.rebuild_match_order();
        Ok(vocab)
    }

    fn rebuild_match_order(&mut self) {
        let mut order: Vec<usize> =
            (0..self.tokens.len()).filter(|&i| !self.tokens[i].surface.is_empty()).collect();
        order.sort_by(|&a, &b| {
            self.tokens[b]
                .surface
                .len()
                .cmp(&self.tokens[a].surface.len())
                .then(a.cmp(&b))
        });
        self.match_order = order;
    }

    /// Rebuild internal tables after deserialization.
    pub fn after_load(mut self) -> Self {
        self.rebuild_match_order();
        self
    }

    /// The standard grammar-covering vocabulary for a registry.
    pub fn standard(registry: &ActionRegistry) -> Self {
        let mut tokens: Vec<Token> = Vec::new();
        let mut push = |s: &str| {
            tokens.push(Token { name: s.to_string(), surface: s.to_string() });
        };
        for tag in STRUCTURAL_TAGS {
            push(tag);
        }
        for key in ["vx=", " vy=", " wyaw=", " action="] {
            push(key);
        }
        push("-");
        push(".");
        for d in 0..10u32 {
            push(&d.to_string());
        }
        for label in registry.labels() {
            push(label);
        }
        for phrase in phrases::ALL {
            push(phrase);
        }
        tokens.push(Token { name: EOS_NAME.to_string(), surface: String::new() });
        Vocabulary::new(tokens).expect("standard vocabulary is valid")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn eos(&self) -> usize {
        self.eos
    }

    pub fn token(&self, index: usize) -> &Token {
        &self.tokens[index]
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.tokens.iter().position(|t| t.name == name)
    }

    /// Concatenate surface forms.
    pub fn detokenize(&self, indices: &[usize]) -> String {
        indices.iter().map(|&i| self.tokens[i].surface.as_str()).collect()
    }

    /// Greedy longest-match tokenization; `None` if the text cannot be
    /// covered by token surfaces. Does not append end-of-sequence.
    pub fn tokenize(&self, text: &str) -> Option<Vec<usize>> {
        let mut out = Vec::new();
        let mut rest = text;
        while !rest.is_empty() {
            let hit = self
                .match_order
                .iter()
                .copied()
                .find(|&i| rest.starts_with(self.tokens[i].surface.as_str()))?;
            out.push(hit);
            rest = &rest[self.tokens[hit].surface.len()..];
        }
        Some(out)
    }

    /// Tokenize and append end-of-sequence (the form SFT targets use).
    pub fn tokenize_with_eos(&self, text: &str) -> Option<Vec<usize>> {
        let mut t = self.tokenize(text)?;
        t.push(self.eos);
        Some(t)
    }

    pub fn digest(&self) -> String {
        let joined: String = self
            .tokens
            .iter()
            .map(|t| format!("{}\u{1e}{}\u{1f}", t.name, t.surface))
            .collect();
        crate::digest_of(&joined)
    }
}
