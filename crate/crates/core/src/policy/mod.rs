//! The proposal side of the search: knowledge synthesis, rule grounding and
//! rectification, and expansion proposals, all served by a pluggable
//! provider that answers rendered prompts with text.

mod heuristic;
mod prompts;
mod remote;
mod scripted;

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::descriptors::registry;
use crate::ruledsl::{ErrorTrace, PROBE_SMILES};
use crate::tasks::TaskSpec;

pub use heuristic::HeuristicProvider;
pub use prompts::{PromptSet, PromptTemplate, TemplateId, RULE_GRAMMAR};
pub use remote::{RemoteConfig, RemoteProvider, TOKEN_ENV};
pub use scripted::{ScriptRecord, ScriptedProvider};

pub const MAX_SENTENCES: usize = 50;
pub const DEFAULT_WIDTH: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("provider unreachable: {0}")]
    Unreachable(String),
    #[error("script exhausted after {0} records")]
    ScriptExhausted(usize),
    #[error("script record {index} is a '{found}' record but a '{expected}' request was made")]
    ScriptKindMismatch {
        index: usize,
        expected: RequestKind,
        found: RequestKind,
    },
    #[error("script record {index} expects state '{expected}' but the search is at '{found}'")]
    ScriptStateMismatch {
        index: usize,
        expected: String,
        found: String,
    },
    #[error("response has no fenced block")]
    NoFencedBlock,
    #[error("empty response")]
    Empty,
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("template {id}: {msg}")]
    Template { id: TemplateId, msg: String },
    #[error("script file: {0}")]
    Script(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RequestKind {
    Synthesize,
    Ground,
    Rectify,
    Expand,
}

impl fmt::Display for RequestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RequestKind::Synthesize => "synthesize",
            RequestKind::Ground => "ground",
            RequestKind::Rectify => "rectify",
            RequestKind::Expand => "expand",
        })
    }
}

/// What the search is looking at when it asks for actions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum SearchState {
    Prediction { features: Vec<String> },
    Optimization { smiles: String },
}

impl SearchState {
    pub fn summary(&self) -> String {
        match self {
            SearchState::Prediction { features } => format!("feature set: ({})", features.join(", ")),
            SearchState::Optimization { smiles } => format!("molecule: {smiles}"),
        }
    }
}

/// Structured side of a request. Offline providers read this; remote ones
/// only see the rendered prompt.
#[derive(Debug, Clone, PartialEq)]
pub enum RequestContext {
    Synthesize { task: TaskSpec },
    Ground { sentence: String },
    Rectify { sentence: String, source: String, trace: ErrorTrace },
    Expand { task: TaskSpec, state: SearchState, knowledge: Vec<String>, k: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyRequest {
    pub prompt: String,
    pub context: RequestContext,
}

impl PolicyRequest {
    pub fn kind(&self) -> RequestKind {
        match self.context {
            RequestContext::Synthesize { .. } => RequestKind::Synthesize,
            RequestContext::Ground { .. } => RequestKind::Ground,
            RequestContext::Rectify { .. } => RequestKind::Rectify,
            RequestContext::Expand { .. } => RequestKind::Expand,
        }
    }
}

/// Answers prompts with free text. Implementations must be callable from
/// several threads at once.
pub trait PolicyProvider: Send + Sync {
    fn id(&self) -> String;
    fn complete(&self, request: &PolicyRequest) -> Result<String, PolicyError>;
}

/// An action proposed for a search state. For molecules `candidate` is a
/// SMILES string and `transform` may name the library edit that produced
/// it; for feature sets it is a descriptor name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionProposal {
    pub candidate: String,
    #[serde(default)]
    pub rationale: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transform: Option<TransformRef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformRef {
    pub name: String,
    #[serde(default)]
    pub match_index: usize,
}

/// Payload of the first fenced block (```` ``` ````) in `text`; an optional
/// language tag after the opening fence is dropped.
pub fn extract_fenced(text: &str) -> Result<String, PolicyError> {
    let open = text.find("```").ok_or(PolicyError::NoFencedBlock)?;
    let after = &text[open + 3..];
    let body_start = after.find('\n').map(|i| i + 1).ok_or(PolicyError::NoFencedBlock)?;
    let body = &after[body_start..];
    let close = body.find("```").ok_or(PolicyError::NoFencedBlock)?;
    Ok(body[..close].trim().to_string())
}

/// A provider together with the prompt templates it is driven by.
#[derive(Clone)]
pub struct Policy {
    provider: Arc<dyn PolicyProvider>,
    prompts: PromptSet,
}

impl fmt::Debug for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Policy").field("provider", &self.provider.id()).finish()
    }
}

impl Policy {
    pub fn new(provider: Arc<dyn PolicyProvider>) -> Self {
        Policy {
            provider,
            prompts: PromptSet::standard(),
        }
    }

    pub fn with_prompts(provider: Arc<dyn PolicyProvider>, prompts: PromptSet) -> Self {
        Policy { provider, prompts }
    }

    pub fn provider_id(&self) -> String {
        self.provider.id()
    }

    pub fn prompts(&self) -> &PromptSet {
        &self.prompts
    }

    fn ask(&self, prompt: String, context: RequestContext) -> Result<String, PolicyError> {
        let reply = self.provider.complete(&PolicyRequest { prompt, context })?;
        extract_fenced(&reply)
    }

    /// Asks for textual rules. Sentences not starting with "Calculate" are
    /// dropped with a warning; duplicates (ignoring case) are removed.
    pub fn synthesize_knowledge(&self, task: &TaskSpec) -> Result<Vec<String>, PolicyError> {
        let prompt = self.prompts.p0.render(&[("task", &task.describe())])?;
        let payload = self.ask(prompt, RequestContext::Synthesize { task: task.clone() })?;
        let raw = parse_sentences(&payload)?;
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for s in raw {
            let s = s.trim().to_string();
            if !s.starts_with("Calculate") {
                log::warn!("dropping rule not starting with 'Calculate': {s}");
                continue;
            }
            if seen.insert(s.to_lowercase()) {
                out.push(s);
            }
        }
        if out.is_empty() {
            return Err(PolicyError::Empty);
        }
        out.truncate(MAX_SENTENCES);
        Ok(out)
    }

    /// First-attempt rule source for one sentence.
    pub fn ground(&self, sentence: &str) -> Result<String, PolicyError> {
        let prompt = self.prompts.ground.render(&[
            ("sentence", sentence),
            ("grammar", RULE_GRAMMAR),
            ("descriptors", &descriptor_list()),
        ])?;
        self.ask(
            prompt,
            RequestContext::Ground {
                sentence: sentence.to_string(),
            },
        )
    }

    /// Revised source after a failed check; the prompt carries the error
    /// message and position verbatim.
    pub fn rectify(&self, sentence: &str, src: &str, trace: &ErrorTrace) -> Result<String, PolicyError> {
        let prompt = self.prompts.pfix.render(&[
            ("probe", PROBE_SMILES),
            ("sentence", sentence),
            ("source", src),
            ("phase", &trace.phase.to_string()),
            ("position", &trace.position.to_string()),
            ("error", &trace.message),
            ("grammar", RULE_GRAMMAR),
            ("descriptors", &descriptor_list()),
        ])?;
        self.ask(
            prompt,
            RequestContext::Rectify {
                sentence: sentence.to_string(),
                source: src.to_string(),
                trace: trace.clone(),
            },
        )
    }

    /// At most `k` proposals. Feature proposals never repeat a feature
    /// already in the state; unusable entries are skipped.
    pub fn propose_actions(
        &self,
        task: &TaskSpec,
        state: &SearchState,
        knowledge: &[String],
        k: usize,
    ) -> Result<Vec<ActionProposal>, PolicyError> {
        let k = k.max(1);
        let instructions = match state {
            SearchState::Prediction { .. } => format!(
                "Each candidate is one descriptor name to add to the feature set, chosen from: {}.",
                descriptor_list()
            ),
            SearchState::Optimization { .. } => {
                "Each candidate is the complete SMILES of a modified molecule.".to_string()
            }
        };
        let rules = if knowledge.is_empty() {
            "(none)".to_string()
        } else {
            knowledge
                .iter()
                .enumerate()
                .map(|(i, s)| format!("{}. {s}", i + 1))
                .collect::<Vec<_>>()
                .join("\n")
        };
        let prompt = self.prompts.expand.render(&[
            ("task", &task.describe()),
            ("state", &state.summary()),
            ("rules", &rules),
            ("instructions", &instructions),
            ("k", &k.to_string()),
        ])?;
        let payload = self.ask(
            prompt,
            RequestContext::Expand {
                task: task.clone(),
                state: state.clone(),
                knowledge: knowledge.to_vec(),
                k,
            },
        )?;
        let proposals: Vec<ActionProposal> = serde_json::from_str(&payload)
            .map_err(|e| PolicyError::Malformed(format!("expected a JSON array of proposals: {e}")))?;
        let mut taken: BTreeSet<String> = match state {
            SearchState::Prediction { features } => features.iter().cloned().collect(),
            SearchState::Optimization { .. } => BTreeSet::new(),
        };
        let mut out = Vec::new();
        for p in proposals {
            let candidate = p.candidate.trim();
            if candidate.is_empty() && p.transform.is_none() {
                continue;
            }
            if matches!(state, SearchState::Prediction { .. }) && !taken.insert(candidate.to_string()) {
                continue;
            }
            out.push(ActionProposal {
                candidate: candidate.to_string(),
                ..p
            });
            if out.len() == k {
                break;
            }
        }
        Ok(out)
    }
}

fn descriptor_list() -> String {
    registry().names().collect::<Vec<_>>().join(", ")
}

/// Accepts `{"rules": [...]}`, a bare JSON array, or one sentence per line
/// (leading list numbering is stripped).
fn parse_sentences(payload: &str) -> Result<Vec<String>, PolicyError> {
    #[derive(Deserialize)]
    struct Rules {
        rules: Vec<String>,
    }
    if let Ok(r) = serde_json::from_str::<Rules>(payload) {
        return Ok(r.rules);
    }
    if let Ok(v) = serde_json::from_str::<Vec<String>>(payload) {
        return Ok(v);
    }
    if payload.trim_start().starts_with(['{', '[']) {
        return Err(PolicyError::Malformed("rules must be a list of strings".into()));
    }
    Ok(payload
        .lines()
        .map(|l| {
            l.trim()
                .trim_start_matches(|c: char| c.is_ascii_digit())
                .trim_start_matches(['.', ')', '-', '*'])
                .trim()
                .to_string()
        })
        .filter(|l| !l.is_empty())
        .collect())
}
