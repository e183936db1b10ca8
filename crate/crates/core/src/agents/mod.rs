//! The three agent roles (enricher, generator, verifier): prompt templates,
//! chat transport, output parsing and deterministic mock backends.

mod http;
mod mock;
mod parse;
mod template;

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{EndpointConfig, HttpReply, HttpTransport, OpenAiClient, RetryPolicy, UreqTransport};
pub use mock::{relation_sign, Reply, RuleBasedBackend, ScriptRule, ScriptedBackend, Selection, DOCUMENTS_HEADING, RELATIONS_HEADING};
pub use parse::{parse_answer, parse_keywords, parse_reasoning, parse_verdict, ParseError};
pub use template::{PromptTemplate, TemplateError, TemplateVariant, PLACEHOLDERS};

/// Hypothesis label. Declaration order is the fixed tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Inhibit,
    NoRelation,
    Stimulate,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Inhibit, Label::NoRelation, Label::Stimulate];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Inhibit => "inhibit",
            Label::NoRelation => "no_relation",
            Label::Stimulate => "stimulate",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().replace(' ', "_").as_str() {
            "inhibit" => Ok(Label::Inhibit),
            "stimulate" => Ok(Label::Stimulate),
            "no_relation" => Ok(Label::NoRelation),
            _ => Err(ParseError::NoAnswer(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentRole {
    Enricher,
    Generator,
    Verifier,
}

impl AgentRole {
    pub const ALL: [AgentRole; 3] = [AgentRole::Enricher, AgentRole::Generator, AgentRole::Verifier];
}

impl fmt::Display for AgentRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AgentRole::Enricher => "enricher",
            AgentRole::Generator => "generator",
            AgentRole::Verifier => "verifier",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub seed: Option<u64>,
}

impl GenerationConfig {
    pub fn greedy(model: impl Into<String>) -> Self {
        Self { model: model.into(), temperature: 0.0, max_tokens: 1024, seed: None }
    }

    pub fn sampled(model: impl Into<String>, temperature: f64, seed: u64) -> Self {
        Self { model: model.into(), temperature, max_tokens: 1024, seed: Some(seed) }
    }

    pub fn is_greedy(&self) -> bool {
        self.temperature == 0.0
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed: Some(seed), ..self.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub role: AgentRole,
    pub system: String,
    pub user: String,
}

impl ChatRequest {
    /// Whole prompt in the user message, empty system message.
    pub fn user(role: AgentRole, prompt: impl Into<String>) -> Self {
        Self { role, system: String::new(), user: prompt.into() }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatTranscript {
    pub role: AgentRole,
    pub model: String,
    pub system: String,
    pub user: String,
    /// Completion text exactly as received.
    pub raw: String,
    pub usage: Usage,
    pub latency_ms: u64,
    pub retries: u32,
    pub temperature: f64,
    pub seed: Option<u64>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("transport failure after {attempts} attempt(s): {last}")]
    Transport { attempts: u32, last: String },
    #[error("endpoint returned status {status}: {body}")]
    Endpoint { status: u16, body: String },
    #[error("malformed endpoint response: {0}")]
    Protocol(String),
    #[error("mock has no reply: {0}")]
    Script(String),
}

impl AgentError {
    /// Failures worth retrying at the instance level.
    pub fn is_transport(&self) -> bool {
        matches!(self, AgentError::Transport { .. })
    }
}

/// Anything that turns a chat request into a completion.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, req: &ChatRequest, cfg: &GenerationConfig) -> Result<ChatTranscript, AgentError>;
}

impl<B: ChatBackend + ?Sized> ChatBackend for Arc<B> {
    fn complete(&self, req: &ChatRequest, cfg: &GenerationConfig) -> Result<ChatTranscript, AgentError> {
        (**self).complete(req, cfg)
    }
}

/// Per-role backends.
#[derive(Clone)]
pub struct Agents {
    pub enricher: Arc<dyn ChatBackend>,
    pub generator: Arc<dyn ChatBackend>,
    pub verifier: Arc<dyn ChatBackend>,
}

impl Agents {
    pub fn uniform(backend: Arc<dyn ChatBackend>) -> Self {
        Self { enricher: backend.clone(), generator: backend.clone(), verifier: backend }
    }

    pub fn for_role(&self, role: AgentRole) -> &dyn ChatBackend {
        match role {
            AgentRole::Enricher => self.enricher.as_ref(),
            AgentRole::Generator => self.generator.as_ref(),
            AgentRole::Verifier => self.verifier.as_ref(),
        }
    }
}

/// Wraps a backend and counts successful and failed calls per role.
pub struct CountingBackend<B> {
    inner: B,
    counts: [AtomicUsize; 3],
}

impl<B: ChatBackend> CountingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self { inner, counts: Default::default() }
    }

    pub fn calls(&self, role: AgentRole) -> usize {
        self.counts[role as usize].load(Ordering::SeqCst)
    }

    pub fn total(&self) -> usize {
        AgentRole::ALL.iter().map(|&r| self.calls(r)).sum()
    }

    pub fn reset(&self) {
        for c in &self.counts {
            c.store(0, Ordering::SeqCst);
        }
    }
}

impl<B: ChatBackend> ChatBackend for CountingBackend<B> {
    fn complete(&self, req: &ChatRequest, cfg: &GenerationConfig) -> Result<ChatTranscript, AgentError> {
        self.counts[req.role as usize].fetch_add(1, Ordering::SeqCst);
        self.inner.complete(req, cfg)
    }
}

/// JSON-lines transcript log: one object per call.
pub struct TranscriptLog<W: Write + Send> {
    out: Mutex<W>,
}

impl<W: Write + Send> TranscriptLog<W> {
    pub fn new(out: W) -> Self {
        Self { out: Mutex::new(out) }
    }

    pub fn record(&self, t: &ChatTranscript) -> std::io::Result<()> {
        let line = serde_json::to_string(t).map_err(std::io::Error::other)?;
        let mut out = self.out.lock().map_err(|_| std::io::Error::other("transcript log poisoned"))?;
        writeln!(out, "{line}")
    }

    pub fn into_inner(self) -> W {
        self.out.into_inner().unwrap_or_else(|p| p.into_inner())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_order_and_names() {
        assert!(Label::Inhibit < Label::NoRelation && Label::NoRelation < Label::Stimulate);
        assert_eq!(serde_json::to_string(&Label::NoRelation).unwrap(), "\"no_relation\"");
        assert_eq!("No Relation".parse::<Label>().unwrap(), Label::NoRelation);
    }

    #[test]
    fn greedy_iff_zero_temperature() {
        assert!(GenerationConfig::greedy("m").is_greedy());
        assert!(!GenerationConfig::sampled("m", 0.7, 1).is_greedy());
    }

    #[test]
    fn transcript_log_writes_lines() {
        let log = TranscriptLog::new(Vec::new());
        let t = ChatTranscript {
            role: AgentRole::Generator,
            model: "m".into(),
            system: String::new(),
            user: "q".into(),
            raw: "Answer: ['inhibit']".into(),
            usage: Usage::default(),
            latency_ms: 0,
            retries: 0,
            temperature: 0.0,
            seed: None,
        };
        log.record(&t).unwrap();
        log.record(&t).unwrap();
        let text = String::from_utf8(log.into_inner()).unwrap();
        assert_eq!(text.lines().count(), 2);
        let back: ChatTranscript = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(back, t);
    }
}
