//! Deterministic offline backends.
//!
//! Both mocks answer from the request content alone (plus the sampling
//! seed), never from arrival order, so concurrent runs stay reproducible.

use std::collections::HashMap;
use std::sync::Mutex;

use serde::Deserialize;

use super::{AgentError, AgentRole, ChatBackend, ChatRequest, ChatTranscript, GenerationConfig, Usage};
use crate::seeds::{fnv1a64, mix64};

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(untagged)]
pub enum Reply {
    Text(String),
    Transport { transport: String },
    Endpoint { status: u16, body: String },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Greedy requests get the first reply; sampled ones pick by seed.
    #[default]
    Seeded,
    /// The n-th identical request gets the n-th reply (last one repeats).
    Sequence,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct ScriptRule {
    #[serde(default)]
    pub role: Option<AgentRole>,
    /// Substring the user prompt must contain.
    #[serde(default)]
    pub contains: Option<String>,
    pub replies: Vec<Reply>,
    #[serde(default)]
    pub selection: Selection,
}

impl ScriptRule {
    pub fn new(role: Option<AgentRole>, contains: Option<&str>, replies: Vec<Reply>) -> Self {
        Self { role, contains: contains.map(String::from), replies, selection: Selection::Seeded }
    }

    pub fn text(role: AgentRole, contains: Option<&str>, reply: &str) -> Self {
        Self::new(Some(role), contains, vec![Reply::Text(reply.to_string())])
    }

    pub fn sequence(mut self) -> Self {
        self.selection = Selection::Sequence;
        self
    }

    fn matches(&self, req: &ChatRequest) -> bool {
        self.role.is_none_or(|r| r == req.role) && self.contains.as_ref().is_none_or(|c| req.user.contains(c.as_str()))
    }
}

#[derive(Deserialize)]
struct ScriptFile {
    rules: Vec<ScriptRule>,
}

fn transcript(req: &ChatRequest, cfg: &GenerationConfig, raw: String) -> ChatTranscript {
    ChatTranscript {
        role: req.role,
        model: cfg.model.clone(),
        system: req.system.clone(),
        user: req.user.clone(),
        usage: Usage {
            prompt_tokens: req.user.split_whitespace().count() as u64,
            completion_tokens: raw.split_whitespace().count() as u64,
        },
        raw,
        latency_ms: 0,
        retries: 0,
        temperature: cfg.temperature,
        seed: cfg.seed,
    }
}

/// Replies from an ordered rule list; the first matching rule answers.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    rules: Vec<ScriptRule>,
    seen: Mutex<HashMap<(usize, u64), usize>>,
}

impl ScriptedBackend {
    pub fn new(rules: Vec<ScriptRule>) -> Self {
        Self { rules, seen: Mutex::default() }
    }

    /// Parses `{"rules": [{role?, contains?, replies, selection?}]}`.
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        let file: ScriptFile = serde_json::from_str(text)?;
        Ok(Self::new(file.rules))
    }

    fn pick(&self, rule_ix: usize, req: &ChatRequest, cfg: &GenerationConfig) -> &Reply {
        let rule = &self.rules[rule_ix];
        let n = rule.replies.len();
        let ix = match rule.selection {
            Selection::Seeded => match cfg.seed {
                Some(seed) if !cfg.is_greedy() => (mix64(seed ^ fnv1a64(req.user.as_bytes())) % n as u64) as usize,
                _ => 0,
            },
            Selection::Sequence => {
                let key = (rule_ix, fnv1a64(req.user.as_bytes()) ^ cfg.seed.unwrap_or(0));
                let mut seen = self.seen.lock().unwrap_or_else(|p| p.into_inner());
                let count = seen.entry(key).or_insert(0);
                let ix = (*count).min(n - 1);
                *count += 1;
                ix
            }
        };
        &rule.replies[ix]
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, req: &ChatRequest, cfg: &GenerationConfig) -> Result<ChatTranscript, AgentError> {
        let rule_ix = self
            .rules
            .iter()
            .position(|r| r.matches(req) && !r.replies.is_empty())
            .ok_or_else(|| AgentError::Script(format!("no rule for {} request", req.role)))?;
        match self.pick(rule_ix, req, cfg) {
            Reply::Text(t) => Ok(transcript(req, cfg, t.clone())),
            Reply::Transport { transport } => Err(AgentError::Transport { attempts: 1, last: transport.clone() }),
            Reply::Endpoint { status, body } => Err(AgentError::Endpoint { status: *status, body: body.clone() }),
        }
    }
}

/// Sign of a relation when composing chains: +1 activating, -1 repressing.
pub fn relation_sign(relation: &str) -> Option<i8> {
    match relation {
        "stimulate" | "positive_correlate" | "cause" | "associate" | "bind" | "interact" | "cotreat" | "drug_interact"
        | "compare" => Some(1),
        "inhibit" | "negative_correlate" | "treat" | "prevent" => Some(-1),
        _ => None,
    }
}

/// One rendered hop `(a, relation, b)`.
#[derive(Debug, Clone, PartialEq, Eq)]
struct HopText {
    from: String,
    relation: String,
    to: String,
}

fn parse_hop(inner: &str) -> Option<HopText> {
    let parts: Vec<&str> = inner.split(", ").collect();
    let r = (1..parts.len().saturating_sub(1)).find(|&i| relation_sign(parts[i]).is_some())?;
    Some(HopText { from: parts[..r].join(", "), relation: parts[r].to_string(), to: parts[r + 1..].join(", ") })
}

fn parse_chain_line(line: &str) -> Option<Vec<HopText>> {
    let line = line.trim();
    let inner = line.strip_prefix('(')?.strip_suffix(')')?;
    inner.split("), (").map(parse_hop).collect()
}

fn section<'a>(prompt: &'a str, heading: &str) -> Vec<&'a str> {
    let Some(start) = prompt.rfind(heading) else {
        return Vec::new();
    };
    prompt[start + heading.len()..].lines().skip(1).take_while(|l| !l.trim().is_empty()).collect()
}

fn last_line_after<'a>(prompt: &'a str, marker: &str) -> Option<&'a str> {
    let start = prompt.rfind(marker)? + marker.len();
    prompt[start..].lines().next().map(str::trim)
}

/// Rule-following stand-in for real models.
///
/// * enricher: keywords = the question's entity span plus entity names
///   from the relation chains in the context;
/// * generator: one reasoning step per relation chain in the context, label
///   from the majority sign of the chains (no chains ⇒ `no_relation`);
/// * verifier: affirms when the statement uses the triple's relation word.
#[derive(Debug, Clone)]
pub struct RuleBasedBackend {
    pub max_steps: usize,
}

impl Default for RuleBasedBackend {
    fn default() -> Self {
        Self { max_steps: 10 }
    }
}

pub const RELATIONS_HEADING: &str = "Neighbor relations:";
pub const DOCUMENTS_HEADING: &str = "Retrieved documents:";

impl RuleBasedBackend {
    fn chains(prompt: &str) -> Vec<Vec<HopText>> {
        section(prompt, RELATIONS_HEADING).into_iter().filter_map(parse_chain_line).collect()
    }

    fn question_span(prompt: &str) -> Option<String> {
        let q = last_line_after(prompt, "Question: ")?;
        let between = q.split_once(" between ")?.1;
        Some(between.trim_end_matches('?').to_string())
    }

    fn enrich(prompt: &str) -> String {
        let mut words: Vec<String> = Self::question_span(prompt).into_iter().collect();
        for chain in Self::chains(prompt) {
            for hop in chain {
                for name in [hop.from, hop.to] {
                    if !words.iter().any(|w| w.contains(&name)) {
                        words.push(name);
                    }
                }
            }
        }
        words.join(" ")
    }

    fn step_text(chain: &[HopText]) -> String {
        let mut text = format!("({} has the relation {} with {})", chain[0].from, chain[0].relation, chain[0].to);
        for hop in &chain[1..] {
            text = format!("({text}, which has the relation {} with {})", hop.relation, hop.to);
        }
        text + "."
    }

    fn generate(&self, prompt: &str) -> String {
        let chains = Self::chains(prompt);
        let (mut up, mut down) = (0usize, 0usize);
        for chain in &chains {
            let sign: i8 = chain.iter().map(|h| relation_sign(&h.relation).unwrap_or(1)).product();
            if sign > 0 {
                up += 1;
            } else {
                down += 1;
            }
        }
        let label = match up.cmp(&down) {
            std::cmp::Ordering::Greater => "stimulate",
            std::cmp::Ordering::Less => "inhibit",
            std::cmp::Ordering::Equal => "no_relation",
        };
        let wants_reasoning = prompt.contains("\"Reasoning: your_reasoning_steps\"");
        if !wants_reasoning {
            return format!("Answer: ['{label}']");
        }
        let reasoning = if chains.is_empty() {
            "There is no established link between the two entities in the available information.".to_string()
        } else {
            chains.iter().take(self.max_steps).map(|c| Self::step_text(c)).collect::<Vec<_>>().join(" | ")
        };
        format!("Reasoning: {reasoning}\nAnswer: ['{label}']")
    }

    fn verify(prompt: &str) -> String {
        let relation = last_line_after(prompt, "Relation: ").and_then(parse_chain_line).and_then(|mut c| c.pop());
        let statement = last_line_after(prompt, "Statement: ").unwrap_or_default().to_lowercase();
        let supported = relation.as_ref().is_some_and(|hop| {
            let label = hop.relation.to_lowercase();
            let spaced = label.replace('_', " ");
            let stem = spaced.trim_end_matches('e');
            statement.contains(&label) || statement.contains(stem)
        });
        let rel = relation.map(|h| h.relation).unwrap_or_default();
        if supported {
            format!("Reasoning: The statement asserts the {rel} relation between the entities.\nAnswer: ['yes']")
        } else {
            format!("Reasoning: The statement does not assert the {rel} relation.\nAnswer: ['no']")
        }
    }
}

impl ChatBackend for RuleBasedBackend {
    fn complete(&self, req: &ChatRequest, cfg: &GenerationConfig) -> Result<ChatTranscript, AgentError> {
        let raw = match req.role {
            AgentRole::Enricher => Self::enrich(&req.user),
            AgentRole::Generator => self.generate(&req.user),
            AgentRole::Verifier => Self::verify(&req.user),
        };
        Ok(transcript(req, cfg, raw))
    }
}
