//! Dictionary entity linking over graph names and aliases.
//!
//! Matching is case-insensitive over the same alphanumeric tokens the
//! literature tokenizer produces, greedy left-to-right with the longest
//! surface winning at each position.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{EntityId, KnowledgeGraph};

#[derive(Debug, Error)]
pub enum LinkError {
    #[error("ner adapter: {0}")]
    Adapter(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    pub entity: EntityId,
    pub surface: String,
    /// Character offsets `[start, end)` into the linked text.
    pub span: (usize, usize),
}

pub trait EntityLinker: Send + Sync {
    fn link(&self, text: &str) -> Result<Vec<Mention>, LinkError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Collision {
    pub surface: String,
    pub kept: EntityId,
    pub dropped: EntityId,
}

#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    entries: HashMap<String, EntityId>,
    max_tokens: usize,
    collisions: Vec<Collision>,
}

struct Token {
    text: String,
    start: usize,
    end: usize,
}

/// Lowercased alphanumeric runs with their character spans.
fn tokens_with_spans(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    let mut current: Option<Token> = None;
    for (pos, c) in text.chars().enumerate() {
        if c.is_alphanumeric() {
            let tok = current.get_or_insert_with(|| Token { text: String::new(), start: pos, end: pos });
            tok.text.extend(c.to_lowercase());
            tok.end = pos + 1;
        } else if let Some(tok) = current.take() {
            out.push(tok);
        }
    }
    out.extend(current);
    out
}

pub fn normalize_surface(s: &str) -> String {
    tokens_with_spans(s).into_iter().map(|t| t.text).collect::<Vec<_>>().join(" ")
}

impl Lexicon {
    /// One entry per entity name and alias. A surface claimed by two
    /// entities goes to the lexicographically smaller id and is logged.
    pub fn build(g: &KnowledgeGraph) -> Self {
        let mut lex = Lexicon::default();
        for entity in g.entities() {
            for surface in std::iter::once(&entity.name).chain(&entity.aliases) {
                lex.insert(surface, &entity.id);
            }
        }
        lex
    }

    pub fn insert(&mut self, surface: &str, id: &EntityId) {
        let key = normalize_surface(surface);
        if key.is_empty() {
            return;
        }
        let n_tokens = key.split(' ').count();
        match self.entries.get_mut(&key) {
            Some(existing) if existing == id => {}
            Some(existing) => {
                let (kept, dropped) = if id < existing { (id.clone(), existing.clone()) } else { (existing.clone(), id.clone()) };
                *existing = kept.clone();
                self.collisions.push(Collision { surface: key, kept, dropped });
            }
            None => {
                self.entries.insert(key, id.clone());
                self.max_tokens = self.max_tokens.max(n_tokens);
            }
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, surface: &str) -> Option<&EntityId> {
        self.entries.get(&normalize_surface(surface))
    }

    pub fn surfaces(&self) -> impl Iterator<Item = (&str, &EntityId)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn collisions(&self) -> &[Collision] {
        &self.collisions
    }

    pub fn max_tokens(&self) -> usize {
        self.max_tokens
    }

    pub fn link_text(&self, text: &str) -> Vec<Mention> {
        let tokens = tokens_with_spans(text);
        let chars: Vec<char> = text.chars().collect();
        let mut mentions = Vec::new();
        let mut i = 0;
        while i < tokens.len() {
            let longest = self.max_tokens.min(tokens.len() - i);
            let hit = (1..=longest).rev().find_map(|len| {
                let key = tokens[i..i + len].iter().map(|t| t.text.as_str()).collect::<Vec<_>>().join(" ");
                self.entries.get(&key).map(|id| (len, id))
            });
            match hit {
                Some((len, id)) => {
                    let (start, end) = (tokens[i].start, tokens[i + len - 1].end);
                    mentions.push(Mention { entity: id.clone(), surface: chars[start..end].iter().collect(), span: (start, end) });
                    i += len;
                }
                None => i += 1,
            }
        }
        mentions
    }
}

impl EntityLinker for Lexicon {
    fn link(&self, text: &str) -> Result<Vec<Mention>, LinkError> {
        Ok(self.link_text(text))
    }
}

/// One record of the adapter's reply.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdapterMention {
    pub surface: String,
    pub entity_id: String,
    pub start: usize,
    pub end: usize,
}

/// Parses one reply line: a JSON array of mention records.
pub fn parse_adapter_reply(line: &str, text_chars: usize) -> Result<Vec<Mention>, LinkError> {
    let records: Vec<AdapterMention> = serde_json::from_str(line.trim()).map_err(|e| LinkError::Adapter(format!("bad reply: {e}")))?;
    let mut mentions = Vec::with_capacity(records.len());
    for r in records {
        if r.start >= r.end || r.end > text_chars {
            return Err(LinkError::Adapter(format!("span {}..{} outside text", r.start, r.end)));
        }
        let entity = EntityId::new(r.entity_id).map_err(|e| LinkError::Adapter(e.to_string()))?;
        mentions.push(Mention { entity, surface: r.surface, span: (r.start, r.end) });
    }
    mentions.sort_by_key(|m| m.span);
    if mentions.windows(2).any(|w| w[0].span.1 > w[1].span.0) {
        return Err(LinkError::Adapter("overlapping mentions".into()));
    }
    Ok(mentions)
}

/// External NER behind a process boundary.
///
/// Each request is one line `{"text": "..."}` on the child's stdin; the
/// child answers with one line holding a JSON array of
/// `{surface, entity_id, start, end}` records (character offsets).
pub struct ProcessLinker {
    io: Mutex<(Child, ChildStdin, BufReader<ChildStdout>)>,
}

impl ProcessLinker {
    pub fn spawn(program: &str, args: &[String]) -> Result<Self, LinkError> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| LinkError::Adapter(format!("spawn {program}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(Self { io: Mutex::new((child, stdin, stdout)) })
    }
}

impl EntityLinker for ProcessLinker {
    fn link(&self, text: &str) -> Result<Vec<Mention>, LinkError> {
        let mut guard = self.io.lock().map_err(|_| LinkError::Adapter("adapter lock poisoned".into()))?;
        let (_, stdin, stdout) = &mut *guard;
        let request = serde_json::json!({ "text": text });
        writeln!(stdin, "{request}").and_then(|_| stdin.flush()).map_err(|e| LinkError::Adapter(e.to_string()))?;
        let mut line = String::new();
        let n = stdout.read_line(&mut line).map_err(|e| LinkError::Adapter(e.to_string()))?;
        if n == 0 {
            return Err(LinkError::Adapter("adapter closed its output".into()));
        }
        parse_adapter_reply(&line, text.chars().count())
    }
}

impl Drop for ProcessLinker {
    fn drop(&mut self) {
        if let Ok(guard) = self.io.get_mut() {
            let _ = guard.0.kill();
            let _ = guard.0.wait();
        }
    }
}
