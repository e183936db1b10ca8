//! Literature retrieval: tokenizer, corpus loading and a BM25 inverted index.

mod index;
mod persist;

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use index::{Bm25Params, Index, Posting, SearchHit, DEFAULT_TOP_K};
pub use persist::{load_index, save_index, FORMAT_HEADER};

#[derive(Debug, Error)]
pub enum LitError {
    #[error("duplicate doc_id {0:?}")]
    DuplicateDoc(String),
    #[error("document {0:?} has neither title nor text")]
    EmptyDoc(String),
    #[error("corpus line {line}: {msg}")]
    Corpus { line: usize, msg: String },
    #[error("index format error: {0}")]
    Format(String),
    #[error("io error on {path}: {msg}")]
    Io { path: String, msg: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub text: String,
}

impl Document {
    pub fn new(doc_id: impl Into<String>, title: impl Into<String>, text: impl Into<String>) -> Self {
        Self { doc_id: doc_id.into(), title: title.into(), text: text.into() }
    }

    /// Title and body joined by a single space.
    pub fn indexed_text(&self) -> String {
        match (self.title.is_empty(), self.text.is_empty()) {
            (false, false) => format!("{} {}", self.title, self.text),
            (false, true) => self.title.clone(),
            _ => self.text.clone(),
        }
    }
}

/// Lowercased maximal alphanumeric runs, optionally dropping stopwords.
#[derive(Debug, Clone, Default)]
pub struct Tokenizer {
    stopwords: Option<HashSet<String>>,
}

impl Tokenizer {
    pub fn with_stopwords<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self { stopwords: Some(words.into_iter().map(|w| w.as_ref().to_lowercase()).collect()) }
    }

    pub fn tokenize(&self, text: &str) -> Vec<String> {
        let mut out = tokenize(text);
        if let Some(stop) = &self.stopwords {
            out.retain(|t| !stop.contains(t));
        }
        out
    }
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric()).filter(|s| !s.is_empty()).map(str::to_lowercase).collect()
}

/// Reads a JSON-lines corpus of `{doc_id, title, text}` objects.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<Document>, LitError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| LitError::Io { path: path.display().to_string(), msg: e.to_string() })?;
    parse_corpus(&text)
}

pub fn parse_corpus(text: &str) -> Result<Vec<Document>, LitError> {
    let mut docs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document = serde_json::from_str(line).map_err(|e| LitError::Corpus { line: i + 1, msg: e.to_string() })?;
        docs.push(doc);
    }
    Ok(docs)
}
