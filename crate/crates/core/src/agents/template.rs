use std::borrow::Cow;
use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::AgentRole;

pub const PLACEHOLDERS: [&str; 4] = ["question", "context", "relation", "sentence"];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TemplateError {
    #[error("template has no binding for {{{{{0}}}}}")]
    MissingBinding(String),
    #[error("template uses unknown placeholder {{{{{0}}}}}")]
    UnknownPlaceholder(String),
    #[error("unterminated placeholder at byte {0}")]
    Unterminated(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateVariant {
    Direct,
    Cot,
    Rag,
    Kgcoi,
    /// KG-CoI context with the answer-only instruction (no step-by-step).
    KgcoiAnswerOnly,
    Enrich,
    Verify,
}

impl TemplateVariant {
    pub fn role(self) -> AgentRole {
        match self {
            TemplateVariant::Enrich => AgentRole::Enricher,
            TemplateVariant::Verify => AgentRole::Verifier,
            _ => AgentRole::Generator,
        }
    }

    fn builtin_body(self) -> &'static str {
        match self {
            TemplateVariant::Direct => include_str!("../../assets/prompts/direct.txt"),
            TemplateVariant::Cot => include_str!("../../assets/prompts/cot.txt"),
            TemplateVariant::Rag => include_str!("../../assets/prompts/rag.txt"),
            TemplateVariant::Kgcoi => include_str!("../../assets/prompts/kgcoi.txt"),
            TemplateVariant::KgcoiAnswerOnly => include_str!("../../assets/prompts/kgcoi_answer_only.txt"),
            TemplateVariant::Enrich => include_str!("../../assets/prompts/enrich.txt"),
            TemplateVariant::Verify => include_str!("../../assets/prompts/verify.txt"),
        }
    }
}

impl fmt::Display for TemplateVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("unit variant serializes");
        f.write_str(s.as_str().unwrap_or_default())
    }
}

enum Piece<'a> {
    Text(&'a str),
    Slot(&'a str),
}

fn pieces(body: &str) -> Result<Vec<Piece<'_>>, TemplateError> {
    let mut out = Vec::new();
    let mut rest = body;
    let mut offset = 0;
    while let Some(open) = rest.find("{{") {
        out.push(Piece::Text(&rest[..open]));
        let after = &rest[open + 2..];
        let close = after.find("}}").ok_or(TemplateError::Unterminated(offset + open))?;
        out.push(Piece::Slot(&after[..close]));
        let consumed = open + 2 + close + 2;
        offset += consumed;
        rest = &rest[consumed..];
    }
    out.push(Piece::Text(rest));
    Ok(out)
}

/// Prompt text with `{{placeholder}}` slots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub role: AgentRole,
    pub variant: TemplateVariant,
    body: Cow<'static, str>,
}

impl PromptTemplate {
    pub fn builtin(variant: TemplateVariant) -> Self {
        Self { role: variant.role(), variant, body: Cow::Borrowed(variant.builtin_body()) }
    }

    /// Custom body; every placeholder must be one of [`PLACEHOLDERS`].
    pub fn new(variant: TemplateVariant, body: impl Into<String>) -> Result<Self, TemplateError> {
        let t = Self { role: variant.role(), variant, body: Cow::Owned(body.into()) };
        for name in t.placeholders()? {
            if !PLACEHOLDERS.contains(&name) {
                return Err(TemplateError::UnknownPlaceholder(name.to_string()));
            }
        }
        Ok(t)
    }

    pub fn body(&self) -> &str {
        &self.body
    }

    pub fn placeholders(&self) -> Result<BTreeSet<&str>, TemplateError> {
        Ok(pieces(&self.body)?
            .into_iter()
            .filter_map(|p| match p {
                Piece::Slot(s) => Some(s),
                Piece::Text(_) => None,
            })
            .collect())
    }

    /// Substitutes every slot from `bindings`; unused bindings are ignored.
    pub fn render(&self, bindings: &[(&str, &str)]) -> Result<String, TemplateError> {
        let mut out = String::with_capacity(self.body.len() + 256);
        for piece in pieces(&self.body)? {
            match piece {
                Piece::Text(t) => out.push_str(t),
                Piece::Slot(name) => {
                    let value = bindings
                        .iter()
                        .find(|(k, _)| *k == name)
                        .map(|(_, v)| *v)
                        .ok_or_else(|| TemplateError::MissingBinding(name.to_string()))?;
                    out.push_str(value);
                }
            }
        }
        Ok(out)
    }
}
