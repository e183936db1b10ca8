use std::fs;
use std::path::Path;

use super::{EntityId, GraphBuilder, KgError, KnowledgeGraph, RelationType, Vocabulary};

const FIELDS: usize = 8;

fn read(path: &Path) -> Result<String, KgError> {
    fs::read_to_string(path).map_err(|e| KgError::Io { path: path.display().to_string(), msg: e.to_string() })
}

pub fn load_kg(path: impl AsRef<Path>) -> Result<KnowledgeGraph, KgError> {
    parse_kg(&read(path.as_ref())?, &Vocabulary::default())
}

/// Loads the triple file, then attaches aliases from an `entity_id<TAB>alias` file.
pub fn load_kg_with_aliases(path: impl AsRef<Path>, aliases: impl AsRef<Path>, vocab: &Vocabulary) -> Result<KnowledgeGraph, KgError> {
    let mut builder = stage(&read(path.as_ref())?, vocab)?;
    load_aliases_into(&mut builder, &read(aliases.as_ref())?)?;
    builder.build()
}

pub fn parse_kg(text: &str, vocab: &Vocabulary) -> Result<KnowledgeGraph, KgError> {
    stage(text, vocab)?.build()
}

fn is_skippable(line: &str) -> bool {
    line.trim().is_empty() || line.starts_with('#')
}

fn stage(text: &str, vocab: &Vocabulary) -> Result<GraphBuilder, KgError> {
    let mut b = GraphBuilder::with_vocabulary(vocab.clone());
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let raw = raw.strip_suffix('\r').unwrap_or(raw);
        if is_skippable(raw) {
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').collect();
        if fields.len() != FIELDS {
            return Err(KgError::Parse { line, msg: format!("expected {FIELDS} tab-separated fields, found {}", fields.len()) });
        }
        let at_line = |e: KgError| match e {
            KgError::Integrity(msg) => KgError::Integrity(format!("line {line}: {msg}")),
            KgError::InvalidArgument(msg) => KgError::Parse { line, msg },
            KgError::NotFound(id) => KgError::Parse { line, msg: format!("unknown entity {id}") },
            other => other,
        };
        let head = EntityId::new(fields[0]).map_err(at_line)?;
        let tail = EntityId::new(fields[4]).map_err(at_line)?;
        let n_pubs: u64 = fields[7]
            .trim()
            .parse()
            .map_err(|_| KgError::Parse { line, msg: format!("n_pubs {:?} is not a non-negative integer", fields[7]) })?;
        b.add_entity(head.clone(), fields[1], fields[2]).map_err(at_line)?;
        b.add_entity(tail.clone(), fields[5], fields[6]).map_err(at_line)?;
        b.add_triple(head, RelationType::new(fields[3]), tail, n_pubs).map_err(at_line)?;
    }
    Ok(b)
}

fn load_aliases_into(b: &mut GraphBuilder, text: &str) -> Result<(), KgError> {
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if is_skippable(raw) {
            continue;
        }
        let (id, alias) = raw
            .split_once('\t')
            .ok_or_else(|| KgError::Parse { line, msg: "expected entity_id<TAB>alias".into() })?;
        let id = EntityId::new(id).map_err(|_| KgError::Parse { line, msg: "empty entity id".into() })?;
        b.add_alias(&id, alias).map_err(|e| KgError::Parse { line, msg: e.to_string() })?;
    }
    Ok(())
}
