//! Plain-text postings file.
//!
//! ```text
//! kgcoi-bm25-index v1
//! stopwords -                      (or a JSON array of stopwords)
//! docs <N>
//! <doc_id as JSON string>\t<token count>        N lines, ordinal order
//! terms <T>
//! <term>\t<ord>:<tf> <ord>:<tf> ...             T lines, terms ascending
//! ```

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Index, LitError, Posting, Tokenizer};

pub const FORMAT_HEADER: &str = "kgcoi-bm25-index v1";

fn io_err(path: &Path, e: std::io::Error) -> LitError {
    LitError::Io { path: path.display().to_string(), msg: e.to_string() }
}

pub fn save_index(index: &Index, path: impl AsRef<Path>) -> Result<(), LitError> {
    let path = path.as_ref();
    fs::write(path, index.to_text()).map_err(|e| io_err(path, e))
}

pub fn load_index(path: impl AsRef<Path>) -> Result<Index, LitError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    Index::from_text(&text)
}

fn bad(msg: impl Into<String>) -> LitError {
    LitError::Format(msg.into())
}

fn count_line(line: Option<&str>, key: &str) -> Result<usize, LitError> {
    let line = line.ok_or_else(|| bad(format!("missing '{key}' line")))?;
    line.strip_prefix(key)
        .and_then(|rest| rest.strip_prefix(' '))
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| bad(format!("expected '{key} <count>', found {line:?}")))
}

impl Index {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(FORMAT_HEADER);
        out.push('\n');
        match &self.tokenizer.stopwords {
            None => out.push_str("stopwords -\n"),
            Some(words) => {
                let mut sorted: Vec<&String> = words.iter().collect();
                sorted.sort();
                let _ = writeln!(out, "stopwords {}", serde_json::to_string(&sorted).expect("strings serialize"));
            }
        }
        let _ = writeln!(out, "docs {}", self.doc_ids.len());
        for (id, len) in self.doc_ids.iter().zip(&self.doc_lengths) {
            let _ = writeln!(out, "{}\t{len}", serde_json::to_string(id).expect("strings serialize"));
        }
        let sorted: BTreeMap<&String, &Vec<Posting>> = self.postings.iter().collect();
        let _ = writeln!(out, "terms {}", sorted.len());
        for (term, postings) in sorted {
            out.push_str(term);
            out.push('\t');
            let cells: Vec<String> = postings.iter().map(|p| format!("{}:{}", p.doc, p.tf)).collect();
            out.push_str(&cells.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, LitError> {
        let mut lines = text.lines();
        match lines.next() {
            Some(FORMAT_HEADER) => {}
            other => return Err(bad(format!("expected header {FORMAT_HEADER:?}, found {:?}", other.unwrap_or("")))),
        }
        let stop_line = lines.next().ok_or_else(|| bad("missing stopwords line"))?;
        let stop_spec = stop_line.strip_prefix("stopwords ").ok_or_else(|| bad(format!("expected stopwords line, found {stop_line:?}")))?;
        let tokenizer = if stop_spec == "-" {
            Tokenizer::default()
        } else {
            let words: Vec<String> = serde_json::from_str(stop_spec).map_err(|e| bad(format!("stopwords: {e}")))?;
            Tokenizer::with_stopwords(words)
        };

        let n_docs = count_line(lines.next(), "docs")?;
        let mut index = Index { tokenizer, ..Index::default() };
        let mut seen = HashSet::new();
        for _ in 0..n_docs {
            let line = lines.next().ok_or_else(|| bad("truncated document table"))?;
            let (id, len) = line.rsplit_once('\t').ok_or_else(|| bad(format!("bad document line {line:?}")))?;
            let id: String = serde_json::from_str(id).map_err(|e| bad(format!("doc id: {e}")))?;
            let len: u32 = len.parse().map_err(|_| bad(format!("bad document length in {line:?}")))?;
            if !seen.insert(id.clone()) {
                return Err(LitError::DuplicateDoc(id));
            }
            index.doc_ids.push(id);
            index.doc_lengths.push(len);
            index.total_len += u64::from(len);
        }

        let n_terms = count_line(lines.next(), "terms")?;
        for _ in 0..n_terms {
            let line = lines.next().ok_or_else(|| bad("truncated postings table"))?;
            let (term, cells) = line.split_once('\t').ok_or_else(|| bad(format!("bad postings line {line:?}")))?;
            let mut postings = Vec::new();
            for cell in cells.split(' ') {
                let (doc, tf) = cell.split_once(':').ok_or_else(|| bad(format!("bad posting {cell:?}")))?;
                let doc: u32 = doc.parse().map_err(|_| bad(format!("bad posting {cell:?}")))?;
                let tf: u32 = tf.parse().map_err(|_| bad(format!("bad posting {cell:?}")))?;
                if doc as usize >= n_docs || tf == 0 || postings.last().is_some_and(|p: &Posting| p.doc >= doc) {
                    return Err(bad(format!("posting {cell:?} for {term:?} out of range or order")));
                }
                postings.push(Posting { doc, tf });
            }
            index.postings.insert(term.to_string(), postings);
        }
        if lines.any(|l| !l.trim().is_empty()) {
            return Err(bad("trailing data after postings table"));
        }
        Ok(index)
    }
}
