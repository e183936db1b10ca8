use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{Document, LitError, Tokenizer};
use crate::scalar::Real;

pub const DEFAULT_TOP_K: usize = 5;

/// Okapi BM25 free parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25Params<F> {
    pub k1: F,
    pub b: F,
}

impl<F: Real> Default for Bm25Params<F> {
    fn default() -> Self {
        Self { k1: F::from_f64_lossy(1.2), b: F::from_f64_lossy(0.75) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub doc: u32,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit<F> {
    pub doc_id: String,
    pub score: F,
    pub rank: usize,
}

/// Frozen inverted index over a corpus.
#[derive(Debug, Clone, Default)]
pub struct Index {
    pub(super) tokenizer: Tokenizer,
    pub(super) doc_ids: Vec<String>,
    pub(super) doc_lengths: Vec<u32>,
    pub(super) total_len: u64,
    pub(super) postings: HashMap<String, Vec<Posting>>,
}

impl Index {
    pub fn build(docs: &[Document]) -> Result<Self, LitError> {
        Self::build_with(docs, Tokenizer::default())
    }

    /// Title and text are concatenated before tokenization.
    pub fn build_with(docs: &[Document], tokenizer: Tokenizer) -> Result<Self, LitError> {
        let mut seen = HashSet::with_capacity(docs.len());
        let mut index = Index { tokenizer, ..Index::default() };
        for (ord, doc) in docs.iter().enumerate() {
            if !seen.insert(doc.doc_id.as_str()) {
                return Err(LitError::DuplicateDoc(doc.doc_id.clone()));
            }
            if doc.title.is_empty() && doc.text.is_empty() {
                return Err(LitError::EmptyDoc(doc.doc_id.clone()));
            }
            let tokens = index.tokenizer.tokenize(&doc.indexed_text());
            let mut tf: HashMap<&str, u32> = HashMap::new();
            for t in &tokens {
                *tf.entry(t.as_str()).or_default() += 1;
            }
            for (term, count) in tf {
                index.postings.entry(term.to_string()).or_default().push(Posting { doc: ord as u32, tf: count });
            }
            index.doc_ids.push(doc.doc_id.clone());
            index.doc_lengths.push(tokens.len() as u32);
            index.total_len += tokens.len() as u64;
        }
        Ok(index)
    }

    pub fn doc_count(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn doc_lengths(&self) -> &[u32] {
        &self.doc_lengths
    }

    pub fn avg_doc_len<F: Real>(&self) -> F {
        if self.doc_ids.is_empty() {
            F::zero()
        } else {
            F::from_u64(self.total_len).expect("length fits") / F::from_count(self.doc_ids.len())
        }
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn term_count(&self) -> usize {
        self.postings.len()
    }

    pub fn tokenizer(&self) -> &Tokenizer {
        &self.tokenizer
    }

    /// `ln((N - df + 0.5) / (df + 0.5) + 1)`
    pub fn idf<F: Real>(&self, df: usize) -> F {
        let half = F::from_f64_lossy(0.5);
        let n = F::from_count(self.doc_count());
        let df = F::from_count(df);
        ((n - df + half) / (df + half) + F::one()).ln()
    }

    /// Top `top_k` documents with a positive BM25 score, best first, ties
    /// broken by ascending doc id. Repeated query terms count once.
    pub fn search<F: Real>(&self, query: &str, top_k: usize, params: &Bm25Params<F>) -> Vec<SearchHit<F>> {
        if top_k == 0 || self.doc_ids.is_empty() {
            return Vec::new();
        }
        let mut terms = self.tokenizer.tokenize(query);
        let mut seen = HashSet::new();
        terms.retain(|t| seen.insert(t.clone()));

        let avg_dl = self.avg_doc_len::<F>();
        let (k1, b) = (params.k1, params.b);
        let mut scores: HashMap<u32, F> = HashMap::new();
        for term in &terms {
            let postings = self.postings(term);
            if postings.is_empty() {
                continue;
            }
            let idf = self.idf::<F>(postings.len());
            for p in postings {
                let tf = F::from_u32(p.tf).expect("tf fits");
                let dl = F::from_u32(self.doc_lengths[p.doc as usize]).expect("length fits");
                let norm = k1 * (F::one() - b + b * dl / avg_dl);
                let contribution = idf * tf * (k1 + F::one()) / (tf + norm);
                let slot = scores.entry(p.doc).or_insert_with(F::zero);
                *slot = *slot + contribution;
            }
        }

        let mut hits: Vec<(u32, F)> = scores.into_iter().filter(|(_, s)| *s > F::zero()).collect();
        hits.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(Ordering::Equal)
                .then_with(|| self.doc_ids[a.0 as usize].cmp(&self.doc_ids[b.0 as usize]))
        });
        hits.truncate(top_k);
        hits.into_iter()
            .enumerate()
            .map(|(i, (doc, score))| SearchHit { doc_id: self.doc_ids[doc as usize].clone(), score, rank: i + 1 })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Vec<Document> {
        vec![
            Document::new("d1", "", "liver injury carbon tetrachloride"),
            Document::new("d2", "", "gene transport sialic acid"),
            Document::new("d3", "", "liver fibrosis model"),
        ]
    }

    // Hand-expanded BM25 for the toy corpus: N=3, avgdl=11/3.
    fn hand_score(tf_df_dl: &[(f64, f64, f64)]) -> f64 {
        let (k1, b, n, avgdl) = (1.2, 0.75, 3.0, 11.0 / 3.0);
        tf_df_dl
            .iter()
            .map(|&(tf, df, dl)| {
                let idf = ((n - df + 0.5) / (df + 0.5) + 1.0f64).ln();
                idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / avgdl))
            })
            .sum()
    }

    #[test]
    fn toy_query_matches_hand_computation() {
        let idx = Index::build(&toy()).unwrap();
        let hits = idx.search::<f64>("liver injury", 2, &Bm25Params::default());
        assert_eq!(hits.iter().map(|h| h.doc_id.as_str()).collect::<Vec<_>>(), ["d1", "d3"]);
        assert_eq!(hits.iter().map(|h| h.rank).collect::<Vec<_>>(), [1, 2]);
        let d1 = hand_score(&[(1.0, 2.0, 4.0), (1.0, 1.0, 4.0)]);
        let d3 = hand_score(&[(1.0, 2.0, 3.0)]);
        assert!((hits[0].score - d1).abs() < 1e-9, "{} vs {d1}", hits[0].score);
        assert!((hits[1].score - d3).abs() < 1e-9);
    }

    #[test]
    fn zero_score_docs_are_excluded() {
        let idx = Index::build(&toy()).unwrap();
        assert!(idx.search::<f64>("zebrafish", 5, &Bm25Params::default()).is_empty());
        assert_eq!(idx.search::<f64>("liver", 10, &Bm25Params::default()).len(), 2);
    }

    #[test]
    fn index_statistics() {
        let docs = vec![
            Document::new("a", "", "one two three four"),
            Document::new("b", "", "one two three four five six"),
            Document::new("c", "", "one two three four five six seven eight"),
        ];
        let idx = Index::build(&docs).unwrap();
        assert_eq!(idx.doc_count(), 3);
        assert_eq!(idx.avg_doc_len::<f64>(), 6.0);
        assert_eq!(idx.doc_freq("five"), 2);
        let only_title = Index::build(&[Document::new("t", "Sialin transport", "")]).unwrap();
        assert_eq!(only_title.doc_lengths(), [2]);
    }

    #[test]
    fn empty_corpus_and_errors() {
        let idx = Index::build(&[]).unwrap();
        assert_eq!(idx.doc_count(), 0);
        assert!(idx.search::<f64>("liver", 3, &Bm25Params::default()).is_empty());
        let dup = [Document::new("x", "a", ""), Document::new("x", "b", "")];
        assert!(matches!(Index::build(&dup), Err(LitError::DuplicateDoc(_))));
        assert!(matches!(Index::build(&[Document::new("e", "", "")]), Err(LitError::EmptyDoc(_))));
    }

    #[test]
    fn single_precision_agrees_on_ranking() {
        let idx = Index::build(&toy()).unwrap();
        let wide: Vec<_> = idx.search::<f64>("liver injury acid", 3, &Bm25Params::default()).into_iter().map(|h| h.doc_id).collect();
        let narrow: Vec<_> = idx.search::<f32>("liver injury acid", 3, &Bm25Params::default()).into_iter().map(|h| h.doc_id).collect();
        assert_eq!(wide, narrow);
    }

    #[test]
    fn equal_scores_tie_break_on_doc_id() {
        let docs = [Document::new("z", "", "alpha beta"), Document::new("a", "", "alpha gamma")];
        let idx = Index::build(&docs).unwrap();
        let hits = idx.search::<f64>("alpha", 2, &Bm25Params::default());
        assert_eq!(hits[0].doc_id, "a");
        assert_eq!(hits[0].score, hits[1].score);
    }
}
