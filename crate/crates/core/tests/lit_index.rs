mod common;

use common::*;
use kgcoi::lit::{load_index, parse_corpus, save_index, Bm25Params, Document, Index, LitError};
use proptest::prelude::*;

fn params() -> Bm25Params<f64> {
    Bm25Params::default()
}

#[test]
fn liver_query_ranks_sialin_docs() {
    let docs = liver_docs();
    let index = Index::build(&docs).unwrap();
    let hits = index.search("SLC17A5 sialin", 3, &params());
    assert_eq!(hits.len(), 3);
    assert!(hits.iter().all(|h| h.score > 0.0));
    let top = docs.iter().find(|d| d.doc_id == hits[0].doc_id).unwrap();
    assert!(top.indexed_text().contains("SLC17A5"));
    assert!(index.search("zebrafish", 5, &params()).is_empty());
}

#[test]
fn saved_index_scores_identically() {
    let docs = liver_docs();
    let index = Index::build(&docs).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("liver.idx");
    save_index(&index, &path).unwrap();
    let back = load_index(&path).unwrap();
    for q in ["carbon tetrachloride liver", "JAK1", "fibrosis silymarin liver failure"] {
        assert_eq!(index.search(q, 10, &params()), back.search(q, 10, &params()));
    }
    assert_eq!(back.to_text(), index.to_text());
}

#[test]
fn corrupt_index_is_rejected() {
    let text = Index::build(&liver_docs()).unwrap().to_text();
    assert!(matches!(Index::from_text(&text.replacen("v1", "v9", 1)), Err(LitError::Format(_))));
    let truncated: String = text.lines().take(5).collect::<Vec<_>>().join("\n");
    assert!(Index::from_text(&truncated).is_err());
}

#[test]
fn corpus_errors_carry_line_numbers() {
    assert!(matches!(parse_corpus("{\"doc_id\":\"a\",\"text\":\"x\"}\nnot json\n"), Err(LitError::Corpus { line: 2, .. })));
    let dup = "{\"doc_id\":\"a\",\"text\":\"x\"}\n{\"doc_id\":\"a\",\"text\":\"y\"}\n";
    assert!(matches!(Index::build(&parse_corpus(dup).unwrap()), Err(LitError::DuplicateDoc(_))));
}

fn corpus() -> impl Strategy<Value = Vec<Document>> {
    prop::collection::vec(prop::collection::vec("[a-e]{1,3}", 1..12), 1..15).prop_map(|docs| {
        docs.into_iter().enumerate().map(|(i, words)| Document::new(format!("d{i}"), "", words.join(" "))).collect()
    })
}

proptest! {
    #[test]
    fn agrees_with_reference(docs in corpus(), query in prop::collection::vec("[a-f]{1,3}", 1..4)) {
        let index = Index::build(&docs).unwrap();
        let raw: Vec<(String, String)> = docs.iter().map(|d| (d.doc_id.clone(), d.indexed_text())).collect();
        let query = query.join(" ");
        let got = index.search(&query, 100, &params());
        let want = reference_bm25(&raw, &query, 1.2, 0.75);
        prop_assert_eq!(got.len(), want.len());
        for (h, (id, s)) in got.iter().zip(&want) {
            prop_assert_eq!(&h.doc_id, id);
            prop_assert!((h.score - s).abs() < 1e-9);
        }
    }

    #[test]
    fn round_trip_preserves_text(docs in corpus()) {
        let index = Index::build(&docs).unwrap();
        let back = Index::from_text(&index.to_text()).unwrap();
        prop_assert_eq!(back.to_text(), index.to_text());
        prop_assert_eq!(back.doc_count(), docs.len());
    }
}
