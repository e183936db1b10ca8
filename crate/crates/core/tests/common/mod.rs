#![allow(dead_code, clippy::type_complexity, clippy::too_many_arguments)]

use std::collections::{HashMap, HashSet};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use kgcoi::agents::{AgentError, ChatBackend, ChatRequest, ChatTranscript, GenerationConfig};
use kgcoi::chains::{Hop, RelationChain};
use kgcoi::dataset::DatasetInstance;
use kgcoi::kg::{load_kg_with_aliases, GraphBuilder, Vocabulary};
use kgcoi::lit::{load_corpus, Document};
use kgcoi::pipeline::{question_text, Literature, Question};
use kgcoi::{EntityId, Exact, KnowledgeGraph, Label, MaskSpec, RelationType};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const CCL4: &str = "MESH:D002251";
pub const SLC17A5: &str = "6573";

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

pub fn liver_kg() -> KnowledgeGraph {
    load_kg_with_aliases(fixture("liver_kg.tsv"), fixture("liver_aliases.tsv"), &Vocabulary::default()).expect("fixture kg")
}

pub fn liver_docs() -> Vec<Document> {
    load_corpus(fixture("liver_corpus.jsonl")).expect("fixture corpus")
}

pub fn liver_literature() -> Literature {
    Literature::build(liver_docs()).expect("fixture index")
}

pub fn liver_question(g: &KnowledgeGraph) -> Question {
    Question::new("case-1", CCL4.into(), SLC17A5.into(), MaskSpec::edge(CCL4, "stimulate", SLC17A5), g)
        .expect("fixture question")
        .with_gold(Label::Stimulate)
}

/// Compares against a golden file; `KGCOI_BLESS=1` rewrites it instead.
pub fn check_golden(name: &str, actual: &str) -> Result<(), String> {
    let path = golden(name);
    if std::env::var_os("KGCOI_BLESS").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).map_err(|e| e.to_string())?;
        std::fs::write(&path, actual).map_err(|e| e.to_string())?;
        return Ok(());
    }
    let expected = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    if expected.trim_end() == actual.trim_end() {
        Ok(())
    } else {
        let line = expected.lines().zip(actual.lines()).position(|(a, b)| a != b).unwrap_or(expected.lines().count().min(actual.lines().count()));
        Err(format!("{name}: differs from golden at line {}", line + 1))
    }
}

/// Backend wrapper that keeps every request, in call order.
pub struct Recording<B> {
    pub inner: B,
    pub log: Mutex<Vec<ChatRequest>>,
}

impl<B: ChatBackend> Recording<B> {
    pub fn new(inner: B) -> Arc<Self> {
        Arc::new(Self { inner, log: Mutex::new(Vec::new()) })
    }

    pub fn requests(&self) -> Vec<ChatRequest> {
        self.log.lock().unwrap().clone()
    }
}

impl<B: ChatBackend> ChatBackend for Recording<B> {
    fn complete(&self, req: &ChatRequest, cfg: &GenerationConfig) -> Result<ChatTranscript, AgentError> {
        self.log.lock().unwrap().push(req.clone());
        self.inner.complete(req, cfg)
    }
}

pub const RELATIONS: [&str; 13] = [
    "associate",
    "bind",
    "cause",
    "compare",
    "cotreat",
    "drug_interact",
    "inhibit",
    "interact",
    "negative_correlate",
    "positive_correlate",
    "prevent",
    "stimulate",
    "treat",
];

/// Raw random triple list over entities `E0..E{n}`; `(h, r, t)` unique, no loops.
pub fn random_triples(rng: &mut ChaCha8Rng, n_entities: usize, n_triples: usize, relations: &[&str]) -> Vec<(usize, String, usize, u64)> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    let mut tries = 0;
    while out.len() < n_triples && tries < n_triples * 20 {
        tries += 1;
        let h = rng.random_range(0..n_entities);
        let t = rng.random_range(0..n_entities);
        if h == t {
            continue;
        }
        let r = relations[rng.random_range(0..relations.len())].to_string();
        if seen.insert((h, r.clone(), t)) {
            out.push((h, r, t, rng.random_range(1..200)));
        }
    }
    out
}

pub fn entity_id(i: usize) -> EntityId {
    EntityId::new(format!("E{i}")).unwrap()
}

pub fn entity_name(i: usize) -> String {
    format!("ent{i}")
}

pub fn graph_from(n_entities: usize, triples: &[(usize, String, usize, u64)]) -> KnowledgeGraph {
    let mut b = GraphBuilder::with_vocabulary(Vocabulary::default());
    for i in 0..n_entities {
        b.add_entity(entity_id(i), &entity_name(i), if i % 2 == 0 { "GENE" } else { "CHEMICAL" }).unwrap();
    }
    for (h, r, t, n) in triples {
        b.add_triple(entity_id(*h), RelationType::new(r.as_str()), entity_id(*t), *n).unwrap();
    }
    b.build().unwrap()
}

pub fn random_graph(seed: u64, max_entities: usize, max_triples: usize) -> (KnowledgeGraph, Vec<(usize, String, usize, u64)>, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=max_entities);
    let m = rng.random_range(0..=max_triples);
    let triples = random_triples(&mut rng, n, m, &RELATIONS);
    (graph_from(n, &triples), triples, n)
}

/// Every simple path of 1..=k edges from `from` to `to` over the undirected
/// multigraph, by exhaustive depth-first enumeration.
pub fn brute_force_paths(triples: &[(usize, String, usize, u64)], hidden: &HashSet<usize>, from: usize, to: usize, k: usize) -> HashSet<RelationChain> {
    fn dfs(
        triples: &[(usize, String, usize, u64)],
        hidden: &HashSet<usize>,
        node: usize,
        to: usize,
        k: usize,
        nodes: &mut Vec<usize>,
        hops: &mut Vec<Hop>,
        out: &mut HashSet<RelationChain>,
    ) {
        if node == to && !hops.is_empty() {
            out.insert(RelationChain {
                entities: nodes.iter().map(|&i| entity_id(i)).collect(),
                hops: hops.clone(),
                total_pubs: hops.iter().map(|h| h.n_pubs).sum(),
            });
            return;
        }
        if hops.len() == k {
            return;
        }
        for (ix, (h, r, t, n)) in triples.iter().enumerate() {
            if hidden.contains(&ix) {
                continue;
            }
            let (next, forward) = if *h == node {
                (*t, true)
            } else if *t == node {
                (*h, false)
            } else {
                continue;
            };
            if nodes.contains(&next) {
                continue;
            }
            nodes.push(next);
            hops.push(Hop { relation: RelationType::new(r.as_str()), forward, n_pubs: *n });
            dfs(triples, hidden, next, to, k, nodes, hops, out);
            nodes.pop();
            hops.pop();
        }
    }
    let mut out = HashSet::new();
    dfs(triples, hidden, from, to, k, &mut vec![from], &mut Vec::new(), &mut out);
    out
}

/// Okapi BM25 from the textbook formula, one document at a time.
pub fn reference_bm25(docs: &[(String, String)], query: &str, k1: f64, b: f64) -> Vec<(String, f64)> {
    fn toks(s: &str) -> Vec<String> {
        let mut out = Vec::new();
        let mut cur = String::new();
        for c in s.chars() {
            if c.is_alphanumeric() {
                cur.extend(c.to_lowercase());
            } else if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
        }
        if !cur.is_empty() {
            out.push(cur);
        }
        out
    }
    let tokenized: Vec<Vec<String>> = docs.iter().map(|(_, text)| toks(text)).collect();
    let n = docs.len() as f64;
    let avgdl = if docs.is_empty() { 0.0 } else { tokenized.iter().map(|t| t.len()).sum::<usize>() as f64 / n };
    let mut q_terms: Vec<String> = Vec::new();
    for t in toks(query) {
        if !q_terms.contains(&t) {
            q_terms.push(t);
        }
    }
    let mut scored = Vec::new();
    for (i, (id, _)) in docs.iter().enumerate() {
        let dl = tokenized[i].len() as f64;
        let mut score = 0.0;
        let mut matched = false;
        for term in &q_terms {
            let tf = tokenized[i].iter().filter(|t| *t == term).count() as f64;
            if tf == 0.0 {
                continue;
            }
            matched = true;
            let df = tokenized.iter().filter(|d| d.contains(term)).count() as f64;
            let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
            score += idf * (tf * (k1 + 1.0)) / (tf + k1 * (1.0 - b + b * dl / avgdl));
        }
        if matched && score > 0.0 {
            scored.push((id.clone(), score));
        }
    }
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    scored
}

/// Accuracy and macro-F1 straight from the label vectors.
pub fn reference_metrics(gold: &[Label], pred: &[Label]) -> (Exact, Exact) {
    let n = gold.len() as u64;
    let correct = gold.iter().zip(pred).filter(|(g, p)| g == p).count() as u64;
    let accuracy = if n == 0 { Exact::from_integer(0) } else { Exact::new(correct, n) };
    let mut f1_sum = Exact::from_integer(0);
    for l in Label::ALL {
        let tp = gold.iter().zip(pred).filter(|(g, p)| **g == l && **p == l).count() as u64;
        let fp = gold.iter().zip(pred).filter(|(g, p)| **g != l && **p == l).count() as u64;
        let fn_ = gold.iter().zip(pred).filter(|(g, p)| **g == l && **p != l).count() as u64;
        if tp + fp > 0 && tp + fn_ > 0 && tp > 0 {
            let precision = Exact::new(tp, tp + fp);
            let recall = Exact::new(tp, tp + fn_);
            f1_sum += Exact::from_integer(2) * precision * recall / (precision + recall);
        }
    }
    (accuracy, f1_sum / Exact::from_integer(3))
}

/// Plurality with the documented tie-break, computed over label groups.
pub fn reference_vote(votes: &[(Label, f64)]) -> Label {
    let count = |l: Label| votes.iter().filter(|(v, _)| *v == l).count();
    let sum = |l: Label| votes.iter().filter(|(v, _)| *v == l).map(|(_, c)| *c).sum::<f64>();
    let top = Label::ALL.iter().map(|&l| count(l)).max().unwrap();
    let tied: Vec<Label> = Label::ALL.into_iter().filter(|&l| count(l) == top).collect();
    let best_sum = tied.iter().map(|&l| sum(l)).fold(f64::NEG_INFINITY, f64::max);
    tied.into_iter().find(|&l| sum(l) == best_sum).unwrap()
}

fn key(a: &EntityId, b: &EntityId) -> (EntityId, EntityId) {
    if a <= b {
        (a.clone(), b.clone())
    } else {
        (b.clone(), a.clone())
    }
}

/// Re-checks every dataset invariant from the raw triple list.
pub fn validate_dataset(g: &KnowledgeGraph, instances: &[DatasetInstance], per_class: usize, ratio_num: u64, ratio_den: u64) -> Vec<String> {
    let mut errors = Vec::new();
    let mut by_pair: HashMap<(EntityId, EntityId), Vec<(&str, &EntityId, u64)>> = HashMap::new();
    for t in g.triples() {
        by_pair.entry(key(&t.head, &t.tail)).or_default().push((t.relation.as_str(), &t.head, t.n_pubs));
    }
    let adjacent = |a: &EntityId, b: &EntityId| by_pair.contains_key(&key(a, b));
    let mut pairs = HashSet::new();
    let mut counts: HashMap<Label, usize> = HashMap::new();
    for inst in instances {
        *counts.entry(inst.label).or_default() += 1;
        if !pairs.insert(key(&inst.head_id, &inst.tail_id)) {
            errors.push(format!("{}: duplicate pair", inst.id));
        }
        let names_ok = g.name_of(&inst.head_id).ok() == Some(inst.head_name.as_str()) && g.name_of(&inst.tail_id).ok() == Some(inst.tail_name.as_str());
        if !names_ok || inst.question != question_text(&inst.head_name, &inst.tail_name) {
            errors.push(format!("{}: question text or names wrong", inst.id));
        }
        let between = by_pair.get(&key(&inst.head_id, &inst.tail_id)).cloned().unwrap_or_default();
        match inst.label {
            Label::NoRelation => {
                if !between.is_empty() {
                    errors.push(format!("{}: no_relation pair has a direct triple", inst.id));
                }
            }
            l => {
                let rel = l.as_str();
                let opp = if l == Label::Stimulate { "inhibit" } else { "stimulate" };
                let gold = between.iter().find(|(r, h, _)| *r == rel && **h == inst.head_id);
                match gold {
                    None => errors.push(format!("{}: gold triple missing", inst.id)),
                    Some((_, _, n)) => {
                        for (r, _, m) in &between {
                            if *r == opp && m * ratio_den >= n * ratio_num {
                                errors.push(format!("{}: opposite relation has {m} >= ratio of {n}", inst.id));
                            }
                        }
                    }
                }
                if inst.mask.relation.as_ref().map(|r| r.as_str()) != Some(rel) || inst.mask.head != inst.head_id || inst.mask.tail != inst.tail_id {
                    errors.push(format!("{}: mask does not name the gold triple", inst.id));
                }
                match g.mask(&inst.mask) {
                    Ok(view) => {
                        if view.direct_relations(&inst.head_id, &inst.tail_id).unwrap().iter().any(|t| t.relation.as_str() == rel) {
                            errors.push(format!("{}: gold triple visible through mask", inst.id));
                        }
                    }
                    Err(e) => errors.push(format!("{}: mask fails: {e}", inst.id)),
                }
                let trace = &inst.provenance.trace;
                if trace.windows(2).any(|w| !adjacent(&w[0], &w[1])) {
                    errors.push(format!("{}: walk trace is not connected", inst.id));
                }
            }
        }
    }
    for l in Label::ALL {
        let c = counts.get(&l).copied().unwrap_or(0);
        if c != per_class {
            errors.push(format!("{l}: {c} instances, expected {per_class}"));
        }
    }
    errors
}
