//! Balanced hypothesis datasets minted from a graph by publication-weighted
//! walks with edge masking.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::Label;
use crate::kg::{EntityId, KgError, KnowledgeGraph, MaskSpec, Triple};
use crate::pipeline::{question_text, Question};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("sampling exhausted: {0}")]
    Exhausted(String),
    #[error("invalid builder config: {0}")]
    Config(String),
    #[error(transparent)]
    Kg(#[from] KgError),
    #[error("dataset line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuilderConfig {
    pub per_class: usize,
    pub seed: u64,
    pub max_walk: usize,
    /// The opposite relation must have fewer than `ratio × n_pubs` publications.
    pub ratio: f64,
    /// Walk restarts (or pair draws) allowed per emitted instance.
    pub restart_budget: usize,
}

impl Default for BuilderConfig {
    fn default() -> Self {
        Self { per_class: 100, seed: 0, max_walk: 10, ratio: 0.5, restart_budget: 10_000 }
    }
}

impl BuilderConfig {
    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.per_class == 0 {
            return Err(DatasetError::Config("per-class target must be at least 1".into()));
        }
        if !(self.ratio > 0.0 && self.ratio <= 1.0) {
            return Err(DatasetError::Config(format!("ratio {} outside (0, 1]", self.ratio)));
        }
        if self.max_walk == 0 || self.restart_budget == 0 {
            return Err(DatasetError::Config("walk length and restart budget must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Walk,
    Pool,
}

/// How an instance was found: the walk trace, or the drawn pool pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub origin: Origin,
    pub trace: Vec<EntityId>,
    pub restarts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInstance {
    pub id: String,
    pub head_id: EntityId,
    pub tail_id: EntityId,
    pub head_name: String,
    pub tail_name: String,
    pub label: Label,
    pub question: String,
    pub mask: MaskSpec,
    pub provenance: Provenance,
}

impl DatasetInstance {
    pub fn to_question(&self) -> Question {
        Question {
            id: self.id.clone(),
            head: self.head_id.clone(),
            tail: self.tail_id.clone(),
            text: self.question.clone(),
            gold: Some(self.label),
            mask: self.mask.clone(),
        }
    }
}

fn pair_key(a: &EntityId, b: &EntityId) -> (EntityId, EntityId) {
    if a <= b {
        (a.clone(), b.clone())
    } else {
        (b.clone(), a.clone())
    }
}

fn instance(g: &KnowledgeGraph, head: &EntityId, tail: &EntityId, label: Label, mask: MaskSpec, provenance: Provenance) -> Result<DatasetInstance, KgError> {
    let head_name = g.name_of(head)?.to_string();
    let tail_name = g.name_of(tail)?.to_string();
    Ok(DatasetInstance {
        id: String::new(),
        head_id: head.clone(),
        tail_id: tail.clone(),
        question: question_text(&head_name, &tail_name),
        head_name,
        tail_name,
        label,
        mask,
        provenance,
    })
}

fn opposite(relation: &str) -> Option<&'static str> {
    match relation {
        "stimulate" => Some("inhibit"),
        "inhibit" => Some("stimulate"),
        _ => None,
    }
}

fn label_of(relation: &str) -> Label {
    if relation == "stimulate" {
        Label::Stimulate
    } else {
        Label::Inhibit
    }
}

/// Threshold rule: every opposite-relation triple between the endpoints, in
/// either orientation, has fewer than `ratio × t.n_pubs` publications.
pub fn passes_threshold(g: &KnowledgeGraph, t: &Triple, ratio: f64) -> Result<bool, KgError> {
    let Some(opp) = opposite(t.relation.as_str()) else {
        return Ok(false);
    };
    let limit = ratio * t.n_pubs as f64;
    Ok(g.direct_relations(&t.head, &t.tail)?.iter().filter(|o| o.relation.as_str() == opp).all(|o| (o.n_pubs as f64) < limit))
}

/// One walk-sampled positive. `wanted` says which labels still need instances;
/// `used` holds unordered pairs already emitted.
pub fn sample_positive(
    g: &KnowledgeGraph,
    rng: &mut ChaCha8Rng,
    cfg: &BuilderConfig,
    used: &HashSet<(EntityId, EntityId)>,
    wanted: impl Fn(Label) -> bool,
) -> Result<DatasetInstance, DatasetError> {
    let entities = g.entities();
    if entities.is_empty() {
        return Err(DatasetError::Exhausted("graph has no entities".into()));
    }
    for restarts in 0..cfg.restart_budget {
        let start = &entities[rng.random_range(0..entities.len())].id;
        let mut trace = vec![start.clone()];
        let mut visited: HashSet<&EntityId> = HashSet::from([start]);
        let mut current = start;
        for _ in 0..cfg.max_walk {
            let incident = g.neighbors(current)?;
            let mut chosen = None;
            for t in &incident {
                if opposite(t.relation.as_str()).is_some()
                    && wanted(label_of(t.relation.as_str()))
                    && !used.contains(&pair_key(&t.head, &t.tail))
                    && passes_threshold(g, t, cfg.ratio)?
                {
                    chosen = Some(*t);
                    break;
                }
            }
            if let Some(t) = chosen {
                let other = t.other_end(current).expect("incident triple touches node");
                trace.push(other.clone());
                let mask = MaskSpec::edge(t.head.clone(), t.relation.clone(), t.tail.clone());
                let prov = Provenance { origin: Origin::Walk, trace, restarts };
                return Ok(instance(g, &t.head, &t.tail, label_of(t.relation.as_str()), mask, prov)?);
            }
            let next = incident.iter().filter_map(|t| t.other_end(current)).find(|n| !visited.contains(n));
            match next {
                Some(n) => {
                    visited.insert(n);
                    trace.push(n.clone());
                    current = n;
                }
                None => break,
            }
        }
    }
    Err(DatasetError::Exhausted(format!("no valid stimulate/inhibit pair after {} walks", cfg.restart_budget)))
}

/// A random pool pair with no direct triple of any type.
pub fn sample_no_relation(
    g: &KnowledgeGraph,
    pool: &[EntityId],
    rng: &mut ChaCha8Rng,
    cfg: &BuilderConfig,
    used: &HashSet<(EntityId, EntityId)>,
) -> Result<DatasetInstance, DatasetError> {
    if pool.len() < 2 {
        return Err(DatasetError::Exhausted("no-relation pool has fewer than two entities".into()));
    }
    for restarts in 0..cfg.restart_budget {
        let i = rng.random_range(0..pool.len());
        let j = rng.random_range(0..pool.len());
        if i == j {
            continue;
        }
        let (a, b) = (&pool[i], &pool[j]);
        if used.contains(&pair_key(a, b)) || !g.direct_relations(a, b)?.is_empty() {
            continue;
        }
        let prov = Provenance { origin: Origin::Pool, trace: vec![a.clone(), b.clone()], restarts };
        return Ok(instance(g, a, b, Label::NoRelation, MaskSpec::pair(a.clone(), b.clone()), prov)?);
    }
    Err(DatasetError::Exhausted(format!("no unconnected pool pair after {} draws", cfg.restart_budget)))
}

/// `per_class` instances of each label, shuffled, ids assigned in final order.
pub fn build_dataset(g: &KnowledgeGraph, cfg: &BuilderConfig) -> Result<Vec<DatasetInstance>, DatasetError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut used = HashSet::new();
    let mut out = Vec::with_capacity(cfg.per_class * 3);
    let mut counts = [0usize; 3];
    while counts[Label::Stimulate.index()] < cfg.per_class || counts[Label::Inhibit.index()] < cfg.per_class {
        let inst = sample_positive(g, &mut rng, cfg, &used, |l| counts[l.index()] < cfg.per_class)?;
        used.insert(pair_key(&inst.head_id, &inst.tail_id));
        counts[inst.label.index()] += 1;
        out.push(inst);
    }
    let pool: Vec<EntityId> = out.iter().flat_map(|i| [i.head_id.clone(), i.tail_id.clone()]).collect::<BTreeSet<_>>().into_iter().collect();
    for _ in 0..cfg.per_class {
        let inst = sample_no_relation(g, &pool, &mut rng, cfg, &used)?;
        used.insert(pair_key(&inst.head_id, &inst.tail_id));
        out.push(inst);
    }
    out.shuffle(&mut rng);
    let width = out.len().to_string().len().max(4);
    for (i, inst) in out.iter_mut().enumerate() {
        inst.id = format!("q{:0width$}", i + 1);
    }
    Ok(out)
}

pub fn class_counts(instances: &[DatasetInstance]) -> [usize; 3] {
    let mut c = [0; 3];
    for i in instances {
        c[i.label.index()] += 1;
    }
    c
}

pub fn to_jsonl(instances: &[DatasetInstance]) -> String {
    instances.iter().map(|i| serde_json::to_string(i).expect("instance serializes") + "\n").collect()
}

pub fn parse_dataset(text: &str) -> Result<Vec<DatasetInstance>, DatasetError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(line).map_err(|e| DatasetError::Parse { line: i + 1, msg: e.to_string() })?);
    }
    Ok(out)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<DatasetInstance>, DatasetError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| DatasetError::Io { path: path.display().to_string(), msg: e.to_string() })?;
    parse_dataset(&text)
}

pub fn write_dataset(path: impl AsRef<Path>, instances: &[DatasetInstance]) -> Result<(), DatasetError> {
    let path = path.as_ref();
    fs::write(path, to_jsonl(instances)).map_err(|e| DatasetError::Io { path: path.display().to_string(), msg: e.to_string() })
}
