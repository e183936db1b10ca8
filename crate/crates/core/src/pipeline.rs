//! End-to-end hypothesis generation for one question under one method.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{
    parse_answer, parse_keywords, parse_reasoning, AgentError, AgentRole, Agents, ChatRequest, ChatTranscript, GenerationConfig, Label,
    PromptTemplate, TemplateError, TemplateVariant,
};
use crate::agents::{DOCUMENTS_HEADING, RELATIONS_HEADING};
use crate::chains::{find_chains, render_chains, ChainQuery, RelationChain, DEFAULT_CHAIN_LIMIT, DEFAULT_MAX_HOPS};
use crate::kg::{EntityId, GraphView, KgError, KnowledgeGraph, MaskSpec};
use crate::linker::EntityLinker;
use crate::lit::{Bm25Params, Document, Index, LitError, DEFAULT_TOP_K};
use crate::seeds::run_seed;
use crate::verifier::{verify_chain, StepVerdict, VerifierSettings};

pub const RESULT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Kg(#[from] KgError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Lit(#[from] LitError),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("failed to build worker pool: {0}")]
    Pool(String),
}

pub fn question_text(head_name: &str, tail_name: &str) -> String {
    format!("Can we hypothesize a key relation between {head_name} and {tail_name}?")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub head: EntityId,
    pub tail: EntityId,
    pub text: String,
    pub gold: Option<Label>,
    pub mask: MaskSpec,
}

impl Question {
    /// Question with the canonical text rendered from graph names.
    pub fn new(id: impl Into<String>, head: EntityId, tail: EntityId, mask: MaskSpec, g: &KnowledgeGraph) -> Result<Self, KgError> {
        if !((mask.head == head && mask.tail == tail) || (mask.head == tail && mask.tail == head)) {
            return Err(KgError::InvalidArgument(format!("mask {}/{} does not match question {head}/{tail}", mask.head, mask.tail)));
        }
        let text = question_text(g.name_of(&head)?, g.name_of(&tail)?);
        Ok(Self { id: id.into(), head, tail, text, gold: None, mask })
    }

    pub fn with_gold(mut self, gold: Label) -> Self {
        self.gold = Some(gold);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Direct,
    Cot,
    Rag,
    Kgcoi,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Direct, Method::Cot, Method::Rag, Method::Kgcoi];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Direct => "direct",
            Method::Cot => "cot",
            Method::Rag => "rag",
            Method::Kgcoi => "kgcoi",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown method {s:?} (expected direct, cot, rag or kgcoi)"))
    }
}

/// Component switches for KG-CoI.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ablation {
    /// No neighbor relations in enrichment or generation.
    pub no_kg: bool,
    /// No retrieval; relations only.
    pub no_literature: bool,
    /// Retrieve with the raw question.
    pub no_enrichment: bool,
    /// Answer-only prompt.
    pub no_cot: bool,
}

#[derive(Debug, Clone)]
pub struct PipelineSettings {
    pub max_hops: usize,
    pub chain_limit: Option<usize>,
    pub top_k: usize,
    pub bm25: Bm25Params<f64>,
    pub ablation: Ablation,
    pub enricher: GenerationConfig,
    pub verifier: VerifierSettings,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        Self {
            max_hops: DEFAULT_MAX_HOPS,
            chain_limit: Some(DEFAULT_CHAIN_LIMIT),
            top_k: DEFAULT_TOP_K,
            bm25: Bm25Params::default(),
            ablation: Ablation::default(),
            enricher: GenerationConfig::greedy("enricher"),
            verifier: VerifierSettings::default(),
        }
    }
}

/// Literature corpus with its index.
#[derive(Debug, Clone)]
pub struct Literature {
    pub index: Index,
    docs: HashMap<String, Document>,
}

impl Literature {
    pub fn build(docs: Vec<Document>) -> Result<Self, LitError> {
        let index = Index::build(&docs)?;
        Ok(Self::with_index(index, docs))
    }

    pub fn with_index(index: Index, docs: Vec<Document>) -> Self {
        Self { index, docs: docs.into_iter().map(|d| (d.doc_id.clone(), d)).collect() }
    }

    pub fn empty() -> Self {
        Self::build(Vec::new()).expect("empty corpus indexes")
    }

    pub fn document(&self, doc_id: &str) -> Option<&Document> {
        self.docs.get(doc_id)
    }
}

/// Frozen, shared inputs for all questions of a run.
#[derive(Clone, Copy)]
pub struct Resources<'a> {
    pub graph: &'a KnowledgeGraph,
    pub literature: &'a Literature,
    pub linker: &'a dyn EntityLinker,
    pub agents: &'a Agents,
    pub settings: &'a PipelineSettings,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum Decoding {
    Greedy,
    Sampled { seed: u64 },
}

impl Decoding {
    fn of(cfg: &GenerationConfig) -> Self {
        match cfg.seed {
            Some(seed) if !cfg.is_greedy() => Decoding::Sampled { seed },
            _ => Decoding::Greedy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub question_id: String,
    pub method: Method,
    pub decoding: Decoding,
    pub chains: Vec<RelationChain>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query: Option<String>,
    /// Enrichment produced nothing usable and the question text was used.
    #[serde(default)]
    pub query_fallback: bool,
    pub docs: Vec<String>,
    pub steps: Vec<String>,
    pub label: Label,
    pub confidence: f64,
    pub verdicts: Vec<StepVerdict>,
    pub parse_failed: bool,
    pub attempts: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    #[serde(skip)]
    pub transcripts: Vec<ChatTranscript>,
}

impl RunRecord {
    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }
}

/// Chain retrieval output, shared by every run of one question.
pub struct Prepared<'g> {
    pub view: GraphView<'g>,
    pub chains: Vec<RelationChain>,
    pub chain_context: String,
}

pub fn prepare<'g>(q: &Question, method: Method, graph: &'g KnowledgeGraph, settings: &PipelineSettings) -> Result<Prepared<'g>, KgError> {
    let view = graph.mask(&q.mask)?;
    let (chains, chain_context) = if method == Method::Kgcoi && !settings.ablation.no_kg {
        let query = ChainQuery::new(q.head.clone(), q.tail.clone()).max_hops(settings.max_hops).limit(settings.chain_limit);
        let chains = find_chains(&view, &query)?;
        let rendered = render_chains(&chains, graph)?;
        (chains, rendered)
    } else {
        (Vec::new(), String::new())
    };
    Ok(Prepared { view, chains, chain_context })
}

fn relations_section(chain_context: &str) -> String {
    let body = if chain_context.is_empty() { "None found." } else { chain_context };
    format!("{RELATIONS_HEADING}\n{body}")
}

fn documents_section(lit: &Literature, doc_ids: &[String]) -> String {
    let mut out = String::from(DOCUMENTS_HEADING);
    if doc_ids.is_empty() {
        out.push_str("\nNone found.");
    }
    for (i, id) in doc_ids.iter().enumerate() {
        let text = lit.document(id).map(Document::indexed_text).unwrap_or_default();
        out.push_str(&format!("\n[{}] {}", i + 1, text.trim()));
    }
    out
}

/// Generator template and prompt for a method. `relations` and `documents`
/// are `None` when that context source is switched off.
pub fn generator_prompt(
    method: Method,
    ablation: &Ablation,
    question: &str,
    relations: Option<&str>,
    documents: Option<&str>,
) -> Result<(TemplateVariant, String), TemplateError> {
    let variant = match method {
        Method::Direct => TemplateVariant::Direct,
        Method::Cot => TemplateVariant::Cot,
        Method::Rag => TemplateVariant::Rag,
        Method::Kgcoi if ablation.no_cot => TemplateVariant::KgcoiAnswerOnly,
        Method::Kgcoi => TemplateVariant::Kgcoi,
    };
    let context = [relations, documents].into_iter().flatten().collect::<Vec<_>>().join("\n\n");
    let prompt = PromptTemplate::builtin(variant).render(&[("question", question), ("context", &context)])?;
    Ok((variant, prompt))
}

pub fn enrichment_prompt(question: &str, relations: &str) -> Result<String, TemplateError> {
    PromptTemplate::builtin(TemplateVariant::Enrich).render(&[("question", question), ("context", relations)])
}

fn call(agents: &Agents, role: AgentRole, prompt: String, cfg: &GenerationConfig, log: &mut Vec<ChatTranscript>) -> Result<String, AgentError> {
    let t = agents.for_role(role).complete(&ChatRequest::user(role, prompt), cfg)?;
    let raw = t.raw.clone();
    log.push(t);
    Ok(raw)
}

/// Keywords from LLM-E, or the question text (flagged) when the reply has none.
pub fn enrich_query(
    q: &Question,
    relations: &str,
    agents: &Agents,
    cfg: &GenerationConfig,
    log: &mut Vec<ChatTranscript>,
) -> Result<(String, bool), AgentError> {
    let prompt = enrichment_prompt(&q.text, relations).map_err(|e| AgentError::Script(e.to_string()))?;
    let raw = call(agents, AgentRole::Enricher, prompt, cfg, log)?;
    Ok(match parse_keywords(&raw) {
        Ok(k) => (k, false),
        Err(_) => (q.text.clone(), true),
    })
}

enum StepFailure {
    Agent(AgentError),
    Fatal(PipelineError),
}

impl From<PipelineError> for StepFailure {
    fn from(e: PipelineError) -> Self {
        StepFailure::Fatal(e)
    }
}

impl From<TemplateError> for StepFailure {
    fn from(e: TemplateError) -> Self {
        StepFailure::Fatal(e.into())
    }
}

impl From<KgError> for StepFailure {
    fn from(e: KgError) -> Self {
        StepFailure::Fatal(e.into())
    }
}

fn attempt(q: &Question, method: Method, cfg: &GenerationConfig, prep: &Prepared<'_>, res: &Resources<'_>) -> Result<RunRecord, StepFailure> {
    let settings = res.settings;
    let ab = &settings.ablation;
    let mut transcripts = Vec::new();
    let mut query = None;
    let mut query_fallback = false;
    let mut docs: Vec<String> = Vec::new();

    let uses_kg = method == Method::Kgcoi && !ab.no_kg;
    let uses_lit = method == Method::Rag || (method == Method::Kgcoi && !ab.no_literature);
    let relations = uses_kg.then(|| relations_section(&prep.chain_context));

    if uses_lit {
        let q_text = if method == Method::Kgcoi && !ab.no_enrichment {
            let (k, fallback) = enrich_query(q, relations.as_deref().unwrap_or(""), res.agents, &settings.enricher, &mut transcripts)
                .map_err(StepFailure::Agent)?;
            query_fallback = fallback;
            k
        } else {
            q.text.clone()
        };
        docs = res.literature.index.search(&q_text, settings.top_k, &settings.bm25).into_iter().map(|h| h.doc_id).collect();
        query = Some(q_text);
    }
    let documents = uses_lit.then(|| documents_section(res.literature, &docs));

    let (_, prompt) = generator_prompt(method, ab, &q.text, relations.as_deref(), documents.as_deref())?;
    let raw = call(res.agents, AgentRole::Generator, prompt, cfg, &mut transcripts).map_err(StepFailure::Agent)?;
    let (label, parse_failed) = match parse_answer(&raw) {
        Ok(l) => (l, false),
        Err(_) => (Label::NoRelation, true),
    };
    let steps = if method == Method::Direct || (method == Method::Kgcoi && ab.no_cot) { Vec::new() } else { parse_reasoning(&raw) };

    let (verdicts, confidence) = if steps.is_empty() {
        (Vec::new(), 0.0)
    } else {
        let verifier = res.agents.for_role(AgentRole::Verifier);
        let (report, vt) = verify_chain(&steps, &prep.view, res.linker, verifier, &settings.verifier)?;
        transcripts.extend(vt);
        (report.verdicts, report.confidence)
    };

    Ok(RunRecord {
            question_id: q.id.clone(),
            method,
            decoding: Decoding::of(cfg),
            chains: if uses_kg { prep.chains.clone() } else { Vec::new() },
            query,
            query_fallback,
            docs,
            steps,
            label,
            confidence,
            verdicts,
            parse_failed,
            attempts: 1,
        failure: None,
        transcripts,
    })
}

/// One run over a prepared question. An agent failure is retried once; a
/// second failure yields a failed record labelled `no_relation`.
pub fn run_prepared(q: &Question, method: Method, cfg: &GenerationConfig, prep: &Prepared<'_>, res: &Resources<'_>) -> Result<RunRecord, PipelineError> {
    let mut last = String::new();
    for n in 1..=2 {
        match attempt(q, method, cfg, prep, res) {
            Ok(mut record) => {
                record.attempts = n;
                return Ok(record);
            }
            Err(StepFailure::Fatal(e)) => return Err(e),
            Err(StepFailure::Agent(e)) => {
                let retry = e.is_transport();
                last = e.to_string();
                if !retry {
                    break;
                }
            }
        }
    }
    Ok(RunRecord {
        question_id: q.id.clone(),
        method,
        decoding: Decoding::of(cfg),
        chains: Vec::new(),
        query: None,
        query_fallback: false,
        docs: Vec::new(),
        steps: Vec::new(),
        label: Label::NoRelation,
        confidence: 0.0,
        verdicts: Vec::new(),
        parse_failed: false,
        attempts: 2,
        failure: Some(last),
        transcripts: Vec::new(),
    })
}

pub fn run_instance(q: &Question, method: Method, cfg: &GenerationConfig, res: &Resources<'_>) -> Result<RunRecord, PipelineError> {
    let prep = prepare(q, method, res.graph, res.settings)?;
    run_prepared(q, method, cfg, &prep, res)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteCounts {
    pub inhibit: usize,
    pub no_relation: usize,
    pub stimulate: usize,
}

impl VoteCounts {
    pub fn get(&self, l: Label) -> usize {
        match l {
            Label::Inhibit => self.inhibit,
            Label::NoRelation => self.no_relation,
            Label::Stimulate => self.stimulate,
        }
    }

    fn bump(&mut self, l: Label) {
        match l {
            Label::Inhibit => self.inhibit += 1,
            Label::NoRelation => self.no_relation += 1,
            Label::Stimulate => self.stimulate += 1,
        }
    }
}

/// Plurality over `(label, confidence)` votes. Ties go to the larger summed
/// confidence, then to the earliest label in `Label::ALL`.
pub fn vote(votes: &[(Label, f64)]) -> Option<(Label, VoteCounts)> {
    if votes.is_empty() {
        return None;
    }
    let mut counts = VoteCounts::default();
    let mut sums = [0.0f64; 3];
    for &(l, c) in votes {
        counts.bump(l);
        sums[l.index()] += c;
    }
    let mut best = Label::ALL[0];
    for l in Label::ALL.into_iter().skip(1) {
        let (cl, cb) = (counts.get(l), counts.get(best));
        if cl > cb || (cl == cb && sums[l.index()] > sums[best.index()]) {
            best = l;
        }
    }
    Some((best, counts))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRecord {
    pub schema_version: u32,
    pub question_id: String,
    pub method: Method,
    pub n_runs: usize,
    pub prediction: Label,
    pub votes: VoteCounts,
    /// Mean over successful runs.
    pub confidence: f64,
    pub parse_failed: bool,
    pub failed: bool,
    pub runs: Vec<RunRecord>,
}

impl AggregateRecord {
    pub fn transcripts(&self) -> impl Iterator<Item = &ChatTranscript> {
        self.runs.iter().flat_map(|r| r.transcripts.iter())
    }
}

fn aggregate(q: &Question, method: Method, runs: Vec<RunRecord>) -> AggregateRecord {
    let ok: Vec<&RunRecord> = runs.iter().filter(|r| !r.failed()).collect();
    let votes: Vec<(Label, f64)> = ok.iter().map(|r| (r.label, r.confidence)).collect();
    let (prediction, counts) = vote(&votes).unwrap_or((Label::NoRelation, VoteCounts::default()));
    let confidence = if ok.is_empty() { 0.0 } else { ok.iter().map(|r| r.confidence).sum::<f64>() / ok.len() as f64 };
    AggregateRecord {
        schema_version: RESULT_SCHEMA_VERSION,
        question_id: q.id.clone(),
        method,
        n_runs: runs.len(),
        prediction,
        votes: counts,
        confidence,
        parse_failed: ok.iter().any(|r| r.parse_failed),
        failed: ok.is_empty(),
        runs,
    }
}

/// `n` sampled runs (or one greedy run) and their vote.
pub fn self_consistency(
    q: &Question,
    method: Method,
    n: usize,
    cfg: &GenerationConfig,
    base_seed: u64,
    res: &Resources<'_>,
) -> Result<AggregateRecord, PipelineError> {
    if n == 0 {
        return Err(PipelineError::InvalidArgument("self-consistency needs at least one run".into()));
    }
    if n > 1 && cfg.is_greedy() {
        return Err(PipelineError::InvalidArgument("self-consistency with more than one run needs temperature > 0".into()));
    }
    let prep = prepare(q, method, res.graph, res.settings)?;
    let mut runs = Vec::with_capacity(n);
    for i in 0..n {
        let run_cfg = if cfg.is_greedy() { cfg.clone() } else { cfg.with_seed(run_seed(base_seed, &q.id, i)) };
        runs.push(run_prepared(q, method, &run_cfg, &prep, res)?);
    }
    Ok(aggregate(q, method, runs))
}

/// All questions on a pool of `parallelism` workers; output in input order.
pub fn run_batch(
    questions: &[Question],
    method: Method,
    n: usize,
    cfg: &GenerationConfig,
    base_seed: u64,
    res: &Resources<'_>,
    parallelism: usize,
) -> Result<Vec<AggregateRecord>, PipelineError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| PipelineError::Pool(e.to_string()))?;
    pool.install(|| questions.par_iter().map(|q| self_consistency(q, method, n, cfg, base_seed, res)).collect())
}
