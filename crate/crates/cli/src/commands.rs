use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use kgcoi::agents::{
    Agents, ChatBackend, EndpointConfig, GenerationConfig, OpenAiClient, RetryPolicy, RuleBasedBackend, ScriptedBackend,
};
use kgcoi::dataset::{build_dataset, class_counts, load_dataset, to_jsonl, BuilderConfig, DatasetInstance};
use kgcoi::eval::{parse_predictions, render_scaling, render_score, scaling_report, score, GoldLabel, Score};
use kgcoi::kg::{load_kg, load_kg_with_aliases, Vocabulary};
use kgcoi::linker::{EntityLinker, Lexicon, ProcessLinker};
use kgcoi::lit::{load_corpus, load_index, save_index, Index};
use kgcoi::pipeline::{run_batch, AggregateRecord, Literature, PipelineSettings, Resources};
use kgcoi::verifier::{verify_chain, VerifierSettings};
use kgcoi::{KnowledgeGraph, Label};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{AgentConfig, BackendKind, Layered, RunConfig};
use crate::CliError;

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn file_digest(path: &Path) -> Result<String, CliError> {
    Ok(sha256_hex(&fs::read(path).map_err(|e| runtime(format!("{}: {e}", path.display())))?))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn jsonl<T: Serialize>(rows: impl IntoIterator<Item = T>) -> String {
    rows.into_iter().map(|r| serde_json::to_string(&r).expect("serializable") + "\n").collect()
}

pub fn load_graph(kg: &Path, aliases: Option<&Path>) -> Result<KnowledgeGraph, CliError> {
    match aliases {
        Some(a) => load_kg_with_aliases(kg, a, &Vocabulary::default()),
        None => load_kg(kg),
    }
    .map_err(runtime)
}

pub fn index(corpus: &Path, out: &Path) -> Result<(), CliError> {
    let docs = load_corpus(corpus).map_err(runtime)?;
    let index = Index::build(&docs).map_err(runtime)?;
    save_index(&index, out).map_err(runtime)?;
    println!("indexed {} documents, {} terms -> {}", index.doc_count(), index.term_count(), out.display());
    Ok(())
}

pub struct DatasetArgs<'a> {
    pub kg: &'a Path,
    pub aliases: Option<&'a Path>,
    pub out: &'a Path,
    pub config: BuilderConfig,
}

pub fn build(args: DatasetArgs<'_>) -> Result<(), CliError> {
    args.config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let g = load_graph(args.kg, args.aliases)?;
    let data = build_dataset(&g, &args.config).map_err(runtime)?;
    write(args.out, to_jsonl(&data).as_bytes())?;
    let [inhibit, none, stimulate] = class_counts(&data);
    println!("inhibit={inhibit} no_relation={none} stimulate={stimulate} -> {}", args.out.display());
    Ok(())
}

fn backend(cfg: &AgentConfig) -> Result<Arc<dyn ChatBackend>, CliError> {
    Ok(match cfg.backend {
        BackendKind::RuleMock => Arc::new(RuleBasedBackend::default()),
        BackendKind::Scripted => {
            let path = cfg.script.as_ref().expect("validated");
            let text = fs::read_to_string(path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
            Arc::new(ScriptedBackend::from_json(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?)
        }
        BackendKind::Openai => {
            if std::env::var_os(&cfg.api_key_env).is_none() {
                eprintln!("warning: {} is not set; requests are sent without a bearer token", cfg.api_key_env);
            }
            let endpoint = EndpointConfig {
                base_url: cfg.base_url.clone(),
                api_key_env: Some(cfg.api_key_env.clone()),
                timeout: Duration::from_secs(cfg.timeout_secs),
                retry: RetryPolicy { max_retries: cfg.max_retries, ..RetryPolicy::default() },
                max_in_flight: cfg.concurrency,
                rate_per_minute: cfg.rate_per_minute,
            };
            Arc::new(OpenAiClient::from_env(endpoint))
        }
    })
}

fn linker(cmd: Option<&str>, g: &KnowledgeGraph) -> Result<Box<dyn EntityLinker>, CliError> {
    match cmd {
        Some(cmd) => {
            let mut parts = cmd.split_whitespace().map(String::from);
            let program = parts.next().ok_or_else(|| CliError::Usage("linker_cmd is empty".into()))?;
            let args: Vec<String> = parts.collect();
            Ok(Box::new(ProcessLinker::spawn(&program, &args).map_err(runtime)?))
        }
        None => Ok(Box::new(Lexicon::build(g))),
    }
}

fn verifier_settings(cfg: &AgentConfig) -> VerifierSettings {
    VerifierSettings { generation: GenerationConfig::greedy(cfg.verifier_model.clone()), ..VerifierSettings::default() }
}

fn gold_of(data: &[DatasetInstance]) -> Vec<GoldLabel> {
    data.iter().map(GoldLabel::from).collect()
}

fn tagged(question_id: &str, run: usize, row: impl Serialize) -> Value {
    let mut v = serde_json::to_value(row).expect("serializable");
    if let Value::Object(map) = &mut v {
        map.insert("question_id".into(), json!(question_id));
        map.insert("run".into(), json!(run));
    }
    v
}

#[derive(Serialize)]
struct InputDigest {
    path: String,
    sha256: String,
}

fn digest_entry(path: &Path) -> Result<InputDigest, CliError> {
    Ok(InputDigest { path: path.display().to_string(), sha256: file_digest(path)? })
}

pub fn run(layers: &Layered) -> Result<(), CliError> {
    let cfg = RunConfig::from_layers(layers)?;
    let g = load_graph(&cfg.kg, cfg.aliases.as_deref())?;
    let mut data = load_dataset(&cfg.dataset).map_err(runtime)?;
    if let Some(n) = cfg.limit {
        data.truncate(n);
    }
    let literature = match &cfg.corpus {
        None => Literature::empty(),
        Some(corpus) => {
            let docs = load_corpus(corpus).map_err(runtime)?;
            match &cfg.index {
                None => Literature::build(docs).map_err(runtime)?,
                Some(path) => {
                    let index = load_index(path).map_err(runtime)?;
                    let mut ids: Vec<&str> = docs.iter().map(|d| d.doc_id.as_str()).collect();
                    let mut indexed: Vec<&str> = index.doc_ids().iter().map(String::as_str).collect();
                    ids.sort_unstable();
                    indexed.sort_unstable();
                    if ids != indexed {
                        return Err(runtime(format!("{} was not built from {}", path.display(), corpus.display())));
                    }
                    Literature::with_index(index, docs)
                }
            }
        }
    };
    let linker = linker(cfg.linker_cmd.as_deref(), &g)?;
    let agents = Agents::uniform(backend(&cfg.agents)?);
    let settings = PipelineSettings {
        max_hops: cfg.max_hops,
        chain_limit: cfg.chain_limit,
        top_k: cfg.top_k,
        ablation: cfg.ablation,
        enricher: GenerationConfig::greedy(cfg.agents.enricher_model.clone()),
        verifier: verifier_settings(&cfg.agents),
        ..PipelineSettings::default()
    };
    let res = Resources { graph: &g, literature: &literature, linker: linker.as_ref(), agents: &agents, settings: &settings };
    let generation = if cfg.temperature == 0.0 {
        GenerationConfig::greedy(cfg.agents.generator_model.clone())
    } else {
        GenerationConfig::sampled(cfg.agents.generator_model.clone(), cfg.temperature, cfg.seed)
    };
    let questions: Vec<_> = data.iter().map(DatasetInstance::to_question).collect();
    let records = run_batch(&questions, cfg.method, cfg.n_runs, &generation, cfg.seed, &res, cfg.agents.concurrency).map_err(runtime)?;

    fs::create_dir_all(&cfg.out).map_err(|e| runtime(format!("{}: {e}", cfg.out.display())))?;
    let results = jsonl(&records);
    let transcripts = jsonl(records.iter().flat_map(|r| {
        r.runs.iter().enumerate().flat_map(move |(i, run)| run.transcripts.iter().map(move |t| tagged(&r.question_id, i, t)))
    }));
    let verification = jsonl(records.iter().flat_map(|r| {
        r.runs.iter().enumerate().flat_map(move |(i, run)| run.verdicts.iter().map(move |v| tagged(&r.question_id, i, v)))
    }));
    let preds = parse_predictions(&results).map_err(runtime)?;
    let scored = score::<f64>(&preds, &gold_of(&data)).map_err(runtime)?;
    let summary = serde_json::to_string_pretty(&ScoreSummary::new(&scored)).expect("serializable") + "\n";

    let resolved = layers.to_text();
    let outputs: [(&str, &[u8]); 5] = [
        ("results.jsonl", results.as_bytes()),
        ("transcripts.jsonl", transcripts.as_bytes()),
        ("verification.jsonl", verification.as_bytes()),
        ("summary.json", summary.as_bytes()),
        ("config.txt", resolved.as_bytes()),
    ];
    let mut output_digests = BTreeMap::new();
    for (name, bytes) in outputs {
        write(&cfg.out.join(name), bytes)?;
        output_digests.insert(name, sha256_hex(bytes));
    }
    let mut inputs = BTreeMap::new();
    inputs.insert("kg", digest_entry(&cfg.kg)?);
    inputs.insert("dataset", digest_entry(&cfg.dataset)?);
    for (key, path) in [("aliases", &cfg.aliases), ("corpus", &cfg.corpus), ("index", &cfg.index), ("script", &cfg.agents.script)] {
        if let Some(p) = path {
            inputs.insert(key, digest_entry(p)?);
        }
    }
    let manifest = json!({
        "tool": "kgcoi",
        "version": env!("CARGO_PKG_VERSION"),
        "command": "run",
        "settings": layers.values.iter().map(|(k, (v, s))| (k.clone(), json!({"value": v, "source": s}))).collect::<BTreeMap<_, _>>(),
        "inputs": inputs,
        "outputs": output_digests,
    });
    write(&cfg.out.join("manifest.json"), (serde_json::to_string_pretty(&manifest).expect("serializable") + "\n").as_bytes())?;

    let title = format!("{} ({}, N={})", cfg.method, if generation.is_greedy() { "greedy" } else { "sampled" }, cfg.n_runs);
    print!("{}", render_score(&title, &scored));
    let failed = records.iter().filter(|r| r.failed).count();
    if failed > 0 {
        eprintln!("{failed} of {} instances failed; see results.jsonl", records.len());
    }
    if !records.is_empty() && failed == records.len() {
        return Err(runtime("every instance failed"));
    }
    Ok(())
}

#[derive(Serialize)]
struct ScoreSummary {
    n: usize,
    accuracy: f64,
    macro_f1: f64,
    mean_confidence: f64,
    parse_failed: usize,
    labels: [&'static str; 3],
    confusion: [[usize; 3]; 3],
}

impl ScoreSummary {
    fn new(s: &Score<f64>) -> Self {
        Self {
            n: s.metrics.n,
            accuracy: s.metrics.accuracy,
            macro_f1: s.metrics.macro_f1,
            mean_confidence: s.metrics.mean_confidence,
            parse_failed: s.parse_failed,
            labels: Label::ALL.map(Label::as_str),
            confusion: s.confusion.counts,
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

pub fn score_cmd(results: &Path, dataset: &Path, json_only: bool, summary_out: Option<&Path>) -> Result<(), CliError> {
    let preds = parse_predictions(&read(results)?).map_err(runtime)?;
    let gold = gold_of(&load_dataset(dataset).map_err(runtime)?);
    let s = score::<f64>(&preds, &gold).map_err(runtime)?;
    let summary = serde_json::to_string_pretty(&ScoreSummary::new(&s)).expect("serializable") + "\n";
    let default_out = results.with_file_name("score.json");
    write(summary_out.unwrap_or(&default_out), summary.as_bytes())?;
    if json_only {
        print!("{summary}");
    } else {
        print!("{}", render_score(&results.display().to_string(), &s));
    }
    Ok(())
}

pub fn sc_report(dataset: &Path, results: &[PathBuf], json_only: bool) -> Result<(), CliError> {
    let gold = gold_of(&load_dataset(dataset).map_err(runtime)?);
    let mut sets = Vec::new();
    for path in results {
        let text = read(path)?;
        let first = text.lines().find(|l| !l.trim().is_empty()).ok_or_else(|| runtime(format!("{} is empty", path.display())))?;
        let head: Value = serde_json::from_str(first).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
        let method = head["method"].as_str().ok_or_else(|| runtime(format!("{}: no method field", path.display())))?;
        let n = head["n_runs"].as_u64().ok_or_else(|| runtime(format!("{}: no n_runs field", path.display())))?;
        sets.push((method.to_string(), n as usize, parse_predictions(&text).map_err(runtime)?));
    }
    let rows = scaling_report(&sets, &gold).map_err(runtime)?;
    if json_only {
        println!("{}", serde_json::to_string_pretty(&rows).expect("serializable"));
    } else {
        print!("{}", render_scaling(&rows));
    }
    Ok(())
}

pub fn verify(layers: &Layered, results: &Path, dataset: &Path, out: &Path) -> Result<(), CliError> {
    let agent_cfg = AgentConfig::from_layers(layers)?;
    let kg = layers.path("kg").ok_or_else(|| CliError::Usage("missing required setting kg".into()))?;
    let aliases = layers.path("aliases");
    let g = load_graph(&kg, aliases.as_deref())?;
    let linker = linker(layers.raw("linker_cmd"), &g)?;
    let agent = backend(&agent_cfg)?;
    let settings = verifier_settings(&agent_cfg);
    let instances: HashMap<String, DatasetInstance> = load_dataset(dataset).map_err(runtime)?.into_iter().map(|d| (d.id.clone(), d)).collect();

    let mut lines = String::new();
    let mut total = 0.0;
    let mut count = 0usize;
    println!("{:<12} {:>4} {:>9} {:>11}", "question", "run", "recorded", "recomputed");
    for (i, line) in read(results)?.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let record: AggregateRecord = serde_json::from_str(line).map_err(|e| runtime(format!("{}:{}: {e}", results.display(), i + 1)))?;
        let inst = instances.get(&record.question_id).ok_or_else(|| runtime(format!("{} is not in the dataset", record.question_id)))?;
        let view = g.mask(&inst.mask).map_err(runtime)?;
        for (run_ix, run) in record.runs.iter().enumerate() {
            let (report, _) = verify_chain(&run.steps, &view, linker.as_ref(), &agent, &settings).map_err(runtime)?;
            for v in &report.verdicts {
                lines.push_str(&(serde_json::to_string(&tagged(&record.question_id, run_ix, v)).expect("serializable") + "\n"));
            }
            println!("{:<12} {:>4} {:>9} {:>11}", record.question_id, run_ix, kgcoi::eval::pct(run.confidence), kgcoi::eval::pct(report.confidence));
            total += report.confidence;
            count += 1;
        }
    }
    write(out, lines.as_bytes())?;
    let mean = if count == 0 { 0.0 } else { total / count as f64 };
    println!("mean confidence {} over {count} runs -> {}", kgcoi::eval::pct(mean), out.display());
    Ok(())
}
