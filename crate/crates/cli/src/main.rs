//! `kgcoi`: index literature, mint datasets, run and score hypothesis benchmarks.

mod commands;
mod config;

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use kgcoi::dataset::BuilderConfig;
use kgcoi::pipeline::Method;

use config::{read_config_file, Layered};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

#[derive(Parser)]
#[command(name = "kgcoi", version, about = "Knowledge-graph grounded hypothesis generation benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a BM25 index file from a JSON-lines corpus.
    Index {
        /// Corpus with one {"doc_id", "title", "text"} object per line.
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample a balanced stimulate/inhibit/no_relation dataset from a graph.
    BuildDataset(BuildArgs),
    /// Answer every dataset question and write results, transcripts and a manifest.
    Run(RunArgs),
    /// Score a results file against a dataset.
    Score {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        /// Where to write the JSON summary [default: score.json next to the results].
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Re-verify the reasoning steps of an existing results file.
    Verify(VerifyArgs),
    /// Accuracy, F1 and confidence for several results files, by method and N.
    ScReport {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        /// Results files written by `run`.
        #[arg(required = true)]
        results: Vec<PathBuf>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long)]
    kg: PathBuf,
    /// Extra entity surface forms: `<entity_id>\t<alias>` per line.
    #[arg(long)]
    aliases: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Instances per class.
    #[arg(long, default_value_t = 100)]
    per_class: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Steps before a walk restarts.
    #[arg(long, default_value_t = 10)]
    max_walk: usize,
    /// Opposite relation must have fewer than ratio × n_pubs publications.
    #[arg(long, default_value_t = 0.5)]
    ratio: f64,
    /// Restarts allowed per emitted instance.
    #[arg(long, default_value_t = 10_000)]
    restart_budget: usize,
}

/// Backend settings shared by `run` and `verify`. Unset flags fall back to
/// the config file, then `KGCOI_<KEY>` variables, then defaults.
#[derive(Args)]
struct AgentArgs {
    /// Key-value config file; see README for keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// openai | rule-mock | scripted
    #[arg(long)]
    backend: Option<String>,
    /// Scripted replies (JSON) for the scripted backend.
    #[arg(long)]
    script: Option<String>,
    /// Chat-completions base URL.
    #[arg(long)]
    base_url: Option<String>,
    /// Name of the environment variable that holds the API key.
    #[arg(long)]
    api_key_env: Option<String>,
    /// Model for every role unless overridden.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    enricher_model: Option<String>,
    #[arg(long)]
    generator_model: Option<String>,
    #[arg(long)]
    verifier_model: Option<String>,
    /// Parallel questions and in-flight requests.
    #[arg(long)]
    concurrency: Option<usize>,
    /// Request budget per minute (0 disables pacing).
    #[arg(long)]
    rate_per_minute: Option<u32>,
    #[arg(long)]
    timeout_secs: Option<u64>,
    #[arg(long)]
    max_retries: Option<u32>,
    /// External entity linker command, spoken to over stdin/stdout.
    #[arg(long)]
    linker_cmd: Option<String>,
    #[arg(long)]
    kg: Option<String>,
    #[arg(long)]
    aliases: Option<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    agents: AgentArgs,
    #[arg(long)]
    corpus: Option<String>,
    /// Prebuilt index of the corpus.
    #[arg(long)]
    index: Option<String>,
    #[arg(long)]
    dataset: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
    /// direct | cot | rag | kgcoi
    #[arg(long)]
    method: Option<Method>,
    /// Generator temperature; 0 is greedy.
    #[arg(long)]
    temperature: Option<f64>,
    /// Self-consistency runs per question.
    #[arg(long)]
    n_runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_hops: Option<usize>,
    /// Chains kept per question (0 keeps all).
    #[arg(long)]
    chain_limit: Option<usize>,
    /// Documents retrieved per question.
    #[arg(long)]
    top_k: Option<usize>,
    /// Only the first N dataset instances.
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long)]
    no_kg: bool,
    #[arg(long)]
    no_literature: bool,
    #[arg(long)]
    no_enrichment: bool,
    #[arg(long)]
    no_cot: bool,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    agents: AgentArgs,
    #[arg(long)]
    results: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    /// Verification log (JSON lines).
    #[arg(long)]
    out: PathBuf,
}

macro_rules! put {
    ($map:ident, $src:expr, $($field:ident),+) => {
        $(if let Some(v) = &$src.$field {
            $map.insert(stringify!($field).to_string(), v.to_string());
        })+
    };
}

impl AgentArgs {
    fn flags(&self, map: &mut BTreeMap<String, String>) {
        put!(map, self, backend, script, base_url, api_key_env, model, enricher_model, generator_model, verifier_model);
        put!(map, self, concurrency, rate_per_minute, timeout_secs, max_retries, linker_cmd, kg, aliases);
    }

    fn layers(&self, mut flags: BTreeMap<String, String>) -> Result<Layered, CliError> {
        self.flags(&mut flags);
        let file = self.config.as_deref().map(read_config_file).transpose()?;
        Layered::resolve(flags, file, std::env::vars())
    }
}

impl RunArgs {
    fn layers(&self) -> Result<Layered, CliError> {
        let mut flags = BTreeMap::new();
        put!(flags, self, corpus, index, dataset, out, method, temperature, n_runs, seed, max_hops, chain_limit, top_k, limit);
        for (key, on) in [("no_kg", self.no_kg), ("no_literature", self.no_literature), ("no_enrichment", self.no_enrichment), ("no_cot", self.no_cot)] {
            if on {
                flags.insert(key.to_string(), "true".to_string());
            }
        }
        self.agents.layers(flags)
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Index { corpus, out } => commands::index(&corpus, &out),
        Command::BuildDataset(a) => commands::build(commands::DatasetArgs {
            kg: &a.kg,
            aliases: a.aliases.as_deref(),
            out: &a.out,
            config: BuilderConfig {
                per_class: a.per_class,
                seed: a.seed,
                max_walk: a.max_walk,
                ratio: a.ratio,
                restart_budget: a.restart_budget,
            },
        }),
        Command::Run(a) => commands::run(&a.layers()?),
        Command::Score { results, dataset, format, summary } => {
            commands::score_cmd(&results, &dataset, format == Format::Json, summary.as_deref())
        }
        Command::Verify(a) => commands::verify(&a.agents.layers(BTreeMap::new())?, &a.results, &a.dataset, &a.out),
        Command::ScReport { dataset, format, results } => commands::sc_report(&dataset, &results, format == Format::Json),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(match e {
                CliError::Usage(_) => 2,
                CliError::Runtime(_) => 1,
            })
        }
    }
}

