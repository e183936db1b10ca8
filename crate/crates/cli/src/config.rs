//! Layered key-value configuration for `kgcoi run`.
//!
//! Sources, highest precedence first: command-line flags, the `--config`
//! file, `KGCOI_<KEY>` environment variables, built-in defaults.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use kgcoi::pipeline::{Ablation, Method};
use serde::Serialize;

use crate::CliError;

/// Every accepted key with its default (empty means unset).
pub const KEYS: &[(&str, &str)] = &[
    ("kg", ""),
    ("aliases", ""),
    ("corpus", ""),
    ("index", ""),
    ("dataset", ""),
    ("out", ""),
    ("method", "kgcoi"),
    ("backend", "openai"),
    ("script", ""),
    ("base_url", "https://api.openai.com/v1"),
    ("api_key_env", "OPENAI_API_KEY"),
    ("model", "gpt-4o-mini"),
    ("enricher_model", ""),
    ("generator_model", ""),
    ("verifier_model", "gpt-4o-mini"),
    ("temperature", "0"),
    ("n_runs", "1"),
    ("seed", "0"),
    ("max_hops", "2"),
    ("chain_limit", "50"),
    ("top_k", "5"),
    ("no_kg", "false"),
    ("no_literature", "false"),
    ("no_enrichment", "false"),
    ("no_cot", "false"),
    ("concurrency", "4"),
    ("rate_per_minute", "0"),
    ("timeout_secs", "120"),
    ("max_retries", "4"),
    ("limit", ""),
    ("linker_cmd", ""),
];

const SECRET_KEYS: [&str; 3] = ["api_key", "openai_api_key", "token"];

pub const ENV_PREFIX: &str = "KGCOI_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Default,
    Env,
    File,
    Flag,
}

fn normalize_key(raw: &str) -> String {
    raw.trim().to_ascii_lowercase().replace('-', "_")
}

fn check_key(key: &str, origin: &str) -> Result<(), CliError> {
    if SECRET_KEYS.contains(&key) {
        return Err(CliError::Usage(format!("{origin}: API keys are read from the environment only (see api_key_env)")));
    }
    if !KEYS.iter().any(|(k, _)| *k == key) {
        return Err(CliError::Usage(format!("{origin}: unknown key {key:?}")));
    }
    Ok(())
}

/// Parses `key = value` lines; `#` starts a comment line.
pub fn parse_config_file(text: &str, origin: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("{origin}:{}: expected key = value", i + 1)))?;
        let key = normalize_key(k);
        check_key(&key, &format!("{origin}:{}", i + 1))?;
        if out.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(CliError::Usage(format!("{origin}:{}: {key} set twice", i + 1)));
        }
    }
    Ok(out)
}

/// Resolved string values with the layer each came from.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Layered {
    pub values: BTreeMap<String, (String, Source)>,
}

impl Layered {
    pub fn resolve(
        flags: BTreeMap<String, String>,
        file: Option<BTreeMap<String, String>>,
        env: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self, CliError> {
        let mut values: BTreeMap<String, (String, Source)> =
            KEYS.iter().map(|(k, d)| (k.to_string(), (d.to_string(), Source::Default))).collect();
        for (name, value) in env {
            if let Some(rest) = name.strip_prefix(ENV_PREFIX) {
                let key = normalize_key(rest);
                if values.contains_key(&key) {
                    values.insert(key, (value, Source::Env));
                }
            }
        }
        for (key, value) in file.into_iter().flatten() {
            values.insert(key, (value, Source::File));
        }
        for (key, value) in flags {
            check_key(&key, "flag")?;
            values.insert(key, (value, Source::Flag));
        }
        Ok(Self { values })
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|(v, _)| v.as_str()).filter(|v| !v.is_empty())
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.raw(key).map(PathBuf::from)
    }

    fn parse<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: fmt::Display,
    {
        self.raw(key)
            .map(|v| v.parse::<T>().map_err(|e| CliError::Usage(format!("{key} = {v:?}: {e}"))))
            .transpose()
    }

    fn required<T: FromStr>(&self, key: &str) -> Result<T, CliError>
    where
        T::Err: fmt::Display,
    {
        self.parse(key)?.ok_or_else(|| CliError::Usage(format!("missing required setting {key}")))
    }

    /// Plain `key = value` text, one line per key that is set.
    pub fn to_text(&self) -> String {
        self.values.iter().filter(|(_, (v, _))| !v.is_empty()).map(|(k, (v, _))| format!("{k} = {v}\n")).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Openai,
    RuleMock,
    Scripted,
}

impl FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "openai" => Ok(Self::Openai),
            "rule-mock" | "rule_mock" => Ok(Self::RuleMock),
            "scripted" => Ok(Self::Scripted),
            _ => Err("expected openai, rule-mock or scripted".into()),
        }
    }
}

/// Backend and per-role models; shared by `run` and `verify`.
#[derive(Debug, Clone, Serialize)]
pub struct AgentConfig {
    pub backend: BackendKind,
    pub script: Option<PathBuf>,
    pub base_url: String,
    pub api_key_env: String,
    pub enricher_model: String,
    pub generator_model: String,
    pub verifier_model: String,
    pub concurrency: usize,
    pub rate_per_minute: Option<u32>,
    pub timeout_secs: u64,
    pub max_retries: u32,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub kg: PathBuf,
    pub aliases: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub index: Option<PathBuf>,
    pub dataset: PathBuf,
    pub out: PathBuf,
    pub method: Method,
    pub agents: AgentConfig,
    pub temperature: f64,
    pub n_runs: usize,
    pub seed: u64,
    pub max_hops: usize,
    /// `None` when the configured limit is 0.
    pub chain_limit: Option<usize>,
    pub top_k: usize,
    pub ablation: Ablation,
    pub limit: Option<usize>,
    pub linker_cmd: Option<String>,
}

fn existing(path: Option<PathBuf>, key: &str) -> Result<Option<PathBuf>, CliError> {
    match path {
        Some(p) if !p.exists() => Err(CliError::Usage(format!("{key}: {} does not exist", p.display()))),
        other => Ok(other),
    }
}

impl AgentConfig {
    pub fn from_layers(l: &Layered) -> Result<Self, CliError> {
        let backend: BackendKind = l.required("backend")?;
        let script = existing(l.parse("script")?, "script")?;
        if backend == BackendKind::Scripted && script.is_none() {
            return Err(CliError::Usage("backend scripted needs script = <file>".into()));
        }
        let model: String = l.required("model")?;
        let role_model = |key: &str| -> Result<String, CliError> { Ok(l.parse::<String>(key)?.unwrap_or_else(|| model.clone())) };
        let concurrency: usize = l.required("concurrency")?;
        if concurrency == 0 {
            return Err(CliError::Usage("concurrency must be at least 1".into()));
        }
        Ok(Self {
            backend,
            script,
            base_url: l.required("base_url")?,
            api_key_env: l.required("api_key_env")?,
            enricher_model: role_model("enricher_model")?,
            generator_model: role_model("generator_model")?,
            verifier_model: role_model("verifier_model")?,
            concurrency,
            rate_per_minute: l.parse::<u32>("rate_per_minute")?.filter(|&r| r > 0),
            timeout_secs: l.required("timeout_secs")?,
            max_retries: l.required("max_retries")?,
        })
    }
}

impl RunConfig {
    pub fn from_layers(l: &Layered) -> Result<Self, CliError> {
        let method: Method = l.required("method")?;
        let ablation = Ablation {
            no_kg: l.required("no_kg")?,
            no_literature: l.required("no_literature")?,
            no_enrichment: l.required("no_enrichment")?,
            no_cot: l.required("no_cot")?,
        };
        if ablation != Ablation::default() && method != Method::Kgcoi {
            return Err(CliError::Usage(format!("ablation flags apply to method kgcoi, not {method}")));
        }
        let temperature: f64 = l.required("temperature")?;
        if !(temperature >= 0.0 && temperature.is_finite()) {
            return Err(CliError::Usage(format!("temperature {temperature} must be >= 0")));
        }
        let n_runs: usize = l.required("n_runs")?;
        if n_runs == 0 {
            return Err(CliError::Usage("n_runs must be at least 1".into()));
        }
        if n_runs > 1 && temperature == 0.0 {
            return Err(CliError::Usage(format!("self-consistency with n_runs = {n_runs} needs temperature > 0")));
        }
        let kg = existing(Some(l.required("kg")?), "kg")?.unwrap();
        let dataset = existing(Some(l.required("dataset")?), "dataset")?.unwrap();
        let corpus = existing(l.parse("corpus")?, "corpus")?;
        let index = existing(l.parse("index")?, "index")?;
        let needs_docs = matches!(method, Method::Rag | Method::Kgcoi) && !ablation.no_literature;
        if needs_docs && corpus.is_none() {
            return Err(CliError::Usage(format!("method {method} retrieves literature and needs corpus = <file>")));
        }
        if index.is_some() && corpus.is_none() {
            return Err(CliError::Usage("index needs the corpus it was built from".into()));
        }
        let chain_limit: usize = l.required("chain_limit")?;
        Ok(Self {
            kg,
            aliases: existing(l.parse("aliases")?, "aliases")?,
            corpus,
            index,
            dataset,
            out: l.required("out")?,
            method,
            agents: AgentConfig::from_layers(l)?,
            temperature,
            n_runs,
            seed: l.required("seed")?,
            max_hops: l.required("max_hops")?,
            chain_limit: (chain_limit > 0).then_some(chain_limit),
            top_k: l.required("top_k")?,
            ablation,
            limit: l.parse("limit")?,
            linker_cmd: l.parse("linker_cmd")?,
        })
    }
}

pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
    parse_config_file(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn precedence_flags_file_env_default() {
        let env = vec![
            ("KGCOI_MODEL".to_string(), "env-model".to_string()),
            ("KGCOI_SEED".to_string(), "7".to_string()),
            ("KGCOI_TOP_K".to_string(), "9".to_string()),
            ("PATH".to_string(), "/bin".to_string()),
        ];
        let file = map(&[("seed", "8"), ("top_k", "3")]);
        let flags = map(&[("top_k", "4")]);
        let l = Layered::resolve(flags, Some(file), env).unwrap();
        assert_eq!(l.values["model"], ("env-model".to_string(), Source::Env));
        assert_eq!(l.values["seed"], ("8".to_string(), Source::File));
        assert_eq!(l.values["top_k"], ("4".to_string(), Source::Flag));
        assert_eq!(l.values["max_hops"], ("2".to_string(), Source::Default));
    }

    #[test]
    fn file_format() {
        let m = parse_config_file("# comment\n\nmethod = rag\nTOP-K=3\n", "f").unwrap();
        assert_eq!(m, map(&[("method", "rag"), ("top_k", "3")]));
        assert!(parse_config_file("nonsense\n", "f").is_err());
        assert!(parse_config_file("colour = red\n", "f").is_err());
        assert!(parse_config_file("seed = 1\nseed = 2\n", "f").is_err());
    }

    #[test]
    fn secrets_rejected_in_files() {
        let err = parse_config_file("api_key = sk-123\n", "f").unwrap_err();
        assert!(err.to_string().contains("environment"));
    }

    #[test]
    fn self_consistency_needs_temperature() {
        let dir = std::env::temp_dir();
        let p = dir.to_string_lossy().to_string();
        let flags = map(&[("kg", &p), ("dataset", &p), ("corpus", &p), ("out", &p), ("n_runs", "5")]);
        let l = Layered::resolve(flags.clone(), None, Vec::new()).unwrap();
        assert!(matches!(RunConfig::from_layers(&l), Err(CliError::Usage(m)) if m.contains("temperature")));
        let mut ok = flags;
        ok.insert("temperature".into(), "0.7".into());
        let cfg = RunConfig::from_layers(&Layered::resolve(ok, None, Vec::new()).unwrap()).unwrap();
        assert_eq!(cfg.n_runs, 5);
        assert_eq!(cfg.agents.generator_model, "gpt-4o-mini");
    }

    #[test]
    fn ablations_only_for_kgcoi() {
        let p = std::env::temp_dir().to_string_lossy().to_string();
        let flags = map(&[("kg", &p), ("dataset", &p), ("out", &p), ("method", "cot"), ("no_kg", "true")]);
        let l = Layered::resolve(flags, None, Vec::new()).unwrap();
        assert!(RunConfig::from_layers(&l).is_err());
    }
}
