//! Scoring predictions against a gold dataset.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::Label;
use crate::dataset::DatasetInstance;
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("predictions do not align with gold: missing {missing:?}, duplicate {duplicate:?}, unknown {unknown:?}")]
    Alignment { missing: Vec<String>, duplicate: Vec<String>, unknown: Vec<String> },
    #[error("results line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// One prediction, as read from a results line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub question_id: String,
    pub prediction: Label,
    #[serde(default)]
    pub confidence: f64,
    #[serde(default)]
    pub parse_failed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldLabel {
    pub id: String,
    pub label: Label,
}

impl From<&DatasetInstance> for GoldLabel {
    fn from(i: &DatasetInstance) -> Self {
        Self { id: i.id.clone(), label: i.label }
    }
}

/// Counts indexed by `[gold][predicted]` in `Label::ALL` order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[usize; 3]; 3],
}

impl ConfusionMatrix {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (Label, Label)>) -> Self {
        let mut m = Self::default();
        for (gold, pred) in pairs {
            m.counts[gold.index()][pred.index()] += 1;
        }
        m
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> usize {
        (0..3).map(|i| self.counts[i][i]).sum()
    }

    pub fn true_positives(&self, l: Label) -> usize {
        self.counts[l.index()][l.index()]
    }

    pub fn false_positives(&self, l: Label) -> usize {
        (0..3).filter(|&g| g != l.index()).map(|g| self.counts[g][l.index()]).sum()
    }

    pub fn false_negatives(&self, l: Label) -> usize {
        (0..3).filter(|&p| p != l.index()).map(|p| self.counts[l.index()][p]).sum()
    }

    pub fn f1<S: Scalar>(&self, l: Label) -> S {
        let tp = self.true_positives(l);
        S::ratio_or_zero(2 * tp, 2 * tp + self.false_positives(l) + self.false_negatives(l))
    }

    pub fn accuracy<S: Scalar>(&self) -> S {
        S::ratio_or_zero(self.correct(), self.total())
    }

    pub fn macro_f1<S: Scalar>(&self) -> S {
        let sum = Label::ALL.iter().fold(S::zero(), |acc, &l| acc + self.f1::<S>(l));
        sum / S::from_count(Label::ALL.len())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics<S> {
    pub accuracy: S,
    pub macro_f1: S,
    pub mean_confidence: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Score<S> {
    pub metrics: Metrics<S>,
    pub confusion: ConfusionMatrix,
    pub parse_failed: usize,
}

fn align<'p>(preds: &'p [Prediction], gold: &[GoldLabel]) -> Result<Vec<(Label, &'p Prediction)>, EvalError> {
    let mut by_id: HashMap<&str, &Prediction> = HashMap::new();
    let mut duplicate = Vec::new();
    for p in preds {
        if by_id.insert(p.question_id.as_str(), p).is_some() {
            duplicate.push(p.question_id.clone());
        }
    }
    let gold_ids: HashMap<&str, Label> = gold.iter().map(|g| (g.id.as_str(), g.label)).collect();
    let mut missing: Vec<String> = gold.iter().filter(|g| !by_id.contains_key(g.id.as_str())).map(|g| g.id.clone()).collect();
    let mut unknown: Vec<String> = by_id.keys().filter(|id| !gold_ids.contains_key(*id)).map(|id| id.to_string()).collect();
    if !(missing.is_empty() && duplicate.is_empty() && unknown.is_empty()) {
        missing.sort();
        duplicate.sort();
        duplicate.dedup();
        unknown.sort();
        return Err(EvalError::Alignment { missing, duplicate, unknown });
    }
    Ok(gold.iter().map(|g| (g.label, by_id[g.id.as_str()])).collect())
}

/// Parse failures are scored as the label recorded for them.
pub fn score<S: Scalar>(preds: &[Prediction], gold: &[GoldLabel]) -> Result<Score<S>, EvalError> {
    let aligned = align(preds, gold)?;
    let confusion = ConfusionMatrix::from_pairs(aligned.iter().map(|(g, p)| (*g, p.prediction)));
    let n = aligned.len();
    let mean_confidence = if n == 0 { 0.0 } else { aligned.iter().map(|(_, p)| p.confidence).sum::<f64>() / n as f64 };
    Ok(Score {
        metrics: Metrics { accuracy: confusion.accuracy(), macro_f1: confusion.macro_f1(), mean_confidence, n },
        confusion,
        parse_failed: aligned.iter().filter(|(_, p)| p.parse_failed).count(),
    })
}

/// Reads the prediction fields of a results JSON-lines file.
pub fn parse_predictions(text: &str) -> Result<Vec<Prediction>, EvalError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(line).map_err(|e| EvalError::Parse { line: i + 1, msg: e.to_string() })?);
    }
    Ok(out)
}

/// Percentage with two decimals and a two-digit integer part, as in `00.00`.
pub fn pct(x: f64) -> String {
    format!("{:05.2}", x * 100.0)
}

pub fn render_score(title: &str, s: &Score<f64>) -> String {
    let mut out = String::new();
    let m = &s.metrics;
    let _ = writeln!(out, "{title}");
    let _ = writeln!(out, "n={}  accuracy={}  f1={}  confidence={}  parse_failed={}", m.n, pct(m.accuracy), pct(m.macro_f1), pct(m.mean_confidence), s.parse_failed);
    let _ = writeln!(out, "{:<12} {:>8} {:>12} {:>10}", "gold\\pred", "inhibit", "no_relation", "stimulate");
    for g in Label::ALL {
        let row = s.confusion.counts[g.index()];
        let _ = writeln!(out, "{:<12} {:>8} {:>12} {:>10}", g.as_str(), row[0], row[1], row[2]);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub method: String,
    pub n_runs: usize,
    pub metrics: Metrics<f64>,
}

/// Results for several `(method, N)` settings against one gold set, sorted
/// by method then N.
pub fn scaling_report(results: &[(String, usize, Vec<Prediction>)], gold: &[GoldLabel]) -> Result<Vec<ScalingRow>, EvalError> {
    let mut rows: BTreeMap<(String, usize), Metrics<f64>> = BTreeMap::new();
    for (method, n, preds) in results {
        rows.insert((method.clone(), *n), score::<f64>(preds, gold)?.metrics);
    }
    Ok(rows.into_iter().map(|((method, n_runs), metrics)| ScalingRow { method, n_runs, metrics }).collect())
}

pub fn render_scaling(rows: &[ScalingRow]) -> String {
    let mut out = format!("{:<10} {:>4} {:>9} {:>7} {:>11}\n", "method", "N", "accuracy", "F1", "confidence");
    for r in rows {
        let m = &r.metrics;
        let _ = writeln!(out, "{:<10} {:>4} {:>9} {:>7} {:>11}", r.method, r.n_runs, pct(m.accuracy), pct(m.macro_f1), pct(m.mean_confidence));
    }
    out
}
