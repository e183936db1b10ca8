//! KG-supported hallucination detection.
//!
//! Every reasoning step is linked to graph entities; the direct triples among
//! the linked pairs are shown to the verifier agent one at a time, and the
//! step counts as correct once any triple is affirmed.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{parse_verdict, AgentRole, ChatBackend, ChatRequest, ChatTranscript, GenerationConfig, PromptTemplate, TemplateVariant};
use crate::kg::{canonical_cmp, EntityId, GraphView, KgError, Triple};
use crate::linker::{EntityLinker, Mention};
use crate::scalar::Scalar;

pub const DEFAULT_CANDIDATE_CAP: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripleJudgment {
    pub triple: Triple,
    pub affirmed: bool,
    /// Verdict could not be read from the completion; counted as a "no".
    pub parse_failed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepVerdict {
    /// 1-based.
    pub step_index: usize,
    pub step_text: String,
    pub mentions: Vec<Mention>,
    pub candidate_triples: Vec<Triple>,
    pub judgments: Vec<TripleJudgment>,
    pub supporting_triple: Option<Triple>,
    pub correct: bool,
    pub verify_failed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceReport {
    pub verdicts: Vec<StepVerdict>,
    pub confidence: f64,
}

#[derive(Debug, Clone)]
pub struct VerifierSettings {
    pub candidate_cap: usize,
    pub template: PromptTemplate,
    pub generation: GenerationConfig,
}

impl Default for VerifierSettings {
    fn default() -> Self {
        Self {
            candidate_cap: DEFAULT_CANDIDATE_CAP,
            template: PromptTemplate::builtin(TemplateVariant::Verify),
            generation: GenerationConfig::greedy("verifier"),
        }
    }
}

/// Fraction of correct verdicts; zero for an empty chain.
pub fn confidence<S: Scalar>(verdicts: &[StepVerdict]) -> S {
    confidence_of(verdicts.iter().map(|v| v.correct))
}

pub fn confidence_of<S: Scalar>(correct: impl IntoIterator<Item = bool>) -> S {
    let (mut hits, mut n) = (0, 0);
    for c in correct {
        n += 1;
        hits += usize::from(c);
    }
    S::ratio_or_zero(hits, n)
}

/// Direct triples among every unordered pair of linked entities, deduplicated,
/// in canonical order and capped.
pub fn candidate_triples(mentions: &[Mention], view: &GraphView<'_>, cap: usize) -> Result<Vec<Triple>, KgError> {
    let mut entities: Vec<&EntityId> = Vec::new();
    for m in mentions {
        if view.graph().contains(&m.entity) && !entities.contains(&&m.entity) {
            entities.push(&m.entity);
        }
    }
    let mut out: Vec<Triple> = Vec::new();
    for (i, a) in entities.iter().enumerate() {
        for b in &entities[i + 1..] {
            for t in view.direct_relations(a, b)? {
                if !out.contains(t) {
                    out.push(t.clone());
                }
            }
        }
    }
    out.sort_by(canonical_cmp);
    out.truncate(cap);
    Ok(out)
}

fn render_triple(t: &Triple, view: &GraphView<'_>) -> Result<String, KgError> {
    let g = view.graph();
    Ok(format!("({}, {}, {})", g.name_of(&t.head)?, t.relation, g.name_of(&t.tail)?))
}

/// Verifies one step; the transcripts of every verifier call come back too.
pub fn verify_step(
    step_index: usize,
    step: &str,
    view: &GraphView<'_>,
    linker: &dyn EntityLinker,
    agent: &dyn ChatBackend,
    settings: &VerifierSettings,
) -> Result<(StepVerdict, Vec<ChatTranscript>), KgError> {
    let mut verdict = StepVerdict {
        step_index,
        step_text: step.to_string(),
        mentions: Vec::new(),
        candidate_triples: Vec::new(),
        judgments: Vec::new(),
        supporting_triple: None,
        correct: false,
        verify_failed: false,
        error: None,
    };
    let mut transcripts = Vec::new();
    match linker.link(step) {
        Ok(m) => verdict.mentions = m,
        Err(e) => {
            verdict.verify_failed = true;
            verdict.error = Some(e.to_string());
            return Ok((verdict, transcripts));
        }
    }
    verdict.candidate_triples = candidate_triples(&verdict.mentions, view, settings.candidate_cap)?;
    for triple in &verdict.candidate_triples {
        let relation = render_triple(triple, view)?;
        let prompt = settings
            .template
            .render(&[("relation", &relation), ("sentence", step)])
            .map_err(|e| KgError::InvalidArgument(e.to_string()))?;
        match agent.complete(&ChatRequest::user(AgentRole::Verifier, prompt), &settings.generation) {
            Ok(t) => {
                let parsed = parse_verdict(&t.raw);
                let affirmed = parsed == Ok(true);
                verdict.judgments.push(TripleJudgment { triple: triple.clone(), affirmed, parse_failed: parsed.is_err() });
                transcripts.push(t);
                if affirmed {
                    verdict.supporting_triple = Some(triple.clone());
                    verdict.correct = true;
                    break;
                }
            }
            Err(e) => {
                verdict.verify_failed = true;
                verdict.error = Some(e.to_string());
                break;
            }
        }
    }
    Ok((verdict, transcripts))
}

/// Verifies all steps concurrently; output keeps step order.
pub fn verify_chain(
    steps: &[String],
    view: &GraphView<'_>,
    linker: &dyn EntityLinker,
    agent: &dyn ChatBackend,
    settings: &VerifierSettings,
) -> Result<(ConfidenceReport, Vec<ChatTranscript>), KgError> {
    let results: Vec<_> = steps
        .par_iter()
        .enumerate()
        .map(|(i, s)| verify_step(i + 1, s, view, linker, agent, settings))
        .collect::<Result<_, _>>()?;
    let mut verdicts = Vec::with_capacity(results.len());
    let mut transcripts = Vec::new();
    for (v, t) in results {
        verdicts.push(v);
        transcripts.extend(t);
    }
    let confidence = confidence::<f64>(&verdicts);
    Ok((ConfidenceReport { verdicts, confidence }, transcripts))
}

#[derive(Serialize)]
struct LogLine<'a> {
    question_id: &'a str,
    #[serde(flatten)]
    verdict: &'a StepVerdict,
}

/// Appends one JSON line per step.
pub fn write_verification_log<W: Write>(mut out: W, question_id: &str, verdicts: &[StepVerdict]) -> std::io::Result<()> {
    for verdict in verdicts {
        let line = serde_json::to_string(&LogLine { question_id, verdict }).map_err(std::io::Error::other)?;
        writeln!(out, "{line}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{Reply, RuleBasedBackend, ScriptRule, ScriptedBackend};
    use crate::kg::{fixtures, parse_kg, MaskSpec, Vocabulary};
    use crate::linker::Lexicon;
    use crate::scalar::Exact;

    const LIVER_TSV: &str = "\
C1\tCarbon Tetrachloride\tCHEMICAL\tcause\tD1\tChemical and Drug Induced Liver Injury\tDISEASE\t120
C1\tCarbon Tetrachloride\tCHEMICAL\tstimulate\tG1\tSLC17A5\tGENE\t4
D1\tChemical and Drug Induced Liver Injury\tDISEASE\tassociate\tG1\tSLC17A5\tGENE\t7
";

    fn yes_no(affirm: bool) -> ScriptedBackend {
        let reply = if affirm { "Answer: ['yes']" } else { "Answer: ['no']" };
        ScriptedBackend::new(vec![ScriptRule::text(AgentRole::Verifier, None, reply)])
    }

    #[test]
    fn liver_injury_step_is_verified() {
        let g = parse_kg(LIVER_TSV, &Vocabulary::default()).unwrap();
        let lex = Lexicon::build(&g);
        let step = "Carbon Tetrachloride is a chemical that causes liver injury";
        let mut lex = lex;
        lex.insert("liver injury", &"D1".into());
        let (v, t) = verify_step(1, step, &g.view(), &lex, &RuleBasedBackend::default(), &VerifierSettings::default()).unwrap();
        assert!(v.correct);
        assert_eq!(v.supporting_triple.unwrap().relation.as_str(), "cause");
        assert_eq!(t.len(), 1);
    }

    #[test]
    fn fewer_than_two_mentions_is_unverified() {
        let g = fixtures::toy();
        let lex = Lexicon::build(&g);
        let (v, t) = verify_step(1, "Alpha does something.", &g.view(), &lex, &yes_no(true), &VerifierSettings::default()).unwrap();
        assert!(!v.correct && v.candidate_triples.is_empty() && t.is_empty());
    }

    #[test]
    fn rejected_candidates_leave_no_support() {
        let g = fixtures::toy();
        let lex = Lexicon::build(&g);
        let text = format!("{} acts on {}.", g.name_of(&"C".into()).unwrap(), g.name_of(&"D".into()).unwrap());
        let (v, _) = verify_step(2, &text, &g.view(), &lex, &yes_no(false), &VerifierSettings::default()).unwrap();
        assert_eq!(v.candidate_triples.len(), 1);
        assert!(!v.correct && v.supporting_triple.is_none());
        assert_eq!(v.judgments.len(), 1);
    }

    #[test]
    fn masked_triple_cannot_support() {
        let g = fixtures::toy();
        let lex = Lexicon::build(&g);
        let view = g.mask(&MaskSpec::edge("A", "stimulate", "C")).unwrap();
        let text = format!("{} stimulates {}.", g.name_of(&"A".into()).unwrap(), g.name_of(&"C".into()).unwrap());
        let (v, _) = verify_step(1, &text, &view, &lex, &yes_no(true), &VerifierSettings::default()).unwrap();
        assert!(v.candidate_triples.is_empty() && !v.correct);
    }

    #[test]
    fn stops_at_first_affirmation_in_canonical_order() {
        let g = fixtures::toy();
        let lex = Lexicon::build(&g);
        let names: Vec<&str> = ["A", "B", "C"].iter().map(|id| g.name_of(&(*id).into()).unwrap()).collect();
        let text = names.join(" and ");
        let (v, t) = verify_step(1, &text, &g.view(), &lex, &yes_no(true), &VerifierSettings::default()).unwrap();
        let mut expected: Vec<Triple> = g.triples().iter().filter(|t| t.tail.as_str() != "D").cloned().collect();
        expected.sort_by(canonical_cmp);
        assert_eq!(v.candidate_triples, expected);
        assert_eq!(v.supporting_triple.as_ref(), expected.first());
        assert_eq!(t.len(), 1);
    }

    #[test]
    fn transport_failure_is_flagged() {
        let g = fixtures::toy();
        let lex = Lexicon::build(&g);
        let agent = ScriptedBackend::new(vec![ScriptRule::new(None, None, vec![Reply::Transport { transport: "down".into() }])]);
        let text = format!("{} and {}", g.name_of(&"C".into()).unwrap(), g.name_of(&"D".into()).unwrap());
        let (v, _) = verify_step(1, &text, &g.view(), &lex, &agent, &VerifierSettings::default()).unwrap();
        assert!(v.verify_failed && !v.correct);
    }

    #[test]
    fn unparseable_verdict_counts_as_no() {
        let g = fixtures::toy();
        let lex = Lexicon::build(&g);
        let agent = ScriptedBackend::new(vec![ScriptRule::text(AgentRole::Verifier, None, "Perhaps.")]);
        let text = format!("{} and {}", g.name_of(&"C".into()).unwrap(), g.name_of(&"D".into()).unwrap());
        let (v, _) = verify_step(1, &text, &g.view(), &lex, &agent, &VerifierSettings::default()).unwrap();
        assert!(!v.correct && v.judgments[0].parse_failed && !v.verify_failed);
    }

    #[test]
    fn confidence_arithmetic() {
        assert!((confidence_of::<f64>([true, true, false]) - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(confidence_of::<f64>([true; 4]), 1.0);
        assert_eq!(confidence_of::<f64>([]), 0.0);
        assert_eq!(confidence_of::<Exact>([true, false, false]), Exact::new(1, 3));
    }

    #[test]
    fn chain_keeps_step_order_and_logs() {
        let g = fixtures::toy();
        let lex = Lexicon::build(&g);
        let n = |id: &str| g.name_of(&id.into()).unwrap().to_string();
        let steps = vec![format!("{} and {}", n("C"), n("D")), "nothing here".to_string(), format!("{} and {}", n("A"), n("B"))];
        let (report, _) = verify_chain(&steps, &g.view(), &lex, &yes_no(true), &VerifierSettings::default()).unwrap();
        assert_eq!(report.verdicts.iter().map(|v| v.step_index).collect::<Vec<_>>(), [1, 2, 3]);
        assert!((report.confidence - 2.0 / 3.0).abs() < 1e-12);
        let mut buf = Vec::new();
        write_verification_log(&mut buf, "q1", &report.verdicts).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().all(|l| l.starts_with("{\"question_id\":\"q1\"")));
    }
}
