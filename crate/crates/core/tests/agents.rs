use kgcoi::agents::{
    parse_answer, parse_keywords, parse_reasoning, parse_verdict, AgentError, AgentRole, ChatBackend, ChatRequest, GenerationConfig,
    ScriptedBackend,
};
use kgcoi::Label;
use proptest::prelude::*;

#[test]
fn answer_forms() {
    for (raw, want) in [
        ("Answer: ['stimulate']", Label::Stimulate),
        ("answer: inhibit", Label::Inhibit),
        ("Reasoning: x.\nAnswer: [\"no relation\"]", Label::NoRelation),
        ("Answer: ['inhibit']\nActually, Answer: ['stimulate']", Label::Stimulate),
    ] {
        assert_eq!(parse_answer(raw).unwrap(), want, "{raw}");
    }
    assert!(parse_answer("I think they stimulate each other").is_err());
}

#[test]
fn verdict_forms() {
    assert!(parse_verdict("Reasoning: fine.\nAnswer: ['yes']").unwrap());
    assert!(!parse_verdict("Answer: No").unwrap());
    assert!(parse_verdict("maybe").is_err());
}

#[test]
fn reasoning_steps_split() {
    let raw = "Reasoning: CCl4 causes liver injury. Liver injury is associated with SLC17A5.\nAnswer: ['stimulate']";
    assert_eq!(parse_reasoning(raw), ["CCl4 causes liver injury.", "Liver injury is associated with SLC17A5."]);
    assert_eq!(parse_reasoning("Reasoning: a | b\nAnswer: x"), ["a", "b"]);
    assert!(parse_reasoning("Answer: ['stimulate']").is_empty());
}

#[test]
fn keywords_strip_label() {
    assert_eq!(parse_keywords("Keywords: carbon tetrachloride SLC17A5").unwrap(), "carbon tetrachloride SLC17A5");
    assert!(parse_keywords("  ").is_err());
}

#[test]
fn scripted_backend_from_json() {
    let json = r#"{"rules":[
        {"role":"generator","contains":"SLC17A5","replies":["Answer: ['stimulate']"]},
        {"role":"verifier","replies":[{"transport":"connection reset"}]}
    ]}"#;
    let b = ScriptedBackend::from_json(json).unwrap();
    let cfg = GenerationConfig::greedy("m");
    let t = b.complete(&ChatRequest::user(AgentRole::Generator, "about SLC17A5"), &cfg).unwrap();
    assert_eq!(t.raw, "Answer: ['stimulate']");
    assert!(matches!(b.complete(&ChatRequest::user(AgentRole::Verifier, "x"), &cfg), Err(AgentError::Transport { .. })));
    assert!(matches!(b.complete(&ChatRequest::user(AgentRole::Generator, "other"), &cfg), Err(AgentError::Script(_))));
}

proptest! {
    #[test]
    fn labels_survive_decoration(ix in 0usize..3, upper in any::<bool>(), quote in prop::sample::select(vec!["'", "\"", ""]), prefix in "[a-z ]{0,20}") {
        let label = Label::ALL[ix];
        let mut word = label.as_str().to_string();
        if upper { word = word.to_uppercase(); }
        let raw = format!("{prefix}\nAnswer: [{quote}{word}{quote}]");
        prop_assert_eq!(parse_answer(&raw).unwrap(), label);
    }

    #[test]
    fn parse_never_panics(s in "\\PC{0,200}") {
        let _ = parse_answer(&s);
        let _ = parse_verdict(&s);
        let _ = parse_reasoning(&s);
    }
}
