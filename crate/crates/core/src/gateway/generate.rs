use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ChatMessage, CompletionRequest, Gateway};
use crate::error::GatewayError;
use crate::event::GagneEvent;
use crate::exec::{map_ordered, Execution};
use crate::prompting::PromptSpec;
use crate::template::{DialogueTemplate, Provenance};

pub const GENERATION_SYSTEM_PROMPT: &str =
    "You write realistic teacher classroom dialogue for compulsory-education mathematics lessons.";

/// Why a candidate utterance failed the alignment check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation(pub String);

/// Decides whether generated text fits the requested event.
pub trait AlignmentCheck: Send + Sync {
    fn check(&self, text: &str, event: GagneEvent) -> Result<(), Violation>;
}

impl<F> AlignmentCheck for F
where
    F: Fn(&str, GagneEvent) -> Result<(), Violation> + Send + Sync,
{
    fn check(&self, text: &str, event: GagneEvent) -> Result<(), Violation> {
        self(text, event)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub prompt: String,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationOutcome {
    /// Always `llm_generated` and `pending`.
    pub template: DialogueTemplate,
    pub attempts: u32,
    pub transcript: Vec<TranscriptEntry>,
    pub passed: bool,
    pub last_violation: Option<Violation>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerateOptions {
    pub max_rounds: u32,
    pub seed: u64,
    pub now: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchOptions {
    pub max_rounds: u32,
    /// Item `i` is generated with seed `seed + i`.
    pub seed: u64,
    pub now: DateTime<Utc>,
    pub parallelism: usize,
}

fn corrective_turn(violation: &Violation) -> String {
    format!(
        "Your previous answer does not meet the requirement: {}. Revise it and answer with the final teacher utterance only.",
        violation.0
    )
}

fn clean_response(raw: &str) -> String {
    let t = raw.trim();
    let pairs = [('"', '"'), ('\u{201c}', '\u{201d}'), ('\'', '\'')];
    for (open, close) in pairs {
        if t.len() >= 2 && t.starts_with(open) && t.ends_with(close) {
            return t[open.len_utf8()..t.len() - close.len_utf8()].trim().to_string();
        }
    }
    t.to_string()
}

fn template_id(seed: u64, prompt: &str) -> String {
    let digest = Sha256::new()
        .chain_update(b"dialogue-template")
        .chain_update(seed.to_le_bytes())
        .chain_update(prompt.as_bytes())
        .finalize();
    let bytes: [u8; 16] = digest[..16].try_into().expect("16 bytes");
    uuid::Builder::from_random_bytes(bytes).into_uuid().to_string()
}

/// Generate one template, re-prompting with a corrective turn until the
/// checker accepts the text or `max_rounds` is reached.
pub fn generate_template(
    gateway: &Gateway,
    spec: &PromptSpec,
    checker: &dyn AlignmentCheck,
    opts: &GenerateOptions,
) -> Result<GenerationOutcome, GatewayError> {
    if opts.max_rounds == 0 {
        return Err(GatewayError::InvalidRequest("max_rounds must be at least 1".into()));
    }
    let mut prior: Vec<ChatMessage> = Vec::new();
    let mut prompt = spec.rendered_text.clone();
    let mut transcript = Vec::new();
    let mut text = String::new();
    let mut last_violation = None;

    for _ in 0..opts.max_rounds {
        let request = CompletionRequest {
            system_text: GENERATION_SYSTEM_PROMPT.into(),
            user_text: prompt.clone(),
            prior_turns: prior.clone(),
            seed: Some(opts.seed),
            temperature: None,
        };
        let raw = gateway.complete(&request)?;
        transcript.push(TranscriptEntry { prompt: prompt.clone(), response: raw.clone() });
        text = clean_response(&raw);
        match checker.check(&text, spec.event) {
            Ok(()) => {
                last_violation = None;
                break;
            }
            Err(v) => {
                prior.push(ChatMessage::user(prompt));
                prior.push(ChatMessage::assistant(raw));
                prompt = corrective_turn(&v);
                last_violation = Some(v);
            }
        }
    }

    let template = DialogueTemplate::new_pending(
        template_id(opts.seed, &spec.rendered_text),
        spec.concept.clone(),
        spec.event,
        text,
        Provenance::LlmGenerated,
        opts.now,
    );
    let outcome = GenerationOutcome {
        template,
        attempts: transcript.len() as u32,
        transcript,
        passed: last_violation.is_none(),
        last_violation,
    };
    if outcome.passed {
        Ok(outcome)
    } else {
        Err(GatewayError::RefinementExhausted(Box::new(outcome)))
    }
}

/// Generate for every spec with at most `parallelism` requests in flight.
///
/// Output `i` always corresponds to `specs[i]`; per-item failures are
/// returned in place and never abort the batch.
pub fn batch_generate(
    gateway: &Gateway,
    specs: &[PromptSpec],
    checker: &dyn AlignmentCheck,
    opts: &BatchOptions,
) -> Result<Vec<Result<GenerationOutcome, GatewayError>>, GatewayError> {
    if opts.parallelism == 0 {
        return Err(GatewayError::InvalidRequest("parallelism must be at least 1".into()));
    }
    let exec = if opts.parallelism == 1 { Execution::Sequential } else { Execution::Bounded(opts.parallelism) };
    Ok(map_ordered(specs, exec, |i, spec| {
        let item = GenerateOptions { max_rounds: opts.max_rounds, seed: opts.seed.wrapping_add(i as u64), now: opts.now };
        generate_template(gateway, spec, checker, &item)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::KeywordAlignment;
    use crate::gateway::{MockReply, MockTransport, ProviderConfig, RetryPolicy};
    use crate::prompting::{render, PromptTemplate};
    use chrono::TimeZone;
    use std::sync::Arc;

    fn now() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap()
    }

    fn spec(event: GagneEvent) -> PromptSpec {
        render(&PromptTemplate::default_cot(), "linear equation", event, None, &[]).unwrap()
    }

    fn gateway(transport: MockTransport) -> Gateway {
        Gateway::new(ProviderConfig::default(), Arc::new(transport)).unwrap().with_retry(RetryPolicy::immediate())
    }

    fn opts(max_rounds: u32) -> GenerateOptions {
        GenerateOptions { max_rounds, seed: 42, now: now() }
    }

    const WRONG: &str = "Well done, that is correct.";

    #[test]
    fn passes_first_round() {
        let out = generate_template(&Gateway::mock(), &spec(GagneEvent::GainAttention), &KeywordAlignment::default(), &opts(3)).unwrap();
        assert_eq!(out.attempts, 1);
        assert!(out.passed);
        assert_eq!(out.template.event, GagneEvent::GainAttention);
        assert_eq!(out.template.provenance, Provenance::LlmGenerated);
        assert_eq!(out.template.revision, 0);
        assert!(out.template.text.contains("linear equation"));
    }

    #[test]
    fn passes_on_third_round() {
        let transport = MockTransport::scripted([MockReply::Text(WRONG.into()), MockReply::Text(WRONG.into())]);
        let gw = gateway(transport);
        let out = generate_template(&gw, &spec(GagneEvent::GainAttention), &KeywordAlignment::default(), &opts(3)).unwrap();
        assert_eq!(out.attempts, 3);
        assert!(out.passed);
        assert_eq!(out.transcript.len(), 3);
        assert!(out.transcript[1].prompt.starts_with("Your previous answer does not meet the requirement"));
    }

    #[test]
    fn corrective_turns_carry_history() {
        let transport = Arc::new(MockTransport::scripted([MockReply::Text(WRONG.into())]));
        let gw = Gateway::new(ProviderConfig::default(), transport.clone()).unwrap();
        generate_template(&gw, &spec(GagneEvent::GainAttention), &KeywordAlignment::default(), &opts(3)).unwrap();
        let second = &transport.requests()[1];
        assert_eq!(second.messages.len(), 4);
        assert_eq!(second.messages[2].content, WRONG);
        assert!(second.messages[3].content.contains("'Gain attention'"));
    }

    #[test]
    fn exhausted_after_max_rounds() {
        let transport = MockTransport::scripted(vec![MockReply::Text(WRONG.into()); 5]);
        let gw = gateway(transport);
        match generate_template(&gw, &spec(GagneEvent::GainAttention), &KeywordAlignment::default(), &opts(2)) {
            Err(GatewayError::RefinementExhausted(outcome)) => {
                assert_eq!(outcome.transcript.len(), 2);
                assert_eq!(outcome.attempts, 2);
                assert!(!outcome.passed);
                assert_eq!(outcome.template.text, WRONG);
            }
            other => panic!("expected exhaustion, got {other:?}"),
        }
    }

    #[test]
    fn zero_rounds_rejected() {
        assert!(generate_template(&Gateway::mock(), &spec(GagneEvent::GainAttention), &KeywordAlignment::default(), &opts(0)).is_err());
    }

    #[test]
    fn closure_checker() {
        let always = |_: &str, _: GagneEvent| -> Result<(), Violation> { Ok(()) };
        let gw = gateway(MockTransport::scripted([MockReply::Text("\"Anything.\"".into())]));
        let out = generate_template(&gw, &spec(GagneEvent::GainAttention), &always, &opts(1)).unwrap();
        assert_eq!(out.template.text, "Anything.");
    }

    #[test]
    fn batch_in_order_with_per_item_errors() {
        let specs: Vec<_> = GagneEvent::ALL[..5].iter().map(|&e| spec(e)).collect();
        let transport = MockTransport::canned().with_rule("Inform learners of objectives", MockReply::Status(401));
        let gw = gateway(transport);
        let out = batch_generate(&gw, &specs, &KeywordAlignment::default(), &BatchOptions { max_rounds: 3, seed: 1, now: now(), parallelism: 2 }).unwrap();
        assert_eq!(out.len(), 5);
        assert!(matches!(out[1], Err(GatewayError::Auth { .. })));
        for (i, r) in out.iter().enumerate().filter(|(i, _)| *i != 1) {
            assert_eq!(r.as_ref().unwrap().template.event, GagneEvent::ALL[i]);
        }
    }

    #[test]
    fn parallelism_does_not_change_results() {
        let specs: Vec<_> = GagneEvent::ALL.iter().map(|&e| spec(e)).collect();
        let run = |p| {
            batch_generate(&Gateway::mock(), &specs, &KeywordAlignment::default(), &BatchOptions { max_rounds: 3, seed: 9, now: now(), parallelism: p })
                .unwrap()
                .into_iter()
                .map(|r| r.unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn ids_differ_per_item() {
        let specs = vec![spec(GagneEvent::GainAttention); 3];
        let out = batch_generate(&Gateway::mock(), &specs, &KeywordAlignment::default(), &BatchOptions { max_rounds: 1, seed: 0, now: now(), parallelism: 1 }).unwrap();
        let ids: std::collections::HashSet<_> = out.iter().map(|r| r.as_ref().unwrap().template.id.clone()).collect();
        assert_eq!(ids.len(), 3);
    }
}
