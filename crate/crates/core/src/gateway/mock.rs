//! Deterministic offline provider.
//!
//! [`MockTransport`] speaks the same wire format as a real endpoint. Without a
//! script it answers from canned text keyed by a hash of the prompt and seed:
//!
//! * a classification prompt (one containing an `Utterance:` line) gets the
//!   display name chosen by the keyword classifier;
//! * a generation prompt naming an event as `'<display name>'` gets an
//!   utterance for that event from a fixed phrase bank;
//! * anything else gets `Mock response <hex>`.
//!
//! Scripted replies are consumed first, in order; rules match on the final
//! user message and take precedence over both.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use sha2::{Digest, Sha256};

use super::{ChatBody, HttpReply, Role, SecretString, Transport};
use crate::classify::classify_keyword;
use crate::event::GagneEvent;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MockReply {
    /// 200 with this assistant text.
    Text(String),
    /// Bare HTTP status with an error body.
    Status(u16),
    /// Transport-level failure (no HTTP status).
    Fail(String),
}

#[derive(Debug, Default)]
pub struct MockTransport {
    script: Mutex<VecDeque<MockReply>>,
    rules: Vec<(String, MockReply)>,
    calls: AtomicUsize,
    requests: Mutex<Vec<ChatBody>>,
    keys: Mutex<Vec<String>>,
}

impl MockTransport {
    pub fn canned() -> Self {
        MockTransport::default()
    }

    pub fn scripted(replies: impl IntoIterator<Item = MockReply>) -> Self {
        MockTransport { script: Mutex::new(replies.into_iter().collect()), ..Default::default() }
    }

    /// Reply with `reply` whenever the final user message contains `needle`.
    pub fn with_rule(mut self, needle: impl Into<String>, reply: MockReply) -> Self {
        self.rules.push((needle.into(), reply));
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn requests(&self) -> Vec<ChatBody> {
        self.requests.lock().expect("mock lock").clone()
    }

    pub fn keys_seen(&self) -> Vec<String> {
        self.keys.lock().expect("mock lock").clone()
    }

    fn next_reply(&self, body: &ChatBody) -> MockReply {
        let last_user = last_user(body);
        if let Some((_, reply)) = self.rules.iter().find(|(needle, _)| last_user.contains(needle.as_str())) {
            return reply.clone();
        }
        if let Some(reply) = self.script.lock().expect("mock lock").pop_front() {
            return reply;
        }
        MockReply::Text(canned_reply(body))
    }
}

impl Transport for MockTransport {
    fn post(&self, _url: &str, api_key: &SecretString, body: &ChatBody, _timeout: Duration) -> Result<HttpReply, String> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.requests.lock().expect("mock lock").push(body.clone());
        self.keys.lock().expect("mock lock").push(api_key.expose().to_string());
        match self.next_reply(body) {
            MockReply::Text(text) => Ok(HttpReply {
                status: 200,
                body: serde_json::json!({
                    "choices": [{"index": 0, "message": {"role": "assistant", "content": text}}]
                })
                .to_string(),
            }),
            MockReply::Status(status) => Ok(HttpReply {
                status,
                body: serde_json::json!({"error": {"message": format!("mock status {status}")}}).to_string(),
            }),
            MockReply::Fail(detail) => Err(detail),
        }
    }
}

fn last_user(body: &ChatBody) -> &str {
    body.messages
        .iter()
        .rev()
        .find(|m| m.role == Role::User)
        .map(|m| m.content.as_str())
        .unwrap_or("")
}

fn first_user(body: &ChatBody) -> &str {
    body.messages.iter().find(|m| m.role == Role::User).map(|m| m.content.as_str()).unwrap_or("")
}

/// Stable 64-bit key from text and seed.
pub fn mock_key(text: &str, seed: u64) -> u64 {
    let digest = Sha256::new().chain_update(text.as_bytes()).chain_update(seed.to_le_bytes()).finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// The canned answer for a request body.
pub fn canned_reply(body: &ChatBody) -> String {
    let seed = body.seed.unwrap_or(0);
    let last = last_user(body);
    if let Some(utterance) = last.lines().find_map(|l| l.trim().strip_prefix("Utterance:")) {
        return match classify_keyword(utterance.trim()) {
            Ok(label) => label.event.display_name().to_string(),
            Err(_) => GagneEvent::PresentContent.display_name().to_string(),
        };
    }
    // Key on the original prompt so corrective turns get the same answer.
    let prompt = first_user(body);
    let key = mock_key(prompt, seed);
    match target_event(prompt) {
        Some(event) => mock_utterance(event, &target_concept(prompt).unwrap_or_else(|| "this topic".into()), key),
        None => format!("Mock response {:016x}", mock_key(last, seed)),
    }
}

fn target_event(prompt: &str) -> Option<GagneEvent> {
    GagneEvent::ALL
        .into_iter()
        .filter_map(|e| prompt.find(&format!("'{}'", e.display_name())).map(|pos| (pos, e)))
        .min_by_key(|(pos, _)| *pos)
        .map(|(_, e)| e)
}

fn target_concept(prompt: &str) -> Option<String> {
    let start = prompt.find("when teaching ")? + "when teaching ".len();
    let rest = prompt[start..].lines().next()?;
    let concept = rest.trim().trim_end_matches('.').trim();
    (!concept.is_empty()).then(|| concept.to_string())
}

/// Utterance patterns per event; `{c}` is replaced by the concept.
///
/// Every pattern carries at least one cue of its own event and none of any
/// other event, so the keyword classifier labels them correctly.
pub fn utterance_bank(event: GagneEvent) -> &'static [&'static str] {
    match event {
        GagneEvent::GainAttention => &[
            "Let's begin with a quick challenge: can anyone guess where {c} shows up in this picture?",
            "Look at this puzzle on the board. Who can guess how {c} might help us crack it?",
            "Here is a challenge to start us off: guess the missing piece before we talk about {c}.",
            "Let's begin with a mystery. Look at this pattern and guess what it has to do with {c}.",
            "I have a challenge for the whole class, and it involves {c}. Any guesses?",
            "Look at this strange picture. What could it possibly have to do with {c}?",
        ],
        GagneEvent::InformObjectives => &[
            "Today, we'll learn how to use {c} to solve real problems, a skill you will need again and again.",
            "Our objective for this lesson is to understand {c} and explain it in our own words.",
            "By the end of class we will learn to apply {c} on our own. That is the objective.",
            "Today, we'll learn what {c} means and where it is useful.",
            "Here is our objective: work confidently with {c} before the bell rings.",
            "In this lesson we will learn the key ideas behind {c}.",
        ],
        GagneEvent::StimulateRecall => &[
            "Think back to last week when we met ideas related to {c}. What do you still know about them?",
            "Let's recall what we already know that connects to {c}.",
            "Think back: which earlier topic reminds you of {c}?",
            "Remember when we worked on a similar problem last week? It links directly to {c}.",
            "Can anyone recall a rule from our previous unit that might help with {c}?",
            "Think back to your notes from last week and recall one fact that relates to {c}.",
        ],
        GagneEvent::PresentContent => &[
            "We'll look at the formula for {c} and work through a demonstration together.",
            "Here is the definition of {c}, followed by two worked examples on the board.",
            "We'll look at how {c} is built, one part at a time, using diagrams.",
            "This formula summarizes {c}; let me show you where each part comes from.",
            "Let me write the definition of {c} on the board and explain each term.",
            "We'll look at three cases of {c} and compare them side by side.",
        ],
        GagneEvent::LearningGuidance => &[
            "I'll guide you through {c} step-by-step. Remember, every step must follow from the one before.",
            "Work through {c} step-by-step with me and write down each stage.",
            "I'll guide you with a hint: remember, the key to {c} is to organise what you know first.",
            "Remember, when you get stuck on {c}, go back to the previous step.",
            "I'll guide the first example of {c}; watch how each step connects to the next.",
            "Take {c} step-by-step: first identify what is given, then decide what to find.",
        ],
        GagneEvent::ElicitPerformance => &[
            "Now, let's try a problem on {c} together. Start with this first one.",
            "Let's try one on your own: use {c} to solve the problem on your worksheet.",
            "Now, let's see you apply {c}. Work with your partner on the next question.",
            "Start with this example of {c} and tell me what you get.",
            "Let's try it: everyone write one example of {c} in your notebook.",
            "Now, let's practise {c} with the three problems on the board.",
        ],
        GagneEvent::ProvideFeedback => &[
            "That's a good attempt. Make sure to check each step of your work on {c}.",
            "Well done! Your answer on {c} is correct, and your reasoning is clear.",
            "Good attempt, but make sure to double-check the signs when you work with {c}.",
            "Well done for trying. Make sure to label every part when you explain {c}.",
            "Make sure to write the units; otherwise your work on {c} is well done.",
            "That was a good attempt at {c}; you only missed one small detail.",
        ],
        GagneEvent::AssessPerformance => &[
            "I'll hand out a short quiz now on {c} so you can show your understanding.",
            "Time for a quick test: solve these {c} questions on your own.",
            "This quiz on {c} will count toward your grade, so read each question carefully.",
            "Please complete the exit ticket on {c} to show your understanding.",
            "We will have a test on {c} on Friday.",
            "Answer these five {c} questions on your own as a quiz.",
        ],
        GagneEvent::EnhanceRetention => &[
            "As homework, find three places where {c} appears in daily life. It will help solidify today's lesson.",
            "At home tonight, explain {c} to someone in your family.",
            "For homework, write a short problem that uses {c} and solve it.",
            "Try spotting {c} at home this week; it will solidify what we practised.",
            "Your homework is to connect {c} to a job or hobby you care about.",
            "To solidify {c}, review your notes at home before the next lesson.",
        ],
    }
}

pub fn mock_utterance(event: GagneEvent, concept: &str, key: u64) -> String {
    let bank = utterance_bank(event);
    bank[(key % bank.len() as u64) as usize].replace("{c}", concept)
}
