//! Deterministic test double for a chat model.
//!
//! The mock reads only the final DQA question of the last user message, so
//! exemplar blocks in a StSQA prompt never change its verdict. The tweet is
//! tokenized, matching lexicon weights are summed per label, any bias
//! override for the question's target is added, and the reply names the
//! highest-scoring label (ties go to favor, then against, then neutral).

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use super::{Backend, BackendReply, GatewayError};
use crate::model::StanceLabel;
use crate::normalize::tokenize;
use crate::prompt::{parse_dqa_question, PromptSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub label: StanceLabel,
    pub weight: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockRules {
    /// Lowercase token to the label it votes for.
    #[serde(default)]
    pub lexicon: BTreeMap<String, LexiconEntry>,
    #[serde(default = "neutral")]
    pub default_label: StanceLabel,
    /// Per-target additive score, e.g. to emulate a model that leans favor on one topic.
    #[serde(default)]
    pub bias_overrides: BTreeMap<String, BTreeMap<StanceLabel, f64>>,
}

fn neutral() -> StanceLabel {
    StanceLabel::Neutral
}

impl Default for MockRules {
    fn default() -> Self {
        MockRules {
            lexicon: BTreeMap::new(),
            default_label: StanceLabel::Neutral,
            bias_overrides: BTreeMap::new(),
        }
    }
}

impl MockRules {
    pub fn validate(&self) -> Result<(), String> {
        for token in self.lexicon.keys() {
            if token.chars().any(|c| !c.is_alphanumeric() || c.is_uppercase()) {
                return Err(format!("lexicon token {token:?} must be a lowercase alphanumeric word"));
            }
        }
        for (target, weights) in &self.bias_overrides {
            if weights.values().any(|w| !w.is_finite()) {
                return Err(format!("bias override for {target:?} is not finite"));
            }
        }
        Ok(())
    }

    pub fn decide(&self, final_message: &str) -> StanceLabel {
        let (text, target) = match parse_dqa_question(final_message) {
            Some((text, target)) => (text, Some(target)),
            None => (final_message, None),
        };
        let mut scores = [0.0f64; 3];
        let mut fired = false;
        for tok in tokenize(text) {
            if let Some(entry) = self.lexicon.get(&tok.text.to_lowercase()) {
                scores[entry.label.index()] += entry.weight as f64;
                fired = true;
            }
        }
        if let Some(weights) = target.and_then(|t| self.bias_overrides.get(t)) {
            for (label, w) in weights {
                scores[label.index()] += w;
            }
            fired = true;
        }
        if !fired {
            return self.default_label;
        }
        let mut best = StanceLabel::Favor;
        for label in StanceLabel::ALL {
            if scores[label.index()] > scores[best.index()] {
                best = label;
            }
        }
        best
    }
}

pub fn mock_reply(label: StanceLabel) -> String {
    format!("The attitude is {label} because of the wording.")
}

#[derive(Debug)]
pub struct MockBackend {
    rules: MockRules,
    calls: AtomicU64,
}

impl MockBackend {
    pub fn new(rules: MockRules) -> Self {
        MockBackend {
            rules,
            calls: AtomicU64::new(0),
        }
    }

    /// How many times `complete` has been called.
    pub fn invocations(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Backend for MockBackend {
    fn complete(&self, prompt: &PromptSpec) -> Result<BackendReply, GatewayError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let message = prompt
            .final_user_message()
            .ok_or_else(|| GatewayError::MalformedResponse("user message in prompt".into()))?;
        Ok(BackendReply {
            text: mock_reply(self.rules.decide(message)),
            backend_id: "mock".into(),
            latency_ms: 0,
        })
    }
}
