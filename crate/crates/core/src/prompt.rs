//! Prompt construction for direct question-answering (DQA), the
//! thought-inducing stage that produces exemplar explanations, and the
//! StSQA stage that prepends QAP exemplars to the final question.
//!
//! All builders are pure functions of their inputs and never look at the
//! gold label of the instance being predicted.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{Instance, Qap, QapStyle};

/// Bumped whenever any template string below changes; recorded in run
/// manifests so cached replies can be traced to the prompt wording.
pub const PROMPT_TEMPLATE_VERSION: &str = "stance-prompts/v1";

/// Appended to the DQA question when asking the model to justify a gold
/// label so the reply can serve as a QAP explanation.
pub const EXPLANATION_DIRECTIVE: &str = "State the stance and explain the reason for your answer.";

pub const MAX_QAPS: usize = 8;

const DQA_PREFIX: &str = "What is the attitude of the sentence: \"";
const DQA_MIDDLE: &str = "\" to the target \"";
const DQA_SUFFIX: &str = "\" select from \"favor, against or neutral\".";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("instance {0} has no gold label")]
    MissingGold(String),
    #[error("QAP explanation is empty")]
    EmptyExplanation,
    #[error("StSQA prompt needs at least one QAP")]
    EmptyQapList,
    #[error("StSQA prompt accepts at most {MAX_QAPS} QAPs, got {0}")]
    TooManyQaps(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

/// Ordered chat messages; the last one is always a user turn.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PromptSpec {
    pub messages: Vec<Message>,
}

impl PromptSpec {
    pub fn user(content: impl Into<String>) -> Self {
        PromptSpec {
            messages: vec![Message {
                role: Role::User,
                content: content.into(),
            }],
        }
    }

    pub fn is_well_formed(&self) -> bool {
        self.messages.last().is_some_and(|m| m.role == Role::User)
    }

    pub fn final_user_message(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
    }

    /// SHA-256 of the compact JSON encoding of the messages.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(&self.messages).expect("messages serialize");
        hex::encode(Sha256::digest(&bytes))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StsqaConfig {
    pub k: usize,
    /// Explicit exemplar ids, in prompt order. When empty the runner takes
    /// the first `k` library entries of `style` for each instance's target.
    #[serde(default)]
    pub qap_ids: Vec<String>,
    #[serde(default = "default_style")]
    pub style: QapStyle,
}

fn default_style() -> QapStyle {
    QapStyle::SemanticLevel
}

impl StsqaConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.k == 0 || self.k > MAX_QAPS {
            return Err(format!("stsqa.k must be in 1..={MAX_QAPS}, got {}", self.k));
        }
        if !self.qap_ids.is_empty() {
            if self.qap_ids.len() != self.k {
                return Err(format!(
                    "stsqa.qap_ids lists {} ids but k = {}",
                    self.qap_ids.len(),
                    self.k
                ));
            }
            let mut ids = self.qap_ids.clone();
            ids.sort();
            ids.dedup();
            if ids.len() != self.qap_ids.len() {
                return Err("stsqa.qap_ids must be distinct".into());
            }
        }
        Ok(())
    }
}

fn dqa_question(text: &str, target: &str) -> String {
    let mut q =
        String::with_capacity(DQA_PREFIX.len() + text.len() + DQA_MIDDLE.len() + target.len() + DQA_SUFFIX.len());
    q.push_str(DQA_PREFIX);
    q.push_str(text);
    q.push_str(DQA_MIDDLE);
    q.push_str(target);
    q.push_str(DQA_SUFFIX);
    q
}

/// Recovers `(text, target)` from the last DQA question embedded in `s`.
pub fn parse_dqa_question(s: &str) -> Option<(&str, &str)> {
    let start = s.rfind(DQA_PREFIX)? + DQA_PREFIX.len();
    let rest = &s[start..];
    let end = rest.find(DQA_SUFFIX)?;
    rest[..end].rsplit_once(DQA_MIDDLE)
}

pub fn build_dqa(inst: &Instance) -> PromptSpec {
    PromptSpec::user(dqa_question(&inst.text, &inst.target))
}

pub fn build_thought_inducing(inst: &Instance) -> Result<PromptSpec, PromptError> {
    if inst.gold.is_none() {
        return Err(PromptError::MissingGold(inst.id.clone()));
    }
    Ok(PromptSpec::user(format!(
        "{} {EXPLANATION_DIRECTIVE}",
        dqa_question(&inst.text, &inst.target)
    )))
}

pub fn assemble_qap(
    inst: &Instance,
    explanation: &str,
    style: QapStyle,
    id: impl Into<String>,
) -> Result<Qap, PromptError> {
    let gold = inst.gold.ok_or_else(|| PromptError::MissingGold(inst.id.clone()))?;
    if explanation.trim().is_empty() {
        return Err(PromptError::EmptyExplanation);
    }
    Ok(Qap {
        id: id.into(),
        question: dqa_question(&inst.text, &inst.target),
        answer_label: gold,
        explanation: explanation.to_string(),
        style,
        target: inst.target.clone(),
    })
}

/// One user message: each exemplar as a `Question:`/`Answer:` block, then
/// the DQA question for `inst` with an open `Answer:`.
pub fn build_stsqa(inst: &Instance, qaps: &[&Qap]) -> Result<PromptSpec, PromptError> {
    if qaps.is_empty() {
        return Err(PromptError::EmptyQapList);
    }
    if qaps.len() > MAX_QAPS {
        return Err(PromptError::TooManyQaps(qaps.len()));
    }
    let mut content = String::new();
    for qap in qaps {
        content.push_str("Question: ");
        content.push_str(&qap.question);
        content.push_str("\nAnswer: ");
        content.push_str(qap.answer_label.as_str());
        content.push_str(". ");
        content.push_str(&qap.explanation);
        content.push_str("\n\n");
    }
    content.push_str("Question: ");
    content.push_str(&dqa_question(&inst.text, &inst.target));
    content.push_str("\nAnswer:");
    Ok(PromptSpec::user(content))
}
