//! Domain vocabulary shared by every stage of the harness: labels, label
//! schemes, instances, exemplars (QAPs), predictions and datasets.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("unknown stance label {0:?}")]
    UnknownLabel(String),
}

/// Three-way stance polarity. Declaration order is the fixed scheme order
/// (favor, against, neutral) used for tie-breaking and table layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StanceLabel {
    Favor,
    Against,
    Neutral,
}

impl StanceLabel {
    pub const ALL: [StanceLabel; 3] = [StanceLabel::Favor, StanceLabel::Against, StanceLabel::Neutral];

    pub fn as_str(self) -> &'static str {
        match self {
            StanceLabel::Favor => "favor",
            StanceLabel::Against => "against",
            StanceLabel::Neutral => "neutral",
        }
    }

    /// Position in scheme order; used to index fixed-size count tables.
    pub fn index(self) -> usize {
        match self {
            StanceLabel::Favor => 0,
            StanceLabel::Against => 1,
            StanceLabel::Neutral => 2,
        }
    }
}

impl fmt::Display for StanceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Case-insensitive parse of the canonical names. `none` is accepted as an
/// alias for neutral because SemEval-2016 gold files spell it `NONE`.
pub fn parse_label(s: &str) -> Result<StanceLabel, ModelError> {
    match s.to_ascii_lowercase().as_str() {
        "favor" => Ok(StanceLabel::Favor),
        "against" => Ok(StanceLabel::Against),
        "neutral" | "none" => Ok(StanceLabel::Neutral),
        _ => Err(ModelError::UnknownLabel(s.to_string())),
    }
}

impl FromStr for StanceLabel {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_label(s)
    }
}

/// The label space a dataset is annotated in. P-Stance is two-class,
/// SemEval-2016 and VAST are three-class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelScheme {
    Two,
    Three,
}

impl LabelScheme {
    pub fn classes(self) -> &'static [StanceLabel] {
        match self {
            LabelScheme::Two => &StanceLabel::ALL[..2],
            LabelScheme::Three => &StanceLabel::ALL,
        }
    }

    pub fn contains(self, label: StanceLabel) -> bool {
        self.classes().contains(&label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "dev" | "val" | "valid" | "validation" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

/// One (text, target) pair with an optional gold label. Field order matches
/// the canonical JSONL record, so serde output is byte-stable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub text: String,
    pub target: String,
    pub gold: Option<StanceLabel>,
    pub dataset: String,
    pub split: Split,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QapStyle {
    WordLevel,
    SemanticLevel,
}

impl QapStyle {
    pub fn as_str(self) -> &'static str {
        match self {
            QapStyle::WordLevel => "word_level",
            QapStyle::SemanticLevel => "semantic_level",
        }
    }
}

impl fmt::Display for QapStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QapStyle {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "word_level" => Ok(QapStyle::WordLevel),
            "semantic_level" => Ok(QapStyle::SemanticLevel),
            other => Err(format!("unknown QAP style {other:?}")),
        }
    }
}

/// A worked question-answer exemplar used for few-shot StSQA prompting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Qap {
    pub id: String,
    pub question: String,
    pub answer_label: StanceLabel,
    pub explanation: String,
    pub style: QapStyle,
    pub target: String,
}

impl Qap {
    pub fn is_well_formed(&self) -> bool {
        !self.question.trim().is_empty() && !self.explanation.trim().is_empty()
    }
}

/// A model verdict for one instance. `label` is absent when the reply could
/// not be mapped into the run's scheme (abstention).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub instance_id: String,
    pub label: Option<StanceLabel>,
    pub raw_output: String,
    pub prompt_digest: String,
    pub backend_id: String,
    pub latency_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub fn is_hex_digest(s: &str) -> bool {
    s.len() == 64 && s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub scheme: LabelScheme,
    pub targets: Vec<String>,
    pub instances: Vec<Instance>,
}

impl Dataset {
    /// Builds a dataset whose target list is the sorted set of instance targets.
    pub fn new(name: impl Into<String>, scheme: LabelScheme, instances: Vec<Instance>) -> Self {
        let targets = instances
            .iter()
            .map(|i| i.target.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        Dataset {
            name: name.into(),
            scheme,
            targets,
            instances,
        }
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ViolationKind {
    EmptyText,
    EmptyTarget,
    GoldOutOfScheme(StanceLabel),
    UnknownTarget(String),
    DatasetMismatch(String),
    DuplicateId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub instance_id: String,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let id = &self.instance_id;
        match &self.kind {
            ViolationKind::EmptyText => write!(f, "{id}: text is empty"),
            ViolationKind::EmptyTarget => write!(f, "{id}: target is empty"),
            ViolationKind::GoldOutOfScheme(l) => write!(f, "{id}: gold label {l} is outside the scheme"),
            ViolationKind::UnknownTarget(t) => write!(f, "{id}: target {t:?} is not listed by the dataset"),
            ViolationKind::DatasetMismatch(d) => write!(f, "{id}: instance belongs to dataset {d:?}"),
            ViolationKind::DuplicateId => write!(f, "{id}: duplicate instance id"),
        }
    }
}

/// Checks every dataset and instance invariant; an empty result means valid.
/// A duplicated id is reported once, on its second occurrence.
pub fn validate_dataset(d: &Dataset) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    let targets: HashSet<&str> = d.targets.iter().map(String::as_str).collect();
    for inst in &d.instances {
        let mut push = |kind| {
            out.push(Violation {
                instance_id: inst.id.clone(),
                kind,
            })
        };
        if !seen.insert(inst.id.as_str()) {
            push(ViolationKind::DuplicateId);
        }
        if inst.text.trim().is_empty() {
            push(ViolationKind::EmptyText);
        }
        if inst.target.trim().is_empty() {
            push(ViolationKind::EmptyTarget);
        }
        if let Some(g) = inst.gold {
            if !d.scheme.contains(g) {
                push(ViolationKind::GoldOutOfScheme(g));
            }
        }
        if !targets.contains(inst.target.as_str()) {
            push(ViolationKind::UnknownTarget(inst.target.clone()));
        }
        if inst.dataset != d.name {
            push(ViolationKind::DatasetMismatch(inst.dataset.clone()));
        }
    }
    out
}
