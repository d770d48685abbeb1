//! Loaders for the source dataset formats, the canonical JSONL writer, and
//! deterministic subsetting for desk-scale runs.
//!
//! Supported inputs:
//!
//! * `semeval2016`: tab-separated, header row, columns `ID`, `Target`,
//!   `Tweet`, `Stance` (`FAVOR`/`AGAINST`/`NONE`). Extra columns are ignored.
//! * `vast`: comma-separated with quoted fields; text from `post`, target
//!   from `topic_str` (falling back to `new_topic`, then `topic`), integer
//!   `label` mapped through [`vast_label`].
//! * `pstance`: comma-separated, columns `Tweet`, `Target`, `Stance`
//!   (`FAVOR`/`AGAINST`), two-class scheme.
//! * `canonical_jsonl`: one [`Instance`] per line.
//!
//! Instance ids are `<dataset>:<split>:<source id>` when the file carries an
//! id column and `<dataset>:<split>:<row index>` otherwise, with the row
//! index zero-padded to six digits so that lexicographic id order matches
//! file order.

mod subset;

use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    parse_label, validate_dataset, Dataset, Instance, LabelScheme, ModelError, Split, StanceLabel, Violation,
};

pub use subset::{subset, StratifyBy, SubsetSpec, XorShift64Star};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("dataset file not found: {0}")]
    FileMissing(PathBuf),
    #[error("line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("line {line}: {source}")]
    UnknownLabel {
        line: usize,
        #[source]
        source: ModelError,
    },
    #[error("dataset failed validation: {}", .0.first().map(|v| v.to_string()).unwrap_or_default())]
    Invalid(Vec<Violation>),
    #[error("not enough instances in stratum {stratum}: need {needed}, have {available}")]
    InsufficientInstances {
        stratum: String,
        needed: usize,
        available: usize,
    },
    #[error("duplicate instance id {0} while merging datasets")]
    DuplicateId(String),
    #[error("cannot merge datasets with different names or schemes")]
    IncompatibleMerge,
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Semeval2016,
    Vast,
    Pstance,
    CanonicalJsonl,
}

impl SourceKind {
    pub fn dataset_name(self) -> Option<&'static str> {
        match self {
            SourceKind::Semeval2016 => Some("semeval2016"),
            SourceKind::Vast => Some("vast"),
            SourceKind::Pstance => Some("pstance"),
            SourceKind::CanonicalJsonl => None,
        }
    }
}

impl std::str::FromStr for SourceKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "semeval2016" => Ok(SourceKind::Semeval2016),
            "vast" => Ok(SourceKind::Vast),
            "pstance" => Ok(SourceKind::Pstance),
            "canonical_jsonl" | "jsonl" => Ok(SourceKind::CanonicalJsonl),
            other => Err(format!("unknown source kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub kind: SourceKind,
    pub path: PathBuf,
    #[serde(default = "default_split")]
    pub split: Split,
    /// Overrides the label scheme inferred for canonical JSONL input.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<LabelScheme>,
}

fn default_split() -> Split {
    Split::Test
}

impl SourceSpec {
    pub fn new(kind: SourceKind, path: impl Into<PathBuf>, split: Split) -> Self {
        SourceSpec {
            kind,
            path: path.into(),
            split,
            scheme: None,
        }
    }
}

/// Upstream VAST convention: 0 = con, 1 = pro, 2 = neutral.
pub fn vast_label(code: &str) -> Option<StanceLabel> {
    match code.trim() {
        "0" => Some(StanceLabel::Against),
        "1" => Some(StanceLabel::Favor),
        "2" => Some(StanceLabel::Neutral),
        _ => None,
    }
}

/// Canonical JSONL carries no scheme field; datasets named `pstance*` are
/// two-class, everything else three-class.
pub fn scheme_for_name(name: &str) -> LabelScheme {
    if name.starts_with("pstance") {
        LabelScheme::Two
    } else {
        LabelScheme::Three
    }
}

pub fn load(spec: &SourceSpec) -> Result<Dataset, IngestError> {
    if !spec.path.is_file() {
        return Err(IngestError::FileMissing(spec.path.clone()));
    }
    let dataset = match spec.kind {
        SourceKind::Semeval2016 => load_semeval(spec)?,
        SourceKind::Vast => load_vast(spec)?,
        SourceKind::Pstance => load_pstance(spec)?,
        SourceKind::CanonicalJsonl => load_canonical(spec)?,
    };
    let violations = validate_dataset(&dataset);
    if violations.is_empty() {
        Ok(dataset)
    } else {
        Err(IngestError::Invalid(violations))
    }
}

/// Concatenates datasets of the same name and scheme (e.g. the train and
/// test files of one corpus). Ids must stay unique.
pub fn merge(parts: Vec<Dataset>) -> Result<Dataset, IngestError> {
    let mut iter = parts.into_iter();
    let Some(first) = iter.next() else {
        return Ok(Dataset::new("", LabelScheme::Three, Vec::new()));
    };
    let (name, scheme) = (first.name.clone(), first.scheme);
    let mut instances = first.instances;
    for part in iter {
        if part.name != name || part.scheme != scheme {
            return Err(IngestError::IncompatibleMerge);
        }
        instances.extend(part.instances);
    }
    let mut seen = std::collections::HashSet::new();
    for inst in &instances {
        if !seen.insert(inst.id.as_str()) {
            return Err(IngestError::DuplicateId(inst.id.clone()));
        }
    }
    Ok(Dataset::new(name, scheme, instances))
}

/// Writes one canonical JSON record per line (LF-terminated).
pub fn write_canonical(d: &Dataset, path: &Path) -> Result<(), IngestError> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    write_canonical_to(d, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn write_canonical_to(d: &Dataset, out: &mut impl Write) -> io::Result<()> {
    for inst in &d.instances {
        serde_json::to_writer(&mut *out, inst)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

fn read_utf8(path: &Path) -> Result<String, IngestError> {
    let bytes = fs::read(path)?;
    let text = String::from_utf8(bytes).map_err(|e| {
        let prefix = &e.as_bytes()[..e.utf8_error().valid_up_to()];
        let line = prefix.iter().filter(|&&b| b == b'\n').count() + 1;
        IngestError::MalformedRow {
            line,
            reason: "invalid UTF-8".into(),
        }
    })?;
    Ok(match text.strip_prefix('\u{feff}') {
        Some(rest) => rest.to_string(),
        None => text,
    })
}

fn row_id(dataset: &str, split: Split, row: usize) -> String {
    format!("{dataset}:{split}:{row:06}")
}

struct Columns {
    headers: Vec<String>,
}

impl Columns {
    fn find(&self, names: &[&str]) -> Option<usize> {
        names
            .iter()
            .find_map(|name| self.headers.iter().position(|h| h.trim().eq_ignore_ascii_case(name)))
    }

    fn require(&self, names: &[&str]) -> Result<usize, IngestError> {
        self.find(names).ok_or_else(|| IngestError::MalformedRow {
            line: 1,
            reason: format!("missing column {}", names[0]),
        })
    }
}

fn delimited_reader(text: &str, delimiter: u8, quoting: bool) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .quoting(quoting)
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes())
}

fn csv_error(e: csv::Error) -> IngestError {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    IngestError::MalformedRow {
        line,
        reason: e.to_string(),
    }
}

fn field<'a>(record: &'a csv::StringRecord, idx: usize, line: usize, name: &str) -> Result<&'a str, IngestError> {
    record.get(idx).ok_or_else(|| IngestError::MalformedRow {
        line,
        reason: format!("missing field {name}"),
    })
}

fn record_line(record: &csv::StringRecord, fallback: usize) -> usize {
    record.position().map(|p| p.line() as usize).unwrap_or(fallback)
}

fn load_semeval(spec: &SourceSpec) -> Result<Dataset, IngestError> {
    let name = "semeval2016";
    let text = read_utf8(&spec.path)?;
    let mut reader = delimited_reader(&text, b'\t', false);
    let cols = Columns {
        headers: reader
            .headers()
            .map_err(csv_error)?
            .iter()
            .map(str::to_string)
            .collect(),
    };
    let id_col = cols.find(&["ID"]);
    let target_col = cols.require(&["Target"])?;
    let tweet_col = cols.require(&["Tweet"])?;
    let stance_col = cols.require(&["Stance"])?;

    let mut instances = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(csv_error)?;
        let line = record_line(&record, row + 2);
        let stance = field(&record, stance_col, line, "Stance")?;
        let gold = parse_label(stance.trim()).map_err(|source| IngestError::UnknownLabel { line, source })?;
        let id = match id_col {
            Some(c) => format!("{name}:{}:{}", spec.split, field(&record, c, line, "ID")?.trim()),
            None => row_id(name, spec.split, row),
        };
        instances.push(Instance {
            id,
            text: field(&record, tweet_col, line, "Tweet")?.to_string(),
            target: field(&record, target_col, line, "Target")?.trim().to_string(),
            gold: Some(gold),
            dataset: name.to_string(),
            split: spec.split,
        });
    }
    Ok(Dataset::new(name, LabelScheme::Three, instances))
}

fn load_vast(spec: &SourceSpec) -> Result<Dataset, IngestError> {
    let name = "vast";
    let text = read_utf8(&spec.path)?;
    let mut reader = delimited_reader(&text, b',', true);
    let cols = Columns {
        headers: reader
            .headers()
            .map_err(csv_error)?
            .iter()
            .map(str::to_string)
            .collect(),
    };
    let post_col = cols.require(&["post"])?;
    let topic_col = cols.require(&["topic_str", "new_topic", "topic"])?;
    let label_col = cols.require(&["label"])?;

    let mut instances = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(csv_error)?;
        let line = record_line(&record, row + 2);
        let code = field(&record, label_col, line, "label")?;
        let gold = vast_label(code).ok_or_else(|| IngestError::UnknownLabel {
            line,
            source: ModelError::UnknownLabel(code.to_string()),
        })?;
        instances.push(Instance {
            id: row_id(name, spec.split, row),
            text: field(&record, post_col, line, "post")?.to_string(),
            target: field(&record, topic_col, line, "topic")?.trim().to_string(),
            gold: Some(gold),
            dataset: name.to_string(),
            split: spec.split,
        });
    }
    Ok(Dataset::new(name, LabelScheme::Three, instances))
}

fn load_pstance(spec: &SourceSpec) -> Result<Dataset, IngestError> {
    let name = "pstance";
    let text = read_utf8(&spec.path)?;
    let mut reader = delimited_reader(&text, b',', true);
    let cols = Columns {
        headers: reader
            .headers()
            .map_err(csv_error)?
            .iter()
            .map(str::to_string)
            .collect(),
    };
    let tweet_col = cols.require(&["Tweet"])?;
    let target_col = cols.require(&["Target"])?;
    let stance_col = cols.require(&["Stance"])?;

    let mut instances = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(csv_error)?;
        let line = record_line(&record, row + 2);
        let stance = field(&record, stance_col, line, "Stance")?.trim();
        let gold = match parse_label(stance) {
            Ok(l @ (StanceLabel::Favor | StanceLabel::Against)) => l,
            _ => {
                return Err(IngestError::UnknownLabel {
                    line,
                    source: ModelError::UnknownLabel(stance.to_string()),
                })
            }
        };
        instances.push(Instance {
            id: row_id(name, spec.split, row),
            text: field(&record, tweet_col, line, "Tweet")?.to_string(),
            target: field(&record, target_col, line, "Target")?.trim().to_string(),
            gold: Some(gold),
            dataset: name.to_string(),
            split: spec.split,
        });
    }
    Ok(Dataset::new(name, LabelScheme::Two, instances))
}

fn load_canonical(spec: &SourceSpec) -> Result<Dataset, IngestError> {
    let reader = BufReader::new(fs::File::open(&spec.path)?);
    let mut instances: Vec<Instance> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let inst: Instance = serde_json::from_str(&line).map_err(|e| {
            // Surface label problems as UnknownLabel rather than a generic parse failure.
            if let Some(bad) = unknown_gold(&line) {
                IngestError::UnknownLabel {
                    line: line_no,
                    source: ModelError::UnknownLabel(bad),
                }
            } else {
                IngestError::MalformedRow {
                    line: line_no,
                    reason: e.to_string(),
                }
            }
        })?;
        if let Some(first) = instances.first() {
            if first.dataset != inst.dataset {
                return Err(IngestError::MalformedRow {
                    line: line_no,
                    reason: format!(
                        "dataset {:?} differs from {:?} on the first line",
                        inst.dataset, first.dataset
                    ),
                });
            }
        }
        instances.push(inst);
    }
    let name = match instances.first() {
        Some(i) => i.dataset.clone(),
        None => spec
            .path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
    };
    let scheme = spec.scheme.unwrap_or_else(|| scheme_for_name(&name));
    Ok(Dataset::new(name, scheme, instances))
}

fn unknown_gold(line: &str) -> Option<String> {
    let value: serde_json::Value = serde_json::from_str(line).ok()?;
    let gold = value.get("gold")?.as_str()?;
    match serde_json::from_value::<StanceLabel>(serde_json::Value::String(gold.into())) {
        Ok(_) => None,
        Err(_) => Some(gold.to_string()),
    }
}
