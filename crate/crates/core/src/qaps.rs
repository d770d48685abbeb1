//! QAP library: a JSONL file of curated exemplars, one [`Qap`] per line.
//!
//! A library ships with the crate (`data/qaps/semeval2016.jsonl`) holding
//! word-level and semantic-level exemplars for every SemEval-2016 target.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::model::{Qap, QapStyle};

pub const BUNDLED_LIBRARY: &str = include_str!("../data/qaps/semeval2016.jsonl");

#[derive(Debug, Error)]
pub enum QapLibraryError {
    #[error("QAP library line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("duplicate QAP id {0}")]
    DuplicateId(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct QapLibrary {
    entries: Vec<Qap>,
}

impl QapLibrary {
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_LIBRARY).expect("bundled QAP library is well formed")
    }

    pub fn load(path: &Path) -> Result<Self, QapLibraryError> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Self, QapLibraryError> {
        let mut entries = Vec::new();
        let mut ids = HashSet::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let qap: Qap = serde_json::from_str(line).map_err(|e| QapLibraryError::Malformed {
                line: idx + 1,
                reason: e.to_string(),
            })?;
            if !qap.is_well_formed() {
                return Err(QapLibraryError::Malformed {
                    line: idx + 1,
                    reason: "question and explanation must be non-empty".into(),
                });
            }
            if !ids.insert(qap.id.clone()) {
                return Err(QapLibraryError::DuplicateId(qap.id));
            }
            entries.push(qap);
        }
        Ok(QapLibrary { entries })
    }

    pub fn from_entries(entries: Vec<Qap>) -> Self {
        QapLibrary { entries }
    }

    pub fn entries(&self) -> &[Qap] {
        &self.entries
    }

    pub fn get(&self, id: &str) -> Option<&Qap> {
        self.entries.iter().find(|q| q.id == id)
    }

    /// Entries for `target`, in library order, optionally restricted to one style.
    pub fn for_target<'a>(&'a self, target: &str, style: Option<QapStyle>) -> impl Iterator<Item = &'a Qap> + 'a {
        let target = target.to_owned();
        self.entries
            .iter()
            .filter(move |q| q.target == target && style.is_none_or(|s| q.style == s))
    }
}
