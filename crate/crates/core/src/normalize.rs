//! Maps free-text model replies onto stance labels.
//!
//! Rules, applied to the lowercased word tokens of the reply:
//!
//! 1. Synonym classes. Favor: `favor favour favorable support supports
//!    supportive positive`. Against: `against oppose opposes opposed
//!    negative`. Neutral: `neutral none neither`.
//! 2. A class token with `not` or `n't` among the two preceding tokens has
//!    its polarity flipped (favor <-> against; neutral unchanged).
//! 3. The first sentence (up to the first `.`, `!` or `?`) is searched
//!    first; the earliest class token wins. Only if it holds no class token
//!    is the full text searched the same way.
//! 4. A label outside the scheme is reported as [`Outcome::OutOfScheme`],
//!    never coerced.
//!
//! The synonym lists are frozen: changing them changes every metric, so any
//! edit must come with an update of `data/normalizer_corpus.jsonl`.

use serde::{Deserialize, Serialize};

use crate::model::{LabelScheme, StanceLabel};

const FAVOR_WORDS: &[&str] = &[
    "favor",
    "favour",
    "favorable",
    "support",
    "supports",
    "supportive",
    "positive",
];
const AGAINST_WORDS: &[&str] = &["against", "oppose", "opposes", "opposed", "negative"];
const NEUTRAL_WORDS: &[&str] = &["neutral", "none", "neither"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    FirstSentence,
    FullText,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "label")]
pub enum Outcome {
    Label(StanceLabel),
    /// Reserved: two classes at the same earliest offset. Distinct tokens
    /// cannot share an offset, so the current rules never produce it.
    Ambiguous,
    Unparseable,
    OutOfScheme(StanceLabel),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizerOutcome {
    pub result: Outcome,
    /// Byte range of the deciding token in the raw reply; set iff `result` is a label.
    pub matched_span: Option<(usize, usize)>,
    pub tier: Tier,
}

impl NormalizerOutcome {
    pub fn label(&self) -> Option<StanceLabel> {
        match self.result {
            Outcome::Label(l) => Some(l),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Token<'a> {
    pub start: usize,
    pub end: usize,
    pub text: &'a str,
    /// `t` split off a contraction such as `isn't`.
    negating_suffix: bool,
}

/// Splits `s` into maximal alphanumeric runs with their byte spans.
pub(crate) fn tokenize(s: &str) -> Vec<Token<'_>> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in s.char_indices().chain(std::iter::once((s.len(), ' '))) {
        match (c.is_alphanumeric(), start) {
            (true, None) => start = Some(i),
            (false, Some(b)) => {
                let text = &s[b..i];
                let before = &s[..b];
                let negating_suffix = text.eq_ignore_ascii_case("t")
                    && (before.ends_with("n'")
                        || before.ends_with("N'")
                        || before.ends_with("n\u{2019}")
                        || before.ends_with("N\u{2019}"));
                out.push(Token {
                    start: b,
                    end: i,
                    text,
                    negating_suffix,
                });
                start = None;
            }
            _ => {}
        }
    }
    out
}

fn class_of(word: &str) -> Option<StanceLabel> {
    if FAVOR_WORDS.contains(&word) {
        Some(StanceLabel::Favor)
    } else if AGAINST_WORDS.contains(&word) {
        Some(StanceLabel::Against)
    } else if NEUTRAL_WORDS.contains(&word) {
        Some(StanceLabel::Neutral)
    } else {
        None
    }
}

fn is_negator(tok: &Token<'_>, lower: &str) -> bool {
    lower == "not" || tok.negating_suffix
}

fn flip(label: StanceLabel) -> StanceLabel {
    match label {
        StanceLabel::Favor => StanceLabel::Against,
        StanceLabel::Against => StanceLabel::Favor,
        StanceLabel::Neutral => StanceLabel::Neutral,
    }
}

/// Earliest class token among `tokens[..limit]`, after negation.
fn first_class(tokens: &[Token<'_>], lowered: &[String], limit: usize) -> Option<(StanceLabel, usize)> {
    (0..limit).find_map(|i| {
        let class = class_of(&lowered[i])?;
        let negated = (i.saturating_sub(2)..i).any(|j| is_negator(&tokens[j], &lowered[j]));
        Some((if negated { flip(class) } else { class }, i))
    })
}

fn first_sentence_end(raw: &str) -> usize {
    raw.find(['.', '!', '?']).unwrap_or(raw.len())
}

pub fn normalize(raw: &str, scheme: LabelScheme) -> NormalizerOutcome {
    let tokens = tokenize(raw);
    let lowered: Vec<String> = tokens.iter().map(|t| t.text.to_lowercase()).collect();
    let boundary = first_sentence_end(raw);
    let first_len = tokens.iter().take_while(|t| t.end <= boundary).count();

    let found = first_class(&tokens, &lowered, first_len)
        .map(|hit| (hit, Tier::FirstSentence))
        .or_else(|| first_class(&tokens, &lowered, tokens.len()).map(|hit| (hit, Tier::FullText)));

    match found {
        None => NormalizerOutcome {
            result: Outcome::Unparseable,
            matched_span: None,
            tier: Tier::FullText,
        },
        Some(((label, idx), tier)) if scheme.contains(label) => NormalizerOutcome {
            result: Outcome::Label(label),
            matched_span: Some((tokens[idx].start, tokens[idx].end)),
            tier,
        },
        Some(((label, _), tier)) => NormalizerOutcome {
            result: Outcome::OutOfScheme(label),
            matched_span: None,
            tier,
        },
    }
}
