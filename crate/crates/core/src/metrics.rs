//! Confusion matrices, per-class precision/recall/F1, F_avg, macro-F1 and
//! the stance-bias skew between gold and predicted label marginals.
//!
//! Conventions:
//! * every 0/0 evaluates to 0;
//! * an abstention (absent prediction) is a false negative for its gold
//!   class and a false positive for no class;
//! * F_avg is the mean of F1(favor) and F1(against), ignoring neutral, as
//!   in the SemEval-2016 Task 6 scorer.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{LabelScheme, StanceLabel};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("{golds} gold labels but {preds} predictions")]
    LengthMismatch { golds: usize, preds: usize },
    #[error("every prediction abstained")]
    AllAbstained,
}

/// `counts[gold][pred]` and `abstain[gold]`, indexed in scheme order
/// (favor, against, neutral).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 3]; 3],
    pub abstain: [u64; 3],
}

impl ConfusionMatrix {
    pub fn count(&self, gold: StanceLabel, pred: StanceLabel) -> u64 {
        self.counts[gold.index()][pred.index()]
    }

    pub fn abstained(&self, gold: StanceLabel) -> u64 {
        self.abstain[gold.index()]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum::<u64>() + self.abstain.iter().sum::<u64>()
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for g in 0..3 {
            for p in 0..3 {
                self.counts[g][p] += other.counts[g][p];
            }
            self.abstain[g] += other.abstain[g];
        }
    }
}

pub fn confusion(golds: &[StanceLabel], preds: &[Option<StanceLabel>]) -> Result<ConfusionMatrix, MetricsError> {
    if golds.len() != preds.len() {
        return Err(MetricsError::LengthMismatch {
            golds: golds.len(),
            preds: preds.len(),
        });
    }
    let mut cm = ConfusionMatrix::default();
    for (g, p) in golds.iter().zip(preds) {
        match p {
            Some(p) => cm.counts[g.index()][p.index()] += 1,
            None => cm.abstain[g.index()] += 1,
        }
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassPrf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn prf(cm: &ConfusionMatrix, class: StanceLabel) -> ClassPrf {
    let c = class.index();
    let tp = cm.counts[c][c];
    let predicted: u64 = (0..3).map(|g| cm.counts[g][c]).sum();
    let gold_total: u64 = cm.counts[c].iter().sum::<u64>() + cm.abstain[c];
    let precision = ratio(tp, predicted);
    let recall = ratio(tp, gold_total);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    ClassPrf { precision, recall, f1 }
}

pub fn f_avg(cm: &ConfusionMatrix) -> f64 {
    (prf(cm, StanceLabel::Favor).f1 + prf(cm, StanceLabel::Against).f1) / 2.0
}

pub fn f_macro(cm: &ConfusionMatrix, scheme: LabelScheme) -> f64 {
    let classes = scheme.classes();
    classes.iter().map(|&c| prf(cm, c).f1).sum::<f64>() / classes.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Shift {
    pub from: StanceLabel,
    pub to: StanceLabel,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasScore {
    pub gold_marginal: BTreeMap<StanceLabel, f64>,
    /// Over non-abstaining predictions only.
    pub pred_marginal: BTreeMap<StanceLabel, f64>,
    pub tv_distance: f64,
    /// Largest off-diagonal cell as a fraction of all scored instances;
    /// `None` when every prediction matched its gold label.
    pub dominant_shift: Option<Shift>,
}

/// Bias computed from an existing confusion matrix restricted to `scheme`.
pub fn bias_from_confusion(cm: &ConfusionMatrix, scheme: LabelScheme) -> Result<BiasScore, MetricsError> {
    let classes = scheme.classes();
    let n = cm.total();
    let answered: u64 = cm.counts.iter().flatten().sum();
    if answered == 0 {
        return Err(MetricsError::AllAbstained);
    }
    let gold_marginal: BTreeMap<_, _> = classes
        .iter()
        .map(|&g| {
            let row = cm.counts[g.index()].iter().sum::<u64>() + cm.abstain[g.index()];
            (g, ratio(row, n))
        })
        .collect();
    let pred_marginal: BTreeMap<_, _> = classes
        .iter()
        .map(|&p| {
            let col: u64 = (0..3).map(|g| cm.counts[g][p.index()]).sum();
            (p, ratio(col, answered))
        })
        .collect();
    let tv_distance = 0.5
        * classes
            .iter()
            .map(|c| (pred_marginal[c] - gold_marginal[c]).abs())
            .sum::<f64>();

    let mut dominant: Option<(StanceLabel, StanceLabel, u64)> = None;
    for &g in classes {
        for &p in classes {
            let count = cm.count(g, p);
            if g != p && count > 0 && dominant.is_none_or(|(_, _, best)| count > best) {
                dominant = Some((g, p, count));
            }
        }
    }
    Ok(BiasScore {
        gold_marginal,
        pred_marginal,
        tv_distance,
        dominant_shift: dominant.map(|(from, to, count)| Shift {
            from,
            to,
            delta: ratio(count, n),
        }),
    })
}

pub fn bias_skew(
    golds: &[StanceLabel],
    preds: &[Option<StanceLabel>],
    scheme: LabelScheme,
) -> Result<BiasScore, MetricsError> {
    bias_from_confusion(&confusion(golds, preds)?, scheme)
}
