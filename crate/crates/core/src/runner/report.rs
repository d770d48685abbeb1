use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::metrics::{bias_from_confusion, f_avg, f_macro, prf, BiasScore, ClassPrf, ConfusionMatrix};
use crate::model::{LabelScheme, StanceLabel};

pub const REPORT_STEM: &str = "report";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetReport {
    pub per_class: BTreeMap<StanceLabel, ClassPrf>,
    pub f_avg: f64,
    pub f_m: f64,
    pub n: u64,
    pub confusion: ConfusionMatrix,
    /// Absent when every prediction for the target abstained.
    pub bias: Option<BiasScore>,
}

impl TargetReport {
    pub fn from_confusion(confusion: ConfusionMatrix, scheme: LabelScheme) -> Self {
        TargetReport {
            per_class: scheme.classes().iter().map(|&c| (c, prf(&confusion, c))).collect(),
            f_avg: f_avg(&confusion),
            f_m: f_macro(&confusion, scheme),
            n: confusion.total(),
            confusion,
            bias: bias_from_confusion(&confusion, scheme).ok(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub method: String,
    pub scheme: LabelScheme,
    pub per_target: BTreeMap<String, TargetReport>,
    pub overall: TargetReport,
    /// File name of the run manifest, relative to the report's directory.
    pub manifest: String,
}

impl EvalReport {
    /// Scores `(target, gold, prediction)` triples; per-target matrices are
    /// pooled for the overall row.
    pub fn build(
        dataset: &str,
        method: &str,
        scheme: LabelScheme,
        scored: &[(String, StanceLabel, Option<StanceLabel>)],
        manifest: &str,
    ) -> Self {
        let mut matrices: BTreeMap<String, ConfusionMatrix> = BTreeMap::new();
        for (target, gold, pred) in scored {
            let cm = matrices.entry(target.clone()).or_default();
            match pred {
                Some(p) => cm.counts[gold.index()][p.index()] += 1,
                None => cm.abstain[gold.index()] += 1,
            }
        }
        let mut pooled = ConfusionMatrix::default();
        for cm in matrices.values() {
            pooled.merge(cm);
        }
        EvalReport {
            dataset: dataset.to_string(),
            method: method.to_string(),
            scheme,
            per_target: matrices
                .into_iter()
                .map(|(t, cm)| (t, TargetReport::from_confusion(cm, scheme)))
                .collect(),
            overall: TargetReport::from_confusion(pooled, scheme),
            manifest: manifest.to_string(),
        }
    }

    pub fn load_json(path: &Path) -> io::Result<Self> {
        let bytes = fs::read(path)?;
        serde_json::from_slice(&bytes).map_err(io::Error::other)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ReportFormat {
    Json,
    Csv,
    Markdown,
}

impl ReportFormat {
    pub const ALL: [ReportFormat; 3] = [ReportFormat::Json, ReportFormat::Csv, ReportFormat::Markdown];

    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Json => "json",
            ReportFormat::Csv => "csv",
            ReportFormat::Markdown => "md",
        }
    }
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(format!("unknown report format {other:?}")),
        }
    }
}

pub fn to_json(report: &EvalReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

fn num(x: f64) -> String {
    format!("{x:.6}")
}

/// One row per target: `target,n,f_favor,f_against,f_neutral,f_avg,f_m,tv_distance`.
/// `f_neutral` is blank under the two-class scheme, `tv_distance` when every
/// prediction abstained.
pub fn to_csv(report: &EvalReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "target",
        "n",
        "f_favor",
        "f_against",
        "f_neutral",
        "f_avg",
        "f_m",
        "tv_distance",
    ])
    .expect("in-memory write");
    for (target, t) in &report.per_target {
        let f1 = |l: StanceLabel| t.per_class.get(&l).map(|c| num(c.f1)).unwrap_or_default();
        w.write_record([
            target.clone(),
            t.n.to_string(),
            f1(StanceLabel::Favor),
            f1(StanceLabel::Against),
            f1(StanceLabel::Neutral),
            num(t.f_avg),
            num(t.f_m),
            t.bias.as_ref().map(|b| num(b.tv_distance)).unwrap_or_default(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

fn pct(x: f64) -> String {
    format!("{:.1}", x * 100.0)
}

fn md_cell(s: &str) -> String {
    s.replace('|', "\\|")
}

/// Targets as columns, F_avg and F_m (in percent) as rows.
pub fn to_markdown(report: &EvalReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "### {} ({})\n", md_cell(&report.dataset), md_cell(&report.method));
    s.push_str("| Metric |");
    for target in report.per_target.keys() {
        let _ = write!(s, " {} |", md_cell(target));
    }
    s.push_str("\n|---|");
    for _ in report.per_target.keys() {
        s.push_str("---:|");
    }
    s.push('\n');
    if report.per_target.is_empty() {
        return s;
    }
    for (name, get) in [
        ("F_avg", (|t: &TargetReport| t.f_avg) as fn(&TargetReport) -> f64),
        ("F_m", |t: &TargetReport| t.f_m),
    ] {
        let _ = write!(s, "| {name} |");
        for t in report.per_target.values() {
            let _ = write!(s, " {} |", pct(get(t)));
        }
        s.push('\n');
    }
    let _ = writeln!(
        s,
        "\nOverall: n = {}, F_avg = {}, F_m = {}",
        report.overall.n,
        pct(report.overall.f_avg),
        pct(report.overall.f_m)
    );
    s
}

/// Writes `report.<ext>` for each requested format into `dir`.
pub fn emit_report(report: &EvalReport, dir: &Path, formats: &[ReportFormat]) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut formats = formats.to_vec();
    formats.sort();
    formats.dedup();
    let mut written = Vec::new();
    for f in formats {
        let body = match f {
            ReportFormat::Json => to_json(report),
            ReportFormat::Csv => to_csv(report),
            ReportFormat::Markdown => to_markdown(report),
        };
        let path = dir.join(format!("{REPORT_STEM}.{}", f.extension()));
        fs::write(&path, body)?;
        written.push(path);
    }
    Ok(written)
}
