//! End-to-end evaluation runs, the QAP-count sweep and the QAP-style
//! comparison.
//!
//! A run loads and optionally subsets the dataset, builds one prompt per
//! instance, sends the prompts through the cached gateway on a bounded
//! worker pool, normalizes the replies and scores them. Outputs go to the
//! run's `output_dir`:
//!
//! * `manifest.json`: config snapshot, timestamps, cache statistics;
//! * `predictions.jsonl`: one [`Prediction`] per instance, sorted by id;
//! * `report.json`, `report.csv`, `report.md`.
//!
//! Worker completion order never leaks into outputs: results are collected
//! by instance position and written in id order.

mod config;
pub mod report;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{Gateway, GatewayError};
use crate::ingest::{self, IngestError};
use crate::model::{Dataset, Instance, Prediction, Qap, QapStyle, StanceLabel};
use crate::normalize::normalize;
use crate::prompt::{self, PromptError, PromptSpec, StsqaConfig, PROMPT_TEMPLATE_VERSION};
use crate::qaps::{QapLibrary, QapLibraryError};

pub use config::{Method, RunConfig};
pub use report::{emit_report, EvalReport, ReportFormat, TargetReport};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    QapLibrary(#[from] QapLibraryError),
    #[error("QAP {0} not found in the library")]
    QapNotFound(String),
    #[error("target {target:?} has {available} QAPs, {needed} needed")]
    InsufficientQaps {
        target: String,
        needed: usize,
        available: usize,
    },
    #[error("no {0} QAP in the library for one of the run's targets")]
    MissingStyle(QapStyle),
    #[error("instance {0} not found")]
    UnknownInstance(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("run aborted after {completed} completed instances: {failures} backend failures exceed the 10% budget")]
    PartialRunAborted { completed: usize, failures: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl RunError {
    /// Process exit status: 1 usage/config, 2 data, 3 backend, 4 partial run.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::Gateway(GatewayError::InvalidConfig(_)) => 1,
            RunError::Ingest(_)
            | RunError::QapLibrary(_)
            | RunError::QapNotFound(_)
            | RunError::InsufficientQaps { .. }
            | RunError::MissingStyle(_)
            | RunError::UnknownInstance(_)
            | RunError::Prompt(_)
            | RunError::Io(_) => 2,
            RunError::Gateway(_) => 3,
            RunError::PartialRunAborted { .. } => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Completed,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: RunConfig,
    pub backend_id: String,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
    pub instance_count: usize,
    pub cache_hits: usize,
    pub cache_misses: usize,
    pub backend_failures: usize,
    pub prompt_template_version: String,
    pub status: RunStatus,
}

impl RunManifest {
    pub fn load(path: &Path) -> io::Result<Self> {
        serde_json::from_slice(&fs::read(path)?).map_err(io::Error::other)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: EvalReport,
    pub manifest: RunManifest,
    pub predictions: Vec<Prediction>,
    pub dir: PathBuf,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    /// `(k, report)` with strictly increasing k.
    pub rows: Vec<(usize, EvalReport)>,
    pub runs: Vec<RunOutput>,
}

impl SweepResult {
    /// `k,f_avg,f_m` on the pooled (overall) scores.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,f_avg,f_m\n");
        for (k, r) in &self.rows {
            s.push_str(&format!("{k},{:.6},{:.6}\n", r.overall.f_avg, r.overall.f_m));
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct StyleComparison {
    pub word_level: RunOutput,
    pub semantic_level: RunOutput,
}

impl StyleComparison {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "target",
            "n",
            "word_f_avg",
            "semantic_f_avg",
            "word_f_m",
            "semantic_f_m",
        ])
        .expect("in-memory write");
        let (word, sem) = (&self.word_level.report, &self.semantic_level.report);
        let rows = word
            .per_target
            .iter()
            .map(|(t, r)| (t.as_str(), r))
            .chain(std::iter::once(("ALL", &word.overall)));
        for (target, wr) in rows {
            let sr = if target == "ALL" {
                &sem.overall
            } else {
                &sem.per_target[target]
            };
            w.write_record([
                target.to_string(),
                wr.n.to_string(),
                format!("{:.6}", wr.f_avg),
                format!("{:.6}", sr.f_avg),
                format!("{:.6}", wr.f_m),
                format!("{:.6}", sr.f_m),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }
}

struct WorkItem<'a> {
    instance: &'a Instance,
    prompt: PromptSpec,
}

struct WorkResult {
    prediction: Prediction,
    cache_hit: Option<bool>,
}

/// Owns the gateway and QAP library shared by every run it performs.
pub struct Runner {
    gateway: Gateway,
    library: QapLibrary,
}

impl Runner {
    pub fn new(gateway: Gateway, library: QapLibrary) -> Self {
        Runner { gateway, library }
    }

    pub fn from_config(cfg: &RunConfig) -> Result<Self, RunError> {
        let library = match &cfg.qap_library {
            Some(path) => QapLibrary::load(path)?,
            None => QapLibrary::bundled(),
        };
        let gateway = Gateway::from_config(cfg.backend.clone(), &cfg.cache_dir)?;
        Ok(Runner::new(gateway, library))
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    pub fn library(&self) -> &QapLibrary {
        &self.library
    }

    /// Loads the source, applies the target filter and subset, and sorts by id.
    pub fn prepare_dataset(&self, cfg: &RunConfig) -> Result<Dataset, RunError> {
        let mut d = ingest::load(&cfg.source)?;
        if let Some(keep) = &cfg.targets_filter {
            let instances = d
                .instances
                .into_iter()
                .filter(|i| keep.iter().any(|t| t == &i.target))
                .collect();
            d = Dataset::new(d.name, d.scheme, instances);
        }
        if let Some(spec) = &cfg.subset {
            d = ingest::subset(&d, spec)?;
        }
        d.instances.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(d)
    }

    /// The exemplars used for instances of `target`: the configured ids, or
    /// else the first `k` library entries of the configured style.
    fn qaps_for(&self, stsqa: &StsqaConfig, target: &str) -> Result<Vec<&Qap>, RunError> {
        if !stsqa.qap_ids.is_empty() {
            return stsqa
                .qap_ids
                .iter()
                .map(|id| self.library.get(id).ok_or_else(|| RunError::QapNotFound(id.clone())))
                .collect();
        }
        let picked: Vec<&Qap> = self
            .library
            .for_target(target, Some(stsqa.style))
            .take(stsqa.k)
            .collect();
        if picked.len() < stsqa.k {
            if picked.is_empty() {
                return Err(RunError::MissingStyle(stsqa.style));
            }
            return Err(RunError::InsufficientQaps {
                target: target.to_string(),
                needed: stsqa.k,
                available: picked.len(),
            });
        }
        Ok(picked)
    }

    fn plan<'a>(&self, cfg: &RunConfig, dataset: &'a Dataset) -> Result<Vec<WorkItem<'a>>, RunError> {
        dataset
            .instances
            .iter()
            .map(|instance| {
                let prompt = match cfg.method {
                    Method::Dqa => prompt::build_dqa(instance),
                    Method::Stsqa => {
                        let stsqa = cfg.stsqa.as_ref().expect("validated config");
                        prompt::build_stsqa(instance, &self.qaps_for(stsqa, &instance.target)?)?
                    }
                };
                Ok(WorkItem { instance, prompt })
            })
            .collect()
    }

    fn execute(&self, item: &WorkItem<'_>, scheme: crate::model::LabelScheme) -> WorkResult {
        let prompt_digest = item.prompt.digest();
        match self.gateway.cached_complete(&item.prompt) {
            Ok(c) => WorkResult {
                prediction: Prediction {
                    instance_id: item.instance.id.clone(),
                    label: normalize(&c.text, scheme).label(),
                    raw_output: c.text,
                    prompt_digest,
                    backend_id: c.backend_id,
                    latency_ms: c.latency_ms,
                    error: None,
                },
                cache_hit: Some(c.hit),
            },
            Err(e) => {
                log::warn!("{}: {e}", item.instance.id);
                WorkResult {
                    prediction: Prediction {
                        instance_id: item.instance.id.clone(),
                        label: None,
                        raw_output: String::new(),
                        prompt_digest,
                        backend_id: String::new(),
                        latency_ms: 0,
                        error: Some(e.to_string()),
                    },
                    cache_hit: None,
                }
            }
        }
    }

    fn method_label(cfg: &RunConfig) -> String {
        match (cfg.method, &cfg.stsqa) {
            (Method::Stsqa, Some(s)) if s.qap_ids.is_empty() => format!("stsqa k={} {}", s.k, s.style),
            (Method::Stsqa, Some(s)) => format!("stsqa k={} [{}]", s.k, s.qap_ids.join(",")),
            _ => "dqa".to_string(),
        }
    }

    pub fn run_eval(&self, cfg: &RunConfig) -> Result<RunOutput, RunError> {
        cfg.validate()?;
        let started_at = Utc::now();
        let dataset = self.prepare_dataset(cfg)?;
        let items = self.plan(cfg, &dataset)?;
        let n = items.len();

        let next = AtomicUsize::new(0);
        let failures = AtomicUsize::new(0);
        let abort = AtomicBool::new(false);
        let mut slots: Vec<Option<WorkResult>> = (0..n).map(|_| None).collect();
        let workers = cfg.concurrency.min(n.max(1));
        std::thread::scope(|s| {
            let (tx, rx) = mpsc::channel::<(usize, WorkResult)>();
            for _ in 0..workers {
                let tx = tx.clone();
                let (next, failures, abort, items) = (&next, &failures, &abort, &items);
                s.spawn(move || loop {
                    if abort.load(Ordering::SeqCst) {
                        break;
                    }
                    let idx = next.fetch_add(1, Ordering::SeqCst);
                    if idx >= n {
                        break;
                    }
                    let result = self.execute(&items[idx], dataset.scheme);
                    if result.cache_hit.is_none() {
                        let failed = failures.fetch_add(1, Ordering::SeqCst) + 1;
                        if failed * 10 > n {
                            abort.store(true, Ordering::SeqCst);
                        }
                    }
                    if tx.send((idx, result)).is_err() {
                        break;
                    }
                });
            }
            drop(tx);
            for (idx, result) in rx {
                slots[idx] = Some(result);
            }
        });

        let completed = slots.iter().filter(|s| s.is_some()).count();
        let failed = failures.load(Ordering::SeqCst);
        let hits = slots.iter().flatten().filter(|r| r.cache_hit == Some(true)).count();
        let misses = slots.iter().flatten().filter(|r| r.cache_hit == Some(false)).count();
        let predictions: Vec<Prediction> = slots.into_iter().flatten().map(|r| r.prediction).collect();
        let backend_id = predictions
            .iter()
            .find(|p| !p.backend_id.is_empty())
            .map(|p| p.backend_id.clone())
            .unwrap_or_else(|| cfg.backend.model_name.clone());
        let aborted = failed * 10 > n;
        let manifest = RunManifest {
            config: cfg.clone(),
            backend_id,
            started_at,
            finished_at: Utc::now(),
            instance_count: n,
            cache_hits: hits,
            cache_misses: misses,
            backend_failures: failed,
            prompt_template_version: PROMPT_TEMPLATE_VERSION.to_string(),
            status: if aborted {
                RunStatus::Aborted
            } else {
                RunStatus::Completed
            },
        };

        let dir = cfg.output_dir.clone();
        fs::create_dir_all(&dir)?;
        write_json(&dir.join(MANIFEST_FILE), &manifest)?;
        if aborted {
            return Err(RunError::PartialRunAborted {
                completed,
                failures: failed,
            });
        }
        write_predictions(&dir.join(PREDICTIONS_FILE), &predictions)?;

        let scored: Vec<(String, StanceLabel, Option<StanceLabel>)> = dataset
            .instances
            .iter()
            .zip(&predictions)
            .filter_map(|(inst, pred)| inst.gold.map(|g| (inst.target.clone(), g, pred.label)))
            .collect();
        let report = EvalReport::build(
            &dataset.name,
            &Self::method_label(cfg),
            dataset.scheme,
            &scored,
            MANIFEST_FILE,
        );
        emit_report(&report, &dir, &ReportFormat::ALL)?;

        Ok(RunOutput {
            report,
            manifest,
            predictions,
            dir,
        })
    }

    /// One StSQA run per k, each using the first k library QAPs of the
    /// configured style for every target; results land in `<output_dir>/k<k>/`.
    pub fn run_qap_sweep(&self, cfg: &RunConfig, ks: &[usize]) -> Result<SweepResult, RunError> {
        let mut ks = ks.to_vec();
        ks.sort_unstable();
        ks.dedup();
        let Some(&max_k) = ks.last() else {
            return Err(RunError::Config("sweep needs at least one k".into()));
        };
        if ks[0] == 0 || max_k > prompt::MAX_QAPS {
            return Err(RunError::Config(format!(
                "sweep k values must be in 1..={}",
                prompt::MAX_QAPS
            )));
        }
        let style = cfg.stsqa.as_ref().map_or(QapStyle::SemanticLevel, |s| s.style);
        let dataset = self.prepare_dataset(cfg)?;
        for target in &dataset.targets {
            let available = self.library.for_target(target, Some(style)).count();
            if available < max_k {
                return Err(RunError::InsufficientQaps {
                    target: target.clone(),
                    needed: max_k,
                    available,
                });
            }
        }

        let mut rows = Vec::new();
        let mut runs = Vec::new();
        for k in ks {
            let mut run_cfg = cfg.clone();
            run_cfg.method = Method::Stsqa;
            run_cfg.stsqa = Some(StsqaConfig {
                k,
                qap_ids: Vec::new(),
                style,
            });
            run_cfg.output_dir = cfg.output_dir.join(format!("k{k}"));
            let out = self.run_eval(&run_cfg)?;
            rows.push((k, out.report.clone()));
            runs.push(out);
        }
        let result = SweepResult { rows, runs };
        fs::create_dir_all(&cfg.output_dir)?;
        fs::write(cfg.output_dir.join("sweep.csv"), result.to_csv())?;
        Ok(result)
    }

    /// Two StSQA runs that differ only in QAP style, written to
    /// `<output_dir>/word_level/` and `<output_dir>/semantic_level/`.
    pub fn run_style_compare(&self, cfg: &RunConfig) -> Result<StyleComparison, RunError> {
        let k = cfg.stsqa.as_ref().map_or(1, |s| s.k);
        let dataset = self.prepare_dataset(cfg)?;
        for style in [QapStyle::WordLevel, QapStyle::SemanticLevel] {
            if dataset
                .targets
                .iter()
                .any(|t| self.library.for_target(t, Some(style)).next().is_none())
            {
                return Err(RunError::MissingStyle(style));
            }
        }
        let run = |style: QapStyle| {
            let mut run_cfg = cfg.clone();
            run_cfg.method = Method::Stsqa;
            run_cfg.stsqa = Some(StsqaConfig {
                k,
                qap_ids: Vec::new(),
                style,
            });
            run_cfg.output_dir = cfg.output_dir.join(style.as_str());
            self.run_eval(&run_cfg)
        };
        let comparison = StyleComparison {
            word_level: run(QapStyle::WordLevel)?,
            semantic_level: run(QapStyle::SemanticLevel)?,
        };
        fs::create_dir_all(&cfg.output_dir)?;
        fs::write(cfg.output_dir.join("style_compare.csv"), comparison.to_csv())?;
        Ok(comparison)
    }

    /// Stage one of StSQA: asks the backend to justify the gold label of a
    /// labeled instance and packages the reply as a QAP.
    pub fn induce_qap(&self, instance: &Instance, style: QapStyle, id: &str) -> Result<Qap, RunError> {
        let prompt = prompt::build_thought_inducing(instance)?;
        let reply = self.gateway.cached_complete(&prompt)?;
        Ok(prompt::assemble_qap(instance, reply.text.trim(), style, id)?)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let mut body = serde_json::to_vec_pretty(value).map_err(io::Error::other)?;
    body.push(b'\n');
    fs::write(path, body)
}

fn write_predictions(path: &Path, predictions: &[Prediction]) -> io::Result<()> {
    let mut out = io::BufWriter::new(fs::File::create(path)?);
    for p in predictions {
        serde_json::to_writer(&mut out, p).map_err(io::Error::other)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_predictions(path: &Path) -> io::Result<Vec<Prediction>> {
    fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(io::Error::other))
        .collect()
}
