mod common;

use std::collections::BTreeMap;
use std::fs;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use common::*;
use stance_harness::gateway::{Backend, BackendReply, Gateway, GatewayError};
use stance_harness::model::{QapStyle, StanceLabel};
use stance_harness::prompt::PromptSpec;
use stance_harness::qaps::QapLibrary;
use stance_harness::runner::{self, Method, RunError, RunManifest, RunStatus, Runner};
use tempfile::TempDir;

#[test]
fn mock_reproduces_fixture_gold() {
    let tmp = TempDir::new().unwrap();
    let cfg = mock_config(fixture_rules(), tmp.path());
    let (runner, backend) = mock_runner(&cfg);
    let out = runner.run_eval(&cfg).unwrap();
    assert_eq!(out.predictions.len(), 20);
    assert_eq!(out.report.overall.f_avg, 1.0);
    assert_eq!(out.report.overall.f_m, 1.0);
    assert_eq!(out.report.per_target.len(), 3);
    assert_eq!(backend.invocations(), 20);
    assert_eq!(out.manifest.status, RunStatus::Completed);
    for f in [
        "manifest.json",
        "predictions.jsonl",
        "report.json",
        "report.csv",
        "report.md",
    ] {
        assert!(out.dir.join(f).is_file(), "missing {f}");
    }
    let manifest = RunManifest::load(&out.dir.join("manifest.json")).unwrap();
    assert_eq!(manifest.config, cfg);
    assert_eq!(manifest.cache_misses, 20);
    let preds = runner::read_predictions(&out.dir.join("predictions.jsonl")).unwrap();
    assert_eq!(preds, out.predictions);
}

#[test]
fn hc_single_mislabel_scores() {
    let tmp = TempDir::new().unwrap();
    let rows = [
        ("hc:0", "So proud of her #SemST", "favor"),
        ("hc:1", "She will never quit and I am glad #SemST", "favor"),
        ("hc:2", "Her record is wrong on trade #SemST", "against"),
        ("hc:3", "Debate is at nine tonight #SemST", "neutral"),
    ];
    let path = tmp.path().join("hc.jsonl");
    let body: String = rows
        .iter()
        .map(|(id, text, gold)| {
            format!(
                "{}\n",
                serde_json::json!({"id": id, "text": text, "target": "Hillary Clinton", "gold": gold,
                    "dataset": "semeval2016", "split": "test"})
            )
        })
        .collect();
    fs::write(&path, body).unwrap();
    let mut cfg = mock_config(fixture_rules(), tmp.path());
    cfg.source.path = path;
    let (runner, _) = mock_runner(&cfg);
    let hc = runner.run_eval(&cfg).unwrap().report.per_target["Hillary Clinton"].clone();
    assert!((hc.f_avg - 2.0 / 3.0).abs() < 1e-12, "{}", hc.f_avg);
    assert!((hc.f_m - 7.0 / 9.0).abs() < 1e-12, "{}", hc.f_m);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let mut dirs = Vec::new();
    for (i, concurrency) in [1, 8, 4].into_iter().enumerate() {
        let root = tmp.path().join(format!("r{i}"));
        let mut cfg = mock_config(fixture_rules(), &root);
        cfg.method = Method::Stsqa;
        cfg.stsqa = stsqa(2, QapStyle::SemanticLevel);
        cfg.concurrency = concurrency;
        let (runner, _) = mock_runner(&cfg);
        dirs.push(runner.run_eval(&cfg).unwrap().dir);
    }
    let strip = |d: &std::path::Path| -> Vec<_> {
        snapshot(d)
            .into_iter()
            .filter(|(p, _)| p.as_os_str() != "manifest.json")
            .collect()
    };
    let first = strip(&dirs[0]);
    assert_eq!(first.len(), 4);
    for d in &dirs[1..] {
        assert_eq!(strip(d), first);
    }
}

#[test]
fn second_run_is_served_from_cache() {
    let tmp = TempDir::new().unwrap();
    let cfg = mock_config(fixture_rules(), tmp.path());
    let (runner, backend) = mock_runner(&cfg);
    let first = runner.run_eval(&cfg).unwrap();
    let second = runner.run_eval(&cfg).unwrap();
    assert_eq!(backend.invocations(), 20);
    assert_eq!(second.manifest.cache_hits, 20);
    assert_eq!(second.manifest.cache_misses, 0);
    assert_eq!(first.report, second.report);

    // A fresh runner on the same cache directory never reaches its backend.
    let (runner, backend) = mock_runner(&cfg);
    runner.run_eval(&cfg).unwrap();
    assert_eq!(backend.invocations(), 0);
}

#[test]
fn subset_and_filter_shape_the_run() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = mock_config(fixture_rules(), tmp.path());
    cfg.targets_filter = Some(vec!["Feminist Movement".into(), "Legalization of Abortion".into()]);
    cfg.subset = Some(stance_harness::ingest::SubsetSpec {
        n: 6,
        seed: 11,
        stratify_by: stance_harness::ingest::StratifyBy::Target,
    });
    let (runner, _) = mock_runner(&cfg);
    let out = runner.run_eval(&cfg).unwrap();
    assert_eq!(out.predictions.len(), 6);
    assert!(!out.report.per_target.contains_key("Hillary Clinton"));
    let ids: Vec<_> = out.predictions.iter().map(|p| p.instance_id.clone()).collect();
    let mut sorted = ids.clone();
    sorted.sort();
    assert_eq!(ids, sorted);
}

#[test]
fn sweep_over_one_to_five_exemplars() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = mock_config(fixture_rules(), tmp.path());
    cfg.targets_filter = Some(vec!["Legalization of Abortion".into()]);
    cfg.stsqa = stsqa(1, QapStyle::SemanticLevel);
    let (runner, backend) = mock_runner(&cfg);
    let sweep = runner.run_qap_sweep(&cfg, &[5, 3, 1, 2, 4, 3]).unwrap();
    let ks: Vec<usize> = sweep.rows.iter().map(|(k, _)| *k).collect();
    assert_eq!(ks, vec![1, 2, 3, 4, 5]);
    assert_eq!(backend.invocations(), 5 * 6);
    for (k, run) in ks.iter().zip(&sweep.runs) {
        assert!(run.dir.ends_with(format!("k{k}")));
        assert_eq!(run.report.overall.f_avg, 1.0);
    }
    let csv = fs::read_to_string(cfg.output_dir.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);
    assert!(csv.starts_with("k,f_avg,f_m\n1,1.000000,1.000000\n"));

    let again = runner.run_qap_sweep(&cfg, &[1, 2, 3, 4, 5]).unwrap();
    assert_eq!(backend.invocations(), 30);
    for run in &again.runs {
        assert_eq!(run.manifest.cache_hits, run.manifest.instance_count);
        assert_eq!(run.manifest.cache_misses, 0);
    }
}

#[test]
fn single_k_sweep_equals_plain_run() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = mock_config(fixture_rules(), tmp.path());
    cfg.method = Method::Stsqa;
    cfg.stsqa = stsqa(1, QapStyle::SemanticLevel);
    let (runner, _) = mock_runner(&cfg);
    let sweep = runner.run_qap_sweep(&cfg, &[1]).unwrap();
    let plain = runner.run_eval(&cfg).unwrap();
    assert_eq!(sweep.rows[0].1, plain.report);
    assert_eq!(sweep.runs[0].predictions, plain.predictions);
}

#[test]
fn sweep_beyond_library_is_rejected_before_running() {
    let tmp = TempDir::new().unwrap();
    let cfg = mock_config(fixture_rules(), tmp.path());
    let (runner, backend) = mock_runner(&cfg);
    let err = runner.run_qap_sweep(&cfg, &[1, 5]).unwrap_err();
    assert!(matches!(err, RunError::InsufficientQaps { needed: 5, .. }), "{err}");
    assert_eq!(err.exit_code(), 2);
    assert_eq!(backend.invocations(), 0);
    assert!(matches!(runner.run_qap_sweep(&cfg, &[0]), Err(RunError::Config(_))));
    assert!(matches!(runner.run_qap_sweep(&cfg, &[9]), Err(RunError::Config(_))));
}

#[test]
fn style_comparison_with_a_style_blind_mock() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = mock_config(fixture_rules(), tmp.path());
    cfg.stsqa = stsqa(2, QapStyle::WordLevel);
    let (runner, _) = mock_runner(&cfg);
    let cmp = runner.run_style_compare(&cfg).unwrap();
    assert_eq!(
        cmp.word_level.report.overall.f_avg,
        cmp.semantic_level.report.overall.f_avg
    );
    for (t, r) in &cmp.word_level.report.per_target {
        assert_eq!(r.f_avg, cmp.semantic_level.report.per_target[t].f_avg);
    }
    // The two arms send different prompts.
    assert_ne!(
        cmp.word_level.predictions[0].prompt_digest,
        cmp.semantic_level.predictions[0].prompt_digest
    );
    assert!(cmp.word_level.dir.ends_with("word_level"));
    let csv = fs::read_to_string(cfg.output_dir.join("style_compare.csv")).unwrap();
    assert!(csv.starts_with("target,n,word_f_avg,semantic_f_avg,word_f_m,semantic_f_m\n"));
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn style_comparison_needs_both_styles() {
    let tmp = TempDir::new().unwrap();
    let cfg = mock_config(fixture_rules(), tmp.path());
    let semantic_only: Vec<_> = QapLibrary::bundled()
        .entries()
        .iter()
        .filter(|q| q.style == QapStyle::SemanticLevel)
        .cloned()
        .collect();
    let backend = Arc::new(stance_harness::gateway::MockBackend::new(fixture_rules()));
    let gateway = Gateway::new(cfg.backend.clone(), backend.clone(), &cfg.cache_dir).unwrap();
    let runner = Runner::new(gateway, QapLibrary::from_entries(semantic_only));
    let err = runner.run_style_compare(&cfg).unwrap_err();
    assert!(matches!(err, RunError::MissingStyle(QapStyle::WordLevel)), "{err}");
    assert_eq!(backend.invocations(), 0);
}

#[test]
fn explicit_qap_ids_must_exist() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = mock_config(fixture_rules(), tmp.path());
    cfg.method = Method::Stsqa;
    cfg.stsqa = Some(stance_harness::prompt::StsqaConfig {
        k: 1,
        qap_ids: vec!["no-such-qap".into()],
        style: QapStyle::SemanticLevel,
    });
    let (runner, _) = mock_runner(&cfg);
    assert!(matches!(runner.run_eval(&cfg), Err(RunError::QapNotFound(id)) if id == "no-such-qap"));
}

#[test]
fn topic_bias_shows_in_the_report() {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("la.jsonl");
    let texts = [
        "Rally outside the statehouse #SemST",
        "Op-ed published this morning #SemST",
        "Poll numbers released #SemST",
        "The hearing starts at noon #SemST",
    ];
    let body: String = texts
        .iter()
        .enumerate()
        .map(|(i, t)| {
            format!(
                "{}\n",
                serde_json::json!({"id": format!("la:{i}"), "text": t, "target": "Legalization of Abortion",
                    "gold": "neutral", "dataset": "semeval2016", "split": "test"})
            )
        })
        .collect();
    fs::write(&path, body).unwrap();
    let mut rules = fixture_rules();
    rules.lexicon.insert(
        "hearing".into(),
        stance_harness::gateway::LexiconEntry {
            label: StanceLabel::Neutral,
            weight: 2,
        },
    );
    rules.bias_overrides.insert(
        "Legalization of Abortion".into(),
        BTreeMap::from([(StanceLabel::Favor, 1.0)]),
    );
    let mut cfg = mock_config(rules, tmp.path());
    cfg.source.path = path;
    let (runner, _) = mock_runner(&cfg);
    let out = runner.run_eval(&cfg).unwrap();
    let bias = out.report.per_target["Legalization of Abortion"].bias.clone().unwrap();
    assert!((bias.tv_distance - 0.75).abs() < 1e-12);
    let shift = bias.dominant_shift.unwrap();
    assert_eq!((shift.from, shift.to), (StanceLabel::Neutral, StanceLabel::Favor));
    assert!((shift.delta - 0.75).abs() < 1e-12);
    let csv = fs::read_to_string(out.dir.join("report.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().ends_with(",0.750000"));
}

/// Fails every `fail_every`-th call, starting with the first.
struct Flaky {
    calls: AtomicUsize,
    fail_every: usize,
}

impl Backend for Flaky {
    fn complete(&self, _prompt: &PromptSpec) -> Result<BackendReply, GatewayError> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        if n.is_multiple_of(self.fail_every) {
            return Err(GatewayError::Timeout);
        }
        Ok(BackendReply {
            text: "Neutral.".into(),
            backend_id: "flaky".into(),
            latency_ms: 1,
        })
    }
}

fn flaky_runner(cfg: &stance_harness::runner::RunConfig, fail_every: usize) -> Runner {
    let backend = Arc::new(Flaky {
        calls: AtomicUsize::new(0),
        fail_every,
    });
    Runner::new(
        Gateway::new(cfg.backend.clone(), backend, &cfg.cache_dir).unwrap(),
        QapLibrary::bundled(),
    )
}

#[test]
fn failures_within_budget_become_abstentions() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = mock_config(fixture_rules(), tmp.path());
    cfg.concurrency = 1;
    // Calls 0 and 10 fail: 2 of 20 is exactly the 10% budget.
    let out = flaky_runner(&cfg, 10).run_eval(&cfg).unwrap();
    assert_eq!(out.manifest.backend_failures, 2);
    let failed: Vec<_> = out.predictions.iter().filter(|p| p.error.is_some()).collect();
    assert_eq!(failed.len(), 2);
    assert!(failed.iter().all(|p| p.label.is_none()));
    assert_eq!(out.report.overall.n, 20);
    assert_eq!(out.report.overall.confusion.abstain.iter().sum::<u64>(), 2);
}

#[test]
fn failures_past_budget_abort_the_run() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = mock_config(fixture_rules(), tmp.path());
    cfg.concurrency = 1;
    let err = flaky_runner(&cfg, 3).run_eval(&cfg).unwrap_err();
    assert!(matches!(err, RunError::PartialRunAborted { .. }), "{err}");
    assert_eq!(err.exit_code(), 4);
    let manifest = RunManifest::load(&cfg.output_dir.join("manifest.json")).unwrap();
    assert_eq!(manifest.status, RunStatus::Aborted);
    assert!(!cfg.output_dir.join("report.json").exists());
}

#[test]
fn induce_qap_packages_the_reply() {
    let tmp = TempDir::new().unwrap();
    let cfg = mock_config(fixture_rules(), tmp.path());
    let (runner, _) = mock_runner(&cfg);
    let d = runner.prepare_dataset(&cfg).unwrap();
    let inst = &d.instances[0];
    let qap = runner.induce_qap(inst, QapStyle::SemanticLevel, "induced-1").unwrap();
    assert_eq!(qap.answer_label, inst.gold.unwrap());
    assert_eq!(qap.target, inst.target);
    assert!(qap.explanation.starts_with("The attitude is"));
    assert_eq!(
        qap.question,
        stance_harness::prompt::build_dqa(inst).final_user_message().unwrap()
    );
}
