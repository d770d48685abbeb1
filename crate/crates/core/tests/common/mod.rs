#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use stance_harness::gateway::{BackendConfig, Gateway, LexiconEntry, MockBackend, MockRules};
use stance_harness::ingest::{SourceKind, SourceSpec};
use stance_harness::model::{QapStyle, Split, StanceLabel};
use stance_harness::prompt::StsqaConfig;
use stance_harness::qaps::QapLibrary;
use stance_harness::runner::{Method, RunConfig, Runner};

pub fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn mini_fixture() -> PathBuf {
    crate_dir().join("data/fixtures/semeval_mini.jsonl")
}

pub fn test_fixture(name: &str) -> PathBuf {
    crate_dir().join("tests/fixtures").join(name)
}

/// Lexicon under which the mock reproduces every gold label of the mini fixture.
pub fn fixture_rules() -> MockRules {
    let mut lexicon = BTreeMap::new();
    for (word, label, weight) in [
        ("proud", StanceLabel::Favor, 2),
        ("love", StanceLabel::Favor, 2),
        ("yes", StanceLabel::Favor, 1),
        ("wrong", StanceLabel::Against, 2),
        ("never", StanceLabel::Against, 2),
        ("shame", StanceLabel::Against, 2),
    ] {
        lexicon.insert(word.to_string(), LexiconEntry { label, weight });
    }
    MockRules {
        lexicon,
        ..MockRules::default()
    }
}

pub fn mock_config(rules: MockRules, root: &Path) -> RunConfig {
    RunConfig {
        source: SourceSpec::new(SourceKind::CanonicalJsonl, mini_fixture(), Split::Test),
        targets_filter: None,
        method: Method::Dqa,
        stsqa: None,
        backend: BackendConfig::mock(rules),
        subset: None,
        cache_dir: root.join("cache"),
        output_dir: root.join("out"),
        concurrency: 4,
        seed: 7,
        qap_library: None,
    }
}

pub fn stsqa(k: usize, style: QapStyle) -> Option<StsqaConfig> {
    Some(StsqaConfig {
        k,
        qap_ids: Vec::new(),
        style,
    })
}

/// A runner over the bundled library whose mock backend stays observable.
pub fn mock_runner(cfg: &RunConfig) -> (Runner, Arc<MockBackend>) {
    let backend = Arc::new(MockBackend::new(cfg.backend.mock.clone().unwrap_or_default()));
    let gateway = Gateway::new(cfg.backend.clone(), backend.clone(), &cfg.cache_dir).unwrap();
    (Runner::new(gateway, QapLibrary::bundled()), backend)
}

/// Every file under `dir` as `(relative path, bytes)`, sorted by path.
pub fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_path_buf();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}
