mod common;

use std::fs;

use common::*;
use stance_harness::ingest::{self, IngestError, SourceKind, SourceSpec};
use stance_harness::model::{LabelScheme, Split, StanceLabel};
use tempfile::TempDir;

fn load(kind: SourceKind, name: &str) -> stance_harness::model::Dataset {
    ingest::load(&SourceSpec::new(kind, test_fixture(name), Split::Test)).unwrap()
}

/// Writes canonical JSONL and reads it back.
fn round_trip(d: &stance_harness::model::Dataset) -> stance_harness::model::Dataset {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join(format!("{}.jsonl", d.name));
    ingest::write_canonical(d, &path).unwrap();
    let mut spec = SourceSpec::new(SourceKind::CanonicalJsonl, &path, Split::Test);
    spec.scheme = Some(d.scheme);
    let back = ingest::load(&spec).unwrap();
    // Writing the reloaded set reproduces the file byte for byte.
    let again = tmp.path().join("again.jsonl");
    ingest::write_canonical(&back, &again).unwrap();
    assert_eq!(fs::read(&path).unwrap(), fs::read(&again).unwrap());
    back
}

#[test]
fn semeval_tsv() {
    let d = load(SourceKind::Semeval2016, "semeval_3.txt");
    assert_eq!(
        (d.name.as_str(), d.scheme, d.len()),
        ("semeval2016", LabelScheme::Three, 3)
    );
    assert_eq!(d.instances[0].id, "semeval2016:test:10001");
    assert!(d.instances[0].text.starts_with("RT @GunnJessica: Because"));
    assert_eq!(d.instances[0].target, "Hillary Clinton");
    let golds: Vec<_> = d.instances.iter().map(|i| i.gold.unwrap()).collect();
    assert_eq!(golds, [StanceLabel::Favor, StanceLabel::Against, StanceLabel::Neutral]);
    assert_eq!(
        d.targets,
        ["Feminist Movement", "Hillary Clinton", "Legalization of Abortion"]
    );
    assert_eq!(round_trip(&d), d);
}

#[test]
fn vast_csv() {
    let d = load(SourceKind::Vast, "vast_3.csv");
    assert_eq!((d.name.as_str(), d.scheme, d.len()), ("vast", LabelScheme::Three, 3));
    assert_eq!(d.instances[0].id, "vast:test:000000");
    assert_eq!(d.instances[0].target, "coding education");
    assert_eq!(
        d.instances[1].text,
        "Nuclear power is too risky; remember \"Fukushima\"."
    );
    let golds: Vec<_> = d.instances.iter().map(|i| i.gold.unwrap()).collect();
    assert_eq!(golds, [StanceLabel::Favor, StanceLabel::Against, StanceLabel::Neutral]);
    assert_eq!(round_trip(&d), d);
}

#[test]
fn pstance_csv() {
    let d = load(SourceKind::Pstance, "pstance_3.csv");
    assert_eq!((d.name.as_str(), d.scheme, d.len()), ("pstance", LabelScheme::Two, 3));
    assert_eq!(d.instances[1].text, "Not a fan of his tax plan, at all");
    assert_eq!(d.instances[1].gold, Some(StanceLabel::Against));
    assert_eq!(d.targets.len(), 3);
    assert_eq!(round_trip(&d), d);
}

#[test]
fn canonical_jsonl() {
    let d = load(SourceKind::CanonicalJsonl, "canonical_3.jsonl");
    assert_eq!(
        (d.name.as_str(), d.scheme, d.len()),
        ("semeval_mini", LabelScheme::Three, 3)
    );
    assert_eq!(round_trip(&d), d);
}

#[test]
fn bundled_mini_fixture_is_valid() {
    let d = ingest::load(&SourceSpec::new(
        SourceKind::CanonicalJsonl,
        mini_fixture(),
        Split::Test,
    ))
    .unwrap();
    assert_eq!(d.len(), 20);
    assert_eq!(d.targets.len(), 3);
    for label in StanceLabel::ALL {
        assert!(d.instances.iter().any(|i| i.gold == Some(label)));
    }
}

#[test]
fn pstance_rejects_neutral_rows() {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("p.csv");
    fs::write(
        &path,
        "Tweet,Target,Stance\nhello,Joe Biden,FAVOR\nmeh,Joe Biden,NONE\n",
    )
    .unwrap();
    let err = ingest::load(&SourceSpec::new(SourceKind::Pstance, &path, Split::Test)).unwrap_err();
    assert!(matches!(err, IngestError::UnknownLabel { line: 3, .. }), "{err}");
}

#[test]
fn missing_file_and_missing_column() {
    let tmp = TempDir::new().unwrap();
    let err = ingest::load(&SourceSpec::new(
        SourceKind::Vast,
        tmp.path().join("nope.csv"),
        Split::Test,
    ))
    .unwrap_err();
    assert!(matches!(err, IngestError::FileMissing(_)), "{err}");

    let path = tmp.path().join("v.csv");
    fs::write(&path, "post,label\nsome text,1\n").unwrap();
    let err = ingest::load(&SourceSpec::new(SourceKind::Vast, &path, Split::Test)).unwrap_err();
    assert!(matches!(err, IngestError::MalformedRow { .. }), "{err}");
}

#[test]
fn byte_order_mark_is_ignored() {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("s.txt");
    let mut body = vec![0xEF, 0xBB, 0xBF];
    body.extend_from_slice(&fs::read(test_fixture("semeval_3.txt")).unwrap());
    fs::write(&path, body).unwrap();
    let d = ingest::load(&SourceSpec::new(SourceKind::Semeval2016, &path, Split::Test)).unwrap();
    assert_eq!(d, load(SourceKind::Semeval2016, "semeval_3.txt"));
}
