//! End-to-end library pipeline: parse -> preprocess -> mine -> recommend ->
//! evaluate, plus the re-entrancy invariant of the preprocessing stage.

use std::io::Cursor;

use navrec::config::{Config, LswSpec};
use navrec::evaluator::{replay_evaluate, PartSelect};
use navrec::knowledge_base::KnowledgeBase;
use navrec::log_ingest::{parse_log_file, LogRecord};
use navrec::page_registry::PageRegistry;
use navrec::preprocess::{
    flatten_sessions, preprocess_pipeline, sessions_from_tsv, sessions_to_tsv, Session,
};
use navrec::recommender::{capture_lsw, recommend};
use navrec::synth::noise_corpus_log;

fn sessions_to_records(sessions: &[Session]) -> Vec<LogRecord> {
    sessions.iter().flat_map(|s| s.records.iter().map(|r| r.to_log_record())).collect()
}

#[test]
fn full_pipeline_on_the_synthetic_corpus() {
    let cfg = Config::default();
    let (records, report) = parse_log_file(Cursor::new(noise_corpus_log())).unwrap();
    assert!(report.is_consistent());

    let (sessions, stats) = preprocess_pipeline(records, &cfg);
    assert_eq!(stats.records_out, 550);
    assert_eq!(stats.users, 13); // 12 regular walkers plus the boundary user

    let mut registry = PageRegistry::new();
    let rows = flatten_sessions(&sessions, &mut registry).unwrap();
    let tsv = sessions_to_tsv(&rows);
    let rows_back = sessions_from_tsv(&tsv).unwrap();
    assert_eq!(rows_back, rows);

    let kb = KnowledgeBase::from_rows(&rows_back, &cfg).unwrap();
    assert!(!kb.clusters.is_empty());

    // Regular users repeat their six-page chain enough for patterns to
    // survive pruning; ask for a recommendation for user 1.
    let user = 1u32;
    assert!(!kb.patterns_for(user).is_empty());
    let original: Vec<_> = {
        let mut seen = std::collections::BTreeSet::new();
        rows.iter()
            .filter(|r| r.user_id == user)
            .filter(|r| seen.insert(r.page_id))
            .map(|r| r.page_id)
            .collect()
    };
    let lsw = capture_lsw(user, &original, LswSpec::Count(2), &kb).unwrap();
    let list = recommend(&lsw, &kb, &cfg);
    assert!(!list.is_empty());

    let report = replay_evaluate(&kb, &rows, LswSpec::Count(2), PartSelect::Combined, &cfg);
    assert!(report.evaluated > 0);
    assert!(report.mean_accuracy.is_some());
}

#[test]
fn preprocessing_its_own_output_is_a_fixed_point() {
    let cfg = Config::default();
    let (records, _) = parse_log_file(Cursor::new(noise_corpus_log())).unwrap();
    let (sessions, _) = preprocess_pipeline(records, &cfg);
    let mut first_registry = PageRegistry::new();
    let first_rows = flatten_sessions(&sessions, &mut first_registry).unwrap();

    let replayed = sessions_to_records(&sessions);
    let (sessions_again, stats) = preprocess_pipeline(replayed, &cfg);
    assert_eq!(stats.records_out, stats.records_in); // already clean

    let mut second_registry = PageRegistry::new();
    let second_rows = flatten_sessions(&sessions_again, &mut second_registry).unwrap();
    assert_eq!(second_rows, first_rows);
    assert_eq!(second_registry, first_registry);
    assert_eq!(sessions_to_tsv(&second_rows), sessions_to_tsv(&first_rows));
}

#[test]
fn knowledge_base_bytes_are_reproducible() {
    let cfg = Config::default();
    let (records, _) = parse_log_file(Cursor::new(noise_corpus_log())).unwrap();
    let (sessions, _) = preprocess_pipeline(records, &cfg);
    let mut registry = PageRegistry::new();
    let rows = flatten_sessions(&sessions, &mut registry).unwrap();

    let a = KnowledgeBase::from_rows(&rows, &cfg).unwrap().to_bytes().unwrap();
    let b = KnowledgeBase::from_rows(&rows, &cfg).unwrap().to_bytes().unwrap();
    assert_eq!(a, b);

    // Rebuilding from the serialized TSV yields the same bytes again.
    let rows_back = sessions_from_tsv(&sessions_to_tsv(&rows)).unwrap();
    let c = KnowledgeBase::from_rows(&rows_back, &cfg).unwrap().to_bytes().unwrap();
    assert_eq!(a, c);
}
