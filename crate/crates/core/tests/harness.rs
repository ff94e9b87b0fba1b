//! Experiment harness over the fixture corpus with an in-process fabric.

use std::path::PathBuf;
use std::sync::OnceLock;

use semfabric::agent::process_query;
use semfabric::corpus::{load_corpus, Corpus};
use semfabric::harness::{report, run_experiment, ExperimentConfig, ExperimentRow, Fabric, Mode};
use semfabric::{EmbedderSpec, SplitParams};

fn corpus() -> &'static Corpus {
    static C: OnceLock<Corpus> = OnceLock::new();
    C.get_or_init(|| load_corpus(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/corpus")).unwrap())
}

fn fabric() -> &'static Fabric {
    static F: OnceLock<Fabric> = OnceLock::new();
    F.get_or_init(|| Fabric::from_corpus(corpus(), &SplitParams::default(), &EmbedderSpec::default()).unwrap())
}

fn config(mode: Mode, s: &[usize], k: &[usize]) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(mode);
    cfg.s = s.to_vec();
    cfg.k = k.to_vec();
    cfg.central = Some(fabric().central_url());
    cfg.resolver = Some(fabric().resolver_url());
    cfg
}

fn run(cfg: &ExperimentConfig) -> Vec<ExperimentRow> {
    run_experiment(cfg, corpus(), &fabric().agent()).unwrap()
}

#[test]
fn empty_corpus_gives_no_rows() {
    let empty = Corpus {
        questions: vec![],
        ..corpus().clone()
    };
    let rows = run_experiment(&config(Mode::Centralized, &[], &[5]), &empty, &fabric().agent()).unwrap();
    assert!(rows.is_empty());
    assert!(report(&rows).is_err());
}

#[test]
fn centralized_k_zero_is_never_sufficient() {
    let rows = run(&config(Mode::Centralized, &[], &[0]));
    assert_eq!(rows.len(), corpus().questions.len());
    assert!(rows.iter().all(|r| !r.sufficient && r.chunks_retrieved == 0 && r.bytes_transferred == 0));
}

#[test]
fn chunks_retrieved_matches_deduplicated_context() {
    let agent = fabric().agent();
    for r in run(&config(Mode::Decentralized, &[3], &[5])) {
        let item = corpus().questions.iter().find(|q| q.qid == r.qid).unwrap();
        let pq = process_query(&item.question).unwrap();
        let got = agent.retrieve_decentralized(&pq, 3, 5, &fabric().resolver_url()).unwrap();
        assert_eq!(r.chunks_retrieved, got.context_chunks.len(), "{}", r.qid);
    }
}

#[test]
fn fraction_bounded_when_chunks_come_from_baseline_docs() {
    let agent = fabric().agent();
    let mut checked = 0;
    for r in run(&config(Mode::Centralized, &[], &[1, 5])) {
        let item = corpus().questions.iter().find(|q| q.qid == r.qid).unwrap();
        let pq = process_query(&item.question).unwrap();
        let got = agent.retrieve_centralized(&pq, r.k.unwrap(), &fabric().central_url()).unwrap();
        let baseline = semfabric::agent::retrieve_full_context(item, 250_000, corpus());
        let in_baseline = got
            .context_chunks
            .iter()
            .all(|c| baseline.context_chunks.iter().any(|b| b.chunk.doc_id == c.chunk.doc_id));
        let f = r.transfer_fraction.unwrap();
        assert!(f >= 0.0);
        if in_baseline {
            assert!(f <= 1.0, "{} k={:?}: {f}", r.qid, r.k);
            checked += 1;
        }
    }
    assert!(checked > 0);
}

#[test]
fn full_context_rows_have_fraction_one() {
    let rows = run(&config(Mode::FullContext, &[], &[]));
    assert!(rows.iter().all(|r| r.transfer_fraction == Some(1.0)));
    let cell = &report(&rows).unwrap().transfer[0];
    assert_eq!(cell.median, Some(1.0));
}

#[test]
fn rows_are_in_canonical_order() {
    let mut cfg = config(Mode::Decentralized, &[2, 1], &[5, 1]);
    cfg.parallelism = 16;
    let rows = run(&cfg);
    let keys: Vec<_> = rows.iter().map(|r| (r.qid.clone(), r.s, r.k)).collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
    cfg.parallelism = 1;
    assert_eq!(run(&cfg), rows);
}

/// Report tables of a small fixture grid, frozen. Regenerate with
/// `UPDATE_GOLDEN=1` after an intentional change.
#[test]
fn fixture_report_golden() {
    let mut rows = run(&config(Mode::Centralized, &[], &[1, 5, 20, 60, 120]));
    rows.extend(run(&config(Mode::Decentralized, &[1, 3, 6], &[5, 10])));
    let r = report(&rows).unwrap();
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/report");
    for (name, body) in [
        ("sufficiency.csv", r.sufficiency_csv().unwrap()),
        ("transfer.csv", r.transfer_csv().unwrap()),
        ("query_processing.csv", r.query_processing_csv().unwrap()),
    ] {
        let path = dir.join(name);
        if std::env::var_os("UPDATE_GOLDEN").is_some() {
            std::fs::create_dir_all(&dir).unwrap();
            std::fs::write(&path, &body).unwrap();
        }
        assert_eq!(body, std::fs::read_to_string(&path).unwrap(), "{name}");
    }
}
