use std::fs;
use std::path::{Path, PathBuf};

use semfabric::corpus::{load_corpus, LoadError, MediaType};
use serde_json::Value;

fn fixture_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn manifest() -> Value {
    serde_json::from_str(&fs::read_to_string(fixture_root().join("corpus_manifest.json")).unwrap()).unwrap()
}

#[test]
fn fixture_counts_match_manifest() {
    let corpus = load_corpus(fixture_root().join("corpus")).unwrap();
    let m = manifest();
    assert_eq!(corpus.documents.len() as u64, m["num_documents"].as_u64().unwrap());
    assert_eq!(corpus.questions.len() as u64, m["num_questions"].as_u64().unwrap());
    assert_eq!(corpus.source_ids().len() as u64, m["num_sources"].as_u64().unwrap());
    for (doc_id, bytes) in m["document_bytes"].as_object().unwrap() {
        let doc = corpus.document(doc_id).unwrap();
        assert_eq!(doc.raw_bytes_len, bytes.as_u64().unwrap(), "{doc_id}");
        assert!(!doc.text.contains('\r'));
        assert!(!doc.text.is_empty());
    }
    for source in m["sources"].as_array().unwrap() {
        let id = source["source_id"].as_str().unwrap();
        let docs: Vec<String> = corpus.documents_of(id).into_iter().map(|d| d.doc_id).collect();
        let expected: Vec<String> = source["documents"]
            .as_array()
            .unwrap()
            .iter()
            .map(|d| d.as_str().unwrap().to_string())
            .collect();
        assert_eq!(docs, expected);
        assert_eq!(corpus.sources[id].license.as_deref(), source["license"].as_str());
    }
}

#[test]
fn ordering_and_references() {
    let corpus = load_corpus(fixture_root().join("corpus")).unwrap();
    assert!(corpus.documents.windows(2).all(|w| w[0].doc_id < w[1].doc_id));
    assert!(corpus.questions.windows(2).all(|w| w[0].qid < w[1].qid));
    for q in &corpus.questions {
        assert!(!q.answer_aliases.is_empty());
        assert!(q.source_rank.iter().all(|d| corpus.document(d).is_some()));
    }
    let media: Vec<MediaType> = corpus.documents.iter().map(|d| d.media_type).collect();
    assert!(media.contains(&MediaType::Html) && media.contains(&MediaType::Plain));
}

#[test]
fn loading_twice_is_identical() {
    let a = load_corpus(fixture_root().join("corpus")).unwrap();
    let b = load_corpus(fixture_root().join("corpus")).unwrap();
    assert_eq!(serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap());
}

fn write_corpus(dir: &Path, sources: &str, questions: &str) {
    fs::create_dir_all(dir.join("docs")).unwrap();
    fs::write(dir.join("docs/d1.txt"), "hello world").unwrap();
    fs::write(dir.join("sources.jsonl"), sources).unwrap();
    fs::write(dir.join("questions.jsonl"), questions).unwrap();
}

const ONE_SOURCE: &str = r#"{"doc_id":"d1","source_id":"s1","uri":"https://s1/d1","media_type":"plain","fetched_at":"2024-01-01T00:00:00Z","file":"docs/d1.txt"}
"#;

#[test]
fn minimal_corpus() {
    let dir = tempfile::tempdir().unwrap();
    write_corpus(
        dir.path(),
        ONE_SOURCE,
        "{\"qid\":\"q1\",\"question\":\"hi?\",\"answers\":[\"world\"],\"source_rank\":[\"d1\"]}\n",
    );
    let corpus = load_corpus(dir.path()).unwrap();
    assert_eq!(corpus.documents.len(), 1);
    assert_eq!(corpus.questions.len(), 1);
    assert_eq!(corpus.documents[0].raw_bytes_len, 11);
}

#[test]
fn empty_questions_is_fine() {
    let dir = tempfile::tempdir().unwrap();
    write_corpus(dir.path(), ONE_SOURCE, "");
    let corpus = load_corpus(dir.path()).unwrap();
    assert_eq!(corpus.documents.len(), 1);
    assert!(corpus.questions.is_empty());
}

#[test]
fn dangling_reference_names_qid_and_doc() {
    let dir = tempfile::tempdir().unwrap();
    write_corpus(
        dir.path(),
        ONE_SOURCE,
        "{\"qid\":\"q9\",\"question\":\"hi?\",\"answers\":[\"x\"],\"source_rank\":[\"nope\"]}\n",
    );
    match load_corpus(dir.path()) {
        Err(LoadError::DanglingReference { qid, doc_id }) => assert_eq!((qid.as_str(), doc_id.as_str()), ("q9", "nope")),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn malformed_line_is_numbered() {
    let dir = tempfile::tempdir().unwrap();
    write_corpus(dir.path(), &format!("{ONE_SOURCE}{{not json\n"), "");
    match load_corpus(dir.path()) {
        Err(LoadError::MalformedJson { line, .. }) => assert_eq!(line, 2),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn missing_file_is_named() {
    let dir = tempfile::tempdir().unwrap();
    write_corpus(dir.path(), ONE_SOURCE, "");
    fs::remove_file(dir.path().join("questions.jsonl")).unwrap();
    let err = load_corpus(dir.path()).unwrap_err();
    assert!(matches!(err, LoadError::MissingFile(_)), "{err:?}");
    assert!(err.to_string().contains("questions.jsonl"));
}
