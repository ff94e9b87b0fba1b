//! Deterministic workloads for the retrieval benchmarks.

use semfabric::chunker::{chunk_id, Chunk};
use semfabric::corpus::MediaType;
use semfabric::digest::fnv1a64;
use semfabric::embed::EmbedderSpec;
use semfabric::store::{SourceDescriptor, VectorIndex};

const WORDS: &[&str] = &[
    "archive", "river", "founded", "society", "stew", "root", "apparatus", "harbor", "ledger", "lantern", "meadow",
    "quarry", "signal", "orbit", "garden", "tower", "copper", "willow", "engine", "chapel",
];

/// Pseudo-prose of exactly `len` chars with paragraph and line breaks.
pub fn synthetic_text(seed: u64, len: usize) -> String {
    let mut out = String::with_capacity(len + 16);
    let mut i = 0u64;
    while out.len() < len {
        let h = fnv1a64(&(seed ^ i.wrapping_mul(0x9e37_79b9_7f4a_7c15)).to_le_bytes());
        out.push_str(WORDS[(h % WORDS.len() as u64) as usize]);
        out.push(match h >> 60 {
            0 => '\n',
            1 if h & 1 == 0 => '\n',
            _ => ' ',
        });
        if h >> 56 == 0 {
            out.push('\n');
        }
        i += 1;
    }
    out.truncate(len);
    out
}

/// An index of `n` chunks of roughly 300 chars each.
pub fn synthetic_index(n: usize) -> VectorIndex {
    let chunks = (0..n)
        .map(|i| {
            let text = synthetic_text(i as u64, 300);
            let doc_id = format!("d{:05}", i / 10);
            Chunk {
                chunk_id: chunk_id(&doc_id, i * 300, i * 300 + 300),
                doc_id,
                source_id: "bench".into(),
                uri: format!("https://bench.invalid/{i}"),
                media_type: MediaType::Plain,
                start: i * 300,
                end: i * 300 + 300,
                digest: semfabric::digest::fnv1a64_hex(text.as_bytes()),
                text,
                fetched_at: Default::default(),
            }
        })
        .collect();
    let mut index = VectorIndex::new(EmbedderSpec::default()).with_source(SourceDescriptor {
        source_id: "bench".into(),
        title: "bench".into(),
        license: "cc0-1.0".into(),
        topics: Vec::new(),
    });
    index.upsert(chunks).expect("synthetic chunks embed");
    index
}
