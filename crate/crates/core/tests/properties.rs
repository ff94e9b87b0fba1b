use proptest::prelude::*;
use semfabric::agent::{merge, process_query};
use semfabric::chunker::{chunk_id, split_recursive, Chunk, SplitParams};
use semfabric::corpus::{normalize_document, MediaType};
use semfabric::embed::{embed, EmbedderSpec};
use semfabric::store::{ScoredChunk, VectorIndex};

fn text_strategy(max: usize) -> impl Strategy<Value = String> {
    prop::collection::vec(
        prop_oneof![
            4 => "[a-z]{1,12}",
            2 => Just(" ".to_string()),
            1 => Just("\n".to_string()),
            1 => Just("\n\n".to_string()),
            1 => "[éü✓]{1,3}",
            1 => "x{50,400}",
        ],
        0..max,
    )
    .prop_map(|parts| parts.concat())
}

fn chunk(doc: &str, start: usize, text: &str) -> Chunk {
    let end = start + text.chars().count();
    Chunk {
        chunk_id: chunk_id(doc, start, end),
        doc_id: doc.into(),
        source_id: "s".into(),
        uri: format!("https://s/{doc}"),
        media_type: MediaType::Plain,
        start,
        end,
        text: text.into(),
        digest: semfabric::digest::fnv1a64_hex(text.as_bytes()),
        fetched_at: Default::default(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn spans_tile_under_any_params(
        text in text_strategy(300),
        chunk_size in 2usize..400,
        overlap_frac in 0.0f64..1.0,
    ) {
        let overlap = ((chunk_size - 1) as f64 * overlap_frac) as usize;
        let params = SplitParams::new(chunk_size, overlap).unwrap();
        let spans = split_recursive(&text, &params).unwrap();
        let len = text.chars().count();
        if len == 0 {
            prop_assert!(spans.is_empty());
        } else {
            prop_assert_eq!(spans[0].start, 0);
            prop_assert_eq!(spans.last().unwrap().end, len);
        }
        for w in spans.windows(2) {
            prop_assert!(w[0].start < w[1].start);
            prop_assert!(w[1].start <= w[0].end, "gap between {:?} and {:?}", w[0], w[1]);
        }
        for s in &spans {
            prop_assert!(s.start < s.end && s.len() <= chunk_size);
        }
    }

    #[test]
    fn plain_normalization_idempotent(raw in prop::collection::vec(any::<u8>(), 0..400)) {
        let once = normalize_document(&raw, MediaType::Plain);
        prop_assert!(!once.contains('\r'));
        prop_assert_eq!(normalize_document(once.as_bytes(), MediaType::Plain), once);
    }

    #[test]
    fn html_normalization_total(raw in "[<>/a-z &;!\\-\n]{0,200}") {
        let out = normalize_document(raw.as_bytes(), MediaType::Html);
        prop_assert!(!out.contains('\r'));
        prop_assert!(!out.contains("\n\n\n"));
    }

    #[test]
    fn index_round_trip_preserves_ranking(
        texts in prop::collection::vec("[a-z ]{0,60}", 1..30),
        query in "[a-z ]{0,30}",
        k in 1usize..40,
    ) {
        let mut index = VectorIndex::new(EmbedderSpec::default());
        let chunks = texts.iter().enumerate().map(|(i, t)| chunk(&format!("d{i:03}"), 0, t)).collect();
        index.upsert(chunks).unwrap();
        let q = embed(&query, &EmbedderSpec::default());
        let reloaded = VectorIndex::from_bytes(&index.to_bytes()).unwrap();
        prop_assert_eq!(reloaded.to_bytes(), index.to_bytes());
        prop_assert_eq!(reloaded.top_k(&q, k).unwrap(), index.top_k(&q, k).unwrap());
    }

    #[test]
    fn merge_is_idempotent_and_unique(
        items in prop::collection::vec((0usize..8, -1.0f64..1.0), 0..40),
    ) {
        let scored: Vec<ScoredChunk> = items
            .iter()
            .map(|&(d, score)| ScoredChunk::new(chunk(&format!("d{d}"), 0, "t"), score))
            .collect();
        let merged = merge(scored.clone());
        let mut ids: Vec<_> = merged.iter().map(|c| c.chunk.chunk_id.clone()).collect();
        ids.dedup();
        prop_assert_eq!(ids.len(), merged.len());
        for w in merged.windows(2) {
            prop_assert!(w[0].score > w[1].score || (w[0].score == w[1].score && w[0].chunk.chunk_id < w[1].chunk.chunk_id));
        }
        for m in &merged {
            let best = scored.iter().filter(|s| s.chunk.chunk_id == m.chunk.chunk_id).map(|s| s.score).fold(f64::MIN, f64::max);
            prop_assert_eq!(m.score, best);
        }
        prop_assert_eq!(merge(merged.clone()), merged);
    }

    #[test]
    fn query_processing_is_total_and_scrubs(
        words in prop::collection::vec("[A-Za-z]{1,8}", 1..8),
        user in "[a-z]{1,8}",
        domain in "[a-z]{2,8}",
    ) {
        let q = format!("{} {user}@{domain}.com?", words.join(" "));
        let pq = process_query(&q).unwrap();
        prop_assert!(pq.flags.pii_removed);
        prop_assert!(!pq.subqueries.iter().any(|s| s.contains('@')));
        prop_assert!(pq.subqueries.iter().all(|s| !s.trim().is_empty()));
        prop_assert_eq!(process_query(&q).unwrap(), pq);
    }
}
