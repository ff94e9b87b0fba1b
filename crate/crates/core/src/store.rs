//! Exact top-k vector index over chunks, with a line-oriented file format.
//!
//! File layout: one header line, then one line per entry in chunk_id order.
//!
//! ```text
//! {"version":1,"model_id":"hash3-fnv1a-256-v1","dim":256,"ngram":3,"summary_text":"...","entries":2,"source":{...}}
//! {"chunk":{...},"vector":[...]}
//! {"chunk":{...},"vector":[...]}
//! ```

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chunker::Chunk;
use crate::digest::fnv1a64_hex;
use crate::embed::{check_compatible, dot, EmbedError, Embedder, EmbedderSpec, EmbeddingVector, HashEmbedder};

pub const INDEX_FORMAT_VERSION: u32 = 1;
pub const SUMMARY_MAX_CHARS: usize = 4096;

/// Publisher metadata stored alongside a source's index.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceDescriptor {
    pub source_id: String,
    pub title: String,
    pub license: String,
    pub topics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub chunk: Chunk,
    pub vector: EmbeddingVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    embedder: EmbedderSpec,
    entries: BTreeMap<String, IndexEntry>,
    summary_text: String,
    source: Option<SourceDescriptor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredChunk {
    pub chunk: Chunk,
    pub score: f64,
    pub payload_bytes: usize,
}

impl ScoredChunk {
    pub fn new(chunk: Chunk, score: f64) -> Self {
        let payload_bytes = chunk.text.len();
        Self {
            chunk,
            score,
            payload_bytes,
        }
    }
}

/// Ranking used everywhere: score descending, then chunk_id ascending.
pub fn rank_order(a_score: f64, a_id: &str, b_score: f64, b_id: &str) -> Ordering {
    b_score.total_cmp(&a_score).then_with(|| a_id.cmp(b_id))
}

#[derive(Debug, Error)]
pub enum IndexError {
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("embedder {got} does not match index embedder {expected}")]
    EmbedderMismatch { expected: String, got: String },
    #[error("failed to access {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported index version {found} (expected {INDEX_FORMAT_VERSION})")]
    VersionMismatch { found: u32 },
    #[error("corrupt index file: {0}")]
    Corrupt(String),
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    model_id: String,
    dim: usize,
    ngram: usize,
    summary_text: String,
    entries: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source: Option<SourceDescriptor>,
}

#[derive(Serialize)]
struct EntryLineRef<'a> {
    chunk: &'a Chunk,
    vector: &'a [f32],
}

#[derive(Deserialize)]
struct EntryLine {
    chunk: Chunk,
    vector: Vec<f32>,
}

// Heap key: "greater" means better ranked.
struct Ranked<'a> {
    score: f64,
    entry: &'a IndexEntry,
}

impl PartialEq for Ranked<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Ranked<'_> {}

impl PartialOrd for Ranked<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ranked<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        rank_order(
            other.score,
            &other.entry.chunk.chunk_id,
            self.score,
            &self.entry.chunk.chunk_id,
        )
    }
}

impl VectorIndex {
    pub fn new(embedder: EmbedderSpec) -> Self {
        Self {
            embedder,
            entries: BTreeMap::new(),
            summary_text: String::new(),
            source: None,
        }
    }

    pub fn with_source(mut self, source: SourceDescriptor) -> Self {
        self.source = Some(source);
        self
    }

    pub fn embedder(&self) -> &EmbedderSpec {
        &self.embedder
    }

    pub fn source(&self) -> Option<&SourceDescriptor> {
        self.source.as_ref()
    }

    pub fn summary_text(&self) -> &str {
        &self.summary_text
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in canonical (chunk_id) order.
    pub fn entries(&self) -> impl Iterator<Item = &IndexEntry> {
        self.entries.values()
    }

    pub fn chunks(&self) -> impl Iterator<Item = &Chunk> {
        self.entries.values().map(|e| &e.chunk)
    }

    /// Embeds with the default hashed embedder for this index's spec.
    pub fn upsert(&mut self, chunks: Vec<Chunk>) -> Result<(), IndexError> {
        let embedder = HashEmbedder::new(self.embedder.clone())?;
        self.upsert_with(&embedder, chunks)
    }

    pub fn upsert_with(&mut self, embedder: &dyn Embedder, chunks: Vec<Chunk>) -> Result<(), IndexError> {
        if embedder.spec() != &self.embedder {
            return Err(IndexError::EmbedderMismatch {
                expected: self.embedder.model_id.clone(),
                got: embedder.spec().model_id.clone(),
            });
        }
        // Embed the whole batch before touching the map.
        let batch: Vec<IndexEntry> = chunks
            .into_iter()
            .map(|chunk| IndexEntry {
                vector: embedder.embed(&chunk.text),
                chunk,
            })
            .collect();
        for entry in batch {
            self.entries.insert(entry.chunk.chunk_id.clone(), entry);
        }
        self.refresh_summary();
        Ok(())
    }

    fn refresh_summary(&mut self) {
        let mut first: BTreeMap<&str, &Chunk> = BTreeMap::new();
        for entry in self.entries.values() {
            let c = &entry.chunk;
            first
                .entry(c.doc_id.as_str())
                .and_modify(|cur| {
                    if c.start < cur.start {
                        *cur = c;
                    }
                })
                .or_insert(c);
        }
        self.summary_text = first
            .values()
            .flat_map(|c| c.text.chars())
            .take(SUMMARY_MAX_CHARS)
            .collect();
    }

    pub fn top_k(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<ScoredChunk>, IndexError> {
        self.top_k_filtered(query, k, |_| true)
    }

    /// Exact scan over entries accepted by `keep`.
    pub fn top_k_filtered(
        &self,
        query: &EmbeddingVector,
        k: usize,
        keep: impl Fn(&Chunk) -> bool,
    ) -> Result<Vec<ScoredChunk>, IndexError> {
        let probe = EmbeddingVector {
            model_id: self.embedder.model_id.clone(),
            dim: self.embedder.dim,
            values: vec![0.0; self.embedder.dim],
        };
        check_compatible(&probe, query)?;
        if k == 0 {
            return Ok(Vec::new());
        }
        let query_zero = query.is_zero();

        let mut heap: BinaryHeap<Reverse<Ranked<'_>>> = BinaryHeap::with_capacity(k + 1);
        for entry in self.entries.values().filter(|e| keep(&e.chunk)) {
            let score = if query_zero || entry.vector.is_zero() {
                0.0
            } else {
                dot(&query.values, &entry.vector.values)
            };
            let candidate = Ranked { score, entry };
            if heap.len() < k {
                heap.push(Reverse(candidate));
            } else if let Some(Reverse(worst)) = heap.peek() {
                if candidate > *worst {
                    heap.pop();
                    heap.push(Reverse(candidate));
                }
            }
        }
        let mut best: Vec<Ranked<'_>> = heap.into_iter().map(|Reverse(r)| r).collect();
        best.sort_by(|a, b| b.cmp(a));
        Ok(best
            .into_iter()
            .map(|r| ScoredChunk::new(r.entry.chunk.clone(), r.score))
            .collect())
    }

    /// Canonical serialized form (the on-disk bytes).
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            version: INDEX_FORMAT_VERSION,
            model_id: self.embedder.model_id.clone(),
            dim: self.embedder.dim,
            ngram: self.embedder.ngram,
            summary_text: self.summary_text.clone(),
            entries: self.entries.len(),
            source: self.source.clone(),
        };
        let mut out = serde_json::to_vec(&header).expect("header serializes");
        out.push(b'\n');
        for entry in self.entries.values() {
            let line = EntryLineRef {
                chunk: &entry.chunk,
                vector: &entry.vector.values,
            };
            serde_json::to_writer(&mut out, &line).expect("entry serializes");
            out.push(b'\n');
        }
        out
    }

    pub fn digest(&self) -> String {
        fnv1a64_hex(&self.to_bytes())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IndexError> {
        let text = std::str::from_utf8(bytes).map_err(|e| IndexError::Corrupt(format!("not UTF-8: {e}")))?;
        if !text.ends_with('\n') {
            return Err(IndexError::Corrupt("missing final newline (truncated?)".into()));
        }
        let mut lines = text.lines();
        let header_line = lines
            .next()
            .ok_or_else(|| IndexError::Corrupt("missing header".into()))?;
        let version = serde_json::from_str::<serde_json::Value>(header_line)
            .ok()
            .and_then(|v| v.get("version").and_then(|v| v.as_u64()))
            .ok_or_else(|| IndexError::Corrupt("header has no version".into()))?;
        if version != u64::from(INDEX_FORMAT_VERSION) {
            return Err(IndexError::VersionMismatch {
                found: version as u32,
            });
        }
        let header: Header = serde_json::from_str(header_line)
            .map_err(|e| IndexError::Corrupt(format!("bad header: {e}")))?;
        let embedder = EmbedderSpec {
            model_id: header.model_id,
            dim: header.dim,
            ngram: header.ngram,
        };

        let mut entries = BTreeMap::new();
        let mut previous: Option<String> = None;
        for (i, line) in lines.enumerate() {
            let parsed: EntryLine = serde_json::from_str(line)
                .map_err(|e| IndexError::Corrupt(format!("entry line {}: {e}", i + 2)))?;
            if parsed.vector.len() != embedder.dim {
                return Err(IndexError::Corrupt(format!(
                    "entry line {}: vector length {} != dim {}",
                    i + 2,
                    parsed.vector.len(),
                    embedder.dim
                )));
            }
            let id = parsed.chunk.chunk_id.clone();
            if previous.as_ref().is_some_and(|p| *p >= id) {
                return Err(IndexError::Corrupt(format!("entry line {}: not in chunk_id order", i + 2)));
            }
            previous = Some(id.clone());
            entries.insert(
                id,
                IndexEntry {
                    chunk: parsed.chunk,
                    vector: EmbeddingVector {
                        model_id: embedder.model_id.clone(),
                        dim: embedder.dim,
                        values: parsed.vector,
                    },
                },
            );
        }
        if entries.len() != header.entries {
            return Err(IndexError::Corrupt(format!(
                "header declares {} entries, found {}",
                header.entries,
                entries.len()
            )));
        }
        Ok(Self {
            embedder,
            entries,
            summary_text: header.summary_text,
            source: header.source,
        })
    }

    pub fn persist(&self, path: impl AsRef<Path>) -> Result<(), IndexError> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|source| IndexError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, IndexError> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|source| IndexError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}
