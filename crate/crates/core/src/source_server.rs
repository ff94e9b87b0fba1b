//! A semantic source: answers `GET /manifest` and `POST /query` from one
//! vector index, and builds that index from documents.

use std::collections::BTreeSet;

use chrono::{DateTime, Utc};
use thiserror::Error;

use crate::api::{ok_json, parse_body, ApiError};
use crate::chunker::{chunk_document, SplitError, SplitParams};
use crate::corpus::{Corpus, Document};
use crate::embed::{Embedder, EmbedderSpec, HashEmbedder};
use crate::protocol::{QueryHit, QueryRequest, QueryResponse, SourceManifest, MAX_K, PROTOCOL_VERSION};
use crate::store::{IndexError, SourceDescriptor, VectorIndex, SUMMARY_MAX_CHARS};
use crate::transport::{Method, Service, WireResponse};

/// source_id of the single global index used for centralized retrieval.
pub const CENTRAL_SOURCE_ID: &str = "central";

struct Loaded {
    index: VectorIndex,
    manifest: SourceManifest,
    embedder: Box<dyn Embedder>,
    now: fn() -> DateTime<Utc>,
}

pub struct SourceServer {
    loaded: Option<Loaded>,
}

#[derive(Debug, Error)]
pub enum SourceError {
    #[error("index has no source descriptor")]
    MissingDescriptor,
    #[error("embedder {got} cannot serve an index built with {expected}")]
    EmbedderMismatch { expected: String, got: String },
    #[error(transparent)]
    Index(#[from] IndexError),
}

pub fn build_manifest(index: &VectorIndex, endpoint: &str) -> Result<SourceManifest, SourceError> {
    let descriptor = index.source().ok_or(SourceError::MissingDescriptor)?;
    let media_types: BTreeSet<&str> = index.chunks().map(|c| c.media_type.as_str()).collect();
    let updated_at = index
        .chunks()
        .map(|c| c.fetched_at)
        .max()
        .unwrap_or(DateTime::<Utc>::UNIX_EPOCH);
    Ok(SourceManifest {
        protocol_version: PROTOCOL_VERSION.to_string(),
        source_id: descriptor.source_id.clone(),
        endpoint: endpoint.to_string(),
        title: descriptor.title.clone(),
        embedding_model_id: index.embedder().model_id.clone(),
        license: descriptor.license.clone(),
        topics: descriptor.topics.clone(),
        media_types: media_types.into_iter().map(str::to_string).collect(),
        chunk_count: index.len(),
        summary_text: index.summary_text().chars().take(SUMMARY_MAX_CHARS).collect(),
        updated_at,
    })
}

impl SourceServer {
    pub fn new(index: VectorIndex, endpoint: &str) -> Result<Self, SourceError> {
        let embedder = HashEmbedder::new(index.embedder().clone()).map_err(IndexError::from)?;
        Self::with_embedder(index, endpoint, Box::new(embedder))
    }

    pub fn with_embedder(
        index: VectorIndex,
        endpoint: &str,
        embedder: Box<dyn Embedder>,
    ) -> Result<Self, SourceError> {
        if embedder.spec() != index.embedder() {
            return Err(SourceError::EmbedderMismatch {
                expected: index.embedder().model_id.clone(),
                got: embedder.spec().model_id.clone(),
            });
        }
        let manifest = build_manifest(&index, endpoint)?;
        Ok(Self {
            loaded: Some(Loaded {
                index,
                manifest,
                embedder,
                now: Utc::now,
            }),
        })
    }

    /// A server with no index; every request answers 503.
    pub fn unloaded() -> Self {
        Self { loaded: None }
    }

    /// Replaces the clock used for recency constraints without `as_of`.
    pub fn with_clock(mut self, now: fn() -> DateTime<Utc>) -> Self {
        if let Some(loaded) = self.loaded.as_mut() {
            loaded.now = now;
        }
        self
    }

    pub fn manifest(&self) -> Option<&SourceManifest> {
        self.loaded.as_ref().map(|l| &l.manifest)
    }

    pub fn index(&self) -> Option<&VectorIndex> {
        self.loaded.as_ref().map(|l| &l.index)
    }

    fn require(&self) -> Result<&Loaded, ApiError> {
        self.loaded
            .as_ref()
            .ok_or_else(|| ApiError::unavailable("index_not_loaded", "source index is not loaded"))
    }

    pub fn query(&self, req: &QueryRequest) -> Result<QueryResponse, ApiError> {
        self.query_body(req).map(|(resp, _)| resp)
    }

    /// Answers a query and returns the exact body bytes that go on the wire.
    pub fn query_body(&self, req: &QueryRequest) -> Result<(QueryResponse, Vec<u8>), ApiError> {
        let loaded = self.require()?;
        if req.query.trim().is_empty() {
            return Err(ApiError::invalid_fields("bad_request", vec!["query".into()]));
        }
        if req.k == 0 || req.k > MAX_K {
            let mut err = ApiError::invalid_fields("bad_request", vec!["k".into()]);
            err.body.message = format!("k must be in 1..={MAX_K}, got {}", req.k);
            return Err(err);
        }
        let constraints = req.constraints.clone().unwrap_or_default();
        let invalid = constraints.invalid_fields();
        if !invalid.is_empty() {
            return Err(ApiError::invalid_fields(
                "bad_request",
                invalid.into_iter().map(String::from).collect(),
            ));
        }

        let manifest = &loaded.manifest;
        let now = (loaded.now)();
        let source_ok = constraints.license_ok(&manifest.license) && constraints.topics_ok(&manifest.topics);
        let hits = if source_ok {
            let query_vec = loaded.embedder.embed(&req.query);
            loaded
                .index
                .top_k_filtered(&query_vec, req.k, |c| constraints.admits_chunk(c, now))
                .map_err(|e| ApiError::new(500, "internal", e.to_string()))?
        } else {
            Vec::new()
        };
        let results = hits
            .iter()
            .map(|h| QueryHit::from_chunk(&h.chunk, h.score, &manifest.license))
            .collect();
        Ok(QueryResponse::into_body(results))
    }
}

impl Service for SourceServer {
    fn handle(&self, method: Method, path: &str, body: &[u8]) -> WireResponse {
        let result = match (method, path) {
            (Method::Get, "/manifest") => self.require().map(|l| ok_json(&l.manifest)),
            (Method::Post, "/query") => parse_body::<QueryRequest>(body)
                .and_then(|req| self.query_body(&req))
                .map(|(_, bytes)| WireResponse::json(200, bytes)),
            (_, "/manifest" | "/query") => Err(ApiError::method_not_allowed(path)),
            _ => Err(ApiError::not_found(path)),
        };
        result.unwrap_or_else(ApiError::into_wire)
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("documents span several sources: {first} and {second}")]
    MixedSources { first: String, second: String },
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error(transparent)]
    Index(#[from] IndexError),
}

/// Builds one source's index. Every document must carry `descriptor.source_id`.
pub fn ingest_source(
    docs: &[Document],
    descriptor: SourceDescriptor,
    params: &SplitParams,
    spec: &EmbedderSpec,
) -> Result<VectorIndex, IngestError> {
    if let Some(other) = docs.iter().find(|d| d.source_id != descriptor.source_id) {
        return Err(IngestError::MixedSources {
            first: descriptor.source_id.clone(),
            second: other.source_id.clone(),
        });
    }
    build_index(docs, descriptor, params, spec)
}

/// Builds the single global index over every document of the corpus.
pub fn ingest_central(corpus: &Corpus, params: &SplitParams, spec: &EmbedderSpec) -> Result<VectorIndex, IngestError> {
    let descriptor = SourceDescriptor {
        source_id: CENTRAL_SOURCE_ID.to_string(),
        title: "Central index".to_string(),
        license: "mixed".to_string(),
        topics: Vec::new(),
    };
    build_index(&corpus.documents, descriptor, params, spec)
}

fn build_index(
    docs: &[Document],
    descriptor: SourceDescriptor,
    params: &SplitParams,
    spec: &EmbedderSpec,
) -> Result<VectorIndex, IngestError> {
    params.validate()?;
    let embedder = HashEmbedder::new(spec.clone()).map_err(IndexError::from)?;
    let mut chunks = Vec::new();
    for doc in docs {
        chunks.extend(chunk_document(doc, params)?);
    }
    let mut index = VectorIndex::new(spec.clone()).with_source(descriptor);
    index.upsert_with(&embedder, chunks)?;
    Ok(index)
}

/// Descriptor for `source_id` from corpus metadata, with defaults for
/// missing title/license.
pub fn descriptor_for(corpus: &Corpus, source_id: &str) -> SourceDescriptor {
    let meta = corpus.sources.get(source_id).cloned().unwrap_or_default();
    SourceDescriptor {
        source_id: source_id.to_string(),
        title: meta.title.unwrap_or_else(|| source_id.to_string()),
        license: meta.license.unwrap_or_else(|| "proprietary".to_string()),
        topics: meta.topics,
    }
}
