//! Semantic resolver: a flat registry of source manifests that ranks sources
//! for a query under license/topic/recency/media constraints.
//!
//! Routes: `POST /register`, `POST /resolve`, `GET /sources`.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use chrono::{DateTime, Utc};
use serde::Deserialize;
use thiserror::Error;

use crate::api::{ok_json, parse_body, ApiError};
use crate::embed::{dot, Embedder, EmbedderSpec, HashEmbedder};
use crate::protocol::{
    Constraints, RegisterAck, Registration, ResolveRequest, ResolveResponse, SourceManifest, SourceScore,
    PROTOCOL_VERSION,
};
use crate::store::SUMMARY_MAX_CHARS;
use crate::transport::{Method, Service, WireResponse};

pub type Clock = Box<dyn Fn() -> DateTime<Utc> + Send + Sync>;

pub struct Resolver {
    embedder: Box<dyn Embedder>,
    registry: RwLock<BTreeMap<String, Registration>>,
    clock: Clock,
    state_path: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum StateError {
    #[error("failed to access resolver state {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: bad registration on line {line}: {source}", path.display())]
    Malformed {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

// Every field optional so validation can name all failures at once.
#[derive(Deserialize)]
struct ManifestDraft {
    protocol_version: Option<String>,
    source_id: Option<String>,
    endpoint: Option<String>,
    title: Option<String>,
    embedding_model_id: Option<String>,
    license: Option<String>,
    topics: Option<Vec<String>>,
    #[serde(default)]
    media_types: Vec<String>,
    chunk_count: Option<usize>,
    summary_text: Option<String>,
    updated_at: Option<DateTime<Utc>>,
}

fn validate_manifest(draft: ManifestDraft) -> Result<SourceManifest, Vec<String>> {
    let mut bad = Vec::new();
    let mut non_empty = |name: &str, v: &Option<String>| {
        if v.as_deref().is_none_or(|s| s.trim().is_empty()) {
            bad.push(name.to_string());
        }
    };
    non_empty("source_id", &draft.source_id);
    non_empty("title", &draft.title);
    non_empty("embedding_model_id", &draft.embedding_model_id);
    non_empty("license", &draft.license);
    if draft.protocol_version.as_deref() != Some(PROTOCOL_VERSION) {
        bad.push("protocol_version".into());
    }
    let endpoint_ok = draft
        .endpoint
        .as_deref()
        .and_then(|e| url::Url::parse(e).ok())
        .is_some_and(|u| matches!(u.scheme(), "http" | "https") && u.has_host());
    if !endpoint_ok {
        bad.push("endpoint".into());
    }
    if draft.topics.is_none() {
        bad.push("topics".into());
    }
    if draft.chunk_count.is_none() {
        bad.push("chunk_count".into());
    }
    match &draft.summary_text {
        Some(s) if s.chars().count() <= SUMMARY_MAX_CHARS => {}
        _ => bad.push("summary_text".into()),
    }
    if draft.updated_at.is_none() {
        bad.push("updated_at".into());
    }
    if !bad.is_empty() {
        return Err(bad);
    }
    Ok(SourceManifest {
        protocol_version: PROTOCOL_VERSION.to_string(),
        source_id: draft.source_id.unwrap_or_default(),
        endpoint: draft.endpoint.unwrap_or_default(),
        title: draft.title.unwrap_or_default(),
        embedding_model_id: draft.embedding_model_id.unwrap_or_default(),
        license: draft.license.unwrap_or_default(),
        topics: draft.topics.unwrap_or_default(),
        media_types: draft.media_types,
        chunk_count: draft.chunk_count.unwrap_or_default(),
        summary_text: draft.summary_text.unwrap_or_default(),
        updated_at: draft.updated_at.unwrap_or_default(),
    })
}

impl Default for Resolver {
    fn default() -> Self {
        Self::new(Box::new(HashEmbedder::default()))
    }
}

impl Resolver {
    pub fn new(embedder: Box<dyn Embedder>) -> Self {
        Self {
            embedder,
            registry: RwLock::new(BTreeMap::new()),
            clock: Box::new(Utc::now),
            state_path: None,
        }
    }

    pub fn with_spec(spec: EmbedderSpec) -> Result<Self, crate::embed::EmbedError> {
        Ok(Self::new(Box::new(HashEmbedder::new(spec)?)))
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    /// Loads registrations from a JSONL state file (if it exists) and keeps
    /// it updated on every registration.
    pub fn with_state(mut self, path: impl Into<PathBuf>) -> Result<Self, StateError> {
        let path = path.into();
        if path.is_file() {
            let text = fs::read_to_string(&path).map_err(|source| StateError::Io {
                path: path.clone(),
                source,
            })?;
            let mut registry = BTreeMap::new();
            for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                let reg: Registration = serde_json::from_str(line).map_err(|source| StateError::Malformed {
                    path: path.clone(),
                    line: i + 1,
                    source,
                })?;
                registry.insert(reg.manifest.source_id.clone(), reg);
            }
            *self.registry.write().expect("registry lock") = registry;
        }
        self.state_path = Some(path);
        Ok(self)
    }

    pub fn embedder_spec(&self) -> &EmbedderSpec {
        self.embedder.spec()
    }

    pub fn len(&self) -> usize {
        self.registry.read().expect("registry lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn register(&self, manifest: SourceManifest) -> Result<RegisterAck, ApiError> {
        let registration = Registration {
            source_vec: self.embedder.embed(&manifest.summary_text),
            registered_at: (self.clock)(),
            manifest,
        };
        let source_id = registration.manifest.source_id.clone();
        let mut registry = self.registry.write().expect("registry lock");
        let replaced = registry.insert(source_id.clone(), registration).is_some();
        if let Some(path) = &self.state_path {
            write_state(path, &registry).map_err(|e| ApiError::new(500, "state_write_failed", e.to_string()))?;
        }
        Ok(RegisterAck {
            status: "registered".into(),
            source_id,
            replaced,
            registry_size: registry.len(),
        })
    }

    /// Validates a raw manifest body, then registers it.
    pub fn register_body(&self, body: &[u8]) -> Result<RegisterAck, ApiError> {
        let draft: ManifestDraft = parse_body(body)?;
        let manifest = validate_manifest(draft).map_err(|fields| ApiError::invalid_fields("invalid_manifest", fields))?;
        self.register(manifest)
    }

    pub fn resolve(&self, req: &ResolveRequest) -> Result<ResolveResponse, ApiError> {
        if req.query.trim().is_empty() {
            return Err(ApiError::invalid_fields("bad_request", vec!["query".into()]));
        }
        if req.s == 0 {
            return Err(ApiError::invalid_fields("bad_request", vec!["s".into()]));
        }
        let constraints = req.constraints.clone().unwrap_or_default();
        let invalid = constraints.invalid_fields();
        if !invalid.is_empty() {
            return Err(ApiError::invalid_fields(
                "bad_request",
                invalid.into_iter().map(String::from).collect(),
            ));
        }
        let query_vec = self.embedder.embed(&req.query);
        let now = (self.clock)();

        let registry = self.registry.read().expect("registry lock");
        let mut filtered_out = 0;
        let mut scored = Vec::with_capacity(registry.len());
        for reg in registry.values() {
            if !constraints.admits_source(&reg.manifest, now) {
                filtered_out += 1;
                continue;
            }
            let score = if query_vec.is_zero() || reg.source_vec.is_zero() {
                0.0
            } else {
                dot(&query_vec.values, &reg.source_vec.values)
            };
            scored.push(SourceScore {
                source_id: reg.manifest.source_id.clone(),
                endpoint: reg.manifest.endpoint.clone(),
                score,
            });
        }
        drop(registry);
        scored.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.source_id.cmp(&b.source_id)));
        scored.truncate(req.s);
        Ok(ResolveResponse {
            sources: scored,
            filtered_out,
        })
    }

    /// All registrations in source_id order.
    pub fn list_sources(&self) -> Vec<Registration> {
        self.registry.read().expect("registry lock").values().cloned().collect()
    }
}

fn write_state(path: &Path, registry: &BTreeMap<String, Registration>) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut file = fs::File::create(&tmp)?;
        for reg in registry.values() {
            serde_json::to_writer(&mut file, reg)?;
            file.write_all(b"\n")?;
        }
        file.sync_all()?;
    }
    fs::rename(tmp, path)
}

impl Service for Resolver {
    fn handle(&self, method: Method, path: &str, body: &[u8]) -> WireResponse {
        let result = match (method, path) {
            (Method::Post, "/register") => self.register_body(body).map(|ack| ok_json(&ack)),
            (Method::Post, "/resolve") => parse_body::<ResolveRequest>(body)
                .and_then(|req| self.resolve(&req))
                .map(|resp| ok_json(&resp)),
            (Method::Get, "/sources") => Ok(ok_json(&self.list_sources())),
            (_, "/register" | "/resolve" | "/sources") => Err(ApiError::method_not_allowed(path)),
            _ => Err(ApiError::not_found(path)),
        };
        result.unwrap_or_else(ApiError::into_wire)
    }
}

/// Convenience for callers holding a constraint set by value.
pub fn resolve_request(query: &str, s: usize, constraints: Option<&Constraints>) -> ResolveRequest {
    ResolveRequest {
        query: query.to_string(),
        s,
        constraints: constraints.filter(|c| !c.is_empty()).cloned(),
    }
}
