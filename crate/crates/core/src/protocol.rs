//! JSON bodies exchanged between agents, sources and the resolver.

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use crate::chunker::Chunk;
use crate::corpus::MediaType;
use crate::embed::EmbeddingVector;

pub const PROTOCOL_VERSION: &str = "1";
pub const MAX_K: usize = 1000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceManifest {
    pub protocol_version: String,
    pub source_id: String,
    pub endpoint: String,
    pub title: String,
    pub embedding_model_id: String,
    pub license: String,
    pub topics: Vec<String>,
    #[serde(default)]
    pub media_types: Vec<String>,
    pub chunk_count: usize,
    pub summary_text: String,
    pub updated_at: DateTime<Utc>,
}

/// Scoping filters shared by `/query` and `/resolve`. Absent fields do not
/// filter. `as_of` pins the clock used for `max_age_days`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Constraints {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub licenses: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topics: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_age_days: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub media_types: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub as_of: Option<DateTime<Utc>>,
}

fn intersects(wanted: &[String], have: &[String]) -> bool {
    wanted
        .iter()
        .any(|w| have.iter().any(|h| h.eq_ignore_ascii_case(w)))
}

impl Constraints {
    pub fn is_empty(&self) -> bool {
        self.licenses.is_none()
            && self.topics.is_none()
            && self.max_age_days.is_none()
            && self.media_types.is_none()
    }

    /// Names of fields that are present but empty.
    pub fn invalid_fields(&self) -> Vec<&'static str> {
        let mut bad = Vec::new();
        if self.licenses.as_ref().is_some_and(Vec::is_empty) {
            bad.push("constraints.licenses");
        }
        if self.topics.as_ref().is_some_and(Vec::is_empty) {
            bad.push("constraints.topics");
        }
        if self.media_types.as_ref().is_some_and(Vec::is_empty) {
            bad.push("constraints.media_types");
        }
        bad
    }

    pub fn license_ok(&self, license: &str) -> bool {
        self.licenses
            .as_ref()
            .is_none_or(|allowed| allowed.iter().any(|a| a.eq_ignore_ascii_case(license)))
    }

    pub fn topics_ok(&self, topics: &[String]) -> bool {
        self.topics.as_ref().is_none_or(|wanted| intersects(wanted, topics))
    }

    pub fn media_ok(&self, media_types: &[String]) -> bool {
        self.media_types
            .as_ref()
            .is_none_or(|wanted| intersects(wanted, media_types))
    }

    pub fn fresh_enough(&self, updated_at: DateTime<Utc>, now: DateTime<Utc>) -> bool {
        match self.max_age_days {
            None => true,
            Some(days) => {
                let reference = self.as_of.unwrap_or(now);
                updated_at >= reference - Duration::days(i64::from(days))
            }
        }
    }

    pub fn admits_source(&self, manifest: &SourceManifest, now: DateTime<Utc>) -> bool {
        self.license_ok(&manifest.license)
            && self.topics_ok(&manifest.topics)
            && self.media_ok(&manifest.media_types)
            && self.fresh_enough(manifest.updated_at, now)
    }

    pub fn admits_chunk(&self, chunk: &Chunk, now: DateTime<Utc>) -> bool {
        self.media_ok(&[chunk.media_type.as_str().to_string()]) && self.fresh_enough(chunk.fetched_at, now)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRequest {
    pub query: String,
    pub k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraints: Option<Constraints>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryHit {
    pub chunk_id: String,
    pub doc_id: String,
    pub source_id: String,
    pub uri: String,
    pub media_type: MediaType,
    pub start: usize,
    pub end: usize,
    pub score: f64,
    pub text: String,
    pub digest: String,
    pub license: String,
    pub updated_at: DateTime<Utc>,
}

impl QueryHit {
    pub fn from_chunk(chunk: &Chunk, score: f64, license: &str) -> Self {
        Self {
            chunk_id: chunk.chunk_id.clone(),
            doc_id: chunk.doc_id.clone(),
            source_id: chunk.source_id.clone(),
            uri: chunk.uri.clone(),
            media_type: chunk.media_type,
            start: chunk.start,
            end: chunk.end,
            score,
            text: chunk.text.clone(),
            digest: chunk.digest.clone(),
            license: license.to_string(),
            updated_at: chunk.fetched_at,
        }
    }

    pub fn to_chunk(&self) -> Chunk {
        Chunk {
            chunk_id: self.chunk_id.clone(),
            doc_id: self.doc_id.clone(),
            source_id: self.source_id.clone(),
            uri: self.uri.clone(),
            media_type: self.media_type,
            start: self.start,
            end: self.end,
            text: self.text.clone(),
            digest: self.digest.clone(),
            fetched_at: self.updated_at,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResponse {
    pub results: Vec<QueryHit>,
    pub served_bytes: usize,
}

impl QueryResponse {
    /// Serializes the response with `served_bytes` equal to the length of the
    /// very body it appears in.
    pub fn into_body(results: Vec<QueryHit>) -> (Self, Vec<u8>) {
        let mut response = QueryResponse {
            results,
            served_bytes: 0,
        };
        let mut body = serde_json::to_vec(&response).expect("response serializes");
        // The length only grows with the digit count, so this settles quickly.
        while body.len() != response.served_bytes {
            response.served_bytes = body.len();
            body = serde_json::to_vec(&response).expect("response serializes");
        }
        (response, body)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolveRequest {
    pub query: String,
    pub s: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraints: Option<Constraints>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceScore {
    pub source_id: String,
    pub endpoint: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolveResponse {
    pub sources: Vec<SourceScore>,
    pub filtered_out: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Registration {
    pub manifest: SourceManifest,
    pub source_vec: EmbeddingVector,
    pub registered_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisterAck {
    pub status: String,
    pub source_id: String,
    pub replaced: bool,
    pub registry_size: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fields: Vec<String>,
}
