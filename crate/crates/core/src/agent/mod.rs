//! Client side of the fabric: query processing, source resolution, chunk
//! retrieval under four strategies, client-side merge, and byte accounting.

pub mod query;

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chunker::{chunk_id, Chunk};
use crate::corpus::{Corpus, QaItem};
use crate::digest::fnv1a64_hex;
use crate::protocol::{Constraints, ErrorBody, QueryRequest, QueryResponse, ResolveResponse, SourceScore};
use crate::resolver::resolve_request;
use crate::store::{rank_order, ScoredChunk};
use crate::transport::{endpoint_url, Transport, WireRequest, WireResponse};

pub use query::{process_query, scrub_pii, ProcessedQuery, QueryError, QueryFlags, QueryProcessor, RuleProcessor};

pub const DEFAULT_BUDGET_TOKENS: usize = 250_000;
pub const DEFAULT_CHARS_PER_TOKEN: usize = 4;
pub const DEFAULT_PARALLELISM: usize = 8;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BandwidthLedger {
    pub resolver_bytes: u64,
    pub source_request_bytes: u64,
    pub source_response_bytes: u64,
    pub baseline_bytes: u64,
    pub total: u64,
}

impl BandwidthLedger {
    fn add_resolver(&mut self, request: usize, response: usize) {
        self.resolver_bytes += (request + response) as u64;
        self.refresh_total();
    }

    fn add_source(&mut self, request: usize, response: usize) {
        self.source_request_bytes += request as u64;
        self.source_response_bytes += response as u64;
        self.refresh_total();
    }

    fn refresh_total(&mut self) {
        self.total = self.resolver_bytes + self.source_request_bytes + self.source_response_bytes + self.baseline_bytes;
    }
}

/// A source that could not be queried during a fan-out.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceFailure {
    pub source_id: String,
    pub endpoint: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub context_chunks: Vec<ScoredChunk>,
    pub per_source: BTreeMap<String, Vec<String>>,
    pub ledger: BandwidthLedger,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failed_sources: Vec<SourceFailure>,
}

impl RetrievalResult {
    pub fn context_texts(&self) -> Vec<&str> {
        self.context_chunks.iter().map(|c| c.chunk.text.as_str()).collect()
    }
}

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("{endpoint}: {reason}")]
    Endpoint { endpoint: String, reason: String },
    #[error("invalid retrieval parameters: {0}")]
    Params(String),
    #[error(transparent)]
    Query(#[from] QueryError),
}

/// Deduplicates by chunk_id (keeping the best score) and sorts by
/// (score desc, chunk_id asc).
pub fn merge(chunks: impl IntoIterator<Item = ScoredChunk>) -> Vec<ScoredChunk> {
    let mut best: HashMap<String, ScoredChunk> = HashMap::new();
    for sc in chunks {
        match best.get(&sc.chunk.chunk_id) {
            Some(existing) if existing.score.total_cmp(&sc.score).is_ge() => {}
            _ => {
                best.insert(sc.chunk.chunk_id.clone(), sc);
            }
        }
    }
    let mut merged: Vec<ScoredChunk> = best.into_values().collect();
    merged.sort_by(|a, b| rank_order(a.score, &a.chunk.chunk_id, b.score, &b.chunk.chunk_id));
    merged
}

fn group_by_source(chunks: &[ScoredChunk]) -> BTreeMap<String, Vec<String>> {
    let mut per_source: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for c in chunks {
        per_source
            .entry(c.chunk.source_id.clone())
            .or_default()
            .push(c.chunk.chunk_id.clone());
    }
    per_source
}

fn describe_failure(response: &WireResponse) -> String {
    match serde_json::from_slice::<ErrorBody>(&response.body) {
        Ok(body) => format!("HTTP {} {}: {}", response.status, body.error, body.message),
        Err(_) => format!("HTTP {}", response.status),
    }
}

fn hits_to_chunks(response: QueryResponse) -> Vec<ScoredChunk> {
    response
        .results
        .into_iter()
        .map(|hit| ScoredChunk::new(hit.to_chunk(), hit.score))
        .collect()
}

struct SourceCall {
    source: SourceScore,
    query: String,
}

struct SourceReply {
    request_bytes: usize,
    response_bytes: usize,
    outcome: Result<Vec<ScoredChunk>, String>,
}

pub struct Agent {
    transport: Arc<dyn Transport>,
    processor: Arc<dyn QueryProcessor>,
    constraints: Option<Constraints>,
    parallelism: usize,
}

impl Agent {
    pub fn new(transport: Arc<dyn Transport>) -> Self {
        Self {
            transport,
            processor: Arc::new(RuleProcessor),
            constraints: None,
            parallelism: DEFAULT_PARALLELISM,
        }
    }

    pub fn with_processor(mut self, processor: Arc<dyn QueryProcessor>) -> Self {
        self.processor = processor;
        self
    }

    pub fn with_constraints(mut self, constraints: Option<Constraints>) -> Self {
        self.constraints = constraints.filter(|c| !c.is_empty());
        self
    }

    pub fn with_parallelism(mut self, parallelism: usize) -> Self {
        self.parallelism = parallelism.max(1);
        self
    }

    pub fn process(&self, query: &str) -> Result<ProcessedQuery, QueryError> {
        self.processor.process(query)
    }

    fn query_source(&self, endpoint: &str, query: &str, k: usize) -> SourceReply {
        let request = QueryRequest {
            query: query.to_string(),
            k,
            constraints: self.constraints.clone(),
        };
        let body = serde_json::to_vec(&request).expect("query request serializes");
        let request_bytes = body.len();
        match self.transport.exchange(&WireRequest::post(endpoint_url(endpoint, "/query"), body)) {
            Err(e) => SourceReply {
                request_bytes,
                response_bytes: 0,
                outcome: Err(e.reason),
            },
            Ok(response) => {
                let response_bytes = response.body.len();
                let outcome = if response.is_success() {
                    serde_json::from_slice::<QueryResponse>(&response.body)
                        .map(hits_to_chunks)
                        .map_err(|e| format!("malformed query response: {e}"))
                } else {
                    Err(describe_failure(&response))
                };
                SourceReply {
                    request_bytes,
                    response_bytes,
                    outcome,
                }
            }
        }
    }

    /// Queries the single global index with `k` per subquery.
    pub fn retrieve_centralized(
        &self,
        pq: &ProcessedQuery,
        k: usize,
        central: &str,
    ) -> Result<RetrievalResult, RetrievalError> {
        let mut ledger = BandwidthLedger::default();
        let mut gathered = Vec::new();
        if k > 0 {
            for sub in &pq.subqueries {
                let reply = self.query_source(central, sub, k);
                ledger.add_source(reply.request_bytes, reply.response_bytes);
                gathered.extend(reply.outcome.map_err(|reason| RetrievalError::Endpoint {
                    endpoint: central.to_string(),
                    reason,
                })?);
            }
        }
        let context_chunks = merge(gathered);
        Ok(RetrievalResult {
            per_source: group_by_source(&context_chunks),
            context_chunks,
            ledger,
            failed_sources: Vec::new(),
        })
    }

    fn resolve(
        &self,
        resolver: &str,
        query: &str,
        s: usize,
        ledger: &mut BandwidthLedger,
    ) -> Result<Vec<SourceScore>, RetrievalError> {
        let body = serde_json::to_vec(&resolve_request(query, s, self.constraints.as_ref())).expect("resolve request serializes");
        let request_bytes = body.len();
        let fail = |reason: String| RetrievalError::Endpoint {
            endpoint: resolver.to_string(),
            reason,
        };
        let response = match self.transport.exchange(&WireRequest::post(endpoint_url(resolver, "/resolve"), body)) {
            Ok(r) => r,
            Err(e) => {
                ledger.add_resolver(request_bytes, 0);
                return Err(fail(e.reason));
            }
        };
        ledger.add_resolver(request_bytes, response.body.len());
        if !response.is_success() {
            return Err(fail(describe_failure(&response)));
        }
        let parsed: ResolveResponse =
            serde_json::from_slice(&response.body).map_err(|e| fail(format!("malformed resolve response: {e}")))?;
        Ok(parsed.sources)
    }

    /// Resolves the top `s` sources per subquery and takes `k` chunks from
    /// each. Unreachable sources are recorded, not fatal.
    pub fn retrieve_decentralized(
        &self,
        pq: &ProcessedQuery,
        s: usize,
        k: usize,
        resolver: &str,
    ) -> Result<RetrievalResult, RetrievalError> {
        if s == 0 || k == 0 {
            return Err(RetrievalError::Params(format!("s and k must be >= 1 (s={s}, k={k})")));
        }
        let mut ledger = BandwidthLedger::default();
        let mut calls = Vec::new();
        for sub in &pq.subqueries {
            for source in self.resolve(resolver, sub, s, &mut ledger)? {
                calls.push(SourceCall {
                    source,
                    query: sub.clone(),
                });
            }
        }

        let replies = self.fan_out(&calls, k);
        let mut gathered = Vec::new();
        let mut failed_sources = Vec::new();
        for (call, reply) in calls.iter().zip(replies) {
            ledger.add_source(reply.request_bytes, reply.response_bytes);
            match reply.outcome {
                Ok(chunks) => gathered.extend(chunks),
                Err(reason) => failed_sources.push(SourceFailure {
                    source_id: call.source.source_id.clone(),
                    endpoint: call.source.endpoint.clone(),
                    reason,
                }),
            }
        }
        let context_chunks = merge(gathered);
        Ok(RetrievalResult {
            per_source: group_by_source(&context_chunks),
            context_chunks,
            ledger,
            failed_sources,
        })
    }

    /// Issues all calls with at most `parallelism` in flight; replies come
    /// back in call order regardless of completion order.
    fn fan_out(&self, calls: &[SourceCall], k: usize) -> Vec<SourceReply> {
        let slots: Vec<Mutex<Option<SourceReply>>> = calls.iter().map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        let workers = self.parallelism.min(calls.len());
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(call) = calls.get(i) else { break };
                    let reply = self.query_source(&call.source.endpoint, &call.query, k);
                    *slots[i].lock().expect("slot lock") = Some(reply);
                });
            }
        });
        slots
            .into_iter()
            .map(|slot| slot.into_inner().expect("slot lock").expect("every call answered"))
            .collect()
    }

    /// Decentralized retrieval over a wide net, then keep the global top
    /// `k_final`. The ledger still counts the whole wide fetch.
    pub fn retrieve_hybrid(
        &self,
        pq: &ProcessedQuery,
        s_wide: usize,
        k_wide: usize,
        k_final: usize,
        resolver: &str,
    ) -> Result<RetrievalResult, RetrievalError> {
        if k_final > s_wide.saturating_mul(k_wide) {
            return Err(RetrievalError::Params(format!(
                "k_final {k_final} exceeds s_wide*k_wide = {}",
                s_wide.saturating_mul(k_wide)
            )));
        }
        let mut result = self.retrieve_decentralized(pq, s_wide, k_wide, resolver)?;
        result.context_chunks.truncate(k_final);
        result.per_source = group_by_source(&result.context_chunks);
        Ok(result)
    }
}

/// Estimated token count of a text: ceil(chars / chars_per_token).
pub fn estimate_tokens(text: &str, chars_per_token: usize) -> usize {
    text.chars().count().div_ceil(chars_per_token.max(1))
}

/// Whole documents in search-rank order while the running token estimate
/// stays within budget. A document that would overflow is skipped and the
/// walk continues.
pub fn retrieve_full_context(item: &QaItem, budget_tokens: usize, corpus: &Corpus) -> RetrievalResult {
    retrieve_full_context_with(item, budget_tokens, DEFAULT_CHARS_PER_TOKEN, corpus)
}

pub fn retrieve_full_context_with(
    item: &QaItem,
    budget_tokens: usize,
    chars_per_token: usize,
    corpus: &Corpus,
) -> RetrievalResult {
    let mut used = 0usize;
    let mut context_chunks = Vec::new();
    let mut ledger = BandwidthLedger::default();
    for doc_id in &item.source_rank {
        let Some(doc) = corpus.document(doc_id) else { continue };
        let tokens = estimate_tokens(&doc.text, chars_per_token);
        if used + tokens > budget_tokens {
            continue;
        }
        used += tokens;
        ledger.baseline_bytes += doc.text.len() as u64;
        let len = doc.text.chars().count();
        let chunk = Chunk {
            chunk_id: chunk_id(&doc.doc_id, 0, len),
            doc_id: doc.doc_id.clone(),
            source_id: doc.source_id.clone(),
            uri: doc.uri.clone(),
            media_type: doc.media_type,
            start: 0,
            end: len,
            digest: fnv1a64_hex(doc.text.as_bytes()),
            text: doc.text.clone(),
            fetched_at: doc.fetched_at,
        };
        context_chunks.push(ScoredChunk::new(chunk, 0.0));
    }
    ledger.refresh_total();
    RetrievalResult {
        per_source: group_by_source(&context_chunks),
        context_chunks,
        ledger,
        failed_sources: Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Document, MediaType};
    use chrono::{DateTime, Utc};

    fn corpus_with(docs: &[(&str, usize)]) -> Corpus {
        let mut documents: Vec<Document> = docs
            .iter()
            .map(|(id, len)| Document {
                doc_id: id.to_string(),
                source_id: format!("s-{id}"),
                uri: format!("https://x/{id}"),
                media_type: MediaType::Plain,
                text: "a".repeat(*len),
                raw_bytes_len: *len as u64,
                fetched_at: DateTime::<Utc>::UNIX_EPOCH,
            })
            .collect();
        documents.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
        Corpus {
            documents,
            ..Default::default()
        }
    }

    fn item(rank: &[&str]) -> QaItem {
        QaItem {
            qid: "q".into(),
            question: "?".into(),
            answer_aliases: vec!["a".into()],
            source_rank: rank.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn full_context_budget_zero() {
        let corpus = corpus_with(&[("d1", 400)]);
        let r = retrieve_full_context(&item(&["d1"]), 0, &corpus);
        assert!(r.context_chunks.is_empty());
        assert_eq!(r.ledger, BandwidthLedger::default());
    }

    #[test]
    fn full_context_exact_fit() {
        let corpus = corpus_with(&[("d1", 400)]);
        let r = retrieve_full_context(&item(&["d1"]), 100, &corpus);
        assert_eq!(r.context_chunks.len(), 1);
        assert_eq!(r.ledger.baseline_bytes, 400);
        assert_eq!(r.ledger.total, 400);
        assert_eq!(estimate_tokens(&"a".repeat(401), 4), 101);
    }

    #[test]
    fn full_context_skips_overflow_and_continues() {
        let corpus = corpus_with(&[("big", 800), ("small", 40), ("mid", 200)]);
        // 200 + 10 fit; big (200 tokens) would overflow after mid
        let r = retrieve_full_context(&item(&["mid", "big", "small"]), 100, &corpus);
        let ids: Vec<_> = r.context_chunks.iter().map(|c| c.chunk.doc_id.as_str()).collect();
        assert_eq!(ids, vec!["mid", "small"]);
        assert_eq!(r.ledger.baseline_bytes, 240);
    }

    #[test]
    fn merge_dedups_keeps_best_and_is_idempotent() {
        let corpus = corpus_with(&[("a", 3), ("b", 3)]);
        let base = retrieve_full_context(&item(&["a", "b"]), 100, &corpus).context_chunks;
        let mut low = base[0].clone();
        low.score = 0.1;
        let mut high = base[0].clone();
        high.score = 0.9;
        let merged = merge(vec![low, base[1].clone(), high.clone()]);
        assert_eq!(merged.len(), 2);
        assert_eq!(merged[0], high);
        let twice = merge(merged.iter().cloned().chain(merged.iter().cloned()));
        assert_eq!(twice, merged);
    }

    #[test]
    fn ledger_total_is_sum() {
        let mut l = BandwidthLedger::default();
        l.add_resolver(10, 20);
        l.add_source(3, 4);
        assert_eq!(l.total, 37);
    }
}
