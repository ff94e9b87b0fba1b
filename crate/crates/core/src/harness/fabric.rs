//! A complete fabric (per-source servers, a central server and a resolver)
//! wired through an in-process transport with a pinned clock.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use thiserror::Error;

use crate::agent::Agent;
use crate::api::ApiError;
use crate::chunker::SplitParams;
use crate::corpus::Corpus;
use crate::embed::EmbedderSpec;
use crate::resolver::Resolver;
use crate::source_server::{
    descriptor_for, ingest_central, ingest_source, IngestError, SourceError, SourceServer, CENTRAL_SOURCE_ID,
};
use crate::store::{IndexError, VectorIndex};
use crate::transport::InProcessTransport;

pub const FABRIC_BASE: &str = "http://fabric.local";

/// Clock shared by every in-process service so runs are reproducible.
pub const FIXED_NOW: &str = "2025-10-15T00:00:00Z";

fn fixed_now() -> DateTime<Utc> {
    FIXED_NOW.parse().expect("valid timestamp")
}

#[derive(Debug, Error)]
pub enum FabricError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error("failed to read index directory {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("registration of {source_id} rejected: {}", err.body.message)]
    Register { source_id: String, err: ApiError },
}

pub struct Fabric {
    transport: Arc<InProcessTransport>,
    resolver: Arc<Resolver>,
    central: Option<Arc<SourceServer>>,
    sources: BTreeMap<String, Arc<SourceServer>>,
}

pub fn source_endpoint(source_id: &str) -> String {
    format!("{FABRIC_BASE}/sources/{source_id}")
}

pub fn central_endpoint() -> String {
    format!("{FABRIC_BASE}/{CENTRAL_SOURCE_ID}")
}

pub fn resolver_endpoint() -> String {
    format!("{FABRIC_BASE}/resolver")
}

impl Fabric {
    /// Ingests every source plus the central index from a corpus.
    pub fn from_corpus(corpus: &Corpus, params: &SplitParams, spec: &EmbedderSpec) -> Result<Self, FabricError> {
        let central = ingest_central(corpus, params, spec)?;
        let mut sources = Vec::new();
        for source_id in corpus.source_ids() {
            let docs = corpus.documents_of(&source_id);
            sources.push(ingest_source(&docs, descriptor_for(corpus, &source_id), params, spec)?);
        }
        Self::from_indexes(Some(central), sources)
    }

    /// Loads `*.jsonl` indexes from a directory; the one whose source is
    /// `central` becomes the central server.
    pub fn from_index_dir(dir: impl AsRef<Path>) -> Result<Self, FabricError> {
        let dir = dir.as_ref();
        let io = |source| FabricError::Io {
            path: dir.to_path_buf(),
            source,
        };
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(io)?
            .map(|e| e.map(|e| e.path()))
            .collect::<Result<_, _>>()
            .map_err(io)?;
        paths.retain(|p| p.extension().is_some_and(|e| e == "jsonl"));
        paths.sort();
        let mut central = None;
        let mut sources = Vec::new();
        for path in paths {
            let index = VectorIndex::load(&path)?;
            if index.source().is_some_and(|s| s.source_id == CENTRAL_SOURCE_ID) {
                central = Some(index);
            } else {
                sources.push(index);
            }
        }
        Self::from_indexes(central, sources)
    }

    pub fn from_indexes(central: Option<VectorIndex>, sources: Vec<VectorIndex>) -> Result<Self, FabricError> {
        let resolver = Arc::new(Resolver::default().with_clock(Box::new(fixed_now)));
        let mut transport = InProcessTransport::new();
        transport.mount(resolver_endpoint(), resolver.clone());

        let central = match central {
            Some(index) => {
                let server = Arc::new(SourceServer::new(index, &central_endpoint())?.with_clock(fixed_now));
                transport.mount(central_endpoint(), server.clone());
                Some(server)
            }
            None => None,
        };

        let mut servers = BTreeMap::new();
        for index in sources {
            let source_id = index.source().map(|s| s.source_id.clone()).unwrap_or_default();
            let endpoint = source_endpoint(&source_id);
            let server = Arc::new(SourceServer::new(index, &endpoint)?.with_clock(fixed_now));
            let manifest = server.manifest().cloned().expect("loaded server has a manifest");
            resolver
                .register(manifest)
                .map_err(|err| FabricError::Register {
                    source_id: source_id.clone(),
                    err,
                })?;
            transport.mount(endpoint, server.clone());
            servers.insert(source_id, server);
        }
        Ok(Self {
            transport: Arc::new(transport),
            resolver,
            central,
            sources: servers,
        })
    }

    pub fn transport(&self) -> Arc<InProcessTransport> {
        self.transport.clone()
    }

    pub fn agent(&self) -> Agent {
        Agent::new(self.transport.clone())
    }

    pub fn resolver(&self) -> Arc<Resolver> {
        self.resolver.clone()
    }

    pub fn central(&self) -> Option<Arc<SourceServer>> {
        self.central.clone()
    }

    pub fn sources(&self) -> &BTreeMap<String, Arc<SourceServer>> {
        &self.sources
    }

    pub fn resolver_url(&self) -> String {
        resolver_endpoint()
    }

    pub fn central_url(&self) -> String {
        central_endpoint()
    }
}
