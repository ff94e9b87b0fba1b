//! A retrieval fabric: chunk-serving semantic sources, a resolver that picks
//! sources for a query under constraints, an agent that fetches and merges
//! chunks, and a harness that measures sufficiency and bytes moved.

pub mod agent;
pub mod api;
pub mod chunker;
pub mod corpus;
pub mod digest;
pub mod embed;
pub mod harness;
pub mod http;
pub mod protocol;
pub mod resolver;
pub mod source_server;
pub mod store;
pub mod transport;

pub use agent::{merge, Agent, BandwidthLedger, ProcessedQuery, RetrievalResult};
pub use chunker::{chunk_document, split_recursive, Chunk, SplitParams, Span};
pub use corpus::{load_corpus, Corpus, Document, MediaType, QaItem};
pub use embed::{cosine, embed, Embedder, EmbedderSpec, EmbeddingVector, HashEmbedder};
pub use harness::{run_experiment, sufficiency, ExperimentConfig, ExperimentRow, Fabric, Mode};
pub use protocol::{Constraints, QueryRequest, QueryResponse, ResolveRequest, ResolveResponse, SourceManifest};
pub use resolver::Resolver;
pub use source_server::SourceServer;
pub use store::{ScoredChunk, VectorIndex};
pub use transport::{HttpTransport, InProcessTransport, RecordingTransport, Service, Transport};
