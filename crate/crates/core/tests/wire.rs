//! Services behind real sockets, exercised with the blocking HTTP client.

use std::sync::Arc;

use semfabric::http;
use semfabric::protocol::{ErrorBody, QueryResponse, RegisterAck, ResolveResponse, SourceManifest};
use semfabric::resolver::Resolver;
use semfabric::source_server::SourceServer;
use semfabric::store::{SourceDescriptor, VectorIndex};
use semfabric::transport::{HttpTransport, Method, Transport, WireRequest};
use semfabric::{Chunk, EmbedderSpec, MediaType};

fn index() -> VectorIndex {
    let texts = ["the harbor archive was founded in 1620", "stew made with mirka root", "orbit of the comet"];
    let chunks = texts
        .iter()
        .enumerate()
        .map(|(i, t)| Chunk {
            chunk_id: format!("d{i}#0-{}", t.len()),
            doc_id: format!("d{i}"),
            source_id: "s1".into(),
            uri: format!("https://s1.example/d{i}"),
            media_type: MediaType::Markdown,
            start: 0,
            end: t.len(),
            text: t.to_string(),
            digest: semfabric::digest::fnv1a64_hex(t.as_bytes()),
            fetched_at: "2024-05-01T00:00:00Z".parse().unwrap(),
        })
        .collect();
    let mut index = VectorIndex::new(EmbedderSpec::default()).with_source(SourceDescriptor {
        source_id: "s1".into(),
        title: "Harbor notes".into(),
        license: "cc0-1.0".into(),
        topics: vec!["history".into()],
    });
    index.upsert(chunks).unwrap();
    index
}

fn post(url: String, body: &str) -> (u16, Vec<u8>) {
    let r = HttpTransport::default()
        .exchange(&WireRequest::post(url, body.as_bytes().to_vec()))
        .unwrap();
    (r.status, r.body)
}

fn get(url: String) -> (u16, Vec<u8>) {
    let r = HttpTransport::default().exchange(&WireRequest::get(url)).unwrap();
    (r.status, r.body)
}

#[test]
fn source_round_trip_over_http() {
    let addr = http::spawn("127.0.0.1:0", Arc::new(SourceServer::new(index(), "http://s1.test").unwrap())).unwrap();
    let base = format!("http://{addr}");

    let (status, body) = get(format!("{base}/manifest"));
    assert_eq!(status, 200);
    let manifest: SourceManifest = serde_json::from_slice(&body).unwrap();
    assert_eq!(manifest.chunk_count, 3);
    assert_eq!(manifest.endpoint, "http://s1.test");

    let (status, body) = post(format!("{base}/query"), r#"{"query":"harbor archive","k":2,"extra":true}"#);
    assert_eq!(status, 200);
    let resp: QueryResponse = serde_json::from_slice(&body).unwrap();
    assert_eq!(resp.results.len(), 2);
    assert_eq!(resp.results[0].doc_id, "d0");
    assert_eq!(resp.served_bytes, body.len());

    // constraints that eliminate everything are not an error
    let (status, body) = post(format!("{base}/query"), r#"{"query":"harbor","k":2,"constraints":{"licenses":["proprietary"]}}"#);
    assert_eq!(status, 200);
    assert!(serde_json::from_slice::<QueryResponse>(&body).unwrap().results.is_empty());
}

#[test]
fn source_error_codes() {
    let addr = http::spawn("127.0.0.1:0", Arc::new(SourceServer::new(index(), "http://s1.test").unwrap())).unwrap();
    let base = format!("http://{addr}");
    for (body, field) in [
        (r#"{"query":"","k":2}"#, "query"),
        (r#"{"query":"x","k":0}"#, "k"),
        (r#"{"query":"x","k":1001}"#, "k"),
    ] {
        let (status, resp) = post(format!("{base}/query"), body);
        assert_eq!(status, 400, "{body}");
        let err: ErrorBody = serde_json::from_slice(&resp).unwrap();
        assert!(err.fields.iter().any(|f| f == field), "{body}: {err:?}");
    }
    assert_eq!(post(format!("{base}/query"), r#"{"k":2}"#).0, 400);
    assert_eq!(post(format!("{base}/query"), "not json").0, 400);
    assert_eq!(get(format!("{base}/query")).0, 405);
    assert_eq!(get(format!("{base}/nope")).0, 404);

    let unloaded = http::spawn("127.0.0.1:0", Arc::new(SourceServer::unloaded())).unwrap();
    let (status, body) = get(format!("http://{unloaded}/manifest"));
    assert_eq!(status, 503);
    assert_eq!(serde_json::from_slice::<ErrorBody>(&body).unwrap().error, "index_not_loaded");
}

#[test]
fn resolver_over_http() {
    let addr = http::spawn("127.0.0.1:0", Arc::new(Resolver::default())).unwrap();
    let base = format!("http://{addr}");
    let manifest = SourceServer::new(index(), "http://s1.test").unwrap().manifest().unwrap().clone();
    let body = serde_json::to_string(&manifest).unwrap();

    let (status, ack) = post(format!("{base}/register"), &body);
    assert_eq!(status, 200);
    let ack: RegisterAck = serde_json::from_slice(&ack).unwrap();
    assert_eq!((ack.registry_size, ack.replaced), (1, false));
    let ack: RegisterAck = serde_json::from_slice(&post(format!("{base}/register"), &body).1).unwrap();
    assert_eq!((ack.registry_size, ack.replaced), (1, true));

    let (status, resp) = post(format!("{base}/resolve"), r#"{"query":"harbor history","s":3}"#);
    assert_eq!(status, 200);
    let resp: ResolveResponse = serde_json::from_slice(&resp).unwrap();
    assert_eq!(resp.sources.len(), 1);
    assert_eq!(resp.filtered_out, 0);

    let (_, resp) = post(format!("{base}/resolve"), r#"{"query":"harbor","s":3,"constraints":{"licenses":["cc-by-4.0"]}}"#);
    let resp: ResolveResponse = serde_json::from_slice(&resp).unwrap();
    assert!(resp.sources.is_empty());
    assert_eq!(resp.filtered_out, 1);

    assert_eq!(post(format!("{base}/resolve"), r#"{"query":"  ","s":3}"#).0, 400);
    let (status, err) = post(format!("{base}/register"), r#"{"source_id":"x","endpoint":"ftp://nowhere"}"#);
    assert_eq!(status, 400);
    let err: ErrorBody = serde_json::from_slice(&err).unwrap();
    assert!(err.fields.contains(&"endpoint".to_string()));
    assert!(err.fields.contains(&"embedding_model_id".to_string()));

    let (status, list) = get(format!("{base}/sources"));
    assert_eq!(status, 200);
    assert_eq!(serde_json::from_slice::<serde_json::Value>(&list).unwrap().as_array().unwrap().len(), 1);
}

#[test]
fn unreachable_endpoint_is_transport_error() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let err = HttpTransport::default()
        .exchange(&WireRequest {
            method: Method::Get,
            url: format!("http://{addr}/manifest"),
            body: Vec::new(),
        })
        .unwrap_err();
    assert!(err.url.contains(&addr.to_string()));
}
