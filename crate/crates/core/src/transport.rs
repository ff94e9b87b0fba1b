//! Request/response transport between agents and services.
//!
//! Services implement [`Service`] over raw bodies, so the same bytes go over
//! HTTP (see [`crate::http`]) or through [`InProcessTransport`]. Byte
//! accounting always measures bodies, never headers.

use std::sync::{Arc, Mutex};
use std::time::Duration;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Get,
    Post,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireRequest {
    pub method: Method,
    pub url: String,
    pub body: Vec<u8>,
}

impl WireRequest {
    pub fn get(url: impl Into<String>) -> Self {
        Self {
            method: Method::Get,
            url: url.into(),
            body: Vec::new(),
        }
    }

    pub fn post(url: impl Into<String>, body: Vec<u8>) -> Self {
        Self {
            method: Method::Post,
            url: url.into(),
            body,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireResponse {
    pub status: u16,
    pub body: Vec<u8>,
}

impl WireResponse {
    pub fn json(status: u16, body: Vec<u8>) -> Self {
        Self { status, body }
    }

    pub fn is_success(&self) -> bool {
        (200..300).contains(&self.status)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("transport to {url} failed: {reason}")]
pub struct TransportError {
    pub url: String,
    pub reason: String,
}

pub trait Transport: Send + Sync {
    fn exchange(&self, request: &WireRequest) -> Result<WireResponse, TransportError>;
}

/// A JSON-over-HTTP service reduced to one function of (method, path, body).
pub trait Service: Send + Sync {
    fn handle(&self, method: Method, path: &str, body: &[u8]) -> WireResponse;
}

/// Joins a base endpoint and a path without doubling slashes.
pub fn endpoint_url(base: &str, path: &str) -> String {
    format!("{}/{}", base.trim_end_matches('/'), path.trim_start_matches('/'))
}

/// Blocking HTTP/1.1 client.
pub struct HttpTransport {
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self { agent }
    }
}

impl Default for HttpTransport {
    fn default() -> Self {
        Self::new(Duration::from_secs(30))
    }
}

impl Transport for HttpTransport {
    fn exchange(&self, request: &WireRequest) -> Result<WireResponse, TransportError> {
        let fail = |e: ureq::Error| TransportError {
            url: request.url.clone(),
            reason: e.to_string(),
        };
        let mut response = match request.method {
            Method::Get => self.agent.get(&request.url).call().map_err(fail)?,
            Method::Post => self
                .agent
                .post(&request.url)
                .header("content-type", "application/json")
                .send(&request.body[..])
                .map_err(fail)?,
        };
        let status = response.status().as_u16();
        let body = response
            .body_mut()
            .with_config()
            .limit(256 * 1024 * 1024)
            .read_to_vec()
            .map_err(fail)?;
        Ok(WireResponse { status, body })
    }
}

/// Routes requests to services by base URL without touching the network.
#[derive(Default, Clone)]
pub struct InProcessTransport {
    routes: Vec<(String, Arc<dyn Service>)>,
}

impl InProcessTransport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn mount(&mut self, base: impl Into<String>, service: Arc<dyn Service>) {
        let base = base.into().trim_end_matches('/').to_string();
        self.routes.retain(|(b, _)| *b != base);
        self.routes.push((base, service));
        // longest prefix first
        self.routes.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
    }

    pub fn unmount(&mut self, base: &str) {
        let base = base.trim_end_matches('/');
        self.routes.retain(|(b, _)| b != base);
    }
}

impl Transport for InProcessTransport {
    fn exchange(&self, request: &WireRequest) -> Result<WireResponse, TransportError> {
        for (base, service) in &self.routes {
            if let Some(rest) = request.url.strip_prefix(base.as_str()) {
                if rest.is_empty() || rest.starts_with('/') {
                    let path = if rest.is_empty() { "/" } else { rest };
                    return Ok(service.handle(request.method, path, &request.body));
                }
            }
        }
        Err(TransportError {
            url: request.url.clone(),
            reason: "connection refused (no service mounted)".into(),
        })
    }
}

/// One intercepted exchange as seen on the wire.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Exchange {
    pub method: Method,
    pub url: String,
    pub request_body: Vec<u8>,
    pub status: Option<u16>,
    pub response_body: Vec<u8>,
}

/// Wraps a transport and records every exchange.
pub struct RecordingTransport<T> {
    inner: T,
    log: Mutex<Vec<Exchange>>,
}

impl<T: Transport> RecordingTransport<T> {
    pub fn new(inner: T) -> Self {
        Self {
            inner,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn exchanges(&self) -> Vec<Exchange> {
        self.log.lock().expect("log lock").clone()
    }

    pub fn take(&self) -> Vec<Exchange> {
        std::mem::take(&mut *self.log.lock().expect("log lock"))
    }
}

impl<T: Transport> Transport for RecordingTransport<T> {
    fn exchange(&self, request: &WireRequest) -> Result<WireResponse, TransportError> {
        let result = self.inner.exchange(request);
        let (status, response_body) = match &result {
            Ok(r) => (Some(r.status), r.body.clone()),
            Err(_) => (None, Vec::new()),
        };
        self.log.lock().expect("log lock").push(Exchange {
            method: request.method,
            url: request.url.clone(),
            request_body: request.body.clone(),
            status,
            response_body,
        });
        result
    }
}

impl<T: Transport + ?Sized> Transport for Arc<T> {
    fn exchange(&self, request: &WireRequest) -> Result<WireResponse, TransportError> {
        (**self).exchange(request)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Echo;

    impl Service for Echo {
        fn handle(&self, _method: Method, path: &str, body: &[u8]) -> WireResponse {
            let mut out = path.as_bytes().to_vec();
            out.extend_from_slice(body);
            WireResponse::json(200, out)
        }
    }

    #[test]
    fn routes_by_longest_prefix() {
        let mut t = InProcessTransport::new();
        t.mount("http://a.local", Arc::new(Echo));
        t.mount("http://a.local/nested/", Arc::new(Echo));
        let r = t.exchange(&WireRequest::post("http://a.local/query", b"x".to_vec())).unwrap();
        assert_eq!(r.body, b"/queryx");
        let r = t.exchange(&WireRequest::get("http://a.local/nested/manifest")).unwrap();
        assert_eq!(r.body, b"/manifest");
        assert!(t.exchange(&WireRequest::get("http://a.localhost/x")).is_err());
        assert!(t.exchange(&WireRequest::get("http://b.local/x")).is_err());
    }

    #[test]
    fn recording_keeps_bodies() {
        let mut inner = InProcessTransport::new();
        inner.mount("http://a.local", Arc::new(Echo));
        let t = RecordingTransport::new(inner);
        t.exchange(&WireRequest::post("http://a.local/p", b"abc".to_vec())).unwrap();
        let _ = t.exchange(&WireRequest::get("http://nowhere/p"));
        let log = t.take();
        assert_eq!(log.len(), 2);
        assert_eq!(log[0].response_body, b"/pabc");
        assert_eq!(log[1].status, None);
        assert!(t.exchanges().is_empty());
    }

    #[test]
    fn url_join() {
        assert_eq!(endpoint_url("http://h:1/", "/query"), "http://h:1/query");
        assert_eq!(endpoint_url("http://h:1", "manifest"), "http://h:1/manifest");
    }
}
