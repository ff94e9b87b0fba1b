//! Serves any [`Service`] over HTTP/1.1 with axum.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, HeaderValue, Method as HttpMethod, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::Router;
use tokio::net::TcpListener;

use crate::api;
use crate::transport::{Method, Service};

pub fn router(service: Arc<dyn Service>) -> Router {
    Router::new().fallback(dispatch).with_state(service)
}

async fn dispatch(
    State(service): State<Arc<dyn Service>>,
    method: HttpMethod,
    uri: Uri,
    body: Bytes,
) -> Response {
    let reply = match method {
        HttpMethod::GET => service.handle(Method::Get, uri.path(), &body),
        HttpMethod::POST => service.handle(Method::Post, uri.path(), &body),
        _ => api::ApiError::method_not_allowed(uri.path()).into_wire(),
    };
    let status = StatusCode::from_u16(reply.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    let mut response = (status, reply.body).into_response();
    response
        .headers_mut()
        .insert(header::CONTENT_TYPE, HeaderValue::from_static("application/json"));
    response
}

/// Runs until the listener fails. Bind with port 0 to let the OS choose.
pub async fn serve(listener: TcpListener, service: Arc<dyn Service>) -> std::io::Result<()> {
    axum::serve(listener, router(service)).await
}

/// Starts a server on a background thread with its own runtime and returns
/// the bound address. Used by tests and the CLI's in-process demos.
pub fn spawn(addr: &str, service: Arc<dyn Service>) -> std::io::Result<SocketAddr> {
    let std_listener = std::net::TcpListener::bind(addr)?;
    std_listener.set_nonblocking(true)?;
    let local = std_listener.local_addr()?;
    std::thread::Builder::new()
        .name(format!("http-{local}"))
        .spawn(move || {
            let runtime = tokio::runtime::Builder::new_multi_thread()
                .worker_threads(2)
                .enable_all()
                .build()
                .expect("tokio runtime");
            runtime.block_on(async move {
                let listener = TcpListener::from_std(std_listener).expect("listener");
                let _ = serve(listener, service).await;
            });
        })?;
    Ok(local)
}
