//! Serves any [`Provider`] over the JSON scoring protocol.

use std::net::{SocketAddr, TcpListener};
use std::sync::Arc;
use std::thread::JoinHandle;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use tokio::sync::oneshot;

use super::wire::{
    DetokenizeRequest, DetokenizeResponse, ErrorResponse, InfoResponse, ScoreResponse, TokenizeRequest,
    TokenizeResponse,
};
use super::{Provider, ScoreRequest};
use crate::error::{Error, Result};

type Shared = Arc<dyn Provider>;

struct ApiError(StatusCode, ErrorResponse);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let (status, max_context) = match &e {
            Error::ContextTooLong { limit, .. } => (StatusCode::PAYLOAD_TOO_LARGE, Some(*limit)),
            Error::InvalidArgument(_) | Error::TokenOutOfRange { .. } => (StatusCode::BAD_REQUEST, None),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, None),
        };
        ApiError(
            status,
            ErrorResponse {
                error: e.to_string(),
                max_context,
            },
        )
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| {
        ApiError(
            StatusCode::BAD_REQUEST,
            ErrorResponse {
                error: format!("malformed request: {e}"),
                max_context: None,
            },
        )
    })
}

async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T> + Send + 'static,
{
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r.map_err(ApiError::from),
        Err(e) => Err(ApiError::from(Error::Backend {
            status: None,
            message: format!("worker panicked: {e}"),
        })),
    }
}

async fn info(State(p): State<Shared>) -> Json<InfoResponse> {
    let h = p.handle();
    Json(InfoResponse {
        vocab_size: h.vocab_size,
        bos_token: h.bos_token,
        eos_token: h.eos_token,
        max_context: p.max_context(),
    })
}

async fn tokenize(State(p): State<Shared>, body: Bytes) -> Result<Json<TokenizeResponse>, ApiError> {
    let req: TokenizeRequest = parse(&body)?;
    let tokens = blocking(move || p.tokenize(&req.text)).await?;
    Ok(Json(TokenizeResponse { tokens }))
}

async fn detokenize(State(p): State<Shared>, body: Bytes) -> Result<Json<DetokenizeResponse>, ApiError> {
    let req: DetokenizeRequest = parse(&body)?;
    let text = blocking(move || p.detokenize(&req.tokens)).await?;
    Ok(Json(DetokenizeResponse { text }))
}

async fn score(State(p): State<Shared>, body: Bytes) -> Result<Json<ScoreResponse>, ApiError> {
    let req: ScoreRequest = parse(&body)?;
    let rows = blocking(move || p.score_positions(&req)).await?;
    Ok(Json(ScoreResponse { rows }))
}

pub fn router(provider: Shared) -> Router {
    Router::new()
        .route("/v1/info", get(info))
        .route("/v1/tokenize", post(tokenize))
        .route("/v1/detokenize", post(detokenize))
        .route("/v1/score", post(score))
        .with_state(provider)
}

/// A server running on a background thread; dropping it shuts it down.
pub struct ServerHandle {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<std::io::Result<()>>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

fn runtime() -> std::io::Result<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_multi_thread().enable_all().build()
}

/// Binds `addr` (use port 0 for an ephemeral port) and serves in the background.
pub fn spawn(provider: Shared, addr: &str) -> Result<ServerHandle> {
    let std_listener = TcpListener::bind(addr)?;
    std_listener.set_nonblocking(true)?;
    let local = std_listener.local_addr()?;
    let (tx, rx) = oneshot::channel::<()>();
    let app = router(provider);
    let thread = std::thread::spawn(move || {
        let rt = runtime()?;
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(std_listener)?;
            axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await
        })
    });
    Ok(ServerHandle {
        addr: local,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}

/// Serves on the current thread until the process is stopped.
pub fn run(provider: Shared, addr: &str) -> Result<()> {
    let rt = runtime()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        log::info!("serving on {}", listener.local_addr()?);
        axum::serve(listener, router(provider)).await
    })?;
    Ok(())
}
