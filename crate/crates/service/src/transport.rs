//! Line-delimited transports (standard streams, TCP) and the HTTP front end.

use std::io;
use std::sync::Arc;

use axum::extract::State;
use axum::http::header;
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::Router;
use serde_json::Value;
use tokio::io::{AsyncBufRead, AsyncBufReadExt, AsyncWrite, AsyncWriteExt, BufReader};
use tokio::net::TcpListener;
use tokio::sync::{mpsc, Semaphore};
use tokio::task::JoinSet;

use spatial_env::protocol::{ErrorBody, ErrorCode, Response};

use crate::dispatch::Service;

/// Requests handled concurrently per connection before reading pauses.
pub const MAX_IN_FLIGHT: usize = 64;

fn id_of(line: &str) -> String {
    serde_json::from_str::<Value>(line)
        .ok()
        .and_then(|v| v.get("id").and_then(Value::as_str).map(str::to_string))
        .unwrap_or_default()
}

/// Answers one line on the blocking pool. A panic inside the handler is
/// reported in-band instead of tearing down the connection.
pub async fn answer_line(service: Arc<Service>, line: String) -> Response {
    let probe = line.clone();
    match tokio::task::spawn_blocking(move || service.handle_line(&line)).await {
        Ok(r) => r,
        Err(e) => Response::failure(id_of(&probe), ErrorBody::new(ErrorCode::Internal, format!("handler failed: {e}"))),
    }
}

/// Serves newline-delimited requests from `reader` until end of stream.
/// Requests run concurrently, so responses may arrive out of order; each
/// carries the id of its request.
pub async fn serve_lines<R, W>(service: Arc<Service>, reader: R, mut writer: W) -> io::Result<()>
where
    R: AsyncBufRead + Unpin,
    W: AsyncWrite + Unpin + Send + 'static,
{
    let (tx, mut rx) = mpsc::unbounded_channel::<String>();
    let writer_task = tokio::spawn(async move {
        while let Some(mut line) = rx.recv().await {
            line.push('\n');
            writer.write_all(line.as_bytes()).await?;
            // Flush only when no other response is ready to go out.
            if rx.is_empty() {
                writer.flush().await?;
            }
        }
        writer.flush().await
    });

    let permits = Arc::new(Semaphore::new(MAX_IN_FLIGHT));
    let mut tasks = JoinSet::new();
    let mut lines = reader.lines();
    while let Some(line) = lines.next_line().await? {
        if line.trim().is_empty() {
            continue;
        }
        let permit = permits.clone().acquire_owned().await.expect("semaphore is never closed");
        let (svc, tx) = (service.clone(), tx.clone());
        tasks.spawn(async move {
            let response = answer_line(svc, line).await;
            let _ = tx.send(response.to_line());
            drop(permit);
        });
        while tasks.try_join_next().is_some() {}
    }
    while tasks.join_next().await.is_some() {}
    drop(tx);
    writer_task.await.map_err(io::Error::other)?
}

pub async fn serve_stdio(service: Arc<Service>) -> io::Result<()> {
    serve_lines(service, BufReader::new(tokio::io::stdin()), tokio::io::stdout()).await
}

/// Accepts TCP connections until `shutdown` resolves. Each connection is an
/// independent line stream over the shared service.
pub async fn serve_tcp(
    service: Arc<Service>,
    listener: TcpListener,
    shutdown: impl std::future::Future<Output = ()>,
) -> io::Result<()> {
    tokio::pin!(shutdown);
    loop {
        tokio::select! {
            _ = &mut shutdown => return Ok(()),
            accepted = listener.accept() => {
                let (stream, peer) = accepted?;
                let svc = service.clone();
                tokio::spawn(async move {
                    let (r, w) = stream.into_split();
                    if let Err(e) = serve_lines(svc, BufReader::new(r), w).await {
                        tracing::warn!(%peer, error = %e, "connection closed with error");
                    }
                });
            }
        }
    }
}

async fn rpc(State(service): State<Arc<Service>>, body: String) -> impl IntoResponse {
    let out = match serde_json::from_str::<Value>(&body) {
        Ok(Value::Array(items)) => {
            let mut set = JoinSet::new();
            for (i, item) in items.into_iter().enumerate() {
                let svc = service.clone();
                set.spawn(async move { (i, answer_line(svc, item.to_string()).await) });
            }
            let mut answers = Vec::with_capacity(set.len());
            while let Some(done) = set.join_next().await {
                answers.push(done.expect("request task does not panic"));
            }
            answers.sort_by_key(|(i, _)| *i);
            let lines: Vec<String> = answers.into_iter().map(|(_, r)| r.to_line()).collect();
            format!("[{}]", lines.join(","))
        }
        _ => answer_line(service, body).await.to_line(),
    };
    ([(header::CONTENT_TYPE, "application/json")], out)
}

/// `POST /v1/rpc` takes one request object or an array of them;
/// `GET /healthz` answers `ok`.
pub fn http_router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/v1/rpc", post(rpc))
        .route("/healthz", get(|| async { "ok" }))
        .with_state(service)
}

pub async fn serve_http(
    service: Arc<Service>,
    listener: TcpListener,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> io::Result<()> {
    tracing::info!(addr = %listener.local_addr()?, "http listening");
    axum::serve(listener, http_router(service)).with_graceful_shutdown(shutdown).await
}

/// Resolves on Ctrl-C (and SIGTERM on Unix).
pub async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    {
        let mut term = match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(s) => s,
            Err(_) => return ctrl_c.await,
        };
        tokio::select! {
            _ = ctrl_c => {},
            _ = term.recv() => {},
        }
    }
    #[cfg(not(unix))]
    ctrl_c.await;
}
