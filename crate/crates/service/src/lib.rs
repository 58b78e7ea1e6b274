//! Environment service: one shared [`Service`] behind standard-stream, TCP
//! and HTTP transports.

pub mod dispatch;
pub mod judge;
pub mod transport;

pub use dispatch::{session_seed, Service, ServiceConfig, V_MIN_ENV};
pub use judge::{judge_from_env, HttpJudge, JUDGE_URL_ENV};
pub use transport::{http_router, serve_http, serve_lines, serve_stdio, serve_tcp, shutdown_signal};
