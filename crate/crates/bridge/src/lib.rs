//! JSON over HTTP between the simulator and a policy process.
//!
//! `POST /infer` takes a [`PolicyRequest`](lanebench_core::policy::PolicyRequest)
//! and returns a [`PolicyResponse`](lanebench_core::policy::PolicyResponse).
//! `GET /health` returns `{"status": "ok", "model_id": ...}`.

mod client;
mod server;

pub use client::{HttpPolicy, DEFAULT_TIMEOUT};
pub use server::{serve, ServeError, ServerHandle};
