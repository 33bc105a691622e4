//! Batch commands and the HTTP gateway for the carenet pipeline.

pub mod commands;
pub mod server;

pub use commands::{Ctx, Format};
pub use server::{router, serve, AppState};
