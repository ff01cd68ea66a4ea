//! Networked parts of airhmi: the WebSocket server that runs the gesture
//! pipeline and the cursor client that follows it.

pub mod client;
pub mod config;
pub mod server;

pub use client::{spawn_client, run_client, Applied, ClientHandle, ClientOptions, ClientReport, ClientStatus};
pub use config::{ConfigError, ServerConfig, SourceConfig};
pub use server::{serve, serve_with, FrameSource, ServerError, ServerHandle, TapRecord};
