//! Actions layer of multimind: configuration, the engine that maps user
//! actions onto tasks and workflows, chat sessions, and the loopback JSON
//! API.

pub mod annotate;
pub mod api;
pub mod chat;
pub mod config;
pub mod engine;
pub mod protocol;

pub use config::{load_config, ConfigError, EngineConfig};
pub use engine::Engine;
