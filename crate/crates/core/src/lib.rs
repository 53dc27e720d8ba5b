//! Orchestration engine for working with several AI assistants at once.
//!
//! Layers, bottom up:
//!
//! * [`driver`]: one adapter per assistant instance (OpenAI-compatible,
//!   Gemini-compatible, scripted).
//! * [`manager`]: the driver registry and its two fan-out primitives,
//!   first-successful-answer and all-answers.
//! * [`tasks`]: prompt templates, dispatch mode and reply interpretation for
//!   each concrete job.
//! * [`workflow`]: sequential, parallel and generate-verify strategies over
//!   tasks.

pub mod driver;
pub mod manager;
pub mod tasks;
pub mod workflow;
