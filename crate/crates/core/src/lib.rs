//! Evaluation harness for chain-of-thought stance detection.
//!
//! The pipeline: load a dataset ([`ingest`]), build DQA or StSQA prompts
//! ([`prompt`], [`qaps`]), send them through a cached backend
//! ([`gateway`]), map replies to labels ([`normalize`]) and score them
//! ([`metrics`]). [`runner`] ties the stages together and writes reports.

pub mod gateway;
pub mod ingest;
pub mod metrics;
pub mod model;
pub mod normalize;
pub mod prompt;
pub mod qaps;
pub mod runner;
