//! Uncertainty-aware binary structured-data extraction from free-text reports.
//!
//! A report is paired with an ensemble of semantically equivalent prompts, each
//! prompt is sent to a chat-completion backend, and the per-prompt yes-probabilities
//! are aggregated into a single decision with an uncertainty estimate. Four
//! aggregation strategies are provided: uniform weights, per-label linearly
//! optimized weights, case-dynamic weights from a small MLP, and an LLM judge
//! that reads all answers and explanations and emits a confidence category.
//!
//! Downstream, [`evalkit`] computes per-label and macro-averaged classification
//! metrics, applies uncertainty filtering (thresholded and capped), and emits
//! calibration artifacts.

pub mod aggregator;
pub mod agent;
pub mod config;
pub mod corpus;
pub mod error;
pub mod evalkit;
pub mod gateway;
pub mod pipeline;
pub mod prompt_kit;
pub mod weight_opt;

pub use error::{Error, Result};
