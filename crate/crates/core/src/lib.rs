//! Batch pipeline and library for measuring how alignment changes LLM
//! response distributions (diversity, coverage, stance pluralism) and for
//! constructing in-context alignment prompts that make a base model mimic
//! an aligned teacher.

pub mod config;
pub mod corpus;
pub mod error;
pub mod judge;
pub mod metrics;
pub mod mockserver;
pub mod modelio;
pub mod pipeline;
pub mod promptkit;
pub mod report;
pub mod retrieval;
pub mod runstore;
pub mod textnorm;

pub use error::{Error, Result};
