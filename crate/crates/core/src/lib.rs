//! Core library: archive ingestion, LLM access, prompt templates, the staged
//! analysis pipeline, artifact caching, and report assembly.

pub mod artifact;
pub mod cache;
pub mod corpus;
pub mod llm;
pub mod model;
pub mod prompts;
pub mod report;
pub mod pipeline;
pub mod text;
#[cfg(any(test, feature = "test-support"))]
pub mod testkit;
