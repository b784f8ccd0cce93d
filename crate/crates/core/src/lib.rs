//! Pipeline library for tool-augmented language model research.
//!
//! The crate covers the full data path of a tool-use training and
//! evaluation pipeline, with the language model itself kept behind
//! pluggable scoring/generation interfaces:
//!
//! - [`store`]: tool schemas, categories, and the persistent tool store
//! - [`callgraph`]: the bracketed tool-call response format, parsed into
//!   a dependency graph with placeholder edges
//! - [`validate`]: schema validation of parsed calls (arity, types)
//! - [`metrics`]: the four automatic evaluation aspects (tool selection,
//!   parameter correctness, compositional reasoning, interaction fluency)
//! - [`retriever`]: dense tool retrieval by cosine similarity
//! - [`curriculum`]: three-stage candidate-set assembly and exact loss
//!   evaluation from token log-probabilities
//! - [`isif`]: the iterative self-instruct loop: perplexity scoring,
//!   hard-instance filtering, prompt construction, quality gates, and
//!   dataset updates
//! - [`provider`]: scorer/generator/embedder contracts plus child-process
//!   and HTTP transports and deterministic stubs
//!
//! Everything is deterministic under a fixed seed: identical inputs and
//! seeds produce byte-identical artifacts.

pub mod callgraph;
pub mod curriculum;
pub mod dataset;
pub mod error;
mod exec;
pub mod isif;
pub mod metrics;
pub mod provider;
pub mod retriever;
pub mod seed;
pub mod store;
pub mod tokenize;
pub mod validate;

pub use dataset::Instance;
pub use error::Error;
pub use store::{ToolSchema, ToolStore, TypeTag};

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
