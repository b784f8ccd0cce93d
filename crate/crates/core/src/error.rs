//! Error types shared across the pipeline.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: malformed JSON: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },

    #[error("line {line}: duplicate tool name {name:?}")]
    DuplicateTool { line: usize, name: String },

    #[error("line {line}: {message}")]
    InvalidRecord { line: usize, message: String },

    #[error("unknown type tag {tag:?}")]
    UnknownTypeTag { tag: String },

    #[error("unknown category {category:?}")]
    UnknownCategory { category: String },

    #[error("unknown tool {tool:?}{context}")]
    UnknownTool { tool: String, context: String },

    #[error("sample bounds ({min}, {max}) invalid for store of {available} tools")]
    SampleBounds {
        min: usize,
        max: usize,
        available: usize,
    },

    #[error("duplicate instance id {id:?}")]
    DuplicateInstance { id: String },

    #[error("empty evaluation set")]
    EmptyEvaluationSet,

    #[error("prediction set does not cover instance id {id:?}")]
    MissingPrediction { id: String },

    #[error("empty token sequence")]
    EmptyTokenSequence,

    #[error("token/logprob length mismatch: {tokens} tokens, {logprobs} logprobs")]
    LogProbLength { tokens: usize, logprobs: usize },

    #[error("logprob at index {index} is positive ({value})")]
    PositiveLogProb { index: usize, value: f64 },

    #[error("empty tool index")]
    EmptyIndex,

    #[error("embedding for {tool:?} failed: {message}")]
    EmbedderFailure { tool: String, message: String },

    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("self-instruct prompt needs between {min} and {max} tools, got {got}")]
    PromptToolCount { min: usize, max: usize, got: usize },

    #[error("stage schedule has zero epochs in every stage")]
    EmptySchedule,

    #[error("invalid configuration: {message}")]
    Config { message: String },

    #[error("{endpoint} endpoint failure{context}: {message}")]
    Endpoint {
        endpoint: &'static str,
        context: String,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(message: impl Into<String>) -> Self {
        Error::Config {
            message: message.into(),
        }
    }

    pub fn endpoint(endpoint: &'static str, message: impl Into<String>) -> Self {
        Error::Endpoint {
            endpoint,
            context: String::new(),
            message: message.into(),
        }
    }

    /// Attach an instance id (or similar) to an endpoint failure so the
    /// caller can tell which request failed.
    pub fn endpoint_for(
        endpoint: &'static str,
        id: impl std::fmt::Display,
        message: impl Into<String>,
    ) -> Self {
        Error::Endpoint {
            endpoint,
            context: format!(" for {id}"),
            message: message.into(),
        }
    }
}
