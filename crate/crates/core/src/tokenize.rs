//! The canonical tokenizer shared by the ROUGE metrics, the dedup filter,
//! and the built-in retriever embedder.
//!
//! One tokenizer everywhere keeps the fluency scores, the near-duplicate
//! threshold, and the retrieval vocabulary mutually consistent.

/// Lowercase, split at every non-alphanumeric character, drop the
/// punctuation itself. `"Schedule 2023-06-01, now!"` becomes
/// `["schedule", "2023", "06", "01", "now"]`. Placeholder references
/// tokenize like any other text (`"%s3"` -> `["s3"]`).
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .map(str::to_owned)
        .collect()
}
