//! Deterministic stub endpoints speaking the line-JSON protocol on
//! stdin/stdout. They stand in for real model servers in tests and
//! offline runs; each runs until stdin closes.

use std::io::{BufRead, Write};

use serde_json::{json, Value};
use toolforge_core::provider::Embedder;
use toolforge_core::retriever::HashingEmbedder;
use toolforge_core::{Error, Result};

fn serve<F>(mut reply: F) -> Result<()>
where
    F: FnMut(&Value) -> Result<Value>,
{
    let stdin = std::io::stdin();
    let mut stdout = std::io::stdout().lock();
    for line in stdin.lock().lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let request: Value = serde_json::from_str(&line)
            .map_err(|e| Error::config(format!("bad request line: {e}")))?;
        let response = reply(&request)?;
        serde_json::to_writer(&mut stdout, &response).map_err(std::io::Error::from)?;
        stdout.write_all(b"\n")?;
        stdout.flush()?;
    }
    Ok(())
}

fn field<'v>(request: &'v Value, name: &str) -> Result<&'v str> {
    request
        .get(name)
        .and_then(Value::as_str)
        .ok_or_else(|| Error::config(format!("request is missing the \"{name}\" field")))
}

/// Whitespace-tokenize the response; every token gets `logprob`, except
/// that responses containing `keyword` (if set) get `hot` instead.
pub fn run_scorer(logprob: f64, keyword: Option<&str>, hot: f64) -> Result<()> {
    serve(|request| {
        let response = field(request, "response")?;
        let per_token = match keyword {
            Some(needle) if response.contains(needle) => hot,
            _ => logprob,
        };
        let tokens: Vec<&str> = response.split_whitespace().collect();
        Ok(json!({
            "tokens": tokens,
            "logprobs": vec![per_token; tokens.len()],
        }))
    })
}

/// Replay completions from a script file: line k of the JSONL holds a
/// JSON array of completion strings for the k-th request. Requests past
/// the end of the script get an empty batch.
pub fn run_generator(script: &std::path::Path) -> Result<()> {
    let text = std::fs::read_to_string(script)?;
    let mut batches: std::collections::VecDeque<Vec<String>> = std::collections::VecDeque::new();
    for (number, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let batch: Vec<String> = serde_json::from_str(line).map_err(|e| {
            Error::config(format!("{}:{}: {e}", script.display(), number + 1))
        })?;
        batches.push_back(batch);
    }
    serve(move |request| {
        request
            .get("prompt")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::config("request is missing the \"prompt\" field"))?;
        let batch = batches.pop_front().unwrap_or_default();
        Ok(json!({ "completions": batch }))
    })
}

/// The built-in hashing embedder behind the process protocol: announces
/// its dimension, then answers {"text"} requests.
pub fn run_embedder(dim: usize) -> Result<()> {
    let embedder = HashingEmbedder::new(dim)?;
    {
        let mut stdout = std::io::stdout().lock();
        serde_json::to_writer(&mut stdout, &json!({ "dim": dim })).map_err(std::io::Error::from)?;
        stdout.write_all(b"\n")?;
        stdout.flush()?;
    }
    serve(move |request| {
        let text = field(request, "text")?;
        Ok(json!({ "values": embedder.embed(text)? }))
    })
}
