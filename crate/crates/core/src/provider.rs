//! Pluggable model endpoints: scoring, generation, and embedding.
//!
//! The pipeline never runs a model itself. It talks to three kinds of
//! providers through line-delimited JSON, either over a child process's
//! standard streams or over HTTP POST:
//!
//! - scorer: `{"prompt", "response"}` → `{"tokens", "logprobs"}`
//! - generator: `{"prompt", "n"}` → `{"completions": [text, ...]}`
//! - embedder: `{"text"}` → `{"values": [...]}`, preceded by a
//!   handshake declaring `{"dim": N}`
//!
//! In-process stubs used by tests and offline runs live here too.

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use serde_json::{json, Value};

use crate::curriculum::TokenLogProbs;
use crate::error::Error;
use crate::Result;

/// Scores a reference response token-by-token under a prompt.
pub trait Scorer: Send + Sync {
    fn score(&self, prompt: &str, response: &str) -> Result<TokenLogProbs>;
}

/// Produces `n` completions for a self-instruct prompt.
pub trait Generator: Send + Sync {
    fn generate(&self, prompt: &str, n: usize) -> Result<Vec<String>>;
}

/// Maps text to a fixed-dimension dense vector.
pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>>;
}

/// One request/reply transport. `kind` names the endpoint in errors.
pub trait Endpoint: Send + Sync {
    fn kind(&self) -> &'static str;
    fn roundtrip(&self, request: &Value) -> Result<Value>;
    /// First message the provider volunteers (used by embedders to
    /// declare their dimension). HTTP endpoints request it explicitly.
    fn handshake(&self) -> Result<Value>;
}

struct ProcessIo {
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
    child: Child,
}

/// A provider running as a child process, one JSON object per line in
/// each direction. The mutex serializes concurrent requests.
pub struct ProcessEndpoint {
    kind: &'static str,
    command: String,
    io: Mutex<ProcessIo>,
}

impl ProcessEndpoint {
    /// Spawn `command_line` (split on whitespace; no shell quoting).
    pub fn spawn(kind: &'static str, command_line: &str) -> Result<ProcessEndpoint> {
        let mut parts = command_line.split_whitespace();
        let program = parts
            .next()
            .ok_or_else(|| Error::endpoint(kind, "empty command line"))?;
        let mut child = Command::new(program)
            .args(parts)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::endpoint(kind, format!("spawn {command_line:?}: {e}")))?;
        let stdin = child.stdin.take().expect("stdin was piped");
        let stdout = BufReader::new(child.stdout.take().expect("stdout was piped"));
        Ok(ProcessEndpoint {
            kind,
            command: command_line.to_owned(),
            io: Mutex::new(ProcessIo {
                stdin,
                stdout,
                child,
            }),
        })
    }

    fn read_reply(&self, io: &mut ProcessIo) -> Result<Value> {
        let mut line = String::new();
        let n = io
            .stdout
            .read_line(&mut line)
            .map_err(|e| Error::endpoint(self.kind, format!("read from {}: {e}", self.command)))?;
        if n == 0 {
            return Err(Error::endpoint(
                self.kind,
                format!("{} closed its stdout", self.command),
            ));
        }
        serde_json::from_str(&line)
            .map_err(|e| Error::endpoint(self.kind, format!("malformed reply line: {e}")))
    }
}

impl Endpoint for ProcessEndpoint {
    fn kind(&self) -> &'static str {
        self.kind
    }

    fn roundtrip(&self, request: &Value) -> Result<Value> {
        let mut io = self.io.lock().expect("endpoint mutex");
        let mut line = serde_json::to_string(request)
            .map_err(|e| Error::endpoint(self.kind, e.to_string()))?;
        line.push('\n');
        io.stdin
            .write_all(line.as_bytes())
            .and_then(|_| io.stdin.flush())
            .map_err(|e| Error::endpoint(self.kind, format!("write to {}: {e}", self.command)))?;
        self.read_reply(&mut io)
    }

    fn handshake(&self) -> Result<Value> {
        let mut io = self.io.lock().expect("endpoint mutex");
        self.read_reply(&mut io)
    }
}

impl Drop for ProcessEndpoint {
    fn drop(&mut self) {
        if let Ok(mut io) = self.io.lock() {
            let _ = io.child.kill();
            let _ = io.child.wait();
        }
    }
}

/// A provider behind an HTTP URL; every request is one POST.
pub struct HttpEndpoint {
    kind: &'static str,
    url: String,
}

impl HttpEndpoint {
    pub fn new(kind: &'static str, url: impl Into<String>) -> HttpEndpoint {
        HttpEndpoint {
            kind,
            url: url.into(),
        }
    }
}

impl Endpoint for HttpEndpoint {
    fn kind(&self) -> &'static str {
        self.kind
    }

    fn roundtrip(&self, request: &Value) -> Result<Value> {
        let mut response = ureq::post(&self.url)
            .send_json(request)
            .map_err(|e| Error::endpoint(self.kind, format!("POST {}: {e}", self.url)))?;
        response
            .body_mut()
            .read_json::<Value>()
            .map_err(|e| Error::endpoint(self.kind, format!("malformed reply body: {e}")))
    }

    fn handshake(&self) -> Result<Value> {
        self.roundtrip(&json!({"handshake": true}))
    }
}

fn field<'v>(kind: &'static str, reply: &'v Value, name: &str) -> Result<&'v Value> {
    reply
        .get(name)
        .ok_or_else(|| Error::endpoint(kind, format!("reply missing {name:?} field")))
}

fn string_array(kind: &'static str, value: &Value, name: &str) -> Result<Vec<String>> {
    value
        .as_array()
        .and_then(|items| {
            items
                .iter()
                .map(|v| v.as_str().map(str::to_owned))
                .collect::<Option<Vec<_>>>()
        })
        .ok_or_else(|| Error::endpoint(kind, format!("{name:?} is not an array of strings")))
}

fn number_array(kind: &'static str, value: &Value, name: &str) -> Result<Vec<f64>> {
    value
        .as_array()
        .and_then(|items| items.iter().map(Value::as_f64).collect::<Option<Vec<_>>>())
        .ok_or_else(|| Error::endpoint(kind, format!("{name:?} is not an array of numbers")))
}

/// [`Scorer`] over any transport.
pub struct ScorerClient<E: Endpoint> {
    endpoint: E,
}

impl<E: Endpoint> ScorerClient<E> {
    pub fn new(endpoint: E) -> ScorerClient<E> {
        ScorerClient { endpoint }
    }
}

impl<E: Endpoint> Scorer for ScorerClient<E> {
    fn score(&self, prompt: &str, response: &str) -> Result<TokenLogProbs> {
        let kind = self.endpoint.kind();
        let reply = self
            .endpoint
            .roundtrip(&json!({"prompt": prompt, "response": response}))?;
        let tokens = string_array(kind, field(kind, &reply, "tokens")?, "tokens")?;
        let logprobs = number_array(kind, field(kind, &reply, "logprobs")?, "logprobs")?;
        TokenLogProbs::new(tokens, logprobs)
    }
}

/// [`Generator`] over any transport.
pub struct GeneratorClient<E: Endpoint> {
    endpoint: E,
}

impl<E: Endpoint> GeneratorClient<E> {
    pub fn new(endpoint: E) -> GeneratorClient<E> {
        GeneratorClient { endpoint }
    }
}

impl<E: Endpoint> Generator for GeneratorClient<E> {
    fn generate(&self, prompt: &str, n: usize) -> Result<Vec<String>> {
        let kind = self.endpoint.kind();
        let reply = self
            .endpoint
            .roundtrip(&json!({"prompt": prompt, "n": n}))?;
        string_array(kind, field(kind, &reply, "completions")?, "completions")
    }
}

/// [`Embedder`] over any transport; performs the dim handshake at
/// construction and checks every reply against it.
pub struct EmbedderClient<E: Endpoint> {
    endpoint: E,
    dim: usize,
}

impl<E: Endpoint> EmbedderClient<E> {
    pub fn new(endpoint: E) -> Result<EmbedderClient<E>> {
        let kind = endpoint.kind();
        let hello = endpoint.handshake()?;
        let dim = field(kind, &hello, "dim")?
            .as_u64()
            .ok_or_else(|| Error::endpoint(kind, "\"dim\" is not a positive integer"))?
            as usize;
        if dim == 0 {
            return Err(Error::endpoint(kind, "declared dimension is zero"));
        }
        Ok(EmbedderClient { endpoint, dim })
    }
}

impl<E: Endpoint> Embedder for EmbedderClient<E> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        let kind = self.endpoint.kind();
        let reply = self.endpoint.roundtrip(&json!({"text": text}))?;
        let values = number_array(kind, field(kind, &reply, "values")?, "values")?;
        if values.len() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                got: values.len(),
            });
        }
        Ok(values)
    }
}

/// Test scorer: whitespace tokens, one fixed logprob each.
pub struct ConstScorer {
    pub logprob: f64,
}

impl Scorer for ConstScorer {
    fn score(&self, _prompt: &str, response: &str) -> Result<TokenLogProbs> {
        let tokens: Vec<String> = response.split_whitespace().map(str::to_owned).collect();
        let logprobs = vec![self.logprob; tokens.len()];
        TokenLogProbs::new(tokens, logprobs)
    }
}

/// Test scorer that marks responses mentioning a keyword as hard: they
/// get the `hot` logprob (more negative = higher perplexity), everything
/// else gets `cold`.
pub struct KeywordScorer {
    pub keyword: String,
    pub hot: f64,
    pub cold: f64,
}

impl Scorer for KeywordScorer {
    fn score(&self, _prompt: &str, response: &str) -> Result<TokenLogProbs> {
        let tokens: Vec<String> = response.split_whitespace().map(str::to_owned).collect();
        let logprob = if response.contains(&self.keyword) {
            self.hot
        } else {
            self.cold
        };
        let logprobs = vec![logprob; tokens.len()];
        TokenLogProbs::new(tokens, logprobs)
    }
}

/// Test generator replaying a scripted sequence of completion batches;
/// exhausted scripts yield empty batches. The requested `n` is ignored.
pub struct ReplayGenerator {
    script: Mutex<VecDeque<Vec<String>>>,
}

impl ReplayGenerator {
    pub fn new(batches: Vec<Vec<String>>) -> ReplayGenerator {
        ReplayGenerator {
            script: Mutex::new(batches.into()),
        }
    }
}

impl Generator for ReplayGenerator {
    fn generate(&self, _prompt: &str, _n: usize) -> Result<Vec<String>> {
        let mut script = self.script.lock().expect("replay mutex");
        Ok(script.pop_front().unwrap_or_default())
    }
}
