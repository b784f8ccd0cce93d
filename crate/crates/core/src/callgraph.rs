//! Bracketed tool-call parsing and dependency graphs.
//!
//! A model response is free text interleaved with calls of the form
//!
//! ```text
//! [NAME(key: value, key2: value2) → %s1]
//! ```
//!
//! where `NAME` is an uppercase token, values are literals, `%sN`
//! placeholders referring to an earlier call's result, or whole nested
//! calls, and the clause after the arrow (`→` or `->`) names where the
//! result goes: a `%sN` binding or a bare literal. The arrow clause is
//! optional. Everything after the last `###` is the final answer and is
//! never parsed for calls.
//!
//! Parsing is infallible: malformed call attempts are recorded as
//! [`ParseError`]s and their text is kept as free text, so a response
//! always round-trips through [`CallGraph::render`].

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt;

/// An argument value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Value {
    /// Verbatim text. A `%sN` embedded in longer text stays literal and
    /// creates no dependency edge.
    Literal(String),
    /// A standalone `%sN` reference to another call's result.
    Placeholder(u32),
    /// A nested call, by index into [`CallGraph::calls`].
    Call(usize),
}

/// One `key: value` argument.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Arg {
    pub key: String,
    pub value: Value,
}

/// The clause after the arrow.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CallResult {
    Placeholder(u32),
    Literal(String),
}

/// A parsed call. `offset` is the char position of its opening `[`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Call {
    pub name: String,
    pub args: Vec<Arg>,
    pub result: Option<CallResult>,
    pub offset: usize,
}

/// A top-level piece of the response body. Nested calls do not appear
/// here; they are reachable through their parent's arguments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Segment {
    Text(String),
    Call(usize),
}

/// A recoverable syntax defect, positioned by char offset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "offset {}: {}", self.offset, self.message)
    }
}

/// A parsed response: the call arena in appearance order (by opening
/// `[`, so parents precede their nested children), dependency edges, and
/// enough surrounding text to reproduce the input.
#[derive(Debug, Clone, PartialEq)]
pub struct CallGraph {
    pub calls: Vec<Call>,
    pub segments: Vec<Segment>,
    /// Deduplicated `(producer, consumer)` pairs: the producer must run
    /// before the consumer.
    pub edges: Vec<(usize, usize)>,
    pub parse_errors: Vec<ParseError>,
    /// True when some consumed placeholder has zero or multiple
    /// producers, so the data flow cannot be trusted.
    pub unresolved: bool,
    producers: BTreeMap<u32, Vec<usize>>,
    final_tail: Option<String>,
}

impl CallGraph {
    /// Parse a response. Never fails; see [`CallGraph::parse_errors`].
    pub fn parse(text: &str) -> CallGraph {
        let (body, tail) = match text.rfind("###") {
            Some(i) => (&text[..i], Some(text[i..].to_owned())),
            None => (text, None),
        };
        let mut parser = Parser {
            chars: body.chars().collect(),
            pos: 0,
            calls: Vec::new(),
            errors: Vec::new(),
        };
        let segments = parser.parse_body();

        let mut producers: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, call) in parser.calls.iter().enumerate() {
            if let Some(CallResult::Placeholder(id)) = call.result {
                producers.entry(id).or_default().push(i);
            }
        }
        let mut unresolved = false;
        let mut edge_set: BTreeSet<(usize, usize)> = BTreeSet::new();
        for (i, call) in parser.calls.iter().enumerate() {
            for arg in &call.args {
                match &arg.value {
                    Value::Placeholder(id) => match producers.get(id).map(Vec::as_slice) {
                        Some([single]) => {
                            edge_set.insert((*single, i));
                        }
                        Some(multiple) => {
                            unresolved = true;
                            edge_set.insert((multiple[0], i));
                        }
                        None => unresolved = true,
                    },
                    Value::Call(child) => {
                        edge_set.insert((*child, i));
                    }
                    Value::Literal(_) => {}
                }
            }
        }

        CallGraph {
            calls: parser.calls,
            segments,
            edges: edge_set.into_iter().collect(),
            parse_errors: parser.errors,
            unresolved,
            producers,
            final_tail: tail,
        }
    }

    /// Text after the last `###`, with the delimiter and outer
    /// whitespace removed. `None` when the response has no `###`.
    pub fn final_answer(&self) -> Option<&str> {
        self.final_tail
            .as_deref()
            .map(|t| t.strip_prefix("###").unwrap_or(t).trim())
    }

    /// Tool names in appearance order, duplicates preserved.
    pub fn tool_names(&self) -> Vec<&str> {
        self.calls.iter().map(|c| c.name.as_str()).collect()
    }

    /// The call that binds `%sN`, when exactly determinable. With
    /// multiple producers the first wins.
    pub fn producer_of(&self, id: u32) -> Option<usize> {
        self.producers.get(&id).and_then(|v| v.first()).copied()
    }

    pub fn producer_count(&self, id: u32) -> usize {
        self.producers.get(&id).map_or(0, Vec::len)
    }

    /// Execution order: Kahn's algorithm with smallest-index tie-break,
    /// so independent calls keep appearance order. Returns the order and
    /// a degraded flag; unresolved or cyclic graphs fall back to plain
    /// appearance order with the flag set.
    pub fn topo_order(&self) -> (Vec<usize>, bool) {
        let n = self.calls.len();
        if self.unresolved {
            return ((0..n).collect(), true);
        }
        let mut indegree = vec![0usize; n];
        let mut outgoing: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &(a, b) in &self.edges {
            outgoing[a].push(b);
            indegree[b] += 1;
        }
        let mut ready: BinaryHeap<Reverse<usize>> = (0..n)
            .filter(|&i| indegree[i] == 0)
            .map(Reverse)
            .collect();
        let mut order = Vec::with_capacity(n);
        while let Some(Reverse(i)) = ready.pop() {
            order.push(i);
            for &j in &outgoing[i] {
                indegree[j] -= 1;
                if indegree[j] == 0 {
                    ready.push(Reverse(j));
                }
            }
        }
        if order.len() == n {
            (order, false)
        } else {
            ((0..n).collect(), true)
        }
    }

    /// Tool names in execution order (see [`CallGraph::topo_order`]).
    pub fn topo_tool_names(&self) -> Vec<&str> {
        let (order, _) = self.topo_order();
        order.iter().map(|&i| self.calls[i].name.as_str()).collect()
    }

    /// Reproduce the response: free text verbatim, calls in canonical
    /// spelling (`→` arrow, single-space separators). Rendering then
    /// reparsing yields the same call structure.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for segment in &self.segments {
            match segment {
                Segment::Text(t) => out.push_str(t),
                Segment::Call(i) => out.push_str(&self.render_call(*i)),
            }
        }
        if let Some(tail) = &self.final_tail {
            out.push_str(tail);
        }
        out
    }

    /// Canonical spelling of one call (recursing into nested calls).
    pub fn render_call(&self, idx: usize) -> String {
        let call = &self.calls[idx];
        let mut out = format!("[{}(", call.name);
        for (i, arg) in call.args.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            out.push_str(&arg.key);
            out.push_str(": ");
            match &arg.value {
                Value::Literal(s) => out.push_str(s),
                Value::Placeholder(id) => {
                    out.push_str("%s");
                    out.push_str(&id.to_string());
                }
                Value::Call(child) => out.push_str(&self.render_call(*child)),
            }
        }
        out.push(')');
        match &call.result {
            Some(CallResult::Placeholder(id)) => {
                out.push_str(" → %s");
                out.push_str(&id.to_string());
            }
            Some(CallResult::Literal(s)) => {
                out.push_str(" → ");
                out.push_str(s);
            }
            None => {}
        }
        out.push(']');
        out
    }
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
    calls: Vec<Call>,
    errors: Vec<ParseError>,
}

impl Parser {
    fn parse_body(&mut self) -> Vec<Segment> {
        let mut segments = Vec::new();
        let mut pending = String::new();
        while self.pos < self.chars.len() {
            if self.chars[self.pos] == '[' && self.looks_like_call(self.pos) {
                let start = self.pos;
                let arena_mark = self.calls.len();
                match self.parse_call() {
                    Ok(idx) => {
                        if !pending.is_empty() {
                            segments.push(Segment::Text(std::mem::take(&mut pending)));
                        }
                        segments.push(Segment::Call(idx));
                    }
                    Err(err) => {
                        self.calls.truncate(arena_mark);
                        self.errors.push(err);
                        // Skip to just past the next ']' (or the end) and
                        // keep the attempted span as free text.
                        let end = self.chars[start + 1..]
                            .iter()
                            .position(|&c| c == ']')
                            .map(|i| start + i + 2)
                            .unwrap_or(self.chars.len());
                        pending.extend(&self.chars[start..end]);
                        self.pos = end;
                    }
                }
            } else {
                pending.push(self.chars[self.pos]);
                self.pos += 1;
            }
        }
        if !pending.is_empty() {
            segments.push(Segment::Text(pending));
        }
        segments
    }

    /// True when the text at `at` opens as `[ NAME (`. Anything else is
    /// free text, not a failed call.
    fn looks_like_call(&self, at: usize) -> bool {
        let mut i = at + 1;
        while i < self.chars.len() && self.chars[i].is_whitespace() {
            i += 1;
        }
        if !(i < self.chars.len() && self.chars[i].is_ascii_uppercase()) {
            return false;
        }
        while i < self.chars.len()
            && (self.chars[i].is_ascii_uppercase()
                || self.chars[i].is_ascii_digit()
                || self.chars[i] == '_')
        {
            i += 1;
        }
        while i < self.chars.len() && self.chars[i].is_whitespace() {
            i += 1;
        }
        i < self.chars.len() && self.chars[i] == '('
    }

    fn parse_call(&mut self) -> Result<usize, ParseError> {
        let offset = self.pos;
        self.pos += 1;
        self.eat_ws();
        let name = self.parse_tool_name();
        self.eat_ws();
        if !self.eat('(') {
            return Err(self.err("expected '(' after tool name"));
        }
        // Reserve the arena slot before parsing arguments so a parent's
        // index is always smaller than its nested children's.
        let idx = self.calls.len();
        self.calls.push(Call {
            name,
            args: Vec::new(),
            result: None,
            offset,
        });
        let mut args = Vec::new();
        self.eat_ws();
        if !self.eat(')') {
            loop {
                self.eat_ws();
                let key = self.parse_ident();
                if key.is_empty() {
                    return Err(self.err("expected parameter name"));
                }
                self.eat_ws();
                if !self.eat(':') {
                    return Err(self.err("expected ':' after parameter name"));
                }
                self.eat_ws();
                let value = self.parse_value()?;
                args.push(Arg { key, value });
                self.eat_ws();
                if self.eat(',') {
                    continue;
                }
                if self.eat(')') {
                    break;
                }
                return Err(self.err("expected ',' or ')' in argument list"));
            }
        }
        self.eat_ws();
        let result = if self.eat_arrow() {
            self.eat_ws();
            Some(self.parse_result()?)
        } else {
            None
        };
        self.eat_ws();
        if !self.eat(']') {
            return Err(self.err("expected ']' to close call"));
        }
        self.calls[idx].args = args;
        self.calls[idx].result = result;
        Ok(idx)
    }

    fn parse_value(&mut self) -> Result<Value, ParseError> {
        if self.peek() == Some('[') && self.looks_like_call(self.pos) {
            let saved_pos = self.pos;
            let arena_mark = self.calls.len();
            match self.parse_call() {
                Ok(idx) => return Ok(Value::Call(idx)),
                Err(_) => {
                    // Not actually a nested call; rewind and read the
                    // bracketed text as a literal.
                    self.calls.truncate(arena_mark);
                    self.pos = saved_pos;
                }
            }
        }
        if let Some(id) = self.try_placeholder(&[',', ')']) {
            return Ok(Value::Placeholder(id));
        }
        let literal = self.scan_literal(true);
        if literal.is_empty() {
            return Err(self.err("expected a value"));
        }
        Ok(Value::Literal(literal))
    }

    fn parse_result(&mut self) -> Result<CallResult, ParseError> {
        if let Some(id) = self.try_placeholder(&[']']) {
            return Ok(CallResult::Placeholder(id));
        }
        let literal = self.scan_literal(false);
        if literal.is_empty() {
            return Err(self.err("expected a result after the arrow"));
        }
        Ok(CallResult::Literal(literal))
    }

    /// Consume `%sN` only when it stands alone: digits directly after
    /// `%s`, then (past whitespace) one of `delims`. `%s0` and ids too
    /// large for u32 fall through to literal parsing.
    fn try_placeholder(&mut self, delims: &[char]) -> Option<u32> {
        if !(self.peek() == Some('%') && self.chars.get(self.pos + 1) == Some(&'s')) {
            return None;
        }
        let mut i = self.pos + 2;
        let digits_start = i;
        while i < self.chars.len() && self.chars[i].is_ascii_digit() {
            i += 1;
        }
        if i == digits_start {
            return None;
        }
        let id: u32 = self.chars[digits_start..i]
            .iter()
            .collect::<String>()
            .parse()
            .ok()?;
        if id == 0 {
            return None;
        }
        let mut probe = i;
        while probe < self.chars.len() && self.chars[probe].is_whitespace() {
            probe += 1;
        }
        if probe < self.chars.len() && delims.contains(&self.chars[probe]) {
            self.pos = i;
            Some(id)
        } else {
            None
        }
    }

    /// Read literal text up to an unnested `)` or `]` (plus `,` when
    /// `stop_at_comma`). Balanced brackets inside are kept, so list-like
    /// values such as `[1, 2, 3]` survive whole.
    fn scan_literal(&mut self, stop_at_comma: bool) -> String {
        let start = self.pos;
        let mut depth = 0usize;
        while let Some(c) = self.peek() {
            if depth == 0 && (c == ')' || c == ']' || (stop_at_comma && c == ',')) {
                break;
            }
            match c {
                '(' | '[' => depth += 1,
                ')' | ']' => depth -= 1,
                _ => {}
            }
            self.pos += 1;
        }
        let literal: String = self.chars[start..self.pos].iter().collect();
        literal.trim_end().to_owned()
    }

    /// `looks_like_call` vetted the shape, so this cannot come up empty.
    fn parse_tool_name(&mut self) -> String {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_ascii_uppercase() || c.is_ascii_digit() || c == '_' {
                self.pos += 1;
            } else {
                break;
            }
        }
        self.chars[start..self.pos].iter().collect()
    }

    fn parse_ident(&mut self) -> String {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_ascii_alphanumeric() || c == '_' {
                self.pos += 1;
            } else {
                break;
            }
        }
        self.chars[start..self.pos].iter().collect()
    }

    fn eat_arrow(&mut self) -> bool {
        if self.peek() == Some('→') {
            self.pos += 1;
            return true;
        }
        if self.peek() == Some('-') && self.chars.get(self.pos + 1) == Some(&'>') {
            self.pos += 2;
            return true;
        }
        false
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn eat_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn err(&self, message: &str) -> ParseError {
        ParseError {
            offset: self.pos,
            message: message.to_owned(),
        }
    }
}
