//! Schema validation of parsed call graphs against a tool store.
//!
//! Arguments are matched to schema parameters positionally; the keys
//! written in the response are kept for diagnostics only, since corpora
//! spell them inconsistently. An argument's kind comes from one of three
//! places: literals are classified by shape, placeholders take their
//! producer's return type, nested calls take their own return type.

use std::sync::OnceLock;

use regex::Regex;

use crate::callgraph::{Call, CallGraph, Value};
use crate::store::{BaseKind, ToolStore};

/// What went wrong with one call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DefectKind {
    UnknownTool,
    ArityMismatch,
    TypeMismatch,
    /// A `%sN` argument no call produces; the argument cannot be typed.
    UnboundPlaceholder,
}

impl DefectKind {
    pub fn label(self) -> &'static str {
        match self {
            DefectKind::UnknownTool => "unknown_tool",
            DefectKind::ArityMismatch => "arity_mismatch",
            DefectKind::TypeMismatch => "type_mismatch",
            DefectKind::UnboundPlaceholder => "unbound_placeholder",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Defect {
    /// Index into [`CallGraph::calls`].
    pub call_index: usize,
    pub kind: DefectKind,
    pub message: String,
}

/// Per-graph verdicts. A call is valid when no defect names it; parse
/// errors are graph-level and do not count against any parsed call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationReport {
    pub defects: Vec<Defect>,
    pub parse_error_count: usize,
    pub total_calls: usize,
    pub valid_calls: usize,
}

impl ValidationReport {
    /// No type, arity, or unknown-tool defects.
    pub fn is_schema_clean(&self) -> bool {
        self.defects.is_empty()
    }

    /// Schema-clean and free of parse errors.
    pub fn is_clean(&self) -> bool {
        self.is_schema_clean() && self.parse_error_count == 0
    }
}

struct LiteralPatterns {
    int: Regex,
    float: Regex,
    boolean: Regex,
    date: Regex,
    time: Regex,
    datetime: Regex,
    list: Regex,
}

fn patterns() -> &'static LiteralPatterns {
    static PATTERNS: OnceLock<LiteralPatterns> = OnceLock::new();
    PATTERNS.get_or_init(|| LiteralPatterns {
        int: Regex::new(r"^[+-]?[0-9]+$").unwrap(),
        float: Regex::new(r"^[+-]?([0-9]+\.[0-9]*|\.[0-9]+)$").unwrap(),
        boolean: Regex::new(r"(?i)^(true|false)$").unwrap(),
        date: Regex::new(r"^[0-9]{4}-[0-9]{2}-[0-9]{2}$").unwrap(),
        // Clock times and informal am/pm times; a bare number is not a
        // time, so "9" stays an int while "9am" and "09:30" do not.
        time: Regex::new(r"(?i)^([0-9]{1,2}:[0-9]{2}(:[0-9]{2})?\s*(am|pm)?|[0-9]{1,2}\s*(am|pm))$")
            .unwrap(),
        datetime: Regex::new(
            r"^[0-9]{4}-[0-9]{2}-[0-9]{2}[ T][0-9]{1,2}:[0-9]{2}(:[0-9]{2})?$",
        )
        .unwrap(),
        list: Regex::new(r"(?s)^\[.*\]$").unwrap(),
    })
}

/// Classify a literal by shape. Anything unrecognized is a string.
pub fn classify_literal(text: &str) -> BaseKind {
    let p = patterns();
    let t = text.trim();
    if p.int.is_match(t) {
        BaseKind::Int
    } else if p.float.is_match(t) {
        BaseKind::Float
    } else if p.boolean.is_match(t) {
        BaseKind::Bool
    } else if p.datetime.is_match(t) {
        BaseKind::DateTime
    } else if p.date.is_match(t) {
        BaseKind::Date
    } else if p.time.is_match(t) {
        BaseKind::Time
    } else if p.list.is_match(t) {
        BaseKind::List
    } else {
        BaseKind::String
    }
}

/// Whether a parameter of kind `param` accepts a value of kind `value`.
/// String params take anything; numeric, calendar, and expression kinds
/// have the usual widenings; everything else requires equality.
pub fn kind_accepts(param: BaseKind, value: BaseKind) -> bool {
    use BaseKind::*;
    match param {
        String => true,
        Float => matches!(value, Float | Int),
        Date => matches!(value, Date | DateTime),
        Time => matches!(value, Time | DateTime),
        DateTime => matches!(value, DateTime | Date),
        // Expressions are arithmetic text over numbers, so numbers and
        // free text qualify; structured values do not.
        Expression => matches!(value, Expression | Int | Float | String),
        other => value == other,
    }
}

/// Kind of one argument value, or the defect that prevents typing it.
fn value_kind(
    graph: &CallGraph,
    store: &ToolStore,
    value: &Value,
) -> Result<BaseKind, (DefectKind, String)> {
    match value {
        Value::Literal(text) => Ok(classify_literal(text)),
        Value::Placeholder(id) => match graph.producer_of(*id) {
            Some(producer) => producer_return_kind(graph, store, producer, *id),
            None => Err((
                DefectKind::UnboundPlaceholder,
                format!("%s{id} is never produced"),
            )),
        },
        Value::Call(child) => {
            let child_call = &graph.calls[*child];
            match store.get(&child_call.name) {
                Some(schema) => Ok(schema.return_type.kind()),
                // The nested call gets its own unknown-tool defect when
                // it is visited; here the argument is simply untypable.
                None => Err((
                    DefectKind::TypeMismatch,
                    format!("nested call {} has no schema", child_call.name),
                )),
            }
        }
    }
}

fn producer_return_kind(
    graph: &CallGraph,
    store: &ToolStore,
    producer: usize,
    id: u32,
) -> Result<BaseKind, (DefectKind, String)> {
    let producer_call = &graph.calls[producer];
    match store.get(&producer_call.name) {
        Some(schema) => Ok(schema.return_type.kind()),
        None => Err((
            DefectKind::TypeMismatch,
            format!("%s{id} is produced by unknown tool {}", producer_call.name),
        )),
    }
}

fn validate_call(
    graph: &CallGraph,
    store: &ToolStore,
    index: usize,
    call: &Call,
    defects: &mut Vec<Defect>,
) {
    let schema = match store.get(&call.name) {
        Some(schema) => schema,
        None => {
            defects.push(Defect {
                call_index: index,
                kind: DefectKind::UnknownTool,
                message: format!("no tool named {}", call.name),
            });
            return;
        }
    };
    if call.args.len() != schema.params.len() {
        defects.push(Defect {
            call_index: index,
            kind: DefectKind::ArityMismatch,
            message: format!(
                "{} takes {} parameters, got {}",
                call.name,
                schema.params.len(),
                call.args.len()
            ),
        });
    }
    for (arg, param) in call.args.iter().zip(&schema.params) {
        match value_kind(graph, store, &arg.value) {
            Ok(kind) => {
                if !kind_accepts(param.ty.kind(), kind) {
                    defects.push(Defect {
                        call_index: index,
                        kind: DefectKind::TypeMismatch,
                        message: format!(
                            "{}.{} expects {}, got {} value for key {:?}",
                            call.name,
                            param.name,
                            param.ty.kind().name(),
                            kind.name(),
                            arg.key,
                        ),
                    });
                }
            }
            Err((kind, message)) => defects.push(Defect {
                call_index: index,
                kind,
                message: format!("{}.{}: {message}", call.name, param.name),
            }),
        }
    }
}

/// Validate every call (nested included) against the store.
pub fn validate_calls(graph: &CallGraph, store: &ToolStore) -> ValidationReport {
    let mut defects = Vec::new();
    for (index, call) in graph.calls.iter().enumerate() {
        validate_call(graph, store, index, call, &mut defects);
    }
    let total_calls = graph.calls.len();
    let valid_calls = (0..total_calls)
        .filter(|i| defects.iter().all(|d| d.call_index != *i))
        .count();
    ValidationReport {
        defects,
        parse_error_count: graph.parse_errors.len(),
        total_calls,
        valid_calls,
    }
}
