//! Tool schemas, categories, and the persistent tool store.
//!
//! The store file is UTF-8 JSONL, one tool per line, with keys exactly
//! `{name, params, return_type, category, demonstration}`; `params` is an
//! array of `{name, type}` objects. Unknown keys are rejected.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::seed::rng_for_seed;
use crate::Result;

/// Base kind behind every type tag. Validation compares argument values
/// against base kinds, never against raw tag spellings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BaseKind {
    String,
    Int,
    Float,
    Bool,
    Date,
    Time,
    DateTime,
    List,
    Expression,
    Entity,
}

impl BaseKind {
    pub fn name(self) -> &'static str {
        match self {
            BaseKind::String => "string",
            BaseKind::Int => "int",
            BaseKind::Float => "float",
            BaseKind::Bool => "bool",
            BaseKind::Date => "date",
            BaseKind::Time => "time",
            BaseKind::DateTime => "datetime",
            BaseKind::List => "list",
            BaseKind::Expression => "expression",
            BaseKind::Entity => "entity",
        }
    }
}

/// Closed alias table. Domain spellings harvested from real tool
/// demonstrations, each resolving to exactly one base kind.
const ALIASES: &[(&str, BaseKind)] = &[
    ("string", BaseKind::String),
    ("int", BaseKind::Int),
    ("float", BaseKind::Float),
    ("bool", BaseKind::Bool),
    ("date", BaseKind::Date),
    ("time", BaseKind::Time),
    ("datetime", BaseKind::DateTime),
    ("list", BaseKind::List),
    ("expression", BaseKind::Expression),
    ("entity", BaseKind::Entity),
    ("user", BaseKind::String),
    ("city", BaseKind::String),
    ("place", BaseKind::String),
    ("path", BaseKind::Entity),
    ("paths", BaseKind::List),
    ("ticket", BaseKind::Entity),
    ("doctor", BaseKind::Entity),
    ("record", BaseKind::String),
    ("weather", BaseKind::Entity),
    ("money", BaseKind::Float),
    ("cost", BaseKind::Float),
    ("temperature", BaseKind::Float),
    ("humidity", BaseKind::Float),
    ("speed", BaseKind::Float),
    ("rainfall", BaseKind::Float),
    ("value", BaseKind::Float),
    ("item", BaseKind::Entity),
    ("medical", BaseKind::Entity),
    ("disease", BaseKind::String),
    ("celsius", BaseKind::Float),
    ("fahrenheit", BaseKind::Float),
];

/// A parameter or return type: the raw spelling plus its resolved base
/// kind. Serializes as the raw spelling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeTag {
    raw: String,
    kind: BaseKind,
}

impl TypeTag {
    pub fn parse(tag: &str) -> Result<TypeTag> {
        let lowered = tag.trim().to_ascii_lowercase();
        ALIASES
            .iter()
            .find(|(alias, _)| *alias == lowered)
            .map(|(_, kind)| TypeTag {
                raw: lowered.clone(),
                kind: *kind,
            })
            .ok_or(Error::UnknownTypeTag {
                tag: tag.to_owned(),
            })
    }

    pub fn raw(&self) -> &str {
        &self.raw
    }

    pub fn kind(&self) -> BaseKind {
        self.kind
    }
}

impl Serialize for TypeTag {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.raw)
    }
}

impl<'de> Deserialize<'de> for TypeTag {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        TypeTag::parse(&raw).map_err(serde::de::Error::custom)
    }
}

/// One named, typed parameter of a tool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamSpec {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: TypeTag,
}

/// A tool's schema: name, typed parameters, return type, category, and
/// the demonstration line shown to models.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolSchema {
    pub name: String,
    pub params: Vec<ParamSpec>,
    pub return_type: TypeTag,
    pub category: String,
    pub demonstration: String,
}

fn is_tool_name(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some('A'..='Z'))
        && chars.all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '_')
}

/// Immutable catalog of tool schemas, keyed by name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ToolStore {
    tools: BTreeMap<String, ToolSchema>,
    categories: BTreeSet<String>,
}

impl ToolStore {
    pub fn len(&self) -> usize {
        self.tools.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tools.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&ToolSchema> {
        self.tools.get(name)
    }

    /// Tools in name order.
    pub fn tools(&self) -> impl Iterator<Item = &ToolSchema> {
        self.tools.values()
    }

    pub fn categories(&self) -> impl Iterator<Item = &str> {
        self.categories.iter().map(String::as_str)
    }

    /// Resolve a tool by name, carrying `context` (e.g. an instance id)
    /// into the error for diagnostics.
    pub fn require(&self, name: &str, context: &str) -> Result<&ToolSchema> {
        self.get(name).ok_or_else(|| Error::UnknownTool {
            tool: name.to_owned(),
            context: if context.is_empty() {
                String::new()
            } else {
                format!(" ({context})")
            },
        })
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ToolRecord {
    name: String,
    params: Vec<ParamSpec>,
    return_type: TypeTag,
    category: String,
    demonstration: String,
}

/// Load a tool store from JSONL. Order-independent; blank lines skipped.
/// Duplicate names, unknown type tags, and malformed lines are reported
/// with their line number.
pub fn load_tool_store<R: BufRead>(reader: R) -> Result<ToolStore> {
    let mut store = ToolStore::default();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: ToolRecord = serde_json::from_str(&line).map_err(|source| {
            // Re-surface type-tag problems under their own variant.
            let text = source.to_string();
            if text.contains("unknown type tag") {
                Error::InvalidRecord {
                    line: lineno,
                    message: text,
                }
            } else {
                Error::Json {
                    line: lineno,
                    source,
                }
            }
        })?;
        if !is_tool_name(&record.name) {
            return Err(Error::InvalidRecord {
                line: lineno,
                message: format!("tool name {:?} is not an uppercase token", record.name),
            });
        }
        let schema = ToolSchema {
            name: record.name,
            params: record.params,
            return_type: record.return_type,
            category: record.category,
            demonstration: record.demonstration,
        };
        if store.tools.contains_key(&schema.name) {
            return Err(Error::DuplicateTool {
                line: lineno,
                name: schema.name,
            });
        }
        store.categories.insert(schema.category.clone());
        store.tools.insert(schema.name.clone(), schema);
    }
    Ok(store)
}

/// Write the store back out as JSONL, one tool per line in name order.
pub fn serialize_tool_store<W: Write>(store: &ToolStore, mut writer: W) -> Result<()> {
    for tool in store.tools() {
        serde_json::to_writer(&mut writer, tool).map_err(|e| Error::config(e.to_string()))?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Uniform sample without replacement; the sample size is itself drawn
/// uniformly from `[count_min, count_max]`. Deterministic under a fixed
/// seed.
pub fn sample_tools(
    store: &ToolStore,
    count_min: usize,
    count_max: usize,
    rng_seed: u64,
) -> Result<Vec<&ToolSchema>> {
    if count_min > count_max || count_max > store.len() || count_min == 0 {
        return Err(Error::SampleBounds {
            min: count_min,
            max: count_max,
            available: store.len(),
        });
    }
    let mut rng = rng_for_seed(rng_seed);
    let count = rng.random_range(count_min..=count_max);
    let all: Vec<&ToolSchema> = store.tools().collect();
    let picked = rand::seq::index::sample(&mut rng, all.len(), count);
    Ok(picked.into_iter().map(|i| all[i]).collect())
}

/// All tools of `category` minus `exclude`, in stable name order.
pub fn tools_in_category<'a>(
    store: &'a ToolStore,
    category: &str,
    exclude: &BTreeSet<String>,
) -> Result<Vec<&'a ToolSchema>> {
    if !store.categories.contains(category) {
        return Err(Error::UnknownCategory {
            category: category.to_owned(),
        });
    }
    Ok(store
        .tools()
        .filter(|t| t.category == category && !exclude.contains(&t.name))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn line(name: &str, params: &[(&str, &str)], ret: &str, cat: &str) -> String {
        let params: Vec<serde_json::Value> = params
            .iter()
            .map(|(n, t)| serde_json::json!({"name": n, "type": t}))
            .collect();
        serde_json::json!({
            "name": name,
            "params": params,
            "return_type": ret,
            "category": cat,
            "demonstration": format!("{name}(...): demo"),
        })
        .to_string()
    }

    fn load(lines: &[String]) -> Result<ToolStore> {
        load_tool_store(Cursor::new(lines.join("\n")))
    }

    #[test]
    fn minimal_store_with_zero_arg_tool() {
        let store = load(&[line("CALENDAR", &[], "date", "weather")]).unwrap();
        assert_eq!(store.len(), 1);
        assert!(store.get("CALENDAR").unwrap().params.is_empty());
    }

    #[test]
    fn duplicate_name_is_an_error() {
        let err = load(&[
            line("PATH", &[("place1", "string")], "list", "navigation"),
            line("PATH", &[("p", "path")], "cost", "navigation"),
        ])
        .unwrap_err();
        assert!(matches!(err, Error::DuplicateTool { line: 2, .. }));
    }

    #[test]
    fn unknown_type_tag_reports_line() {
        let err = load(&[line("FOO", &[("x", "quux")], "string", "misc")]).unwrap_err();
        assert!(matches!(err, Error::InvalidRecord { line: 1, .. }));
    }

    #[test]
    fn unknown_keys_rejected() {
        let mut record: serde_json::Value =
            serde_json::from_str(&line("FOO", &[], "string", "misc")).unwrap();
        record["extra"] = serde_json::json!(1);
        let err = load(&[record.to_string()]).unwrap_err();
        assert!(matches!(err, Error::Json { line: 1, .. }));
    }

    #[test]
    fn lowercase_name_rejected() {
        let err = load(&[line("foo", &[], "string", "misc")]).unwrap_err();
        assert!(matches!(err, Error::InvalidRecord { line: 1, .. }));
    }

    #[test]
    fn aliases_resolve_to_base_kinds() {
        assert_eq!(TypeTag::parse("city").unwrap().kind(), BaseKind::String);
        assert_eq!(TypeTag::parse("cost").unwrap().kind(), BaseKind::Float);
        assert_eq!(TypeTag::parse("paths").unwrap().kind(), BaseKind::List);
        assert!(TypeTag::parse("frobnicator").is_err());
    }

    #[test]
    fn roundtrip_is_identity() {
        let store = load(&[
            line("CALENDAR", &[], "date", "weather"),
            line("PATH", &[("place1", "string"), ("place2", "string")], "list", "navigation"),
        ])
        .unwrap();
        let mut buf = Vec::new();
        serialize_tool_store(&store, &mut buf).unwrap();
        let reloaded = load_tool_store(Cursor::new(buf)).unwrap();
        assert_eq!(store, reloaded);
    }

    #[test]
    fn sampling_is_deterministic_and_duplicate_free() {
        let lines: Vec<String> = (0..20)
            .map(|i| line(&format!("TOOL_{i}"), &[], "string", &format!("cat{}", i % 4)))
            .collect();
        let store = load(&lines).unwrap();
        let a = sample_tools(&store, 5, 7, 1).unwrap();
        let b = sample_tools(&store, 5, 7, 1).unwrap();
        assert!(a.len() >= 5 && a.len() <= 7);
        let names_a: Vec<&str> = a.iter().map(|t| t.name.as_str()).collect();
        let names_b: Vec<&str> = b.iter().map(|t| t.name.as_str()).collect();
        assert_eq!(names_a, names_b);
        let unique: BTreeSet<&str> = names_a.iter().copied().collect();
        assert_eq!(unique.len(), names_a.len());
        for name in &names_a {
            assert!(store.get(name).is_some());
        }
    }

    #[test]
    fn exhaustive_sample_returns_everything() {
        let lines: Vec<String> = (0..5)
            .map(|i| line(&format!("TOOL_{i}"), &[], "string", "cat"))
            .collect();
        let store = load(&lines).unwrap();
        let picked = sample_tools(&store, 5, 5, 42).unwrap();
        assert_eq!(picked.len(), 5);
    }

    #[test]
    fn sample_bounds_checked() {
        let store = load(&[line("ONLY", &[], "string", "cat")]).unwrap();
        assert!(sample_tools(&store, 2, 3, 0).is_err());
        assert!(sample_tools(&store, 1, 2, 0).is_err());
    }

    #[test]
    fn category_listing_and_exclusion() {
        let lines: Vec<String> = (0..6)
            .map(|i| {
                line(
                    &format!("TOOL_{i}"),
                    &[],
                    "string",
                    if i < 4 { "navigation" } else { "weather" },
                )
            })
            .collect();
        let store = load(&lines).unwrap();

        let all = tools_in_category(&store, "navigation", &BTreeSet::new()).unwrap();
        assert_eq!(all.len(), 4);

        let exclude: BTreeSet<String> = ["TOOL_0".to_owned()].into();
        let rest = tools_in_category(&store, "navigation", &exclude).unwrap();
        assert_eq!(rest.len(), 3);
        assert!(rest.iter().all(|t| t.name != "TOOL_0"));

        let everyone: BTreeSet<String> = all.iter().map(|t| t.name.clone()).collect();
        assert!(tools_in_category(&store, "navigation", &everyone)
            .unwrap()
            .is_empty());

        assert!(tools_in_category(&store, "nope", &BTreeSet::new()).is_err());
    }

    #[test]
    fn categories_partition_the_store() {
        let lines: Vec<String> = (0..9)
            .map(|i| line(&format!("TOOL_{i}"), &[], "string", &format!("cat{}", i % 3)))
            .collect();
        let store = load(&lines).unwrap();
        let total: usize = store
            .categories()
            .map(|c| {
                tools_in_category(&store, c, &BTreeSet::new())
                    .unwrap()
                    .len()
            })
            .sum();
        assert_eq!(total, store.len());
    }
}
