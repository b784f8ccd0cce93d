//! Training instances, prediction files, and their JSONL persistence.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::store::ToolStore;
use crate::Result;

/// One tool-use instance: a user query, the reference response solving
/// it with tool calls, and the gold toolset the response relies on.
/// `category_hint` is an optional topic label carried for corpora that
/// have one; the pipeline itself derives categories from gold tools.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Instance {
    pub id: String,
    pub query: String,
    pub response: String,
    pub gold_tools: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category_hint: Option<String>,
}

impl Instance {
    /// Every gold tool must resolve against the active store.
    pub fn check_against_store(&self, store: &ToolStore) -> Result<()> {
        for name in &self.gold_tools {
            store.require(name, &self.id)?;
        }
        Ok(())
    }
}

/// A model output keyed by the instance it answers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Prediction {
    pub id: String,
    pub response: String,
}

/// Load instances from JSONL. Ids must be unique and non-empty, gold
/// toolsets non-empty; offending lines are reported by number.
pub fn load_dataset<R: BufRead>(reader: R) -> Result<Vec<Instance>> {
    let mut seen = BTreeMap::new();
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let instance: Instance = serde_json::from_str(&line).map_err(|source| Error::Json {
            line: lineno,
            source,
        })?;
        if instance.id.is_empty() {
            return Err(Error::InvalidRecord {
                line: lineno,
                message: "instance id is empty".to_owned(),
            });
        }
        if instance.gold_tools.is_empty() {
            return Err(Error::InvalidRecord {
                line: lineno,
                message: format!("instance {:?} has an empty gold toolset", instance.id),
            });
        }
        if seen.insert(instance.id.clone(), lineno).is_some() {
            return Err(Error::DuplicateInstance {
                id: instance.id.clone(),
            });
        }
        out.push(instance);
    }
    Ok(out)
}

/// Write instances as JSONL in input order, one compact object per line.
pub fn save_dataset<W: Write>(instances: &[Instance], mut writer: W) -> Result<()> {
    for instance in instances {
        serde_json::to_writer(&mut writer, instance).map_err(|e| Error::config(e.to_string()))?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Load predictions into an id-keyed map; duplicate ids are an error.
pub fn load_predictions<R: BufRead>(reader: R) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let prediction: Prediction =
            serde_json::from_str(&line).map_err(|source| Error::Json {
                line: lineno,
                source,
            })?;
        if out
            .insert(prediction.id.clone(), prediction.response)
            .is_some()
        {
            return Err(Error::DuplicateInstance { id: prediction.id });
        }
    }
    Ok(out)
}
