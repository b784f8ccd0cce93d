//! Dense tool retrieval: embed tool demonstrations, rank by cosine.
//!
//! The real system pairs this with a trained dual encoder; here the
//! encoder is behind the [`Embedder`] trait with a deterministic
//! hashing embedder as the default, so retrieval runs and tests with no
//! model dependencies. Vectors are L2-normalized at the source, which
//! makes cosine a plain dot product.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::dataset::Instance;
use crate::error::Error;
use crate::exec;
use crate::provider::Embedder;
use crate::seed::fnv1a;
use crate::store::ToolStore;
use crate::tokenize::tokenize;
use crate::Result;

/// Fold a hash into a signed bucket update.
fn bucket_update(values: &mut [f64], hash: u64) {
    let dim = values.len() as u64;
    let bucket = (hash % dim) as usize;
    let sign = if hash >> 63 == 0 { 1.0 } else { -1.0 };
    values[bucket] += sign;
}

fn l2_normalize(values: &mut [f64]) {
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for v in values.iter_mut() {
            *v /= norm;
        }
    }
}

/// Deterministic embedding: signed feature hashing over word unigrams
/// and character trigrams of the canonical tokenization, L2-normalized.
/// Token-free text maps to the zero vector, which matches nothing.
pub fn embed_text(text: &str, dim: usize) -> Result<Vec<f64>> {
    if dim < 64 {
        return Err(Error::config(format!(
            "embedding dimension must be at least 64, got {dim}"
        )));
    }
    let tokens = tokenize(text);
    let mut values = vec![0.0; dim];
    for token in &tokens {
        bucket_update(&mut values, fnv1a(format!("u:{token}").as_bytes()));
    }
    let joined = tokens.join(" ");
    let chars: Vec<char> = joined.chars().collect();
    for tri in chars.windows(3) {
        let gram: String = tri.iter().collect();
        bucket_update(&mut values, fnv1a(format!("t:{gram}").as_bytes()));
    }
    l2_normalize(&mut values);
    Ok(values)
}

/// The built-in hashing embedder as an [`Embedder`].
#[derive(Debug, Clone, Copy)]
pub struct HashingEmbedder {
    dim: usize,
}

impl HashingEmbedder {
    pub fn new(dim: usize) -> Result<HashingEmbedder> {
        if dim < 64 {
            return Err(Error::config(format!(
                "embedding dimension must be at least 64, got {dim}"
            )));
        }
        Ok(HashingEmbedder { dim })
    }
}

impl Default for HashingEmbedder {
    fn default() -> HashingEmbedder {
        HashingEmbedder { dim: 256 }
    }
}

impl Embedder for HashingEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        embed_text(text, self.dim)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct IndexEntry {
    name: String,
    values: Vec<f64>,
}

/// One normalized embedding per tool, sorted by tool name so identical
/// inputs serialize identically regardless of construction order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolIndex {
    dim: usize,
    entries: Vec<IndexEntry>,
}

impl ToolIndex {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Build from raw (name, vector) pairs; sorts by name and checks
    /// dimensions. Vectors are normalized defensively.
    pub fn from_entries(dim: usize, entries: Vec<(String, Vec<f64>)>) -> Result<ToolIndex> {
        let mut entries: Vec<IndexEntry> = entries
            .into_iter()
            .map(|(name, mut values)| {
                if values.len() != dim {
                    return Err(Error::DimMismatch {
                        expected: dim,
                        got: values.len(),
                    });
                }
                l2_normalize(&mut values);
                Ok(IndexEntry { name, values })
            })
            .collect::<Result<_>>()?;
        entries.sort_by(|a, b| a.name.cmp(&b.name));
        Ok(ToolIndex { dim, entries })
    }
}

/// Embed every tool's demonstration text. Tools embed independently (in
/// parallel under the default feature set); failures carry the tool
/// name.
pub fn build_index<E: Embedder + ?Sized>(store: &ToolStore, embedder: &E) -> Result<ToolIndex> {
    let tools: Vec<_> = store.tools().collect();
    let entries = exec::try_map(&tools, |tool| {
        let values = embedder
            .embed(&tool.demonstration)
            .map_err(|e| Error::EmbedderFailure {
                tool: tool.name.clone(),
                message: e.to_string(),
            })?;
        Ok((tool.name.clone(), values))
    })?;
    ToolIndex::from_entries(embedder.dim(), entries)
}

/// Top-k tools for a query, by cosine descending with name-ascending
/// tie-break. Returns fewer than k only when the index is smaller.
pub fn retrieve<E: Embedder + ?Sized>(
    index: &ToolIndex,
    embedder: &E,
    query: &str,
    k: usize,
) -> Result<Vec<(String, f64)>> {
    if index.is_empty() {
        return Err(Error::EmptyIndex);
    }
    if embedder.dim() != index.dim {
        return Err(Error::DimMismatch {
            expected: index.dim,
            got: embedder.dim(),
        });
    }
    let query_vec = embedder.embed(query)?;
    if query_vec.len() != index.dim {
        return Err(Error::DimMismatch {
            expected: index.dim,
            got: query_vec.len(),
        });
    }
    let mut scored: Vec<(String, f64)> = index
        .entries
        .iter()
        .map(|entry| {
            let dot: f64 = entry
                .values
                .iter()
                .zip(&query_vec)
                .map(|(a, b)| a * b)
                .sum();
            (entry.name.clone(), dot)
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(k);
    Ok(scored)
}

/// Mean over instances of |gold ∩ top-k| / |gold|.
pub fn recall_at_k<E: Embedder + ?Sized>(
    index: &ToolIndex,
    embedder: &E,
    instances: &[Instance],
    k: usize,
) -> Result<f64> {
    if instances.is_empty() {
        return Err(Error::EmptyEvaluationSet);
    }
    let recalls = exec::try_map(instances, |instance| {
        let top: Vec<(String, f64)> = retrieve(index, embedder, &instance.query, k)?;
        let hit = instance
            .gold_tools
            .iter()
            .filter(|gold| top.iter().any(|(name, _)| name == *gold))
            .count();
        Ok(hit as f64 / instance.gold_tools.len() as f64)
    })?;
    Ok(recalls.iter().sum::<f64>() / recalls.len() as f64)
}

/// Persist as plain JSON (entries already in canonical name order).
pub fn save_index<W: Write>(index: &ToolIndex, mut writer: W) -> Result<()> {
    let text = serde_json::to_string(index).map_err(|e| Error::config(e.to_string()))?;
    writer.write_all(text.as_bytes())?;
    writer.write_all(b"\n")?;
    Ok(())
}

pub fn load_index<R: Read>(mut reader: R) -> Result<ToolIndex> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    let index: ToolIndex =
        serde_json::from_str(&text).map_err(|e| Error::config(format!("bad index file: {e}")))?;
    for entry in &index.entries {
        if entry.values.len() != index.dim {
            return Err(Error::DimMismatch {
                expected: index.dim,
                got: entry.values.len(),
            });
        }
    }
    Ok(index)
}
