//! The four automatic evaluation aspects and their ROUGE primitives.
//!
//! Per instance: tool selection (NDCG of the generated call sequence
//! against the gold call sequence), parameter correctness (fraction of
//! schema-conformant calls), compositional reasoning (ROUGE-L over the
//! two topologically ordered tool sequences), and interaction fluency
//! (mean of ROUGE-1/2/L over the response texts). All scores live in
//! [0,1]; reports also carry a ×100 view for table output.
//!
//! Gold tool sequences come from parsing the gold response, not from
//! the instance's `gold_tools` field; that keeps self-evaluation an
//! exact fixed point even when a response calls a tool twice.

use std::collections::HashMap;
use std::hash::Hash;

use serde::Serialize;

use crate::callgraph::CallGraph;
use crate::dataset::Instance;
use crate::error::Error;
use crate::exec;
use crate::store::ToolStore;
use crate::tokenize::tokenize;
use crate::validate::validate_calls;
use crate::Result;

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if n >= 1 && tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

fn f1(overlap: f64, candidate_total: f64, reference_total: f64) -> f64 {
    if overlap == 0.0 {
        return 0.0;
    }
    let p = overlap / candidate_total;
    let r = overlap / reference_total;
    2.0 * p * r / (p + r)
}

/// ROUGE-N: F1 over n-gram multiset overlap. Zero when either side has
/// no n-grams.
pub fn rouge_n<T: Eq + Hash>(candidate: &[T], reference: &[T], n: usize) -> f64 {
    assert!(n >= 1, "n-gram order must be at least 1");
    let cand = ngram_counts(candidate, n);
    let refr = ngram_counts(reference, n);
    if cand.is_empty() || refr.is_empty() {
        return 0.0;
    }
    let overlap: usize = cand
        .iter()
        .map(|(gram, count)| count.min(refr.get(gram).unwrap_or(&0)))
        .sum();
    f1(
        overlap as f64,
        cand.values().sum::<usize>() as f64,
        refr.values().sum::<usize>() as f64,
    )
}

fn lcs_len<T: Eq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    // One-row dynamic program; prev tracks the diagonal cell.
    let mut row = vec![0usize; b.len() + 1];
    for item in a {
        let mut prev = 0;
        for (j, other) in b.iter().enumerate() {
            let current = row[j + 1];
            row[j + 1] = if item == other {
                prev + 1
            } else {
                row[j + 1].max(row[j])
            };
            prev = current;
        }
    }
    row[b.len()]
}

/// ROUGE-L: F1 from the longest common subsequence. Zero when either
/// sequence is empty.
pub fn rouge_l<T: Eq>(candidate: &[T], reference: &[T]) -> f64 {
    if candidate.is_empty() || reference.is_empty() {
        return 0.0;
    }
    f1(
        lcs_len(candidate, reference) as f64,
        candidate.len() as f64,
        reference.len() as f64,
    )
}

/// NDCG of the generated tool list as a ranking against the gold tool
/// multiset. Relevance is binary with greedy consumption: position i
/// scores 1 when its name still has an unconsumed gold occurrence.
/// DCG discounts by log2(position+1); IDCG assumes |gold| relevant
/// items up front. Empty gold scores 1 against empty generated and 0
/// otherwise.
pub fn tool_selection_ndcg<T: Eq + Hash>(generated: &[T], gold: &[T]) -> f64 {
    if gold.is_empty() {
        return if generated.is_empty() { 1.0 } else { 0.0 };
    }
    let mut remaining: HashMap<&T, usize> = HashMap::new();
    for item in gold {
        *remaining.entry(item).or_insert(0) += 1;
    }
    let mut dcg = 0.0;
    for (i, item) in generated.iter().enumerate() {
        if let Some(count) = remaining.get_mut(item) {
            if *count > 0 {
                *count -= 1;
                dcg += 1.0 / (i as f64 + 2.0).log2();
            }
        }
    }
    let idcg: f64 = (0..gold.len()).map(|i| 1.0 / (i as f64 + 2.0).log2()).sum();
    dcg / idcg
}

/// Fraction of generated calls that validate cleanly against the store.
/// A generated response without calls scores 1 when the gold response
/// also has none, else 0.
pub fn parameter_correctness(generated: &CallGraph, gold: &CallGraph, store: &ToolStore) -> f64 {
    if generated.calls.is_empty() {
        return if gold.calls.is_empty() { 1.0 } else { 0.0 };
    }
    let report = validate_calls(generated, store);
    report.valid_calls as f64 / report.total_calls as f64
}

/// ROUGE-L between the topologically ordered tool sequences, each tool
/// name one token.
pub fn compositional_reasoning(generated: &CallGraph, gold: &CallGraph) -> f64 {
    rouge_l(&generated.topo_tool_names(), &gold.topo_tool_names())
}

/// Mean of ROUGE-1, ROUGE-2, and ROUGE-L over the canonical
/// tokenization of the two full response texts.
pub fn interaction_fluency(generated: &str, gold: &str) -> f64 {
    let cand = tokenize(generated);
    let refr = tokenize(gold);
    (rouge_n(&cand, &refr, 1) + rouge_n(&cand, &refr, 2) + rouge_l(&cand, &refr)) / 3.0
}

/// The four aspect scores, each in [0,1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalScores {
    pub tool_selection: f64,
    pub parameter_correctness: f64,
    pub compositional_reasoning: f64,
    pub interaction_fluency: f64,
}

impl EvalScores {
    /// The ×100 view used in result tables.
    pub fn scaled(&self) -> EvalScores {
        EvalScores {
            tool_selection: self.tool_selection * 100.0,
            parameter_correctness: self.parameter_correctness * 100.0,
            compositional_reasoning: self.compositional_reasoning * 100.0,
            interaction_fluency: self.interaction_fluency * 100.0,
        }
    }
}

/// One instance's scores, labeled by id.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceScores {
    pub id: String,
    #[serde(flatten)]
    pub scores: EvalScores,
}

/// Dataset-level report: per-instance scores plus their plain means.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub aggregates: EvalScores,
    pub per_instance: Vec<InstanceScores>,
}

impl EvalReport {
    /// Four-column text table of the aggregates, ×100, two decimals.
    pub fn to_table(&self) -> String {
        let s = self.aggregates.scaled();
        let mut out = String::new();
        out.push_str(
            "Tool Selection  Parameter Correctness  Compositional Reasoning  Interaction Fluency\n",
        );
        out.push_str(&format!(
            "{:>14.2}  {:>21.2}  {:>23.2}  {:>19.2}\n",
            s.tool_selection,
            s.parameter_correctness,
            s.compositional_reasoning,
            s.interaction_fluency
        ));
        out
    }
}

/// Score one generated response against its instance.
pub fn evaluate_instance(generated: &str, instance: &Instance, store: &ToolStore) -> EvalScores {
    let gen_graph = CallGraph::parse(generated);
    let gold_graph = CallGraph::parse(&instance.response);
    EvalScores {
        tool_selection: tool_selection_ndcg(&gen_graph.tool_names(), &gold_graph.tool_names()),
        parameter_correctness: parameter_correctness(&gen_graph, &gold_graph, store),
        compositional_reasoning: compositional_reasoning(&gen_graph, &gold_graph),
        interaction_fluency: interaction_fluency(generated, &instance.response),
    }
}

/// Score every (generated, instance) pair and aggregate by plain mean.
/// Instances are scored independently (in parallel under the default
/// feature set) and reported in input order.
pub fn evaluate_dataset(pairs: &[(&str, &Instance)], store: &ToolStore) -> Result<EvalReport> {
    if pairs.is_empty() {
        return Err(Error::EmptyEvaluationSet);
    }
    let per_instance: Vec<InstanceScores> = exec::map(pairs, |(generated, instance)| {
        InstanceScores {
            id: instance.id.clone(),
            scores: evaluate_instance(generated, instance, store),
        }
    });
    let n = per_instance.len() as f64;
    let mut sums = [0.0f64; 4];
    for entry in &per_instance {
        sums[0] += entry.scores.tool_selection;
        sums[1] += entry.scores.parameter_correctness;
        sums[2] += entry.scores.compositional_reasoning;
        sums[3] += entry.scores.interaction_fluency;
    }
    Ok(EvalReport {
        aggregates: EvalScores {
            tool_selection: sums[0] / n,
            parameter_correctness: sums[1] / n,
            compositional_reasoning: sums[2] / n,
            interaction_fluency: sums[3] / n,
        },
        per_instance,
    })
}
