//! Three-stage training data assembly and exact loss evaluation.
//!
//! The stages differ only in the candidate toolset each prompt exposes:
//! warm-up shows exactly the gold tools, in-category adds same-category
//! distractors disjoint from gold, cross-category takes the union of
//! gold and the retriever's top-k. Losses are plain negative
//! log-likelihoods of the reference response under the staged prompt;
//! the actual model lives behind the scorer interface.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Instance;
use crate::error::Error;
use crate::exec;
use crate::provider::Embedder;
use crate::retriever::{retrieve, ToolIndex};
use crate::seed::rng_for_item;
use crate::store::{tools_in_category, ToolStore};
use crate::Result;

/// Default task instruction placed at the top of every prompt.
pub const DEFAULT_INSTRUCTION: &str =
    "You are an intelligent assistant that can use external tools to solve user queries step by step.";

/// A scorer's per-token view of one response.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenLogProbs {
    tokens: Vec<String>,
    logprobs: Vec<f64>,
}

impl TokenLogProbs {
    /// Lengths must match and log-probabilities cannot be positive.
    pub fn new(tokens: Vec<String>, logprobs: Vec<f64>) -> Result<TokenLogProbs> {
        if tokens.len() != logprobs.len() {
            return Err(Error::LogProbLength {
                tokens: tokens.len(),
                logprobs: logprobs.len(),
            });
        }
        if let Some((index, &value)) = logprobs.iter().enumerate().find(|(_, &lp)| lp > 0.0) {
            return Err(Error::PositiveLogProb { index, value });
        }
        Ok(TokenLogProbs { tokens, logprobs })
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn logprobs(&self) -> &[f64] {
        &self.logprobs
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Negative log-likelihood of the scored response: −Σ logprobs. One
/// definition serves all three stages; they differ only in the prompt
/// the scorer conditioned on.
pub fn nll_loss(scored: &TokenLogProbs) -> Result<f64> {
    if scored.is_empty() {
        return Err(Error::EmptyTokenSequence);
    }
    Ok(-scored.logprobs.iter().sum::<f64>())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    WarmUp,
    InCategory,
    CrossCategory,
}

impl Stage {
    pub fn label(self) -> &'static str {
        match self {
            Stage::WarmUp => "warm_up",
            Stage::InCategory => "in_category",
            Stage::CrossCategory => "cross_category",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Stage> {
        match s {
            "warm_up" | "warmup" => Ok(Stage::WarmUp),
            "in_category" => Ok(Stage::InCategory),
            "cross_category" => Ok(Stage::CrossCategory),
            other => Err(Error::config(format!("unknown stage {other:?}"))),
        }
    }
}

/// One assembled training example, as written to the plan file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumExample {
    pub id: String,
    pub stage: Stage,
    pub candidates: Vec<String>,
    pub prompt: String,
}

fn dedup_preserving_order(names: &[String]) -> Vec<String> {
    let mut seen = BTreeSet::new();
    names
        .iter()
        .filter(|name| seen.insert(name.as_str()))
        .cloned()
        .collect()
}

/// Candidate tool names for one instance at one stage, before the
/// label-hiding shuffle.
fn candidate_names(
    instance: &Instance,
    stage: Stage,
    store: &ToolStore,
    retrieval: Option<(&ToolIndex, &dyn Embedder)>,
    distractor_count: usize,
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<String>> {
    let gold = dedup_preserving_order(&instance.gold_tools);
    let gold_set: BTreeSet<String> = gold.iter().cloned().collect();
    match stage {
        Stage::WarmUp => Ok(gold),
        Stage::InCategory => {
            let mut categories = BTreeSet::new();
            for name in &gold {
                categories.insert(store.require(name, &instance.id)?.category.clone());
            }
            let mut pool = BTreeSet::new();
            for category in &categories {
                for tool in tools_in_category(store, category, &gold_set)? {
                    pool.insert(tool.name.clone());
                }
            }
            let pool: Vec<String> = pool.into_iter().collect();
            let take = distractor_count.min(pool.len());
            if take < distractor_count {
                log::warn!(
                    "instance {}: categories {:?} offer only {} distractors of {} requested",
                    instance.id,
                    categories,
                    pool.len(),
                    distractor_count
                );
            }
            let mut candidates = gold;
            for i in rand::seq::index::sample(rng, pool.len(), take) {
                candidates.push(pool[i].clone());
            }
            Ok(candidates)
        }
        Stage::CrossCategory => {
            let (index, embedder) = retrieval.ok_or_else(|| {
                Error::config("cross-category assembly needs a tool index and embedder")
            })?;
            let mut candidates = gold;
            let mut seen = gold_set;
            for (name, _) in retrieve(index, embedder, &instance.query, k)? {
                if seen.insert(name.clone()) {
                    candidates.push(name);
                }
            }
            Ok(candidates)
        }
    }
}

/// Render the prompt: instruction, candidate demonstrations in the
/// given order, then the query with a response cue.
pub fn render_prompt(instruction: &str, demonstrations: &[&str], query: &str) -> String {
    let mut out = String::new();
    out.push_str("### ");
    out.push_str(instruction);
    out.push_str("\n### You can use the following APIs:\n");
    for demo in demonstrations {
        out.push_str(demo);
        out.push('\n');
    }
    out.push_str("### Query: ");
    out.push_str(query);
    out.push_str("\n### Response:");
    out
}

/// Assemble one stage over a dataset. Candidate order is shuffled with
/// a per-instance RNG stream derived from `seed`, the stage, and the
/// instance id, so the gold tools' position carries no signal and
/// assembly parallelizes without losing determinism.
pub fn assemble_stage(
    instances: &[Instance],
    stage: Stage,
    store: &ToolStore,
    retrieval: Option<(&ToolIndex, &dyn Embedder)>,
    distractor_count: usize,
    k: usize,
    seed: u64,
) -> Result<Vec<CurriculumExample>> {
    exec::try_map(instances, |instance| {
        let mut rng = rng_for_item(seed, &format!("{}|{}", stage.label(), instance.id));
        let mut candidates = candidate_names(
            instance,
            stage,
            store,
            retrieval,
            distractor_count,
            k,
            &mut rng,
        )?;
        candidates.shuffle(&mut rng);
        let demos: Vec<&str> = candidates
            .iter()
            .map(|name| {
                store
                    .require(name, &instance.id)
                    .map(|schema| schema.demonstration.as_str())
            })
            .collect::<Result<_>>()?;
        Ok(CurriculumExample {
            id: instance.id.clone(),
            stage,
            candidates,
            prompt: render_prompt(DEFAULT_INSTRUCTION, &demos, &instance.query),
        })
    })
}

/// One section of the training plan: every instance id, once, for one
/// epoch of one stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub stage: Stage,
    pub epoch: usize,
    pub instance_ids: Vec<String>,
}

/// Easy-to-difficult schedule: all warm-up epochs, then in-category,
/// then cross-category. Zero-epoch stages are omitted, so ablations are
/// just zeroed entries in the triple.
pub fn stage_schedule(
    dataset: &[Instance],
    epochs: (usize, usize, usize),
) -> Result<Vec<PlanEntry>> {
    if epochs == (0, 0, 0) {
        return Err(Error::EmptySchedule);
    }
    let ids: Vec<String> = dataset.iter().map(|i| i.id.clone()).collect();
    let mut plan = Vec::new();
    let stages = [
        (Stage::WarmUp, epochs.0),
        (Stage::InCategory, epochs.1),
        (Stage::CrossCategory, epochs.2),
    ];
    for (stage, count) in stages {
        for epoch in 1..=count {
            plan.push(PlanEntry {
                stage,
                epoch,
                instance_ids: ids.clone(),
            });
        }
    }
    Ok(plan)
}
