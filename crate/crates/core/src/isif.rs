//! The iterative self-instruct feedback loop.
//!
//! One step: score every training instance's response perplexity under
//! its staged prompt, keep the hardest σ percent, prompt a generator
//! with each hard instance plus a tool sample that always contains its
//! gold tools, parse the generated query/response blocks, gate them
//! through the quality filters, and append survivors until the σ-percent
//! budget is met. Original instances are never mutated or removed.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::callgraph::CallGraph;
use crate::curriculum::{assemble_stage, Stage, TokenLogProbs};
use crate::dataset::Instance;
use crate::error::Error;
use crate::exec;
use crate::metrics::rouge_l;
use crate::provider::{Embedder, Generator, Scorer};
use crate::retriever::{build_index, HashingEmbedder};
use crate::seed::rng_for_item;
use crate::store::{tools_in_category, ToolSchema, ToolStore};
use crate::tokenize::tokenize;
use crate::validate::validate_calls;
use crate::Result;

/// Default instruction at the top of self-instruct prompts.
pub const DEFAULT_SELFINSTRUCT_INSTRUCTION: &str =
    "You are an intelligent assistant that writes new tool-use training data. \
     Read the available APIs and the usage examples, then invent new user queries \
     and solve them with the tools step by step.";

/// An instance with its measured difficulty.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredInstance {
    pub instance: Instance,
    /// exp of the mean negative token log-probability; ≥ 1.
    pub perplexity: f64,
    pub response_token_count: usize,
}

/// Knobs of the update loop. `score_stage` picks which staged prompt
/// perplexity is measured under, and `sigma_base_size` optionally pins
/// the budget base to a fixed dataset size instead of the current one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IsifConfig {
    pub sigma_percent: f64,
    pub min_tools_per_instance: usize,
    pub dedup_threshold: f64,
    pub tools_per_prompt: (usize, usize),
    pub k_retrieval: usize,
    pub score_stage: Stage,
    pub sigma_base_size: Option<usize>,
    pub instruction: String,
}

impl Default for IsifConfig {
    fn default() -> IsifConfig {
        IsifConfig {
            sigma_percent: 20.0,
            min_tools_per_instance: 4,
            dedup_threshold: 0.7,
            tools_per_prompt: (5, 7),
            k_retrieval: 10,
            score_stage: Stage::CrossCategory,
            sigma_base_size: None,
            instruction: DEFAULT_SELFINSTRUCT_INSTRUCTION.to_owned(),
        }
    }
}

impl IsifConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_percent > 0.0 && self.sigma_percent <= 100.0) {
            return Err(Error::config(format!(
                "sigma_percent must be in (0, 100], got {}",
                self.sigma_percent
            )));
        }
        if self.min_tools_per_instance == 0 {
            return Err(Error::config("min_tools_per_instance must be at least 1"));
        }
        if !(self.dedup_threshold > 0.0 && self.dedup_threshold <= 1.0) {
            return Err(Error::config(format!(
                "dedup_threshold must be in (0, 1], got {}",
                self.dedup_threshold
            )));
        }
        let (min, max) = self.tools_per_prompt;
        if min == 0 || min > max {
            return Err(Error::config(format!(
                "tools_per_prompt bounds ({min}, {max}) are not a valid range"
            )));
        }
        if self.k_retrieval == 0 {
            return Err(Error::config("k_retrieval must be at least 1"));
        }
        Ok(())
    }
}

/// Why a generated candidate was not appended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    ParseError,
    TypeError,
    TooFewTools,
    Duplicate,
    /// Valid order arrived after the σ-percent budget was already met.
    Budget,
}

impl RejectReason {
    pub fn label(self) -> &'static str {
        match self {
            RejectReason::ParseError => "parse_error",
            RejectReason::TypeError => "type_error",
            RejectReason::TooFewTools => "too_few_tools",
            RejectReason::Duplicate => "duplicate",
            RejectReason::Budget => "budget",
        }
    }

    const ALL: [RejectReason; 5] = [
        RejectReason::ParseError,
        RejectReason::TypeError,
        RejectReason::TooFewTools,
        RejectReason::Duplicate,
        RejectReason::Budget,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Accept,
    Reject(RejectReason),
}

/// What one update step did, serialized alongside the updated dataset.
/// `accepted_count + Σ rejected = generated_count` always holds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UpdateReport {
    pub scored_count: usize,
    pub filtered_count: usize,
    pub generated_count: usize,
    pub accepted_count: usize,
    pub budget: usize,
    pub rejected: BTreeMap<String, usize>,
    pub appended: Vec<String>,
    /// The self-instruct prompts actually sent, in request order.
    pub prompts: Vec<String>,
    pub warnings: Vec<String>,
}

/// Perplexity h = exp(−mean logprob), the m-th root of 1/P for an
/// m-token response.
pub fn perplexity(scored: &TokenLogProbs) -> Result<f64> {
    if scored.is_empty() {
        return Err(Error::EmptyTokenSequence);
    }
    let mean = scored.logprobs().iter().sum::<f64>() / scored.len() as f64;
    Ok((-mean).exp())
}

/// ceil(percent% of base), multiplying before dividing so that round
/// percentages of round bases stay exact.
fn ceil_percent(percent: f64, base: usize) -> usize {
    ((percent * base as f64) / 100.0).ceil() as usize
}

/// The hardest ceil(σ%·|D|) instances, perplexity descending with id
/// ascending as the tie-break.
pub fn filter_high_perplexity(
    mut scored: Vec<ScoredInstance>,
    sigma_percent: f64,
) -> Vec<ScoredInstance> {
    let take = ceil_percent(sigma_percent, scored.len()).min(scored.len());
    scored.sort_by(|a, b| {
        b.perplexity
            .total_cmp(&a.perplexity)
            .then_with(|| a.instance.id.cmp(&b.instance.id))
    });
    scored.truncate(take);
    scored
}

fn dedup_names(names: &[String]) -> Vec<String> {
    let mut seen = BTreeSet::new();
    names
        .iter()
        .filter(|n| seen.insert(n.as_str()))
        .cloned()
        .collect()
}

/// Sample tools for one self-instruct prompt: always the seed's gold
/// tools, filled to a size drawn from `tools_per_prompt` first with
/// same-category tools, then uniformly from the rest of the store, and
/// shuffled so gold position carries no signal.
pub fn sample_prompt_tools<'s>(
    seed: &Instance,
    store: &'s ToolStore,
    config: &IsifConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<&'s ToolSchema>> {
    let gold = dedup_names(&seed.gold_tools);
    let (min, max) = config.tools_per_prompt;
    if gold.len() > max {
        return Err(Error::PromptToolCount {
            min,
            max,
            got: gold.len(),
        });
    }
    let target = rng.random_range(min..=max).max(gold.len()).min(store.len());
    if target < min {
        return Err(Error::PromptToolCount {
            min,
            max,
            got: store.len(),
        });
    }

    let mut chosen: Vec<&ToolSchema> = Vec::with_capacity(target);
    let mut chosen_names: BTreeSet<String> = BTreeSet::new();
    for name in &gold {
        chosen.push(store.require(name, &seed.id)?);
        chosen_names.insert(name.clone());
    }

    let mut categories = BTreeSet::new();
    for tool in &chosen {
        categories.insert(tool.category.clone());
    }
    let mut same_category: Vec<&ToolSchema> = Vec::new();
    for category in &categories {
        same_category.extend(tools_in_category(store, category, &chosen_names)?);
    }
    let need = target - chosen.len();
    let from_category = need.min(same_category.len());
    for i in rand::seq::index::sample(rng, same_category.len(), from_category) {
        chosen.push(same_category[i]);
        chosen_names.insert(same_category[i].name.clone());
    }

    if chosen.len() < target {
        let rest: Vec<&ToolSchema> = store
            .tools()
            .filter(|t| !chosen_names.contains(&t.name))
            .collect();
        let fill = (target - chosen.len()).min(rest.len());
        for i in rand::seq::index::sample(rng, rest.len(), fill) {
            chosen.push(rest[i]);
        }
    }
    chosen.shuffle(rng);
    Ok(chosen)
}

fn count_word(n: usize) -> String {
    match n {
        1 => "one".to_owned(),
        2 => "two".to_owned(),
        3 => "three".to_owned(),
        4 => "four".to_owned(),
        5 => "five".to_owned(),
        6 => "six".to_owned(),
        7 => "seven".to_owned(),
        8 => "eight".to_owned(),
        9 => "nine".to_owned(),
        10 => "ten".to_owned(),
        other => other.to_string(),
    }
}

/// Render a self-instruct prompt: instruction, API demonstrations, the
/// seed as usage example one, and the closing ask for five new queries
/// that each use at least `min_tools_per_instance` tools.
pub fn build_selfinstruct_prompt(
    seed: &Instance,
    tools: &[&ToolSchema],
    config: &IsifConfig,
) -> Result<String> {
    let (min, max) = config.tools_per_prompt;
    if tools.len() < min || tools.len() > max {
        return Err(Error::PromptToolCount {
            min,
            max,
            got: tools.len(),
        });
    }
    let mut out = String::new();
    out.push_str("### ");
    out.push_str(&config.instruction);
    out.push_str("\n### You can use the following APIs:\n");
    for tool in tools {
        out.push_str(&tool.demonstration);
        out.push('\n');
    }
    out.push_str("### Here are some usage examples:\n");
    out.push_str("Query 1: ");
    out.push_str(&seed.query);
    out.push_str("\nResponse 1: ");
    out.push_str(&seed.response);
    out.push_str(
        "\n### Please come up with extra five queries and use the tools to solve them \
         step-by-step. Each query involves ",
    );
    out.push_str(&count_word(config.min_tools_per_instance));
    out.push_str(" tools at least.");
    Ok(out)
}

/// Split a completion into (query, response) blocks. Blocks missing
/// either half are counted as malformed, as is a non-empty completion
/// with no recognizable block at all.
pub fn parse_generated(completion: &str) -> (Vec<(String, String)>, usize) {
    let query_head = regex_query_head();
    let response_head = regex_response_head();
    let starts: Vec<(usize, usize)> = query_head
        .find_iter(completion)
        .map(|m| (m.start(), m.end()))
        .collect();
    if starts.is_empty() {
        let malformed = usize::from(!completion.trim().is_empty());
        return (Vec::new(), malformed);
    }
    let mut blocks = Vec::new();
    let mut malformed = 0;
    for (i, &(_, head_end)) in starts.iter().enumerate() {
        let block_end = starts
            .get(i + 1)
            .map(|&(next_start, _)| next_start)
            .unwrap_or(completion.len());
        let block = &completion[head_end..block_end];
        match response_head.find(block) {
            Some(m) => {
                let query = block[..m.start()].trim();
                let response = block[m.end()..].trim();
                if query.is_empty() || response.is_empty() {
                    malformed += 1;
                } else {
                    blocks.push((query.to_owned(), response.to_owned()));
                }
            }
            None => malformed += 1,
        }
    }
    (blocks, malformed)
}

fn regex_query_head() -> &'static regex::Regex {
    static RE: std::sync::OnceLock<regex::Regex> = std::sync::OnceLock::new();
    RE.get_or_init(|| regex::Regex::new(r"(?m)^\s*Query\s+\d+\s*:").unwrap())
}

fn regex_response_head() -> &'static regex::Regex {
    static RE: std::sync::OnceLock<regex::Regex> = std::sync::OnceLock::new();
    RE.get_or_init(|| regex::Regex::new(r"(?m)^\s*Response\s+\d+\s*:").unwrap())
}

/// Quality gates in order: (a) parse errors, (b) schema defects, (c)
/// too few distinct tools, (d) near-duplicate of the pool. The first
/// failure wins.
pub fn validate_instance(
    candidate: &Instance,
    store: &ToolStore,
    pool: &[Instance],
    config: &IsifConfig,
) -> Verdict {
    let graph = CallGraph::parse(&candidate.response);
    if !graph.parse_errors.is_empty() {
        return Verdict::Reject(RejectReason::ParseError);
    }
    if !validate_calls(&graph, store).is_schema_clean() {
        return Verdict::Reject(RejectReason::TypeError);
    }
    let distinct: BTreeSet<&str> = graph.calls.iter().map(|c| c.name.as_str()).collect();
    if distinct.len() < config.min_tools_per_instance {
        return Verdict::Reject(RejectReason::TooFewTools);
    }
    let candidate_tokens = tokenize(&candidate.response);
    for existing in pool {
        let similarity = rouge_l(&candidate_tokens, &tokenize(&existing.response));
        if similarity >= config.dedup_threshold {
            return Verdict::Reject(RejectReason::Duplicate);
        }
    }
    Verdict::Accept
}

fn empty_reject_map() -> BTreeMap<String, usize> {
    RejectReason::ALL
        .iter()
        .map(|r| (r.label().to_owned(), 0))
        .collect()
}

/// One full update step; see the module docs for the phases. Returns
/// the grown dataset (input order preserved, accepted instances
/// appended) and the step's report.
pub fn isif_step(
    dataset: &[Instance],
    store: &ToolStore,
    scorer: &dyn Scorer,
    generator: &dyn Generator,
    config: &IsifConfig,
    rng_seed: u64,
) -> Result<(Vec<Instance>, UpdateReport)> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::config("cannot run an update step on an empty dataset"));
    }

    // Phase 1: perplexity under the configured staged prompt. The
    // cross-category stage retrieves against an index built on the fly
    // with the built-in embedder.
    let embedder = HashingEmbedder::default();
    let index = match config.score_stage {
        Stage::CrossCategory => Some(build_index(store, &embedder)?),
        _ => None,
    };
    let retrieval = index
        .as_ref()
        .map(|ix| (ix, &embedder as &dyn Embedder));
    let examples = assemble_stage(
        dataset,
        config.score_stage,
        store,
        retrieval,
        5,
        config.k_retrieval,
        rng_seed,
    )?;
    let pairs: Vec<(&Instance, &str)> = dataset
        .iter()
        .zip(&examples)
        .map(|(inst, ex)| (inst, ex.prompt.as_str()))
        .collect();
    let scored: Vec<ScoredInstance> = exec::try_map(&pairs, |(instance, prompt)| {
        let token_scores = scorer
            .score(prompt, &instance.response)
            .map_err(|e| Error::endpoint_for("scorer", &instance.id, e.to_string()))?;
        Ok(ScoredInstance {
            perplexity: perplexity(&token_scores)?,
            response_token_count: token_scores.len(),
            instance: (*instance).clone(),
        })
    })?;
    let scored_count = scored.len();

    // Phase 2: keep the hardest σ percent.
    let filtered = filter_high_perplexity(scored, config.sigma_percent);

    // Phase 3: one generation request per hard instance.
    let base = config.sigma_base_size.unwrap_or(dataset.len());
    let budget = ceil_percent(config.sigma_percent, base);
    let mut used_ids: BTreeSet<String> = dataset.iter().map(|i| i.id.clone()).collect();
    let mut prompts = Vec::new();
    let mut candidates: Vec<Instance> = Vec::new();
    let mut rejected = empty_reject_map();
    let mut malformed_total = 0usize;
    for hard in &filtered {
        let seed = &hard.instance;
        let mut rng = rng_for_item(rng_seed, &format!("gen|{}", seed.id));
        let tools = sample_prompt_tools(seed, store, config, &mut rng)?;
        let prompt = build_selfinstruct_prompt(seed, &tools, config)?;
        let completions = generator
            .generate(&prompt, 1)
            .map_err(|e| Error::endpoint_for("generator", &seed.id, e.to_string()))?;
        prompts.push(prompt);
        let mut block_counter = 0usize;
        for completion in &completions {
            let (blocks, malformed) = parse_generated(completion);
            malformed_total += malformed;
            for (query, response) in blocks {
                block_counter += 1;
                let mut candidate_id = format!("{}-g{}", seed.id, block_counter);
                while !used_ids.insert(candidate_id.clone()) {
                    block_counter += 1;
                    candidate_id = format!("{}-g{}", seed.id, block_counter);
                }
                let graph = CallGraph::parse(&response);
                let gold_tools =
                    dedup_names(&graph.tool_names().iter().map(|s| s.to_string()).collect::<Vec<_>>());
                candidates.push(Instance {
                    id: candidate_id,
                    query,
                    response,
                    gold_tools,
                    category_hint: None,
                });
            }
        }
    }
    *rejected.get_mut(RejectReason::ParseError.label()).unwrap() += malformed_total;

    // Phase 4: ordered commit. Each candidate is validated against the
    // pool as of its turn, so accepted instances also dedup against
    // each other; arrivals after the budget is met are not appended.
    let mut pool: Vec<Instance> = dataset.to_vec();
    let mut appended = Vec::new();
    let mut accepted_count = 0usize;
    for candidate in candidates.iter() {
        if accepted_count >= budget {
            *rejected.get_mut(RejectReason::Budget.label()).unwrap() += 1;
            continue;
        }
        match validate_instance(candidate, store, &pool, config) {
            Verdict::Accept => {
                accepted_count += 1;
                appended.push(candidate.id.clone());
                pool.push(candidate.clone());
            }
            Verdict::Reject(reason) => {
                *rejected.get_mut(reason.label()).unwrap() += 1;
            }
        }
    }

    let mut warnings = Vec::new();
    if accepted_count < budget {
        let warning = format!(
            "budget shortfall: accepted {accepted_count} of {budget} budgeted instances"
        );
        log::warn!("{warning}");
        warnings.push(warning);
    }
    let generated_count = candidates.len() + malformed_total;
    let report = UpdateReport {
        scored_count,
        filtered_count: filtered.len(),
        generated_count,
        accepted_count,
        budget,
        rejected,
        appended,
        prompts,
        warnings,
    };
    debug_assert_eq!(
        report.accepted_count + report.rejected.values().sum::<usize>(),
        report.generated_count
    );
    Ok((pool, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::{ConstScorer, KeywordScorer, ReplayGenerator};
    use crate::seed::rng_for_seed;
    use crate::store::load_tool_store;
    use std::io::Cursor;

    fn lp(values: &[f64]) -> TokenLogProbs {
        let tokens = values.iter().map(|_| "t".to_owned()).collect();
        TokenLogProbs::new(tokens, values.to_vec()).unwrap()
    }

    #[test]
    fn perplexity_worked_examples() {
        let half = -std::f64::consts::LN_2;
        assert_eq!(perplexity(&lp(&[half; 8])).unwrap(), 2.0);
        assert_eq!(perplexity(&lp(&[0.0, 0.0])).unwrap(), 1.0);
        let h = perplexity(&lp(&[-1.0, -3.0])).unwrap();
        assert!((h - 2.0f64.exp().powi(2) / 1.0).abs() < 1e-9 || (h - (2.0f64).exp()).abs() < 1e-9);
        assert!((h - std::f64::consts::E.powi(2)).abs() < 1e-9);
        assert!(matches!(
            perplexity(&TokenLogProbs::new(vec![], vec![]).unwrap()),
            Err(Error::EmptyTokenSequence)
        ));
    }

    #[test]
    fn perplexity_length_weighted_geometric_mean() {
        let a = [-0.3, -1.7];
        let b = [-0.9, -0.2, -2.5, -0.4, -1.1, -0.6];
        let joined: Vec<f64> = a.iter().chain(&b).copied().collect();
        let h_all = perplexity(&lp(&joined)).unwrap();
        let h_a = perplexity(&lp(&a)).unwrap();
        let h_b = perplexity(&lp(&b)).unwrap();
        let recombined = (h_a.ln() * 2.0 + h_b.ln() * 6.0) / 8.0;
        assert!((h_all.ln() - recombined).abs() < 1e-12);
    }

    fn scored(id: &str, perplexity: f64) -> ScoredInstance {
        ScoredInstance {
            instance: Instance {
                id: id.to_owned(),
                query: "q".to_owned(),
                response: "r".to_owned(),
                gold_tools: vec!["A".to_owned()],
                category_hint: None,
            },
            perplexity,
            response_token_count: 1,
        }
    }

    #[test]
    fn filter_selects_top_sigma_percent() {
        let items: Vec<ScoredInstance> = (0..10)
            .map(|i| scored(&format!("i{i}"), 1.0 + i as f64))
            .collect();
        let kept = filter_high_perplexity(items.clone(), 20.0);
        let ids: Vec<&str> = kept.iter().map(|s| s.instance.id.as_str()).collect();
        assert_eq!(ids, vec!["i9", "i8"]);
        assert_eq!(filter_high_perplexity(items.clone(), 100.0).len(), 10);
        // All-equal perplexities: lexicographically first ids win.
        let flat: Vec<ScoredInstance> =
            (0..10).map(|i| scored(&format!("i{i}"), 2.0)).collect();
        let kept = filter_high_perplexity(flat, 25.0);
        let ids: Vec<&str> = kept.iter().map(|s| s.instance.id.as_str()).collect();
        assert_eq!(ids, vec!["i0", "i1", "i2"]);
    }

    #[test]
    fn filter_size_matches_sort_oracle() {
        let mut rng = rng_for_seed(5);
        for n in [1usize, 7, 20, 100, 133] {
            for sigma in [0.5, 20.0, 33.0, 100.0] {
                let items: Vec<ScoredInstance> = (0..n)
                    .map(|i| scored(&format!("i{i:04}"), 1.0 + rng.random_range(0.0..5.0)))
                    .collect();
                let expected_size = ((sigma * n as f64) / 100.0).ceil() as usize;
                let kept = filter_high_perplexity(items.clone(), sigma);
                assert_eq!(kept.len(), expected_size.min(n));
                // Oracle: full descending sort, take the prefix.
                let mut oracle = items;
                oracle.sort_by(|a, b| {
                    b.perplexity
                        .total_cmp(&a.perplexity)
                        .then_with(|| a.instance.id.cmp(&b.instance.id))
                });
                oracle.truncate(kept.len());
                let kept_ids: Vec<&str> =
                    kept.iter().map(|s| s.instance.id.as_str()).collect();
                let oracle_ids: Vec<&str> =
                    oracle.iter().map(|s| s.instance.id.as_str()).collect();
                assert_eq!(kept_ids, oracle_ids);
            }
        }
    }

    fn demo_store() -> ToolStore {
        let mut lines = Vec::new();
        for name in ["ZORK", "ALPHA", "BETA", "GAMMA", "DELTA"] {
            lines.push(format!(
                r#"{{"name":"{name}","params":[{{"name":"x","type":"string"}}],"return_type":"string","category":"core","demonstration":"{name}(string: x): demo of {name}"}}"#
            ));
        }
        for i in 0..5 {
            lines.push(format!(
                r#"{{"name":"EXTRA_{i}","params":[],"return_type":"string","category":"spare","demonstration":"EXTRA_{i}(): spare tool {i}"}}"#
            ));
        }
        load_tool_store(Cursor::new(lines.join("\n"))).unwrap()
    }

    fn four_call_response(first: &str, filler: &str) -> String {
        format!(
            "[{first}(x: go) → %s1] [ALPHA(x: %s1) → %s2] [BETA(x: %s2) → %s3] \
             [GAMMA(x: %s3) → %s4] {filler} ### done"
        )
    }

    fn instance(id: &str, first: &str, filler: &str) -> Instance {
        Instance {
            id: id.to_owned(),
            query: format!("solve task {id}"),
            response: four_call_response(first, filler),
            gold_tools: vec![
                first.to_owned(),
                "ALPHA".to_owned(),
                "BETA".to_owned(),
                "GAMMA".to_owned(),
            ],
            category_hint: None,
        }
    }

    #[test]
    fn prompt_tools_always_include_gold() {
        let store = demo_store();
        let config = IsifConfig::default();
        let seed_instance = instance("s1", "ZORK", "please");
        for seed in 0..20u64 {
            let mut rng = rng_for_seed(seed);
            let tools = sample_prompt_tools(&seed_instance, &store, &config, &mut rng).unwrap();
            let names: BTreeSet<&str> = tools.iter().map(|t| t.name.as_str()).collect();
            assert!(names.contains("ZORK"));
            assert!(names.contains("ALPHA"));
            assert!(tools.len() >= 5 && tools.len() <= 7);
            assert_eq!(names.len(), tools.len());
        }
    }

    #[test]
    fn prompt_tools_prefer_gold_categories() {
        let store = demo_store();
        let config = IsifConfig {
            tools_per_prompt: (5, 5),
            ..IsifConfig::default()
        };
        // Gold covers 4 of 5 "core" tools; the single fill slot must be
        // the remaining core tool, never a spare.
        let mut rng = rng_for_seed(3);
        let tools =
            sample_prompt_tools(&instance("s1", "ZORK", "x"), &store, &config, &mut rng).unwrap();
        let names: BTreeSet<&str> = tools.iter().map(|t| t.name.as_str()).collect();
        assert!(names.contains("DELTA"));
        assert!(names.iter().all(|n| !n.starts_with("EXTRA_")));
    }

    #[test]
    fn oversized_gold_set_is_an_error() {
        let store = demo_store();
        let config = IsifConfig {
            tools_per_prompt: (2, 3),
            ..IsifConfig::default()
        };
        let mut rng = rng_for_seed(0);
        let err = sample_prompt_tools(&instance("s1", "ZORK", "x"), &store, &config, &mut rng)
            .unwrap_err();
        assert!(matches!(err, Error::PromptToolCount { got: 4, .. }));
    }

    #[test]
    fn selfinstruct_prompt_sections() {
        let store = demo_store();
        let config = IsifConfig::default();
        let seed_instance = instance("s1", "ZORK", "x");
        let mut rng = rng_for_seed(1);
        let tools = sample_prompt_tools(&seed_instance, &store, &config, &mut rng).unwrap();
        let prompt = build_selfinstruct_prompt(&seed_instance, &tools, &config).unwrap();
        assert!(prompt.contains("### You can use the following APIs:"));
        assert!(prompt.contains("demo of ZORK"));
        assert!(prompt.contains("### Here are some usage examples:"));
        assert!(prompt.contains("Query 1: solve task s1"));
        assert!(prompt.contains("Response 1: [ZORK(x: go)"));
        assert!(prompt.contains("extra five queries"));
        assert!(prompt.contains("four tools at least"));

        let err = build_selfinstruct_prompt(&seed_instance, &tools[..2], &config).unwrap_err();
        assert!(matches!(err, Error::PromptToolCount { .. }));
    }

    #[test]
    fn generated_blocks_parse_and_malformed_are_counted() {
        let text = "Query 1: first thing\nResponse 1: [A(x: 1) → %s1] done\n\
                    Query 2: second thing\nno response header here\n\
                    Query 3: third thing\nResponse 3: [B(y: 2) → %s1] fine";
        let (blocks, malformed) = parse_generated(text);
        assert_eq!(blocks.len(), 2);
        assert_eq!(malformed, 1);
        assert_eq!(blocks[0].0, "first thing");
        assert!(blocks[1].1.starts_with("[B(y: 2)"));

        assert_eq!(parse_generated(""), (Vec::new(), 0));
        assert_eq!(parse_generated("total nonsense").1, 1);
    }

    #[test]
    fn gates_fire_in_order() {
        let store = demo_store();
        let config = IsifConfig::default();
        let pool = vec![instance("p1", "ZORK", "some existing narrative")];

        let broken = Instance {
            response: "[ZORK(x: ".to_owned(),
            ..instance("c1", "ZORK", "x")
        };
        assert_eq!(
            validate_instance(&broken, &store, &pool, &config),
            Verdict::Reject(RejectReason::ParseError)
        );

        let unknown_tool = Instance {
            response: "[WHO(x: 1) → %s1] [ALPHA(x: %s1) → %s2] [BETA(x: %s2) → %s3] \
                       [GAMMA(x: %s3) → %s4] unusual text keeps this clear of the dedup gate"
                .to_owned(),
            ..instance("c2", "ALPHA", "x")
        };
        assert_eq!(
            validate_instance(&unknown_tool, &store, &pool, &config),
            Verdict::Reject(RejectReason::TypeError)
        );

        let three_tools = Instance {
            response: "[ALPHA(x: 1) → %s1] [BETA(x: %s1) → %s2] [GAMMA(x: %s2) → %s3] \
                       completely fresh wording with plenty of extra padding tokens"
                .to_owned(),
            ..instance("c3", "ALPHA", "x")
        };
        assert_eq!(
            validate_instance(&three_tools, &store, &pool, &config),
            Verdict::Reject(RejectReason::TooFewTools)
        );

        let copy = Instance {
            id: "c4".to_owned(),
            ..pool[0].clone()
        };
        assert_eq!(
            validate_instance(&copy, &store, &pool, &config),
            Verdict::Reject(RejectReason::Duplicate)
        );

        let fresh = Instance {
            response: four_call_response(
                "DELTA",
                "meanwhile a thoroughly different narrative with many novel words \
                 about gardens rivers mountains and the weather of distant planets",
            ),
            ..instance("c5", "DELTA", "x")
        };
        assert_eq!(
            validate_instance(&fresh, &store, &pool, &config),
            Verdict::Accept
        );
    }

    #[test]
    fn step_grows_dataset_and_balances_report() {
        let store = demo_store();
        // 10 instances; the two ZORK users are the hard ones.
        let mut dataset = Vec::new();
        for i in 0..10 {
            let first = if i < 2 { "ZORK" } else { "DELTA" };
            dataset.push(instance(
                &format!("i{i:02}"),
                first,
                &format!("case {i} narrative mentions topic{i} and detail{i}"),
            ));
        }
        let scorer = KeywordScorer {
            keyword: "ZORK".to_owned(),
            hot: -3.0,
            cold: -0.1,
        };
        // Filtered order is (i00, i01); one completion each, each with
        // one novel valid instance. Fillers share no words so the second
        // candidate is not a near-duplicate of the first.
        let completion = |filler: &str| {
            format!(
                "Query 1: a new task\nResponse 1: {}",
                four_call_response("ZORK", filler)
            )
        };
        let generator = ReplayGenerator::new(vec![
            vec![completion(
                "entirely fresh story wandering meadow paths gathering wild herbs \
                 before dusk settles quietly",
            )],
            vec![completion(
                "another account follows harbor cranes loading crates while gulls \
                 circle an evening tide",
            )],
        ]);
        let config = IsifConfig::default();
        let (updated, report) = isif_step(&dataset, &store, &scorer, &generator, &config, 11)
            .unwrap();

        assert_eq!(report.scored_count, 10);
        assert_eq!(report.filtered_count, 2);
        assert_eq!(report.budget, 2);
        assert_eq!(report.generated_count, 2);
        assert_eq!(report.accepted_count, 2);
        assert_eq!(
            report.accepted_count + report.rejected.values().sum::<usize>(),
            report.generated_count
        );
        assert!(report.warnings.is_empty());
        assert_eq!(updated.len(), 12);
        // Originals intact, in order, then the appended ids.
        assert_eq!(updated[..10], dataset[..]);
        assert_eq!(report.appended, vec!["i00-g1", "i01-g1"]);
        assert_eq!(report.prompts.len(), 2);
        assert!(report.prompts.iter().all(|p| p.contains("demo of ZORK")));
    }

    #[test]
    fn step_is_deterministic() {
        let store = demo_store();
        let dataset: Vec<Instance> = (0..6)
            .map(|i| {
                instance(
                    &format!("i{i}"),
                    "DELTA",
                    &format!("story {i} about item{i}"),
                )
            })
            .collect();
        let scorer = ConstScorer { logprob: -0.25 };
        let run = || {
            let generator = ReplayGenerator::new(vec![vec![], vec![]]);
            isif_step(&dataset, &store, &scorer, &generator, &IsifConfig::default(), 7).unwrap()
        };
        let (data_a, report_a) = run();
        let (data_b, report_b) = run();
        assert_eq!(data_a, data_b);
        assert_eq!(
            serde_json::to_string(&report_a).unwrap(),
            serde_json::to_string(&report_b).unwrap()
        );
        // Nothing generated: dataset unchanged, shortfall warned.
        assert_eq!(data_a, dataset);
        assert_eq!(report_a.accepted_count, 0);
        assert_eq!(report_a.warnings.len(), 1);
    }

    #[test]
    fn config_bounds_are_validated() {
        let bad_sigma = IsifConfig {
            sigma_percent: 0.0,
            ..IsifConfig::default()
        };
        assert!(bad_sigma.validate().is_err());
        let bad_range = IsifConfig {
            tools_per_prompt: (6, 5),
            ..IsifConfig::default()
        };
        assert!(bad_range.validate().is_err());
        let bad_dedup = IsifConfig {
            dedup_threshold: 1.5,
            ..IsifConfig::default()
        };
        assert!(bad_dedup.validate().is_err());
        assert!(IsifConfig::default().validate().is_ok());
    }
}
