//! Subcommand implementations. Each returns the process exit code on
//! success; errors bubble to main, which maps them to exit codes.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use toolforge_core::curriculum::{assemble_stage, stage_schedule, Stage};
use toolforge_core::dataset::{load_dataset, load_predictions, save_dataset, Instance};
use toolforge_core::isif::{isif_step, validate_instance, IsifConfig, RejectReason, Verdict};
use toolforge_core::metrics::evaluate_dataset;
use toolforge_core::provider::{
    Embedder, EmbedderClient, Generator, GeneratorClient, HttpEndpoint, ProcessEndpoint, Scorer,
    ScorerClient,
};
use toolforge_core::retriever::{build_index, recall_at_k, retrieve, save_index, HashingEmbedder};
use toolforge_core::retriever::{load_index, ToolIndex};
use toolforge_core::store::{load_tool_store, ToolStore};
use toolforge_core::{Error, Result};

pub fn read_store(path: &Path) -> Result<ToolStore> {
    let file = File::open(path)
        .map_err(|e| Error::config(format!("cannot open store {}: {e}", path.display())))?;
    load_tool_store(BufReader::new(file))
}

pub fn read_dataset(path: &Path) -> Result<Vec<Instance>> {
    let file = File::open(path)
        .map_err(|e| Error::config(format!("cannot open dataset {}: {e}", path.display())))?;
    load_dataset(BufReader::new(file))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path)
        .map_err(|e| Error::config(format!("cannot create {}: {e}", path.display())))?;
    Ok(BufWriter::new(file))
}

fn write_json_line<W: Write, T: serde::Serialize>(mut writer: W, value: &T) -> Result<()> {
    serde_json::to_writer(&mut writer, value).map_err(std::io::Error::from)?;
    writer.write_all(b"\n")?;
    Ok(())
}

fn write_json_pretty<W: Write, T: serde::Serialize>(mut writer: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut writer, value).map_err(std::io::Error::from)?;
    writer.write_all(b"\n")?;
    Ok(())
}

/// Exactly one of `cmd`/`url`, as a scorer endpoint.
pub fn resolve_scorer(cmd: Option<&str>, url: Option<&str>) -> Result<Box<dyn Scorer>> {
    match (cmd, url) {
        (Some(cmd), None) => Ok(Box::new(ScorerClient::new(ProcessEndpoint::spawn(
            "scorer", cmd,
        )?))),
        (None, Some(url)) => Ok(Box::new(ScorerClient::new(HttpEndpoint::new("scorer", url)))),
        _ => Err(Error::config(
            "exactly one of --scorer-cmd and --scorer-url is required",
        )),
    }
}

pub fn resolve_generator(cmd: Option<&str>, url: Option<&str>) -> Result<Box<dyn Generator>> {
    match (cmd, url) {
        (Some(cmd), None) => Ok(Box::new(GeneratorClient::new(ProcessEndpoint::spawn(
            "generator", cmd,
        )?))),
        (None, Some(url)) => Ok(Box::new(GeneratorClient::new(HttpEndpoint::new(
            "generator",
            url,
        )))),
        _ => Err(Error::config(
            "exactly one of --generator-cmd and --generator-url is required",
        )),
    }
}

/// The built-in hashing embedder unless an external one is configured.
pub fn resolve_embedder(cmd: Option<&str>, url: Option<&str>) -> Result<Box<dyn Embedder>> {
    match (cmd, url) {
        (Some(cmd), None) => Ok(Box::new(EmbedderClient::new(ProcessEndpoint::spawn(
            "embedder", cmd,
        )?)?)),
        (None, Some(url)) => Ok(Box::new(EmbedderClient::new(HttpEndpoint::new(
            "embedder", url,
        ))?)),
        (None, None) => Ok(Box::new(HashingEmbedder::default())),
        _ => Err(Error::config(
            "--embedder-cmd and --embedder-url are mutually exclusive",
        )),
    }
}

/// Parse gates over every instance: parse errors, schema defects, and
/// the minimum distinct-tool count. Prints one verdict per instance and
/// a per-reason summary; exit 1 if anything failed.
pub fn cmd_validate(store: &Path, dataset: &Path, min_tools: usize) -> Result<i32> {
    let store = read_store(store)?;
    let instances = read_dataset(dataset)?;
    let gates = IsifConfig {
        min_tools_per_instance: min_tools,
        ..IsifConfig::default()
    };
    let mut counts: BTreeMap<&'static str, usize> = BTreeMap::new();
    let mut failures = 0usize;
    for instance in &instances {
        match validate_instance(instance, &store, &[], &gates) {
            Verdict::Accept => println!("{}: ok", instance.id),
            Verdict::Reject(reason) => {
                failures += 1;
                *counts.entry(reason.label()).or_default() += 1;
                println!("{}: {}", instance.id, reason.label());
            }
        }
    }
    for reason in [
        RejectReason::ParseError,
        RejectReason::TypeError,
        RejectReason::TooFewTools,
    ] {
        println!(
            "{}={}",
            reason.label(),
            counts.get(reason.label()).copied().unwrap_or(0)
        );
    }
    println!("checked {} instances, {} failed", instances.len(), failures);
    Ok(if failures == 0 { 0 } else { 1 })
}

/// Score predictions against the dataset, write the JSON report, and
/// print the ×100 table.
pub fn cmd_evaluate(
    store: &Path,
    dataset: &Path,
    predictions: &Path,
    out: Option<&Path>,
) -> Result<i32> {
    let store = read_store(store)?;
    let instances = read_dataset(dataset)?;
    let file = File::open(predictions)
        .map_err(|e| Error::config(format!("cannot open predictions {}: {e}", predictions.display())))?;
    let predictions = load_predictions(BufReader::new(file))?;
    let mut pairs: Vec<(&str, &Instance)> = Vec::with_capacity(instances.len());
    for instance in &instances {
        let response = predictions
            .get(&instance.id)
            .ok_or_else(|| Error::MissingPrediction {
                id: instance.id.clone(),
            })?;
        pairs.push((response.as_str(), instance));
    }
    let report = evaluate_dataset(&pairs, &store)?;
    if let Some(path) = out {
        write_json_pretty(create(path)?, &report)?;
    }
    print!("{}", report.to_table());
    Ok(0)
}

/// Embed every tool demonstration and save the index.
pub fn cmd_index(store: &Path, out: &Path, embedder: &dyn Embedder) -> Result<i32> {
    let store = read_store(store)?;
    let index = build_index(&store, embedder)?;
    save_index(&index, create(out)?)?;
    println!("indexed {} tools at dimension {}", index.len(), index.dim());
    Ok(0)
}

fn load_or_build_index(
    index_path: Option<&Path>,
    store_path: Option<&Path>,
    embedder: &dyn Embedder,
) -> Result<ToolIndex> {
    match (index_path, store_path) {
        (Some(path), _) => {
            let file = File::open(path)
                .map_err(|e| Error::config(format!("cannot open index {}: {e}", path.display())))?;
            load_index(BufReader::new(file))
        }
        (None, Some(store)) => build_index(&read_store(store)?, embedder),
        (None, None) => Err(Error::config("either --index or --store is required")),
    }
}

/// Top-k candidates for every dataset query, one JSON line each, plus
/// recall@k printed to stdout.
pub fn cmd_retrieve(
    store: Option<&Path>,
    index: Option<&Path>,
    dataset: &Path,
    k: usize,
    out: &Path,
    embedder: &dyn Embedder,
) -> Result<i32> {
    let index = load_or_build_index(index, store, embedder)?;
    let instances = read_dataset(dataset)?;
    let mut writer = create(out)?;
    for instance in &instances {
        let scored = retrieve(&index, embedder, &instance.query, k)?;
        let names: Vec<&str> = scored.iter().map(|(name, _)| name.as_str()).collect();
        let line = serde_json::json!({ "id": instance.id, "candidates": names });
        write_json_line(&mut writer, &line)?;
    }
    let recall = recall_at_k(&index, embedder, &instances, k)?;
    println!("recall@{k} = {recall:.4}");
    Ok(0)
}

/// Write the epoch plan, and optionally the assembled per-stage
/// examples, for the three-stage schedule.
#[allow(clippy::too_many_arguments)]
pub fn cmd_assemble(
    store: &Path,
    dataset: &Path,
    epochs: (usize, usize, usize),
    k: usize,
    distractors: usize,
    seed: u64,
    out: &Path,
    examples_out: Option<&Path>,
) -> Result<i32> {
    let store = read_store(store)?;
    let instances = read_dataset(dataset)?;
    let plan = stage_schedule(&instances, epochs)?;
    let mut writer = create(out)?;
    for entry in &plan {
        write_json_line(&mut writer, entry)?;
    }
    println!("planned {} stage-epochs over {} instances", plan.len(), instances.len());

    if let Some(path) = examples_out {
        let embedder = HashingEmbedder::default();
        let index = build_index(&store, &embedder)?;
        let mut writer = create(path)?;
        let stage_epochs = [
            (Stage::WarmUp, epochs.0),
            (Stage::InCategory, epochs.1),
            (Stage::CrossCategory, epochs.2),
        ];
        for (stage, count) in stage_epochs {
            if count == 0 {
                continue;
            }
            let retrieval = match stage {
                Stage::CrossCategory => Some((&index, &embedder as &dyn Embedder)),
                _ => None,
            };
            let examples =
                assemble_stage(&instances, stage, &store, retrieval, distractors, k, seed)?;
            for example in &examples {
                write_json_line(&mut writer, example)?;
            }
        }
    }
    Ok(0)
}

/// One dataset-update step against live scorer/generator endpoints;
/// writes the grown dataset and the step report.
#[allow(clippy::too_many_arguments)]
pub fn cmd_isif_step(
    store: &Path,
    dataset: &Path,
    config: IsifConfig,
    seed: u64,
    scorer: &dyn Scorer,
    generator: &dyn Generator,
    out: &Path,
    report_out: &Path,
) -> Result<i32> {
    let store = read_store(store)?;
    let instances = read_dataset(dataset)?;
    let (updated, report) = isif_step(&instances, &store, scorer, generator, &config, seed)?;
    save_dataset(&updated, create(out)?)?;
    write_json_pretty(create(report_out)?, &report)?;
    println!(
        "accepted {}/{} budgeted instances; dataset {} -> {}",
        report.accepted_count,
        report.budget,
        report.scored_count,
        updated.len()
    );
    for warning in &report.warnings {
        eprintln!("warning: {warning}");
    }
    Ok(0)
}

/// Default report path: the dataset output path with an extra suffix.
pub fn default_report_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".report.json");
    out.with_file_name(name)
}
