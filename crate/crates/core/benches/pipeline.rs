//! Benchmarks for the data-parallel inner loops. Run once with the
//! default features and once with `--no-default-features` to compare
//! the rayon and sequential paths:
//!
//! ```text
//! cargo bench -p toolforge-core
//! cargo bench -p toolforge-core --no-default-features
//! ```

use std::hint::black_box;
use std::io::Cursor;

use criterion::{criterion_group, criterion_main, Criterion};

use toolforge_core::curriculum::{assemble_stage, Stage};
use toolforge_core::dataset::Instance;
use toolforge_core::metrics::evaluate_dataset;
use toolforge_core::retriever::{build_index, HashingEmbedder};
use toolforge_core::store::{load_tool_store, ToolStore};

const CATEGORIES: [&str; 6] = [
    "navigation",
    "weather",
    "medical",
    "finance",
    "calendar",
    "messaging",
];

fn synthetic_store(tools_per_category: usize) -> ToolStore {
    let mut lines = Vec::new();
    for category in CATEGORIES {
        for i in 0..tools_per_category {
            let name = format!("{}_{i}", category.to_uppercase());
            lines.push(format!(
                r#"{{"name":"{name}","params":[{{"name":"query","type":"string"}},{{"name":"limit","type":"int"}}],"return_type":"string","category":"{category}","demonstration":"{name}(string: query, int: limit): look up {category} data, item {i}, and return the best match"}}"#
            ));
        }
    }
    load_tool_store(Cursor::new(lines.join("\n"))).unwrap()
}

fn synthetic_dataset(store: &ToolStore, count: usize) -> Vec<Instance> {
    let names: Vec<&str> = store.tools().map(|t| t.name.as_str()).collect();
    (0..count)
        .map(|i| {
            let a = names[i % names.len()];
            let b = names[(i * 7 + 3) % names.len()];
            let c = names[(i * 13 + 5) % names.len()];
            let response = format!(
                "[{a}(query: item {i}, limit: 3) → %s1] \
                 [{b}(query: %s1, limit: 2) → %s2] \
                 [{c}(query: %s2, limit: 1) → %s3] \
                 ### The answer for case {i} combines all three lookups."
            );
            let mut gold = vec![a.to_owned(), b.to_owned(), c.to_owned()];
            gold.dedup();
            Instance {
                id: format!("bench-{i:04}"),
                query: format!("find, rank, and summarize the records for case {i}"),
                response,
                gold_tools: gold,
                category_hint: None,
            }
        })
        .collect()
}

fn bench_pipeline(c: &mut Criterion) {
    let store = synthetic_store(10);
    let dataset = synthetic_dataset(&store, 64);
    let pairs: Vec<(&str, &Instance)> = dataset
        .iter()
        .map(|inst| (inst.response.as_str(), inst))
        .collect();
    let embedder = HashingEmbedder::default();
    let index = build_index(&store, &embedder).unwrap();

    c.bench_function("evaluate_dataset/64", |b| {
        b.iter(|| evaluate_dataset(black_box(&pairs), black_box(&store)).unwrap())
    });
    c.bench_function("build_index/60", |b| {
        b.iter(|| build_index(black_box(&store), &embedder).unwrap())
    });
    c.bench_function("assemble_cross_category/64", |b| {
        b.iter(|| {
            assemble_stage(
                black_box(&dataset),
                Stage::CrossCategory,
                &store,
                Some((&index, &embedder)),
                5,
                10,
                42,
            )
            .unwrap()
        })
    });
}

criterion_group!(benches, bench_pipeline);
criterion_main!(benches);
