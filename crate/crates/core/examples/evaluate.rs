//! Batch-editing evaluation on the desk dataset: the same questions answered
//! with growing numbers of edits in memory at once.
//!
//! cargo run --example evaluate

use std::path::PathBuf;
use std::sync::Arc;

use hopedit::evaluation::{run_experiment, BatchSize, Dataset, ExperimentConfig, Pipeline};
use hopedit::gateway::PromptTemplates;
use hopedit::{EmbedderConfig, MockKnowledgeBase, RuleSet, TargetModel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/desk");
    let dataset = Dataset::load(&dir.join("dataset.json"))?;
    let rules = RuleSet::load(Some(&dir.join("implications.txt")), Some(&dir.join("compositions.txt")))?;
    let kb = MockKnowledgeBase::from_instances(&dataset.instances, &dataset.merged_aliases());
    let model = TargetModel::new(Arc::new(kb), PromptTemplates::default(), "mock");
    let pipeline = Pipeline { embedder: EmbedderConfig::default().build()?, rules: &rules, model: &model };

    for batch_size in [BatchSize::Count(1), BatchSize::Count(5), BatchSize::All] {
        let config = ExperimentConfig { batch_size, rounds: 3, seed: 42, jobs: 4, ..Default::default() };
        let run = run_experiment(&dataset, &config, &pipeline)?;
        let r = &run.report;
        println!(
            "k = {:>3}  {} batches  M-Acc {:6.2}  H-Acc {:6.2}",
            batch_size.to_string(),
            r.batches.len(),
            r.m_acc * 100.0,
            r.h_acc * 100.0
        );
    }
    Ok(())
}
