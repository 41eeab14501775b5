//! Rule ablations: the full filter against runs without implication rules,
//! without composition rules, and without both.
//!
//! cargo run --example ablation

use std::path::PathBuf;
use std::sync::Arc;

use hopedit::evaluation::{ablate, Dataset, ExperimentConfig, Pipeline};
use hopedit::gateway::PromptTemplates;
use hopedit::{EmbedderConfig, MockKnowledgeBase, RuleSet, TargetModel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/desk");
    let dataset = Dataset::load(&dir.join("dataset.json"))?;
    let rules = RuleSet::load(Some(&dir.join("implications.txt")), Some(&dir.join("compositions.txt")))?;
    let kb = MockKnowledgeBase::from_instances(&dataset.instances, &dataset.merged_aliases());
    let model = TargetModel::new(Arc::new(kb), PromptTemplates::default(), "mock");
    let pipeline = Pipeline { embedder: EmbedderConfig::default().build()?, rules: &rules, model: &model };

    let table = ablate(&dataset, &ExperimentConfig::default(), &pipeline)?;
    print!("{}", table.to_table());
    Ok(())
}
