//! Record every model exchange of a run to a cassette, then rerun offline
//! from the cassette and check nothing changed.
//!
//! cargo run --example record_replay

use std::path::PathBuf;
use std::sync::Arc;

use hopedit::evaluation::{run_experiment, BatchSize, Dataset, ExperimentConfig, Pipeline};
use hopedit::gateway::{PromptTemplates, RecordingTransport, ReplayTransport};
use hopedit::{ChatTransport, EmbedderConfig, MockKnowledgeBase, RuleSet, TargetModel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/desk");
    let dataset = Dataset::load(&dir.join("dataset.json"))?;
    let rules = RuleSet::load(Some(&dir.join("implications.txt")), Some(&dir.join("compositions.txt")))?;
    let embedder = EmbedderConfig::default().build()?;
    let config = ExperimentConfig { batch_size: BatchSize::Count(4), rounds: 2, seed: 3, ..Default::default() };

    let scratch = std::env::temp_dir().join(format!("hopedit-cassette-{}.json", std::process::id()));
    let kb = MockKnowledgeBase::from_instances(&dataset.instances, &dataset.merged_aliases());
    let recorder: Arc<dyn ChatTransport> = Arc::new(RecordingTransport::new(Arc::new(kb), &scratch)?);
    let model = TargetModel::new(recorder, PromptTemplates::default(), "mock");
    let pipeline = Pipeline { embedder: embedder.clone(), rules: &rules, model: &model };
    let live = run_experiment(&dataset, &config, &pipeline)?;

    let replay = TargetModel::new(Arc::new(ReplayTransport::from_path(&scratch)?), PromptTemplates::default(), "mock");
    let pipeline = Pipeline { embedder, rules: &rules, model: &replay };
    let offline = run_experiment(&dataset, &config, &pipeline)?;

    println!("cassette {}", scratch.display());
    println!("live    M-Acc {:.2}  H-Acc {:.2}", live.report.m_acc * 100.0, live.report.h_acc * 100.0);
    println!("replay  M-Acc {:.2}  H-Acc {:.2}", offline.report.m_acc * 100.0, offline.report.h_acc * 100.0);
    println!("identical reports: {}", live.report.to_json() == offline.report.to_json());
    std::fs::remove_file(&scratch)?;
    Ok(())
}
