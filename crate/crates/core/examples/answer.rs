//! Answer the sample questions against the edited memory with a mock model,
//! printing where each hop's answer came from.
//!
//! cargo run --example answer

use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;
use std::sync::Arc;

use hopedit::gateway::PromptTemplates;
use hopedit::memory::read_edits_jsonl;
use hopedit::{solve, AliasTable, EditCollection, EditIndex, MockKnowledgeBase, RuleSet, TargetModel, TraversalConfig, TrigramEmbedder};

const QUESTIONS: [&str; 3] = [
    "Who runs the company that Sara Haddad's husband works for?",
    "Who is the president of the country where Azar Nafisi was born?",
    "On which continent is the city Leila Haddad lives in?",
];

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/sample");
    let aliases = AliasTable::new();
    let edits = read_edits_jsonl(BufReader::new(File::open(dir.join("edits.jsonl"))?))?;
    let edits = EditCollection::from_edits(edits, &aliases)?;
    let index = EditIndex::build(&edits, Arc::new(TrigramEmbedder::new(512)?), Arc::new(aliases))?;
    let rules = RuleSet::load(Some(&dir.join("implications.txt")), Some(&dir.join("compositions.txt")))?;
    let kb = MockKnowledgeBase::load(&dir.join("mock_kb.json"))?;
    let model = TargetModel::new(Arc::new(kb), PromptTemplates::default(), "mock");

    for question in QUESTIONS {
        let out = solve(question, &index, &rules, &model, &TraversalConfig::default())?;
        println!("{question}");
        for hop in &out.trace.hops {
            let edit = hop.chosen_edit_id.as_deref().unwrap_or("-");
            let mark = if hop.subsumed { " (subsumed)" } else { "" };
            println!(
                "  {}. {} -> {}  [{} {edit}]{mark}",
                hop.sub_problem.hop_index,
                hop.sub_problem.relation,
                hop.resolved_object.as_deref().unwrap_or("~"),
                hop.source.as_str(),
            );
        }
        println!("  answer: {}\n", out.trace.final_answer.as_deref().unwrap_or("(none)"));
    }
    Ok(())
}
