//! Index the sample edits and show the top-k ranking for a few hop queries.
//!
//! cargo run --example retrieve

use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;
use std::sync::Arc;

use hopedit::memory::read_edits_jsonl;
use hopedit::model::{Slot, SubProblem};
use hopedit::{AliasTable, EditCollection, EditIndex, TrigramEmbedder};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/sample/edits.jsonl");
    let aliases = AliasTable::new();
    let edits = EditCollection::from_edits(read_edits_jsonl(BufReader::new(File::open(path)?))?, &aliases)?;
    let index = EditIndex::build(&edits, Arc::new(TrigramEmbedder::new(512)?), Arc::new(aliases))?;
    println!("{} edits, index {}", index.len(), &index.fingerprint()[..12]);

    for (subject, relation) in [
        ("Ahmed Karimi", "employer"),
        ("Iran", "head_of_state"),
        ("Leila Haddad", "lives_in_city"),
    ] {
        let query = SubProblem::new(1, Slot::Bound(subject.into()), relation)?;
        println!("\n{}", query.to_text());
        for c in index.retrieve_top_k(&query, 3)? {
            println!("  #{} {:.3}  {}", c.rank, c.score, c.edit.edited_triplet().to_text());
        }
    }
    Ok(())
}
