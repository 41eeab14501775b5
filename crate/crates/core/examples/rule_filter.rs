//! The three-stage candidate filter on hand-built candidates: the same
//! retrieval list resolves differently depending on which rules are enabled.
//!
//! cargo run --example rule_filter

use std::sync::Arc;

use hopedit::memory::ScoredCandidate;
use hopedit::model::{Slot, SubProblem};
use hopedit::rules::{candidate_filter, FilterContext};
use hopedit::{AliasTable, FactEdit, FilterFlags, RuleSet};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let rules = RuleSet::parse(
        "father_of => parent_of\nparent_of => relative_of\n",
        "lives_in_city & city_in_continent => lives_in_continent\n",
    )?;
    for (a, b) in rules.closure_pairs().iter().filter(|(a, b)| a != b) {
        println!("{a} => {b}");
    }

    let mut aliases = AliasTable::new();
    aliases.insert("Leila Haddad", ["L. Haddad"]);
    let aliases = Arc::new(aliases);

    // hop 2 of "Leila Haddad -lives_in_city-> Beirut -city_in_continent-> ?"
    let path_relations = ["lives_in_city".to_string(), "city_in_continent".to_string()];
    let hop_subjects = ["Leila Haddad".to_string(), "Beirut".to_string()];
    let hop = SubProblem::new(2, Slot::Bound("Beirut".into()), "city_in_continent")?;
    let candidates = vec![
        candidate("e7", "L. Haddad", "lives_in_continent", "Europe", 0.41, 1),
        candidate("e3", "Byblos", "city_in_continent", "Africa", 0.63, 2),
    ];

    let runs = [
        ("full", FilterFlags::default()),
        ("no composition", FilterFlags { disable_composition: true, ..FilterFlags::default() }),
    ];
    for (label, flags) in runs {
        for eta in [0.6, 0.7] {
            let ctx = FilterContext {
                path_relations: &path_relations,
                hop_subjects: &hop_subjects,
                aliases: &aliases,
                rules: &rules,
                flags,
            };
            match candidate_filter(eta, &candidates, &hop, &ctx) {
                Some(o) => println!(
                    "{label:>14} eta {eta}: {} via {} ({}, {} hops)",
                    o.object,
                    o.source.as_str(),
                    o.chosen_edit_id,
                    o.hops_consumed
                ),
                None => println!("{label:>14} eta {eta}: no edit applies, ask the model"),
            }
        }
    }
    Ok(())
}

fn candidate(id: &str, s: &str, r: &str, o: &str, score: f64, rank: usize) -> ScoredCandidate {
    ScoredCandidate {
        edit: FactEdit::new(id, s, r, None, o).unwrap(),
        score,
        rank,
    }
}
