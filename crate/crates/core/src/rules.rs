//! Relation implication rules, horn composition rules and the three-stage
//! candidate filter applied to retrieved edits.
//!
//! For every candidate, in rank order, the filter tries:
//!
//! 1. implication: the hop's subject alias-matches the edit's subject and the
//!    hop relation implies the edit relation (direction configurable);
//! 2. composition: a horn rule whose body is the run of path relations ending
//!    at the current hop and whose head is the edit relation, with the edit's
//!    subject alias-matching the entity bound at the start of the run;
//! 3. similarity: the retrieval score is at least `eta`.
//!
//! The first success wins. If no candidate passes, the caller asks the model.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::memory::ScoredCandidate;
use crate::model::{normalize_relation, AliasTable, FactEdit, ResolutionSource, SubProblem};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ImplicationRule {
    pub antecedent: String,
    pub consequent: String,
}

impl ImplicationRule {
    pub fn new(antecedent: &str, consequent: &str) -> Result<Self, String> {
        let antecedent = normalize_relation(antecedent).map_err(|e| e.to_string())?;
        let consequent = normalize_relation(consequent).map_err(|e| e.to_string())?;
        if antecedent == consequent {
            return Err(format!("rule {antecedent} => {consequent} is trivial"));
        }
        Ok(Self {
            antecedent,
            consequent,
        })
    }
}

impl fmt::Display for ImplicationRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} => {}", self.antecedent, self.consequent)
    }
}

/// `body[0](s, z1) & ... & body[n-1](z_{n-1}, o) => head(s, o)`
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HornRule {
    pub body: Vec<String>,
    pub head: String,
}

impl HornRule {
    pub fn new<S: AsRef<str>>(body: &[S], head: &str) -> Result<Self, String> {
        let body = body
            .iter()
            .map(|r| normalize_relation(r.as_ref()).map_err(|e| e.to_string()))
            .collect::<Result<Vec<_>, _>>()?;
        let head = normalize_relation(head).map_err(|e| e.to_string())?;
        if body.len() < 2 {
            return Err(format!("horn rule body needs at least 2 relations, got {}", body.len()));
        }
        if body.contains(&head) {
            return Err(format!("head {head} appears in its own body"));
        }
        Ok(Self { body, head })
    }
}

impl fmt::Display for HornRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} => {}", self.body.join(" & "), self.head)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{source_name} line {line}: {message}")]
pub struct RuleParseError {
    pub source_name: String,
    pub line: usize,
    pub message: String,
}

#[derive(Debug, thiserror::Error)]
pub enum RuleLoadError {
    #[error(transparent)]
    Parse(#[from] RuleParseError),
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Implication and composition rules with the implication closure
/// precomputed at construction.
#[derive(Debug, Clone, Default)]
pub struct RuleSet {
    implications: Vec<ImplicationRule>,
    compositions: Vec<HornRule>,
    closure: HashMap<String, BTreeSet<String>>,
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let line = line.split('#').next().unwrap_or("").trim();
        (!line.is_empty()).then_some((i + 1, line))
    })
}

impl RuleSet {
    pub fn new(implications: Vec<ImplicationRule>, compositions: Vec<HornRule>) -> Self {
        let mut seen = HashSet::new();
        let implications: Vec<_> = implications
            .into_iter()
            .filter(|r| seen.insert(r.clone()))
            .collect();
        let mut seen = HashSet::new();
        let compositions: Vec<_> = compositions
            .into_iter()
            .filter(|r| seen.insert(r.clone()))
            .collect();
        let closure = transitive_closure(&implications);
        Self {
            implications,
            compositions,
            closure,
        }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// Parses implication lines `a => b` and horn lines `r1 & r2 [& ...] => head`.
    /// `#` starts a comment.
    pub fn parse(implication_text: &str, composition_text: &str) -> Result<Self, RuleParseError> {
        let err = |source_name: &str, line: usize, message: String| RuleParseError {
            source_name: source_name.to_string(),
            line,
            message,
        };
        let mut implications = Vec::new();
        for (line_no, line) in content_lines(implication_text) {
            let parts: Vec<&str> = line.split("=>").collect();
            let [lhs, rhs] = parts.as_slice() else {
                return Err(err("implications", line_no, format!("expected `a => b`, got {line:?}")));
            };
            implications.push(
                ImplicationRule::new(lhs, rhs).map_err(|m| err("implications", line_no, m))?,
            );
        }
        let mut compositions = Vec::new();
        for (line_no, line) in content_lines(composition_text) {
            let parts: Vec<&str> = line.split("=>").collect();
            let [lhs, rhs] = parts.as_slice() else {
                return Err(err(
                    "compositions",
                    line_no,
                    format!("expected `r1 & r2 => head`, got {line:?}"),
                ));
            };
            let body: Vec<&str> = lhs.split('&').collect();
            compositions.push(HornRule::new(&body, rhs).map_err(|m| err("compositions", line_no, m))?);
        }
        Ok(Self::new(implications, compositions))
    }

    /// Loads rule files; a missing path means an empty rule list.
    pub fn load(
        implication_path: Option<&Path>,
        composition_path: Option<&Path>,
    ) -> Result<Self, RuleLoadError> {
        let read = |path: Option<&Path>| -> Result<String, RuleLoadError> {
            match path {
                Some(p) => fs::read_to_string(p).map_err(|source| RuleLoadError::Io {
                    path: p.display().to_string(),
                    source,
                }),
                None => Ok(String::new()),
            }
        };
        Ok(Self::parse(&read(implication_path)?, &read(composition_path)?)?)
    }

    pub fn implications(&self) -> &[ImplicationRule] {
        &self.implications
    }

    pub fn compositions(&self) -> &[HornRule] {
        &self.compositions
    }

    /// True iff `r1 => r2` is in the reflexive-transitive closure.
    pub fn implies(&self, r1: &str, r2: &str) -> bool {
        r1 == r2 || self.closure.get(r1).is_some_and(|reach| reach.contains(r2))
    }

    /// Pairs `(a, b)` with `a != b` in the closure, sorted.
    pub fn closure_pairs(&self) -> Vec<(String, String)> {
        let mut pairs: Vec<_> = self
            .closure
            .iter()
            .flat_map(|(a, reach)| reach.iter().map(move |b| (a.clone(), b.clone())))
            .filter(|(a, b)| a != b)
            .collect();
        pairs.sort();
        pairs
    }
}

fn transitive_closure(rules: &[ImplicationRule]) -> HashMap<String, BTreeSet<String>> {
    let mut edges: HashMap<&str, Vec<&str>> = HashMap::new();
    for r in rules {
        edges.entry(&r.antecedent).or_default().push(&r.consequent);
    }
    let mut closure = HashMap::new();
    for &start in edges.keys() {
        let mut reach = BTreeSet::new();
        let mut queue = VecDeque::from([start]);
        while let Some(node) = queue.pop_front() {
            for &next in edges.get(node).map(Vec::as_slice).unwrap_or_default() {
                if reach.insert(next.to_string()) {
                    queue.push_back(next);
                }
            }
        }
        closure.insert(start.to_string(), reach);
    }
    closure
}

/// Which relation must imply which for stage 1 to accept a candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImplicationDirection {
    /// `r(hop) => r(edit)`
    #[default]
    QueryImpliesEdit,
    /// `r(edit) => r(hop)`
    EditImpliesQuery,
}

/// Stage 1. Returns the edit's new object when subjects alias-match and the
/// relations are related by implication in the configured direction.
pub fn match_implication<'e>(
    p: &SubProblem,
    e: &'e FactEdit,
    aliases: &AliasTable,
    rules: &RuleSet,
    direction: ImplicationDirection,
) -> Option<&'e str> {
    let subject = p.subject.as_bound()?;
    if !aliases.matches(subject, e.subject()) {
        return None;
    }
    let related = match direction {
        ImplicationDirection::QueryImpliesEdit => rules.implies(&p.relation, e.relation()),
        ImplicationDirection::EditImpliesQuery => rules.implies(e.relation(), &p.relation),
    };
    related.then(|| e.new_object())
}

/// Stage 2. `path_relations` and `hop_subjects` cover hops `1..=j`, where
/// `hop_subjects[0]` is the start entity. On success returns the edit's new
/// object and the length `m` of the rule body, meaning hops `j-m+1..=j` are
/// answered together.
pub fn match_composition<'e, S: AsRef<str>, T: AsRef<str>>(
    path_relations: &[S],
    hop_subjects: &[T],
    e: &'e FactEdit,
    aliases: &AliasTable,
    rules: &RuleSet,
) -> Option<(&'e str, usize)> {
    let j = path_relations.len();
    debug_assert_eq!(j, hop_subjects.len());
    rules.compositions().iter().find_map(|rule| {
        let m = rule.body.len();
        if rule.head != e.relation() || m > j {
            return None;
        }
        let run = &path_relations[j - m..];
        let aligned = run.iter().zip(&rule.body).all(|(r, b)| r.as_ref() == b);
        (aligned && aliases.matches(hop_subjects[j - m].as_ref(), e.subject()))
            .then(|| (e.new_object(), m))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterFlags {
    pub disable_implication: bool,
    pub disable_composition: bool,
    pub direction: ImplicationDirection,
    /// Report every composition as resolving only the current hop.
    pub composition_current_hop_only: bool,
}

/// Everything the filter needs to know about the path so far.
#[derive(Debug, Clone, Copy)]
pub struct FilterContext<'a> {
    /// Relations of hops `1..=j`.
    pub path_relations: &'a [String],
    /// Bound subjects of hops `1..=j`; the first is the start entity.
    pub hop_subjects: &'a [String],
    pub aliases: &'a AliasTable,
    pub rules: &'a RuleSet,
    pub flags: FilterFlags,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilterOutcome {
    pub object: String,
    pub source: ResolutionSource,
    pub hops_consumed: usize,
    pub chosen_edit_id: String,
    pub score: f64,
}

/// Runs the three stages over `candidates` in rank order.
pub fn candidate_filter(
    eta: f64,
    candidates: &[ScoredCandidate],
    p: &SubProblem,
    ctx: &FilterContext<'_>,
) -> Option<FilterOutcome> {
    let outcome = |c: &ScoredCandidate, object: &str, source, hops_consumed| FilterOutcome {
        object: object.to_string(),
        source,
        hops_consumed,
        chosen_edit_id: c.edit.edit_id().to_string(),
        score: c.score,
    };
    for c in candidates {
        if !ctx.flags.disable_implication {
            if let Some(o) = match_implication(p, &c.edit, ctx.aliases, ctx.rules, ctx.flags.direction) {
                return Some(outcome(c, o, ResolutionSource::MemoryImplication, 1));
            }
        }
        if !ctx.flags.disable_composition {
            if let Some((o, m)) =
                match_composition(ctx.path_relations, ctx.hop_subjects, &c.edit, ctx.aliases, ctx.rules)
            {
                let m = if ctx.flags.composition_current_hop_only { 1 } else { m };
                return Some(outcome(c, o, ResolutionSource::MemoryComposition, m));
            }
        }
        if c.score >= eta {
            return Some(outcome(c, c.edit.new_object(), ResolutionSource::MemorySimilarity, 1));
        }
    }
    None
}
