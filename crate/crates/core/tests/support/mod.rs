//! Independent reference implementations used as test oracles. Nothing here
//! calls into the library's scoring, rule or filter code.

#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::{BTreeSet, HashMap};
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::Rng;

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

// ---- embedding oracle -------------------------------------------------------

fn fnv(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Normalized trigram-count vector, computed the long way.
pub fn embed(text: &str, dim: usize) -> Vec<f64> {
    let lower: Vec<char> = text.to_lowercase().chars().collect();
    let mut grams: Vec<String> = Vec::new();
    if lower.len() < 3 {
        grams.push(lower.iter().collect());
    } else {
        for i in 0..lower.len() - 2 {
            grams.push(lower[i..i + 3].iter().collect());
        }
    }
    let mut v = vec![0.0f64; dim];
    for g in &grams {
        v[(fnv(g.as_bytes()) % dim as u64) as usize] += 1.0;
    }
    let mut sq = 0.0;
    for x in &v {
        sq += x * x;
    }
    let n = sq.sqrt();
    v.iter().map(|x| x / n).collect()
}

/// Nonzero entries in ascending index order.
pub fn sparse(v: &[f64]) -> Vec<(usize, f64)> {
    v.iter().enumerate().filter(|(_, x)| **x != 0.0).map(|(i, x)| (i, *x)).collect()
}

/// Same summation order as a dense dot product; skipped terms are exact zeros.
pub fn sparse_dot(a: &[(usize, f64)], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for &(i, x) in a {
        s += x * b[i];
    }
    s
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

pub fn score(query: &str, edit: &str) -> f64 {
    dot(&embed(query, 512), &embed(edit, 512))
}

// ---- implication reachability ----------------------------------------------

/// Reflexive reachability over directed edges, by depth-first search.
pub fn reachable(edges: &[(String, String)], from: &str, to: &str) -> bool {
    if from == to {
        return true;
    }
    let mut adj: HashMap<&str, Vec<&str>> = HashMap::new();
    for (a, b) in edges {
        adj.entry(a.as_str()).or_default().push(b.as_str());
    }
    let mut stack = vec![from];
    let mut seen = BTreeSet::new();
    while let Some(n) = stack.pop() {
        if !seen.insert(n) {
            continue;
        }
        if n == to {
            return true;
        }
        if let Some(next) = adj.get(n) {
            stack.extend(next.iter().copied());
        }
    }
    false
}

// ---- candidate filter oracle -------------------------------------------------

#[derive(Debug, Clone)]
pub struct OCandidate {
    pub id: String,
    pub subject: String,
    pub relation: String,
    pub new_object: String,
    pub score: f64,
}

#[derive(Debug, Clone)]
pub struct OScenario {
    pub eta: f64,
    /// relations of hops 1..=j
    pub relations: Vec<String>,
    /// bound subjects of hops 1..=j
    pub subjects: Vec<String>,
    pub candidates: Vec<OCandidate>,
    pub implications: Vec<(String, String)>,
    pub horns: Vec<(Vec<String>, String)>,
    pub alias_groups: Vec<Vec<String>>,
    pub use_implication: bool,
    pub use_composition: bool,
    /// true: hop relation must imply edit relation; false: the reverse
    pub query_implies_edit: bool,
}

impl OScenario {
    fn same_entity(&self, a: &str, b: &str) -> bool {
        let (a, b) = (a.to_lowercase(), b.to_lowercase());
        a == b
            || self.alias_groups.iter().any(|g| {
                g.iter().any(|x| x.to_lowercase() == a) && g.iter().any(|x| x.to_lowercase() == b)
            })
    }
}

/// Returns `(object, source tag, edit id, hops consumed)`.
pub fn reference_filter(s: &OScenario) -> Option<(String, &'static str, String, usize)> {
    let j = s.relations.len();
    let p_rel = &s.relations[j - 1];
    let p_subj = &s.subjects[j - 1];
    for c in &s.candidates {
        // implication: r_e in closure(r_p) and the subjects agree
        if s.use_implication && s.same_entity(p_subj, &c.subject) {
            let ok = if s.query_implies_edit {
                reachable(&s.implications, p_rel, &c.relation)
            } else {
                reachable(&s.implications, &c.relation, p_rel)
            };
            if ok {
                return Some((c.new_object.clone(), "memory_implication", c.id.clone(), 1));
            }
        }
        // composition: a horn rule headed by r_e whose body is the last m hop relations
        if s.use_composition {
            for (body, head) in &s.horns {
                let m = body.len();
                if *head != c.relation || m > j {
                    continue;
                }
                let mut fits = true;
                for t in 0..m {
                    if s.relations[j - m + t] != body[t] {
                        fits = false;
                    }
                }
                if fits && s.same_entity(&s.subjects[j - m], &c.subject) {
                    return Some((c.new_object.clone(), "memory_composition", c.id.clone(), m));
                }
            }
        }
        // similarity threshold
        if c.score >= s.eta {
            return Some((c.new_object.clone(), "memory_similarity", c.id.clone(), 1));
        }
    }
    None
}

pub fn random_scenario(rng: &mut impl Rng) -> OScenario {
    let rels: Vec<String> = (0..6).map(|i| format!("r{i}")).collect();
    let subjects = ["Ann", "Bo", "Bobby", "Cy", "Di"];
    let pick_rel = |rng: &mut dyn rand::RngCore| rels[rng.gen_range(0..rels.len())].clone();
    let j = rng.gen_range(1..=4);
    let relations: Vec<String> = (0..j).map(|_| pick_rel(rng)).collect();
    let hop_subjects: Vec<String> = (0..j)
        .map(|_| subjects[rng.gen_range(0..subjects.len())].to_string())
        .collect();
    let n_imp = rng.gen_range(0..=5);
    let mut implications = Vec::new();
    while implications.len() < n_imp {
        let (a, b) = (pick_rel(rng), pick_rel(rng));
        if a != b {
            implications.push((a, b));
        }
    }
    let n_horn = rng.gen_range(0..=3);
    let mut horns = Vec::new();
    while horns.len() < n_horn {
        let len = rng.gen_range(2..=3);
        // half the bodies copy a suffix of the path so compositions can fire
        let body: Vec<String> = if len <= j && rng.gen_bool(0.5) {
            relations[j - len..].to_vec()
        } else {
            (0..len).map(|_| pick_rel(rng)).collect()
        };
        let head = format!("h{}", rng.gen_range(0..3));
        horns.push((body, head));
    }
    let eta = [0.6, 0.7][rng.gen_range(0..2)];
    let n_cand = rng.gen_range(0..=10);
    let mut candidates: Vec<OCandidate> = (0..n_cand)
        .map(|i| {
            // bias towards heads and hop subjects so the rule stages get exercised
            let relation = if !horns.is_empty() && rng.gen_bool(0.35) {
                horns[rng.gen_range(0..horns.len())].1.clone()
            } else if rng.gen_bool(0.15) {
                format!("h{}", rng.gen_range(0..3))
            } else {
                pick_rel(rng)
            };
            let subject = if rng.gen_bool(0.5) {
                hop_subjects[rng.gen_range(0..j)].clone()
            } else {
                subjects[rng.gen_range(0..subjects.len())].to_string()
            };
            // some scores sit exactly on the threshold
            let score = if rng.gen_bool(0.15) { eta } else { rng.gen_range(0.0..0.8) };
            OCandidate {
                id: format!("e{i:02}"),
                subject,
                relation,
                new_object: format!("O{}", rng.gen_range(0..100)),
                score,
            }
        })
        .collect();
    candidates.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.id.cmp(&b.id)));
    OScenario {
        eta,
        relations,
        subjects: hop_subjects,
        candidates,
        implications,
        horns,
        alias_groups: vec![vec!["Bo".into(), "Bobby".into()]],
        use_implication: rng.gen_bool(0.8),
        use_composition: rng.gen_bool(0.8),
        query_implies_edit: rng.gen_bool(0.7),
    }
}

// ---- synthetic names --------------------------------------------------------

const SYLLABLES: &[&str] = &[
    "ka", "lo", "mi", "ra", "su", "te", "vo", "ne", "di", "pa", "zu", "ho", "be", "ri", "mo", "sa",
];

pub fn name(rng: &mut impl Rng, words: usize) -> String {
    (0..words)
        .map(|_| {
            let n = rng.gen_range(2..=3);
            let w: String = (0..n).map(|_| *SYLLABLES.choose(rng).unwrap()).collect();
            let mut c = w.chars();
            let first = c.next().unwrap().to_ascii_uppercase();
            std::iter::once(first).chain(c).collect::<String>()
        })
        .collect::<Vec<_>>()
        .join(" ")
}
