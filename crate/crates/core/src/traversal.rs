//! Hop-by-hop resolution of a decomposed question.
//!
//! Each hop is first answered from the edit memory through the candidate
//! filter; only when no candidate passes is the target model asked. The
//! answer of one hop becomes the subject of the next.

use serde::{Deserialize, Serialize};

use crate::gateway::{GatewayError, ModelAnswer, TargetModel, UNKNOWN_SENTINEL};
use crate::memory::{EditIndex, MemoryError};
use crate::model::{HopRecord, ResolutionSource, ResolutionTrace, TraceFailure};
use crate::rules::{candidate_filter, FilterContext, FilterFlags, RuleSet};

pub const DEFAULT_ETA: f64 = 0.6;
pub const DEFAULT_TOP_K: usize = 10;
pub const DEFAULT_MAX_HOPS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TraversalConfig {
    pub eta: f64,
    pub top_k: usize,
    pub max_hops: usize,
    #[serde(flatten)]
    pub flags: FilterFlags,
}

impl Default for TraversalConfig {
    fn default() -> Self {
        Self {
            eta: DEFAULT_ETA,
            top_k: DEFAULT_TOP_K,
            max_hops: DEFAULT_MAX_HOPS,
            flags: FilterFlags::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TraversalError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error("invalid traversal config: {0}")]
    Config(String),
}

impl TraversalConfig {
    pub fn validate(&self) -> Result<(), TraversalError> {
        if self.top_k == 0 {
            return Err(TraversalError::Config("top_k must be >= 1".into()));
        }
        if self.max_hops == 0 {
            return Err(TraversalError::Config("max_hops must be >= 1".into()));
        }
        if !self.eta.is_finite() {
            return Err(TraversalError::Config("eta must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRef {
    pub edit_id: String,
    pub score: f64,
}

/// Retrieval diagnostics for one hop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopRetrieval {
    pub hop_index: usize,
    pub query: String,
    pub candidates: Vec<CandidateRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOutput {
    pub trace: ResolutionTrace,
    pub retrievals: Vec<HopRetrieval>,
}

/// Answers `question` using the edit memory first and the model as fallback.
pub fn solve(
    question: &str,
    index: &EditIndex,
    rules: &RuleSet,
    model: &TargetModel,
    config: &TraversalConfig,
) -> Result<SolveOutput, TraversalError> {
    config.validate()?;
    let decomposition = match model.decompose(question) {
        Ok(d) => d,
        Err(GatewayError::DecompositionParse {
            message,
            raw_output,
        }) => {
            return Ok(SolveOutput {
                trace: ResolutionTrace::failed(
                    question,
                    None,
                    TraceFailure::DecompositionParse {
                        message,
                        raw_output,
                    },
                ),
                retrievals: Vec::new(),
            })
        }
        Err(e) => return Err(e.into()),
    };
    let path = &decomposition.path;
    if path.len() > config.max_hops {
        return Ok(SolveOutput {
            trace: ResolutionTrace::failed(
                question,
                Some(decomposition.start_entity),
                TraceFailure::HopLimitExceeded {
                    path_length: path.len(),
                    max_hops: config.max_hops,
                },
            ),
            retrievals: Vec::new(),
        });
    }

    let mut relations: Vec<String> = Vec::with_capacity(path.len());
    let mut subjects: Vec<String> = Vec::with_capacity(path.len());
    let mut hops: Vec<HopRecord> = Vec::with_capacity(path.len());
    let mut retrievals = Vec::with_capacity(path.len());
    let mut current = decomposition.start_entity.clone();

    for step in path.steps() {
        let p = step.bind_subject(&current);
        relations.push(p.relation.clone());
        subjects.push(current.clone());

        let candidates = index.retrieve_top_k(&p, config.top_k)?;
        retrievals.push(HopRetrieval {
            hop_index: p.hop_index,
            query: p.to_text(),
            candidates: candidates
                .iter()
                .map(|c| CandidateRef {
                    edit_id: c.edit.edit_id().to_string(),
                    score: c.score,
                })
                .collect(),
        });
        let ctx = FilterContext {
            path_relations: &relations,
            hop_subjects: &subjects,
            aliases: index.aliases(),
            rules,
            flags: config.flags,
        };

        let record = match candidate_filter(config.eta, &candidates, &p, &ctx) {
            Some(outcome) => {
                // earlier hops of a composed run are answered by this edit
                let earlier = outcome.hops_consumed.saturating_sub(1);
                let from = hops.len() - earlier;
                for prior in &mut hops[from..] {
                    prior.source = ResolutionSource::MemoryComposition;
                    prior.chosen_edit_id = Some(outcome.chosen_edit_id.clone());
                    prior.similarity_score = Some(outcome.score);
                    prior.resolved_object = None;
                    prior.subsumed = true;
                    prior.model_unknown = false;
                }
                current = outcome.object.clone();
                HopRecord {
                    sub_problem: p,
                    source: outcome.source,
                    chosen_edit_id: Some(outcome.chosen_edit_id),
                    similarity_score: Some(outcome.score),
                    resolved_object: Some(outcome.object),
                    subsumed: false,
                    model_unknown: false,
                }
            }
            None => {
                let (answer, unknown) = match model.answer_subproblem(&p)? {
                    ModelAnswer::Known(a) => (a, false),
                    ModelAnswer::Unknown => (UNKNOWN_SENTINEL.to_string(), true),
                };
                current = answer.clone();
                HopRecord {
                    sub_problem: p,
                    source: ResolutionSource::LlmFallback,
                    chosen_edit_id: None,
                    similarity_score: None,
                    resolved_object: Some(answer),
                    subsumed: false,
                    model_unknown: unknown,
                }
            }
        };
        hops.push(record);
    }

    Ok(SolveOutput {
        trace: ResolutionTrace {
            question: question.to_string(),
            start_entity: Some(decomposition.start_entity),
            hops,
            final_answer: Some(current),
            failure: None,
        },
        retrievals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::TrigramEmbedder;
    use crate::gateway::{CountingTransport, MockKnowledgeBase, PromptTemplates};
    use crate::model::{AliasTable, EditCollection, FactEdit, Triplet};
    use std::sync::Arc;

    const Q: &str = "Who is the head of the hometown of author of Reading Lolita in Tehran?";

    fn index(edits: Vec<FactEdit>) -> EditIndex {
        let aliases = AliasTable::new();
        let c = EditCollection::from_edits(edits, &aliases).unwrap();
        EditIndex::build(&c, Arc::new(TrigramEmbedder::default()), Arc::new(aliases)).unwrap()
    }

    fn kb(facts: &[(&str, &str, &str)]) -> MockKnowledgeBase {
        let mut kb = MockKnowledgeBase::new(AliasTable::new());
        for (s, r, o) in facts {
            kb.insert_fact(&Triplet::new(s, r, o).unwrap());
        }
        kb.insert_decomposition(Q, "Reading Lolita in Tehran", &["author_is", "hometown_is", "head_is"]);
        kb
    }

    fn sources(out: &SolveOutput) -> Vec<ResolutionSource> {
        out.trace.hops.iter().map(|h| h.source).collect()
    }

    #[test]
    fn all_hops_from_memory() {
        let idx = index(vec![
            FactEdit::new("e1", "Reading Lolita in Tehran", "author_is", None, "Xenia Voss").unwrap(),
            FactEdit::new("e2", "Xenia Voss", "hometown_is", None, "Yarrow").unwrap(),
            FactEdit::new("e3", "Yarrow", "head_is", None, "Zed Quill").unwrap(),
        ]);
        let transport = Arc::new(CountingTransport::new(kb(&[])));
        let model = TargetModel::new(transport.clone(), PromptTemplates::default(), "mock");
        let out = solve(Q, &idx, &RuleSet::empty(), &model, &TraversalConfig::default()).unwrap();
        assert_eq!(out.trace.final_answer.as_deref(), Some("Zed Quill"));
        assert_eq!(sources(&out), vec![ResolutionSource::MemoryImplication; 3]);
        assert_eq!(transport.answer_calls(), 0);
        assert_eq!(transport.calls(), 1);
    }

    #[test]
    fn fallback_only_path() {
        let idx = index(vec![]);
        let model = TargetModel::new(
            Arc::new(kb(&[
                ("Reading Lolita in Tehran", "author_is", "Azar Nafisi"),
                ("Azar Nafisi", "hometown_is", "Tehran"),
                ("Tehran", "head_is", "Alireza Zakani"),
            ])),
            PromptTemplates::default(),
            "mock",
        );
        let out = solve(Q, &idx, &RuleSet::empty(), &model, &TraversalConfig::default()).unwrap();
        assert_eq!(out.trace.final_answer.as_deref(), Some("Alireza Zakani"));
        assert_eq!(sources(&out), vec![ResolutionSource::LlmFallback; 3]);
    }

    #[test]
    fn mid_chain_edit_ripples_forward() {
        let idx = index(vec![FactEdit::new(
            "e1",
            "Azar Nafisi",
            "hometown_is",
            Some("Tehran"),
            "Shiraz",
        )
        .unwrap()]);
        let model = TargetModel::new(
            Arc::new(kb(&[
                ("Reading Lolita in Tehran", "author_is", "Azar Nafisi"),
                ("Azar Nafisi", "hometown_is", "Tehran"),
                ("Tehran", "head_is", "Alireza Zakani"),
                ("Shiraz", "head_is", "Mayor of Shiraz"),
            ])),
            PromptTemplates::default(),
            "mock",
        );
        let out = solve(Q, &idx, &RuleSet::empty(), &model, &TraversalConfig::default()).unwrap();
        assert_eq!(out.trace.final_answer.as_deref(), Some("Mayor of Shiraz"));
        assert_eq!(
            sources(&out),
            vec![
                ResolutionSource::LlmFallback,
                ResolutionSource::MemoryImplication,
                ResolutionSource::LlmFallback
            ]
        );
        assert_eq!(out.trace.hops[2].sub_problem.subject.as_bound(), Some("Shiraz"));
    }

    #[test]
    fn composition_subsumes_earlier_hop() {
        let q = "Which continent does Ahmed live in?";
        let mut kb = MockKnowledgeBase::new(AliasTable::new());
        kb.insert_fact(&Triplet::new("Ahmed", "lives_in_city", "Tehran").unwrap());
        kb.insert_fact(&Triplet::new("Tehran", "city_in_continent", "Asia").unwrap());
        kb.insert_decomposition(q, "Ahmed", &["lives_in_city", "city_in_continent"]);
        let idx = index(vec![FactEdit::new(
            "e1",
            "Ahmed",
            "lives_in_continent",
            Some("Asia"),
            "Europe",
        )
        .unwrap()]);
        let rules =
            RuleSet::parse("", "lives_in_city & city_in_continent => lives_in_continent").unwrap();
        let config = TraversalConfig {
            eta: 0.99,
            ..TraversalConfig::default()
        };
        let model = TargetModel::new(Arc::new(kb), PromptTemplates::default(), "mock");
        let out = solve(q, &idx, &rules, &model, &config).unwrap();
        assert_eq!(out.trace.final_answer.as_deref(), Some("Europe"));
        assert!(out.trace.hops[0].subsumed);
        assert_eq!(out.trace.hops[0].resolved_object, None);
        assert_eq!(sources(&out), vec![ResolutionSource::MemoryComposition; 2]);
    }

    #[test]
    fn unknown_answer_keeps_going() {
        let idx = index(vec![]);
        let model = TargetModel::new(Arc::new(kb(&[])), PromptTemplates::default(), "mock");
        let out = solve(Q, &idx, &RuleSet::empty(), &model, &TraversalConfig::default()).unwrap();
        assert_eq!(out.trace.hops.len(), 3);
        assert!(out.trace.hops.iter().all(|h| h.model_unknown));
        assert_eq!(out.trace.final_answer.as_deref(), Some(UNKNOWN_SENTINEL));
    }

    #[test]
    fn parse_failure_and_hop_limit_are_recorded() {
        let idx = index(vec![]);
        let model = TargetModel::new(Arc::new(kb(&[])), PromptTemplates::default(), "mock");
        let out = solve("unmapped?", &idx, &RuleSet::empty(), &model, &TraversalConfig::default())
            .unwrap();
        assert!(matches!(
            out.trace.failure,
            Some(TraceFailure::DecompositionParse { .. })
        ));
        let tight = TraversalConfig {
            max_hops: 2,
            ..TraversalConfig::default()
        };
        let out = solve(Q, &idx, &RuleSet::empty(), &model, &tight).unwrap();
        assert_eq!(
            out.trace.failure,
            Some(TraceFailure::HopLimitExceeded {
                path_length: 3,
                max_hops: 2
            })
        );
    }

    #[test]
    fn zero_top_k_is_rejected() {
        let idx = index(vec![]);
        let model = TargetModel::new(Arc::new(kb(&[])), PromptTemplates::default(), "mock");
        let bad = TraversalConfig {
            top_k: 0,
            ..TraversalConfig::default()
        };
        assert!(matches!(
            solve(Q, &idx, &RuleSet::empty(), &model, &bad),
            Err(TraversalError::Config(_))
        ));
    }
}
