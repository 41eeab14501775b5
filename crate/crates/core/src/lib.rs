//! Multi-hop question answering over an edited-fact memory.
//!
//! A question is decomposed into single-hop sub-problems by a target model.
//! Each hop first consults an index of edited facts, filtered by relation
//! implication, Horn-style composition and embedding similarity, and falls
//! back to the model only when no edit applies.
//!
//! ```no_run
//! use std::sync::Arc;
//! use hopedit::{embedding::TrigramEmbedder, memory::EditIndex, model::{AliasTable, EditCollection, FactEdit}};
//!
//! let aliases = AliasTable::new();
//! let edits = EditCollection::from_edits(
//!     [FactEdit::new("e1", "Iran", "head_of_state", None, "Masoud Pezeshkian").unwrap()],
//!     &aliases,
//! ).unwrap();
//! let index = EditIndex::build(&edits, Arc::new(TrigramEmbedder::new(512).unwrap()), Arc::new(aliases)).unwrap();
//! assert_eq!(index.len(), 1);
//! ```

pub mod cli;
pub mod config;
pub mod embedding;
pub mod evaluation;
pub mod gateway;
pub mod limit;
pub mod memory;
pub mod model;
pub mod rules;
pub mod traversal;

pub use config::Settings;
pub use embedding::{Embedder, EmbedderConfig, TrigramEmbedder};
pub use evaluation::{ablate, run_experiment, Ablation, BatchSize, Dataset, ExperimentConfig, Pipeline, Report};
pub use gateway::{ChatTransport, MockKnowledgeBase, TargetModel, TargetModelConfig};
pub use memory::EditIndex;
pub use model::{AliasTable, EditCollection, FactEdit, MultiHopInstance, ResolutionTrace, Triplet};
pub use rules::{FilterFlags, RuleSet};
pub use traversal::{solve, SolveOutput, TraversalConfig};
