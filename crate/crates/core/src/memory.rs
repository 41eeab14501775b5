//! Edit memory: embedded fact edits searched by exhaustive dot-product scan.

use std::cmp::Ordering;
use std::fs;
use std::io::BufRead;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::embedding::{similarity, Embedder, EmbeddingError, EmbeddingVector};
use crate::model::{AliasTable, EditCollection, FactEdit, SubProblem};

#[derive(Debug, thiserror::Error)]
pub enum MemoryError {
    #[error("embedding edit {edit_id}: {source}")]
    EmbedEdit {
        edit_id: String,
        #[source]
        source: EmbeddingError,
    },
    #[error("embedding query: {0}")]
    EmbedQuery(#[from] EmbeddingError),
    #[error("query subject is unbound: {0}")]
    UnboundSubject(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("index not found: {0}")]
    NotFound(String),
    #[error("index was built with embedder {stored:?}, current embedder is {current:?}")]
    FingerprintMismatch { stored: String, current: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("index file: {0}")]
    Format(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub edit: FactEdit,
    pub vector: EmbeddingVector,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredCandidate {
    pub edit: FactEdit,
    pub score: f64,
    pub rank: usize,
}

/// Immutable retrieval index over a set of fact edits.
#[derive(Clone)]
pub struct EditIndex {
    entries: Vec<IndexEntry>,
    embedder: Arc<dyn Embedder>,
    aliases: Arc<AliasTable>,
}

impl std::fmt::Debug for EditIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EditIndex")
            .field("entries", &self.entries.len())
            .field("embedder", &self.embedder.fingerprint())
            .finish()
    }
}

#[derive(Serialize, Deserialize)]
struct IndexDump {
    embedder: String,
    dimension: usize,
    aliases: AliasTable,
    entries: Vec<IndexEntry>,
}

/// Ordering used for every result list: score descending, then edit id.
fn rank_order(a: &(f64, &FactEdit), b: &(f64, &FactEdit)) -> Ordering {
    b.0.total_cmp(&a.0)
        .then_with(|| a.1.edit_id().cmp(b.1.edit_id()))
}

impl EditIndex {
    /// Embeds every edit from its post-edit text `"subject; relation; new_object"`.
    pub fn build(
        edits: &EditCollection,
        embedder: Arc<dyn Embedder>,
        aliases: Arc<AliasTable>,
    ) -> Result<Self, MemoryError> {
        let entries = edits
            .iter()
            .map(|edit| {
                let vector = embedder
                    .embed(&edit.edited_triplet().to_text())
                    .map_err(|source| MemoryError::EmbedEdit {
                        edit_id: edit.edit_id().to_string(),
                        source,
                    })?;
                Ok(IndexEntry {
                    edit: edit.clone(),
                    vector,
                })
            })
            .collect::<Result<Vec<_>, MemoryError>>()?;
        Ok(Self {
            entries,
            embedder,
            aliases,
        })
    }

    pub fn empty(embedder: Arc<dyn Embedder>, aliases: Arc<AliasTable>) -> Self {
        Self {
            entries: Vec::new(),
            embedder,
            aliases,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn aliases(&self) -> &AliasTable {
        &self.aliases
    }

    pub fn embedder(&self) -> &Arc<dyn Embedder> {
        &self.embedder
    }

    pub fn dimension(&self) -> usize {
        self.embedder.dimension()
    }

    /// Top-k edits for a sub-problem, queried as `"subject; relation; ?"`.
    pub fn retrieve_top_k(
        &self,
        query: &SubProblem,
        k: usize,
    ) -> Result<Vec<ScoredCandidate>, MemoryError> {
        if !query.subject.is_bound() {
            return Err(MemoryError::UnboundSubject(query.to_text()));
        }
        self.retrieve_text(&query.to_text(), k)
    }

    /// Top-k edits for arbitrary query text.
    pub fn retrieve_text(&self, text: &str, k: usize) -> Result<Vec<ScoredCandidate>, MemoryError> {
        if self.entries.is_empty() || k == 0 {
            return Ok(Vec::new());
        }
        let q = self.embedder.embed(text)?;
        let mut scored = self
            .entries
            .iter()
            .map(|entry| Ok((similarity(&q, &entry.vector)?, &entry.edit)))
            .collect::<Result<Vec<_>, EmbeddingError>>()?;
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, rank_order);
            scored.truncate(k);
        }
        scored.sort_by(rank_order);
        Ok(scored
            .into_iter()
            .enumerate()
            .map(|(i, (score, edit))| ScoredCandidate {
                edit: edit.clone(),
                score,
                rank: i + 1,
            })
            .collect())
    }

    fn dump(&self) -> IndexDump {
        IndexDump {
            embedder: self.embedder.fingerprint(),
            dimension: self.embedder.dimension(),
            aliases: (*self.aliases).clone(),
            entries: self.entries.clone(),
        }
    }

    /// SHA-256 over the persisted form; stable across rebuilds of the same input.
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(&self.dump()).expect("index serializes");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn save(&self, path: &Path) -> Result<(), MemoryError> {
        fs::write(path, serde_json::to_vec(&self.dump())?)?;
        Ok(())
    }

    /// Loads a persisted index; the stored embedder fingerprint must match.
    pub fn load(path: &Path, embedder: Arc<dyn Embedder>) -> Result<Self, MemoryError> {
        let bytes = fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => MemoryError::NotFound(path.display().to_string()),
            _ => MemoryError::Io(e),
        })?;
        let dump: IndexDump = serde_json::from_slice(&bytes)?;
        if dump.embedder != embedder.fingerprint() {
            return Err(MemoryError::FingerprintMismatch {
                stored: dump.embedder,
                current: embedder.fingerprint(),
            });
        }
        Ok(Self {
            entries: dump.entries,
            embedder,
            aliases: Arc::new(dump.aliases),
        })
    }
}

/// Reads edits from JSON Lines, one edit object per non-blank line.
pub fn read_edits_jsonl(reader: impl BufRead) -> Result<Vec<FactEdit>, MemoryError> {
    let mut edits = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let edit = serde_json::from_str(&line).map_err(|e| MemoryError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        edits.push(edit);
    }
    Ok(edits)
}
