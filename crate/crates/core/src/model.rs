//! Domain types shared by every stage of the pipeline.
//!
//! All values are validated on construction and immutable afterwards, so they
//! can be shared freely between threads.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

/// Separator used by the canonical triplet serialization.
pub const FIELD_SEPARATOR: &str = "; ";

/// Placeholder written for an unbound slot in serialized sub-problems.
pub const UNBOUND_MARKER: &str = "?";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ValidationError {
    #[error("{field} is empty")]
    Empty { field: &'static str },
    #[error("{field} contains the reserved separator \"; \": {value:?}")]
    ContainsSeparator { field: &'static str, value: String },
    #[error("relation {0:?} contains a reserved character")]
    BadRelation(String),
    #[error("edit {edit_id}: old and new object are identical ({object:?})")]
    NoOpEdit { edit_id: String, object: String },
    #[error("duplicate edit id {0:?} for a different (subject, relation) pair")]
    DuplicateEditId(String),
    #[error("reasoning path: {0}")]
    Path(String),
    #[error("instance {instance_id}: {message}")]
    Instance { instance_id: String, message: String },
    #[error("cannot parse triplet text {0:?}")]
    TripletText(String),
}

/// Trims, collapses internal whitespace runs and applies NFC normalization.
/// Case is preserved; use [`entity_key`] for comparisons.
pub fn normalize_entity(raw: &str) -> Result<String, ValidationError> {
    let nfc: String = raw.nfc().collect();
    let collapsed = nfc.split_whitespace().collect::<Vec<_>>().join(" ");
    if collapsed.is_empty() {
        return Err(ValidationError::Empty { field: "entity" });
    }
    Ok(collapsed)
}

/// Case-insensitive comparison key for an entity surface form.
pub fn entity_key(raw: &str) -> String {
    let nfc: String = raw.nfc().collect();
    nfc.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Lowercase snake-case relation token.
pub fn normalize_relation(raw: &str) -> Result<String, ValidationError> {
    let nfc: String = raw.nfc().collect();
    let token = nfc
        .split(|c: char| c.is_whitespace() || c == '-')
        .filter(|part| !part.is_empty())
        .collect::<Vec<_>>()
        .join("_")
        .to_lowercase();
    if token.is_empty() {
        return Err(ValidationError::Empty { field: "relation" });
    }
    if token.contains(';') || token == UNBOUND_MARKER {
        return Err(ValidationError::BadRelation(raw.to_string()));
    }
    Ok(token)
}

fn checked_entity(raw: &str, field: &'static str) -> Result<String, ValidationError> {
    let value = normalize_entity(raw).map_err(|_| ValidationError::Empty { field })?;
    if value.contains(FIELD_SEPARATOR) {
        return Err(ValidationError::ContainsSeparator { field, value });
    }
    Ok(value)
}

/// A `(subject, relation, object)` fact.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "[String; 3]", into = "[String; 3]")]
pub struct Triplet {
    subject: String,
    relation: String,
    object: String,
}

impl Triplet {
    pub fn new(subject: &str, relation: &str, object: &str) -> Result<Self, ValidationError> {
        Ok(Self {
            subject: checked_entity(subject, "subject")?,
            relation: normalize_relation(relation)?,
            object: checked_entity(object, "object")?,
        })
    }

    pub fn subject(&self) -> &str {
        &self.subject
    }

    pub fn relation(&self) -> &str {
        &self.relation
    }

    pub fn object(&self) -> &str {
        &self.object
    }

    /// Canonical `"subject; relation; object"` text, the form that gets embedded.
    pub fn to_text(&self) -> String {
        [self.subject.as_str(), &self.relation, &self.object].join(FIELD_SEPARATOR)
    }
}

impl fmt::Display for Triplet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

impl FromStr for Triplet {
    type Err = ValidationError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = text.split(FIELD_SEPARATOR).collect();
        match parts.as_slice() {
            [s, r, o] => Triplet::new(s, r, o),
            _ => Err(ValidationError::TripletText(text.to_string())),
        }
    }
}

impl TryFrom<[String; 3]> for Triplet {
    type Error = ValidationError;

    fn try_from([s, r, o]: [String; 3]) -> Result<Self, Self::Error> {
        Triplet::new(&s, &r, &o)
    }
}

impl From<Triplet> for [String; 3] {
    fn from(t: Triplet) -> Self {
        [t.subject, t.relation, t.object]
    }
}

/// A single fact edit `(s, r, o -> o*)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawFactEdit")]
pub struct FactEdit {
    edit_id: String,
    subject: String,
    relation: String,
    old_object: Option<String>,
    new_object: String,
}

#[derive(Deserialize)]
struct RawFactEdit {
    edit_id: String,
    subject: String,
    relation: String,
    #[serde(default)]
    old_object: Option<String>,
    new_object: String,
}

impl TryFrom<RawFactEdit> for FactEdit {
    type Error = ValidationError;

    fn try_from(raw: RawFactEdit) -> Result<Self, Self::Error> {
        FactEdit::new(
            &raw.edit_id,
            &raw.subject,
            &raw.relation,
            raw.old_object.as_deref(),
            &raw.new_object,
        )
    }
}

impl FactEdit {
    pub fn new(
        edit_id: &str,
        subject: &str,
        relation: &str,
        old_object: Option<&str>,
        new_object: &str,
    ) -> Result<Self, ValidationError> {
        let edit_id = edit_id.trim();
        if edit_id.is_empty() {
            return Err(ValidationError::Empty { field: "edit_id" });
        }
        let new_object = checked_entity(new_object, "new_object")?;
        let old_object = old_object
            .map(|o| checked_entity(o, "old_object"))
            .transpose()?;
        if old_object.as_deref() == Some(new_object.as_str()) {
            return Err(ValidationError::NoOpEdit {
                edit_id: edit_id.to_string(),
                object: new_object,
            });
        }
        Ok(Self {
            edit_id: edit_id.to_string(),
            subject: checked_entity(subject, "subject")?,
            relation: normalize_relation(relation)?,
            old_object,
            new_object,
        })
    }

    pub fn edit_id(&self) -> &str {
        &self.edit_id
    }

    pub fn subject(&self) -> &str {
        &self.subject
    }

    pub fn relation(&self) -> &str {
        &self.relation
    }

    pub fn old_object(&self) -> Option<&str> {
        self.old_object.as_deref()
    }

    pub fn new_object(&self) -> &str {
        &self.new_object
    }

    /// The post-edit fact `(s, r, o*)`.
    pub fn edited_triplet(&self) -> Triplet {
        Triplet {
            subject: self.subject.clone(),
            relation: self.relation.clone(),
            object: self.new_object.clone(),
        }
    }
}

/// Ordered edits with at most one edit per alias-normalized `(subject, relation)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
#[serde(transparent)]
pub struct EditCollection {
    edits: Vec<FactEdit>,
    /// edit id -> key, for every edit currently held
    #[serde(skip)]
    keys: HashMap<String, (String, String)>,
    /// key -> edit id
    #[serde(skip)]
    owners: HashMap<(String, String), String>,
}

impl EditCollection {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a collection, later edits replacing earlier ones on the same
    /// `(subject, relation)` key.
    pub fn from_edits<I>(edits: I, aliases: &AliasTable) -> Result<Self, ValidationError>
    where
        I: IntoIterator<Item = FactEdit>,
    {
        let mut collection = Self::new();
        for edit in edits {
            collection.insert(edit, aliases)?;
        }
        Ok(collection)
    }

    /// Inserts `edit`, dropping any earlier edit on the same key. The survivor
    /// takes the later position.
    pub fn insert(&mut self, edit: FactEdit, aliases: &AliasTable) -> Result<(), ValidationError> {
        let key = (aliases.canonical_key(&edit.subject), edit.relation.clone());
        if let Some(held) = self.keys.get(&edit.edit_id) {
            if *held != key {
                return Err(ValidationError::DuplicateEditId(edit.edit_id.clone()));
            }
        }
        if let Some(previous) = self.owners.remove(&key) {
            self.keys.remove(&previous);
            let pos = self
                .edits
                .iter()
                .position(|e| e.edit_id == previous)
                .expect("owner is held");
            self.edits.remove(pos);
        }
        self.keys.insert(edit.edit_id.clone(), key.clone());
        self.owners.insert(key, edit.edit_id.clone());
        self.edits.push(edit);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.edits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edits.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, FactEdit> {
        self.edits.iter()
    }

    pub fn as_slice(&self) -> &[FactEdit] {
        &self.edits
    }
}

impl<'a> IntoIterator for &'a EditCollection {
    type Item = &'a FactEdit;
    type IntoIter = std::slice::Iter<'a, FactEdit>;

    fn into_iter(self) -> Self::IntoIter {
        self.edits.iter()
    }
}

/// An entity position in a sub-problem: either resolved or still unknown.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "Option<String>", into = "Option<String>")]
pub enum Slot {
    Bound(String),
    Unbound,
}

impl Slot {
    pub fn as_bound(&self) -> Option<&str> {
        match self {
            Slot::Bound(value) => Some(value),
            Slot::Unbound => None,
        }
    }

    pub fn is_bound(&self) -> bool {
        matches!(self, Slot::Bound(_))
    }

    fn text(&self) -> &str {
        self.as_bound().unwrap_or(UNBOUND_MARKER)
    }
}

impl From<Option<String>> for Slot {
    fn from(value: Option<String>) -> Self {
        value.map_or(Slot::Unbound, Slot::Bound)
    }
}

impl From<Slot> for Option<String> {
    fn from(slot: Slot) -> Self {
        match slot {
            Slot::Bound(v) => Some(v),
            Slot::Unbound => None,
        }
    }
}

/// One hop of a decomposed question.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SubProblem {
    pub hop_index: usize,
    pub subject: Slot,
    pub relation: String,
    pub object: Slot,
}

impl SubProblem {
    pub fn new(hop_index: usize, subject: Slot, relation: &str) -> Result<Self, ValidationError> {
        let subject = match subject {
            Slot::Bound(s) => Slot::Bound(checked_entity(&s, "subject")?),
            Slot::Unbound => Slot::Unbound,
        };
        Ok(Self {
            hop_index,
            subject,
            relation: normalize_relation(relation)?,
            object: Slot::Unbound,
        })
    }

    /// Copy of this hop with the subject bound to `entity`.
    pub fn bind_subject(&self, entity: &str) -> Self {
        Self {
            subject: Slot::Bound(entity.to_string()),
            ..self.clone()
        }
    }

    /// Serialized form used as the retrieval query, with `?` for unbound slots.
    pub fn to_text(&self) -> String {
        [self.subject.text(), &self.relation, self.object.text()].join(FIELD_SEPARATOR)
    }
}

impl fmt::Display for SubProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{}>", self.to_text())
    }
}

/// Start entity plus the ordered hops produced by decomposition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasoningPath {
    start_entity: String,
    steps: Vec<SubProblem>,
}

impl ReasoningPath {
    pub fn new(start_entity: &str, steps: Vec<SubProblem>) -> Result<Self, ValidationError> {
        let start_entity = checked_entity(start_entity, "start_entity")?;
        if steps.is_empty() {
            return Err(ValidationError::Path("no steps".into()));
        }
        for (i, step) in steps.iter().enumerate() {
            if step.hop_index != i + 1 {
                return Err(ValidationError::Path(format!(
                    "hop index {} at position {}",
                    step.hop_index,
                    i + 1
                )));
            }
            if i > 0 && step.subject.is_bound() {
                return Err(ValidationError::Path(format!(
                    "hop {} has a bound subject before traversal",
                    i + 1
                )));
            }
        }
        Ok(Self { start_entity, steps })
    }

    pub fn start_entity(&self) -> &str {
        &self.start_entity
    }

    pub fn steps(&self) -> &[SubProblem] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn relations(&self) -> Vec<&str> {
        self.steps.iter().map(|s| s.relation.as_str()).collect()
    }
}

/// Canonical entity names and their alternative surface forms.
///
/// Matching is case-insensitive and whitespace-normalized. An entity that is
/// not in the table still matches itself.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "BTreeMap<String, Vec<String>>", into = "BTreeMap<String, Vec<String>>")]
pub struct AliasTable {
    groups: BTreeMap<String, BTreeSet<String>>,
    by_key: HashMap<String, BTreeSet<String>>,
}

impl AliasTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds aliases for `canonical`. The canonical form is always its own alias.
    pub fn insert<I, S>(&mut self, canonical: &str, aliases: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let Ok(canonical) = normalize_entity(canonical) else {
            return;
        };
        let group = self.groups.entry(canonical.clone()).or_default();
        group.insert(canonical.clone());
        for alias in aliases {
            if let Ok(alias) = normalize_entity(alias.as_ref()) {
                group.insert(alias);
            }
        }
        for alias in group.iter() {
            self.by_key
                .entry(entity_key(alias))
                .or_default()
                .insert(canonical.clone());
        }
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// Every surface form equivalent to `entity`, always including `entity`.
    pub fn aliases(&self, entity: &str) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        if let Ok(e) = normalize_entity(entity) {
            out.insert(e);
        }
        if let Some(canonicals) = self.by_key.get(&entity_key(entity)) {
            for c in canonicals {
                out.extend(self.groups[c].iter().cloned());
            }
        }
        out
    }

    /// True when `a` and `b` name the same entity under this table.
    pub fn matches(&self, a: &str, b: &str) -> bool {
        let (ka, kb) = (entity_key(a), entity_key(b));
        if ka == kb {
            return true;
        }
        match (self.by_key.get(&ka), self.by_key.get(&kb)) {
            (Some(ga), Some(gb)) => !ga.is_disjoint(gb),
            _ => false,
        }
    }

    /// Stable key shared by all aliases of one entity.
    pub fn canonical_key(&self, entity: &str) -> String {
        let key = entity_key(entity);
        match self.by_key.get(&key).and_then(|c| c.iter().next()) {
            Some(canonical) => entity_key(canonical),
            None => key,
        }
    }

    /// Merges another table into this one.
    pub fn extend(&mut self, other: &AliasTable) {
        for (canonical, aliases) in &other.groups {
            self.insert(canonical, aliases);
        }
    }
}

impl From<BTreeMap<String, Vec<String>>> for AliasTable {
    fn from(map: BTreeMap<String, Vec<String>>) -> Self {
        let mut table = AliasTable::new();
        for (canonical, aliases) in map {
            table.insert(&canonical, aliases);
        }
        table
    }
}

impl From<AliasTable> for BTreeMap<String, Vec<String>> {
    fn from(table: AliasTable) -> Self {
        table
            .groups
            .into_iter()
            .map(|(k, v)| (k, v.into_iter().collect()))
            .collect()
    }
}

/// One evaluation record `(edits, questions, o, o*, path, edited path)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawInstance", into = "RawInstance")]
pub struct MultiHopInstance {
    pub instance_id: String,
    pub edits: Vec<FactEdit>,
    pub questions: Vec<String>,
    pub original_answer: String,
    pub edited_answer: String,
    pub original_path: Vec<Triplet>,
    pub edited_path: Vec<Triplet>,
    pub answer_aliases: BTreeSet<String>,
}

#[derive(Serialize, Deserialize)]
struct RawInstance {
    instance_id: String,
    questions: Vec<String>,
    original_answer: String,
    edited_answer: String,
    #[serde(default)]
    answer_aliases: Vec<String>,
    edits: Vec<FactEdit>,
    original_path: Vec<Triplet>,
    edited_path: Vec<Triplet>,
}

impl TryFrom<RawInstance> for MultiHopInstance {
    type Error = ValidationError;

    fn try_from(raw: RawInstance) -> Result<Self, Self::Error> {
        MultiHopInstance::new(
            raw.instance_id,
            raw.edits,
            raw.questions,
            &raw.original_answer,
            &raw.edited_answer,
            raw.original_path,
            raw.edited_path,
            raw.answer_aliases,
        )
    }
}

impl From<MultiHopInstance> for RawInstance {
    fn from(i: MultiHopInstance) -> Self {
        RawInstance {
            instance_id: i.instance_id,
            questions: i.questions,
            original_answer: i.original_answer,
            edited_answer: i.edited_answer,
            answer_aliases: i.answer_aliases.into_iter().collect(),
            edits: i.edits,
            original_path: i.original_path,
            edited_path: i.edited_path,
        }
    }
}

impl MultiHopInstance {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        instance_id: String,
        edits: Vec<FactEdit>,
        questions: Vec<String>,
        original_answer: &str,
        edited_answer: &str,
        original_path: Vec<Triplet>,
        edited_path: Vec<Triplet>,
        answer_aliases: impl IntoIterator<Item = String>,
    ) -> Result<Self, ValidationError> {
        let fail = |message: String| ValidationError::Instance {
            instance_id: instance_id.clone(),
            message,
        };
        if instance_id.trim().is_empty() {
            return Err(ValidationError::Empty { field: "instance_id" });
        }
        let questions: Vec<String> = questions
            .iter()
            .map(|q| q.trim().to_string())
            .filter(|q| !q.is_empty())
            .collect();
        if questions.is_empty() {
            return Err(fail("questions: no question variants".into()));
        }
        if edited_path.is_empty() || edited_path.len() != original_path.len() {
            return Err(fail(format!(
                "original_path/edited_path: lengths {} and {} must be equal and non-zero",
                original_path.len(),
                edited_path.len()
            )));
        }
        let original_answer =
            normalize_entity(original_answer).map_err(|e| fail(format!("original_answer: {e}")))?;
        let edited_answer =
            normalize_entity(edited_answer).map_err(|e| fail(format!("edited_answer: {e}")))?;
        let last = edited_path.last().expect("non-empty").object();
        if entity_key(last) != entity_key(&edited_answer) {
            return Err(fail(format!(
                "edited_answer: {edited_answer:?} differs from last edited_path object {last:?}"
            )));
        }
        let mut aliases: BTreeSet<String> = answer_aliases
            .into_iter()
            .filter_map(|a| normalize_entity(&a).ok())
            .collect();
        aliases.insert(edited_answer.clone());
        Ok(Self {
            instance_id,
            edits,
            questions,
            original_answer,
            edited_answer,
            original_path,
            edited_path,
            answer_aliases: aliases,
        })
    }

    pub fn hop_count(&self) -> usize {
        self.edited_path.len()
    }
}

/// Where a hop's answer came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResolutionSource {
    MemoryImplication,
    MemoryComposition,
    MemorySimilarity,
    LlmFallback,
}

impl ResolutionSource {
    pub const ALL: [ResolutionSource; 4] = [
        ResolutionSource::MemoryImplication,
        ResolutionSource::MemoryComposition,
        ResolutionSource::MemorySimilarity,
        ResolutionSource::LlmFallback,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ResolutionSource::MemoryImplication => "memory_implication",
            ResolutionSource::MemoryComposition => "memory_composition",
            ResolutionSource::MemorySimilarity => "memory_similarity",
            ResolutionSource::LlmFallback => "llm_fallback",
        }
    }
}

impl fmt::Display for ResolutionSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopRecord {
    pub sub_problem: SubProblem,
    pub source: ResolutionSource,
    pub chosen_edit_id: Option<String>,
    pub similarity_score: Option<f64>,
    /// `None` only for hops subsumed by a later composition.
    pub resolved_object: Option<String>,
    #[serde(default)]
    pub subsumed: bool,
    #[serde(default)]
    pub model_unknown: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceFailure {
    DecompositionParse { message: String, raw_output: String },
    HopLimitExceeded { path_length: usize, max_hops: usize },
}

/// Hop-by-hop record of how a question was answered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolutionTrace {
    pub question: String,
    pub start_entity: Option<String>,
    pub hops: Vec<HopRecord>,
    pub final_answer: Option<String>,
    pub failure: Option<TraceFailure>,
}

impl ResolutionTrace {
    pub fn failed(question: &str, start_entity: Option<String>, failure: TraceFailure) -> Self {
        Self {
            question: question.to_string(),
            start_entity,
            hops: Vec::new(),
            final_answer: None,
            failure: Some(failure),
        }
    }

    pub fn is_complete(&self) -> bool {
        self.failure.is_none()
    }
}
