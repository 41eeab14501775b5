//! Target-model access: question decomposition and per-hop fallback answers.
//!
//! [`TargetModel`] renders prompt templates and parses completions. The
//! completions themselves come from a [`ChatTransport`]: an OpenAI-compatible
//! HTTP endpoint, a deterministic [`MockKnowledgeBase`], or a cassette that
//! records and replays responses keyed by the SHA-256 of the request.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::limit::InFlightLimit;
use crate::model::{
    normalize_entity, normalize_relation, AliasTable, MultiHopInstance, ReasoningPath, Slot,
    SubProblem, Triplet,
};

/// Answer text meaning "the model does not know".
pub const UNKNOWN_SENTINEL: &str = "<unknown>";

pub const DEFAULT_DECOMPOSE_TEMPLATE: &str = include_str!("../templates/decompose.txt");
pub const DEFAULT_QUERY_TEMPLATE: &str = include_str!("../templates/query.txt");

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("model endpoint returned an unusable response: {0}")]
    BadResponse(String),
    #[error("cassette miss for request {0}")]
    CassetteMiss(String),
    #[error("cassette {path}: {message}")]
    Cassette { path: String, message: String },
    #[error("mock backend received a request without a task")]
    MissingTask,
    #[error("cannot parse decomposition: {message}")]
    DecompositionParse { message: String, raw_output: String },
    #[error("configuration: {0}")]
    Config(String),
}

impl GatewayError {
    /// Errors that only affect one question; batch runs record and continue.
    pub fn is_per_instance(&self) -> bool {
        matches!(self, GatewayError::DecompositionParse { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

/// What a request is asking for, for backends that answer from structured data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Task {
    Decompose { question: String },
    Answer { sub_problem: SubProblem },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    #[serde(skip)]
    pub task: Option<Task>,
}

impl ChatRequest {
    /// SHA-256 of the canonical JSON request body.
    pub fn hash(&self) -> String {
        let body = serde_json::to_vec(self).expect("request serializes");
        hex::encode(Sha256::digest(body))
    }
}

pub trait ChatTransport: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, GatewayError>;
}

impl<T: ChatTransport + ?Sized> ChatTransport for Arc<T> {
    fn complete(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        (**self).complete(request)
    }
}

/// Start entity, parsed path and the raw completion it came from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompositionResult {
    pub start_entity: String,
    pub path: ReasoningPath,
    pub raw_model_output: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum ModelAnswer {
    Known(String),
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    pub decompose: String,
    pub query: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self {
            decompose: DEFAULT_DECOMPOSE_TEMPLATE.to_string(),
            query: DEFAULT_QUERY_TEMPLATE.to_string(),
        }
    }
}

impl PromptTemplates {
    pub fn load(decompose: Option<&Path>, query: Option<&Path>) -> Result<Self, GatewayError> {
        let read = |p: Option<&Path>, default: &str| match p {
            Some(p) => fs::read_to_string(p)
                .map_err(|e| GatewayError::Config(format!("template {}: {e}", p.display()))),
            None => Ok(default.to_string()),
        };
        Ok(Self {
            decompose: read(decompose, DEFAULT_DECOMPOSE_TEMPLATE)?,
            query: read(query, DEFAULT_QUERY_TEMPLATE)?,
        })
    }

    pub fn render_decompose(&self, question: &str) -> String {
        self.decompose.replace("{question}", question)
    }

    pub fn render_query(&self, sub_problem: &SubProblem) -> String {
        self.query.replace("{subproblem}", &sub_problem.to_text())
    }
}

/// The model being edited, reached through a transport.
pub struct TargetModel {
    transport: Arc<dyn ChatTransport>,
    templates: PromptTemplates,
    model: String,
    temperature: f64,
}

impl TargetModel {
    pub fn new(transport: Arc<dyn ChatTransport>, templates: PromptTemplates, model: &str) -> Self {
        Self {
            transport,
            templates,
            model: model.to_string(),
            temperature: 0.0,
        }
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature.max(0.0);
        self
    }

    fn request(&self, prompt: String, task: Task) -> ChatRequest {
        ChatRequest {
            model: self.model.clone(),
            messages: vec![ChatMessage {
                role: "user".into(),
                content: prompt,
            }],
            temperature: self.temperature,
            task: Some(task),
        }
    }

    /// Splits a question into a start entity and a chain of sub-problems.
    pub fn decompose(&self, question: &str) -> Result<DecompositionResult, GatewayError> {
        let request = self.request(
            self.templates.render_decompose(question),
            Task::Decompose {
                question: question.to_string(),
            },
        );
        let raw = self.transport.complete(&request)?;
        parse_decomposition(&raw)
    }

    /// Asks the model for the object of one bound sub-problem.
    pub fn answer_subproblem(&self, sub_problem: &SubProblem) -> Result<ModelAnswer, GatewayError> {
        if !sub_problem.subject.is_bound() {
            return Err(GatewayError::Config(format!(
                "sub-problem {sub_problem} has no bound subject"
            )));
        }
        let request = self.request(
            self.templates.render_query(sub_problem),
            Task::Answer {
                sub_problem: sub_problem.clone(),
            },
        );
        let raw = self.transport.complete(&request)?;
        Ok(parse_answer(&raw))
    }
}

/// First non-empty line, normalized. The sentinel or an empty reply is unknown.
pub fn parse_answer(raw: &str) -> ModelAnswer {
    let line = raw.lines().map(str::trim).find(|l| !l.is_empty());
    match line.map(normalize_entity) {
        Some(Ok(answer))
            if !answer.eq_ignore_ascii_case(UNKNOWN_SENTINEL)
                && !answer.eq_ignore_ascii_case("unknown") =>
        {
            ModelAnswer::Known(answer)
        }
        _ => ModelAnswer::Unknown,
    }
}

/// Parses `Entity: <e>` followed by `Hop <n>: <subject>; <relation>; ?` lines.
/// Other lines are ignored.
pub fn parse_decomposition(raw: &str) -> Result<DecompositionResult, GatewayError> {
    let fail = |message: String| GatewayError::DecompositionParse {
        message,
        raw_output: raw.to_string(),
    };
    let mut start = None;
    let mut hops: Vec<(usize, String)> = Vec::new();
    for line in raw.lines().map(str::trim) {
        let Some((label, rest)) = line.split_once(':') else {
            continue;
        };
        let label = label.trim().to_ascii_lowercase();
        if label == "entity" && start.is_none() {
            start = Some(normalize_entity(rest).map_err(|_| fail("empty start entity".into()))?);
        } else if let Some(n) = label.strip_prefix("hop") {
            let n: usize = n
                .trim()
                .parse()
                .map_err(|_| fail(format!("bad hop label in {line:?}")))?;
            hops.push((n, rest.trim().to_string()));
        }
    }
    let start = start.ok_or_else(|| fail("no `Entity:` line".into()))?;
    if hops.is_empty() {
        return Err(fail("no `Hop n:` lines".into()));
    }
    let mut steps = Vec::with_capacity(hops.len());
    for (i, (n, body)) in hops.iter().enumerate() {
        if *n != i + 1 {
            return Err(fail(format!("hop {n} out of order")));
        }
        let parts: Vec<&str> = body.split(';').map(str::trim).collect();
        let [_, relation, _] = parts.as_slice() else {
            return Err(fail(format!("hop {n}: expected `subject; relation; ?`")));
        };
        let relation =
            normalize_relation(relation).map_err(|e| fail(format!("hop {n}: {e}")))?;
        let subject = if i == 0 {
            Slot::Bound(start.clone())
        } else {
            Slot::Unbound
        };
        steps.push(SubProblem::new(*n, subject, &relation).map_err(|e| fail(e.to_string()))?);
    }
    let path = ReasoningPath::new(&start, steps).map_err(|e| fail(e.to_string()))?;
    Ok(DecompositionResult {
        start_entity: start,
        path,
        raw_model_output: raw.to_string(),
    })
}

/// Decomposition fixture: start entity and the relation chain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecompositionFixture {
    pub start_entity: String,
    pub relations: Vec<String>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct KbFile {
    #[serde(default)]
    facts: Vec<Triplet>,
    #[serde(default)]
    decompositions: BTreeMap<String, DecompositionFixture>,
    #[serde(default)]
    aliases: AliasTable,
}

/// Deterministic stand-in for the target model's prior knowledge.
///
/// Answers come from `(subject, relation)` lookups with alias-normalized
/// subjects; decompositions come from per-question fixtures. Misses produce
/// [`UNKNOWN_SENTINEL`].
#[derive(Debug, Clone, Default)]
pub struct MockKnowledgeBase {
    facts: HashMap<(String, String), String>,
    decompositions: HashMap<String, DecompositionFixture>,
    aliases: AliasTable,
}

impl MockKnowledgeBase {
    pub fn new(aliases: AliasTable) -> Self {
        Self {
            aliases,
            ..Self::default()
        }
    }

    pub fn insert_fact(&mut self, fact: &Triplet) {
        self.facts.insert(
            (self.aliases.canonical_key(fact.subject()), fact.relation().to_string()),
            fact.object().to_string(),
        );
    }

    pub fn insert_decomposition(&mut self, question: &str, start_entity: &str, relations: &[&str]) {
        self.decompositions.insert(
            question.trim().to_string(),
            DecompositionFixture {
                start_entity: start_entity.to_string(),
                relations: relations.iter().map(|r| r.to_string()).collect(),
            },
        );
    }

    pub fn lookup(&self, subject: &str, relation: &str) -> Option<&str> {
        self.facts
            .get(&(self.aliases.canonical_key(subject), relation.to_string()))
            .map(String::as_str)
    }

    pub fn decomposition(&self, question: &str) -> Option<&DecompositionFixture> {
        self.decompositions.get(question.trim())
    }

    pub fn fact_count(&self) -> usize {
        self.facts.len()
    }

    /// Prior knowledge is every original-path fact plus the edited-path facts
    /// no edit of the instance accounts for (what the world says about a newly
    /// reached entity). Every question decomposes along its original path.
    pub fn from_instances<'a>(
        instances: impl IntoIterator<Item = &'a MultiHopInstance>,
        aliases: &AliasTable,
    ) -> Self {
        let mut kb = Self::new(aliases.clone());
        let instances: Vec<&MultiHopInstance> = instances.into_iter().collect();
        for inst in &instances {
            for fact in &inst.original_path {
                kb.insert_fact(fact);
            }
        }
        for inst in &instances {
            for fact in &inst.edited_path {
                let edited = inst.edits.iter().any(|e| {
                    aliases.matches(e.subject(), fact.subject()) && e.relation() == fact.relation()
                });
                let known = kb.lookup(fact.subject(), fact.relation()).is_some();
                if !edited && !known {
                    kb.insert_fact(fact);
                }
            }
        }
        for inst in instances {
            let relations: Vec<&str> = inst.original_path.iter().map(Triplet::relation).collect();
            for q in &inst.questions {
                kb.insert_decomposition(q, inst.original_path[0].subject(), &relations);
            }
        }
        kb
    }

    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text = fs::read_to_string(path)
            .map_err(|e| GatewayError::Config(format!("mock kb {}: {e}", path.display())))?;
        let file: KbFile = serde_json::from_str(&text)
            .map_err(|e| GatewayError::Config(format!("mock kb {}: {e}", path.display())))?;
        let mut kb = Self::new(file.aliases);
        for fact in &file.facts {
            kb.insert_fact(fact);
        }
        kb.decompositions = file.decompositions.into_iter().collect();
        Ok(kb)
    }

    /// Line-protocol decomposition text, as a well-behaved model would emit it.
    pub fn decomposition_text(&self, question: &str) -> String {
        let Some(fixture) = self.decomposition(question) else {
            return UNKNOWN_SENTINEL.to_string();
        };
        let mut out = format!("Entity: {}\n", fixture.start_entity);
        for (i, r) in fixture.relations.iter().enumerate() {
            let subject = if i == 0 { fixture.start_entity.as_str() } else { "?" };
            out.push_str(&format!("Hop {}: {subject}; {r}; ?\n", i + 1));
        }
        out
    }
}

impl ChatTransport for MockKnowledgeBase {
    fn complete(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        match request.task.as_ref().ok_or(GatewayError::MissingTask)? {
            Task::Decompose { question } => Ok(self.decomposition_text(question)),
            Task::Answer { sub_problem } => {
                let subject = sub_problem.subject.as_bound().unwrap_or_default();
                Ok(self
                    .lookup(subject, &sub_problem.relation)
                    .unwrap_or(UNKNOWN_SENTINEL)
                    .to_string())
            }
        }
    }
}

/// OpenAI-compatible chat completions endpoint.
pub struct HttpChatTransport {
    client: reqwest::blocking::Client,
    url: String,
    token: Option<String>,
    max_retries: u32,
    limit: InFlightLimit,
}

impl HttpChatTransport {
    pub fn new(
        url: &str,
        timeout: Duration,
        token: Option<String>,
        max_retries: u32,
        max_in_flight: usize,
    ) -> Result<Self, GatewayError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        Ok(Self {
            client,
            url: url.to_string(),
            token,
            max_retries,
            limit: InFlightLimit::new(max_in_flight),
        })
    }

    fn attempt(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        let mut builder = self.client.post(&self.url).json(request);
        if let Some(token) = &self.token {
            builder = builder.bearer_auth(token);
        }
        let response = builder
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        let body: serde_json::Value = response
            .json()
            .map_err(|e| GatewayError::BadResponse(e.to_string()))?;
        body.pointer("/choices/0/message/content")
            .and_then(|v| v.as_str())
            .map(str::to_string)
            .ok_or_else(|| GatewayError::BadResponse("missing choices[0].message.content".into()))
    }
}

impl ChatTransport for HttpChatTransport {
    fn complete(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        let _permit = self.limit.acquire();
        let mut attempt = 0;
        loop {
            match self.attempt(request) {
                Err(GatewayError::Transport(_)) if attempt < self.max_retries => {
                    attempt += 1;
                    std::thread::sleep(Duration::from_millis(100 * u64::from(attempt)));
                }
                other => return other,
            }
        }
    }
}

/// Request hash to response text.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Cassette {
    entries: BTreeMap<String, String>,
}

impl Cassette {
    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let err = |message: String| GatewayError::Cassette {
            path: path.display().to_string(),
            message,
        };
        let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| err(e.to_string()))
    }

    /// Loads the cassette or starts an empty one when the file does not exist.
    pub fn load_or_default(path: &Path) -> Result<Self, GatewayError> {
        if path.exists() {
            Self::load(path)
        } else {
            Ok(Self::default())
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), GatewayError> {
        let text = serde_json::to_string_pretty(self).expect("cassette serializes");
        fs::write(path, text).map_err(|e| GatewayError::Cassette {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn get(&self, hash: &str) -> Option<&str> {
        self.entries.get(hash).map(String::as_str)
    }

    pub fn insert(&mut self, hash: String, response: String) {
        self.entries.insert(hash, response);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Passes requests through and persists every response to the cassette file.
pub struct RecordingTransport {
    inner: Arc<dyn ChatTransport>,
    cassette: Mutex<Cassette>,
    path: PathBuf,
}

impl RecordingTransport {
    pub fn new(inner: Arc<dyn ChatTransport>, path: &Path) -> Result<Self, GatewayError> {
        Ok(Self {
            inner,
            cassette: Mutex::new(Cassette::load_or_default(path)?),
            path: path.to_path_buf(),
        })
    }
}

impl ChatTransport for RecordingTransport {
    fn complete(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        let response = self.inner.complete(request)?;
        let mut cassette = self.cassette.lock().expect("cassette lock");
        cassette.insert(request.hash(), response.clone());
        cassette.save(&self.path)?;
        Ok(response)
    }
}

/// Serves responses from a cassette only; a miss is an error.
pub struct ReplayTransport {
    cassette: Cassette,
}

impl ReplayTransport {
    pub fn new(cassette: Cassette) -> Self {
        Self { cassette }
    }

    pub fn from_path(path: &Path) -> Result<Self, GatewayError> {
        Ok(Self::new(Cassette::load(path)?))
    }
}

impl ChatTransport for ReplayTransport {
    fn complete(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        let hash = request.hash();
        self.cassette
            .get(&hash)
            .map(str::to_string)
            .ok_or(GatewayError::CassetteMiss(hash))
    }
}

/// Counts requests passed to the wrapped transport.
pub struct CountingTransport<T> {
    inner: T,
    calls: AtomicUsize,
    answers: AtomicUsize,
}

impl<T: ChatTransport> CountingTransport<T> {
    pub fn new(inner: T) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
            answers: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// Requests that carried an answer (fallback) task.
    pub fn answer_calls(&self) -> usize {
        self.answers.load(Ordering::SeqCst)
    }
}

impl<T: ChatTransport> ChatTransport for CountingTransport<T> {
    fn complete(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if matches!(request.task, Some(Task::Answer { .. })) {
            self.answers.fetch_add(1, Ordering::SeqCst);
        }
        self.inner.complete(request)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GatewayBackend {
    HttpChat,
    #[default]
    MockKb,
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TargetModelConfig {
    pub backend: GatewayBackend,
    pub url: Option<String>,
    pub model: String,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub token_env: Option<String>,
    pub decompose_template: Option<PathBuf>,
    pub query_template: Option<PathBuf>,
    pub temperature: f64,
    pub mock_kb: Option<PathBuf>,
    pub cassette: Option<PathBuf>,
    /// Wrap the backend and write every response to `cassette`.
    pub record: bool,
    pub max_in_flight: usize,
}

impl Default for TargetModelConfig {
    fn default() -> Self {
        Self {
            backend: GatewayBackend::MockKb,
            url: None,
            model: "mock".into(),
            timeout_ms: 60_000,
            max_retries: 2,
            token_env: None,
            decompose_template: None,
            query_template: None,
            temperature: 0.0,
            mock_kb: None,
            cassette: None,
            record: false,
            max_in_flight: 4,
        }
    }
}

impl TargetModelConfig {
    /// Builds the transport chain. `kb` is used by the mock backend when no
    /// `mock_kb` file is configured.
    pub fn build_transport(
        &self,
        kb: Option<MockKnowledgeBase>,
    ) -> Result<Arc<dyn ChatTransport>, GatewayError> {
        if self.temperature < 0.0 {
            return Err(GatewayError::Config("temperature must be >= 0".into()));
        }
        let base: Arc<dyn ChatTransport> = match self.backend {
            GatewayBackend::MockKb => match (&self.mock_kb, kb) {
                (Some(path), _) => Arc::new(MockKnowledgeBase::load(path)?),
                (None, Some(kb)) => Arc::new(kb),
                (None, None) => {
                    return Err(GatewayError::Config("mock backend needs a knowledge base".into()))
                }
            },
            GatewayBackend::HttpChat => {
                let url = self
                    .url
                    .as_deref()
                    .ok_or_else(|| GatewayError::Config("http backend needs a url".into()))?;
                let token = match &self.token_env {
                    Some(var) => Some(std::env::var(var).map_err(|_| {
                        GatewayError::Config(format!("environment variable {var} is not set"))
                    })?),
                    None => None,
                };
                Arc::new(HttpChatTransport::new(
                    url,
                    Duration::from_millis(self.timeout_ms),
                    token,
                    self.max_retries,
                    self.max_in_flight,
                )?)
            }
            GatewayBackend::Replay => {
                let path = self
                    .cassette
                    .as_deref()
                    .ok_or_else(|| GatewayError::Config("replay backend needs a cassette".into()))?;
                return Ok(Arc::new(ReplayTransport::from_path(path)?));
            }
        };
        if self.record {
            let path = self
                .cassette
                .as_deref()
                .ok_or_else(|| GatewayError::Config("record mode needs a cassette path".into()))?;
            return Ok(Arc::new(RecordingTransport::new(base, path)?));
        }
        Ok(base)
    }

    pub fn build(
        &self,
        kb: Option<MockKnowledgeBase>,
    ) -> Result<TargetModel, GatewayError> {
        let templates =
            PromptTemplates::load(self.decompose_template.as_deref(), self.query_template.as_deref())?;
        Ok(TargetModel::new(self.build_transport(kb)?, templates, &self.model)
            .with_temperature(self.temperature))
    }
}
