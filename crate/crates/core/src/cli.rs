//! Command-line surface: `ingest`, `answer` and `evaluate`.
//!
//! Settings precedence is flags, then `HOPEDIT_*` environment variables, then
//! the `--config` TOML file, then built-in defaults.

use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{ConfigError, Settings};
use crate::embedding::{EmbedderBackend, EmbeddingError};
use crate::evaluation::{ablate, run_experiment, BatchSize, Dataset, EvalError, ExperimentAbort, ExperimentRun, Pipeline};
use crate::gateway::{GatewayBackend, GatewayError, MockKnowledgeBase};
use crate::memory::{read_edits_jsonl, EditIndex, MemoryError};
use crate::model::{AliasTable, EditCollection, ValidationError};
use crate::rules::{ImplicationDirection, RuleLoadError, RuleSet};
use crate::traversal::{solve, TraversalError};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Rules(#[from] RuleLoadError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Traversal(#[from] TraversalError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Abort(#[from] ExperimentAbort),
    #[error("experiment aborted (partial report written): {0}")]
    Aborted(String),
    #[error("edits: {0}")]
    Edits(#[from] ValidationError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("no answer: {0}")]
    NoAnswer(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Parser)]
#[command(name = "hopedit", version, about = "Multi-hop QA over an edited-fact memory")]
pub struct Cli {
    /// TOML settings file.
    #[arg(long, global = true, env = "HOPEDIT_CONFIG")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Embed a JSONL edit file and persist the index.
    Ingest(IngestArgs),
    /// Answer one question against a persisted index.
    Answer(AnswerArgs),
    /// Run the batch-edit evaluation protocol over a dataset.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub edits: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub embedder: EmbedderArgs,
    #[arg(long, env = "HOPEDIT_ALIASES")]
    pub aliases: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnswerArgs {
    #[arg(long)]
    pub question: String,
    #[arg(long)]
    pub index: PathBuf,
    /// Print the hop-by-hop trace as JSON on stderr.
    #[arg(long)]
    pub trace: bool,
    #[command(flatten)]
    pub embedder: EmbedderArgs,
    #[command(flatten)]
    pub rules: RuleArgs,
    #[command(flatten)]
    pub backend: BackendArgs,
    #[command(flatten)]
    pub traversal: TraversalArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Output directory for reports and traces.
    #[arg(long)]
    pub out: PathBuf,
    /// Instances per edit batch, or `all`.
    #[arg(long = "k", env = "HOPEDIT_BATCH_SIZE")]
    pub batch_size: Option<BatchSize>,
    #[arg(long, env = "HOPEDIT_ROUNDS")]
    pub rounds: Option<usize>,
    #[arg(long, env = "HOPEDIT_SEED")]
    pub seed: Option<u64>,
    #[arg(long, env = "HOPEDIT_JOBS")]
    pub jobs: Option<usize>,
    /// Run full, -I, -C and -IC variants.
    #[arg(long)]
    pub ablate: bool,
    #[command(flatten)]
    pub embedder: EmbedderArgs,
    #[command(flatten)]
    pub rules: RuleArgs,
    #[command(flatten)]
    pub backend: BackendArgs,
    #[command(flatten)]
    pub traversal: TraversalArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EmbedderKind {
    LocalTrigram,
    RemoteService,
}

#[derive(Debug, Args)]
pub struct EmbedderArgs {
    #[arg(long, env = "HOPEDIT_EMBEDDER")]
    pub embedder: Option<EmbedderKind>,
    #[arg(long, env = "HOPEDIT_DIMENSION")]
    pub dimension: Option<usize>,
    #[arg(long, env = "HOPEDIT_EMBEDDER_URL")]
    pub embedder_url: Option<String>,
}

#[derive(Debug, Args)]
pub struct RuleArgs {
    #[arg(long, env = "HOPEDIT_IMPLICATIONS")]
    pub implications: Option<PathBuf>,
    #[arg(long, env = "HOPEDIT_COMPOSITIONS")]
    pub compositions: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BackendKind {
    Mock,
    Http,
    Replay,
}

#[derive(Debug, Args)]
pub struct BackendArgs {
    #[arg(long, env = "HOPEDIT_BACKEND")]
    pub backend: Option<BackendKind>,
    #[arg(long, env = "HOPEDIT_MOCK_KB")]
    pub mock_kb: Option<PathBuf>,
    #[arg(long, env = "HOPEDIT_CASSETTE")]
    pub cassette: Option<PathBuf>,
    /// Record every model response into the cassette.
    #[arg(long)]
    pub record: bool,
    #[arg(long, env = "HOPEDIT_MODEL")]
    pub model: Option<String>,
    #[arg(long, env = "HOPEDIT_MODEL_URL")]
    pub model_url: Option<String>,
    /// Name of the environment variable holding the API token.
    #[arg(long, env = "HOPEDIT_TOKEN_ENV")]
    pub token_env: Option<String>,
    #[arg(long)]
    pub timeout_ms: Option<u64>,
    #[arg(long)]
    pub max_retries: Option<u32>,
    #[arg(long)]
    pub decompose_template: Option<PathBuf>,
    #[arg(long)]
    pub query_template: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DirectionKind {
    QueryImpliesEdit,
    EditImpliesQuery,
}

#[derive(Debug, Args)]
pub struct TraversalArgs {
    #[arg(long, env = "HOPEDIT_ETA", allow_hyphen_values = true)]
    pub eta: Option<f64>,
    #[arg(long, env = "HOPEDIT_TOP_K")]
    pub top_k: Option<usize>,
    #[arg(long)]
    pub max_hops: Option<usize>,
    #[arg(long)]
    pub direction: Option<DirectionKind>,
    #[arg(long)]
    pub disable_implication: bool,
    #[arg(long)]
    pub disable_composition: bool,
    #[arg(long)]
    pub composition_current_hop_only: bool,
}

impl EmbedderArgs {
    fn apply(&self, s: &mut Settings) {
        if let Some(kind) = self.embedder {
            s.embedder.backend = match kind {
                EmbedderKind::LocalTrigram => EmbedderBackend::LocalTrigram,
                EmbedderKind::RemoteService => EmbedderBackend::RemoteService,
            };
        }
        if let Some(d) = self.dimension {
            s.embedder.dimension = d;
        }
        if let Some(url) = &self.embedder_url {
            s.embedder.url = Some(url.clone());
        }
    }
}

impl RuleArgs {
    fn apply(&self, s: &mut Settings) {
        if let Some(p) = &self.implications {
            s.rules.implications = Some(p.clone());
        }
        if let Some(p) = &self.compositions {
            s.rules.compositions = Some(p.clone());
        }
    }
}

impl BackendArgs {
    fn apply(&self, s: &mut Settings) {
        let m = &mut s.model;
        if let Some(b) = self.backend {
            m.backend = match b {
                BackendKind::Mock => GatewayBackend::MockKb,
                BackendKind::Http => GatewayBackend::HttpChat,
                BackendKind::Replay => GatewayBackend::Replay,
            };
        }
        if let Some(p) = &self.mock_kb {
            m.mock_kb = Some(p.clone());
        }
        if let Some(p) = &self.cassette {
            m.cassette = Some(p.clone());
        }
        m.record |= self.record;
        if let Some(v) = &self.model {
            m.model = v.clone();
        }
        if let Some(v) = &self.model_url {
            m.url = Some(v.clone());
        }
        if let Some(v) = &self.token_env {
            m.token_env = Some(v.clone());
        }
        if let Some(v) = self.timeout_ms {
            m.timeout_ms = v;
        }
        if let Some(v) = self.max_retries {
            m.max_retries = v;
        }
        if let Some(p) = &self.decompose_template {
            m.decompose_template = Some(p.clone());
        }
        if let Some(p) = &self.query_template {
            m.query_template = Some(p.clone());
        }
    }
}

impl TraversalArgs {
    fn apply(&self, s: &mut Settings) {
        let t = &mut s.traversal;
        if let Some(v) = self.eta {
            t.eta = v;
        }
        if let Some(v) = self.top_k {
            t.top_k = v;
        }
        if let Some(v) = self.max_hops {
            t.max_hops = v;
        }
        if let Some(d) = self.direction {
            t.flags.direction = match d {
                DirectionKind::QueryImpliesEdit => ImplicationDirection::QueryImpliesEdit,
                DirectionKind::EditImpliesQuery => ImplicationDirection::EditImpliesQuery,
            };
        }
        t.flags.disable_implication |= self.disable_implication;
        t.flags.disable_composition |= self.disable_composition;
        t.flags.composition_current_hop_only |= self.composition_current_hop_only;
    }
}

/// Settings after applying file, environment and flags for `command`.
pub fn resolve_settings(cli: &Cli) -> Result<Settings, CliError> {
    let mut s = Settings::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Ingest(a) => {
            a.embedder.apply(&mut s);
            if let Some(p) = &a.aliases {
                s.aliases = Some(p.clone());
            }
        }
        Command::Answer(a) => {
            a.embedder.apply(&mut s);
            a.rules.apply(&mut s);
            a.backend.apply(&mut s);
            a.traversal.apply(&mut s);
        }
        Command::Evaluate(a) => {
            a.embedder.apply(&mut s);
            a.rules.apply(&mut s);
            a.backend.apply(&mut s);
            a.traversal.apply(&mut s);
            if let Some(k) = a.batch_size {
                s.experiment.batch_size = k;
            }
            if let Some(v) = a.rounds {
                s.experiment.rounds = v;
            }
            if let Some(v) = a.seed {
                s.experiment.seed = v;
            }
            if let Some(v) = a.jobs {
                s.experiment.jobs = v;
            }
        }
    }
    Ok(s)
}

fn load_aliases(path: Option<&Path>) -> Result<AliasTable, CliError> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(io_err(p))?;
            serde_json::from_str(&text).map_err(|e| CliError::Io {
                path: p.display().to_string(),
                source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
            })
        }
        None => Ok(AliasTable::new()),
    }
}

fn load_rules(s: &Settings) -> Result<RuleSet, CliError> {
    Ok(RuleSet::load(
        s.rules.implications.as_deref(),
        s.rules.compositions.as_deref(),
    )?)
}

/// Runs one parsed command, writing user-facing output to `out` and traces
/// and diagnostics to `err`.
pub fn run(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let settings = resolve_settings(cli)?;
    let w = |e: std::io::Error| CliError::Io {
        path: "<output>".into(),
        source: e,
    };
    match &cli.command {
        Command::Ingest(a) => {
            let embedder = settings.embedder.build()?;
            let aliases = load_aliases(settings.aliases.as_deref())?;
            let file = fs::File::open(&a.edits).map_err(io_err(&a.edits))?;
            let edits = read_edits_jsonl(BufReader::new(file))?;
            let collection = EditCollection::from_edits(edits, &aliases)?;
            let index = EditIndex::build(&collection, embedder, Arc::new(aliases))?;
            index.save(&a.out)?;
            writeln!(
                out,
                "indexed {} edits (dimension {}, index {}, config {})",
                index.len(),
                index.dimension(),
                index.fingerprint(),
                settings.fingerprint()
            )
            .map_err(w)?;
        }
        Command::Answer(a) => {
            let model = settings.model.build(None)?;
            let rules = load_rules(&settings)?;
            let embedder = settings.embedder.build()?;
            let index = EditIndex::load(&a.index, embedder)?;
            let output = solve(&a.question, &index, &rules, &model, &settings.traversal)?;
            writeln!(err, "config {}", settings.fingerprint()).map_err(w)?;
            if a.trace {
                let mut trace = serde_json::to_value(&output).expect("trace serializes");
                trace["config_fingerprint"] = settings.fingerprint().into();
                writeln!(err, "{trace}").map_err(w)?;
            }
            match &output.trace.final_answer {
                Some(answer) => writeln!(out, "{answer}").map_err(w)?,
                None => {
                    let reason = output
                        .trace
                        .failure
                        .as_ref()
                        .map(|f| format!("{f:?}"))
                        .unwrap_or_default();
                    return Err(CliError::NoAnswer(reason));
                }
            }
        }
        Command::Evaluate(a) => {
            let dataset = Dataset::load(&a.dataset)?;
            let kb = (settings.model.backend == GatewayBackend::MockKb && settings.model.mock_kb.is_none())
                .then(|| MockKnowledgeBase::from_instances(&dataset.instances, &dataset.merged_aliases()));
            let model = settings.model.build(kb)?;
            let rules = load_rules(&settings)?;
            let pipeline = Pipeline {
                embedder: settings.embedder.build()?,
                rules: &rules,
                model: &model,
            };
            let config = settings.experiment_config();
            fs::create_dir_all(&a.out).map_err(io_err(&a.out))?;
            if a.ablate {
                let mut table = ablate(&dataset, &config, &pipeline)?;
                for (_, report) in &mut table.rows {
                    report.config_fingerprint = settings.fingerprint();
                    report.config_snapshot = Some(settings.snapshot());
                }
                let path = a.out.join("ablation.json");
                let json = serde_json::to_string_pretty(&table).expect("table serializes");
                fs::write(&path, json).map_err(io_err(&path))?;
                let text = table.to_table();
                let path = a.out.join("ablation.txt");
                fs::write(&path, &text).map_err(io_err(&path))?;
                write!(out, "{text}").map_err(w)?;
            } else {
                match run_experiment(&dataset, &config, &pipeline) {
                    Ok(run) => {
                        write_run(&a.out, run, &settings, out)?;
                    }
                    Err(abort) => {
                        let ExperimentAbort { partial, error } = abort;
                        write_run(&a.out, *partial, &settings, &mut std::io::sink())?;
                        return Err(CliError::Aborted(error.to_string()));
                    }
                }
            }
        }
    }
    Ok(())
}

fn write_run(
    dir: &Path,
    mut run: ExperimentRun,
    settings: &Settings,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    run.report.config_fingerprint = settings.fingerprint();
    run.report.config_snapshot = Some(settings.snapshot());
    let path = dir.join("report.json");
    fs::write(&path, run.report.to_json()).map_err(io_err(&path))?;
    let table = run.report.to_table();
    let path = dir.join("report.txt");
    fs::write(&path, &table).map_err(io_err(&path))?;
    let traces = dir.join("traces");
    fs::create_dir_all(&traces).map_err(io_err(&traces))?;
    for t in &run.traces {
        let name = format!(
            "r{}_{}.json",
            t.round,
            t.instance_id.replace(|c: char| !c.is_ascii_alphanumeric() && c != '-' && c != '_', "_")
        );
        let path = traces.join(name);
        let json = serde_json::to_string_pretty(t).expect("traces serialize");
        fs::write(&path, json).map_err(io_err(&path))?;
    }
    write!(out, "{table}").map_err(|e| CliError::Io {
        path: "<output>".into(),
        source: e,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.toml");
        fs::write(&cfg, "[traversal]\neta = 0.7\ntop_k = 3\n[experiment]\nrounds = 5\n").unwrap();
        let cli = Cli::try_parse_from([
            "hopedit",
            "--config",
            cfg.to_str().unwrap(),
            "evaluate",
            "--dataset",
            "d.json",
            "--out",
            "o",
            "--eta",
            "0.6",
            "--k",
            "all",
        ])
        .unwrap();
        let s = resolve_settings(&cli).unwrap();
        assert_eq!(s.traversal.eta, 0.6);
        assert_eq!(s.traversal.top_k, 3);
        assert_eq!(s.experiment.rounds, 5);
        assert_eq!(s.experiment.batch_size, BatchSize::All);
    }
}
