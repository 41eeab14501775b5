//! Dataset loading, M-Acc / H-Acc scoring, batch-edit experiments and
//! ablation runs.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::embedding::Embedder;
use crate::gateway::TargetModel;
use crate::memory::{EditIndex, MemoryError};
use crate::model::{entity_key, AliasTable, EditCollection, MultiHopInstance, ResolutionTrace};
use crate::rules::RuleSet;
use crate::traversal::{solve, SolveOutput, TraversalConfig, TraversalError};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("dataset: {0}")]
    Io(#[from] std::io::Error),
    #[error("dataset: {0}")]
    Json(#[from] serde_json::Error),
    #[error("dataset instance {index}: {message}")]
    Instance { index: usize, message: String },
    #[error("instance {instance_id}: no answer for question variant {question:?}")]
    MissingVariant {
        instance_id: String,
        question: String,
    },
    #[error("experiment config: {0}")]
    Config(String),
    #[error("batch edits: {0}")]
    Edits(String),
    #[error(transparent)]
    Memory(#[from] MemoryError),
}

/// A named set of evaluation instances with a shared alias table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dataset {
    pub name: String,
    pub instances: Vec<MultiHopInstance>,
    pub aliases: AliasTable,
}

#[derive(Deserialize)]
struct RawDataset {
    name: String,
    instances: Vec<serde_json::Value>,
    #[serde(default)]
    aliases: AliasTable,
}

impl Dataset {
    pub fn new(
        name: &str,
        instances: Vec<MultiHopInstance>,
        aliases: AliasTable,
    ) -> Result<Self, EvalError> {
        let mut seen = HashSet::new();
        for (index, inst) in instances.iter().enumerate() {
            if !seen.insert(inst.instance_id.clone()) {
                return Err(EvalError::Instance {
                    index,
                    message: format!("instance_id: duplicate {:?}", inst.instance_id),
                });
            }
            if inst.edits.is_empty() {
                return Err(EvalError::Instance {
                    index,
                    message: "edits: empty".into(),
                });
            }
        }
        Ok(Self {
            name: name.to_string(),
            instances,
            aliases,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, EvalError> {
        let raw: RawDataset = serde_json::from_str(text)?;
        let instances = raw
            .instances
            .into_iter()
            .enumerate()
            .map(|(index, value)| {
                serde_json::from_value(value).map_err(|e| EvalError::Instance {
                    index,
                    message: e.to_string(),
                })
            })
            .collect::<Result<Vec<MultiHopInstance>, _>>()?;
        Self::new(&raw.name, instances, raw.aliases)
    }

    pub fn load(path: &Path) -> Result<Self, EvalError> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), EvalError> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Dataset-level aliases plus each instance's answer aliases.
    pub fn merged_aliases(&self) -> AliasTable {
        let mut table = self.aliases.clone();
        for inst in &self.instances {
            table.insert(&inst.edited_answer, &inst.answer_aliases);
        }
        table
    }
}

/// True when `answer` names the instance's edited answer.
pub fn matches_edited_answer(inst: &MultiHopInstance, answer: &str, aliases: &AliasTable) -> bool {
    let key = entity_key(answer);
    inst.answer_aliases.iter().any(|a| entity_key(a) == key)
        || aliases.matches(answer, &inst.edited_answer)
}

/// 1 iff any question variant was answered with the edited answer (or an alias).
pub fn m_acc(
    inst: &MultiHopInstance,
    answers: &BTreeMap<String, Option<String>>,
    aliases: &AliasTable,
) -> Result<u8, EvalError> {
    let mut hit = false;
    for q in &inst.questions {
        let answer = answers.get(q).ok_or_else(|| EvalError::MissingVariant {
            instance_id: inst.instance_id.clone(),
            question: q.clone(),
        })?;
        hit |= answer
            .as_deref()
            .is_some_and(|a| matches_edited_answer(inst, a, aliases));
    }
    Ok(u8::from(hit))
}

/// 1 iff every hop resolves to the corresponding edited-path object. Hops
/// subsumed by a composition are judged by the object of the hop that
/// closed the run.
pub fn h_acc(inst: &MultiHopInstance, trace: &ResolutionTrace, aliases: &AliasTable) -> u8 {
    if trace.failure.is_some() || trace.hops.len() != inst.edited_path.len() {
        return 0;
    }
    let last = trace.hops.len() - 1;
    let all = trace.hops.iter().enumerate().all(|(i, hop)| {
        if hop.subsumed {
            return true;
        }
        let Some(resolved) = hop.resolved_object.as_deref() else {
            return false;
        };
        let expected = inst.edited_path[i].object();
        aliases.matches(resolved, expected)
            || (i == last && matches_edited_answer(inst, resolved, aliases))
    });
    u8::from(all)
}

/// Edits injected per batch: a number of instances, or all of them at once.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BatchSize {
    Count(usize),
    #[serde(with = "all_literal")]
    All,
}

mod all_literal {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str("all")
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(), D::Error> {
        let v = String::deserialize(d)?;
        if v.eq_ignore_ascii_case("all") {
            Ok(())
        } else {
            Err(serde::de::Error::custom("expected \"all\""))
        }
    }
}

impl std::str::FromStr for BatchSize {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("all") {
            return Ok(BatchSize::All);
        }
        match s.parse::<usize>() {
            Ok(0) => Err("batch size must be >= 1".into()),
            Ok(n) => Ok(BatchSize::Count(n)),
            Err(_) => Err(format!("expected a positive integer or \"all\", got {s:?}")),
        }
    }
}

impl std::fmt::Display for BatchSize {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BatchSize::Count(n) => write!(f, "{n}"),
            BatchSize::All => f.write_str("all"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub batch_size: BatchSize,
    pub traversal: TraversalConfig,
    pub seed: u64,
    pub rounds: usize,
    pub jobs: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            batch_size: BatchSize::Count(1),
            traversal: TraversalConfig::default(),
            seed: 0,
            rounds: 1,
            jobs: 1,
        }
    }
}

impl ExperimentConfig {
    /// Hash of the settings that influence results (`jobs` excluded).
    pub fn fingerprint(&self) -> String {
        let value = serde_json::json!({
            "batch_size": self.batch_size,
            "traversal": self.traversal,
            "seed": self.seed,
            "rounds": self.rounds,
        });
        hex::encode(Sha256::digest(value.to_string()))
    }

    fn batch_len(&self, dataset_len: usize) -> Result<usize, EvalError> {
        match self.batch_size {
            BatchSize::All => Ok(dataset_len.max(1)),
            BatchSize::Count(0) => Err(EvalError::Config("batch size must be >= 1".into())),
            BatchSize::Count(n) if n > dataset_len => Err(EvalError::Config(format!(
                "batch size {n} exceeds dataset size {dataset_len}"
            ))),
            BatchSize::Count(n) => Ok(n),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceVerdict {
    pub round: usize,
    pub batch: usize,
    pub instance_id: String,
    pub m_acc: u8,
    pub h_acc: u8,
    pub answers: BTreeMap<String, Option<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub round: usize,
    pub batch: usize,
    pub size: usize,
    pub edits_indexed: usize,
    pub m_acc: f64,
    pub h_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub dataset: String,
    pub config_fingerprint: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config_snapshot: Option<serde_json::Value>,
    pub batch_size: BatchSize,
    pub rounds: usize,
    pub m_acc: f64,
    pub h_acc: f64,
    pub batches: Vec<BatchReport>,
    pub instances: Vec<InstanceVerdict>,
    pub source_histogram: BTreeMap<String, usize>,
}

impl Report {
    fn assemble(
        dataset: &Dataset,
        config: &ExperimentConfig,
        batches: Vec<BatchReport>,
        instances: Vec<InstanceVerdict>,
        source_histogram: BTreeMap<String, usize>,
    ) -> Self {
        let n = instances.len().max(1) as f64;
        let m = instances.iter().map(|v| f64::from(v.m_acc)).sum::<f64>() / n;
        let h = instances.iter().map(|v| f64::from(v.h_acc)).sum::<f64>() / n;
        Self {
            dataset: dataset.name.clone(),
            config_fingerprint: config.fingerprint(),
            config_snapshot: None,
            batch_size: config.batch_size,
            rounds: config.rounds,
            m_acc: m,
            h_acc: h,
            batches,
            instances,
            source_histogram,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Plain-text summary: one row per batch plus the aggregate.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "dataset: {}  batch size: {}  rounds: {}", self.dataset, self.batch_size, self.rounds);
        let _ = writeln!(out, "{:<8}{:<8}{:>6}{:>8}{:>8}", "round", "batch", "size", "M-Acc", "H-Acc");
        for b in &self.batches {
            let _ = writeln!(
                out,
                "{:<8}{:<8}{:>6}{:>8.2}{:>8.2}",
                b.round,
                b.batch,
                b.size,
                100.0 * b.m_acc,
                100.0 * b.h_acc
            );
        }
        let _ = writeln!(
            out,
            "{:<16}{:>6}{:>8.2}{:>8.2}",
            "overall",
            self.instances.len(),
            100.0 * self.m_acc,
            100.0 * self.h_acc
        );
        out
    }
}

/// Traces for every question variant of one instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceTraces {
    pub round: usize,
    pub batch: usize,
    pub instance_id: String,
    pub outputs: Vec<SolveOutput>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRun {
    pub report: Report,
    pub traces: Vec<InstanceTraces>,
}

/// A hard failure mid-run, with everything completed before it.
#[derive(Debug, thiserror::Error)]
#[error("experiment aborted: {error}")]
pub struct ExperimentAbort {
    pub partial: Box<ExperimentRun>,
    #[source]
    pub error: AbortCause,
}

#[derive(Debug, thiserror::Error)]
pub enum AbortCause {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Traversal(#[from] TraversalError),
}

/// Components shared by every batch of an experiment.
pub struct Pipeline<'a> {
    pub embedder: Arc<dyn Embedder>,
    pub rules: &'a RuleSet,
    pub model: &'a TargetModel,
}

fn parallel_map<T, R, F>(items: &[T], jobs: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    if jobs <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    let chunk = items.len().div_ceil(jobs);
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| s.spawn(|| part.iter().map(&f).collect::<Vec<_>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}

/// Runs the batch-edit protocol: per round, shuffle with the seed, split into
/// batches, index the union of each batch's edits and answer every question
/// variant of every member instance.
pub fn run_experiment(
    dataset: &Dataset,
    config: &ExperimentConfig,
    pipeline: &Pipeline<'_>,
) -> Result<ExperimentRun, ExperimentAbort> {
    let mut batches = Vec::new();
    let mut verdicts = Vec::new();
    let mut traces = Vec::new();
    let mut histogram: BTreeMap<String, usize> = crate::model::ResolutionSource::ALL
        .iter()
        .map(|s| (s.as_str().to_string(), 0))
        .collect();
    let aliases = Arc::new(dataset.merged_aliases());

    let result = (|| -> Result<(), AbortCause> {
        config.traversal.validate()?;
        if config.rounds == 0 {
            return Err(EvalError::Config("rounds must be >= 1".into()).into());
        }
        let batch_len = config.batch_len(dataset.len())?;
        for round in 0..config.rounds {
            let mut order: Vec<usize> = (0..dataset.len()).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(round as u64));
            order.shuffle(&mut rng);

            for (batch_no, members) in order.chunks(batch_len).enumerate() {
                let members: Vec<&MultiHopInstance> =
                    members.iter().map(|&i| &dataset.instances[i]).collect();
                let edits = EditCollection::from_edits(
                    members.iter().flat_map(|m| m.edits.iter().cloned()),
                    &aliases,
                )
                .map_err(|e| EvalError::Edits(e.to_string()))?;
                let index = EditIndex::build(&edits, pipeline.embedder.clone(), aliases.clone())
                    .map_err(EvalError::from)?;

                let work: Vec<(usize, &str)> = members
                    .iter()
                    .enumerate()
                    .flat_map(|(m, inst)| inst.questions.iter().map(move |q| (m, q.as_str())))
                    .collect();
                let outputs = parallel_map(&work, config.jobs, |(_, q)| {
                    solve(q, &index, pipeline.rules, pipeline.model, &config.traversal)
                });

                let mut per_member: Vec<Vec<SolveOutput>> = vec![Vec::new(); members.len()];
                for ((m, _), out) in work.iter().zip(outputs) {
                    per_member[*m].push(out?);
                }

                let (mut m_sum, mut h_sum) = (0u32, 0u32);
                for (inst, outputs) in members.iter().zip(per_member) {
                    let answers: BTreeMap<String, Option<String>> = outputs
                        .iter()
                        .map(|o| (o.trace.question.clone(), o.trace.final_answer.clone()))
                        .collect();
                    let m = m_acc(inst, &answers, &aliases)?;
                    let h = outputs
                        .iter()
                        .map(|o| h_acc(inst, &o.trace, &aliases))
                        .max()
                        .unwrap_or(0);
                    for o in &outputs {
                        for hop in &o.trace.hops {
                            *histogram.entry(hop.source.as_str().to_string()).or_default() += 1;
                        }
                    }
                    m_sum += u32::from(m);
                    h_sum += u32::from(h);
                    verdicts.push(InstanceVerdict {
                        round,
                        batch: batch_no,
                        instance_id: inst.instance_id.clone(),
                        m_acc: m,
                        h_acc: h,
                        answers,
                    });
                    traces.push(InstanceTraces {
                        round,
                        batch: batch_no,
                        instance_id: inst.instance_id.clone(),
                        outputs,
                    });
                }
                let size = members.len();
                batches.push(BatchReport {
                    round,
                    batch: batch_no,
                    size,
                    edits_indexed: index.len(),
                    m_acc: f64::from(m_sum) / size as f64,
                    h_acc: f64::from(h_sum) / size as f64,
                });
            }
        }
        Ok(())
    })();

    let run = ExperimentRun {
        report: Report::assemble(dataset, config, batches, verdicts, histogram),
        traces,
    };
    match result {
        Ok(()) => Ok(run),
        Err(error) => Err(ExperimentAbort {
            partial: Box::new(run),
            error,
        }),
    }
}

/// Ablation variants compared against the full pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Ablation {
    #[serde(rename = "full")]
    Full,
    #[serde(rename = "-I")]
    NoImplication,
    #[serde(rename = "-C")]
    NoComposition,
    #[serde(rename = "-IC")]
    NoRules,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [
        Ablation::Full,
        Ablation::NoImplication,
        Ablation::NoComposition,
        Ablation::NoRules,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::NoImplication => "-I",
            Ablation::NoComposition => "-C",
            Ablation::NoRules => "-IC",
        }
    }

    pub fn apply(self, config: &ExperimentConfig) -> ExperimentConfig {
        let mut c = config.clone();
        let (i, comp) = match self {
            Ablation::Full => (false, false),
            Ablation::NoImplication => (true, false),
            Ablation::NoComposition => (false, true),
            Ablation::NoRules => (true, true),
        };
        c.traversal.flags.disable_implication = i;
        c.traversal.flags.disable_composition = comp;
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationTable {
    pub rows: Vec<(Ablation, Report)>,
}

impl AblationTable {
    pub fn report(&self, variant: Ablation) -> Option<&Report> {
        self.rows.iter().find(|(a, _)| *a == variant).map(|(_, r)| r)
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<8}{:>8}{:>8}", "variant", "M-Acc", "H-Acc");
        for (a, r) in &self.rows {
            let _ = writeln!(out, "{:<8}{:>8.2}{:>8.2}", a.label(), 100.0 * r.m_acc, 100.0 * r.h_acc);
        }
        out
    }
}

/// Runs the full pipeline and the three rule ablations with otherwise
/// identical settings.
pub fn ablate(
    dataset: &Dataset,
    base: &ExperimentConfig,
    pipeline: &Pipeline<'_>,
) -> Result<AblationTable, ExperimentAbort> {
    let rows = Ablation::ALL
        .iter()
        .map(|&a| Ok((a, run_experiment(dataset, &a.apply(base), pipeline)?.report)))
        .collect::<Result<Vec<_>, ExperimentAbort>>()?;
    Ok(AblationTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FactEdit, HopRecord, ResolutionSource, Slot, SubProblem, Triplet};

    fn t(s: &str, r: &str, o: &str) -> Triplet {
        Triplet::new(s, r, o).unwrap()
    }

    fn instance() -> MultiHopInstance {
        MultiHopInstance::new(
            "i1".into(),
            vec![FactEdit::new("e1", "B", "r2", Some("C"), "D").unwrap()],
            vec!["q1".into(), "q2".into(), "q3".into()],
            "C",
            "D",
            vec![t("A", "r1", "B"), t("B", "r2", "C")],
            vec![t("A", "r1", "B"), t("B", "r2", "D")],
            vec!["Dee".to_string()],
        )
        .unwrap()
    }

    fn answers(values: [&str; 3]) -> BTreeMap<String, Option<String>> {
        ["q1", "q2", "q3"]
            .iter()
            .zip(values)
            .map(|(q, a)| (q.to_string(), Some(a.to_string())))
            .collect()
    }

    fn hop(i: usize, object: Option<&str>, subsumed: bool) -> HopRecord {
        HopRecord {
            sub_problem: SubProblem::new(i, Slot::Bound("x".into()), "r").unwrap(),
            source: ResolutionSource::LlmFallback,
            chosen_edit_id: None,
            similarity_score: None,
            resolved_object: object.map(str::to_string),
            subsumed,
            model_unknown: false,
        }
    }

    fn trace(hops: Vec<HopRecord>) -> ResolutionTrace {
        ResolutionTrace {
            question: "q1".into(),
            start_entity: Some("A".into()),
            final_answer: hops.last().and_then(|h| h.resolved_object.clone()),
            hops,
            failure: None,
        }
    }

    #[test]
    fn m_acc_is_a_disjunction() {
        let inst = instance();
        let a = AliasTable::new();
        assert_eq!(m_acc(&inst, &answers(["x", "D", "y"]), &a).unwrap(), 1);
        assert_eq!(m_acc(&inst, &answers(["x", "C", "y"]), &a).unwrap(), 0);
        assert_eq!(m_acc(&inst, &answers(["dee", "x", "y"]), &a).unwrap(), 1);
        let mut partial = answers(["D", "x", "y"]);
        partial.remove("q3");
        assert!(matches!(
            m_acc(&inst, &partial, &a),
            Err(EvalError::MissingVariant { .. })
        ));
    }

    #[test]
    fn h_acc_is_a_conjunction() {
        let inst = instance();
        let a = AliasTable::new();
        assert_eq!(h_acc(&inst, &trace(vec![hop(1, Some("B"), false), hop(2, Some("D"), false)]), &a), 1);
        assert_eq!(h_acc(&inst, &trace(vec![hop(1, Some("B"), false), hop(2, Some("C"), false)]), &a), 0);
        assert_eq!(h_acc(&inst, &trace(vec![hop(1, Some("B"), false)]), &a), 0);
        // composition closing both hops with the right final object
        assert_eq!(h_acc(&inst, &trace(vec![hop(1, None, true), hop(2, Some("D"), false)]), &a), 1);
        assert_eq!(h_acc(&inst, &trace(vec![hop(1, None, true), hop(2, Some("Q"), false)]), &a), 0);
    }

    #[test]
    fn batch_size_parsing() {
        assert_eq!("all".parse::<BatchSize>(), Ok(BatchSize::All));
        assert_eq!("100".parse::<BatchSize>(), Ok(BatchSize::Count(100)));
        assert!("0".parse::<BatchSize>().is_err());
        assert!("x".parse::<BatchSize>().is_err());
        assert_eq!(serde_json::to_string(&BatchSize::All).unwrap(), "\"all\"");
        assert_eq!(serde_json::from_str::<BatchSize>("\"all\"").unwrap(), BatchSize::All);
        assert_eq!(serde_json::from_str::<BatchSize>("3").unwrap(), BatchSize::Count(3));
    }

    #[test]
    fn dataset_rejects_duplicate_ids_and_empty_edits() {
        let a = instance();
        assert!(Dataset::new("d", vec![a.clone(), a.clone()], AliasTable::new()).is_err());
        let mut no_edits = a;
        no_edits.edits.clear();
        assert!(matches!(
            Dataset::new("d", vec![no_edits], AliasTable::new()),
            Err(EvalError::Instance { index: 0, .. })
        ));
    }

    #[test]
    fn dataset_reports_instance_index() {
        let json = r#"{"name":"d","instances":[
          {"instance_id":"a","questions":["q"],"original_answer":"C","edited_answer":"D",
           "edits":[{"edit_id":"e","subject":"B","relation":"r","old_object":"C","new_object":"D"}],
           "original_path":[["B","r","C"]],"edited_path":[["B","r","D"]]},
          {"instance_id":"b","questions":["q"],"original_answer":"C","edited_answer":"D",
           "edits":[{"edit_id":"e","subject":"B","relation":"r","old_object":"C","new_object":"D"}],
           "original_path":[["B","r","C"]],"edited_path":[["B","r","D"],["D","r","E"]]}
        ]}"#;
        match Dataset::from_json(json) {
            Err(EvalError::Instance { index, message }) => {
                assert_eq!(index, 1);
                assert!(message.contains("edited_path"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parallel_map_keeps_order() {
        let items: Vec<usize> = (0..37).collect();
        assert_eq!(parallel_map(&items, 4, |x| x * 2), items.iter().map(|x| x * 2).collect::<Vec<_>>());
    }
}
