//! Command implementations behind the `copb` binary.
//!
//! Every command writes its outputs atomically and returns a serialisable summary; the binary
//! prints the summary and maps errors to exit codes.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::dataset::{build_dataset, validate_dataset, Manifest};
use crate::gravity::mapper::CategoryMap;
use crate::gravity::{
    displacements, fit_decay_exponent, map_sequence, sample_persona, ExponentFit, GravityError,
};
use crate::io::{read_jsonl, write_atomic, write_jsonl, DayRecord, IoError};
use crate::llm::{ChatBackend, LlmError, Metered, TokenUsage};
use crate::metrics::{
    evaluate, export_heatmap_grid, Corpus, EvalConfig, Grouping, MetricError, MetricReport,
};
use crate::model::{haversine_km, IntentionSequence, Persona, Trajectory};
use crate::rng::stream;
use crate::workflow::{
    count_tags, DialogueEntry, DialogueLog, IntentionCountDistribution, LogTag, PersonaSession, Workflow,
    WorkflowError,
};

pub const PERSONAS_FILE: &str = "personas.jsonl";
pub const SEQUENCES_FILE: &str = "sequences.jsonl";
pub const DIALOGUES_FILE: &str = "dialogues.jsonl";
pub const FAILURES_FILE: &str = "failures.jsonl";
pub const USAGE_FILE: &str = "usage.json";
pub const TRAJECTORIES_FILE: &str = "trajectories.jsonl";
pub const MAP_SUMMARY_FILE: &str = "map_summary.json";
pub const REPORT_FILE: &str = "report.json";
pub const HEATMAP_FILE: &str = "heatmap.csv";
pub const FIT_FILE: &str = "gravity_fit.json";
pub const COUNTS_FILE: &str = "intention_counts.json";
pub const DATASET_FILE: &str = "dataset.jsonl";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("input: {0}")]
    Input(String),
    #[error("backend: {0}")]
    Backend(String),
    #[error("partial failure: {0}")]
    Partial(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Input(_) => 2,
            CliError::Backend(_) => 3,
            CliError::Partial(_) | CliError::Failed(_) => 1,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        match e {
            MetricError::Record { .. } | MetricError::Io(_) | MetricError::Grid(_) => {
                CliError::Input(e.to_string())
            }
            _ => CliError::Failed(e.to_string()),
        }
    }
}

impl From<GravityError> for CliError {
    fn from(e: GravityError) -> Self {
        match e {
            GravityError::Config(_) | GravityError::Ingest { .. } | GravityError::Io(_) => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Failed(e.to_string()),
        }
    }
}

/// Settings shared by all commands. Command-line flags have already been folded in.
#[derive(Debug, Clone)]
pub struct Run {
    pub config: Option<RunConfig>,
    pub seed: u64,
    pub jobs: usize,
    pub strict: bool,
    pub out: PathBuf,
}

impl Run {
    pub fn new(
        config: Option<RunConfig>,
        seed: Option<u64>,
        jobs: usize,
        strict: bool,
        out: Option<PathBuf>,
    ) -> Self {
        let seed = seed.or(config.as_ref().map(|c| c.seed)).unwrap_or(0);
        let out = out
            .or_else(|| config.as_ref().map(|c| c.output_dir.clone()))
            .unwrap_or_else(|| PathBuf::from("out"));
        Self { config, seed, jobs: jobs.max(1), strict, out }
    }

    pub fn config(&self) -> Result<&RunConfig, CliError> {
        self.config.as_ref().ok_or_else(|| CliError::Config("this command needs --config".into()))
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn pool(&self) -> Result<rayon::ThreadPool, CliError> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs)
            .build()
            .map_err(|e| CliError::Failed(format!("thread pool: {e}")))
    }

    fn ensure_out(&self) -> Result<(), CliError> {
        std::fs::create_dir_all(&self.out)
            .map_err(|e| CliError::Input(format!("{}: {e}", self.out.display())))
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Failed(e.to_string()))?;
    text.push('\n');
    Ok(write_atomic(path, text.as_bytes())?)
}

pub fn load_personas(path: &Path) -> Result<Vec<Persona>, CliError> {
    let personas: Vec<Persona> = read_jsonl(path)?;
    let mut seen = HashSet::new();
    for p in &personas {
        if !seen.insert(p.id.as_str()) {
            return Err(CliError::Input(format!("{}: duplicate persona id {:?}", path.display(), p.id)));
        }
    }
    Ok(personas)
}

fn load_sequences(path: &Path) -> Result<Vec<IntentionSequence>, CliError> {
    let records: Vec<DayRecord> = read_jsonl(path)?;
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            r.to_sequence().map_err(|e| CliError::Input(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

/// Samples `n` personas with ids `p1..pn` and writes them to the output directory.
pub fn cmd_personas(run: &Run, n: usize) -> Result<Vec<Persona>, CliError> {
    let cfg = run.config()?;
    let index = cfg.poi_index()?;
    let dist = cfg.profiles()?;
    dist.check_against(&index)?;
    let map = cfg.category_map()?;
    let mut rng = stream(run.seed, &["personas"]);
    let personas = (1..=n)
        .map(|i| sample_persona(format!("p{i}"), &dist, &index, &cfg.gravity, &map, &mut rng))
        .collect::<Result<Vec<_>, _>>()?;
    run.ensure_out()?;
    write_jsonl(&run.path(PERSONAS_FILE), &personas)?;
    Ok(personas)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FailureKind {
    Backend,
    Workflow,
}

/// A persona-day that could not be generated, with the exchanges that completed before it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub persona_id: String,
    pub day: u32,
    pub kind: FailureKind,
    pub error: String,
    pub log: DialogueLog,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateSummary {
    pub personas: usize,
    pub days: u32,
    pub generated: usize,
    /// Persona-days already present in the output and skipped.
    pub resumed: usize,
    pub failed: usize,
    /// Later days of a failed persona, and personas left unscheduled after a strict stop.
    pub not_attempted: usize,
    pub backend_calls: u64,
    pub usage: TokenUsage,
    pub logged_exchanges: BTreeMap<LogTag, usize>,
    pub tokens_per_sequence: Option<f64>,
    pub strict_stop: bool,
    pub failures: Vec<(String, u32, FailureKind)>,
}

impl GenerateSummary {
    /// Lenient runs with failures are partial (exit 1); a strict stop on a backend error is a
    /// backend failure (exit 3).
    pub fn outcome(&self) -> Result<(), CliError> {
        match self.failures.first() {
            None => Ok(()),
            Some((id, day, FailureKind::Backend)) if self.strict_stop => {
                Err(CliError::Backend(format!("persona {id} day {day}; see {FAILURES_FILE}")))
            }
            Some(_) => {
                Err(CliError::Partial(format!("{} persona-day(s) failed; see {FAILURES_FILE}", self.failed)))
            }
        }
    }
}

#[derive(Default)]
struct PersonaOutcome {
    sequences: Vec<IntentionSequence>,
    log: DialogueLog,
    failure: Option<FailureRecord>,
    resumed: usize,
    not_attempted: usize,
}

/// Output of earlier runs, indexed for resuming.
#[derive(Default)]
struct Existing {
    sequences: Vec<IntentionSequence>,
    log: DialogueLog,
    done: HashMap<(String, u32), usize>,
}

impl Existing {
    fn load(seq_path: &Path, log_path: &Path) -> Result<Self, CliError> {
        if !seq_path.exists() {
            return Ok(Self::default());
        }
        let sequences = load_sequences(seq_path)?;
        let log: DialogueLog = if log_path.exists() { read_jsonl(log_path)? } else { Vec::new() };
        let done =
            sequences.iter().enumerate().map(|(i, s)| ((s.persona_id.clone(), s.day_index), i)).collect();
        Ok(Self { sequences, log, done })
    }

    fn get(&self, persona: &str, day: u32) -> Option<&IntentionSequence> {
        self.done.get(&(persona.to_string(), day)).map(|&i| &self.sequences[i])
    }

    fn session(&self, persona: &Persona, day: u32) -> Result<PersonaSession, WorkflowError> {
        let entries: Vec<DialogueEntry> = self
            .log
            .iter()
            .filter(|e| e.persona_id == persona.id && e.day < day && self.get(&persona.id, e.day).is_some())
            .cloned()
            .collect();
        let previous = day.checked_sub(1).and_then(|d| self.get(&persona.id, d)).cloned();
        PersonaSession::resume(persona.clone(), &entries, previous)
    }
}

fn generate_persona(
    wf: &Workflow<'_>,
    persona: &Persona,
    days: u32,
    seed: u64,
    existing: &Existing,
) -> PersonaOutcome {
    let mut out = PersonaOutcome::default();
    let mut session: Option<PersonaSession> = None;
    for day in 0..days {
        if existing.get(&persona.id, day).is_some() {
            out.resumed += 1;
            session = None;
            continue;
        }
        let s = match session.as_mut() {
            Some(s) => s,
            None => match existing.session(persona, day) {
                Ok(s) => session.insert(s),
                Err(e) => {
                    out.failure = Some(FailureRecord {
                        persona_id: persona.id.clone(),
                        day,
                        kind: FailureKind::Workflow,
                        error: format!("cannot resume: {e}"),
                        log: Vec::new(),
                    });
                    out.not_attempted = (days - day - 1) as usize;
                    break;
                }
            },
        };
        let mut rng = stream(seed, &["generate", &persona.id, &day.to_string()]);
        match wf.generate_day(s, day, &mut rng) {
            Ok(d) => {
                out.sequences.push(d.sequence);
                out.log.extend(d.log);
            }
            Err(f) => {
                let kind = if matches!(f.error, WorkflowError::Llm(_)) {
                    FailureKind::Backend
                } else {
                    FailureKind::Workflow
                };
                log::warn!("persona {} day {day}: {}", persona.id, f.error);
                out.failure = Some(FailureRecord {
                    persona_id: persona.id.clone(),
                    day,
                    kind,
                    error: f.error.to_string(),
                    log: f.log,
                });
                out.not_attempted = (days - day - 1) as usize;
                break;
            }
        }
    }
    out
}

/// Sorts records by persona order in the persona file, then day; entries of one persona-day
/// keep their original order.
fn persona_order<'a>(personas: &'a [Persona]) -> impl Fn(&str) -> (usize, String) + 'a {
    let pos: HashMap<&str, usize> = personas.iter().enumerate().map(|(i, p)| (p.id.as_str(), i)).collect();
    move |id: &str| (pos.get(id).copied().unwrap_or(usize::MAX), id.to_string())
}

/// Generates `days` days for every persona with the given backend.
///
/// Work proceeds in chunks of `jobs` personas; after each chunk the sequence and dialogue files
/// are rewritten, so an interrupted run resumes from the last finished chunk. Completed
/// persona-days are skipped, and a persona's session is rebuilt from its logged exchanges.
pub fn generate_with(
    run: &Run,
    personas: &[Persona],
    days: u32,
    backend: &dyn ChatBackend,
) -> Result<GenerateSummary, CliError> {
    let cfg = run.config()?;
    let templates = cfg.templates()?;
    let bank = cfg.fewshot()?;
    let caps = cfg.caps()?;
    let metered = Metered::new(backend);
    let wf = Workflow::new(&templates, &bank, cfg.ablation, &caps, &metered, cfg.backend.params())
        .map_err(|e| CliError::Config(e.to_string()))?
        .with_max_retries(cfg.max_retries);
    run.ensure_out()?;
    let (seq_path, log_path) = (run.path(SEQUENCES_FILE), run.path(DIALOGUES_FILE));
    let existing = Existing::load(&seq_path, &log_path)?;
    let mut sequences = existing.sequences.clone();
    let mut log = existing.log.clone();
    let order = persona_order(personas);
    let pool = run.pool()?;

    let mut summary = GenerateSummary {
        personas: personas.len(),
        days,
        generated: 0,
        resumed: 0,
        failed: 0,
        not_attempted: 0,
        backend_calls: 0,
        usage: TokenUsage::default(),
        logged_exchanges: BTreeMap::new(),
        tokens_per_sequence: None,
        strict_stop: false,
        failures: Vec::new(),
    };
    let mut failures = Vec::new();
    let mut new_log = DialogueLog::new();
    for (k, chunk) in personas.chunks(run.jobs).enumerate() {
        let outcomes: Vec<PersonaOutcome> = pool.install(|| {
            chunk.par_iter().map(|p| generate_persona(&wf, p, days, run.seed, &existing)).collect()
        });
        for o in outcomes {
            summary.generated += o.sequences.len();
            summary.resumed += o.resumed;
            summary.not_attempted += o.not_attempted;
            sequences.extend(o.sequences);
            new_log.extend(o.log.iter().cloned());
            log.extend(o.log);
            if let Some(f) = o.failure {
                summary.failures.push((f.persona_id.clone(), f.day, f.kind.clone()));
                failures.push(f);
            }
        }
        sequences.sort_by_cached_key(|s| (order(&s.persona_id), s.day_index));
        log.sort_by_cached_key(|e| (order(&e.persona_id), e.day));
        let records: Vec<DayRecord> = sequences.iter().map(DayRecord::from).collect();
        write_jsonl(&seq_path, &records)?;
        write_jsonl(&log_path, &log)?;
        if run.strict && !failures.is_empty() {
            summary.strict_stop = true;
            let left: usize = personas.iter().skip((k + 1) * run.jobs).count();
            summary.not_attempted += left * days as usize;
            break;
        }
    }
    summary.failed = failures.len();
    summary.backend_calls = metered.calls();
    summary.usage = metered.usage();
    summary.logged_exchanges = count_tags(&new_log);
    if summary.generated > 0 {
        summary.tokens_per_sequence = Some(summary.usage.total() as f64 / summary.generated as f64);
    }
    write_jsonl(&run.path(FAILURES_FILE), &failures)?;
    write_json(&run.path(USAGE_FILE), &summary)?;
    Ok(summary)
}

/// `generate` with the configured backend.
pub fn cmd_generate(run: &Run, personas_path: &Path, days: Option<u32>) -> Result<GenerateSummary, CliError> {
    let cfg = run.config()?;
    let personas = load_personas(personas_path)?;
    let backend = cfg.build_backend()?;
    let days = days.unwrap_or(cfg.days);
    if days == 0 {
        return Err(CliError::Config("days must be at least 1".into()));
    }
    generate_with(run, &personas, days, backend.as_ref())
}

/// A trajectory tagged with its grounding replica number.
pub type ReplicaTrajectory = (usize, Trajectory);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapFailure {
    pub persona_id: String,
    pub day: u32,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSummary {
    pub sequences: usize,
    pub replicas: usize,
    pub trajectories: usize,
    /// Grounding never calls a language model; recorded so reports can assert it.
    pub backend_calls: u64,
    pub backend_tokens: u64,
    /// Longest hop into a sampled (non-anchor) destination.
    pub max_sampled_hop_km: f64,
    pub hops_beyond_radius: usize,
    pub failures: Vec<MapFailure>,
}

/// Distances from the previous location to each sampled destination; the day starts at home.
pub fn sampled_hops(persona: &Persona, traj: &Trajectory) -> Vec<f64> {
    let mut prev = persona.home;
    let mut hops = Vec::new();
    for p in &traj.points {
        if CategoryMap::anchor(p.intention).is_none() {
            hops.push(haversine_km(prev, p.location));
        }
        prev = p.location;
    }
    hops
}

/// Grounds every sequence `replicas` times. Returns `(sequence index, replica, trajectory)`
/// in input order, and the sequences that could not be grounded.
pub fn map_all(
    run: &Run,
    personas: &[Persona],
    sequences: &[IntentionSequence],
    replicas: usize,
) -> Result<(Vec<ReplicaTrajectory>, Vec<MapFailure>), CliError> {
    let cfg = run.config()?;
    let index = cfg.poi_index()?;
    let map = cfg.category_map()?;
    let by_id: HashMap<&str, &Persona> = personas.iter().map(|p| (p.id.as_str(), p)).collect();
    let results: Vec<Result<Vec<Trajectory>, MapFailure>> = run.pool()?.install(|| {
        sequences
            .par_iter()
            .map(|s| {
                let fail =
                    |error: String| MapFailure { persona_id: s.persona_id.clone(), day: s.day_index, error };
                let p = by_id
                    .get(s.persona_id.as_str())
                    .ok_or_else(|| fail("persona not in persona file".into()))?;
                map_sequence(p, s, &index, &cfg.gravity, &map, run.seed, replicas)
                    .map_err(|e| fail(e.to_string()))
            })
            .collect()
    });
    let mut out = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(ts) => out.extend(ts.into_iter().enumerate()),
            Err(f) => {
                log::warn!("persona {} day {}: {}", f.persona_id, f.day, f.error);
                failures.push(f);
            }
        }
    }
    Ok((out, failures))
}

/// Grounds sequences into trajectories. Makes no backend calls.
pub fn cmd_map(
    run: &Run,
    personas_path: &Path,
    sequences_path: &Path,
    replicas: Option<usize>,
) -> Result<MapSummary, CliError> {
    let cfg = run.config()?;
    let personas = load_personas(personas_path)?;
    let sequences = load_sequences(sequences_path)?;
    let replicas = replicas.unwrap_or(cfg.gravity.trajectories_per_sequence);
    if replicas == 0 {
        return Err(CliError::Config("replicas must be at least 1".into()));
    }
    let (trajs, failures) = map_all(run, &personas, &sequences, replicas)?;
    let by_id: HashMap<&str, &Persona> = personas.iter().map(|p| (p.id.as_str(), p)).collect();
    let hops: Vec<f64> =
        trajs.iter().flat_map(|(_, t)| sampled_hops(by_id[t.persona_id.as_str()], t)).collect();
    let records: Vec<DayRecord> =
        trajs.iter().map(|(r, t)| DayRecord { replica: Some(*r as u32), ..DayRecord::from(t) }).collect();
    run.ensure_out()?;
    write_jsonl(&run.path(TRAJECTORIES_FILE), &records)?;
    let summary = MapSummary {
        sequences: sequences.len(),
        replicas,
        trajectories: records.len(),
        backend_calls: 0,
        backend_tokens: 0,
        max_sampled_hop_km: hops.iter().copied().fold(0.0, f64::max),
        hops_beyond_radius: hops.iter().filter(|&&h| h > cfg.gravity.max_radius_km).count(),
        failures,
    };
    write_json(&run.path(MAP_SUMMARY_FILE), &summary)?;
    Ok(summary)
}

impl MapSummary {
    pub fn outcome(&self, strict: bool) -> Result<(), CliError> {
        match self.failures.first() {
            None => Ok(()),
            Some(f) if strict => {
                Err(CliError::Failed(format!("persona {} day {}: {}", f.persona_id, f.day, f.error)))
            }
            Some(_) => {
                Err(CliError::Partial(format!("{} sequence(s) could not be grounded", self.failures.len())))
            }
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct EvaluateInputs {
    pub generated: PathBuf,
    pub reference: PathBuf,
    /// Persona files enabling profile-attribute grouping for itdErr.
    pub generated_personas: Option<PathBuf>,
    pub reference_personas: Option<PathBuf>,
    pub cell_size_km: Option<f64>,
}

fn profile_keys(path: &Path) -> Result<HashMap<String, String>, CliError> {
    Ok(load_personas(path)?
        .into_iter()
        .map(|p| {
            let key = p.attributes.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";");
            (p.id, key)
        })
        .collect())
}

/// Compares two corpora; writes the report and, when a grid is available, the heat-map CSV.
pub fn cmd_evaluate(run: &Run, inputs: &EvaluateInputs) -> Result<MetricReport, CliError> {
    let gen = Corpus::load(&inputs.generated)?;
    let reference = Corpus::load(&inputs.reference)?;
    let grouping = match (&inputs.generated_personas, &inputs.reference_personas) {
        (Some(g), Some(r)) => {
            Grouping::Attributes { generated: profile_keys(g)?, reference: profile_keys(r)? }
        }
        (None, None) => Grouping::PersonaId,
        _ => return Err(CliError::Config("attribute grouping needs both persona files".into())),
    };
    let cfg = EvalConfig {
        grid: run.config.as_ref().and_then(|c| c.grid),
        cell_size_km: inputs.cell_size_km.unwrap_or(1.0),
        grouping,
    };
    let report = evaluate(&gen, &reference, &cfg)?;
    run.ensure_out()?;
    write_json(&run.path(REPORT_FILE), &report)?;
    if let Some(grid) = &report.config.grid {
        export_heatmap_grid(&gen.trajectories, &reference.trajectories, grid, &run.path(HEATMAP_FILE))?;
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub fit: ExponentFit,
    pub range_km: [f64; 2],
    pub trajectories: usize,
    pub intention_counts: IntentionCountDistribution,
}

/// Fits the decay exponent to consecutive-point displacements and tabulates intentions per
/// day. The count histogram is also written on its own so a config can point at it.
pub fn cmd_fit_gravity(
    run: &Run,
    trajectories: &Path,
    min_km: Option<f64>,
    max_km: Option<f64>,
) -> Result<FitReport, CliError> {
    let corpus = Corpus::load(trajectories)?;
    let params = run.config.as_ref().map(|c| c.gravity.clone()).unwrap_or_default();
    let min_km = min_km.unwrap_or(params.min_distance_km);
    let max_km = max_km.unwrap_or(params.max_radius_km);
    let fit = fit_decay_exponent(&displacements(&corpus.trajectories), min_km, max_km)?;
    let intention_counts =
        IntentionCountDistribution::from_counts(corpus.sequences.iter().map(|s| s.events.len()))
            .map_err(|e| CliError::Failed(e.to_string()))?;
    let report = FitReport {
        fit,
        range_km: [min_km, max_km],
        trajectories: corpus.trajectories.len(),
        intention_counts,
    };
    run.ensure_out()?;
    write_json(&run.path(FIT_FILE), &report)?;
    write_json(&run.path(COUNTS_FILE), &report.intention_counts)?;
    Ok(report)
}

/// Builds the fine-tuning set from dialogue logs, then validates what was written.
pub fn cmd_build_dataset(
    run: &Run,
    logs: &[PathBuf],
    per_type: usize,
    output: Option<&Path>,
) -> Result<Manifest, CliError> {
    for l in logs {
        if !l.exists() {
            return Err(CliError::Input(format!("{}: dialogue log not found", l.display())));
        }
    }
    run.ensure_out()?;
    let out = output.map(Path::to_path_buf).unwrap_or_else(|| run.path(DATASET_FILE));
    let manifest = build_dataset(logs, &out, per_type, run.seed).map_err(|e| match e {
        crate::dataset::DatasetError::Io(e) => CliError::Input(e.to_string()),
        e => CliError::Failed(e.to_string()),
    })?;
    check_dataset(&out)?;
    Ok(manifest)
}

pub fn check_dataset(path: &Path) -> Result<(), CliError> {
    validate_dataset(path).map_err(|v| {
        let lines: Vec<String> =
            v.iter().take(10).map(|x| format!("line {}: {}", x.line, x.message)).collect();
        CliError::Failed(format!("{} violation(s) in {}: {}", v.len(), path.display(), lines.join("; ")))
    })
}

impl From<LlmError> for CliError {
    fn from(e: LlmError) -> Self {
        match e {
            LlmError::Config(m) => CliError::Config(m),
            e => CliError::Backend(e.to_string()),
        }
    }
}
