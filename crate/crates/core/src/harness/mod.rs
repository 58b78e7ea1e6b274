//! Desk-scale self-play loop: scripted agents, dedup, verification,
//! rewards, group advantages and the curriculum update, with a replayable
//! line-delimited log.

mod agents;

pub use agents::{
    canned_observation, wrong_answer, Candidate, Corruption, ScriptedQuestioner, ScriptedQuestionerConfig,
    ScriptedSolver, ScriptedSolverConfig, SolverProfile, OUT_OF_POOL_LABEL,
};

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::pipeline::{verify, ErrorCode, QuestionInput, Verdict};
use crate::question::{
    dedup, extract_entities, AliasTable, RegionOntology, StructuredQuestion, TemplateExtractor,
};
use crate::rewards::{score_questioner, score_solver, Judge, QuestionerReward, RuleJudge, SolverReward};
use crate::scene::{build_grounded_pools, generate_synthetic_scene, GeneratorSpec, GroundedPools, Scene, MIN_VISIBILITY};
use crate::scheduler::{SchedulerConfig, SchedulerState};
use crate::solvers::Env;
use crate::tasks::{feasible_tasks, ContextRef, GroundTruth, Modality, TaskType};
use crate::wire::{canonicalize, to_canonical_string};

/// Scheduler snapshots are persisted at this iteration interval.
pub const SNAPSHOT_INTERVAL: usize = 50;
/// Context draws attempted before giving up on finding a feasible task.
const CONTEXT_ATTEMPTS: usize = 64;

/// A scene with its precomputed pools.
#[derive(Debug, Clone)]
pub struct LoadedScene {
    pub scene: Scene,
    pub pools: GroundedPools,
}

impl LoadedScene {
    pub fn new(scene: Scene, v_min: f64) -> Self {
        let pools = build_grounded_pools(&scene, v_min);
        LoadedScene { scene, pools }
    }

    pub fn env<'a>(&'a self, ontology: &'a RegionOntology, aliases: &'a AliasTable) -> Env<'a> {
        Env {
            scene: &self.scene,
            pools: &self.pools,
            ontology,
            aliases,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessConfig {
    pub generator: GeneratorSpec,
    pub scene_count: usize,
    /// Scene i is generated with seed `scene_seed + i`.
    pub scene_seed: u64,
    pub v_min: f64,
    pub modalities: Vec<Modality>,
    pub questioner: ScriptedQuestionerConfig,
    pub solver: ScriptedSolverConfig,
    pub scheduler: SchedulerConfig,
    pub ontology: RegionOntology,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig {
            generator: GeneratorSpec::default(),
            scene_count: 4,
            scene_seed: 0,
            v_min: MIN_VISIBILITY,
            modalities: vec![Modality::Scene, Modality::SingleImage, Modality::ImagePair],
            questioner: ScriptedQuestionerConfig::default(),
            solver: ScriptedSolverConfig::default(),
            scheduler: SchedulerConfig::default(),
            ontology: RegionOntology::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("no feasible task found after {0} context draws")]
    NoFeasibleContext(usize),
    #[error("log io: {0}")]
    Io(#[from] std::io::Error),
    #[error("log record: {0}")]
    Json(#[from] serde_json::Error),
    #[error("replay: {0}")]
    Replay(String),
}

impl HarnessConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: HarnessConfig = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        self.generator.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.scheduler.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        if self.scene_count == 0 {
            return bad("scene_count must be at least 1".into());
        }
        if self.modalities.is_empty() {
            return bad("modalities must not be empty".into());
        }
        let q = &self.questioner;
        if q.candidates_per_context == 0 {
            return bad("candidates_per_context must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&q.invalid_injection_rate) {
            return bad("invalid_injection_rate must lie in [0, 1]".into());
        }
        let s = &self.solver;
        if s.rollouts == 0 {
            return bad("solver rollouts must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&s.explain_q) {
            return bad("explain_q must lie in [0, 1]".into());
        }
        for (name, p) in std::iter::once(("default".to_string(), &s.default_profile))
            .chain(s.per_task.iter().map(|(t, p)| (t.id().to_string(), p)))
        {
            if !(0.0..=1.0).contains(&p.q) || !(p.sigma >= 0.0 && p.sigma.is_finite()) {
                return bad(format!("solver profile {name} needs q in [0, 1] and sigma >= 0"));
            }
        }
        Ok(())
    }
}

/// Scenes, ontology and aliases shared by every iteration of a run.
pub struct EnvPool {
    pub scenes: Vec<LoadedScene>,
    pub ontology: RegionOntology,
    pub aliases: AliasTable,
}

impl EnvPool {
    pub fn from_config(cfg: &HarnessConfig) -> Result<Self, HarnessError> {
        let scenes = (0..cfg.scene_count as u64)
            .map(|i| {
                generate_synthetic_scene(&cfg.generator, cfg.scene_seed + i)
                    .map(|s| LoadedScene::new(s, cfg.v_min))
                    .map_err(|e| HarnessError::Config(e.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(EnvPool {
            scenes,
            ontology: cfg.ontology.clone(),
            aliases: AliasTable::default(),
        })
    }

    pub fn find(&self, scene_id: &str) -> Option<&LoadedScene> {
        self.scenes.iter().find(|s| s.scene.scene_id == scene_id)
    }

    pub fn env_for(&self, scene_id: &str) -> Option<Env<'_>> {
        self.find(scene_id).map(|s| s.env(&self.ontology, &self.aliases))
    }
}

/// Z-scores rewards with the sample standard deviation; all zeros when the
/// spread is degenerate.
pub fn group_advantages(rewards: &[f64]) -> Vec<f64> {
    let n = rewards.len();
    if n < 2 {
        return vec![0.0; n];
    }
    let mean = rewards.iter().sum::<f64>() / n as f64;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let std = var.sqrt();
    if std <= 1e-8 {
        return vec![0.0; n];
    }
    rewards.iter().map(|r| (r - mean) / std).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictSummary {
    pub valid: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code: Option<ErrorCode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<GroundTruth>,
}

impl From<&Verdict> for VerdictSummary {
    fn from(v: &Verdict) -> Self {
        VerdictSummary {
            valid: v.valid,
            code: v.code(),
            stage: v.failure.as_ref().map(|f| f.stage),
            ground_truth: v.ground_truth.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub output: String,
    pub signature: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corruption: Option<Corruption>,
    pub reward: QuestionerReward,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepresentativeRecord {
    pub index: usize,
    pub signature: String,
    pub weight: usize,
    pub verdict: VerdictSummary,
    pub responses: Vec<String>,
    pub solver_rewards: Vec<SolverReward>,
    pub solver_advantages: Vec<f64>,
    /// Mean accuracy fed to the scheduler; zero for retained-invalid.
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub context: ContextRef,
    pub task: TaskType,
    pub shares: BTreeMap<TaskType, f64>,
    pub candidates: Vec<CandidateRecord>,
    pub questioner_advantages: Vec<f64>,
    pub representatives: Vec<RepresentativeRecord>,
    pub scheduler_hash: String,
}

impl IterationLog {
    pub fn invalid_ratio(&self) -> f64 {
        let total: usize = self.representatives.iter().map(|r| r.weight).sum();
        let invalid: usize = self
            .representatives
            .iter()
            .filter(|r| !r.verdict.valid)
            .map(|r| r.weight)
            .sum();
        if total == 0 {
            0.0
        } else {
            invalid as f64 / total as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogRecord {
    Header {
        seed: u64,
        iterations: usize,
        config: HarnessConfig,
    },
    Iteration(IterationLog),
}

/// Mutable run state: scheduler statistics and the generator.
pub struct RunState {
    pub scheduler: SchedulerState,
    pub rng: ChaCha8Rng,
}

impl RunState {
    pub fn new(seed: u64) -> Self {
        RunState {
            scheduler: SchedulerState::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

fn sample_context(pool: &EnvPool, cfg: &HarnessConfig, rng: &mut ChaCha8Rng) -> Option<(ContextRef, BTreeSet<TaskType>)> {
    for _ in 0..CONTEXT_ATTEMPTS {
        let loaded = pool.scenes.choose(rng)?;
        let modality = *cfg.modalities.choose(rng)?;
        let id = loaded.scene.scene_id.clone();
        let frames: Vec<u32> = loaded.scene.frames().iter().map(|f| f.frame_id).collect();
        let context = match modality {
            Modality::Scene => ContextRef::scene(id),
            Modality::SingleImage => ContextRef::single(id, *frames.choose(rng)?),
            Modality::ImagePair => {
                let pick: Vec<u32> = frames.choose_multiple(rng, 2).copied().collect();
                if pick.len() < 2 {
                    continue;
                }
                ContextRef::pair(id, pick[0], pick[1])
            }
        };
        let Ok(feasible) = feasible_tasks(&loaded.scene, &loaded.pools, &context, &pool.ontology) else {
            continue;
        };
        if !feasible.is_empty() {
            return Some((context, feasible));
        }
    }
    None
}

fn hash_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn verify_text(question: &str, task: TaskType, context: &ContextRef, env: Env<'_>) -> Verdict {
    verify(
        &QuestionInput::Text(question.to_string()),
        task.id(),
        context,
        env,
        &TemplateExtractor,
    )
}

pub fn run_iteration(
    iteration: usize,
    state: &mut RunState,
    pool: &EnvPool,
    cfg: &HarnessConfig,
    judge: &dyn Judge,
) -> Result<IterationLog, HarnessError> {
    let (context, feasible) =
        sample_context(pool, cfg, &mut state.rng).ok_or(HarnessError::NoFeasibleContext(CONTEXT_ATTEMPTS))?;
    let env = pool.env_for(&context.scene_id).expect("context comes from the pool");
    let sched_cfg = &cfg.scheduler;
    let shares: BTreeMap<TaskType, f64> = state
        .scheduler
        .sampling_distribution(&feasible, sched_cfg)
        .map_err(|e| HarnessError::Config(e.to_string()))?
        .into_iter()
        .collect();
    let task = state
        .scheduler
        .sample_task(&feasible, sched_cfg, &mut state.rng)
        .map_err(|e| HarnessError::Config(e.to_string()))?;

    let questioner = ScriptedQuestioner { config: &cfg.questioner };
    let candidates = questioner.propose(task, &context, env, &mut state.rng);
    let structured: Vec<StructuredQuestion> = candidates
        .iter()
        .map(|c| {
            let params = extract_entities(&c.question, task, &TemplateExtractor);
            StructuredQuestion::new(task, params, context.clone())
        })
        .collect();
    let entries = dedup(&structured).map_err(|e| HarnessError::Replay(e.to_string()))?;

    let solver = ScriptedSolver { config: &cfg.solver };
    let mut verdicts: BTreeMap<String, Verdict> = BTreeMap::new();
    let mut representatives = Vec::with_capacity(entries.len());
    for entry in &entries {
        let digest = entry.signature.digest();
        let verdict = verify_text(&candidates[entry.index].question, task, &context, env);
        let responses: Vec<String> = (0..cfg.solver.rollouts)
            .map(|_| match (&verdict.ground_truth, verdict.code()) {
                (Some(gt), _) if verdict.valid => solver.answer(task, gt, &verdict.parsed, &mut state.rng),
                (_, code) => solver.explain(code.unwrap_or(ErrorCode::ExtractionFailed), &mut state.rng),
            })
            .collect();
        let solver_rewards: Vec<SolverReward> = responses.iter().map(|r| score_solver(r, &verdict, judge)).collect();
        let r_a: Vec<f64> = solver_rewards.iter().map(|r| r.r_a).collect();
        let accuracy = if verdict.valid {
            solver_rewards.iter().map(|r| r.f_acc.unwrap_or(0.0)).sum::<f64>() / solver_rewards.len() as f64
        } else {
            0.0
        };
        state
            .scheduler
            .update(task, accuracy, entry.weight as f64, !verdict.valid, sched_cfg)
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        representatives.push(RepresentativeRecord {
            index: entry.index,
            signature: digest.clone(),
            weight: entry.weight,
            verdict: VerdictSummary::from(&verdict),
            responses,
            solver_advantages: group_advantages(&r_a),
            solver_rewards,
            accuracy,
        });
        verdicts.insert(digest, verdict);
    }

    let signatures: Vec<String> = structured
        .iter()
        .map(|q| crate::question::semantic_signature(q).digest())
        .collect();
    let candidate_records: Vec<CandidateRecord> = candidates
        .into_iter()
        .zip(signatures)
        .map(|(c, sig)| {
            let reward = score_questioner(&c.output, &verdicts[&sig], judge);
            CandidateRecord {
                output: c.output,
                signature: sig,
                corruption: c.corruption,
                reward,
            }
        })
        .collect();
    let r_q: Vec<f64> = candidate_records.iter().map(|c| c.reward.r_q).collect();
    Ok(IterationLog {
        iteration,
        context,
        task,
        shares,
        questioner_advantages: group_advantages(&r_q),
        candidates: candidate_records,
        representatives,
        scheduler_hash: hash_hex(&state.scheduler.to_snapshot()),
    })
}

/// One point of the training-dynamics series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub iteration: usize,
    pub task: TaskType,
    pub shares: BTreeMap<TaskType, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    pub invalid_ratio: f64,
    pub mean_questioner_reward: f64,
    pub mean_solver_reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub iterations: usize,
    pub series: Vec<SeriesPoint>,
    /// Fraction of iterations that sampled each task.
    pub task_frequency: BTreeMap<TaskType, f64>,
    pub final_stats: SchedulerState,
    pub log_sha256: String,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn series_point(log: &IterationLog) -> SeriesPoint {
    let valid: Vec<&RepresentativeRecord> = log.representatives.iter().filter(|r| r.verdict.valid).collect();
    let accuracy = (!valid.is_empty()).then(|| {
        let w: f64 = valid.iter().map(|r| r.weight as f64).sum();
        valid.iter().map(|r| r.accuracy * r.weight as f64).sum::<f64>() / w
    });
    SeriesPoint {
        iteration: log.iteration,
        task: log.task,
        shares: log.shares.clone(),
        accuracy,
        invalid_ratio: log.invalid_ratio(),
        mean_questioner_reward: mean(log.candidates.iter().map(|c| c.reward.r_q)),
        mean_solver_reward: mean(
            log.representatives
                .iter()
                .flat_map(|r| r.solver_rewards.iter().map(|s| s.r_a)),
        ),
    }
}

/// Runs `iterations` rounds, writing a header and one canonical JSON line
/// per iteration to `log`. Snapshots go to `snapshot_dir` every
/// [`SNAPSHOT_INTERVAL`] iterations.
pub fn run_selfplay(
    cfg: &HarnessConfig,
    seed: u64,
    iterations: usize,
    log: &mut dyn Write,
    snapshot_dir: Option<&Path>,
) -> Result<RunSummary, HarnessError> {
    run_selfplay_with(cfg, seed, iterations, log, snapshot_dir, &RuleJudge)
}

pub fn run_selfplay_with(
    cfg: &HarnessConfig,
    seed: u64,
    iterations: usize,
    log: &mut dyn Write,
    snapshot_dir: Option<&Path>,
    judge: &dyn Judge,
) -> Result<RunSummary, HarnessError> {
    cfg.validate()?;
    let pool = EnvPool::from_config(cfg)?;
    let mut state = RunState::new(seed);
    let mut hasher = Sha256::new();
    let mut emit = |line: String, log: &mut dyn Write| -> Result<(), HarnessError> {
        hasher.update(line.as_bytes());
        hasher.update(b"\n");
        writeln!(log, "{line}")?;
        Ok(())
    };
    let header = LogRecord::Header {
        seed,
        iterations,
        config: cfg.clone(),
    };
    emit(to_canonical_string(&header)?, log)?;
    if let Some(dir) = snapshot_dir {
        std::fs::create_dir_all(dir)?;
    }
    let mut series = Vec::with_capacity(iterations);
    let mut counts: BTreeMap<TaskType, usize> = BTreeMap::new();
    for i in 0..iterations {
        let record = run_iteration(i, &mut state, &pool, cfg, judge)?;
        *counts.entry(record.task).or_default() += 1;
        series.push(series_point(&record));
        emit(to_canonical_string(&LogRecord::Iteration(record))?, log)?;
        if let Some(dir) = snapshot_dir {
            if (i + 1) % SNAPSHOT_INTERVAL == 0 {
                state
                    .scheduler
                    .save(&dir.join(format!("scheduler_{:06}.tsv", i + 1)))
                    .map_err(|e| HarnessError::Replay(e.to_string()))?;
            }
        }
    }
    log.flush()?;
    let task_frequency = counts
        .into_iter()
        .map(|(t, c)| (t, c as f64 / iterations.max(1) as f64))
        .collect();
    Ok(RunSummary {
        seed,
        iterations,
        series,
        task_frequency,
        final_stats: state.scheduler,
        log_sha256: hex::encode(hasher.finalize()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub iterations: usize,
    pub questioner_checked: usize,
    pub solver_checked: usize,
    pub mismatches: Vec<String>,
}

impl ReplayReport {
    pub fn ok(&self) -> bool {
        self.mismatches.is_empty()
    }
}

fn same_canonical<T: Serialize>(a: &T, b: &T) -> Result<bool, serde_json::Error> {
    Ok(canonicalize(&serde_json::to_value(a)?) == canonicalize(&serde_json::to_value(b)?))
}

/// Re-verifies every stored question and re-scores every stored output,
/// comparing against the stored rewards.
pub fn replay_log(reader: impl BufRead, judge: &dyn Judge) -> Result<ReplayReport, HarnessError> {
    let mut lines = reader.lines();
    let first = lines.next().ok_or_else(|| HarnessError::Replay("empty log".into()))??;
    let LogRecord::Header { config, .. } = serde_json::from_str(&first)? else {
        return Err(HarnessError::Replay("first record is not a header".into()));
    };
    let pool = EnvPool::from_config(&config)?;
    let mut report = ReplayReport {
        iterations: 0,
        questioner_checked: 0,
        solver_checked: 0,
        mismatches: Vec::new(),
    };
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let LogRecord::Iteration(rec) = serde_json::from_str(&line)? else {
            return Err(HarnessError::Replay("header after the first line".into()));
        };
        report.iterations += 1;
        let env = pool
            .env_for(&rec.context.scene_id)
            .ok_or_else(|| HarnessError::Replay(format!("unknown scene {}", rec.context.scene_id)))?;
        let mut verdicts: BTreeMap<&str, Verdict> = BTreeMap::new();
        for rep in &rec.representatives {
            let question = parse_question(&rec.candidates[rep.index].output);
            let verdict = verify_text(&question, rec.task, &rec.context, env);
            if !same_canonical(&VerdictSummary::from(&verdict), &rep.verdict)? {
                report
                    .mismatches
                    .push(format!("iteration {} rep {}: verdict differs", rec.iteration, rep.index));
            }
            for (k, (resp, stored)) in rep.responses.iter().zip(&rep.solver_rewards).enumerate() {
                report.solver_checked += 1;
                if !same_canonical(&score_solver(resp, &verdict, judge), stored)? {
                    report.mismatches.push(format!(
                        "iteration {} rep {} rollout {k}: solver reward differs",
                        rec.iteration, rep.index
                    ));
                }
            }
            verdicts.insert(&rep.signature, verdict);
        }
        for (k, c) in rec.candidates.iter().enumerate() {
            report.questioner_checked += 1;
            let Some(verdict) = verdicts.get(c.signature.as_str()) else {
                report
                    .mismatches
                    .push(format!("iteration {} candidate {k}: no representative", rec.iteration));
                continue;
            };
            if !same_canonical(&score_questioner(&c.output, verdict, judge), &c.reward)? {
                report
                    .mismatches
                    .push(format!("iteration {} candidate {k}: questioner reward differs", rec.iteration));
            }
        }
    }
    Ok(report)
}

fn parse_question(output: &str) -> String {
    crate::rewards::parse_questioner_output(output)
        .question
        .unwrap_or_default()
}
