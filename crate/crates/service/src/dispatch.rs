//! Request dispatch over shared scenes and per-session schedulers.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use spatial_env::harness::LoadedScene;
use spatial_env::pipeline::{verify_in, QuestionInput};
use spatial_env::protocol::{
    Call, ErrorBody, ErrorCode, FeasibleResult, PingResult, Request, Response, SampleTaskPayload, SampleTaskResult,
    SceneInfo, SolveResult, UpdateStatsPayload, UpdateStatsResult, PROTOCOL_VERSION,
};
use spatial_env::question::{AliasTable, RegionOntology, TemplateExtractor};
use spatial_env::rewards::{score_questioner, score_solver, Judge, RuleJudge};
use spatial_env::scene::{generate_synthetic_scene, load_scene, MIN_VISIBILITY};
use spatial_env::scheduler::{SchedulerConfig, SchedulerState};
use spatial_env::tasks::{feasible_tasks, ContextRef, TaskType};

pub const V_MIN_ENV: &str = "SPATIAL_ENV_V_MIN";

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub v_min: f64,
    pub scheduler: SchedulerConfig,
    /// Base seed for per-session task sampling.
    pub seed: u64,
    /// When set, session statistics are read from and written to
    /// `<dir>/<session>.tsv`.
    pub sessions_dir: Option<PathBuf>,
    pub ontology: RegionOntology,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            v_min: MIN_VISIBILITY,
            scheduler: SchedulerConfig::default(),
            seed: 0,
            sessions_dir: None,
            ontology: RegionOntology::default(),
        }
    }
}

impl ServiceConfig {
    /// Defaults with `v_min` taken from the environment when present.
    pub fn from_env() -> Result<Self, String> {
        let mut cfg = ServiceConfig::default();
        if let Ok(raw) = std::env::var(V_MIN_ENV) {
            let v: f64 = raw.trim().parse().map_err(|_| format!("{V_MIN_ENV}={raw} is not a number"))?;
            cfg.v_min = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.v_min > 0.0 && self.v_min <= 1.0) {
            return Err(format!("v_min {} must lie in (0, 1]", self.v_min));
        }
        self.scheduler.validate().map_err(|e| e.to_string())
    }
}

struct Session {
    state: SchedulerState,
    rng: ChaCha8Rng,
}

pub struct Service {
    config: ServiceConfig,
    aliases: AliasTable,
    judge: Box<dyn Judge>,
    scenes: RwLock<BTreeMap<String, Arc<LoadedScene>>>,
    sessions: Mutex<BTreeMap<String, Arc<Mutex<Session>>>>,
}

type Outcome = Result<Value, ErrorBody>;

fn to_value<T: Serialize>(v: &T) -> Outcome {
    serde_json::to_value(v).map_err(|e| ErrorBody::new(ErrorCode::Internal, e.to_string()))
}

fn session_name_ok(name: &str) -> bool {
    !name.is_empty()
        && name.len() <= 128
        && name.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
        && !name.starts_with('.')
}

impl Service {
    pub fn new(config: ServiceConfig) -> Self {
        Self::with_judge(config, Box::new(RuleJudge))
    }

    pub fn with_judge(config: ServiceConfig, judge: Box<dyn Judge>) -> Self {
        Service {
            config,
            aliases: AliasTable::default(),
            judge,
            scenes: RwLock::new(BTreeMap::new()),
            sessions: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    /// Registers an already built scene, replacing any scene with its id.
    pub fn insert_scene(&self, loaded: LoadedScene) -> SceneInfo {
        let info = SceneInfo::of(&loaded.scene);
        self.scenes.write().insert(info.scene_id.clone(), Arc::new(loaded));
        info
    }

    pub fn scene_ids(&self) -> Vec<String> {
        self.scenes.read().keys().cloned().collect()
    }

    fn scene(&self, id: &str) -> Option<Arc<LoadedScene>> {
        self.scenes.read().get(id).cloned()
    }

    fn require_scene(&self, id: &str) -> Result<Arc<LoadedScene>, ErrorBody> {
        self.scene(id)
            .ok_or_else(|| ErrorBody::new(ErrorCode::UnknownScene, format!("scene '{id}' is not loaded")))
    }

    /// Decodes one input line and answers it. Never panics on bad input:
    /// undecodable lines get an error response with an empty id.
    pub fn handle_line(&self, line: &str) -> Response {
        match serde_json::from_str::<Request>(line) {
            Ok(req) => self.handle(&req),
            Err(e) => Response::failure("", ErrorBody::new(ErrorCode::BadRequest, format!("malformed request: {e}"))),
        }
    }

    pub fn handle(&self, req: &Request) -> Response {
        let outcome = req.decode().and_then(|call| self.dispatch(call));
        match outcome {
            Ok(v) => Response::success(req.id.clone(), v),
            Err(e) => Response::failure(req.id.clone(), e),
        }
    }

    pub fn dispatch(&self, call: Call) -> Outcome {
        match call {
            Call::Ping => to_value(&PingResult {
                engine: "spatial-env".into(),
                version: env!("CARGO_PKG_VERSION").into(),
                protocol: PROTOCOL_VERSION,
            }),
            Call::LoadScene(p) => {
                let scene = load_scene(&p.path).map_err(|e| ErrorBody::new(ErrorCode::Io, e.to_string()))?;
                to_value(&self.insert_scene(LoadedScene::new(scene, self.config.v_min)))
            }
            Call::GenScene(p) => {
                let scene = generate_synthetic_scene(&p.spec, p.seed)
                    .map_err(|e| ErrorBody::new(ErrorCode::InvalidPayload, e.to_string()))?;
                to_value(&self.insert_scene(LoadedScene::new(scene, self.config.v_min)))
            }
            Call::Verify(p) => {
                let scene = self.scene(&p.context.scene_id);
                let env = scene.as_deref().map(|s| s.env(&self.config.ontology, &self.aliases));
                to_value(&verify_in(&p.question, &p.task, &p.context, env, &TemplateExtractor))
            }
            Call::Solve(p) => {
                let scene = self.require_scene(&p.context.scene_id)?;
                let env = scene.env(&self.config.ontology, &self.aliases);
                let v = verify_in(
                    &QuestionInput::Structured(p.params),
                    &p.task,
                    &p.context,
                    Some(env),
                    &TemplateExtractor,
                );
                match (v.ground_truth, v.failure) {
                    (Some(ground_truth), _) => to_value(&SolveResult {
                        ground_truth,
                        intermediates: v.intermediates,
                    }),
                    (None, Some(f)) => Err(ErrorBody::new(ErrorCode::InvalidQuestion, format!("{}: {}", f.code, f.reason))),
                    (None, None) => Err(ErrorBody::new(ErrorCode::Internal, "valid verdict without ground truth")),
                }
            }
            Call::ScoreQuestioner(p) => to_value(&score_questioner(&p.output, &p.verdict, self.judge.as_ref())),
            Call::ScoreSolver(p) => to_value(&score_solver(&p.response, &p.verdict, self.judge.as_ref())),
            Call::Feasible(p) => to_value(&FeasibleResult {
                tasks: self.feasible(&p.context)?,
            }),
            Call::SampleTask(p) => self.sample_task(p),
            Call::UpdateStats(p) => self.update_stats(p),
        }
    }

    fn feasible(&self, context: &ContextRef) -> Result<BTreeSet<TaskType>, ErrorBody> {
        let scene = self.require_scene(&context.scene_id)?;
        feasible_tasks(&scene.scene, &scene.pools, context, &self.config.ontology)
            .map_err(|e| ErrorBody::new(ErrorCode::InvalidPayload, e.to_string()))
    }

    fn session_path(&self, name: &str) -> Option<PathBuf> {
        self.config.sessions_dir.as_ref().map(|d| d.join(format!("{name}.tsv")))
    }

    fn session(&self, name: &str) -> Result<Arc<Mutex<Session>>, ErrorBody> {
        if !session_name_ok(name) {
            return Err(ErrorBody::new(
                ErrorCode::InvalidPayload,
                format!("session name '{name}' must be 1-128 characters of [A-Za-z0-9_.-]"),
            ));
        }
        let mut sessions = self.sessions.lock();
        if let Some(s) = sessions.get(name) {
            return Ok(s.clone());
        }
        let state = match self.session_path(name) {
            Some(path) if path.exists() => {
                SchedulerState::load(&path).map_err(|e| ErrorBody::new(ErrorCode::Io, e.to_string()))?
            }
            _ => SchedulerState::new(),
        };
        let session = Arc::new(Mutex::new(Session {
            state,
            rng: ChaCha8Rng::seed_from_u64(session_seed(self.config.seed, name)),
        }));
        sessions.insert(name.to_string(), session.clone());
        Ok(session)
    }

    fn sample_task(&self, p: SampleTaskPayload) -> Outcome {
        let feasible = match (p.feasible, &p.context) {
            (Some(set), _) => set,
            (None, Some(ctx)) => self.feasible(ctx)?,
            (None, None) => {
                return Err(ErrorBody::new(ErrorCode::InvalidPayload, "sample_task needs 'feasible' or 'context'"))
            }
        };
        let session = self.session(&p.session)?;
        let mut s = session.lock();
        let cfg = &self.config.scheduler;
        let scheduler_err = |e: spatial_env::scheduler::SchedulerError| ErrorBody::new(ErrorCode::Scheduler, e.to_string());
        let distribution = s.state.sampling_distribution(&feasible, cfg).map_err(scheduler_err)?;
        let Session { state, rng } = &mut *s;
        let task = state.sample_task(&feasible, cfg, rng).map_err(scheduler_err)?;
        to_value(&SampleTaskResult { task, distribution })
    }

    fn update_stats(&self, p: UpdateStatsPayload) -> Outcome {
        let session = self.session(&p.session)?;
        let mut s = session.lock();
        let cfg = &self.config.scheduler;
        s.state
            .update(p.task, p.accuracy, p.weight, p.retained_invalid, cfg)
            .map_err(|e| ErrorBody::new(ErrorCode::Scheduler, e.to_string()))?;
        if let Some(path) = self.session_path(&p.session) {
            save_atomically(&s.state, &path)?;
        }
        to_value(&UpdateStatsResult {
            task: p.task,
            stats: s.state.get(p.task),
            smoothed_accuracy: s.state.smoothed_accuracy(p.task, cfg),
        })
    }

    /// Current statistics of a session, if it has been used.
    pub fn session_state(&self, name: &str) -> Option<SchedulerState> {
        self.sessions.lock().get(name).map(|s| s.lock().state.clone())
    }
}

fn save_atomically(state: &SchedulerState, path: &Path) -> Result<(), ErrorBody> {
    let tmp = path.with_extension("tsv.tmp");
    let io = |e: String| ErrorBody::new(ErrorCode::Io, e);
    state.save(&tmp).map_err(|e| io(e.to_string()))?;
    std::fs::rename(&tmp, path).map_err(|e| io(e.to_string()))
}

/// Sampling seed of a session: the base seed mixed with a hash of its name.
pub fn session_seed(base: u64, name: &str) -> u64 {
    let digest = Sha256::digest(name.as_bytes());
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    base ^ u64::from_le_bytes(bytes)
}
