//! Scripted Questioner and Solver: parameterized oracles standing in for
//! the two policy roles.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{Direction, DirectionSet};
use crate::pipeline::{verify, ErrorCode, QuestionInput};
use crate::question::{
    param_list, param_text, render_question, sample_params, text, Params, PoolView, TemplateExtractor,
};
use crate::rewards::{canonical_phrase, render_answer};
use crate::solvers::{solve, Env};
use crate::tasks::{ContextRef, Elevation, GroundTruth, MotionSet, Role, RoleKind, Ternary, TaskType, Visibility};

/// Label no synthetic scene or vocabulary contains.
pub const OUT_OF_POOL_LABEL: &str = "spaceship";
/// Attempts at drawing parameters whose premise is non-degenerate.
const SAMPLE_ATTEMPTS: usize = 16;
const MISSING_SENTINEL: &str = "zzmissingzz";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Corruption {
    OutOfPool,
    RoleDuplication,
    SelfInCandidates,
    MissingRole,
}

impl Corruption {
    pub const ALL: [Corruption; 4] = [
        Corruption::OutOfPool,
        Corruption::RoleDuplication,
        Corruption::SelfInCandidates,
        Corruption::MissingRole,
    ];

    pub fn applies_to(self, task: TaskType) -> bool {
        let roles = task.schema().roles;
        let labels = roles
            .iter()
            .filter(|r| matches!(r.kind, RoleKind::Label(_) | RoleKind::LabelList { .. }))
            .count();
        let images = roles.iter().filter(|r| matches!(r.kind, RoleKind::Image)).count();
        match self {
            Corruption::OutOfPool => labels > 0,
            Corruption::RoleDuplication => labels >= 2 || images >= 2,
            Corruption::SelfInCandidates => task == TaskType::RelativeDistance,
            Corruption::MissingRole => labels > 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScriptedQuestionerConfig {
    pub candidates_per_context: usize,
    pub invalid_injection_rate: f64,
    pub corruptions: Vec<Corruption>,
}

impl Default for ScriptedQuestionerConfig {
    fn default() -> Self {
        ScriptedQuestionerConfig {
            candidates_per_context: 4,
            invalid_injection_rate: 0.0,
            corruptions: Corruption::ALL.to_vec(),
        }
    }
}

/// One Questioner rollout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    /// Raw tagged output.
    pub output: String,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corruption: Option<Corruption>,
}

pub fn canned_observation(task: TaskType) -> String {
    format!(
        "The room holds several pieces of furniture placed near the walls, with some objects on the left and \
         others on the right, and the view is relevant to a {} question.",
        task.display_name().to_lowercase()
    )
}

pub struct ScriptedQuestioner<'c> {
    pub config: &'c ScriptedQuestionerConfig,
}

impl ScriptedQuestioner<'_> {
    pub fn propose<R: Rng + ?Sized>(
        &self,
        task: TaskType,
        context: &ContextRef,
        env: Env<'_>,
        rng: &mut R,
    ) -> Vec<Candidate> {
        let menu: Vec<Corruption> = self
            .config
            .corruptions
            .iter()
            .copied()
            .filter(|c| c.applies_to(task))
            .collect();
        (0..self.config.candidates_per_context)
            .map(|_| {
                let params = sample_clean(task, context, env, rng);
                let inject = rng.gen::<f64>() < self.config.invalid_injection_rate;
                let (question, corruption) = match params {
                    Some(p) if inject && !menu.is_empty() => inject_invalid(task, p, &menu, context, env, rng),
                    Some(p) => (render_question(task, &p).unwrap_or_default(), None),
                    None => (String::new(), None),
                };
                let output = format!(
                    "<observation>{}</observation><question>{}</question>",
                    canned_observation(task),
                    question
                );
                Candidate {
                    output,
                    question,
                    corruption,
                }
            })
            .collect()
    }
}

/// Applies menu corruptions in random order until one makes the question
/// fail verification; the unique-candidate fallback can repair some of them.
fn inject_invalid<R: Rng + ?Sized>(
    task: TaskType,
    params: Params,
    menu: &[Corruption],
    context: &ContextRef,
    env: Env<'_>,
    rng: &mut R,
) -> (String, Option<Corruption>) {
    let mut order = menu.to_vec();
    order.shuffle(rng);
    let mut last = (String::new(), None);
    for c in order {
        let question = corrupt(task, params.clone(), c, rng);
        let verdict = verify(&QuestionInput::Text(question.clone()), task.id(), context, env, &TemplateExtractor);
        last = (question, Some(c));
        if !verdict.valid {
            break;
        }
    }
    last
}

fn sample_clean<R: Rng + ?Sized>(task: TaskType, context: &ContextRef, env: Env<'_>, rng: &mut R) -> Option<Params> {
    let view = PoolView::new(env.scene, env.pools, context).with_aliases(env.aliases);
    let mut last = None;
    for _ in 0..SAMPLE_ATTEMPTS {
        let params = sample_params(task, &view, env.ontology, rng)?;
        if solve(task, &params, context, env).is_ok() {
            return Some(params);
        }
        last = Some(params);
    }
    last
}

fn label_roles(task: TaskType) -> Vec<Role> {
    task.schema()
        .roles
        .iter()
        .filter(|r| matches!(r.kind, RoleKind::Label(_)))
        .map(|r| r.role)
        .collect()
}

fn image_roles(task: TaskType) -> Vec<Role> {
    task.schema()
        .roles
        .iter()
        .filter(|r| matches!(r.kind, RoleKind::Image))
        .map(|r| r.role)
        .collect()
}

fn corrupt<R: Rng + ?Sized>(task: TaskType, mut p: Params, c: Corruption, rng: &mut R) -> String {
    let labels = label_roles(task);
    let render = |p: &Params| render_question(task, p).unwrap_or_default();
    match c {
        Corruption::OutOfPool => {
            match labels.choose(rng) {
                Some(role) => {
                    p.insert(*role, text(OUT_OF_POOL_LABEL));
                }
                None => replace_list_item(&mut p, 0, OUT_OF_POOL_LABEL),
            }
            render(&p)
        }
        Corruption::RoleDuplication => {
            if labels.len() >= 2 {
                let first = p[&labels[0]].clone();
                p.insert(labels[1], first);
            } else if let Some(items) = param_list(&p, Role::Candidates).filter(|l| l.len() >= 2) {
                let dup = items[0].clone();
                replace_list_item(&mut p, 1, &dup);
            } else {
                let images = image_roles(task);
                if images.len() >= 2 {
                    let first = p[&images[0]].clone();
                    p.insert(images[1], first);
                }
            }
            render(&p)
        }
        Corruption::SelfInCandidates => {
            if let Some(anchor) = param_text(&p, Role::Anchor).map(str::to_string) {
                let n = param_list(&p, Role::Candidates).map_or(0, |l| l.len());
                replace_list_item(&mut p, rng.gen_range(0..n.max(1)), &anchor);
            }
            render(&p)
        }
        Corruption::MissingRole => {
            match labels.choose(rng) {
                Some(role) => {
                    p.insert(*role, text(MISSING_SENTINEL));
                }
                None => replace_list_item(&mut p, 0, MISSING_SENTINEL),
            }
            let rendered = render(&p).replace(MISSING_SENTINEL, "");
            rendered.split_whitespace().collect::<Vec<_>>().join(" ")
        }
    }
}

fn replace_list_item(p: &mut Params, idx: usize, label: &str) {
    if let Some(items) = param_list(p, Role::Candidates) {
        let mut items = items.to_vec();
        if idx < items.len() {
            items[idx] = label.to_string();
        }
        p.insert(Role::Candidates, crate::question::list(&items));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverProfile {
    /// Probability of answering with the ground truth.
    pub q: f64,
    /// Relative standard deviation of metric noise; zero disables noise.
    pub sigma: f64,
}

impl Default for SolverProfile {
    fn default() -> Self {
        SolverProfile { q: 1.0, sigma: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScriptedSolverConfig {
    pub rollouts: usize,
    pub default_profile: SolverProfile,
    pub per_task: BTreeMap<TaskType, SolverProfile>,
    /// Probability that an explanation names the failure code precisely.
    pub explain_q: f64,
}

impl Default for ScriptedSolverConfig {
    fn default() -> Self {
        ScriptedSolverConfig {
            rollouts: 4,
            default_profile: SolverProfile::default(),
            per_task: BTreeMap::new(),
            explain_q: 1.0,
        }
    }
}

impl ScriptedSolverConfig {
    pub fn profile(&self, task: TaskType) -> SolverProfile {
        self.per_task.get(&task).copied().unwrap_or(self.default_profile)
    }
}

pub struct ScriptedSolver<'c> {
    pub config: &'c ScriptedSolverConfig,
}

impl ScriptedSolver<'_> {
    /// Answer for a valid question.
    pub fn answer<R: Rng + ?Sized>(&self, task: TaskType, gt: &GroundTruth, params: &Params, rng: &mut R) -> String {
        let profile = self.config.profile(task);
        let body = if profile.sigma > 0.0 && matches!(gt, GroundTruth::Metric { .. } | GroundTruth::Count { .. }) {
            noisy(gt, profile.sigma, rng)
        } else if rng.gen::<f64>() < profile.q {
            render_answer(gt)
        } else {
            wrong_answer(gt, params)
        };
        format!("<answer>{body}</answer>")
    }

    /// Explanation for an invalid question.
    pub fn explain<R: Rng + ?Sized>(&self, code: ErrorCode, rng: &mut R) -> String {
        if rng.gen::<f64>() < self.config.explain_q {
            format!("<answer>invalid: {}</answer>", canonical_phrase(code))
        } else {
            "<answer>invalid question</answer>".to_string()
        }
    }
}

fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1 = 1.0 - rng.gen::<f64>();
    let u2 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn noisy<R: Rng + ?Sized>(gt: &GroundTruth, sigma: f64, rng: &mut R) -> String {
    let factor = (1.0 + sigma * standard_normal(rng)).max(0.0);
    match gt {
        GroundTruth::Metric { value, unit } => format!("{} {}", value * factor, unit.symbol()),
        GroundTruth::Count { value } => format!("{}", (*value as f64 * factor).round()),
        other => render_answer(other),
    }
}

fn opposite_set(set: DirectionSet) -> DirectionSet {
    let dirs: Vec<Direction> = set.iter().map(Direction::opposite).collect();
    DirectionSet::new(&dirs).unwrap_or(set)
}

/// An answer that scores zero against `gt`.
pub fn wrong_answer(gt: &GroundTruth, params: &Params) -> String {
    let wrong = match gt {
        GroundTruth::Count { value } => GroundTruth::Count { value: value + 3 },
        GroundTruth::Metric { value, unit } => GroundTruth::Metric {
            value: value * 3.0 + 1.0,
            unit: *unit,
        },
        GroundTruth::Label { value } => {
            let other = params
                .values()
                .flatten()
                .flat_map(|v| match v.as_list() {
                    Some(items) => items.to_vec(),
                    None => v.as_text().map(|s| vec![s.to_string()]).unwrap_or_default(),
                })
                .find(|l| l != value)
                .unwrap_or_else(|| "none".to_string());
            GroundTruth::Label { value: other }
        }
        GroundTruth::Direction { value } => GroundTruth::Direction {
            value: opposite_set(*value),
        },
        GroundTruth::Motion { value } => GroundTruth::Motion {
            value: MotionSet(opposite_set(value.0)),
        },
        GroundTruth::Ternary { value } => GroundTruth::Ternary {
            value: match value {
                Ternary::Obj1 => Ternary::Obj2,
                _ => Ternary::Obj1,
            },
        },
        GroundTruth::Elevation { value } => GroundTruth::Elevation {
            value: match value {
                Elevation::Higher => Elevation::Lower,
                _ => Elevation::Higher,
            },
        },
        GroundTruth::Visibility { value } => GroundTruth::Visibility {
            value: match value {
                Visibility::Image1 => Visibility::Image2,
                _ => Visibility::Image1,
            },
        },
    };
    render_answer(&wrong)
}
