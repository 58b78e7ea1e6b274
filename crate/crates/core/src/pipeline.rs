//! The six-stage verification pipeline and its verdict object.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::question::{
    empty_params, extract_entities, param_image, param_list, param_text, sanitize_with_report, Extractor, ParamValue,
    Params, PoolIssue, PoolView,
};
use crate::solvers::{solve, Env, Intermediate, SolveError};
use crate::tasks::{ContextRef, GroundTruth, PoolKind, Role, RoleKind, TaskType};

/// Maximum number of intermediates kept on a verdict.
pub const MAX_INTERMEDIATES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorCode {
    ModeMismatch,
    ContextMissing,
    ExtractionFailed,
    PoolViolation,
    RoleConflict,
    ListInvalid,
    SelfInCandidates,
    DegeneratePremise,
    SolverUnavailable,
}

impl ErrorCode {
    pub const ALL: [ErrorCode; 9] = [
        ErrorCode::ModeMismatch,
        ErrorCode::ContextMissing,
        ErrorCode::ExtractionFailed,
        ErrorCode::PoolViolation,
        ErrorCode::RoleConflict,
        ErrorCode::ListInvalid,
        ErrorCode::SelfInCandidates,
        ErrorCode::DegeneratePremise,
        ErrorCode::SolverUnavailable,
    ];

    pub fn stage(self) -> u8 {
        match self {
            ErrorCode::ModeMismatch => 1,
            ErrorCode::ContextMissing => 2,
            ErrorCode::ExtractionFailed => 3,
            ErrorCode::PoolViolation
            | ErrorCode::RoleConflict
            | ErrorCode::ListInvalid
            | ErrorCode::SelfInCandidates => 5,
            ErrorCode::DegeneratePremise | ErrorCode::SolverUnavailable => 6,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::ModeMismatch => "MODE_MISMATCH",
            ErrorCode::ContextMissing => "CONTEXT_MISSING",
            ErrorCode::ExtractionFailed => "EXTRACTION_FAILED",
            ErrorCode::PoolViolation => "POOL_VIOLATION",
            ErrorCode::RoleConflict => "ROLE_CONFLICT",
            ErrorCode::ListInvalid => "LIST_INVALID",
            ErrorCode::SelfInCandidates => "SELF_IN_CANDIDATES",
            ErrorCode::DegeneratePremise => "DEGENERATE_PREMISE",
            ErrorCode::SolverUnavailable => "SOLVER_UNAVAILABLE",
        }
    }

    pub fn parse(s: &str) -> Option<ErrorCode> {
        ErrorCode::ALL.into_iter().find(|c| c.as_str().eq_ignore_ascii_case(s.trim()))
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Acceptance flags. Checks after the first failing stage are never run and
/// stay `false`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ValidationOutcome {
    pub c_mode: bool,
    pub c_extract: bool,
    pub c_pool: bool,
    pub c_schema: bool,
    pub c_solver: bool,
}

impl ValidationOutcome {
    pub fn all_pass() -> Self {
        ValidationOutcome {
            c_mode: true,
            c_extract: true,
            c_pool: true,
            c_schema: true,
            c_solver: true,
        }
    }

    pub fn valid(&self) -> bool {
        self.c_mode && self.c_extract && self.c_pool && self.c_schema && self.c_solver
    }

    fn up_to(code: ErrorCode) -> Self {
        let mut o = ValidationOutcome::default();
        match code {
            ErrorCode::ModeMismatch | ErrorCode::ContextMissing => {}
            ErrorCode::ExtractionFailed => o.c_mode = true,
            ErrorCode::PoolViolation => {
                o.c_mode = true;
                o.c_extract = true;
            }
            ErrorCode::RoleConflict | ErrorCode::ListInvalid | ErrorCode::SelfInCandidates => {
                o.c_mode = true;
                o.c_extract = true;
                o.c_pool = true;
            }
            ErrorCode::DegeneratePremise | ErrorCode::SolverUnavailable => {
                o.c_mode = true;
                o.c_extract = true;
                o.c_pool = true;
                o.c_schema = true;
            }
        }
        o
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub code: ErrorCode,
    pub stage: u8,
    pub outcome: ValidationOutcome,
    pub reason: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pool_issues: Vec<PoolIssue>,
}

/// How each schema role fared through extraction and sanitization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldStatus {
    Resolved,
    FilledByFallback,
    Missing,
    Rejected,
    NotReached,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub valid: bool,
    pub task: Option<TaskType>,
    pub context: ContextRef,
    pub ground_truth: Option<GroundTruth>,
    pub parsed: Params,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub fields: BTreeMap<Role, FieldStatus>,
    pub failure: Option<Failure>,
    #[serde(default)]
    pub intermediates: Vec<Intermediate>,
}

impl Verdict {
    pub fn code(&self) -> Option<ErrorCode> {
        self.failure.as_ref().map(|f| f.code)
    }

    pub fn outcome(&self) -> ValidationOutcome {
        match &self.failure {
            Some(f) => f.outcome,
            None => ValidationOutcome::all_pass(),
        }
    }
}

/// A question as submitted: free text or an already structured role map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionInput {
    Text(String),
    Structured(Params),
}

struct Draft {
    task: Option<TaskType>,
    context: ContextRef,
    parsed: Params,
    fields: BTreeMap<Role, FieldStatus>,
    intermediates: Vec<Intermediate>,
}

impl Draft {
    fn fail(self, code: ErrorCode, reason: impl Into<String>, pool_issues: Vec<PoolIssue>) -> Verdict {
        Verdict {
            valid: false,
            task: self.task,
            context: self.context,
            ground_truth: None,
            parsed: self.parsed,
            fields: self.fields,
            failure: Some(Failure {
                code,
                stage: code.stage(),
                outcome: ValidationOutcome::up_to(code),
                reason: reason.into(),
                pool_issues,
            }),
            intermediates: self.intermediates,
        }
    }
}

/// Runs the full pipeline. Never fails at the interface: every problem is an
/// in-band verdict failure from the first stage that detects it.
pub fn verify(
    input: &QuestionInput,
    declared_task: &str,
    context: &ContextRef,
    env: Env<'_>,
    extractor: &dyn Extractor,
) -> Verdict {
    verify_in(input, declared_task, context, Some(env), extractor)
}

/// As [`verify`], for callers that may hold no scene for the context. A
/// missing or mismatched environment is reported as `CONTEXT_MISSING`.
pub fn verify_in(
    input: &QuestionInput,
    declared_task: &str,
    context: &ContextRef,
    env: Option<Env<'_>>,
    extractor: &dyn Extractor,
) -> Verdict {
    let mut draft = Draft {
        task: None,
        context: context.clone(),
        parsed: Params::new(),
        fields: BTreeMap::new(),
        intermediates: Vec::new(),
    };

    // Stage 1: task normalization and input contract.
    let Some(task) = TaskType::normalize(declared_task) else {
        return draft.fail(ErrorCode::ModeMismatch, format!("unknown task '{declared_task}'"), vec![]);
    };
    draft.task = Some(task);
    draft.parsed = empty_params(task);
    draft.fields = task.schema().role_names().map(|r| (r, FieldStatus::NotReached)).collect();
    match context.modality() {
        None => {
            return draft.fail(
                ErrorCode::ModeMismatch,
                format!("context with {} frame(s) {:?} is not a valid input", context.frames.len(), context.frames),
                vec![],
            )
        }
        Some(m) if m != task.modality() => {
            return draft.fail(
                ErrorCode::ModeMismatch,
                format!("{task} expects {:?} input but the context is {m:?}", task.modality()),
                vec![],
            )
        }
        Some(_) => {}
    }

    // Stage 2: context injection.
    let Some(env) = env.filter(|e| e.scene.scene_id == context.scene_id) else {
        return draft.fail(
            ErrorCode::ContextMissing,
            format!("scene '{}' is not loaded", context.scene_id),
            vec![],
        );
    };
    for f in &context.frames {
        if env.scene.frame(*f).is_none() || env.pools.frame_unique(*f).is_none() {
            return draft.fail(ErrorCode::ContextMissing, format!("frame {f} is not in the scene"), vec![]);
        }
    }

    // Stage 3: structured extraction with unique-candidate fallback.
    let mut params = match input {
        QuestionInput::Text(text) => extract_entities(text, task, extractor),
        QuestionInput::Structured(p) => {
            let mut out = empty_params(task);
            for (role, slot) in out.iter_mut() {
                if let Some(v) = p.get(role) {
                    slot.clone_from(v);
                }
            }
            out
        }
    };
    let view = PoolView::new(env.scene, env.pools, context).with_aliases(env.aliases);
    let schema = task.schema();
    let mut shape_errors = Vec::new();
    for spec in schema.roles {
        if let Some(Some(v)) = params.get(&spec.role) {
            let ok = match (spec.kind, v) {
                (RoleKind::Image, ParamValue::Image(i)) => matches!(i, 1 | 2),
                (RoleKind::Label(_) | RoleKind::Region, ParamValue::Text(s)) => !s.trim().is_empty(),
                (RoleKind::LabelList { .. }, ParamValue::List(items)) => !items.is_empty(),
                _ => false,
            };
            if !ok {
                shape_errors.push(spec.role);
                params.insert(spec.role, None);
            }
        }
    }
    let mut fallback_filled = Vec::new();
    for spec in schema.roles {
        if params[&spec.role].is_none() && !shape_errors.contains(&spec.role) {
            if let Some(v) = fallback_candidate(task, spec.role, spec.kind, &params, &view) {
                params.insert(spec.role, Some(v));
                fallback_filled.push(spec.role);
            }
        }
    }
    let missing: Vec<Role> = schema.role_names().filter(|r| params[r].is_none()).collect();
    for spec in schema.roles {
        let status = if missing.contains(&spec.role) {
            FieldStatus::Missing
        } else if fallback_filled.contains(&spec.role) {
            FieldStatus::FilledByFallback
        } else {
            FieldStatus::Resolved
        };
        draft.fields.insert(spec.role, status);
    }
    draft.parsed = params.clone();
    if !missing.is_empty() {
        let names: Vec<&str> = missing.iter().map(|r| r.name()).collect();
        return draft.fail(
            ErrorCode::ExtractionFailed,
            format!("could not resolve role(s): {}", names.join(", ")),
            vec![],
        );
    }

    // Stage 4: sanitization and region anchor resolution.
    let report = sanitize_with_report(task, &params, &view);
    let mut issues = report.issues;
    let params = report.params;
    if let Some(phrase) = param_text(&params, Role::Region) {
        let anchors = view.label_set(PoolKind::RegionAnchor, &params).unwrap_or_default();
        match env.ontology.resolve(phrase, &anchors) {
            Some(anchor) => draft.intermediates.push(Intermediate {
                name: "region_anchor".into(),
                value: serde_json::Value::from(anchor),
            }),
            None => issues.push(PoolIssue {
                role: Role::Region,
                label: phrase.to_string(),
                pool: PoolKind::RegionAnchor,
            }),
        }
    }
    for issue in &issues {
        draft.fields.insert(issue.role, FieldStatus::Rejected);
    }
    draft.parsed = params.clone();

    // Stage 5: rule-based rejection.
    if let Some(first) = issues.first() {
        let reason = format!(
            "'{}' for role '{}' is outside the {} pool",
            first.label,
            first.role,
            first.pool.name()
        );
        return draft.fail(ErrorCode::PoolViolation, reason, issues);
    }
    if let Err((code, reason)) = structural_check(task, &params) {
        return draft.fail(code, reason, vec![]);
    }

    // Stage 6: deterministic solver.
    match solve(task, &params, context, env) {
        Ok(sol) => {
            draft.intermediates.extend(sol.intermediates);
            draft.intermediates.truncate(MAX_INTERMEDIATES);
            Verdict {
                valid: true,
                task: Some(task),
                context: draft.context,
                ground_truth: Some(sol.ground_truth),
                parsed: params,
                fields: draft.fields,
                failure: None,
                intermediates: draft.intermediates,
            }
        }
        Err(SolveError::DegeneratePremise(r)) => draft.fail(ErrorCode::DegeneratePremise, r, vec![]),
        Err(SolveError::Unavailable(r)) => draft.fail(ErrorCode::SolverUnavailable, r, vec![]),
    }
}

/// Labels already claimed by other single-label roles.
fn other_labels(params: &Params, role: Role) -> Vec<&str> {
    params
        .iter()
        .filter(|(r, _)| **r != role)
        .filter_map(|(_, v)| match v {
            Some(ParamValue::Text(s)) => Some(s.as_str()),
            _ => None,
        })
        .collect()
}

fn fallback_candidate(task: TaskType, role: Role, kind: RoleKind, params: &Params, view: &PoolView<'_>) -> Option<ParamValue> {
    match kind {
        RoleKind::Image => {
            let other = schema_other_image(task, role).and_then(|r| param_image(params, r));
            let choices: Vec<u8> = [1u8, 2].into_iter().filter(|i| Some(*i) != other).collect();
            (choices.len() == 1).then(|| ParamValue::Image(choices[0]))
        }
        RoleKind::Label(pool) => {
            let set = view.label_set(pool, params)?;
            let taken = other_labels(params, role);
            let listed: &[String] = param_list(params, Role::Candidates).unwrap_or(&[]);
            let mut options = set
                .iter()
                .filter(|l| !taken.contains(&l.as_str()) && !listed.contains(l));
            let first = options.next()?;
            options.next().is_none().then(|| ParamValue::Text(first.clone()))
        }
        RoleKind::LabelList { .. } | RoleKind::Region => None,
    }
}

fn schema_other_image(task: TaskType, role: Role) -> Option<Role> {
    task.schema()
        .roles
        .iter()
        .find(|s| s.role != role && s.kind == RoleKind::Image)
        .map(|s| s.role)
}

/// Same-label, distinctness and list constraints, checked in code order.
fn structural_check(task: TaskType, params: &Params) -> Result<(), (ErrorCode, String)> {
    let schema = task.schema();
    let singles: Vec<(Role, &str)> = schema
        .roles
        .iter()
        .filter(|s| matches!(s.kind, RoleKind::Label(_)))
        .filter_map(|s| param_text(params, s.role).map(|v| (s.role, v)))
        .collect();
    let single_labels: Vec<_> = if task == TaskType::RelativeDistance {
        // anchor vs candidates is its own rule
        Vec::new()
    } else {
        singles.clone()
    };
    for (i, (ra, a)) in single_labels.iter().enumerate() {
        for (rb, b) in &single_labels[i + 1..] {
            if a == b {
                return Err((
                    ErrorCode::RoleConflict,
                    format!("roles '{ra}' and '{rb}' both name '{a}'"),
                ));
            }
        }
    }
    let images: Vec<(Role, u8)> = schema
        .roles
        .iter()
        .filter(|s| s.kind == RoleKind::Image)
        .filter_map(|s| param_image(params, s.role).map(|v| (s.role, v)))
        .collect();
    if images.len() == 2 && images[0].1 == images[1].1 {
        return Err((
            ErrorCode::RoleConflict,
            format!("roles '{}' and '{}' both name Image {}", images[0].0, images[1].0, images[0].1),
        ));
    }
    for spec in schema.roles {
        if let RoleKind::LabelList { min, max, .. } = spec.kind {
            let items = param_list(params, spec.role).unwrap_or(&[]);
            if items.len() < min || items.len() > max {
                return Err((
                    ErrorCode::ListInvalid,
                    format!("'{}' has {} item(s); expected {min}..={max}", spec.role, items.len()),
                ));
            }
            let mut sorted = items.to_vec();
            sorted.sort();
            sorted.dedup();
            if sorted.len() != items.len() {
                return Err((ErrorCode::ListInvalid, format!("'{}' repeats a label", spec.role)));
            }
        }
    }
    if task == TaskType::RelativeDistance {
        if let (Some(anchor), Some(items)) = (param_text(params, Role::Anchor), param_list(params, Role::Candidates)) {
            if items.iter().any(|c| c == anchor) {
                return Err((
                    ErrorCode::SelfInCandidates,
                    format!("anchor '{anchor}' appears among its own candidates"),
                ));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticSummary {
    pub task: Option<TaskType>,
    pub code: ErrorCode,
    pub stage: u8,
    pub reason: String,
    pub fields: BTreeMap<Role, FieldStatus>,
    pub null_fields: Vec<Role>,
    pub pool_issues: Vec<PoolIssue>,
    pub outcome: ValidationOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DiagnosticsError {
    #[error("diagnostics requested for a valid verdict")]
    CalledOnValidVerdict,
}

pub fn verdict_to_diagnostics(v: &Verdict) -> Result<DiagnosticSummary, DiagnosticsError> {
    let failure = v.failure.as_ref().ok_or(DiagnosticsError::CalledOnValidVerdict)?;
    Ok(DiagnosticSummary {
        task: v.task,
        code: failure.code,
        stage: failure.stage,
        reason: failure.reason.clone(),
        fields: v.fields.clone(),
        null_fields: v.parsed.iter().filter(|(_, x)| x.is_none()).map(|(r, _)| *r).collect(),
        pool_issues: failure.pool_issues.clone(),
        outcome: failure.outcome,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_code_has_one_stage() {
        let stages: Vec<u8> = ErrorCode::ALL.iter().map(|c| c.stage()).collect();
        assert_eq!(stages, [1, 2, 3, 5, 5, 5, 5, 6, 6]);
        for c in ErrorCode::ALL {
            assert_eq!(ErrorCode::parse(c.as_str()), Some(c));
            assert_eq!(serde_json::to_string(&c).unwrap(), format!("\"{c}\""));
            assert!(!ValidationOutcome::up_to(c).valid());
        }
    }

    #[test]
    fn outcome_prefix_matches_stage() {
        let o = ValidationOutcome::up_to(ErrorCode::RoleConflict);
        assert!(o.c_mode && o.c_extract && o.c_pool && !o.c_schema && !o.c_solver);
    }

    #[test]
    fn structural_rules_in_order() {
        use crate::question::{list, text};
        let mut p = empty_params(TaskType::RelativeDistance);
        p.insert(Role::Anchor, text("bed"));
        p.insert(Role::Candidates, list(&["bed", "lamp"]));
        // list length is checked before self-membership
        assert_eq!(structural_check(TaskType::RelativeDistance, &p).unwrap_err().0, ErrorCode::ListInvalid);
        p.insert(Role::Candidates, list(&["bed", "lamp", "desk"]));
        assert_eq!(
            structural_check(TaskType::RelativeDistance, &p).unwrap_err().0,
            ErrorCode::SelfInCandidates
        );
        let mut p = empty_params(TaskType::RelativeDirection);
        p.insert(Role::Standing, text("bed"));
        p.insert(Role::Facing, text("lamp"));
        p.insert(Role::Target, text("bed"));
        assert_eq!(structural_check(TaskType::RelativeDirection, &p).unwrap_err().0, ErrorCode::RoleConflict);
    }
}
