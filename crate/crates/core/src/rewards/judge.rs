//! Judge interface and the deterministic rule-table judges.

use crate::pipeline::{DiagnosticSummary, ErrorCode};
use crate::tasks::TaskType;

/// Rubric grid for observation scores.
pub const OBSERVATION_GRID: [f64; 4] = [0.0, 0.3, 0.6, 1.0];
/// Rubric grid for explanation scores.
pub const EXPLANATION_GRID: [f64; 4] = [0.0, 0.3, 0.6, 1.0];

pub trait Judge: Send + Sync {
    fn score_observation(&self, observation: &str, question: &str, task: TaskType) -> f64;
    fn score_explanation(&self, explanation: &str, diagnostics: &DiagnosticSummary) -> f64;
}

/// Snaps a judge output onto a rubric grid (nearest value, lower on ties).
pub fn snap_to_grid(value: f64, grid: &[f64]) -> f64 {
    if !value.is_finite() {
        return grid[0];
    }
    let mut best = grid[0];
    for g in grid {
        if (value - g).abs() < (value - best).abs() {
            best = *g;
        }
    }
    best
}

/// Phrase that names a code precisely enough for full explanation credit.
pub fn canonical_phrase(code: ErrorCode) -> &'static str {
    match code {
        ErrorCode::ModeMismatch => "input modality does not match the task",
        ErrorCode::ContextMissing => "context is missing",
        ErrorCode::ExtractionFailed => "could not extract",
        ErrorCode::PoolViolation => "label outside the grounded pool",
        ErrorCode::RoleConflict => "same object in two roles",
        ErrorCode::ListInvalid => "candidate list is malformed",
        ErrorCode::SelfInCandidates => "anchor appears among its own candidates",
        ErrorCode::DegeneratePremise => "degenerate premise",
        ErrorCode::SolverUnavailable => "required geometry is unavailable",
    }
}

fn family_keywords(code: ErrorCode) -> &'static [&'static str] {
    match code {
        ErrorCode::ModeMismatch | ErrorCode::ContextMissing => {
            &["modality", "image count", "number of images", "context", "frame"]
        }
        ErrorCode::ExtractionFailed => &["extract", "parse", "missing object", "missing role", "unspecified"],
        ErrorCode::PoolViolation => &[
            "pool",
            "not visible",
            "does not exist",
            "not present",
            "not in the scene",
            "grounded",
            "ambiguous",
        ],
        ErrorCode::RoleConflict | ErrorCode::ListInvalid | ErrorCode::SelfInCandidates => {
            &["distinct", "duplicate", "repeated", "candidate", "same object", "same label", "role"]
        }
        ErrorCode::DegeneratePremise | ErrorCode::SolverUnavailable => {
            &["degenerate", "zero", "same level", "same height", "geometry", "metadata", "no instances"]
        }
    }
}

const INVALID_MARKERS: &[&str] = &[
    "invalid",
    "not valid",
    "cannot be answered",
    "can't be answered",
    "unanswerable",
    "ill-posed",
    "reject",
];

const VALID_MARKERS: &[&str] = &[
    "is valid",
    "perfectly valid",
    "question is fine",
    "is answerable",
    "is well-formed",
    "no problem",
];

fn normalized(text: &str) -> String {
    text.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Deterministic stand-in for the LLM judges.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleJudge;

const LAYOUT_WORDS: &[&str] = &[
    "left", "right", "front", "behind", "near", "next", "between", "above", "below", "corner", "wall", "center",
    "beside", "across", "opposite", "facing", "far", "close", "against", "under",
];

const QUESTION_STOPWORDS: &[&str] = &[
    "the", "what", "which", "how", "many", "are", "there", "this", "room", "image", "camera", "and", "with", "from",
    "when", "where", "took", "you", "relative", "direction", "distance", "between", "closest", "their", "nearest",
    "points", "meters", "centimeters", "square", "longest", "edge", "larger", "closer", "higher", "lower", "compared",
    "stand", "near", "face", "among", "shows", "more", "clearly", "for", "based", "sequence", "moving", "turning",
    "approximately", "straight", "line", "straight-line", "approximately", "is", "in", "of", "to", "at", "me",
];

impl Judge for RuleJudge {
    /// One point each for length (≥ 20 words), naming an object from the
    /// question, and describing layout.
    fn score_observation(&self, observation: &str, question: &str, _task: TaskType) -> f64 {
        let obs = normalized(observation);
        let obs_words: Vec<&str> = obs
            .split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
            .collect();
        let q = normalized(question);
        let q_words: Vec<&str> = q
            .split(|c: char| !c.is_alphanumeric())
            .filter(|w| w.len() >= 3 && !QUESTION_STOPWORDS.contains(w))
            .collect();
        let mut points = 0;
        if obs_words.len() >= 20 {
            points += 1;
        }
        if q_words.iter().any(|w| obs_words.contains(w)) {
            points += 1;
        }
        if LAYOUT_WORDS.iter().any(|w| obs_words.contains(w)) {
            points += 1;
        }
        OBSERVATION_GRID[points]
    }

    fn score_explanation(&self, explanation: &str, diagnostics: &DiagnosticSummary) -> f64 {
        let text = normalized(explanation);
        let says_invalid = INVALID_MARKERS.iter().any(|m| text.contains(m));
        let says_valid = VALID_MARKERS.iter().any(|m| text.contains(m));
        if says_valid && !says_invalid {
            return 0.0;
        }
        let code = diagnostics.code;
        let names = |c: ErrorCode| text.contains(canonical_phrase(c)) || text.contains(&c.as_str().to_lowercase());
        if names(code) {
            return 1.0;
        }
        if ErrorCode::ALL.iter().any(|c| *c != code && names(*c)) {
            return 0.0;
        }
        if family_keywords(code).iter().any(|k| text.contains(k)) {
            return 0.6;
        }
        if says_invalid {
            return 0.3;
        }
        0.0
    }
}
