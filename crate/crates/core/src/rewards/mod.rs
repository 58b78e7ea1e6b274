//! Questioner and Solver rewards.

mod answer;
mod format;
mod judge;

pub use answer::{
    counting_accuracy, direction_set_accuracy, parse_answer, parse_answer_with, partial_credit, relative_accuracy,
    relative_accuracy_from_error, relative_thresholds, render_answer, solver_accuracy, NonFiniteInput, Prediction,
    Unparseable, PARTIAL_CREDIT, REL_BANDS, REL_EPS,
};
pub use format::{
    answer_content, parse_questioner_output, questioner_format, solver_format, strip_tags, QuestionerParse,
};
pub use judge::{canonical_phrase, snap_to_grid, Judge, RuleJudge, EXPLANATION_GRID, OBSERVATION_GRID};

use serde::{Deserialize, Serialize};

use crate::pipeline::{verdict_to_diagnostics, DiagnosticSummary, Verdict};
use crate::tasks::validity_factor;

/// Floor applied to an eligible observation's judge score.
pub const OBSERVATION_FLOOR: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionerReward {
    pub f_fmt: u8,
    pub f_valid: f64,
    pub f_obs: f64,
    pub severe_failure: bool,
    pub r_q: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Valid,
    Invalid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverReward {
    pub branch: Branch,
    pub f_fmt: i8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_acc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_explain: Option<f64>,
    pub hard_format_failure: bool,
    pub r_a: f64,
}

pub fn observation_factor(judge_score: Option<f64>, eligible: bool) -> f64 {
    if eligible {
        judge_score.unwrap_or(0.0).max(OBSERVATION_FLOOR)
    } else {
        0.0
    }
}

pub fn questioner_reward(f_fmt: u8, f_valid: f64, f_obs: f64, severe: bool) -> QuestionerReward {
    let r_q = if severe {
        -1.0
    } else {
        0.1 * f_fmt as f64 + 0.9 * f_valid * f_obs
    };
    QuestionerReward {
        f_fmt,
        f_valid,
        f_obs,
        severe_failure: severe,
        r_q,
    }
}

/// `value` is f_acc on the valid branch and f_explain on the invalid one.
pub fn solver_reward(branch: Branch, f_fmt: i8, value: f64) -> SolverReward {
    match branch {
        Branch::Valid => {
            let hard = f_fmt == -1;
            SolverReward {
                branch,
                f_fmt,
                f_acc: Some(value),
                f_explain: None,
                hard_format_failure: hard,
                r_a: if hard { -1.0 } else { 0.1 * f_fmt as f64 + 0.9 * value },
            }
        }
        Branch::Invalid => SolverReward {
            branch,
            f_fmt,
            f_acc: None,
            f_explain: Some(value),
            hard_format_failure: false,
            r_a: 0.1 * f_fmt as f64 + 0.9 * value,
        },
    }
}

pub fn explanation_score(explanation: &str, diagnostics: &DiagnosticSummary, judge: &dyn Judge) -> f64 {
    snap_to_grid(judge.score_explanation(explanation, diagnostics), &EXPLANATION_GRID)
}

/// Scores a raw Questioner output against the verdict of its question.
pub fn score_questioner(output: &str, verdict: &Verdict, judge: &dyn Judge) -> QuestionerReward {
    let parse = parse_questioner_output(output);
    let f_valid = match (&verdict.ground_truth, verdict.task) {
        (Some(gt), Some(task)) if verdict.valid => validity_factor(task, gt),
        _ => 0.0,
    };
    let observation = parse.clean_observation();
    let eligible = verdict.valid && parse.f_fmt == 1 && observation.is_some();
    let judge_score = match (eligible, observation, verdict.task) {
        (true, Some(obs), Some(task)) => {
            let q = parse.question.as_deref().unwrap_or_default();
            Some(snap_to_grid(judge.score_observation(obs, q, task), &OBSERVATION_GRID))
        }
        _ => None,
    };
    questioner_reward(
        parse.f_fmt,
        f_valid,
        observation_factor(judge_score, eligible),
        parse.severe,
    )
}

/// Scores a raw Solver response: accuracy for valid questions, explanation
/// quality for invalid ones.
pub fn score_solver(response: &str, verdict: &Verdict, judge: &dyn Judge) -> SolverReward {
    let f_fmt = solver_format(response);
    match (&verdict.ground_truth, verdict.task) {
        (Some(gt), Some(task)) if verdict.valid => {
            let f_acc = if f_fmt == 1 {
                parse_answer_with(response, task, Some(&verdict.parsed))
                    .map(|p| solver_accuracy(&p, gt, task))
                    .unwrap_or(0.0)
            } else {
                0.0
            };
            solver_reward(Branch::Valid, f_fmt, f_acc)
        }
        _ => {
            let explanation = strip_tags(response);
            let f_explain = verdict_to_diagnostics(verdict)
                .map(|d| explanation_score(&explanation, &d, judge))
                .unwrap_or(0.0);
            solver_reward(Branch::Invalid, f_fmt, f_explain)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn questioner_formula() {
        assert_eq!(questioner_reward(1, 1.0, 1.0, false).r_q, 1.0);
        assert_eq!(questioner_reward(1, 0.0, 0.0, false).r_q, 0.1);
        assert_eq!(questioner_reward(1, 1.0, 1.0, true).r_q, -1.0);
    }

    #[test]
    fn observation_floor() {
        assert_eq!(observation_factor(Some(0.0), true), 0.1);
        assert_eq!(observation_factor(Some(1.0), true), 1.0);
        assert_eq!(observation_factor(Some(1.0), false), 0.0);
    }

    #[test]
    fn solver_branches() {
        assert_eq!(solver_reward(Branch::Valid, 1, 1.0).r_a, 1.0);
        let hard = solver_reward(Branch::Valid, -1, 1.0);
        assert!(hard.hard_format_failure);
        assert_eq!(hard.r_a, -1.0);
        let inv = solver_reward(Branch::Invalid, -1, 1.0);
        assert!(!inv.hard_format_failure);
        assert_eq!(inv.r_a, 0.1 * -1.0 + 0.9 * 1.0);
    }
}
