//! Judge backed by an external HTTP endpoint, with the rule judge as fallback.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use spatial_env::pipeline::DiagnosticSummary;
use spatial_env::rewards::{Judge, RuleJudge};
use spatial_env::tasks::TaskType;

pub const JUDGE_URL_ENV: &str = "SPATIAL_ENV_JUDGE_URL";

#[derive(Debug, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum JudgeRequest<'a> {
    Observation {
        observation: &'a str,
        question: &'a str,
        task: TaskType,
    },
    Explanation {
        explanation: &'a str,
        diagnostics: &'a DiagnosticSummary,
    },
}

#[derive(Debug, Deserialize)]
struct JudgeReply {
    score: f64,
}

/// Posts `{"kind": ..., ...}` to the endpoint and reads `{"score": x}`.
/// Transport or decoding failures fall back to the rule judge.
pub struct HttpJudge {
    url: String,
    agent: ureq::Agent,
}

impl HttpJudge {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder().timeout_global(Some(timeout)).build().into();
        HttpJudge { url: url.into(), agent }
    }

    fn ask(&self, req: &JudgeRequest<'_>) -> Option<f64> {
        let reply = self
            .agent
            .post(&self.url)
            .send_json(req)
            .and_then(|mut r| r.body_mut().read_json::<JudgeReply>());
        match reply {
            Ok(r) if r.score.is_finite() => Some(r.score),
            Ok(r) => {
                tracing::warn!(score = r.score, "judge returned a non-finite score");
                None
            }
            Err(e) => {
                tracing::warn!(error = %e, url = %self.url, "judge request failed");
                None
            }
        }
    }
}

impl Judge for HttpJudge {
    fn score_observation(&self, observation: &str, question: &str, task: TaskType) -> f64 {
        self.ask(&JudgeRequest::Observation {
            observation,
            question,
            task,
        })
        .unwrap_or_else(|| RuleJudge.score_observation(observation, question, task))
    }

    fn score_explanation(&self, explanation: &str, diagnostics: &DiagnosticSummary) -> f64 {
        self.ask(&JudgeRequest::Explanation {
            explanation,
            diagnostics,
        })
        .unwrap_or_else(|| RuleJudge.score_explanation(explanation, diagnostics))
    }
}

/// The HTTP judge when the endpoint variable is set, else the rule judge.
pub fn judge_from_env() -> Box<dyn Judge> {
    match std::env::var(JUDGE_URL_ENV) {
        Ok(url) if !url.trim().is_empty() => Box::new(HttpJudge::new(url.trim(), Duration::from_secs(30))),
        _ => Box::new(RuleJudge),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unreachable_endpoint_falls_back_to_rules() {
        let j = HttpJudge::new("http://127.0.0.1:9/judge", Duration::from_millis(200));
        let obs = "The lamp stands left of the bed near the wall.";
        let q = "How far is the lamp from the bed?";
        assert_eq!(
            j.score_observation(obs, q, TaskType::AbsoluteDistance),
            RuleJudge.score_observation(obs, q, TaskType::AbsoluteDistance)
        );
    }
}
