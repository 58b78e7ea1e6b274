//! Request/response records exchanged with the environment service.
//!
//! One JSON object per line. Requests carry a client-chosen `id`, an `op`
//! name and an op-specific `payload`; every request gets exactly one
//! response echoing the `id`.

use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::pipeline::QuestionInput;
use crate::pipeline::Verdict;
use crate::question::Params;
use crate::scene::{GeneratorSpec, Scene};
use crate::scheduler::TaskStats;
use crate::solvers::Intermediate;
use crate::tasks::{ContextRef, GroundTruth, TaskType};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Op {
    Ping,
    LoadScene,
    GenScene,
    Verify,
    Solve,
    ScoreQuestioner,
    ScoreSolver,
    Feasible,
    SampleTask,
    UpdateStats,
}

impl Op {
    pub const ALL: [Op; 10] = [
        Op::Ping,
        Op::LoadScene,
        Op::GenScene,
        Op::Verify,
        Op::Solve,
        Op::ScoreQuestioner,
        Op::ScoreSolver,
        Op::Feasible,
        Op::SampleTask,
        Op::UpdateStats,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Op::Ping => "ping",
            Op::LoadScene => "load_scene",
            Op::GenScene => "gen_scene",
            Op::Verify => "verify",
            Op::Solve => "solve",
            Op::ScoreQuestioner => "score_questioner",
            Op::ScoreSolver => "score_solver",
            Op::Feasible => "feasible",
            Op::SampleTask => "sample_task",
            Op::UpdateStats => "update_stats",
        }
    }

    pub fn parse(s: &str) -> Option<Op> {
        Op::ALL.into_iter().find(|op| op.as_str() == s)
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A request as it appears on the wire. `op` stays a string so that an
/// unknown op can still be answered with the caller's id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: String,
    pub op: String,
    #[serde(default)]
    pub payload: Value,
}

impl Request {
    pub fn new(id: impl Into<String>, call: &Call) -> Self {
        let (op, payload) = call.to_parts();
        Request {
            id: id.into(),
            op: op.as_str().to_string(),
            payload,
        }
    }

    /// Checks the envelope and decodes the payload for its op.
    pub fn decode(&self) -> Result<Call, ErrorBody> {
        if self.id.is_empty() {
            return Err(ErrorBody::new(ErrorCode::BadRequest, "id must be non-empty"));
        }
        let op = Op::parse(&self.op)
            .ok_or_else(|| ErrorBody::new(ErrorCode::UnknownOp, format!("unknown op '{}'", self.op)))?;
        Call::from_parts(op, self.payload.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadScenePayload {
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenScenePayload {
    pub seed: u64,
    #[serde(default)]
    pub spec: GeneratorSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyPayload {
    pub task: String,
    pub context: ContextRef,
    pub question: QuestionInput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolvePayload {
    pub task: String,
    pub context: ContextRef,
    pub params: Params,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreQuestionerPayload {
    pub output: String,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreSolverPayload {
    pub response: String,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeasiblePayload {
    pub context: ContextRef,
}

/// Either an explicit feasible set or a context to derive it from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleTaskPayload {
    pub session: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feasible: Option<BTreeSet<TaskType>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<ContextRef>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UpdateStatsPayload {
    pub session: String,
    pub task: TaskType,
    pub accuracy: f64,
    #[serde(default = "one")]
    pub weight: f64,
    #[serde(default)]
    pub retained_invalid: bool,
}

/// A decoded request.
#[derive(Debug, Clone, PartialEq)]
pub enum Call {
    Ping,
    LoadScene(LoadScenePayload),
    GenScene(GenScenePayload),
    Verify(VerifyPayload),
    Solve(SolvePayload),
    ScoreQuestioner(ScoreQuestionerPayload),
    ScoreSolver(ScoreSolverPayload),
    Feasible(FeasiblePayload),
    SampleTask(SampleTaskPayload),
    UpdateStats(UpdateStatsPayload),
}

fn payload<T: DeserializeOwned>(op: Op, v: Value) -> Result<T, ErrorBody> {
    serde_json::from_value(v).map_err(|e| ErrorBody::new(ErrorCode::InvalidPayload, format!("{op}: {e}")))
}

impl Call {
    pub fn op(&self) -> Op {
        match self {
            Call::Ping => Op::Ping,
            Call::LoadScene(_) => Op::LoadScene,
            Call::GenScene(_) => Op::GenScene,
            Call::Verify(_) => Op::Verify,
            Call::Solve(_) => Op::Solve,
            Call::ScoreQuestioner(_) => Op::ScoreQuestioner,
            Call::ScoreSolver(_) => Op::ScoreSolver,
            Call::Feasible(_) => Op::Feasible,
            Call::SampleTask(_) => Op::SampleTask,
            Call::UpdateStats(_) => Op::UpdateStats,
        }
    }

    pub fn from_parts(op: Op, v: Value) -> Result<Call, ErrorBody> {
        Ok(match op {
            Op::Ping => match v {
                Value::Null => Call::Ping,
                Value::Object(m) if m.is_empty() => Call::Ping,
                _ => return Err(ErrorBody::new(ErrorCode::InvalidPayload, "ping takes no payload")),
            },
            Op::LoadScene => Call::LoadScene(payload(op, v)?),
            Op::GenScene => Call::GenScene(payload(op, v)?),
            Op::Verify => Call::Verify(payload(op, v)?),
            Op::Solve => Call::Solve(payload(op, v)?),
            Op::ScoreQuestioner => Call::ScoreQuestioner(payload(op, v)?),
            Op::ScoreSolver => Call::ScoreSolver(payload(op, v)?),
            Op::Feasible => Call::Feasible(payload(op, v)?),
            Op::SampleTask => Call::SampleTask(payload(op, v)?),
            Op::UpdateStats => Call::UpdateStats(payload(op, v)?),
        })
    }

    pub fn to_parts(&self) -> (Op, Value) {
        let v = match self {
            Call::Ping => Ok(Value::Object(Default::default())),
            Call::LoadScene(p) => serde_json::to_value(p),
            Call::GenScene(p) => serde_json::to_value(p),
            Call::Verify(p) => serde_json::to_value(p),
            Call::Solve(p) => serde_json::to_value(p),
            Call::ScoreQuestioner(p) => serde_json::to_value(p),
            Call::ScoreSolver(p) => serde_json::to_value(p),
            Call::Feasible(p) => serde_json::to_value(p),
            Call::SampleTask(p) => serde_json::to_value(p),
            Call::UpdateStats(p) => serde_json::to_value(p),
        };
        (self.op(), v.expect("payload records serialize"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    /// Line is not JSON or lacks the envelope fields.
    BadRequest,
    UnknownOp,
    InvalidPayload,
    UnknownScene,
    /// The question did not pass verification, so there is nothing to solve.
    InvalidQuestion,
    Scheduler,
    Io,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: ErrorCode,
    pub message: String,
}

impl ErrorBody {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        ErrorBody {
            code,
            message: message.into(),
        }
    }
}

impl fmt::Display for ErrorBody {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}: {}", self.code, self.message)
    }
}

impl std::error::Error for ErrorBody {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub id: String,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorBody>,
}

impl Response {
    pub fn success(id: impl Into<String>, result: Value) -> Self {
        Response {
            id: id.into(),
            ok: true,
            result: Some(result),
            error: None,
        }
    }

    pub fn failure(id: impl Into<String>, error: ErrorBody) -> Self {
        Response {
            id: id.into(),
            ok: false,
            result: None,
            error: Some(error),
        }
    }

    /// Canonical single-line encoding (sorted keys, 9 significant digits).
    pub fn to_line(&self) -> String {
        crate::wire::to_canonical_string(self).expect("responses serialize")
    }

    pub fn into_result<T: DeserializeOwned>(self) -> Result<T, ErrorBody> {
        match (self.ok, self.result, self.error) {
            (true, Some(v), _) => serde_json::from_value(v)
                .map_err(|e| ErrorBody::new(ErrorCode::Internal, format!("unexpected result shape: {e}"))),
            (_, _, Some(e)) => Err(e),
            _ => Err(ErrorBody::new(ErrorCode::Internal, "response carries neither result nor error")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PingResult {
    pub engine: String,
    pub version: String,
    pub protocol: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneInfo {
    pub scene_id: String,
    pub instances: usize,
    pub frames: Vec<u32>,
    pub labels: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub room_area: Option<f64>,
}

impl SceneInfo {
    pub fn of(scene: &Scene) -> Self {
        SceneInfo {
            scene_id: scene.scene_id.clone(),
            instances: scene.instances().len(),
            frames: scene.frames().iter().map(|f| f.frame_id).collect(),
            labels: scene.instances().iter().map(|i| i.label.clone()).collect(),
            room_area: scene.metadata.room_area,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub ground_truth: GroundTruth,
    pub intermediates: Vec<Intermediate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibleResult {
    pub tasks: BTreeSet<TaskType>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleTaskResult {
    pub task: TaskType,
    pub distribution: Vec<(TaskType, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateStatsResult {
    pub task: TaskType,
    pub stats: TaskStats,
    pub smoothed_accuracy: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn decode_envelope() {
        let r: Request = serde_json::from_value(json!({"id": "a", "op": "ping"})).unwrap();
        assert_eq!(r.decode().unwrap(), Call::Ping);
        let r: Request = serde_json::from_value(json!({"id": "", "op": "ping"})).unwrap();
        assert_eq!(r.decode().unwrap_err().code, ErrorCode::BadRequest);
        let r: Request = serde_json::from_value(json!({"id": "a", "op": "fly"})).unwrap();
        assert_eq!(r.decode().unwrap_err().code, ErrorCode::UnknownOp);
        let r: Request = serde_json::from_value(json!({"id": "a", "op": "feasible", "payload": {}})).unwrap();
        assert_eq!(r.decode().unwrap_err().code, ErrorCode::InvalidPayload);
    }

    #[test]
    fn calls_round_trip_through_requests() {
        let calls = [
            Call::Ping,
            Call::GenScene(GenScenePayload {
                seed: 3,
                spec: GeneratorSpec::default(),
            }),
            Call::Feasible(FeasiblePayload {
                context: ContextRef::pair("s", 1, 2),
            }),
            Call::UpdateStats(UpdateStatsPayload {
                session: "x".into(),
                task: TaskType::DepthOrder,
                accuracy: 0.5,
                weight: 2.0,
                retained_invalid: false,
            }),
        ];
        for c in calls {
            let req = Request::new("r1", &c);
            let line = serde_json::to_string(&req).unwrap();
            let back: Request = serde_json::from_str(&line).unwrap();
            assert_eq!(back.decode().unwrap(), c);
        }
    }

    #[test]
    fn update_defaults() {
        let p: UpdateStatsPayload =
            serde_json::from_value(json!({"session": "s", "task": "room_size", "accuracy": 1.0})).unwrap();
        assert_eq!((p.weight, p.retained_invalid), (1.0, false));
    }

    #[test]
    fn response_lines_are_canonical() {
        let r = Response::success("q", json!({"b": 0.1234567891234, "a": 1}));
        assert_eq!(r.to_line(), r#"{"id":"q","ok":true,"result":{"a":1,"b":0.123456789}}"#);
        let e = Response::failure("", ErrorBody::new(ErrorCode::BadRequest, "x"));
        assert_eq!(e.into_result::<Value>().unwrap_err().code, ErrorCode::BadRequest);
    }
}
