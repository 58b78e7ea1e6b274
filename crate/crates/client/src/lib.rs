//! Blocking client for the environment service over TCP or a child
//! process's standard streams.

use std::collections::{BTreeSet, HashMap};
use std::io::{self, BufRead, BufReader, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use serde::de::DeserializeOwned;
use thiserror::Error;

use spatial_env::pipeline::{QuestionInput, Verdict};
use spatial_env::protocol::{
    Call, ErrorBody, FeasiblePayload, FeasibleResult, GenScenePayload, LoadScenePayload, PingResult, Request,
    Response, SampleTaskPayload, SampleTaskResult, SceneInfo, ScoreQuestionerPayload, ScoreSolverPayload,
    SolvePayload, SolveResult, UpdateStatsPayload, UpdateStatsResult, VerifyPayload,
};
use spatial_env::question::Params;
use spatial_env::rewards::{QuestionerReward, SolverReward};
use spatial_env::scene::GeneratorSpec;
use spatial_env::tasks::{ContextRef, TaskType};

pub use spatial_env::protocol;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("transport: {0}")]
    Io(#[from] io::Error),
    #[error("undecodable response line: {0}")]
    Decode(String),
    #[error("service closed the stream before answering {0} request(s)")]
    Closed(usize),
    #[error("service error {0}")]
    Remote(ErrorBody),
}

enum Link {
    Tcp {
        reader: BufReader<TcpStream>,
        writer: TcpStream,
    },
    Child {
        child: Child,
        stdin: Option<ChildStdin>,
        stdout: BufReader<ChildStdout>,
    },
}

impl Link {
    fn writer(&mut self) -> &mut dyn Write {
        match self {
            Link::Tcp { writer, .. } => writer,
            Link::Child { stdin, .. } => stdin.as_mut().expect("stdin open while the client lives"),
        }
    }

    fn reader(&mut self) -> &mut dyn BufRead {
        match self {
            Link::Tcp { reader, .. } => reader,
            Link::Child { stdout, .. } => stdout,
        }
    }
}

pub struct EnvClient {
    link: Link,
    next_id: u64,
    /// Responses read while waiting for a different id.
    parked: HashMap<String, Response>,
}

impl EnvClient {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self, ClientError> {
        let writer = TcpStream::connect(addr)?;
        writer.set_nodelay(true)?;
        let reader = BufReader::new(writer.try_clone()?);
        Ok(Self::over(Link::Tcp { reader, writer }))
    }

    /// Starts `program args...` and talks to it over its standard streams.
    pub fn spawn(program: impl Into<PathBuf>, args: &[&str]) -> Result<Self, ClientError> {
        let mut child = Command::new(program.into())
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take();
        let stdout = BufReader::new(child.stdout.take().expect("stdout is piped"));
        Ok(Self::over(Link::Child { child, stdin, stdout }))
    }

    fn over(link: Link) -> Self {
        EnvClient {
            link,
            next_id: 0,
            parked: HashMap::new(),
        }
    }

    fn fresh_id(&mut self) -> String {
        self.next_id += 1;
        format!("c{}", self.next_id)
    }

    fn send(&mut self, req: &Request) -> Result<(), ClientError> {
        let mut line = serde_json::to_string(req).map_err(|e| ClientError::Decode(e.to_string()))?;
        line.push('\n');
        self.link.writer().write_all(line.as_bytes())?;
        Ok(())
    }

    fn read_one(&mut self, outstanding: usize) -> Result<Response, ClientError> {
        let mut line = String::new();
        if self.link.reader().read_line(&mut line)? == 0 {
            return Err(ClientError::Closed(outstanding));
        }
        serde_json::from_str(&line).map_err(|e| ClientError::Decode(format!("{e}: {}", line.trim_end())))
    }

    fn wait_for(&mut self, id: &str, outstanding: usize) -> Result<Response, ClientError> {
        if let Some(r) = self.parked.remove(id) {
            return Ok(r);
        }
        loop {
            let r = self.read_one(outstanding)?;
            if r.id == id {
                return Ok(r);
            }
            self.parked.insert(r.id.clone(), r);
        }
    }

    /// Sends one request and waits for its response.
    pub fn request(&mut self, call: &Call) -> Result<Response, ClientError> {
        let id = self.fresh_id();
        self.send(&Request::new(id.clone(), call))?;
        self.link.writer().flush()?;
        self.wait_for(&id, 1)
    }

    /// Writes every request before reading any response, then returns the
    /// responses in request order.
    pub fn batch(&mut self, calls: &[Call]) -> Result<Vec<Response>, ClientError> {
        let ids: Vec<String> = calls.iter().map(|_| self.fresh_id()).collect();
        for (id, call) in ids.iter().zip(calls) {
            self.send(&Request::new(id.clone(), call))?;
        }
        self.link.writer().flush()?;
        let mut out = Vec::with_capacity(ids.len());
        for (k, id) in ids.iter().enumerate() {
            out.push(self.wait_for(id, ids.len() - k)?);
        }
        Ok(out)
    }

    pub fn call<T: DeserializeOwned>(&mut self, call: &Call) -> Result<T, ClientError> {
        self.request(call)?.into_result().map_err(ClientError::Remote)
    }

    pub fn ping(&mut self) -> Result<PingResult, ClientError> {
        self.call(&Call::Ping)
    }

    pub fn load_scene(&mut self, path: impl Into<PathBuf>) -> Result<SceneInfo, ClientError> {
        self.call(&Call::LoadScene(LoadScenePayload { path: path.into() }))
    }

    pub fn gen_scene(&mut self, seed: u64, spec: GeneratorSpec) -> Result<SceneInfo, ClientError> {
        self.call(&Call::GenScene(GenScenePayload { seed, spec }))
    }

    pub fn verify(&mut self, task: &str, context: &ContextRef, question: QuestionInput) -> Result<Verdict, ClientError> {
        self.call(&Call::Verify(VerifyPayload {
            task: task.to_string(),
            context: context.clone(),
            question,
        }))
    }

    pub fn solve(&mut self, task: &str, context: &ContextRef, params: Params) -> Result<SolveResult, ClientError> {
        self.call(&Call::Solve(SolvePayload {
            task: task.to_string(),
            context: context.clone(),
            params,
        }))
    }

    pub fn score_questioner(&mut self, output: &str, verdict: &Verdict) -> Result<QuestionerReward, ClientError> {
        self.call(&Call::ScoreQuestioner(ScoreQuestionerPayload {
            output: output.to_string(),
            verdict: verdict.clone(),
        }))
    }

    pub fn score_solver(&mut self, response: &str, verdict: &Verdict) -> Result<SolverReward, ClientError> {
        self.call(&Call::ScoreSolver(ScoreSolverPayload {
            response: response.to_string(),
            verdict: verdict.clone(),
        }))
    }

    pub fn feasible(&mut self, context: &ContextRef) -> Result<BTreeSet<TaskType>, ClientError> {
        let r: FeasibleResult = self.call(&Call::Feasible(FeasiblePayload {
            context: context.clone(),
        }))?;
        Ok(r.tasks)
    }

    pub fn sample_task(
        &mut self,
        session: &str,
        feasible: Option<BTreeSet<TaskType>>,
        context: Option<ContextRef>,
    ) -> Result<SampleTaskResult, ClientError> {
        self.call(&Call::SampleTask(SampleTaskPayload {
            session: session.to_string(),
            feasible,
            context,
        }))
    }

    pub fn update_stats(
        &mut self,
        session: &str,
        task: TaskType,
        accuracy: f64,
        weight: f64,
        retained_invalid: bool,
    ) -> Result<UpdateStatsResult, ClientError> {
        self.call(&Call::UpdateStats(UpdateStatsPayload {
            session: session.to_string(),
            task,
            accuracy,
            weight,
            retained_invalid,
        }))
    }
}

impl Drop for EnvClient {
    fn drop(&mut self) {
        if let Link::Child { child, stdin, .. } = &mut self.link {
            // Closing stdin is the service's end-of-stream shutdown signal.
            drop(stdin.take());
            let _ = child.wait();
        }
    }
}
