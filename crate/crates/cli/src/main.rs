use std::collections::BTreeSet;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use spatial_env::harness::{replay_log, run_selfplay_with, EnvPool, HarnessConfig, LogRecord};
use spatial_env::pipeline::{QuestionInput, Verdict};
use spatial_env::protocol::{
    Call, GenScenePayload, LoadScenePayload, SceneInfo, ScoreQuestionerPayload, ScoreSolverPayload, SolvePayload,
    SolveResult, VerifyPayload,
};
use spatial_env::question::Params;
use spatial_env::rewards::parse_questioner_output;
use spatial_env::scene::{generate_synthetic_scene, save_scene, GeneratorSpec, MANIFEST_FILE};
use spatial_env::scheduler::{SchedulerConfig, SchedulerState};
use spatial_env::tasks::{ContextRef, TaskType};
use spatial_env::wire::to_canonical_string;
use spatial_env_client::EnvClient;
use spatial_env_service::{judge_from_env, Service, ServiceConfig};

#[derive(Parser)]
#[command(name = "spatial-env", version, about = "Verifiable 3D spatial question environment")]
struct Cli {
    /// Send environment calls to a service at HOST:PORT instead of running
    /// them in-process.
    #[arg(long, global = true, value_name = "ADDR")]
    connect: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene.
    GenScene(GenSceneArgs),
    /// Verify a file of questions, writing one verdict per line.
    Verify(VerifyArgs),
    /// Compute the ground truth of one question.
    Solve(SolveArgs),
    /// Score a Questioner output or a Solver response against a verdict.
    #[command(subcommand)]
    Score(ScoreCommand),
    /// Run scripted self-play and write an iteration log.
    Selfplay(SelfplayArgs),
    /// Re-verify and re-score a self-play log.
    Replay(ReplayArgs),
    /// Serve the line protocol on standard streams, TCP or HTTP.
    Serve(ServeArgs),
    /// Inspect or reset a scheduler snapshot file.
    #[command(subcommand)]
    Sched(SchedCommand),
}

#[derive(Args)]
struct GenSceneArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Generator settings as JSON.
    #[arg(long, value_name = "FILE")]
    spec: Option<PathBuf>,
    /// Write the scene to this directory (in-process only).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Scene directory, or a directory of scene directories. Repeatable.
    #[arg(long = "scene", value_name = "DIR", required = true)]
    scenes: Vec<PathBuf>,
    /// JSON lines with `task`, `context` and `question`; `-` for stdin.
    #[arg(long, value_name = "FILE")]
    questions: PathBuf,
    /// Verdict output; stdout when omitted.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long, value_name = "DIR")]
    scene: PathBuf,
    #[arg(long)]
    task: String,
    /// Comma-separated frame ids; omit for a whole-scene question.
    #[arg(long, value_delimiter = ',')]
    frames: Vec<u32>,
    /// Role map as JSON, e.g. '{"target":"bed"}'.
    #[arg(long, conflicts_with = "question", required_unless_present = "question")]
    params: Option<String>,
    /// Question text.
    #[arg(long)]
    question: Option<String>,
}

#[derive(Subcommand)]
enum ScoreCommand {
    Questioner {
        #[arg(long, value_name = "FILE")]
        verdict: PathBuf,
        /// Output text, or @FILE.
        #[arg(long)]
        output: String,
    },
    Solver {
        #[arg(long, value_name = "FILE")]
        verdict: PathBuf,
        /// Response text, or @FILE.
        #[arg(long)]
        response: String,
    },
}

#[derive(Args)]
struct SelfplayArgs {
    /// Harness configuration JSON; defaults apply when omitted.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    iters: usize,
    #[arg(long, value_name = "FILE", default_value = "selfplay.jsonl")]
    log: PathBuf,
    /// Directory for periodic scheduler snapshots.
    #[arg(long, value_name = "DIR")]
    snapshots: Option<PathBuf>,
    /// Save the generated scenes here, one directory per scene.
    #[arg(long, value_name = "DIR")]
    scenes_out: Option<PathBuf>,
    /// Write every verified question with its expected verdict.
    #[arg(long, value_name = "FILE")]
    questions_out: Option<PathBuf>,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long, value_name = "FILE")]
    log: PathBuf,
}

#[derive(Args)]
#[group(multiple = false)]
struct Listen {
    /// Serve newline-delimited JSON on stdin/stdout (default).
    #[arg(long)]
    stdio: bool,
    #[arg(long, value_name = "ADDR")]
    tcp: Option<SocketAddr>,
    #[arg(long, value_name = "ADDR")]
    http: Option<SocketAddr>,
}

#[derive(Args)]
struct ServeArgs {
    #[command(flatten)]
    listen: Listen,
    /// Base seed for per-session task sampling.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Persist session statistics as `<DIR>/<session>.tsv`.
    #[arg(long, value_name = "DIR")]
    sessions_dir: Option<PathBuf>,
    /// Visibility threshold for grounded pools (overrides the environment).
    #[arg(long)]
    v_min: Option<f64>,
    /// Scene directories to preload. Repeatable.
    #[arg(long = "scene", value_name = "DIR")]
    scenes: Vec<PathBuf>,
    /// Synthetic scenes to preload. Repeatable.
    #[arg(long = "gen-seed", value_name = "SEED")]
    gen_seeds: Vec<u64>,
}

#[derive(Subcommand)]
enum SchedCommand {
    /// Print statistics and sampling probabilities.
    Show {
        #[arg(long, value_name = "FILE")]
        file: PathBuf,
        /// Restrict probabilities to these tasks; all tasks when omitted.
        #[arg(long, value_delimiter = ',')]
        feasible: Vec<String>,
    },
    /// Overwrite the file with empty statistics.
    Reset {
        #[arg(long, value_name = "FILE")]
        file: PathBuf,
    },
}

/// A command-line combination that parses but cannot run; exits with 2.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

enum Backend {
    Local(Service),
    Remote(EnvClient),
}

impl Backend {
    fn open(connect: Option<&str>) -> Result<Self> {
        Ok(match connect {
            Some(addr) => Backend::Remote(EnvClient::connect(addr).with_context(|| format!("connecting to {addr}"))?),
            None => {
                let cfg = ServiceConfig::from_env().map_err(|e| anyhow!(e))?;
                Backend::Local(Service::with_judge(cfg, judge_from_env()))
            }
        })
    }

    fn call<T: DeserializeOwned>(&mut self, call: Call) -> Result<T> {
        match self {
            Backend::Local(s) => {
                let v = s.dispatch(call).map_err(|e| anyhow!("{e}"))?;
                Ok(serde_json::from_value(v)?)
            }
            Backend::Remote(c) => Ok(c.call(&call)?),
        }
    }

    fn load_scene(&mut self, path: &Path) -> Result<SceneInfo> {
        let path = std::fs::canonicalize(path).with_context(|| format!("scene {}", path.display()))?;
        self.call(Call::LoadScene(LoadScenePayload { path }))
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// `@path` reads the file; anything else is taken literally.
fn text_arg(s: &str) -> Result<String> {
    match s.strip_prefix('@') {
        Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading {p}")),
        None => Ok(s.to_string()),
    }
}

fn print_canonical<T: serde::Serialize>(v: &T) -> Result<()> {
    println!("{}", to_canonical_string(v)?);
    Ok(())
}

/// A scene directory itself, or every scene directory directly inside it.
fn scene_dirs(path: &Path) -> Result<Vec<PathBuf>> {
    if path.join(MANIFEST_FILE).is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(path)
        .with_context(|| format!("reading {}", path.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(MANIFEST_FILE).is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        bail!("{} holds no scene", path.display());
    }
    Ok(dirs)
}

fn gen_scene(args: GenSceneArgs, connect: Option<&str>) -> Result<()> {
    let spec: GeneratorSpec = match &args.spec {
        Some(p) => read_json(p)?,
        None => GeneratorSpec::default(),
    };
    if let Some(out) = &args.out {
        if connect.is_some() {
            return Err(usage("--out writes locally and cannot be combined with --connect"));
        }
        let scene = generate_synthetic_scene(&spec, args.seed)?;
        save_scene(&scene, out)?;
        return print_canonical(&SceneInfo::of(&scene));
    }
    let info: SceneInfo = Backend::open(connect)?.call(Call::GenScene(GenScenePayload { seed: args.seed, spec }))?;
    print_canonical(&info)
}

#[derive(Deserialize)]
struct QuestionLine {
    task: String,
    context: ContextRef,
    question: QuestionInput,
}

fn open_input(path: &Path) -> Result<Box<dyn BufRead>> {
    Ok(if path == Path::new("-") {
        Box::new(BufReader::new(io::stdin()))
    } else {
        Box::new(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
    })
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn verify(args: VerifyArgs, connect: Option<&str>) -> Result<()> {
    let mut backend = Backend::open(connect)?;
    for root in &args.scenes {
        for dir in scene_dirs(root)? {
            backend.load_scene(&dir)?;
        }
    }
    let input = open_input(&args.questions)?;
    let mut out = open_output(args.out.as_deref())?;
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let q: QuestionLine = serde_json::from_str(&line).with_context(|| format!("question line {}", i + 1))?;
        let verdict: Verdict = backend.call(Call::Verify(VerifyPayload {
            task: q.task,
            context: q.context,
            question: q.question,
        }))?;
        writeln!(out, "{}", to_canonical_string(&verdict)?)?;
    }
    out.flush()?;
    Ok(())
}

fn solve(args: SolveArgs, connect: Option<&str>) -> Result<()> {
    let mut backend = Backend::open(connect)?;
    let info = backend.load_scene(&args.scene)?;
    let context = ContextRef {
        scene_id: info.scene_id,
        frames: args.frames,
    };
    let result: SolveResult = match (&args.params, &args.question) {
        (Some(p), _) => {
            let params: Params = serde_json::from_str(p).context("--params is not a role map")?;
            backend.call(Call::Solve(SolvePayload {
                task: args.task,
                context,
                params,
            }))?
        }
        (None, Some(q)) => {
            let v: Verdict = backend.call(Call::Verify(VerifyPayload {
                task: args.task,
                context,
                question: QuestionInput::Text(q.clone()),
            }))?;
            match (v.ground_truth, v.failure) {
                (Some(ground_truth), _) => SolveResult {
                    ground_truth,
                    intermediates: v.intermediates,
                },
                (None, Some(f)) => bail!("question rejected: {} at stage {}: {}", f.code, f.stage, f.reason),
                (None, None) => bail!("verdict carries neither ground truth nor failure"),
            }
        }
        (None, None) => return Err(usage("one of --params or --question is required")),
    };
    print_canonical(&result)
}

fn score(cmd: ScoreCommand, connect: Option<&str>) -> Result<()> {
    let mut backend = Backend::open(connect)?;
    let v = match cmd {
        ScoreCommand::Questioner { verdict, output } => {
            let payload = ScoreQuestionerPayload {
                output: text_arg(&output)?,
                verdict: read_json(&verdict)?,
            };
            backend.call::<serde_json::Value>(Call::ScoreQuestioner(payload))?
        }
        ScoreCommand::Solver { verdict, response } => {
            let payload = ScoreSolverPayload {
                response: text_arg(&response)?,
                verdict: read_json(&verdict)?,
            };
            backend.call::<serde_json::Value>(Call::ScoreSolver(payload))?
        }
    };
    print_canonical(&v)
}

/// Extracts each representative question of a log as a verify input line,
/// with the logged verdict under `expected`.
fn write_questions(log: &Path, out: &Path) -> Result<usize> {
    let mut w = BufWriter::new(File::create(out)?);
    let mut n = 0;
    for line in BufReader::new(File::open(log)?).lines() {
        let LogRecord::Iteration(it) = serde_json::from_str(&line?)? else {
            continue;
        };
        for rep in &it.representatives {
            let output = &it.candidates[rep.index].output;
            let Some(question) = parse_questioner_output(output).question else {
                continue;
            };
            let record = serde_json::json!({
                "id": format!("it{}-c{}", it.iteration, rep.index),
                "task": it.task,
                "context": it.context,
                "question": {"text": question},
                "expected": rep.verdict,
            });
            writeln!(w, "{}", to_canonical_string(&record)?)?;
            n += 1;
        }
    }
    w.flush()?;
    Ok(n)
}

fn selfplay(args: SelfplayArgs, connect: Option<&str>) -> Result<()> {
    if connect.is_some() {
        return Err(usage("selfplay runs its scripted agents in-process; drop --connect"));
    }
    let cfg = match &args.config {
        Some(p) => HarnessConfig::load(p)?,
        None => HarnessConfig::default(),
    };
    if let Some(d) = &args.snapshots {
        std::fs::create_dir_all(d)?;
    }
    let judge = judge_from_env();
    let summary = {
        let mut log = BufWriter::new(File::create(&args.log).with_context(|| format!("creating {}", args.log.display()))?);
        let s = run_selfplay_with(&cfg, args.seed, args.iters, &mut log, args.snapshots.as_deref(), judge.as_ref())?;
        log.flush()?;
        s
    };
    if let Some(dir) = &args.scenes_out {
        for loaded in EnvPool::from_config(&cfg)?.scenes {
            save_scene(&loaded.scene, dir.join(&loaded.scene.scene_id))?;
        }
    }
    let questions = match &args.questions_out {
        Some(p) => Some(write_questions(&args.log, p)?),
        None => None,
    };
    print_canonical(&serde_json::json!({
        "seed": summary.seed,
        "iterations": summary.iterations,
        "log_sha256": summary.log_sha256,
        "task_frequency": summary.task_frequency,
        "final_stats": summary.final_stats,
        "questions_written": questions,
    }))
}

fn replay(args: ReplayArgs) -> Result<()> {
    let reader = BufReader::new(File::open(&args.log).with_context(|| format!("opening {}", args.log.display()))?);
    let report = replay_log(reader, judge_from_env().as_ref())?;
    print_canonical(&report)?;
    if !report.ok() {
        bail!("{} mismatch(es) on replay", report.mismatches.len());
    }
    Ok(())
}

fn serve(args: ServeArgs, connect: Option<&str>) -> Result<()> {
    if connect.is_some() {
        return Err(usage("serve cannot be combined with --connect"));
    }
    let mut cfg = ServiceConfig::from_env().map_err(|e| anyhow!(e))?;
    cfg.seed = args.seed;
    if let Some(v) = args.v_min {
        cfg.v_min = v;
    }
    cfg.validate().map_err(|e| usage(e))?;
    if let Some(d) = &args.sessions_dir {
        std::fs::create_dir_all(d)?;
        cfg.sessions_dir = Some(d.clone());
    }
    let service = Service::with_judge(cfg, judge_from_env());
    for root in &args.scenes {
        for dir in scene_dirs(root)? {
            service
                .dispatch(Call::LoadScene(LoadScenePayload { path: dir.clone() }))
                .map_err(|e| anyhow!("{}: {e}", dir.display()))?;
        }
    }
    for seed in &args.gen_seeds {
        service
            .dispatch(Call::GenScene(GenScenePayload {
                seed: *seed,
                spec: GeneratorSpec::default(),
            }))
            .map_err(|e| anyhow!("gen seed {seed}: {e}"))?;
    }
    let service = Arc::new(service);
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let announce = |addr: SocketAddr| -> io::Result<()> {
            let mut out = io::stdout().lock();
            writeln!(out, "{}", serde_json::json!({ "listening": addr.to_string() }))?;
            out.flush()
        };
        if let Some(addr) = args.listen.tcp {
            let listener = tokio::net::TcpListener::bind(addr).await?;
            announce(listener.local_addr()?)?;
            spatial_env_service::serve_tcp(service, listener, spatial_env_service::shutdown_signal()).await
        } else if let Some(addr) = args.listen.http {
            let listener = tokio::net::TcpListener::bind(addr).await?;
            announce(listener.local_addr()?)?;
            spatial_env_service::serve_http(service, listener, spatial_env_service::shutdown_signal()).await
        } else {
            spatial_env_service::serve_stdio(service).await
        }
    })?;
    Ok(())
}

fn sched(cmd: SchedCommand) -> Result<()> {
    match cmd {
        SchedCommand::Reset { file } => {
            SchedulerState::new().save(&file)?;
            Ok(())
        }
        SchedCommand::Show { file, feasible } => {
            let state = SchedulerState::load(&file)?;
            let cfg = SchedulerConfig::default();
            let set: BTreeSet<TaskType> = if feasible.is_empty() {
                TaskType::ALL.into_iter().collect()
            } else {
                feasible
                    .iter()
                    .map(|t| TaskType::normalize(t).ok_or_else(|| usage(format!("unknown task '{t}'"))))
                    .collect::<Result<_>>()?
            };
            let dist = state.sampling_distribution(&set, &cfg)?;
            let mut out = io::stdout().lock();
            writeln!(out, "task\tn\ts\ts_sched\tsmoothed\tp")?;
            for (t, p) in dist {
                let s = state.get(t);
                writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t{:.4}\t{:.4}",
                    t.id(),
                    s.n,
                    s.s,
                    s.s_sched,
                    cfg.smoothed_accuracy(&s),
                    p
                )?;
            }
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let connect = cli.connect.as_deref();
    match cli.command {
        Command::GenScene(a) => gen_scene(a, connect),
        Command::Verify(a) => verify(a, connect),
        Command::Solve(a) => solve(a, connect),
        Command::Score(c) => score(c, connect),
        Command::Selfplay(a) => selfplay(a, connect),
        Command::Replay(a) => replay(a),
        Command::Serve(a) => serve(a, connect),
        Command::Sched(c) => sched(c),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .init();
    // clap exits with 2 on usage errors and 0 for --help/--version.
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<io::Error>().is_some_and(|e| e.kind() == io::ErrorKind::BrokenPipe) => {
            ExitCode::SUCCESS
        }
        Err(e) if e.downcast_ref::<UsageError>().is_some() => {
            eprintln!("error: {e}\n\nFor more information, try '--help'.");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
