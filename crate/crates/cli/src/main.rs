//! `hasod`: run adaptive-design sessions from files or against the service,
//! run the benchmark, or start the service.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hasod_client::{Client, ClientError};
use hasod_core::api::{CreateSessionRequest, StatusView};
use hasod_core::bench::{
    aggregate_report, make_scenario, run_benchmark, scenarios_from_json, Method, ScenarioTruth,
    SCENARIO_NAMES,
};
use hasod_core::session::{
    create_session, parse_responses_csv, write_atomic, PendingRun, SessionConfig, SessionState,
};
use hasod_core::Error;
use serde::Serialize;

const SESSIONS_DIR_ENV: &str = "HASOD_SESSIONS_DIR";

#[derive(Parser)]
#[command(name = "hasod", version, about = "Adaptive screening-then-optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Remote {
    /// Service root URL; `--session` is then a session id instead of a file.
    #[arg(long, value_name = "URL")]
    server: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Create a session and write its first batch of runs as CSV.
    New {
        #[arg(long, value_name = "K")]
        factors: usize,
        #[arg(long, value_name = "S")]
        seed: u64,
        /// Session file. With --server, the batch CSV path instead (optional).
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        #[command(flatten)]
        remote: Remote,
    },
    /// Print the pending runs as CSV.
    Propose {
        #[arg(long, value_name = "FILE")]
        session: String,
        #[command(flatten)]
        remote: Remote,
    },
    /// Record responses from a `run_id,y` CSV and print the new phase.
    Ingest {
        #[arg(long, value_name = "FILE")]
        session: String,
        #[arg(long, value_name = "CSV")]
        responses: PathBuf,
        #[command(flatten)]
        remote: Remote,
    },
    /// Print the phase and classification summary as JSON.
    Status {
        #[arg(long, value_name = "FILE")]
        session: String,
        #[command(flatten)]
        remote: Remote,
    },
    /// Print the final result as JSON.
    Report {
        #[arg(long, value_name = "FILE")]
        session: String,
        #[command(flatten)]
        remote: Remote,
    },
    /// Run seeded replications and write results.csv and report.md.
    Bench {
        /// `all` or a comma-separated list of scenario names.
        #[arg(long, default_value = "all")]
        scenarios: String,
        /// `all` or a comma-separated list of methods.
        #[arg(long, default_value = "all")]
        methods: String,
        #[arg(long, default_value_t = 10)]
        reps: usize,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// JSON list of scenarios; entries replace built-ins of the same name.
        #[arg(long, value_name = "FILE")]
        scenario_file: Option<PathBuf>,
    },
    /// Serve the HTTP API on the loopback interface.
    Serve {
        #[arg(long, default_value_t = hasod_service::DEFAULT_PORT)]
        port: u16,
        /// Defaults to $HASOD_SESSIONS_DIR, then ./sessions.
        #[arg(long, value_name = "D")]
        sessions_dir: Option<PathBuf>,
    },
}

enum Failure {
    Usage(String),
    Domain { name: String, message: String },
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Domain {
            name: e.name().to_string(),
            message: e.to_string(),
        }
    }
}

impl From<ClientError> for Failure {
    fn from(e: ClientError) -> Self {
        Failure::Domain {
            name: e.name().to_string(),
            message: e.to_string(),
        }
    }
}

type Outcome = Result<(), Failure>;

fn runtime() -> Result<tokio::runtime::Runtime, Failure> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Error::Io(e.to_string()).into())
}

fn print_json<T: Serialize>(v: &T) -> Outcome {
    let text = serde_json::to_string_pretty(v).map_err(Error::from)?;
    println!("{text}");
    Ok(())
}

fn pending_csv(k: usize, runs: &[PendingRun]) -> String {
    let mut out = String::from("run_id");
    for i in 1..=k {
        out.push_str(&format!(",f{i}"));
    }
    out.push('\n');
    for r in runs {
        out.push_str(&r.row_id.to_string());
        for v in &r.levels {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

/// `session.json` → `session.batch.csv`, next to the session file.
fn batch_path(session: &Path) -> PathBuf {
    let stem = session.file_stem().map_or_else(|| "session".into(), |s| s.to_string_lossy().into_owned());
    session.with_file_name(format!("{stem}.batch.csv"))
}

fn read_responses(path: &Path) -> Result<Vec<hasod_core::session::Response>, Failure> {
    let text = std::fs::read_to_string(path).map_err(Error::from)?;
    parse_responses_csv(&text).map_err(|e| match e {
        Error::Parse(m) => Failure::Usage(format!("malformed responses CSV {}: {m}", path.display())),
        other => other.into(),
    })
}

fn cmd_new(factors: usize, seed: u64, out: Option<PathBuf>, remote: Remote) -> Outcome {
    if let Some(url) = remote.server {
        let client = Client::new(url);
        let rt = runtime()?;
        let summary = rt.block_on(client.create_session(&CreateSessionRequest::new(factors, seed)))?;
        println!("{}", summary.id);
        if let Some(path) = out {
            let runs = rt.block_on(client.batch(&summary.id))?;
            write_atomic(&path, pending_csv(factors, &runs).as_bytes())?;
            println!("{}", path.display());
        }
        return Ok(());
    }
    let out = out.ok_or_else(|| Failure::Usage("new: --out FILE is required without --server".into()))?;
    if out.exists() {
        return Err(Error::Io(format!("{} already exists", out.display())).into());
    }
    let state = create_session(SessionConfig::new(factors, seed))?;
    state.save(&out)?;
    let csv = batch_path(&out);
    write_atomic(&csv, state.batch_csv()?.as_bytes())?;
    println!("{}", csv.display());
    Ok(())
}

/// Loads a session from a file, or fetches it from the service.
fn load(session: &str, remote: &Remote) -> Result<SessionState, Failure> {
    match &remote.server {
        Some(url) => Ok(runtime()?.block_on(Client::new(url.clone()).session(session))?),
        None => Ok(SessionState::load(Path::new(session))?),
    }
}

fn cmd_propose(session: &str, remote: Remote) -> Outcome {
    match remote.server {
        Some(url) => {
            let client = Client::new(url);
            let rt = runtime()?;
            let state = rt.block_on(client.session(session))?;
            let runs = rt.block_on(client.batch(session))?;
            print!("{}", pending_csv(state.k(), &runs));
        }
        None => print!("{}", SessionState::load(Path::new(session))?.batch_csv()?),
    }
    Ok(())
}

fn cmd_ingest(session: &str, responses: &Path, remote: Remote) -> Outcome {
    let batch = read_responses(responses)?;
    match remote.server {
        Some(url) => {
            let summary = runtime()?.block_on(Client::new(url).submit_responses(session, &batch))?;
            println!("{}", summary.phase);
        }
        None => {
            let path = Path::new(session);
            let next = SessionState::load(path)?.ingest_responses(&batch)?;
            next.save(path)?;
            println!("{}", next.phase);
        }
    }
    Ok(())
}

fn select_scenarios(list: &str, file: Option<&Path>) -> Result<Vec<ScenarioTruth>, Failure> {
    let mut known: Vec<ScenarioTruth> = SCENARIO_NAMES
        .iter()
        .map(|n| make_scenario(n))
        .collect::<hasod_core::Result<_>>()?;
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).map_err(Error::from)?;
        for s in scenarios_from_json(&text)? {
            match known.iter_mut().find(|k| k.name == s.name) {
                Some(slot) => *slot = s,
                None => known.push(s),
            }
        }
    }
    if list.trim() == "all" {
        return Ok(known);
    }
    list.split(',')
        .map(|name| {
            let name = name.trim();
            known
                .iter()
                .find(|s| s.name == name)
                .cloned()
                .ok_or_else(|| Error::UnknownScenario(name.to_string()).into())
        })
        .collect()
}

fn select_methods(list: &str) -> Result<Vec<Method>, Failure> {
    if list.trim() == "all" {
        return Ok(Method::ALL.to_vec());
    }
    let mut out: Vec<Method> = Vec::new();
    for name in list.split(',') {
        let m: Method = name.trim().parse()?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    Ok(out)
}

fn cmd_bench(
    scenarios: &str,
    methods: &str,
    reps: usize,
    seed: u64,
    out: &Path,
    scenario_file: Option<&Path>,
) -> Outcome {
    let scenarios = select_scenarios(scenarios, scenario_file)?;
    let methods = select_methods(methods)?;
    let reps_out = run_benchmark(&scenarios, &methods, reps, seed)?;
    let metrics: Vec<_> = reps_out.into_iter().map(|r| r.metrics).collect();
    let report = aggregate_report(&metrics)?;
    std::fs::create_dir_all(out).map_err(Error::from)?;
    let csv = out.join("results.csv");
    let md = out.join("report.md");
    write_atomic(&csv, report.to_csv().as_bytes())?;
    write_atomic(&md, report.to_markdown().as_bytes())?;
    println!("{}", csv.display());
    println!("{}", md.display());
    Ok(())
}

fn cmd_serve(port: u16, sessions_dir: Option<PathBuf>) -> Outcome {
    let dir = sessions_dir
        .or_else(|| std::env::var_os(SESSIONS_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("sessions"));
    eprintln!("serving http://127.0.0.1:{port} from {}", dir.display());
    runtime()?
        .block_on(hasod_service::run(port, dir))
        .map_err(|e| Error::Io(e.to_string()).into())
}

fn dispatch(cli: Cli) -> Outcome {
    match cli.command {
        Command::New { factors, seed, out, remote } => cmd_new(factors, seed, out, remote),
        Command::Propose { session, remote } => cmd_propose(&session, remote),
        Command::Ingest { session, responses, remote } => cmd_ingest(&session, &responses, remote),
        Command::Status { session, remote } => print_json(&StatusView::of(&load(&session, &remote)?)),
        Command::Report { session, remote } => print_json(&load(&session, &remote)?.finalize_report()?),
        Command::Bench { scenarios, methods, reps, seed, out, scenario_file } => {
            cmd_bench(&scenarios, &methods, reps, seed, &out, scenario_file.as_deref())
        }
        Command::Serve { port, sessions_dir } => cmd_serve(port, sessions_dir),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("usage error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Domain { name, message }) => {
            eprintln!("{name}: {message}");
            ExitCode::from(1)
        }
    }
}
