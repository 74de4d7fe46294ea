//! `icusync`: simulator, edge agent, cloud service, query client and the
//! end-to-end demo behind one binary.

mod demo;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use clap::{Parser, Subcommand, ValueEnum};
use icusync::edge::{
    AgentConfig, EdgeAgent, FrameSource, Pacing, PgmDirSource, RunningAgent, SimSource,
    TcpTransport,
};
use icusync::fixtures;
use icusync::ingest::{self, CloudConfig, CloudError, STORE_FILE};
use icusync::query::{
    ContextRegistry, Lang, LlmAdapter, OfflineAdapter, QueryConfig, RemoteAdapter,
    REMOTE_ENDPOINT_ENV,
};
use icusync::sim::{self, render_frame_with, RenderOptions, Scenario};
use icusync::store::Store;
use serde_json::json;

/// Contexts file looked up in a data directory.
const CONTEXTS_FILE: &str = "contexts.json";
/// Written by `sim` next to the frames so `edge --frames` can stamp them.
const FRAMES_MANIFEST: &str = "frames.json";

#[derive(Parser)]
#[command(
    name = "icusync",
    version,
    about = "Bedside monitor digitization and ICU vitals query service"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render simulated monitor frames plus ground truth.
    Sim {
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 10)]
        frames: u64,
        /// Seconds of simulated time between frames.
        #[arg(long, default_value_t = 1.0)]
        period: f64,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        /// Scenario seed when no scenario file is given.
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Run the edge agent: capture, extract, structure, buffer, transmit.
    Edge {
        #[arg(long)]
        config: PathBuf,
        /// Scenario to render; a seeded default is used when neither this nor --frames is given.
        #[arg(long, conflicts_with = "frames")]
        scenario: Option<PathBuf>,
        /// Directory of PGM frames.
        #[arg(long)]
        frames: Option<PathBuf>,
        #[arg(long)]
        cycles: Option<u64>,
        /// Pace capture by the configured period instead of running flat out.
        #[arg(long)]
        realtime: bool,
        /// Seconds to wait for the buffer to drain once capture ends.
        #[arg(long, default_value_t = 10)]
        drain_timeout: u64,
        #[arg(long)]
        theta: Option<f64>,
    },
    /// Run ingest, store and the HTTP query API.
    Cloud {
        /// HTTP API address.
        #[arg(long, default_value = ingest::DEFAULT_HTTP_ADDR)]
        bind: String,
        /// Edge protocol address.
        #[arg(long, default_value = ingest::DEFAULT_WIRE_ADDR)]
        wire: String,
        /// Store log and session state; in memory when absent.
        #[arg(long)]
        data_dir: Option<PathBuf>,
        /// Patient context list (JSON); defaults to contexts.json in the data directory.
        #[arg(long)]
        contexts: Option<PathBuf>,
        /// Static dashboard files served under /ui.
        #[arg(long)]
        ui: Option<PathBuf>,
        /// Answering tunables (JSON).
        #[arg(long)]
        query_config: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = AdapterKind::Offline)]
        adapter: AdapterKind,
        /// Remote completion endpoint; falls back to the ICUSYNC_LLM_ENDPOINT variable.
        #[arg(long)]
        llm_endpoint: Option<String>,
        #[arg(long, default_value_t = 10)]
        llm_timeout: u64,
    },
    /// Ask the cloud a question.
    Query {
        #[arg(long, default_value = "http://127.0.0.1:8080")]
        server: String,
        #[arg(long, default_value = "en")]
        lang: Lang,
        /// Patient assumed when the question names none.
        #[arg(long)]
        patient: Option<String>,
        /// Clock time to answer at (ISO-8601); defaults to the newest stored sample.
        #[arg(long)]
        now: Option<String>,
        /// Print only the response JSON.
        #[arg(long)]
        json: bool,
        #[arg(required = true, num_args = 1.., trailing_var_arg = true)]
        text: Vec<String>,
    },
    /// Load the two-patient reference fixture into a data directory.
    Fixtures {
        #[arg(long)]
        data_dir: PathBuf,
    },
    /// Simulator, two edge agents and the cloud in one process, then the six reference questions.
    Demo {
        /// Seconds of simulated capture per agent, at one frame per second.
        #[arg(long, default_value_t = 120)]
        duration: u64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AdapterKind {
    Offline,
    Remote,
}

/// A failure reported as one JSON line on stderr.
#[derive(Debug)]
pub struct CliError {
    code: u8,
    kind: &'static str,
    message: String,
}

impl CliError {
    pub fn env(kind: &'static str, message: impl Into<String>) -> Self {
        CliError {
            code: 1,
            kind,
            message: message.into(),
        }
    }

    pub fn user(kind: &'static str, message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            kind,
            message: message.into(),
        }
    }

    pub fn internal(kind: &'static str, message: impl Into<String>) -> Self {
        CliError {
            code: 3,
            kind,
            message: message.into(),
        }
    }
}

impl From<CloudError> for CliError {
    fn from(e: CloudError) -> Self {
        match e {
            CloudError::Bind { .. } => CliError::env("bind", e.to_string()),
            other => CliError::env("startup", other.to_string()),
        }
    }
}

/// Stdout line that ignores a closed pipe (e.g. `| head`).
macro_rules! out {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout().lock(), $($t)*);
    }};
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_env("ICUSYNC_LOG")
                .unwrap_or_else(|_| "warn".into()),
        )
        .init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!(
                "{}",
                json!({ "error": e.message, "kind": e.kind, "exit_code": e.code })
            );
            ExitCode::from(e.code)
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Sim {
            scenario,
            out_dir,
            frames,
            period,
            noise,
            seed,
        } => run_sim(scenario.as_deref(), &out_dir, frames, period, noise, seed),
        Command::Edge {
            config,
            scenario,
            frames,
            cycles,
            realtime,
            drain_timeout,
            theta,
        } => run_edge(
            &config,
            scenario.as_deref(),
            frames.as_deref(),
            cycles,
            realtime,
            drain_timeout,
            theta,
        ),
        Command::Cloud {
            bind,
            wire,
            data_dir,
            contexts,
            ui,
            query_config,
            adapter,
            llm_endpoint,
            llm_timeout,
        } => {
            let adapter: Arc<dyn LlmAdapter> = match adapter {
                AdapterKind::Offline => Arc::new(OfflineAdapter),
                AdapterKind::Remote => {
                    let endpoint = llm_endpoint
                        .or_else(|| std::env::var(REMOTE_ENDPOINT_ENV).ok())
                        .ok_or_else(|| {
                            CliError::user(
                                "config",
                                format!(
                                    "remote adapter needs --llm-endpoint or {REMOTE_ENDPOINT_ENV}"
                                ),
                            )
                        })?;
                    Arc::new(RemoteAdapter::new(
                        endpoint,
                        Duration::from_secs(llm_timeout),
                    ))
                }
            };
            let contexts_path = contexts.or_else(|| {
                data_dir
                    .as_ref()
                    .map(|d| d.join(CONTEXTS_FILE))
                    .filter(|p| p.exists())
            });
            let contexts = match contexts_path {
                Some(p) => ContextRegistry::from_json(&read_file(&p)?)
                    .map_err(|e| CliError::user("config", format!("{}: {e}", p.display())))?,
                None => ContextRegistry::new(),
            };
            let query = match query_config {
                Some(p) => serde_json::from_str::<QueryConfig>(&read_file(&p)?)
                    .map_err(|e| CliError::user("config", format!("{}: {e}", p.display())))?,
                None => QueryConfig::default(),
            };
            let handle = ingest::start(CloudConfig {
                wire_addr: wire,
                http_addr: bind,
                data_dir,
                ui_dir: ui,
                contexts,
                query,
                adapter,
            })?;
            out!(
                "{}",
                json!({ "wire": handle.wire_addr().to_string(), "http": handle.http_addr().to_string() })
            );
            handle.join();
            Ok(())
        }
        Command::Query {
            server,
            lang,
            patient,
            now,
            json,
            text,
        } => run_query(
            &server,
            lang,
            patient.as_deref(),
            now.as_deref(),
            json,
            &text.join(" "),
        ),
        Command::Fixtures { data_dir } => {
            fs::create_dir_all(&data_dir)
                .map_err(|e| CliError::env("io", format!("{}: {e}", data_dir.display())))?;
            let store = Store::open(data_dir.join(STORE_FILE))
                .map_err(|e| CliError::env("store", e.to_string()))?;
            let summary = fixtures::load_table_fixture(&store)
                .map_err(|e| CliError::env("store", e.to_string()))?;
            let contexts: Vec<_> = fixtures::table_contexts().iter().cloned().collect();
            write_file(
                &data_dir.join(CONTEXTS_FILE),
                &serde_json::to_string_pretty(&contexts).expect("contexts serialize"),
            )?;
            out!(
                "{}",
                json!({ "data_dir": data_dir, "appended": summary, "patients": store.patients().len() })
            );
            Ok(())
        }
        Command::Demo { duration, seed } => {
            if duration < 2 {
                return Err(CliError::user("args", "--duration must be at least 2"));
            }
            let report = demo::run(duration, seed)?;
            out!("{}", report.text.trim_end());
            if report.passed {
                Ok(())
            } else {
                Err(CliError::internal(
                    "demo",
                    format!("{} check(s) failed", report.failures),
                ))
            }
        }
    }
}

fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::env("io", format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::env("io", format!("{}: {e}", path.display())))
}

fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    Scenario::from_json(&read_file(path)?)
        .map_err(|e| CliError::user("scenario", format!("{}: {e}", path.display())))
}

fn run_sim(
    scenario: Option<&Path>,
    out_dir: &Path,
    frames: u64,
    period: f64,
    noise: f64,
    seed: u64,
) -> Result<(), CliError> {
    if period.is_nan() || period <= 0.0 || !(0.0..=1.0).contains(&noise) {
        return Err(CliError::user(
            "args",
            "--period must be positive and --noise within [0, 1]",
        ));
    }
    let scenario = match scenario {
        Some(p) => load_scenario(p)?,
        None => Scenario::new(seed),
    };
    let start_time = scenario.start_time;
    let mut state =
        sim::init_scenario(&scenario).map_err(|e| CliError::user("scenario", e.to_string()))?;
    fs::create_dir_all(out_dir)
        .map_err(|e| CliError::env("io", format!("{}: {e}", out_dir.display())))?;
    let mut truth = String::new();
    for k in 0..frames {
        if k > 0 {
            state = sim::step(&state, &scenario, period);
        }
        let opts = RenderOptions {
            noise_level: noise,
            noise_seed: Some(seed ^ k),
            ..RenderOptions::default()
        };
        let frame = render_frame_with(&state, &opts)
            .map_err(|e| CliError::internal("render", e.to_string()))?;
        let name = format!("frame_{k:05}.pgm");
        let path = out_dir.join(&name);
        let file = fs::File::create(&path)
            .map_err(|e| CliError::env("io", format!("{}: {e}", path.display())))?;
        frame
            .image
            .write_pgm(std::io::BufWriter::new(file))
            .map_err(|e| CliError::env("io", format!("{}: {e}", path.display())))?;
        let vitals: Vec<_> = sim::ground_truth(&state)
            .into_iter()
            .map(|(c, v, unit)| json!({ "concept": c, "value": v, "unit": unit }))
            .collect();
        truth.push_str(
            &json!({ "frame": name, "time": frame.capture_time, "vitals": vitals }).to_string(),
        );
        truth.push('\n');
    }
    write_file(&out_dir.join("truth.jsonl"), &truth)?;
    let manifest = json!({ "start_time": start_time, "period": period, "frames": frames });
    write_file(&out_dir.join(FRAMES_MANIFEST), &manifest.to_string())?;
    out!("{}", json!({ "out_dir": out_dir, "frames": frames }));
    Ok(())
}

fn run_edge(
    config: &Path,
    scenario: Option<&Path>,
    frames: Option<&Path>,
    cycles: Option<u64>,
    realtime: bool,
    drain_timeout: u64,
    theta: Option<f64>,
) -> Result<(), CliError> {
    let mut cfg = AgentConfig::from_json(&read_file(config)?)
        .map_err(|e| CliError::user("config", e.to_string()))?;
    if let Some(t) = theta {
        cfg.theta = t;
    }
    let period = cfg.capture_period;
    let source: Box<dyn FrameSource> = match (scenario, frames) {
        (_, Some(dir)) => {
            let (start, step) = match fs::read_to_string(dir.join(FRAMES_MANIFEST)) {
                Ok(text) => {
                    let m: serde_json::Value = serde_json::from_str(&text)
                        .map_err(|e| CliError::user("frames", e.to_string()))?;
                    (
                        m["start_time"].as_f64().unwrap_or(0.0),
                        m["period"].as_f64().unwrap_or(period),
                    )
                }
                Err(_) => (icusync::time::now_epoch() as f64, period),
            };
            let src = PgmDirSource::open(dir, start, step)
                .map_err(|e| CliError::env("io", format!("{}: {e}", dir.display())))?;
            if src.is_empty() {
                return Err(CliError::user(
                    "frames",
                    format!("no .pgm files in {}", dir.display()),
                ));
            }
            Box::new(src)
        }
        (Some(p), None) => Box::new(
            SimSource::new(load_scenario(p)?, period)
                .map_err(|e| CliError::user("scenario", e.to_string()))?,
        ),
        (None, None) => {
            let mut s = Scenario::new(1);
            s.patient_id = cfg.patient_id.clone();
            s.bed_id = cfg.bed_id.clone();
            Box::new(
                SimSource::new(s, period).map_err(|e| CliError::user("scenario", e.to_string()))?,
            )
        }
    };
    let transport = TcpTransport::new(cfg.cloud_address.clone());
    let agent = EdgeAgent::new(cfg).map_err(|e| CliError::user("config", e.to_string()))?;
    let pacing = if realtime {
        Pacing::RealTime
    } else {
        Pacing::Fixed(Duration::ZERO)
    };
    let running = RunningAgent::spawn(agent, source, Box::new(transport), pacing, cycles);
    while !running.capture_finished() {
        std::thread::sleep(Duration::from_millis(20));
    }
    let deadline = Instant::now() + Duration::from_secs(drain_timeout);
    while !running.buffer().is_empty() && Instant::now() < deadline {
        std::thread::sleep(Duration::from_millis(20));
    }
    let (agent, flusher, evicted) = running.stop();
    let pending = agent.buffer().len();
    out!(
        "{}",
        json!({
            "agent_id": agent.config().agent_id,
            "stats": agent.stats(),
            "last_acked_seq": flusher.last_acked(),
            "pending": pending,
            "evicted": evicted,
            "rejected": flusher.rejected(),
        })
    );
    if pending > 0 {
        return Err(CliError::env(
            "undelivered",
            format!(
                "{pending} bundle(s) not delivered to {}",
                agent.config().cloud_address
            ),
        ));
    }
    Ok(())
}

fn run_query(
    server: &str,
    lang: Lang,
    patient: Option<&str>,
    now: Option<&str>,
    as_json: bool,
    text: &str,
) -> Result<(), CliError> {
    let mut body = json!({ "text": text, "lang": lang });
    if let Some(p) = patient {
        body["patient_id"] = json!(p);
    }
    if let Some(n) = now {
        body["now"] = json!(n);
    }
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(Duration::from_secs(30)))
        .build()
        .into();
    let url = format!("{}/query", server.trim_end_matches('/'));
    let mut resp = agent
        .post(&url)
        .send_json(&body)
        .map_err(|e| CliError::env("connect", format!("{url}: {e}")))?;
    let status = resp.status().as_u16();
    let reply: serde_json::Value = resp
        .body_mut()
        .read_json()
        .map_err(|e| CliError::env("response", format!("{url}: {e}")))?;
    if status != 200 {
        let message = reply["error"]
            .as_str()
            .unwrap_or("request failed")
            .to_string();
        return Err(match status {
            400..=499 => CliError::user("query", message),
            _ => CliError::internal("server", message),
        });
    }
    if as_json {
        out!("{}", serde_json::to_string_pretty(&reply).expect("json"));
    } else {
        out!("{}\n", reply["text"].as_str().unwrap_or_default());
        out!(
            "{}",
            serde_json::to_string_pretty(&reply["answer"]).expect("json")
        );
    }
    Ok(())
}
