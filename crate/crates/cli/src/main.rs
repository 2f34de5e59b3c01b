use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use proxyhand_bench::{load_corpus, Bench};
use proxyhand_core::config::EngineConfig;
use proxyhand_core::gesture::{GestureLibrary, SynthConfig};
use proxyhand_core::interpreter::{external, Backend, ExternalBackend, ExternalConfig};
use proxyhand_core::scene::Scene;
use proxyhand_core::script::{run_script, ScriptReport, ScriptScenario};
use proxyhand_server::{read_records, replay, serve, EngineParts, ServeError, SessionConfig, Transport};

const TESTBED: &str = include_str!("../../core/fixtures/scenes/testbed.json");

const EXIT_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_BIND: u8 = 3;

#[derive(Parser)]
#[command(name = "proxyhand", version, about = "Drive a virtual hand with spoken-style commands")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Stream the hand to network clients.
    Serve(ServeArgs),
    /// Run a JSON scenario headless at simulated time and check its assertions.
    Script {
        file: PathBuf,
        #[arg(long)]
        json: bool,
        #[command(flatten)]
        assets: Assets,
    },
    /// Report interpreter and end-to-end latency over a command corpus.
    Bench {
        corpus: PathBuf,
        #[arg(long)]
        json: bool,
        /// Passes over the corpus.
        #[arg(long, default_value_t = 5)]
        rounds: usize,
        #[arg(long)]
        scene: Option<PathBuf>,
        #[command(flatten)]
        assets: Assets,
    },
}

#[derive(clap::Args)]
struct Assets {
    /// Directory of recorded gesture bundles, overriding the built-in clips.
    #[arg(long)]
    gestures: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendKind {
    Grammar,
    External,
}

#[derive(clap::Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:7878")]
    listen: SocketAddr,
    #[arg(long, default_value_t = 60.0)]
    fps: f64,
    /// tcp-jsonl or websocket.
    #[arg(long, default_value = "tcp-jsonl")]
    transport: Transport,
    /// Scene JSON; the built-in testbed if omitted.
    #[arg(long)]
    scene: Option<PathBuf>,
    #[command(flatten)]
    assets: Assets,
    /// `external` reads its endpoint and key from the environment.
    #[arg(long, value_enum, default_value = "grammar")]
    backend: BackendKind,
    #[arg(long, default_value_t = 8)]
    max_clients: usize,
    /// Append all wire traffic to this file.
    #[arg(long, conflicts_with = "replay")]
    record: Option<PathBuf>,
    /// Drive the engine from a recording instead of listening.
    #[arg(long)]
    replay: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

struct Failure {
    code: u8,
    message: String,
}

fn config_error(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        message: message.into(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Cmd::Serve(args) => run_serve(args),
        Cmd::Script { file, json, assets } => run_scenario(&file, json, &assets),
        Cmd::Bench {
            corpus,
            json,
            rounds,
            scene,
            assets,
        } => run_bench(&corpus, json, rounds, scene.as_deref(), &assets),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if !f.message.is_empty() {
                eprintln!("proxyhand: {}", f.message);
            }
            ExitCode::from(f.code)
        }
    }
}

fn library(assets: &Assets) -> Result<Arc<GestureLibrary>, Failure> {
    let synth = SynthConfig::default();
    let lib = match &assets.gestures {
        Some(dir) => GestureLibrary::with_bundles(dir, &synth)
            .map_err(|e| config_error(format!("gestures {}: {e}", dir.display())))?,
        None => GestureLibrary::builtin(&synth),
    };
    Ok(Arc::new(lib))
}

fn load_scene(path: Option<&Path>) -> Result<Scene, Failure> {
    let (doc, shown) = match path {
        Some(p) => (
            std::fs::read_to_string(p).map_err(|e| config_error(format!("scene {}: {e}", p.display())))?,
            p.display().to_string(),
        ),
        None => (TESTBED.to_owned(), "built-in testbed".to_owned()),
    };
    Scene::from_json(&doc).map_err(|e| config_error(format!("scene {shown}: {e}")))
}

fn backend(kind: BackendKind) -> Result<Backend, Failure> {
    match kind {
        BackendKind::Grammar => Ok(Backend::Grammar),
        BackendKind::External => {
            let cfg = ExternalConfig::from_env().ok_or_else(|| {
                config_error(format!("--backend external needs {} to be set", external::ENV_ENDPOINT))
            })?;
            ExternalBackend::new(cfg).map(Backend::External).map_err(config_error)
        }
    }
}

fn run_serve(args: ServeArgs) -> Result<(), Failure> {
    let parts = EngineParts {
        config: EngineConfig::default(),
        library: library(&args.assets)?,
        scene: load_scene(args.scene.as_deref())?,
        backend: backend(args.backend)?,
    };
    let session = SessionConfig {
        listen: args.listen,
        fps: args.fps,
        transport: args.transport,
        max_clients: args.max_clients,
        record: args.record,
        ..SessionConfig::default()
    };
    session.validate().map_err(|e| config_error(e.to_string()))?;

    if let Some(path) = args.replay {
        let records =
            read_records(&path).map_err(|e| config_error(format!("recording {}: {e}", path.display())))?;
        let report = replay(&records, parts, session.fps, 60_000);
        if args.json {
            let doc = serde_json::json!({
                "frames": report.frames,
                "duration_ms": report.duration_ms,
                "held": report.held,
                "feedback": report.feedback,
                "scene": report.scene.objects(),
            });
            println!("{doc}");
        } else {
            println!(
                "replayed {} inputs: {} frames, {} ms simulated, holding {}",
                records.iter().filter(|r| r.dir == proxyhand_server::Direction::In).count(),
                report.frames,
                report.duration_ms,
                report.held.as_deref().unwrap_or("nothing"),
            );
        }
        return Ok(());
    }

    let rt = tokio::runtime::Runtime::new().map_err(|e| config_error(format!("runtime: {e}")))?;
    rt.block_on(async {
        let server = serve(session, parts).await.map_err(|e| match e {
            ServeError::Bind { .. } => Failure {
                code: EXIT_BIND,
                message: e.to_string(),
            },
            other => config_error(other.to_string()),
        })?;
        println!("listening on {}", server.local_addr());
        let _ = tokio::signal::ctrl_c().await;
        log::info!("shutting down");
        server.shutdown().await;
        Ok(())
    })
}

fn run_scenario(file: &Path, json: bool, assets: &Assets) -> Result<(), Failure> {
    let scenario = ScriptScenario::load(file).map_err(|e| config_error(e.to_string()))?;
    let report = run_script(&scenario, &EngineConfig::default(), library(assets)?)
        .map_err(|e| config_error(e.to_string()))?;
    if json {
        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    } else {
        print_script(&report);
    }
    if report.passed {
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_FAILED,
            message: String::new(),
        })
    }
}

fn print_script(r: &ScriptReport) {
    println!("{}: {} ({} ms simulated, {} frames)", r.name, if r.passed { "pass" } else { "FAIL" }, r.duration_ms, r.frames);
    for c in &r.commands {
        let start = c.start_delay_ms.map_or("-".to_owned(), |d| format!("{d} ms"));
        println!("  @{:>6} ms  {:<40} interpret {:>8.1} us  start {start}", c.t_ms, c.text, c.interpret_us);
    }
    for a in &r.assertions {
        let mark = if a.passed { "ok  " } else { "FAIL" };
        let want = &a.assertion.value;
        println!("  {mark} {} {:?}: expected {want}, got {}", a.assertion.object, a.assertion.predicate, a.actual);
    }
    if r.timed_out {
        println!("  FAIL scenario did not settle before its time limit");
    }
}

fn run_bench(corpus: &Path, json: bool, rounds: usize, scene: Option<&Path>, assets: &Assets) -> Result<(), Failure> {
    let commands = load_corpus(corpus).map_err(|e| config_error(e.to_string()))?;
    let bench = Bench {
        config: EngineConfig::default(),
        library: library(assets)?,
        scene: load_scene(scene)?,
    };
    let report = bench.run(&commands, rounds);
    if json {
        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
        return Ok(());
    }
    println!("{} commands x {rounds} rounds", report.commands);
    let row = |name: &str, s: Option<&proxyhand_bench::Stats>| match s {
        Some(s) => println!(
            "  {name:<14} n={:<6} p50 {:>9.2} us  p95 {:>9.2} us  max {:>9.2} us",
            s.n, s.p50_us, s.p95_us, s.max_us
        ),
        None => println!("  {name:<14} (no commands in this tier)"),
    };
    row("keyword", report.keyword.as_ref());
    row("grammar", report.grammar.as_ref());
    row("end-to-end", Some(&report.end_to_end));
    Ok(())
}
