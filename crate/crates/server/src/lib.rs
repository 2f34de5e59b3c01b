//! Streams the proxy hand over the network.
//!
//! Clients send `command_text` and `disambiguation_reply` messages and receive
//! `scene_init` once, then `frame`s at the nominal rate plus `feedback` and
//! `scene_delta` messages. TCP carries one JSON document per line; the
//! WebSocket binding carries the same documents, one per text message.
//!
//! Threading: a single tick task owns the controller and is the only thing
//! that mutates hand or scene state. Text goes to a parser thread (the
//! interpreter may block on an external backend) which reads a published
//! copy of the scene and forwards routed commands to the tick task. Frames
//! fan out latest-wins; everything else goes through a bounded broadcast and a
//! client that falls too far behind is disconnected.

mod client;
mod hub;
mod parser;
pub mod record;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::atomic::AtomicU64;
use std::sync::{Arc, RwLock};
use std::time::Instant;

use proxyhand_core::config::EngineConfig;
use proxyhand_core::controller::Controller;
use proxyhand_core::gesture::GestureLibrary;
use proxyhand_core::interpreter::{Backend, Interpreter};
use proxyhand_core::scene::Scene;
use tokio::net::TcpListener;
use tokio::sync::{broadcast, mpsc, watch, Semaphore};
use tokio::task::JoinHandle;

pub use record::{read_records, replay, Direction, Record, ReplayReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transport {
    TcpJsonl,
    WebSocket,
}

impl FromStr for Transport {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tcp-jsonl" | "tcp" | "jsonl" => Ok(Transport::TcpJsonl),
            "websocket" | "ws" => Ok(Transport::WebSocket),
            other => Err(format!("unknown transport `{other}` (expected tcp-jsonl or websocket)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SessionConfig {
    pub listen: SocketAddr,
    pub fps: f64,
    pub transport: Transport,
    pub max_clients: usize,
    /// Append every wire message here.
    pub record: Option<PathBuf>,
    /// Reliable messages a client may fall behind by before it is dropped.
    pub reliable_capacity: usize,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            listen: SocketAddr::from(([127, 0, 0, 1], 7878)),
            fps: 60.0,
            transport: Transport::TcpJsonl,
            max_clients: 8,
            record: None,
            reliable_capacity: 1024,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), ServeError> {
        if !(10.0..=120.0).contains(&self.fps) {
            return Err(ServeError::Config(format!("fps must be within 10..=120, got {}", self.fps)));
        }
        if self.max_clients == 0 {
            return Err(ServeError::Config("max clients must be at least 1".into()));
        }
        if self.reliable_capacity == 0 {
            return Err(ServeError::Config("reliable queue capacity must be at least 1".into()));
        }
        Ok(())
    }
}

/// Everything needed to build an engine.
pub struct EngineParts {
    pub config: EngineConfig,
    pub library: Arc<GestureLibrary>,
    pub scene: Scene,
    pub backend: Backend,
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot listen on {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        source: std::io::Error,
    },
    #[error("cannot open recording {path}: {source}")]
    Record {
        path: PathBuf,
        source: std::io::Error,
    },
}

pub struct RunningServer {
    addr: SocketAddr,
    shutdown: watch::Sender<bool>,
    tasks: Vec<JoinHandle<()>>,
    parser: Option<std::thread::JoinHandle<()>>,
    recorder: Option<record::Recorder>,
}

impl RunningServer {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting, ends the tick loop and waits for the workers.
    pub async fn shutdown(mut self) {
        let _ = self.shutdown.send(true);
        for t in self.tasks.drain(..) {
            let _ = t.await;
        }
        if let Some(p) = self.parser.take() {
            let _ = tokio::task::spawn_blocking(move || p.join()).await;
        }
        if let Some(r) = self.recorder.take() {
            let _ = tokio::task::spawn_blocking(move || r.finish()).await;
        }
    }
}

/// Binds and starts serving; returns once the listener is up.
pub async fn serve(config: SessionConfig, parts: EngineParts) -> Result<RunningServer, ServeError> {
    config.validate()?;
    let listener = TcpListener::bind(config.listen).await.map_err(|source| ServeError::Bind {
        addr: config.listen,
        source,
    })?;
    let addr = listener.local_addr().map_err(|source| ServeError::Bind {
        addr: config.listen,
        source,
    })?;
    let recorder = match &config.record {
        Some(path) => Some(record::Recorder::open(path).map_err(|source| ServeError::Record {
            path: path.clone(),
            source,
        })?),
        None => None,
    };

    let mut engine_cfg = parts.config;
    engine_cfg.fps = config.fps;
    let started = Instant::now();
    let view = Arc::new(RwLock::new(Arc::new(hub::View::of(&parts.scene, None, false))));
    let (shutdown, shutdown_rx) = watch::channel(false);
    let (priority_tx, priority_rx) = mpsc::unbounded_channel();
    let (inbound_tx, inbound_rx) = mpsc::unbounded_channel();
    let (frames_tx, frames_rx) = watch::channel(None);
    let (reliable_tx, _) = broadcast::channel(config.reliable_capacity);
    let reliable_seq = Arc::new(AtomicU64::new(0));

    let (parser_tx, parser_rx) = std::sync::mpsc::channel();
    let parser = parser::spawn(parser::Parser {
        rx: parser_rx,
        interpreter: Interpreter::new(parts.backend, engine_cfg.command_history),
        library: parts.library.clone(),
        view: view.clone(),
        priority: priority_tx,
        inbound: inbound_tx.clone(),
        started,
    });

    let tick = hub::Hub {
        controller: Controller::new(engine_cfg, parts.library, parts.scene),
        priority_rx,
        inbound_rx,
        view: view.clone(),
        frames: frames_tx,
        reliable: reliable_tx.clone(),
        reliable_seq: reliable_seq.clone(),
        started,
        recorder: recorder.as_ref().map(|r| r.handle()),
        last_view: (None, false),
    };
    let mut tasks = vec![tokio::spawn(tick.run(config.fps, shutdown_rx.clone()))];

    let shared = Arc::new(client::Shared {
        parser: parser_tx,
        inbound: inbound_tx,
        view,
        frames: frames_rx,
        reliable: reliable_tx,
        reliable_seq,
        started,
        recorder: recorder.as_ref().map(|r| r.handle()),
        slots: Arc::new(Semaphore::new(config.max_clients)),
    });
    tasks.push(tokio::spawn(client::accept_loop(
        listener,
        config.transport,
        shared,
        shutdown_rx,
    )));
    log::info!("serving on {addr} ({:?}, {} fps)", config.transport, config.fps);
    Ok(RunningServer {
        addr,
        shutdown,
        tasks,
        parser: Some(parser),
        recorder,
    })
}
