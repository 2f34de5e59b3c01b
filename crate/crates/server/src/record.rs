//! Session recordings: one JSON record per line, in arrival order.
//!
//! A recording replays headless through the same engine at simulated time, so
//! the hand and scene outcome can be checked without a network or a clock.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::mpsc::{channel, Sender};
use std::thread::JoinHandle;

use proxyhand_core::controller::FeedbackEvent;
use proxyhand_core::engine::Engine;
use proxyhand_core::protocol::{decode_line, Body};
use proxyhand_core::scene::Scene;
use serde::{Deserialize, Serialize};

use crate::EngineParts;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    In,
    Out,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub dir: Direction,
    /// Absent for broadcasts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub client: Option<u64>,
    pub at_ms: u64,
    pub line: String,
}

/// Owns the writer thread; dropping the last handle and calling
/// [`Recorder::finish`] flushes everything.
pub(crate) struct Recorder {
    tx: Sender<Record>,
    worker: JoinHandle<std::io::Result<()>>,
}

#[derive(Clone)]
pub(crate) struct RecordHandle {
    tx: Sender<Record>,
}

impl Recorder {
    pub fn open(path: &Path) -> std::io::Result<Recorder> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let (tx, rx) = channel::<Record>();
        let worker = std::thread::Builder::new()
            .name("proxyhand-recorder".into())
            .spawn(move || {
                let mut out = BufWriter::new(file);
                for rec in rx {
                    serde_json::to_writer(&mut out, &rec)?;
                    out.write_all(b"\n")?;
                }
                out.flush()
            })?;
        Ok(Recorder { tx, worker })
    }

    pub fn handle(&self) -> RecordHandle {
        RecordHandle { tx: self.tx.clone() }
    }

    /// Waits for every outstanding handle to be dropped.
    pub fn finish(self) {
        drop(self.tx);
        match self.worker.join() {
            Ok(Err(e)) => log::warn!("recording incomplete: {e}"),
            Err(_) => log::warn!("recorder thread panicked"),
            Ok(Ok(())) => {}
        }
    }
}

impl RecordHandle {
    pub fn log(&self, dir: Direction, client: Option<u64>, at_ms: u64, line: &str) {
        let _ = self.tx.send(Record {
            dir,
            client,
            at_ms,
            line: line.to_owned(),
        });
    }
}

pub fn read_records(path: &Path) -> std::io::Result<Vec<Record>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| {
            std::io::Error::new(std::io::ErrorKind::InvalidData, format!("line {}: {e}", n + 1))
        })?;
        out.push(rec);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct ReplayReport {
    pub frames: u64,
    pub feedback: Vec<FeedbackEvent>,
    pub scene: Scene,
    pub held: Option<String>,
    pub duration_ms: u64,
}

/// Replays the inbound side of a recording at its recorded times, then runs
/// until the hand settles (bounded by `max_ms` after the last input).
pub fn replay(records: &[Record], parts: EngineParts, fps: f64, max_ms: u64) -> ReplayReport {
    let mut inputs: Vec<(u64, Body)> = records
        .iter()
        .filter(|r| r.dir == Direction::In)
        .filter_map(|r| match decode_line(r.line.as_bytes()) {
            Some(Ok(m)) => Some((r.at_ms, m.body)),
            _ => None,
        })
        .collect();
    // Stable, so same-millisecond inputs keep their order.
    inputs.sort_by_key(|(t, _)| *t);

    let mut cfg = parts.config;
    cfg.fps = fps;
    let mut engine = Engine::new(cfg, parts.library, parts.scene, parts.backend);
    let dt = 1.0 / fps;
    let deadline = inputs.last().map_or(0, |(t, _)| *t) + max_ms;
    let mut next = 0;
    let mut frames = 0;
    let mut feedback = Vec::new();
    loop {
        let now = engine.controller().now_ms();
        while next < inputs.len() && inputs[next].0 <= now {
            match &inputs[next].1 {
                Body::CommandText { text, is_final } => engine.push_text(text, *is_final),
                Body::DisambiguationReply { label } => {
                    engine.reply(*label as usize);
                }
                _ => {}
            }
            next += 1;
        }
        let out = engine.tick(dt);
        frames += 1;
        feedback.extend(out.feedback);
        let c = engine.controller();
        if next == inputs.len() && (c.is_settled() || c.now_ms() >= deadline) {
            break;
        }
    }
    let c = engine.controller();
    ReplayReport {
        frames,
        feedback,
        scene: c.scene().clone(),
        held: c.held_object().map(str::to_owned),
        duration_ms: c.now_ms(),
    }
}
