//! Latency figures for the three stages a spoken command passes through:
//! the keyword tier, the grammar tier, and command-to-first-frame.

use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use proxyhand_core::config::EngineConfig;
use proxyhand_core::engine::Engine;
use proxyhand_core::gesture::GestureLibrary;
use proxyhand_core::interpreter::{match_priority, Backend, Command, Interpreter};
use proxyhand_core::scene::Scene;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}: expected a JSON array of strings")]
    Format(String),
    #[error("corpus {0} has no commands")]
    Empty(String),
}

/// One command per line (`#` starts a comment), or a JSON array of strings.
pub fn load_corpus(path: &Path) -> Result<Vec<String>, CorpusError> {
    let shown = path.display().to_string();
    let doc = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: shown.clone(),
        source,
    })?;
    let commands: Vec<String> = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&doc).map_err(|_| CorpusError::Format(shown.clone()))?
    } else {
        doc.lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty())
            .map(str::to_owned)
            .collect()
    };
    if commands.is_empty() {
        return Err(CorpusError::Empty(shown));
    }
    Ok(commands)
}

/// Microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stats {
    pub n: usize,
    pub p50_us: f64,
    pub p95_us: f64,
    pub mean_us: f64,
    pub max_us: f64,
}

impl Stats {
    pub fn of(samples: &[Duration]) -> Option<Stats> {
        if samples.is_empty() {
            return None;
        }
        let mut us: Vec<f64> = samples.iter().map(|d| d.as_secs_f64() * 1e6).collect();
        us.sort_by(f64::total_cmp);
        // Nearest rank.
        let rank = |p: f64| us[((p * us.len() as f64).ceil() as usize).clamp(1, us.len()) - 1];
        Some(Stats {
            n: us.len(),
            p50_us: rank(0.50),
            p95_us: rank(0.95),
            mean_us: us.iter().sum::<f64>() / us.len() as f64,
            max_us: *us.last().unwrap(),
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub commands: usize,
    /// Commands answered by the keyword tier: match plus controller preemption.
    pub keyword: Option<Stats>,
    /// Everything else, through the grammar interpreter.
    pub grammar: Option<Stats>,
    /// A fresh engine hearing the command until it emits the next frame.
    pub end_to_end: Stats,
}

pub struct Bench {
    pub config: EngineConfig,
    pub library: Arc<GestureLibrary>,
    pub scene: Scene,
}

impl Bench {
    /// Times every command `rounds` times.
    pub fn run(&self, corpus: &[String], rounds: usize) -> BenchReport {
        let rounds = rounds.max(1);
        let mut keyword = Vec::new();
        let mut grammar = Vec::new();
        let mut end_to_end = Vec::new();
        let mut interpreter = Interpreter::new(Backend::Grammar, self.config.command_history);
        let mut engine = self.engine();
        let dt = 1.0 / self.config.fps;
        for _ in 0..rounds {
            for (i, text) in corpus.iter().enumerate() {
                let t = Instant::now();
                if let Some(instr) = match_priority(text) {
                    engine.controller_mut().preempt(&instr);
                    keyword.push(t.elapsed());
                } else {
                    let cmd = Command::new(text.clone(), i as u64 + 1, 0);
                    let t = Instant::now();
                    let list = interpreter.interpret(&cmd, &self.scene, &self.library, None);
                    grammar.push(t.elapsed());
                    std::hint::black_box(list);
                }

                let mut fresh = self.engine();
                let t = Instant::now();
                fresh.say(text);
                let out = fresh.tick(dt);
                end_to_end.push(t.elapsed());
                std::hint::black_box(out);
            }
        }
        BenchReport {
            commands: corpus.len(),
            keyword: Stats::of(&keyword),
            grammar: Stats::of(&grammar),
            end_to_end: Stats::of(&end_to_end).expect("corpus is not empty"),
        }
    }

    fn engine(&self) -> Engine {
        Engine::new(self.config.clone(), self.library.clone(), self.scene.clone(), Backend::Grammar)
    }
}
