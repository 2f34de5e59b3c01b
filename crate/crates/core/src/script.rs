//! Headless scenario runner: timed commands against simulated time, then
//! assertions on the final scene and the recorded hand trace.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::EngineConfig;
use crate::controller::{AuditEntry, AuditKind, FeedbackEvent};
use crate::engine::Engine;
use crate::gesture::GestureLibrary;
use crate::interpreter::Backend;
use crate::scene::{Affordance, InteractionEvent, Scene, SceneObject};
use crate::skeleton::Vec3;

#[derive(Debug, thiserror::Error)]
pub enum ScriptError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("scenario: {0}")]
    Format(String),
    #[error(transparent)]
    Scene(#[from] crate::scene::SceneError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedCommand {
    pub t_ms: u64,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predicate {
    /// `value`: whether the hand holds the object.
    Held,
    /// `value`: id of the container whose bounds hold the object's center.
    Inside,
    SliderValue,
    KnobAngle,
    /// The knob ends turned further than it started.
    KnobIncreased,
    PressCount,
    /// `value`: [x, y, z].
    Position,
    /// Object `hand`: the wrist stays put for `value` ms from `at_ms`.
    HandStill,
    /// Object `hand`: the wrist travels more than `tolerance` within `value` ms from `at_ms`.
    HandMoves,
    /// Some feedback event of kind `value` was raised.
    Feedback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    #[serde(default)]
    pub object: String,
    pub predicate: Predicate,
    #[serde(default)]
    pub value: Value,
    #[serde(default)]
    pub tolerance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub at_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SceneSource {
    File(String),
    Inline(Value),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptScenario {
    #[serde(default)]
    pub name: String,
    pub scene: SceneSource,
    pub commands: Vec<TimedCommand>,
    #[serde(default)]
    pub assertions: Vec<Assertion>,
    /// Give up after this much simulated time.
    #[serde(default = "default_max_ms")]
    pub max_ms: u64,
    /// Keep ticking this long after everything settles.
    #[serde(default)]
    pub settle_ms: u64,
    #[serde(skip)]
    base_dir: PathBuf,
}

fn default_max_ms() -> u64 {
    60_000
}

impl ScriptScenario {
    pub fn load(path: &Path) -> Result<ScriptScenario, ScriptError> {
        let doc = std::fs::read_to_string(path).map_err(|source| ScriptError::Io {
            path: path.to_owned(),
            source,
        })?;
        ScriptScenario::from_json(&doc, path.parent().unwrap_or(Path::new(".")))
    }

    /// Parses a scenario; relative scene paths resolve against `base_dir`.
    pub fn from_json(doc: &str, base_dir: &Path) -> Result<ScriptScenario, ScriptError> {
        let mut s: ScriptScenario = serde_json::from_str(doc).map_err(|e| ScriptError::Format(e.to_string()))?;
        s.base_dir = base_dir.to_owned();
        if s.commands.windows(2).any(|w| w[1].t_ms < w[0].t_ms) {
            return Err(ScriptError::Format("command times must be non-decreasing".into()));
        }
        Ok(s)
    }

    pub fn scene(&self) -> Result<Scene, ScriptError> {
        match &self.scene {
            SceneSource::File(rel) => {
                let path = self.base_dir.join(rel);
                let doc = std::fs::read_to_string(&path).map_err(|source| ScriptError::Io { path, source })?;
                Ok(Scene::from_json(&doc)?)
            }
            SceneSource::Inline(v) => Ok(Scene::from_json(&v.to_string())?),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssertionReport {
    pub assertion: Assertion,
    pub actual: Value,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandReport {
    pub t_ms: u64,
    pub text: String,
    /// Wall-clock routing + interpretation time, microseconds.
    pub interpret_us: f64,
    /// Simulated time from receipt until its motion started, if it did.
    pub start_delay_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptReport {
    pub name: String,
    pub passed: bool,
    pub timed_out: bool,
    pub duration_ms: u64,
    pub frames: u64,
    pub commands: Vec<CommandReport>,
    pub assertions: Vec<AssertionReport>,
    pub feedback: Vec<FeedbackEvent>,
    pub interactions: Vec<InteractionEvent>,
    pub audit: Vec<AuditEntry>,
}

struct TracePoint {
    ts_ms: u64,
    wrist: Vec3,
}

/// Runs a scenario with the grammar interpreter.
pub fn run_script(
    scenario: &ScriptScenario,
    cfg: &EngineConfig,
    library: Arc<GestureLibrary>,
) -> Result<ScriptReport, ScriptError> {
    let scene = scenario.scene()?;
    let initial = scene.clone();
    let mut engine = Engine::new(cfg.clone(), library, scene, Backend::Grammar);
    let dt = 1.0 / cfg.fps;
    let mut pending = scenario.commands.iter().peekable();
    let mut trace = Vec::new();
    let mut feedback = Vec::new();
    let mut interactions = Vec::new();
    let mut settled_at: Option<u64> = None;
    let mut timed_out = false;
    loop {
        let now = engine.controller().now_ms();
        while let Some(c) = pending.next_if(|c| c.t_ms <= now) {
            engine.say(&c.text);
        }
        let out = engine.tick(dt);
        let frame = out.frame();
        trace.push(TracePoint {
            ts_ms: frame.ts_ms,
            wrist: frame.pose.wrist(),
        });
        feedback.extend(out.feedback);
        interactions.extend(out.interactions);
        let now = engine.controller().now_ms();
        if pending.peek().is_none() && engine.controller().is_settled() {
            let since = *settled_at.get_or_insert(now);
            if now >= since + scenario.settle_ms {
                break;
            }
        } else {
            settled_at = None;
        }
        if now >= scenario.max_ms {
            timed_out = true;
            break;
        }
    }
    feedback.extend(engine.controller_mut().drain_feedback());

    let c = engine.controller();
    let audit = c.audit().to_vec();
    let commands = engine
        .timings()
        .iter()
        .map(|t| CommandReport {
            t_ms: t.received_at_ms,
            text: t.text.clone(),
            interpret_us: t.interpret.as_secs_f64() * 1e6,
            start_delay_ms: audit
                .iter()
                .find(|e| e.seq == t.seq && e.kind == AuditKind::Started)
                .map(|e| e.at_ms.saturating_sub(t.received_at_ms)),
        })
        .collect();
    let ctx = Evaluation {
        scene: c.scene(),
        initial: &initial,
        held: c.held_object(),
        trace: &trace,
        feedback: &feedback,
    };
    let assertions: Vec<AssertionReport> = scenario.assertions.iter().map(|a| ctx.evaluate(a)).collect();
    Ok(ScriptReport {
        name: scenario.name.clone(),
        passed: !timed_out && assertions.iter().all(|a| a.passed),
        timed_out,
        duration_ms: c.now_ms(),
        frames: trace.len() as u64,
        commands,
        assertions,
        feedback,
        interactions,
        audit,
    })
}

struct Evaluation<'a> {
    scene: &'a Scene,
    initial: &'a Scene,
    held: Option<&'a str>,
    trace: &'a [TracePoint],
    feedback: &'a [FeedbackEvent],
}

impl Evaluation<'_> {
    fn evaluate(&self, a: &Assertion) -> AssertionReport {
        let (actual, passed) = self.check(a).unwrap_or_else(|why| (Value::String(why), false));
        AssertionReport {
            assertion: a.clone(),
            actual,
            passed,
        }
    }

    fn object(&self, id: &str) -> Result<&SceneObject, String> {
        self.scene.get(id).ok_or_else(|| format!("no object `{id}`"))
    }

    fn number(a: &Assertion) -> Result<f64, String> {
        a.value.as_f64().ok_or_else(|| "value must be a number".to_owned())
    }

    /// Wrist positions in `[at, at + window]`.
    fn window(&self, a: &Assertion) -> Result<Vec<Vec3>, String> {
        let at = a.at_ms.ok_or("needs at_ms")?;
        let span = a.value.as_u64().ok_or("value must be a window in ms")?;
        let pts: Vec<Vec3> = self
            .trace
            .iter()
            .filter(|p| p.ts_ms >= at && p.ts_ms <= at + span)
            .map(|p| p.wrist)
            .collect();
        if pts.is_empty() {
            return Err("no frames in the window".into());
        }
        Ok(pts)
    }

    fn check(&self, a: &Assertion) -> Result<(Value, bool), String> {
        let close = |x: f64, want: f64| (x - want).abs() <= a.tolerance;
        Ok(match a.predicate {
            Predicate::Held => {
                let want = a.value.as_bool().ok_or("value must be a bool")?;
                let is = self.held == Some(a.object.as_str());
                (Value::from(self.held), is == want)
            }
            Predicate::Inside => {
                let container = self.object(a.value.as_str().ok_or("value must be an object id")?)?;
                let center = self.object(&a.object)?.position;
                (serde_json::to_value(center).unwrap_or_default(), container.contains(center))
            }
            Predicate::SliderValue => match self.object(&a.object)?.affordance {
                Affordance::Slider { value, .. } => (Value::from(value), close(value, Self::number(a)?)),
                _ => return Err("not a slider".into()),
            },
            Predicate::KnobAngle | Predicate::KnobIncreased => {
                let Affordance::Knob { angle, .. } = self.object(&a.object)?.affordance else {
                    return Err("not a knob".into());
                };
                if a.predicate == Predicate::KnobAngle {
                    (Value::from(angle), close(angle, Self::number(a)?))
                } else {
                    let before = match self.initial.get(&a.object).map(|o| &o.affordance) {
                        Some(Affordance::Knob { angle, .. }) => *angle,
                        _ => return Err("knob missing from the initial scene".into()),
                    };
                    (Value::from(angle), angle > before)
                }
            }
            Predicate::PressCount => match self.object(&a.object)?.affordance {
                Affordance::Button { press_count, .. } => {
                    let want = a.value.as_u64().ok_or("value must be a count")?;
                    (Value::from(press_count), u64::from(press_count) == want)
                }
                _ => return Err("not a button".into()),
            },
            Predicate::Position => {
                let want: Vec3 = serde_json::from_value(a.value.clone()).map_err(|e| e.to_string())?;
                let at = self.object(&a.object)?.position;
                (serde_json::to_value(at).unwrap_or_default(), (at - want).norm() <= a.tolerance)
            }
            Predicate::HandStill | Predicate::HandMoves => {
                let pts = self.window(a)?;
                let travel = pts.iter().map(|p| (p - pts[0]).norm()).fold(0.0, f64::max);
                let ok = if a.predicate == Predicate::HandStill {
                    travel <= a.tolerance
                } else {
                    travel > a.tolerance
                };
                (Value::from(travel), ok)
            }
            Predicate::Feedback => {
                let kind = a.value.as_str().ok_or("value must be a feedback kind")?;
                let n = self.feedback.iter().filter(|f| f.kind() == kind).count();
                (Value::from(n), n > 0)
            }
        })
    }
}
