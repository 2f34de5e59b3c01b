//! Text in, frames out: wires the segmenter and interpreter to the controller.

use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::config::EngineConfig;
use crate::controller::{Controller, FeedbackEvent, TickOutput};
use crate::gesture::GestureLibrary;
use crate::interpreter::{
    match_priority, parse_label_reply, Backend, Command, InstructionList, Interpreter, SegmentEvent, Segmenter,
    TemporalInstr,
};
use crate::scene::Scene;

/// What a finished command turned out to be.
#[derive(Debug, Clone, PartialEq)]
pub enum Routed {
    /// A numbered answer to a pending disambiguation prompt.
    Reply(usize),
    /// A priority control, applied immediately.
    Preempt(TemporalInstr),
    List(InstructionList),
}

/// The state the interpreter reads; owned by whoever calls [`route`].
pub struct SceneView<'a> {
    pub scene: &'a Scene,
    pub library: &'a GestureLibrary,
    pub held: Option<&'a str>,
    /// A disambiguation prompt is waiting for a number.
    pub awaiting_reply: bool,
}

pub fn route(cmd: &Command, view: &SceneView, interpreter: &mut Interpreter) -> Routed {
    if view.awaiting_reply {
        if let Some(n) = parse_label_reply(&cmd.raw_text) {
            return Routed::Reply(n);
        }
    }
    if let Some(t) = match_priority(&cmd.raw_text) {
        return Routed::Preempt(t);
    }
    Routed::List(interpreter.interpret(cmd, view.scene, view.library, view.held))
}

/// Applies a routed command to the controller.
pub fn dispatch(controller: &mut Controller, routed: Routed) {
    match routed {
        Routed::Reply(n) => {
            controller.reply(n);
        }
        Routed::Preempt(t) => controller.preempt(&t),
        Routed::List(list) => controller.submit(list),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommandTiming {
    pub seq: u64,
    pub text: String,
    pub received_at_ms: u64,
    /// Wall time spent routing and interpreting.
    pub interpret: Duration,
}

/// The single-threaded pipeline used by script mode and benchmarks.
pub struct Engine {
    controller: Controller,
    interpreter: Interpreter,
    segmenter: Segmenter,
    timings: Vec<CommandTiming>,
}

impl Engine {
    pub fn new(cfg: EngineConfig, library: Arc<GestureLibrary>, scene: Scene, backend: Backend) -> Engine {
        let interpreter = Interpreter::new(backend, cfg.command_history);
        Engine {
            controller: Controller::new(cfg, library, scene),
            interpreter,
            segmenter: Segmenter::starting_at(1),
            timings: Vec::new(),
        }
    }

    pub fn controller(&self) -> &Controller {
        &self.controller
    }

    pub fn controller_mut(&mut self) -> &mut Controller {
        &mut self.controller
    }

    pub fn timings(&self) -> &[CommandTiming] {
        &self.timings
    }

    /// Feeds streamed text; `is_final` ends the utterance.
    pub fn push_text(&mut self, chunk: &str, is_final: bool) {
        let now = self.controller.now_ms();
        let mut events = self.segmenter.push(chunk, now);
        if is_final {
            events.extend(self.segmenter.flush(now));
        }
        for ev in events {
            match ev {
                SegmentEvent::Eager(t) => self.controller.preempt(&t),
                SegmentEvent::Command(cmd) => self.command(cmd),
            }
        }
    }

    /// Convenience for one complete utterance.
    pub fn say(&mut self, text: &str) {
        self.push_text(text, true);
    }

    fn command(&mut self, cmd: Command) {
        self.controller.notify(FeedbackEvent::RecognizedText {
            text: cmd.raw_text.clone(),
        });
        let started = Instant::now();
        let c = &self.controller;
        let view = SceneView {
            scene: c.scene(),
            library: c.library(),
            held: c.held_object(),
            awaiting_reply: c.parked().is_some(),
        };
        let routed = route(&cmd, &view, &mut self.interpreter);
        dispatch(&mut self.controller, routed);
        self.timings.push(CommandTiming {
            seq: cmd.seq,
            text: cmd.raw_text,
            received_at_ms: cmd.received_at_ms,
            interpret: started.elapsed(),
        });
    }

    /// Answers a disambiguation prompt directly (a clicked label).
    pub fn reply(&mut self, label: usize) -> bool {
        self.controller.reply(label)
    }

    pub fn tick(&mut self, dt: f64) -> TickOutput {
        self.controller.tick(dt)
    }
}
