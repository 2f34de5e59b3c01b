use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};
use std::time::{Duration, Instant};

use proxyhand_core::controller::Controller;
use proxyhand_core::engine::{dispatch, Routed};
use proxyhand_core::controller::FeedbackEvent;
use proxyhand_core::interpreter::TemporalInstr;
use proxyhand_core::protocol::{encode, Body, WireMessage};
use proxyhand_core::scene::Scene;
use tokio::sync::{broadcast, mpsc, watch};
use tokio::time::MissedTickBehavior;

use crate::record::{Direction, RecordHandle};

/// What the parser reads between ticks.
pub(crate) struct View {
    pub scene: Scene,
    pub held: Option<String>,
    pub awaiting_reply: bool,
}

impl View {
    pub fn of(scene: &Scene, held: Option<&str>, awaiting_reply: bool) -> View {
        View {
            scene: scene.clone(),
            held: held.map(str::to_owned),
            awaiting_reply,
        }
    }
}

pub(crate) type SharedView = Arc<RwLock<Arc<View>>>;

pub(crate) enum Inbound {
    Recognized(String),
    Routed(Routed),
    Reply(usize),
}

pub(crate) fn now_ms(started: Instant) -> u64 {
    started.elapsed().as_millis() as u64
}

pub(crate) struct Hub {
    pub controller: Controller,
    pub priority_rx: mpsc::UnboundedReceiver<TemporalInstr>,
    pub inbound_rx: mpsc::UnboundedReceiver<Inbound>,
    pub view: SharedView,
    pub frames: watch::Sender<Option<Arc<str>>>,
    pub reliable: broadcast::Sender<Arc<str>>,
    pub reliable_seq: Arc<AtomicU64>,
    pub started: Instant,
    pub recorder: Option<RecordHandle>,
    pub last_view: (Option<String>, bool),
}

impl Hub {
    pub async fn run(mut self, fps: f64, mut shutdown: watch::Receiver<bool>) {
        let dt = 1.0 / fps;
        let mut interval = tokio::time::interval(Duration::from_secs_f64(dt));
        interval.set_missed_tick_behavior(MissedTickBehavior::Delay);
        loop {
            tokio::select! {
                _ = interval.tick() => self.step(dt),
                _ = shutdown.changed() => break,
            }
        }
    }

    fn step(&mut self, dt: f64) {
        // Controls first: they must not wait behind ordinary commands.
        while let Ok(t) = self.priority_rx.try_recv() {
            self.controller.preempt(&t);
        }
        while let Ok(msg) = self.inbound_rx.try_recv() {
            match msg {
                Inbound::Recognized(text) => self.controller.notify(FeedbackEvent::RecognizedText { text }),
                Inbound::Routed(r) => dispatch(&mut self.controller, r),
                Inbound::Reply(n) => {
                    self.controller.reply(n);
                }
            }
        }
        let out = self.controller.tick(dt);
        let now = now_ms(self.started);

        let c = &self.controller;
        let key = (c.held_object().map(str::to_owned), c.parked().is_some());
        if !out.scene_delta.is_empty() || key != self.last_view {
            let view = View::of(c.scene(), c.held_object(), c.parked().is_some());
            *self.view.write().expect("view lock") = Arc::new(view);
            self.last_view = key;
        }

        let frame = out.frame();
        let line: Arc<str> = encode(&WireMessage::new(frame.seq, now, Body::Frame(frame.pose))).into();
        self.record(&line);
        self.frames.send_replace(Some(line));
        for event in out.feedback {
            self.send_reliable(now, Body::Feedback(event));
        }
        if !out.scene_delta.is_empty() {
            self.send_reliable(
                now,
                Body::SceneDelta {
                    objects: out.scene_delta,
                },
            );
        }
    }

    fn send_reliable(&mut self, now: u64, body: Body) {
        let seq = self.reliable_seq.fetch_add(1, Ordering::SeqCst) + 1;
        let line: Arc<str> = encode(&WireMessage::new(seq, now, body)).into();
        self.record(&line);
        // No subscribers is fine.
        let _ = self.reliable.send(line);
    }

    fn record(&self, line: &Arc<str>) {
        if let Some(r) = &self.recorder {
            r.log(Direction::Out, None, now_ms(self.started), line);
        }
    }
}
