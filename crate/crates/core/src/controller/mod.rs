//! The hand-state manager. Owns the instruction queue, plays motion plans one
//! frame per tick, applies temporal control and keeps the undo history.
//!
//! Playback model: every step becomes a precomputed [`MotionPlan`]. The first
//! tick of a step shows frame 0; each later tick advances a fractional cursor
//! by `speed_factor` and shows the floor-indexed frame. A step completes on
//! the tick its cursor runs past the end, and the next step's frame 0 is shown
//! on that same tick. Continuous motions are plans of bounded length that also
//! end early once a bound control saturates.

mod feedback;
mod history;

use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use feedback::{AuditEntry, AuditKind, FeedbackEvent, Frame, Label, TickOutput};
pub use history::{Checkpoint, History};

use crate::config::EngineConfig;
use crate::gesture::{GestureId, GestureLibrary, Phase};
use crate::interpreter::{Disposition, Instruction, InstructionList, MovementType, TemporalControl, TemporalInstr};
use crate::kinematics::{apply_rotation, plan_move_to, plan_reach, MotionPlan};
use crate::scene::{
    relative_position, Binding, BindingKind, GestureContext, InteractionConfig, InteractionEvent, ObjectId, Relation,
    Scene, SpatialConstraint, TargetResolution,
};
use crate::skeleton::{translate_pose, HandPose, JointId, RotationKind, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Idle,
    Playing,
    Paused,
    Holding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaybackState {
    pub status: Status,
    pub fps: f64,
    pub speed_factor: f64,
    /// Cursor into the active step's plan.
    pub cursor: f64,
}

struct GestureRun {
    id: GestureId,
    joint: JointId,
    target: Option<ObjectId>,
    /// Clip phase for each plan frame; `None` on approach frames.
    phases: Vec<Option<Phase>>,
}

struct ActiveStep {
    id: u64,
    plan: MotionPlan,
    cursor: f64,
    shown: usize,
    /// Exclusive end; shorter than the plan when a held grip skips retraction.
    end: usize,
    gesture: Option<GestureRun>,
    /// Stop once the bound control saturates in this direction.
    saturate: Option<f64>,
    hold_at: Option<usize>,
}

struct Job {
    id: u64,
    list: InstructionList,
    steps: VecDeque<Instruction>,
    active: Option<ActiveStep>,
}

struct Parked {
    list: InstructionList,
    step: usize,
}

/// The neutral open hand at `home`, taken from the open-hand clip.
pub fn rest_pose(library: &GestureLibrary, home: Vec3) -> HandPose {
    let clip = library
        .get(&GestureId::OpenHand)
        .expect("the builtin library has an open hand");
    let first = clip.frames[0];
    translate_pose(&first, home - first.wrist())
}

/// Replays each run of steps before a repeat marker the requested number of times.
fn expand_repeats(steps: &[Instruction]) -> VecDeque<Instruction> {
    let mut out = VecDeque::new();
    let mut segment: Vec<Instruction> = Vec::new();
    for step in steps {
        match step {
            Instruction::Temporal(TemporalInstr {
                repeat: Some(n),
                control: None,
            }) => {
                for _ in 0..*n {
                    out.extend(segment.iter().cloned());
                }
                segment.clear();
            }
            other => segment.push(other.clone()),
        }
    }
    out.extend(segment);
    out
}

fn first_ambiguous(list: &InstructionList) -> Option<usize> {
    list.steps.iter().position(|s| s.is_ambiguous())
}

pub struct Controller {
    cfg: EngineConfig,
    interaction: InteractionConfig,
    library: Arc<GestureLibrary>,
    scene: Scene,
    last_scene: Scene,
    pose: HandPose,
    held: Option<Binding>,
    playback: PlaybackState,
    queue: VecDeque<Job>,
    job: Option<Job>,
    parked: Option<Parked>,
    history: History,
    last_executed: Option<InstructionList>,
    frame_seq: u64,
    clock_ms: f64,
    next_step: u64,
    next_job: u64,
    audit: Vec<AuditEntry>,
    outbox: Vec<FeedbackEvent>,
    events: Vec<InteractionEvent>,
}

impl Controller {
    pub fn new(cfg: EngineConfig, library: Arc<GestureLibrary>, scene: Scene) -> Controller {
        let pose = rest_pose(&library, cfg.home());
        let history = History::new(
            Checkpoint {
                pose,
                scene: scene.snapshot(),
                held: None,
            },
            cfg.history_depth,
        );
        Controller {
            interaction: InteractionConfig {
                contact_radius: cfg.contact_radius,
                drop_height: cfg.drop_height,
            },
            playback: PlaybackState {
                status: Status::Idle,
                fps: cfg.fps,
                speed_factor: 1.0,
                cursor: 0.0,
            },
            cfg,
            library,
            last_scene: scene.clone(),
            scene,
            pose,
            held: None,
            queue: VecDeque::new(),
            job: None,
            parked: None,
            history,
            last_executed: None,
            frame_seq: 0,
            clock_ms: 0.0,
            next_step: 1,
            next_job: 1,
            audit: Vec::new(),
            outbox: Vec::new(),
            events: Vec::new(),
        }
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn library(&self) -> &Arc<GestureLibrary> {
        &self.library
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn pose(&self) -> &HandPose {
        &self.pose
    }

    pub fn held(&self) -> Option<&Binding> {
        self.held.as_ref()
    }

    pub fn held_object(&self) -> Option<&str> {
        self.held.as_ref().map(|b| b.object.as_str())
    }

    pub fn playback(&self) -> &PlaybackState {
        &self.playback
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    /// True while a command is executing or waiting in the queue.
    pub fn is_busy(&self) -> bool {
        self.job.is_some() || !self.queue.is_empty()
    }

    /// Nothing left to play: the queue is empty and any current job is
    /// frozen (stopped or holding) rather than moving.
    pub fn is_settled(&self) -> bool {
        self.queue.is_empty() && (self.job.is_none() || matches!(self.playback.status, Status::Paused | Status::Holding))
    }

    pub fn parked(&self) -> Option<&InstructionList> {
        self.parked.as_ref().map(|p| &p.list)
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    pub fn audit(&self) -> &[AuditEntry] {
        &self.audit
    }

    pub fn now_ms(&self) -> u64 {
        self.clock_ms as u64
    }

    /// The (pose, scene, binding) triple undo restores.
    pub fn state(&self) -> Checkpoint {
        Checkpoint {
            pose: self.pose,
            scene: self.scene.snapshot(),
            held: self.held.clone(),
        }
    }

    /// Feedback raised since the last tick.
    pub fn drain_feedback(&mut self) -> Vec<FeedbackEvent> {
        std::mem::take(&mut self.outbox)
    }

    /// Queues feedback raised outside the controller (e.g. recognized text).
    pub fn notify(&mut self, event: FeedbackEvent) {
        self.outbox.push(event);
    }

    fn log(&mut self, seq: u64, job: u64, kind: AuditKind) {
        self.audit.push(AuditEntry {
            seq,
            job,
            kind,
            at_ms: self.now_ms(),
        });
    }

    fn error(&mut self, message: impl Into<String>) {
        self.outbox.push(FeedbackEvent::error(message));
    }

    // -- intake ----------------------------------------------------------

    /// Accepts an interpreted command.
    pub fn submit(&mut self, list: InstructionList) {
        let seq = list.source.seq;
        match list.disposition {
            Disposition::Irrelevant => self.log(seq, 0, AuditKind::Ignored),
            Disposition::Uninterpretable => {
                self.log(seq, 0, AuditKind::Rejected);
                let note = list.note.as_deref().unwrap_or("couldn't understand that");
                self.error(format!("{note} — please rephrase"));
            }
            Disposition::Execute if list.is_temporal_only() => {
                for step in &list.steps {
                    if let Instruction::Temporal(t) = step {
                        self.preempt(t);
                    }
                }
            }
            Disposition::Execute => {
                if let Some(old) = self.parked.take() {
                    self.log(old.list.source.seq, 0, AuditKind::Cancelled);
                }
                self.route(list);
            }
        }
    }

    fn route(&mut self, list: InstructionList) {
        match first_ambiguous(&list) {
            Some(step) => self.park(list, step),
            None => self.enqueue(list),
        }
    }

    fn park(&mut self, list: InstructionList, step: usize) {
        let (query, candidates) = match &list.steps[step] {
            Instruction::Gesture(g) => (g.object.clone(), g.target.candidates.clone()),
            Instruction::Movement(m) => (m.object.clone(), m.target.candidates.clone()),
            Instruction::Temporal(_) => (None, Vec::new()),
        };
        if candidates.len() < 2 {
            // Marked ambiguous without candidates: ask the scene again.
            let resolved = self.reground(&list.steps[step]);
            let mut list = list;
            match resolved {
                Some(TargetResolution::Ambiguous(ids)) => {
                    set_candidates(&mut list.steps[step], ids);
                    return self.park(list, step);
                }
                Some(TargetResolution::Unique(id)) => {
                    resolve_step(&mut list.steps[step], id);
                    return self.route(list);
                }
                _ => {
                    self.log(list.source.seq, 0, AuditKind::Rejected);
                    return self.error("that object is no longer there — please rephrase");
                }
            }
        }
        self.outbox.push(FeedbackEvent::DisambiguationLabels {
            query: query.unwrap_or_default(),
            labels: candidates
                .iter()
                .enumerate()
                .map(|(i, id)| Label {
                    object: id.clone(),
                    label: i + 1,
                })
                .collect(),
        });
        self.log(list.source.seq, 0, AuditKind::Parked);
        self.parked = Some(Parked { list, step });
    }

    fn reground(&self, step: &Instruction) -> Option<TargetResolution> {
        let (object, constraints) = match step {
            Instruction::Gesture(g) => (g.object.as_ref()?, &g.constraints),
            Instruction::Movement(m) => (m.object.as_ref()?, &m.constraints),
            Instruction::Temporal(_) => return None,
        };
        Some(self.scene.resolve_target(object, constraints))
    }

    /// Answers a numbered-label prompt. Returns whether a parked command took it.
    pub fn reply(&mut self, label: usize) -> bool {
        let Some(mut parked) = self.parked.take() else {
            self.error("there is nothing to choose from right now");
            return false;
        };
        let candidates = parked.list.steps[parked.step]
            .target()
            .map(|t| t.candidates.clone())
            .unwrap_or_default();
        if label == 0 || label > candidates.len() {
            self.error(format!("please say a number from 1 to {}", candidates.len()));
            self.parked = Some(parked);
            return false;
        }
        resolve_step(&mut parked.list.steps[parked.step], candidates[label - 1].clone());
        self.route(parked.list);
        true
    }

    fn enqueue(&mut self, list: InstructionList) {
        let id = self.next_job;
        self.next_job += 1;
        self.log(list.source.seq, id, AuditKind::Enqueued);
        self.queue.push_back(Job {
            id,
            steps: expand_repeats(&list.steps),
            list,
            active: None,
        });
    }

    fn repeat_last(&mut self, n: u32) {
        let Some(last) = self.last_executed.clone() else {
            return self.error("there is nothing to repeat yet");
        };
        for _ in 1..n {
            self.enqueue(last.clone());
        }
    }

    // -- temporal control -------------------------------------------------

    /// Applies a temporal control immediately, in any state.
    pub fn preempt(&mut self, t: &TemporalInstr) {
        if let Some(n) = t.repeat {
            self.repeat_last(n);
        }
        let Some(control) = t.control else {
            return;
        };
        match control {
            TemporalControl::Stop => self.playback.status = Status::Paused,
            TemporalControl::Continue => {
                if let Some(step) = self.job.as_mut().and_then(|j| j.active.as_mut()) {
                    step.hold_at = None;
                }
                if matches!(self.playback.status, Status::Paused | Status::Holding) {
                    self.playback.status = if self.job.is_some() { Status::Playing } else { Status::Idle };
                }
            }
            TemporalControl::Faster => self.set_speed(self.playback.speed_factor * self.cfg.speed_step),
            TemporalControl::Slower => self.set_speed(self.playback.speed_factor / self.cfg.speed_step),
            TemporalControl::Hold => self.hold(),
            TemporalControl::UndoStep => self.undo(),
            TemporalControl::RedoStep => self.redo(),
        }
    }

    fn set_speed(&mut self, s: f64) {
        self.playback.speed_factor = s.clamp(self.cfg.min_speed_factor, self.cfg.max_speed_factor);
    }

    fn hold(&mut self) {
        let Some(step) = self.job.as_mut().and_then(|j| j.active.as_mut()) else {
            self.playback.status = Status::Holding;
            return;
        };
        let at = step.shown;
        let pin = match &step.gesture {
            Some(g) if g.phases.get(at) == Some(&Some(Phase::Stroke)) && at < step.plan.interacting_frame => {
                step.plan.interacting_frame
            }
            _ => at,
        };
        step.hold_at = Some(pin);
        if pin == at {
            step.cursor = at as f64;
            self.playback.status = Status::Holding;
        }
    }

    fn undo(&mut self) {
        if let Some(p) = self.parked.take() {
            self.log(p.list.source.seq, 0, AuditKind::Cancelled);
            return;
        }
        if let Some(job) = self.queue.pop_back() {
            self.log(job.list.source.seq, job.id, AuditKind::Dropped);
            return;
        }
        if let Some(job) = self.job.take() {
            self.log(job.list.source.seq, job.id, AuditKind::Aborted);
            let cp = self.history.current().clone();
            self.restore(&cp);
            return;
        }
        match self.history.undo().cloned() {
            Some(cp) => self.restore(&cp),
            None => self.error("nothing to undo"),
        }
    }

    fn redo(&mut self) {
        if self.job.is_some() {
            return self.error("finish or undo the current command before redoing");
        }
        match self.history.redo().cloned() {
            Some(cp) => self.restore(&cp),
            None => self.error("nothing to redo"),
        }
    }

    fn restore(&mut self, cp: &Checkpoint) {
        self.pose = cp.pose;
        self.held = cp.held.clone();
        if self.scene.restore(&cp.scene).is_err() {
            self.error("could not restore the scene");
        }
        self.playback.status = Status::Idle;
        self.playback.cursor = 0.0;
    }

    // -- playback -----------------------------------------------------------

    /// Advances the simulation by one tick of `dt` seconds.
    pub fn tick(&mut self, dt: f64) -> TickOutput {
        self.clock_ms += dt * 1000.0;
        self.resolve_waits();
        match self.playback.status {
            Status::Paused | Status::Holding => {}
            Status::Idle | Status::Playing => {
                let budget = dt * self.cfg.fps * self.playback.speed_factor;
                self.advance(budget);
            }
        }
        if let Some(step) = self.job.as_ref().and_then(|j| j.active.as_ref()) {
            self.playback.cursor = step.cursor;
        }
        let frame = Frame {
            seq: self.frame_seq,
            ts_ms: self.now_ms(),
            pose: self.pose,
        };
        self.frame_seq += 1;
        let scene_delta: Vec<_> = self.scene.changed_since(&self.last_scene).into_iter().cloned().collect();
        if !scene_delta.is_empty() {
            self.last_scene = self.scene.clone();
        }
        TickOutput {
            frame: Some(frame),
            feedback: std::mem::take(&mut self.outbox),
            interactions: std::mem::take(&mut self.events),
            scene_delta,
        }
    }

    /// Lets queued work through a pause or hold where the rules allow it.
    fn resolve_waits(&mut self) {
        if self.queue.is_empty() {
            return;
        }
        let releases = self.queue.iter().any(|job| {
            matches!(
                job.steps.front(),
                Some(Instruction::Gesture(g)) if g.gesture_type == GestureId::OpenHand
            )
        });
        let proceed = match self.playback.status {
            // A new command after "stop" replaces the frozen one.
            Status::Paused => true,
            // A hold lasts until a release is on its way (or "continue").
            Status::Holding => releases,
            _ => false,
        };
        if proceed {
            if self.job.is_some() {
                self.complete_job();
            }
            self.playback.status = Status::Playing;
        }
    }

    fn advance(&mut self, budget: f64) {
        let Some(step) = self.job.as_mut().and_then(|j| j.active.as_mut()) else {
            self.start_next();
            return;
        };
        step.cursor += budget;
        let ifr = step.plan.interacting_frame;
        if step.gesture.is_some() && step.shown < ifr && step.cursor > ifr as f64 {
            step.cursor = ifr as f64;
        }
        if let Some(h) = step.hold_at {
            if step.cursor >= h as f64 {
                step.cursor = h as f64;
                self.playback.status = Status::Holding;
            }
        }
        let idx = step.cursor.floor() as usize;
        if idx >= step.end {
            self.finish_step();
            self.start_next();
        } else if idx != step.shown {
            self.show(idx);
        }
    }

    fn finish_step(&mut self) {
        if let Some(job) = self.job.as_mut() {
            job.active = None;
        }
    }

    /// Starts the next step (pulling the next job if needed) and shows its
    /// first frame. Returns false when there is nothing left to run.
    fn start_next(&mut self) -> bool {
        loop {
            if self.job.is_none() {
                if matches!(self.playback.status, Status::Paused | Status::Holding) {
                    return false;
                }
                let Some(job) = self.queue.pop_front() else {
                    self.playback.status = Status::Idle;
                    return false;
                };
                self.log(job.list.source.seq, job.id, AuditKind::Started);
                self.outbox.push(FeedbackEvent::ActiveCommand {
                    text: job.list.source.raw_text.clone(),
                });
                self.job = Some(job);
            }
            let job = self.job.as_mut().expect("set above");
            let Some(instr) = job.steps.pop_front() else {
                self.complete_job();
                continue;
            };
            let more = job.steps.iter().any(|s| !matches!(s, Instruction::Temporal(_)));
            match self.plan_step(&instr, more) {
                Ok(Some(step)) => {
                    if step.plan.preview_path.len() >= 2 {
                        self.outbox.push(FeedbackEvent::PathPreview {
                            points: step.plan.preview_path.clone(),
                        });
                    }
                    let pin_now = step.hold_at == Some(0);
                    self.job.as_mut().expect("running").active = Some(step);
                    if self.playback.status == Status::Idle {
                        self.playback.status = Status::Playing;
                    }
                    self.show(0);
                    if pin_now {
                        self.playback.status = Status::Holding;
                    }
                    return true;
                }
                Ok(None) => {
                    if let Instruction::Temporal(t) = &instr {
                        // Controls inside a command take effect when reached;
                        // history controls only make sense on their own.
                        if !matches!(t.control, Some(TemporalControl::UndoStep | TemporalControl::RedoStep)) {
                            self.preempt(t);
                        }
                    }
                    if self.job.is_none() {
                        return false;
                    }
                }
                Err(message) => {
                    let job = self.job.take().expect("running");
                    self.log(job.list.source.seq, job.id, AuditKind::Aborted);
                    self.error(format!("couldn't carry out \"{}\": {message}", job.list.source.raw_text));
                    // Freeze where we are and commit it, so undo still works.
                    self.history.push(self.state());
                }
            }
        }
    }

    fn complete_job(&mut self) {
        let Some(job) = self.job.take() else {
            return;
        };
        // Controls are let go once the command that turned them is done.
        if self.held.as_ref().is_some_and(|b| b.kind != BindingKind::Carry) {
            let released = self.scene.release(&mut self.held, &self.interaction);
            self.events.extend(released);
        }
        self.history.push(self.state());
        self.log(job.list.source.seq, job.id, AuditKind::Completed);
        self.last_executed = Some(job.list);
    }

    fn show(&mut self, idx: usize) {
        let Some(step) = self.job.as_mut().and_then(|j| j.active.as_mut()) else {
            return;
        };
        step.shown = idx;
        self.pose = step.plan.frames[idx];
        let ctx = step.gesture.as_ref().map(|g| GestureContext {
            gesture: g.id.clone(),
            phase: g.phases.get(idx).copied().flatten(),
            joint: g.joint,
            at_interacting_frame: idx == step.plan.interacting_frame,
            target: g.target.clone(),
            step: step.id,
        });
        let saturate = step.saturate;
        let events = self
            .scene
            .step_interactions(&self.pose, ctx.as_ref(), &mut self.held, &self.interaction);
        self.events.extend(events);
        if let (Some(sign), Some(binding)) = (saturate, self.held.as_ref()) {
            if self.scene.control_saturated(binding, sign) {
                if let Some(step) = self.job.as_mut().and_then(|j| j.active.as_mut()) {
                    step.end = idx + 1;
                }
            }
        }
    }

    fn target_of(
        &self,
        object: &Option<String>,
        constraints: &[SpatialConstraint],
        resolved: &Option<ObjectId>,
    ) -> Result<Option<ObjectId>, String> {
        if let Some(id) = resolved {
            return match self.scene.get(id) {
                Some(_) => Ok(Some(id.clone())),
                None => Err(format!("the {id} is gone")),
            };
        }
        let Some(query) = object else {
            return Ok(None);
        };
        match self.scene.resolve_target(query, constraints) {
            TargetResolution::Unique(id) => Ok(Some(id)),
            TargetResolution::Ambiguous(_) => Err(format!("\"{query}\" is ambiguous")),
            TargetResolution::None => Err(format!("no object matches \"{query}\"")),
        }
    }

    fn continuous_frames(&self, next: impl Fn(&HandPose, usize) -> Result<HandPose, String>) -> Result<MotionPlan, String> {
        let n = (self.cfg.continuous_limit_s * self.cfg.fps).ceil().max(1.0) as usize;
        let mut frames = Vec::with_capacity(n);
        let mut pose = self.pose;
        for k in 1..=n {
            pose = next(&pose, k)?;
            frames.push(pose);
        }
        let preview_path = [self.pose.wrist(), pose.wrist()]
            .into_iter()
            .fold(Vec::new(), |mut acc, p| {
                if acc.last().is_none_or(|q: &Vec3| (p - q).norm() > crate::kinematics::NEGLIGIBLE) {
                    acc.push(p);
                }
                acc
            });
        Ok(MotionPlan {
            frames,
            interacting_frame: n - 1,
            preview_path,
        })
    }

    fn plan_step(&mut self, instr: &Instruction, more_after: bool) -> Result<Option<ActiveStep>, String> {
        let id = self.next_step;
        self.next_step += 1;
        let step = |plan: MotionPlan, gesture: Option<GestureRun>, saturate: Option<f64>| ActiveStep {
            id,
            end: plan.len(),
            plan,
            cursor: 0.0,
            shown: 0,
            gesture,
            saturate,
            hold_at: None,
        };
        match instr {
            Instruction::Gesture(g) => {
                let clip = self.library.get(&g.gesture_type).map_err(|e| e.to_string())?;
                let target = self.target_of(&g.object, &g.constraints, &g.target.resolved)?;
                // Commands are read ahead of execution; by now the grip may already be there.
                if g.gesture_type.binds_objects() && target.is_some() && self.held_object() == target.as_deref() {
                    return Ok(None);
                }
                let joint = clip.interacting_joint();
                let ifr = clip.interacting_frame().min(clip.len() - 1);
                let point = match &target {
                    Some(id) => self.scene.get(id).expect("checked").contact_point(),
                    None => clip.frames[ifr].joint(joint) + (self.pose.wrist() - clip.frames[0].wrist()),
                };
                let plan = plan_reach(clip, &self.pose, point, self.cfg.step_length()).map_err(|e| e.to_string())?;
                let approach = plan.interacting_frame - ifr;
                let phases = (0..plan.len())
                    .map(|k| k.checked_sub(approach).and_then(|f| clip.phase_at(f)))
                    .collect();
                let interacting = plan.interacting_frame;
                let mut s = step(
                    plan,
                    Some(GestureRun {
                        id: g.gesture_type.clone(),
                        joint,
                        target,
                        phases,
                    }),
                    None,
                );
                if g.hold {
                    if more_after {
                        // Keep the grip shape for what follows.
                        s.end = interacting + 1;
                    } else {
                        s.hold_at = Some(interacting);
                    }
                }
                Ok(Some(s))
            }
            Instruction::Movement(m) => match m.movement_type {
                MovementType::Translational if m.object.is_some() || m.target.resolved.is_some() => {
                    let target = self
                        .target_of(&m.object, &m.constraints, &m.target.resolved)?
                        .expect("object present");
                    let obj = self.scene.get(&target).expect("checked");
                    let (anchor, offset, default) = match &self.held {
                        Some(b) if b.kind == BindingKind::Carry => (b.joint, b.grip_offset, Relation::OnTopOf),
                        Some(b) => (b.joint, Vec3::zeros(), Relation::InFrontOf),
                        None => (JointId::IndexTip, Vec3::zeros(), Relation::InFrontOf),
                    };
                    let relation = m.position.unwrap_or(default);
                    let goal = relative_position(obj, relation, self.cfg.clearance) - offset;
                    let plan =
                        plan_move_to(&self.pose, anchor, goal, self.cfg.step_length()).map_err(|e| e.to_string())?;
                    Ok(Some(step(plan, None, None)))
                }
                MovementType::Translational => {
                    let dir = m.direction.ok_or("translation without a direction")?.vector();
                    let saturate = match &self.held {
                        Some(Binding {
                            kind: BindingKind::Slide { .. },
                            object,
                            ..
                        }) => self.scene.get(object).and_then(|o| match &o.affordance {
                            crate::scene::Affordance::Slider { axis, .. } => {
                                let d = dir.dot(axis);
                                (d.abs() > 1e-9).then(|| d.signum())
                            }
                            _ => None,
                        }),
                        _ => None,
                    };
                    let (speed, fps) = (self.cfg.hand_speed, self.cfg.fps);
                    let start = self.pose;
                    let plan =
                        self.continuous_frames(|_, k| Ok(translate_pose(&start, dir * (speed * k as f64 / fps))))?;
                    Ok(Some(step(plan, None, saturate)))
                }
                MovementType::Rotational => {
                    let kind = m.rotation.ok_or("rotation without a kind")?;
                    let saturate = match &self.held {
                        Some(Binding {
                            kind: BindingKind::Twist { .. },
                            ..
                        }) => match kind {
                            RotationKind::RollRight => Some(1.0),
                            RotationKind::RollLeft => Some(-1.0),
                            _ => None,
                        },
                        _ => None,
                    };
                    let (w, dt) = (self.cfg.rotation_speed(), 1.0 / self.cfg.fps);
                    let plan = self
                        .continuous_frames(|p, _| apply_rotation(p, kind, w, dt).map_err(|e| e.to_string()))?;
                    Ok(Some(step(plan, None, saturate)))
                }
            },
            Instruction::Temporal(_) => Ok(None),
        }
    }
}

fn set_candidates(step: &mut Instruction, ids: Vec<ObjectId>) {
    if let Some((_, ambiguous, _, binding)) = step.target_mut() {
        *ambiguous = true;
        binding.resolved = None;
        binding.candidates = ids;
    }
}

fn resolve_step(step: &mut Instruction, id: ObjectId) {
    if let Some((_, ambiguous, _, binding)) = step.target_mut() {
        *ambiguous = false;
        binding.resolved = Some(id);
        binding.candidates.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interpreter::{Command, GestureInstr, MovementInstr};

    #[test]
    fn repeats_expand_in_place() {
        let pinch = Instruction::gesture(GestureId::Pinch);
        let point = Instruction::gesture(GestureId::Point);
        let steps = vec![
            pinch.clone(),
            Instruction::Temporal(TemporalInstr::repeat(3)),
            point.clone(),
        ];
        let out: Vec<_> = expand_repeats(&steps).into_iter().collect();
        assert_eq!(out, vec![pinch.clone(), pinch.clone(), pinch, point]);
    }

    fn controller() -> Controller {
        let lib = Arc::new(GestureLibrary::builtin(&Default::default()));
        Controller::new(EngineConfig::default(), lib, Scene::new(Vec::new()).unwrap())
    }

    fn list(seq: u64, steps: Vec<Instruction>) -> InstructionList {
        InstructionList::execute(Command::new(format!("cmd {seq}"), seq, 0), steps)
    }

    #[test]
    fn speed_clamps() {
        let mut c = controller();
        for _ in 0..3 {
            c.preempt(&TemporalInstr::control(TemporalControl::Faster));
        }
        assert!((c.playback().speed_factor - 3.375).abs() < 1e-12);
        c.preempt(&TemporalInstr::control(TemporalControl::Faster));
        assert_eq!(c.playback().speed_factor, 4.0);
        for _ in 0..10 {
            c.preempt(&TemporalInstr::control(TemporalControl::Slower));
        }
        assert_eq!(c.playback().speed_factor, 0.25);
    }

    #[test]
    fn fifo_and_timing() {
        let mut c = controller();
        c.submit(list(1, vec![Instruction::Gesture(GestureInstr::new(GestureId::Pinch))]));
        c.submit(list(2, vec![Instruction::Movement(MovementInstr::translate(
            crate::interpreter::Direction::Up,
        ))]));
        let mut ticks = 0;
        while c.is_busy() {
            c.tick(1.0 / 60.0);
            ticks += 1;
            assert!(ticks < 1000);
        }
        let order: Vec<_> = c
            .audit()
            .iter()
            .filter(|e| e.kind == AuditKind::Completed)
            .map(|e| e.seq)
            .collect();
        assert_eq!(order, vec![1, 2]);
        // 60 pinch frames, then 90 frames of bounded continuous motion, plus the completing tick.
        assert_eq!(ticks, 60 + 90 + 1);
    }

    #[test]
    fn undo_on_empty_history_reports() {
        let mut c = controller();
        c.preempt(&TemporalInstr::control(TemporalControl::UndoStep));
        let fb = c.drain_feedback();
        assert!(matches!(&fb[..], [FeedbackEvent::ErrorRetry { .. }]));
    }
}
