use serde::{Deserialize, Serialize};

use crate::scene::{InteractionEvent, ObjectId, SceneObject};
use crate::skeleton::{HandPose, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Label {
    pub object: ObjectId,
    pub label: usize,
}

/// User-facing status messages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeedbackEvent {
    RecognizedText { text: String },
    ActiveCommand { text: String },
    ErrorRetry { message: String },
    DisambiguationLabels { query: String, labels: Vec<Label> },
    PathPreview { points: Vec<Vec3> },
}

impl FeedbackEvent {
    pub fn kind(&self) -> &'static str {
        match self {
            FeedbackEvent::RecognizedText { .. } => "recognized_text",
            FeedbackEvent::ActiveCommand { .. } => "active_command",
            FeedbackEvent::ErrorRetry { .. } => "error_retry",
            FeedbackEvent::DisambiguationLabels { .. } => "disambiguation_labels",
            FeedbackEvent::PathPreview { .. } => "path_preview",
        }
    }

    pub fn error(message: impl Into<String>) -> FeedbackEvent {
        FeedbackEvent::ErrorRetry {
            message: message.into(),
        }
    }
}

/// One emitted hand pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub seq: u64,
    pub ts_ms: u64,
    pub pose: HandPose,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TickOutput {
    pub frame: Option<Frame>,
    pub feedback: Vec<FeedbackEvent>,
    pub interactions: Vec<InteractionEvent>,
    /// Objects whose state changed since the previous tick.
    pub scene_delta: Vec<SceneObject>,
}

impl TickOutput {
    pub fn frame(&self) -> &Frame {
        self.frame.as_ref().expect("every tick emits a frame")
    }
}

/// What happened to a queued job, in order. Every enqueued job ends in
/// exactly one of completed, aborted or dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditKind {
    Rejected,
    Ignored,
    Parked,
    Cancelled,
    Enqueued,
    Started,
    Completed,
    Aborted,
    Dropped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    /// Command sequence number the entry belongs to.
    pub seq: u64,
    /// Queue job id; 0 for commands that never became jobs.
    pub job: u64,
    pub kind: AuditKind,
    pub at_ms: u64,
}
