//! Gesture clips: pose sequences annotated with phase and interaction metadata.
//!
//! A clip on disk is a bundle directory holding `meta.json` and the pose file it
//! names. Pose files are plain text, 63 scalars per frame; any mix of
//! whitespace, commas and newlines separates values. Built-in clips are
//! synthesized so every gesture id always has something to play.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::skeleton::{translate_pose, HandPose, JointId, Vec3, JOINT_COUNT, POSE_SCALARS};

/// Clips within this relative scale error of the reference are left untouched,
/// which keeps normalization idempotent bit-for-bit.
const SCALE_FIXED_POINT_EPS: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum GestureError {
    #[error("metadata schema error: {0}")]
    Schema(String),
    #[error("{what} {value} out of bounds for a clip of {len} frames")]
    Bounds {
        what: &'static str,
        value: usize,
        len: usize,
    },
    #[error("unknown joint `{0}` in interacting_joint")]
    UnknownJoint(String),
    #[error("unknown phase `{0}`")]
    UnknownPhase(String),
    #[error("wrist and middle MCP coincide in the first frame")]
    ZeroSpan,
    #[error("pose data: {0}")]
    PoseData(String),
    #[error("no clip registered for gesture `{0}`")]
    Missing(String),
    #[error("cannot synthesize custom gesture `{0}`")]
    NotSynthesizable(String),
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Gesture vocabulary. The builtin set is closed; bundles may register more
/// names, which parse as [`GestureId::Custom`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GestureId {
    Pinch,
    Point,
    Push,
    Grab,
    Swipe,
    Punch,
    Squeeze,
    Cut,
    ThumbUp,
    ThumbDown,
    OpenHand,
    Custom(String),
}

impl GestureId {
    pub const BUILTIN: [GestureId; 11] = [
        GestureId::Pinch,
        GestureId::Point,
        GestureId::Push,
        GestureId::Grab,
        GestureId::Swipe,
        GestureId::Punch,
        GestureId::Squeeze,
        GestureId::Cut,
        GestureId::ThumbUp,
        GestureId::ThumbDown,
        GestureId::OpenHand,
    ];

    pub fn as_str(&self) -> &str {
        match self {
            GestureId::Pinch => "pinch",
            GestureId::Point => "point",
            GestureId::Push => "push",
            GestureId::Grab => "grab",
            GestureId::Swipe => "swipe",
            GestureId::Punch => "punch",
            GestureId::Squeeze => "squeeze",
            GestureId::Cut => "cut",
            GestureId::ThumbUp => "thumb_up",
            GestureId::ThumbDown => "thumb_down",
            GestureId::OpenHand => "open_hand",
            GestureId::Custom(name) => name,
        }
    }

    /// Builtin lookup; `release` is accepted for `open_hand`.
    pub fn builtin(name: &str) -> Option<GestureId> {
        let key = name.trim().replace([' ', '-'], "_");
        if key == "release" {
            return Some(GestureId::OpenHand);
        }
        GestureId::BUILTIN.iter().find(|g| g.as_str() == key).cloned()
    }

    /// Gestures that can pick up and carry an object.
    pub fn binds_objects(&self) -> bool {
        matches!(self, GestureId::Grab | GestureId::Pinch)
    }

    /// Gestures that actuate buttons during their stroke.
    pub fn presses(&self) -> bool {
        matches!(self, GestureId::Point | GestureId::Push)
    }
}

impl fmt::Display for GestureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GestureId {
    type Err = GestureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        GestureId::builtin(s).ok_or_else(|| GestureError::Missing(s.to_string()))
    }
}

impl Serialize for GestureId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for GestureId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Ok(GestureId::builtin(&s).unwrap_or(GestureId::Custom(s)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Preparation,
    Stroke,
    Retraction,
}

impl FromStr for Phase {
    type Err = GestureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "preparation" => Ok(Phase::Preparation),
            "stroke" => Ok(Phase::Stroke),
            "retraction" => Ok(Phase::Retraction),
            other => Err(GestureError::UnknownPhase(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub name: Phase,
    pub start_frame: usize,
    pub end_frame: usize,
}

/// The metadata document stored next to each clip's pose data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GestureMetadata {
    pub name: String,
    pub data_format: String,
    pub data_source: String,
    pub num_hands: u32,
    pub right_hand_data_file: String,
    pub left_hand_data_file: Option<String>,
    pub is_hold_at_peak: bool,
    pub is_static: bool,
    pub interacting_frame: usize,
    pub interacting_joint: Vec<String>,
    pub segments: Vec<Segment>,
}

impl GestureMetadata {
    pub fn validate(&self, len: usize) -> Result<(), GestureError> {
        if self.num_hands == 0 {
            return Err(GestureError::Schema("num_hands must be at least 1".into()));
        }
        if self.segments.is_empty() {
            return Err(GestureError::Schema("segments must not be empty".into()));
        }
        let mut expected_start = 0;
        for seg in &self.segments {
            if seg.start_frame != expected_start {
                return Err(GestureError::Schema(format!(
                    "segment {:?} starts at {} but the previous one ends at {}",
                    seg.name, seg.start_frame, expected_start
                )));
            }
            if seg.end_frame <= seg.start_frame {
                return Err(GestureError::Schema(format!(
                    "segment {:?} is empty",
                    seg.name
                )));
            }
            expected_start = seg.end_frame;
        }
        if expected_start != len {
            return Err(GestureError::Bounds {
                what: "segment end",
                value: expected_start,
                len,
            });
        }
        if self.interacting_frame >= len {
            return Err(GestureError::Bounds {
                what: "interacting_frame",
                value: self.interacting_frame,
                len,
            });
        }
        for name in &self.interacting_joint {
            name.parse::<JointId>()
                .map_err(|_| GestureError::UnknownJoint(name.clone()))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GestureClip {
    pub metadata: GestureMetadata,
    pub frames: Vec<HandPose>,
}

impl GestureClip {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn id(&self) -> GestureId {
        GestureId::builtin(&self.metadata.name)
            .unwrap_or_else(|| GestureId::Custom(self.metadata.name.clone()))
    }

    pub fn interacting_frame(&self) -> usize {
        self.metadata.interacting_frame
    }

    /// First annotated interacting joint; the wrist when none is given.
    pub fn interacting_joint(&self) -> JointId {
        self.metadata
            .interacting_joint
            .first()
            .and_then(|n| n.parse().ok())
            .unwrap_or(JointId::Wrist)
    }

    pub fn phase_at(&self, frame: usize) -> Option<Phase> {
        self.metadata
            .segments
            .iter()
            .find(|s| (s.start_frame..s.end_frame).contains(&frame))
            .map(|s| s.name)
    }
}

pub fn phase_range(clip: &GestureClip, phase: &str) -> Result<Range<usize>, GestureError> {
    let wanted: Phase = phase.parse()?;
    clip.metadata
        .segments
        .iter()
        .find(|s| s.name == wanted)
        .map(|s| s.start_frame..s.end_frame)
        .ok_or_else(|| GestureError::UnknownPhase(phase.to_string()))
}

/// Parses pose data: 63 scalars per frame in joint order.
pub fn parse_pose_data(text: &str) -> Result<Vec<HandPose>, GestureError> {
    let mut values = Vec::new();
    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("");
        for tok in line.split(|c: char| c.is_whitespace() || c == ',') {
            if tok.is_empty() {
                continue;
            }
            let v: f64 = tok
                .parse()
                .map_err(|_| GestureError::PoseData(format!("not a number: `{tok}`")))?;
            values.push(v);
        }
    }
    if values.is_empty() || values.len() % POSE_SCALARS != 0 {
        return Err(GestureError::PoseData(format!(
            "{} scalars is not a whole number of {POSE_SCALARS}-scalar frames",
            values.len()
        )));
    }
    values
        .chunks(POSE_SCALARS)
        .enumerate()
        .map(|(i, chunk)| {
            HandPose::from_flat(chunk).map_err(|e| GestureError::PoseData(format!("frame {i}: {e}")))
        })
        .collect()
}

pub fn format_pose_data(frames: &[HandPose]) -> String {
    let mut out = String::new();
    for frame in frames {
        let line: Vec<String> = frame.to_flat().iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

/// Builds a clip from a metadata document and its pose data, then normalizes it.
pub fn load_gesture(
    metadata_doc: &str,
    pose_data: &str,
    reference_size: f64,
) -> Result<GestureClip, GestureError> {
    let metadata: GestureMetadata =
        serde_json::from_str(metadata_doc).map_err(|e| GestureError::Schema(e.to_string()))?;
    let frames = parse_pose_data(pose_data)?;
    metadata.validate(frames.len())?;
    normalize_clip(&GestureClip { metadata, frames }, reference_size)
}

/// Loads one bundle directory (`meta.json` plus the pose file it references).
pub fn load_bundle(dir: &Path, reference_size: f64) -> Result<GestureClip, GestureError> {
    let read = |p: &Path| {
        fs::read_to_string(p).map_err(|source| GestureError::Io {
            path: p.display().to_string(),
            source,
        })
    };
    let meta_path = dir.join("meta.json");
    let meta_doc = read(&meta_path)?;
    let metadata: GestureMetadata =
        serde_json::from_str(&meta_doc).map_err(|e| GestureError::Schema(e.to_string()))?;
    let pose_doc = read(&dir.join(&metadata.right_hand_data_file))?;
    load_gesture(&meta_doc, &pose_doc, reference_size)
}

/// Moves the first-frame wrist to the origin and scales so the first-frame
/// wrist to middle-MCP span equals `reference_size`.
pub fn normalize_clip(raw: &GestureClip, reference_size: f64) -> Result<GestureClip, GestureError> {
    let first = raw
        .frames
        .first()
        .ok_or_else(|| GestureError::PoseData("clip has no frames".into()))?;
    let origin = first.wrist();
    let span = (first.joint(JointId::MiddleMcp) - origin).norm();
    if span <= f64::EPSILON {
        return Err(GestureError::ZeroSpan);
    }
    let scale = reference_size / span;
    if origin == Vec3::zeros() && (scale - 1.0).abs() <= SCALE_FIXED_POINT_EPS {
        return Ok(raw.clone());
    }
    let frames = raw
        .frames
        .iter()
        .map(|f| f.map(|j| (j - origin) * scale))
        .collect();
    Ok(GestureClip {
        metadata: raw.metadata.clone(),
        frames,
    })
}

/// Parameters for procedural clips.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    /// Frame count for dynamic gestures (static ones always have one frame).
    pub frames: usize,
    pub seed: u64,
    /// Amplitude of a rigid per-frame tremor, meters. Zero disables it.
    pub jitter: f64,
    pub reference_size: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            frames: 60,
            seed: 0,
            jitter: 0.0,
            reference_size: 0.09,
        }
    }
}

/// Finger curl and thumb placement for one synthetic frame.
#[derive(Debug, Clone, Copy)]
struct Posture {
    /// Curl of index, middle, ring, pinky in [0, 1].
    flex: [f64; 4],
    thumb: ThumbShape,
}

#[derive(Debug, Clone, Copy)]
enum ThumbShape {
    /// Blend from extended (0) to tucked across the palm (1).
    Tuck(f64),
    /// Extended along +y (1) or -y (-1).
    Vertical(f64),
    /// Tip drawn toward the index tip, blend in [0, 1].
    Oppose(f64),
}

const MCP: [[f64; 3]; 4] = [
    [-0.022, 0.0, -0.088],
    [0.0, 0.0, -0.09],
    [0.02, 0.0, -0.085],
    [0.038, 0.0, -0.078],
];
const PHALANGES: [[f64; 3]; 4] = [
    [0.040, 0.025, 0.020],
    [0.045, 0.028, 0.022],
    [0.042, 0.026, 0.020],
    [0.032, 0.020, 0.018],
];
const THUMB_CMC: [f64; 3] = [-0.02, -0.01, -0.02];
const THUMB_OPEN: [[f64; 3]; 3] = [
    [-0.042, -0.012, -0.040],
    [-0.058, -0.014, -0.060],
    [-0.068, -0.015, -0.080],
];
const THUMB_TUCKED: [[f64; 3]; 3] = [
    [-0.030, -0.025, -0.045],
    [-0.018, -0.035, -0.062],
    [-0.004, -0.035, -0.075],
];

fn v(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

fn lerp(a: Vec3, b: Vec3, t: f64) -> Vec3 {
    a + (b - a) * t
}

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// A right hand, palm down, fingers toward -z, wrist at the origin.
fn build_pose(posture: Posture) -> HandPose {
    let mut joints = [Vec3::zeros(); JOINT_COUNT];
    joints[JointId::Wrist.index()] = Vec3::zeros();
    for finger in 0..4 {
        let base = 5 + finger * 4;
        let f = posture.flex[finger].clamp(0.0, 1.0);
        let bends = [80.0 * f, 80.0 * f + 95.0 * f, 175.0 * f + 65.0 * f];
        let mut p = v(MCP[finger]);
        joints[base] = p;
        for (seg, bend) in bends.iter().enumerate() {
            let theta = bend.to_radians();
            p += Vec3::new(0.0, -theta.sin(), -theta.cos()) * PHALANGES[finger][seg];
            joints[base + 1 + seg] = p;
        }
    }
    joints[JointId::ThumbCmc.index()] = v(THUMB_CMC);
    let thumb: [Vec3; 3] = match posture.thumb {
        ThumbShape::Tuck(t) => {
            std::array::from_fn(|i| lerp(v(THUMB_OPEN[i]), v(THUMB_TUCKED[i]), t))
        }
        ThumbShape::Vertical(dir) => {
            let cmc = v(THUMB_CMC);
            [
                cmc + Vec3::new(-0.012, 0.012 * dir, -0.012),
                cmc + Vec3::new(-0.016, 0.037 * dir, -0.014),
                cmc + Vec3::new(-0.018, 0.058 * dir, -0.015),
            ]
        }
        ThumbShape::Oppose(t) => {
            let index_tip = joints[JointId::IndexTip.index()];
            let open_tip = v(THUMB_OPEN[2]);
            let away = open_tip - index_tip;
            let contact = index_tip + away.normalize() * 0.005;
            let tip = lerp(open_tip, contact, t);
            let ip = lerp(v(THUMB_OPEN[1]), (tip + v(THUMB_OPEN[0])) * 0.5, t * 0.8);
            [v(THUMB_OPEN[0]), ip, tip]
        }
    };
    joints[JointId::ThumbMcp.index()] = thumb[0];
    joints[JointId::ThumbIp.index()] = thumb[1];
    joints[JointId::ThumbTip.index()] = thumb[2];
    HandPose::new(joints).expect("synthetic joints are finite")
}

/// Segment boundaries and interaction point as fractions of the clip length.
struct Timing {
    stroke_start: f64,
    stroke_end: f64,
    interact: f64,
}

const DEFAULT_TIMING: Timing = Timing {
    stroke_start: 0.3,
    stroke_end: 0.7,
    interact: 0.6,
};

/// Proportions of the recorded cut clip (58 / 123 / 81 of 200 frames).
const CUT_TIMING: Timing = Timing {
    stroke_start: 0.29,
    stroke_end: 0.615,
    interact: 0.405,
};

struct Layout {
    stroke_start: usize,
    stroke_end: usize,
    interact: usize,
    len: usize,
}

impl Layout {
    fn new(len: usize, timing: &Timing) -> Layout {
        let len = len.max(3);
        let at = |f: f64| ((len as f64) * f).round() as usize;
        let stroke_start = at(timing.stroke_start).clamp(1, len - 2);
        let stroke_end = at(timing.stroke_end).clamp(stroke_start + 1, len - 1);
        let interact = at(timing.interact).clamp(stroke_start, stroke_end - 1);
        Layout {
            stroke_start,
            stroke_end,
            interact,
            len,
        }
    }

    /// 0 at the clip start, 1 at the interacting frame.
    fn approach(&self, k: usize) -> f64 {
        smoothstep(k as f64 / self.interact.max(1) as f64)
    }

    /// 0 at the interacting frame, 1 at the last frame.
    fn retreat(&self, k: usize) -> f64 {
        if k <= self.interact {
            0.0
        } else {
            smoothstep((k - self.interact) as f64 / (self.len - 1 - self.interact).max(1) as f64)
        }
    }

    /// Stroke-only ramp: 0 before the stroke, 1 at the interacting frame.
    fn strike(&self, k: usize) -> f64 {
        if k < self.stroke_start {
            0.0
        } else {
            let span = (self.interact - self.stroke_start).max(1) as f64;
            smoothstep((k - self.stroke_start) as f64 / span)
        }
    }

    fn segments(&self) -> Vec<Segment> {
        vec![
            Segment {
                name: Phase::Preparation,
                start_frame: 0,
                end_frame: self.stroke_start,
            },
            Segment {
                name: Phase::Stroke,
                start_frame: self.stroke_start,
                end_frame: self.stroke_end,
            },
            Segment {
                name: Phase::Retraction,
                start_frame: self.stroke_end,
                end_frame: self.len,
            },
        ]
    }
}

fn metadata(
    id: &GestureId,
    hold_at_peak: bool,
    is_static: bool,
    interacting_frame: usize,
    joint: JointId,
    segments: Vec<Segment>,
) -> GestureMetadata {
    GestureMetadata {
        name: id.as_str().to_string(),
        data_format: "unified".into(),
        data_source: "synthetic".into(),
        num_hands: 1,
        right_hand_data_file: format!("{}.txt", id.as_str()),
        left_hand_data_file: None,
        is_hold_at_peak: hold_at_peak,
        is_static,
        interacting_frame,
        interacting_joint: vec![joint.name().to_string()],
        segments,
    }
}

fn fist(thumb: ThumbShape) -> Posture {
    Posture {
        flex: [1.0; 4],
        thumb,
    }
}

/// Procedurally generates a clip for one of the builtin gestures.
pub fn synth_gesture(id: &GestureId, params: &SynthConfig) -> Result<GestureClip, GestureError> {
    let (metadata, frames) = match id {
        GestureId::ThumbUp | GestureId::ThumbDown => {
            let dir = if *id == GestureId::ThumbUp { 1.0 } else { -1.0 };
            let pose = build_pose(fist(ThumbShape::Vertical(dir)));
            let segments = vec![Segment {
                name: Phase::Stroke,
                start_frame: 0,
                end_frame: 1,
            }];
            (
                metadata(id, false, true, 0, JointId::ThumbTip, segments),
                vec![pose],
            )
        }
        GestureId::Custom(name) => return Err(GestureError::NotSynthesizable(name.clone())),
        _ => {
            let timing = if *id == GestureId::Cut {
                &CUT_TIMING
            } else {
                &DEFAULT_TIMING
            };
            let layout = Layout::new(params.frames, timing);
            let (hold, joint) = match id {
                GestureId::Pinch => (true, JointId::IndexTip),
                GestureId::Point => (false, JointId::IndexTip),
                GestureId::Push => (false, JointId::MiddleTip),
                GestureId::Grab => (true, JointId::MiddleMcp),
                GestureId::Swipe => (false, JointId::IndexTip),
                GestureId::Punch => (false, JointId::MiddleMcp),
                GestureId::Squeeze => (false, JointId::MiddleMcp),
                GestureId::Cut => (false, JointId::PinkyMcp),
                _ => (false, JointId::Wrist),
            };
            let frames = (0..layout.len)
                .map(|k| dynamic_frame(id, &layout, k))
                .collect();
            (
                metadata(id, hold, false, layout.interact, joint, layout.segments()),
                frames,
            )
        }
    };
    let mut frames: Vec<HandPose> = frames;
    if params.jitter > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        for f in frames.iter_mut() {
            let d = Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ) * params.jitter;
            *f = translate_pose(f, d);
        }
    }
    normalize_clip(&GestureClip { metadata, frames }, params.reference_size)
}

fn dynamic_frame(id: &GestureId, layout: &Layout, k: usize) -> HandPose {
    let approach = layout.approach(k);
    let retreat = layout.retreat(k);
    let strike = layout.strike(k);
    let (posture, offset) = match id {
        GestureId::Pinch => {
            let close = approach * (1.0 - 0.4 * retreat);
            (
                Posture {
                    flex: [0.35, 0.5, 0.6, 0.7],
                    thumb: ThumbShape::Oppose(close),
                },
                Vec3::zeros(),
            )
        }
        GestureId::Point => (
            Posture {
                flex: [0.0, 1.0, 1.0, 1.0],
                thumb: ThumbShape::Tuck(1.0),
            },
            Vec3::new(0.0, 0.0, -0.05 * strike * (1.0 - retreat)),
        ),
        GestureId::Push => (
            Posture {
                flex: [0.05; 4],
                thumb: ThumbShape::Tuck(0.2),
            },
            Vec3::new(0.0, 0.0, -0.06 * strike * (1.0 - retreat)),
        ),
        GestureId::Grab => (
            Posture {
                flex: [0.1 + 0.75 * approach; 4],
                thumb: ThumbShape::Tuck(approach),
            },
            Vec3::zeros(),
        ),
        GestureId::Squeeze => {
            let c = approach * (1.0 - 0.5 * retreat);
            (
                Posture {
                    flex: [0.5 + 0.5 * c; 4],
                    thumb: ThumbShape::Tuck(0.5 + 0.5 * c),
                },
                Vec3::zeros(),
            )
        }
        GestureId::Swipe => {
            let travel = 0.02 * smoothstep(k as f64 / layout.stroke_start as f64) - 0.16 * strike;
            (
                Posture {
                    flex: [0.05; 4],
                    thumb: ThumbShape::Tuck(0.0),
                },
                Vec3::new(travel, 0.0, 0.0),
            )
        }
        GestureId::Punch => {
            let windup = 0.03 * smoothstep(k as f64 / layout.stroke_start as f64);
            let z = windup * (1.0 - strike) - 0.12 * strike * (1.0 - retreat);
            (fist(ThumbShape::Tuck(1.0)), Vec3::new(0.0, 0.0, z))
        }
        GestureId::Cut => {
            let raise = 0.06 * smoothstep(k as f64 / layout.stroke_start as f64);
            let y = raise * (1.0 - strike) - 0.06 * strike * (1.0 - retreat);
            (
                Posture {
                    flex: [0.0; 4],
                    thumb: ThumbShape::Tuck(0.3),
                },
                Vec3::new(0.0, y, 0.0),
            )
        }
        // open_hand: from a closed grip to a flat hand.
        _ => {
            let open = smoothstep(k as f64 / (layout.len - 1) as f64);
            (
                Posture {
                    flex: [0.85 * (1.0 - open); 4],
                    thumb: ThumbShape::Tuck(1.0 - open),
                },
                Vec3::zeros(),
            )
        }
    };
    translate_pose(&build_pose(posture), offset)
}

/// Name-keyed clip registry. Built once at startup, then read-only.
#[derive(Debug, Clone, Default)]
pub struct GestureLibrary {
    clips: BTreeMap<String, GestureClip>,
}

impl GestureLibrary {
    /// Synthetic clips for every builtin gesture.
    pub fn builtin(params: &SynthConfig) -> GestureLibrary {
        let mut lib = GestureLibrary::default();
        for id in GestureId::BUILTIN.iter() {
            let clip = synth_gesture(id, params).expect("builtin gestures synthesize");
            lib.register(clip);
        }
        lib
    }

    /// Builtins, overridden or extended by every bundle under `root`.
    pub fn with_bundles(root: &Path, params: &SynthConfig) -> Result<GestureLibrary, GestureError> {
        let mut lib = GestureLibrary::builtin(params);
        let entries = fs::read_dir(root).map_err(|source| GestureError::Io {
            path: root.display().to_string(),
            source,
        })?;
        let mut dirs: Vec<_> = entries
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.join("meta.json").is_file())
            .collect();
        dirs.sort();
        for dir in dirs {
            lib.register(load_bundle(&dir, params.reference_size)?);
        }
        Ok(lib)
    }

    pub fn register(&mut self, clip: GestureClip) {
        self.clips.insert(clip.metadata.name.clone(), clip);
    }

    pub fn get(&self, id: &GestureId) -> Result<&GestureClip, GestureError> {
        self.clips
            .get(id.as_str())
            .ok_or_else(|| GestureError::Missing(id.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.clips.keys().map(String::as_str)
    }

    pub fn custom_names(&self) -> Vec<String> {
        self.names()
            .filter(|n| GestureId::builtin(n).is_none())
            .map(str::to_string)
            .collect()
    }

    /// Resolves a gesture name against builtins and registered customs.
    pub fn lookup_name(&self, name: &str) -> Option<GestureId> {
        GestureId::builtin(name).or_else(|| {
            self.clips
                .contains_key(name)
                .then(|| GestureId::Custom(name.to_string()))
        })
    }

    pub fn validate_all(&self) -> Result<(), GestureError> {
        for clip in self.clips.values() {
            clip.metadata.validate(clip.len())?;
        }
        Ok(())
    }
}
