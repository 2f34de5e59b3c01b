//! Hand-pose data model and rigid-motion math.
//!
//! Coordinates are right-handed, y-up, in meters. A [`HandPose`] is 21 joint
//! positions in the canonical keypoint order; on the wire it is a flat list of
//! 63 scalars, x/y/z interleaved per joint.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Rotation3, Unit, Vector3};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

pub const JOINT_COUNT: usize = 21;
pub const POSE_SCALARS: usize = JOINT_COUNT * 3;

/// Minimum separation between the joints that define the hand frame.
const MIN_AXIS_SPAN: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SkeletonError {
    #[error("unknown joint name `{0}`")]
    UnknownJoint(String),
    #[error("degenerate pose: {0}")]
    DegeneratePose(&'static str),
    #[error("pose holds a non-finite coordinate at joint {0}")]
    NonFinite(usize),
    #[error("expected {POSE_SCALARS} scalars, got {0}")]
    WrongLength(usize),
    #[error("unknown rotation `{0}`")]
    UnknownRotation(String),
}

macro_rules! joints {
    ($($variant:ident => $name:literal),+ $(,)?) => {
        /// The 21 hand keypoints, in wire order.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        #[repr(u8)]
        pub enum JointId {
            $($variant),+
        }

        impl JointId {
            pub const ALL: [JointId; JOINT_COUNT] = [$(JointId::$variant),+];

            pub fn name(self) -> &'static str {
                match self {
                    $(JointId::$variant => $name),+
                }
            }
        }
    };
}

joints! {
    Wrist => "wrist",
    ThumbCmc => "thumb_cmc",
    ThumbMcp => "thumb_mcp",
    ThumbIp => "thumb_ip",
    ThumbTip => "thumb_tip",
    IndexMcp => "index_mcp",
    IndexPip => "index_pip",
    IndexDip => "index_dip",
    IndexTip => "index_tip",
    MiddleMcp => "middle_mcp",
    MiddlePip => "middle_pip",
    MiddleDip => "middle_dip",
    MiddleTip => "middle_tip",
    RingMcp => "ring_mcp",
    RingPip => "ring_pip",
    RingDip => "ring_dip",
    RingTip => "ring_tip",
    PinkyMcp => "pinky_mcp",
    PinkyPip => "pinky_pip",
    PinkyDip => "pinky_dip",
    PinkyTip => "pinky_tip",
}

impl JointId {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<JointId> {
        JointId::ALL.get(index).copied()
    }

    pub const FINGERTIPS: [JointId; 5] = [
        JointId::ThumbTip,
        JointId::IndexTip,
        JointId::MiddleTip,
        JointId::RingTip,
        JointId::PinkyTip,
    ];
}

impl fmt::Display for JointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for JointId {
    type Err = SkeletonError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        JointId::ALL
            .iter()
            .copied()
            .find(|j| j.name() == s)
            .ok_or_else(|| SkeletonError::UnknownJoint(s.to_string()))
    }
}

impl Serialize for JointId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for JointId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Canonical index of a joint name.
pub fn joint_index(name: &str) -> Result<usize, SkeletonError> {
    name.parse::<JointId>().map(JointId::index)
}

/// One frame of hand keypoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HandPose {
    joints: [Vec3; JOINT_COUNT],
}

impl HandPose {
    pub fn new(joints: [Vec3; JOINT_COUNT]) -> Result<Self, SkeletonError> {
        if let Some(i) = joints.iter().position(|j| !j.iter().all(|c| c.is_finite())) {
            return Err(SkeletonError::NonFinite(i));
        }
        Ok(HandPose { joints })
    }

    pub fn zeros() -> Self {
        HandPose {
            joints: [Vec3::zeros(); JOINT_COUNT],
        }
    }

    pub fn joint(&self, id: JointId) -> Vec3 {
        self.joints[id.index()]
    }

    pub fn wrist(&self) -> Vec3 {
        self.joint(JointId::Wrist)
    }

    pub fn joints(&self) -> &[Vec3; JOINT_COUNT] {
        &self.joints
    }

    pub fn to_flat(&self) -> [f64; POSE_SCALARS] {
        let mut out = [0.0; POSE_SCALARS];
        for (i, j) in self.joints.iter().enumerate() {
            out[3 * i] = j.x;
            out[3 * i + 1] = j.y;
            out[3 * i + 2] = j.z;
        }
        out
    }

    pub fn from_flat(values: &[f64]) -> Result<Self, SkeletonError> {
        if values.len() != POSE_SCALARS {
            return Err(SkeletonError::WrongLength(values.len()));
        }
        let mut joints = [Vec3::zeros(); JOINT_COUNT];
        for (i, j) in joints.iter_mut().enumerate() {
            *j = Vec3::new(values[3 * i], values[3 * i + 1], values[3 * i + 2]);
        }
        HandPose::new(joints)
    }

    /// Applies `f` to every joint. The caller keeps results finite.
    pub(crate) fn map(&self, f: impl Fn(Vec3) -> Vec3) -> HandPose {
        let mut joints = self.joints;
        for j in joints.iter_mut() {
            *j = f(*j);
        }
        HandPose { joints }
    }
}

impl Serialize for HandPose {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_flat().as_slice().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for HandPose {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let values = Vec::<f64>::deserialize(deserializer)?;
        HandPose::from_flat(&values).map_err(serde::de::Error::custom)
    }
}

/// Orthonormal hand frame derived from the wrist and the index/middle knuckles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HandAxes {
    /// Middle MCP toward index MCP, orthogonalized against `longitudinal`.
    pub lateral: Vec3,
    /// Middle MCP toward the wrist.
    pub longitudinal: Vec3,
    /// `lateral × longitudinal`; points out of the back of a right hand.
    pub normal: Vec3,
}

pub fn hand_axes(pose: &HandPose) -> Result<HandAxes, SkeletonError> {
    let middle = pose.joint(JointId::MiddleMcp);
    let index = pose.joint(JointId::IndexMcp);
    let wrist = pose.wrist();
    if (index - middle).norm() <= MIN_AXIS_SPAN
        || (wrist - middle).norm() <= MIN_AXIS_SPAN
        || (wrist - index).norm() <= MIN_AXIS_SPAN
    {
        return Err(SkeletonError::DegeneratePose("wrist and MCP joints coincide"));
    }
    let longitudinal = (wrist - middle).normalize();
    let raw_lateral = index - middle;
    let lateral = raw_lateral - longitudinal * raw_lateral.dot(&longitudinal);
    if lateral.norm() <= MIN_AXIS_SPAN {
        return Err(SkeletonError::DegeneratePose("wrist and MCP joints are collinear"));
    }
    let lateral = lateral.normalize();
    let normal = lateral.cross(&longitudinal).normalize();
    Ok(HandAxes {
        lateral,
        longitudinal,
        normal,
    })
}

/// Hand-relative rotations. Pan turns about the normal axis, roll about the
/// longitudinal axis, tilt about the lateral axis; left/up are positive by the
/// right-hand rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RotationKind {
    #[serde(alias = "pan left")]
    PanLeft,
    #[serde(alias = "pan right")]
    PanRight,
    #[serde(alias = "roll left")]
    RollLeft,
    #[serde(alias = "roll right")]
    RollRight,
    #[serde(alias = "tilt up")]
    TiltUp,
    #[serde(alias = "tilt down")]
    TiltDown,
}

impl RotationKind {
    pub const ALL: [RotationKind; 6] = [
        RotationKind::PanLeft,
        RotationKind::PanRight,
        RotationKind::RollLeft,
        RotationKind::RollRight,
        RotationKind::TiltUp,
        RotationKind::TiltDown,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RotationKind::PanLeft => "pan_left",
            RotationKind::PanRight => "pan_right",
            RotationKind::RollLeft => "roll_left",
            RotationKind::RollRight => "roll_right",
            RotationKind::TiltUp => "tilt_up",
            RotationKind::TiltDown => "tilt_down",
        }
    }

    pub fn inverse(self) -> RotationKind {
        match self {
            RotationKind::PanLeft => RotationKind::PanRight,
            RotationKind::PanRight => RotationKind::PanLeft,
            RotationKind::RollLeft => RotationKind::RollRight,
            RotationKind::RollRight => RotationKind::RollLeft,
            RotationKind::TiltUp => RotationKind::TiltDown,
            RotationKind::TiltDown => RotationKind::TiltUp,
        }
    }

    /// The hand axis this rotation turns about, and the sign applied to the angle.
    pub fn axis_and_sign(self, axes: &HandAxes) -> (Vec3, f64) {
        match self {
            RotationKind::PanLeft => (axes.normal, 1.0),
            RotationKind::PanRight => (axes.normal, -1.0),
            RotationKind::RollLeft => (axes.longitudinal, 1.0),
            RotationKind::RollRight => (axes.longitudinal, -1.0),
            RotationKind::TiltUp => (axes.lateral, 1.0),
            RotationKind::TiltDown => (axes.lateral, -1.0),
        }
    }
}

impl FromStr for RotationKind {
    type Err = SkeletonError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().replace([' ', '-'], "_");
        RotationKind::ALL
            .iter()
            .copied()
            .find(|r| r.as_str() == key)
            .ok_or_else(|| SkeletonError::UnknownRotation(s.to_string()))
    }
}

impl fmt::Display for RotationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn translate_pose(pose: &HandPose, delta: Vec3) -> HandPose {
    pose.map(|j| j + delta)
}

/// Rotates every joint about the chosen hand axis, pivoting at the wrist.
pub fn rotate_pose(
    pose: &HandPose,
    rotation: RotationKind,
    angle: f64,
) -> Result<HandPose, SkeletonError> {
    let axes = hand_axes(pose)?;
    let (axis, sign) = rotation.axis_and_sign(&axes);
    let rot = Rotation3::from_axis_angle(&Unit::new_normalize(axis), sign * angle);
    let pivot = pose.wrist();
    Ok(pose.map(|j| pivot + rot * (j - pivot)))
}
