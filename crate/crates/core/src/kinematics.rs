//! Turns gesture clips and motion commands into concrete pose sequences.

use serde::Serialize;
use thiserror::Error;

use crate::gesture::GestureClip;
use crate::skeleton::{rotate_pose, translate_pose, HandPose, JointId, RotationKind, SkeletonError, Vec3};

/// Displacements below this are treated as "already there".
pub const NEGLIGIBLE: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum KinematicsError {
    #[error("target is not finite")]
    NonFiniteTarget,
    #[error("gesture clip has no frames")]
    EmptyClip,
    #[error("step length must be positive")]
    BadStep,
    #[error(transparent)]
    Skeleton(#[from] SkeletonError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MotionPlan {
    pub frames: Vec<HandPose>,
    pub interacting_frame: usize,
    /// Waypoints of the anchor joint, for drawing direction arrows.
    pub preview_path: Vec<Vec3>,
}

impl MotionPlan {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn last(&self) -> &HandPose {
        self.frames.last().expect("plans are never empty")
    }
}

const PREVIEW_POINTS: usize = 8;

fn preview(start: Vec3, path: impl Fn(usize) -> Vec3, len: usize) -> Vec<Vec3> {
    let end = path(len - 1);
    if (end - start).norm() <= NEGLIGIBLE {
        return vec![start];
    }
    let mut pts = vec![start];
    for i in 1..PREVIEW_POINTS {
        let k = i * (len - 1) / PREVIEW_POINTS;
        if k > 0 && k < len - 1 {
            pts.push(path(k));
        }
    }
    pts.push(end);
    pts.dedup();
    pts
}

fn check_point(p: Vec3) -> Result<(), KinematicsError> {
    if p.iter().all(|c| c.is_finite()) {
        Ok(())
    } else {
        Err(KinematicsError::NonFiniteTarget)
    }
}

/// Plays `clip` from the current wrist position while spreading the offset
/// needed to put the interacting joint on `target` evenly over the frames up
/// to the interacting frame. Later frames keep the full offset.
///
/// A clip whose interacting frame is 0 cannot absorb the offset, so a straight
/// approach of `approach_step`-long frames is prepended instead.
pub fn plan_reach(
    clip: &GestureClip,
    current: &HandPose,
    target: Vec3,
    approach_step: f64,
) -> Result<MotionPlan, KinematicsError> {
    check_point(target)?;
    if clip.is_empty() {
        return Err(KinematicsError::EmptyClip);
    }
    let joint = clip.interacting_joint();
    let interacting = clip.interacting_frame().min(clip.len() - 1);
    let shift = current.wrist() - clip.frames[0].wrist();
    let base: Vec<HandPose> = clip.frames.iter().map(|f| translate_pose(f, shift)).collect();
    let total = target - base[interacting].joint(joint);

    let (frames, interacting_frame) = if interacting == 0 {
        let mut frames = Vec::new();
        if total.norm() > NEGLIGIBLE {
            if !(approach_step > 0.0) {
                return Err(KinematicsError::BadStep);
            }
            let n = ((total.norm() / approach_step) - 1e-9).ceil().max(1.0) as usize;
            for k in 0..n {
                frames.push(translate_pose(&base[0], total * (k as f64 / n as f64)));
            }
        }
        let offset = frames.len();
        frames.extend(base.iter().map(|f| translate_pose(f, total)));
        (frames, offset)
    } else {
        let step = total / interacting as f64;
        let frames = base
            .iter()
            .enumerate()
            .map(|(k, f)| translate_pose(f, step * k.min(interacting) as f64))
            .collect();
        (frames, interacting)
    };
    let start = frames[0].joint(joint);
    let preview_path = preview(start, |k| frames[k].joint(joint), frames.len());
    Ok(MotionPlan {
        frames,
        interacting_frame,
        preview_path,
    })
}

/// Straight-line move of `anchor` to `goal` in frames of at most `step` metres.
/// The plan starts one step away from `current` and ends on the goal.
pub fn plan_move_to(
    current: &HandPose,
    anchor: JointId,
    goal: Vec3,
    step: f64,
) -> Result<MotionPlan, KinematicsError> {
    check_point(goal)?;
    if !(step > 0.0) {
        return Err(KinematicsError::BadStep);
    }
    let origin = current.joint(anchor);
    let delta = goal - origin;
    let dist = delta.norm();
    if dist <= NEGLIGIBLE {
        return Ok(MotionPlan {
            frames: vec![*current],
            interacting_frame: 0,
            preview_path: vec![origin],
        });
    }
    let n = ((dist / step) - 1e-9).ceil().max(1.0) as usize;
    let frames: Vec<HandPose> = (1..=n)
        .map(|k| translate_pose(current, delta * (k as f64 / n as f64)))
        .collect();
    let preview_path = preview(origin, |k| if k == 0 { origin } else { frames[k - 1].joint(anchor) }, n + 1);
    Ok(MotionPlan {
        interacting_frame: n - 1,
        frames,
        preview_path,
    })
}

pub fn apply_translation(current: &HandPose, direction: Vec3, speed: f64, dt: f64) -> HandPose {
    translate_pose(current, direction * (speed * dt))
}

pub fn apply_rotation(
    current: &HandPose,
    rotation: RotationKind,
    angular_speed: f64,
    dt: f64,
) -> Result<HandPose, KinematicsError> {
    Ok(rotate_pose(current, rotation, angular_speed * dt)?)
}
