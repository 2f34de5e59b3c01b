use serde::{Deserialize, Serialize};

use crate::skeleton::Vec3;

/// Tunables shared by the planner, the scene and the playback controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    /// Nominal frame rate of the tick loop.
    pub fps: f64,
    /// Hand travel speed for goal-directed and continuous translation, m/s.
    pub hand_speed: f64,
    /// Continuous rotation speed, degrees per second.
    pub rotation_speed_deg: f64,
    /// Upper bound on an open-ended continuous motion, seconds of playback.
    pub continuous_limit_s: f64,
    pub min_speed_factor: f64,
    pub max_speed_factor: f64,
    /// Multiplier applied by `faster` and divided out by `slower`.
    pub speed_step: f64,
    pub history_depth: usize,
    /// Wrist to middle-MCP distance clips are scaled to.
    pub reference_hand_size: f64,
    /// Radius of the sphere standing in for the interacting joint.
    pub contact_radius: f64,
    /// Gap left between the hand and an object for relative placement.
    pub clearance: f64,
    /// How far above a container a released object may be and still drop in.
    pub drop_height: f64,
    /// Where the wrist rests when the engine starts.
    pub home_wrist: [f64; 3],
    pub command_history: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            fps: 60.0,
            hand_speed: 0.25,
            rotation_speed_deg: 120.0,
            continuous_limit_s: 1.5,
            min_speed_factor: 0.25,
            max_speed_factor: 4.0,
            speed_step: 1.5,
            history_depth: 64,
            reference_hand_size: 0.09,
            contact_radius: 0.015,
            clearance: 0.05,
            drop_height: 0.5,
            home_wrist: [0.0, 1.0, 0.35],
            command_history: 50,
        }
    }
}

impl EngineConfig {
    pub fn home(&self) -> Vec3 {
        Vec3::new(self.home_wrist[0], self.home_wrist[1], self.home_wrist[2])
    }

    pub fn rotation_speed(&self) -> f64 {
        self.rotation_speed_deg.to_radians()
    }

    /// Distance covered by one frame of travel at nominal speed.
    pub fn step_length(&self) -> f64 {
        self.hand_speed / self.fps
    }
}
