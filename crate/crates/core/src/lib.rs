pub mod config;
pub mod controller;
pub mod engine;
pub mod gesture;
pub mod interpreter;
pub mod kinematics;
pub mod protocol;
pub mod scene;
pub mod script;
pub mod skeleton;
