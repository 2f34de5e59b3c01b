//! Optional HTTP backend that hands commands to a language model service.
//!
//! The request carries the decomposition prompt, the command, the scene
//! metadata and the control vocabulary. Whatever comes back is validated
//! against the instruction schema before it may reach the engine.

use std::time::Duration;

use serde::Serialize;
use serde_json::{json, Value};

use super::instruction::{steps_from_value, Instruction};
use crate::gesture::GestureLibrary;
use crate::scene::{ConstraintKind, Relation, Scene};
use crate::skeleton::RotationKind;

use super::instruction::{Direction, TemporalControl};

/// Instruction given to the model ahead of the vocabulary.
pub const SYSTEM_PROMPT: &str = "Your objective is to break down a user command into actionable control components that the system can execute. Once you receive the command, follow these steps meticulously:

#### **Step 1: Command Fixing**

1. Input command is converted from speech, so minor errors may occur. If you notice any, please correct them and replace the original command with the fixed version.

#### **Step 2: Components Matching**

1. Carefully read through the entire command.

2. Imagine you are a person with only your right hand available (currently empty), standing in a wide space, surrounded by the objects and environment described in the command.

3. With point 2 in mind, align each command part (and necessary actions for execution, e.g., grabbing an object before moving it) with a corresponding control component listed below. Users may say or describe the interaction in various ways, the system should match the similar concept together. For example, \"chop\" and \"cut\" should both be matched to \"cut\", etc.

4. If no components can be matched, proceed DIRECTLY to Step 4.2, skip intermediate steps.

#### **Step 3: Ensuring Correct Order**

1. Components should follow the user's expected execution sequence.

#### **Step 4: Structuring Output**

1. Once the components are matched, fill in all fields within each component. ENSURE ALL FIELD VALUES ARE SELECTED FROM THE PREDEFINED OPTIONS PROVIDED BELOW.

2. Format each component as a JSON object as defined below, then output them sequentially in an array. If no components are matched, set the value of components to an empty array.
";

pub const ENV_ENDPOINT: &str = "PROXYHAND_BACKEND_URL";
pub const ENV_KEY: &str = "PROXYHAND_BACKEND_KEY";
pub const ENV_MODEL: &str = "PROXYHAND_BACKEND_MODEL";
pub const ENV_TIMEOUT_MS: &str = "PROXYHAND_BACKEND_TIMEOUT_MS";

#[derive(Debug, Clone, PartialEq)]
pub struct ExternalConfig {
    pub endpoint: String,
    pub api_key: Option<String>,
    pub model: Option<String>,
    pub timeout: Duration,
}

impl ExternalConfig {
    pub fn new(endpoint: impl Into<String>) -> ExternalConfig {
        ExternalConfig {
            endpoint: endpoint.into(),
            api_key: None,
            model: None,
            timeout: Duration::from_secs(5),
        }
    }

    /// Reads the backend settings from the environment; `None` without an endpoint.
    pub fn from_env() -> Option<ExternalConfig> {
        let endpoint = std::env::var(ENV_ENDPOINT).ok().filter(|s| !s.trim().is_empty())?;
        let mut cfg = ExternalConfig::new(endpoint);
        cfg.api_key = std::env::var(ENV_KEY).ok();
        cfg.model = std::env::var(ENV_MODEL).ok();
        if let Some(ms) = std::env::var(ENV_TIMEOUT_MS).ok().and_then(|v| v.parse().ok()) {
            cfg.timeout = Duration::from_millis(ms);
        }
        Some(cfg)
    }
}

#[derive(Serialize)]
struct Request<'a> {
    prompt: &'a str,
    command: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<&'a str>,
    scene: Value,
    vocabulary: Value,
    history: &'a [String],
}

/// The closed value sets the model must pick from.
pub fn vocabulary(library: &GestureLibrary) -> Value {
    let mut gestures: Vec<String> = library.names().map(str::to_string).collect();
    gestures.sort();
    json!({
        "gesture": {
            "gesture_type": gestures,
            "object": "optional object name from the scene",
            "is_ambiguous": "boolean, true when the object reference matches several scene objects",
            "hold": "optional boolean",
            "constraints": ConstraintKind::ALL.iter().map(|c| c.phrase()).collect::<Vec<_>>(),
        },
        "movement": {
            "movement_type": ["translational", "rotational"],
            "direction": Direction::ALL.iter().map(|d| d.as_str()).collect::<Vec<_>>(),
            "rotation": RotationKind::ALL.iter().map(|r| r.as_str()).collect::<Vec<_>>(),
            "position": Relation::ALL.iter().map(|r| r.phrase()).collect::<Vec<_>>(),
            "object": "optional object name from the scene",
            "is_ambiguous": "boolean",
        },
        "temporal": {
            "control": TemporalControl::ALL.iter().map(|c| c.as_str()).collect::<Vec<_>>(),
            "repeat": "optional count",
        },
    })
}

fn scene_metadata(scene: &Scene) -> Value {
    Value::Array(
        scene
            .objects()
            .iter()
            .map(|o| {
                json!({
                    "name": o.name,
                    "tags": o.tags,
                    "position": [o.position.x, o.position.y, o.position.z],
                    "affordance": o.affordance.kind(),
                })
            })
            .collect(),
    )
}

pub struct ExternalBackend {
    cfg: ExternalConfig,
    client: reqwest::blocking::Client,
}

impl ExternalBackend {
    pub fn new(cfg: ExternalConfig) -> Result<ExternalBackend, String> {
        let client = reqwest::blocking::Client::builder()
            .timeout(cfg.timeout)
            .connect_timeout(cfg.timeout)
            .build()
            .map_err(|e| e.to_string())?;
        Ok(ExternalBackend { cfg, client })
    }

    pub fn config(&self) -> &ExternalConfig {
        &self.cfg
    }

    /// Sends one command; every failure comes back as a note for the user.
    pub fn request(
        &self,
        command: &str,
        scene: &Scene,
        library: &GestureLibrary,
        history: &[String],
    ) -> Result<Vec<Instruction>, String> {
        let body = Request {
            prompt: SYSTEM_PROMPT,
            command,
            model: self.cfg.model.as_deref(),
            scene: scene_metadata(scene),
            vocabulary: vocabulary(library),
            history,
        };
        let mut req = self.client.post(&self.cfg.endpoint).json(&body);
        if let Some(key) = &self.cfg.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                format!("backend timed out after {} ms", self.cfg.timeout.as_millis())
            } else {
                format!("backend unreachable: {e}")
            }
        })?;
        if !resp.status().is_success() {
            return Err(format!("backend returned HTTP {}", resp.status().as_u16()));
        }
        let value: Value = resp.json().map_err(|e| format!("backend sent malformed JSON: {e}"))?;
        let steps = steps_from_value(value).map_err(|e| e.to_string())?;
        for s in &steps {
            s.validate(library).map_err(|e| e.to_string())?;
        }
        Ok(steps)
    }
}
