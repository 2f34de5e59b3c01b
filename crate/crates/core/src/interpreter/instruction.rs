//! The instruction IR: typed gesture, movement and temporal components.

use std::fmt;

use serde::de::Error as _;
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;
use thiserror::Error;

use crate::gesture::{GestureId, GestureLibrary};
use crate::scene::{ObjectId, Relation, SpatialConstraint};
use crate::skeleton::{RotationKind, Vec3};

/// Upper bound on a repeat count; anything larger is treated as a parse error.
pub const MAX_REPEAT: u32 = 100;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Command {
    pub raw_text: String,
    pub seq: u64,
    pub received_at_ms: u64,
}

impl Command {
    pub fn new(raw_text: impl Into<String>, seq: u64, received_at_ms: u64) -> Command {
        Command {
            raw_text: raw_text.into(),
            seq,
            received_at_ms,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
    Forward,
    Backward,
}

impl Direction {
    pub const ALL: [Direction; 6] = [
        Direction::Up,
        Direction::Down,
        Direction::Left,
        Direction::Right,
        Direction::Forward,
        Direction::Backward,
    ];

    /// Unit vector in the scene frame; forward points away from the viewer.
    pub fn vector(self) -> Vec3 {
        match self {
            Direction::Up => Vec3::new(0.0, 1.0, 0.0),
            Direction::Down => Vec3::new(0.0, -1.0, 0.0),
            Direction::Left => Vec3::new(-1.0, 0.0, 0.0),
            Direction::Right => Vec3::new(1.0, 0.0, 0.0),
            Direction::Forward => Vec3::new(0.0, 0.0, -1.0),
            Direction::Backward => Vec3::new(0.0, 0.0, 1.0),
        }
    }

    pub fn opposite(self) -> Direction {
        match self {
            Direction::Up => Direction::Down,
            Direction::Down => Direction::Up,
            Direction::Left => Direction::Right,
            Direction::Right => Direction::Left,
            Direction::Forward => Direction::Backward,
            Direction::Backward => Direction::Forward,
        }
    }

    /// The direction closest to `v`.
    pub fn nearest(v: Vec3) -> Direction {
        Direction::ALL
            .iter()
            .copied()
            .max_by(|a, b| a.vector().dot(&v).total_cmp(&b.vector().dot(&v)))
            .unwrap_or(Direction::Up)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
            Direction::Left => "left",
            Direction::Right => "right",
            Direction::Forward => "forward",
            Direction::Backward => "backward",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MovementType {
    Translational,
    Rotational,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemporalControl {
    Stop,
    Continue,
    Faster,
    Slower,
    UndoStep,
    RedoStep,
    Hold,
}

impl TemporalControl {
    pub const ALL: [TemporalControl; 7] = [
        TemporalControl::Stop,
        TemporalControl::Continue,
        TemporalControl::Faster,
        TemporalControl::Slower,
        TemporalControl::UndoStep,
        TemporalControl::RedoStep,
        TemporalControl::Hold,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemporalControl::Stop => "stop",
            TemporalControl::Continue => "continue",
            TemporalControl::Faster => "faster",
            TemporalControl::Slower => "slower",
            TemporalControl::UndoStep => "undo_step",
            TemporalControl::RedoStep => "redo_step",
            TemporalControl::Hold => "hold",
        }
    }
}

fn is_false(b: &bool) -> bool {
    !*b
}

fn gesture_from_name<'de, D: Deserializer<'de>>(d: D) -> Result<GestureId, D::Error> {
    let name = String::deserialize(d)?;
    if name.trim().is_empty() {
        return Err(D::Error::custom("empty gesture_type"));
    }
    Ok(GestureId::builtin(&name).unwrap_or(GestureId::Custom(name)))
}

/// Engine-side target bookkeeping, never serialized.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TargetBinding {
    pub resolved: Option<ObjectId>,
    /// Left-to-right candidates when the reference was ambiguous.
    pub candidates: Vec<ObjectId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GestureInstr {
    #[serde(deserialize_with = "gesture_from_name")]
    pub gesture_type: GestureId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object: Option<String>,
    pub is_ambiguous: bool,
    #[serde(default, skip_serializing_if = "is_false")]
    pub hold: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub constraints: Vec<SpatialConstraint>,
    #[serde(skip)]
    pub target: TargetBinding,
}

impl GestureInstr {
    pub fn new(gesture_type: GestureId) -> GestureInstr {
        GestureInstr {
            gesture_type,
            object: None,
            is_ambiguous: false,
            hold: false,
            constraints: Vec::new(),
            target: TargetBinding::default(),
        }
    }

    /// An object-free release is written as the bare string `"release"`.
    fn is_bare_release(&self) -> bool {
        self.gesture_type == GestureId::OpenHand
            && self.object.is_none()
            && !self.hold
            && self.constraints.is_empty()
            && !self.is_ambiguous
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovementInstr {
    pub movement_type: MovementType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Direction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotation: Option<RotationKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object: Option<String>,
    pub is_ambiguous: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<Relation>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub constraints: Vec<SpatialConstraint>,
    #[serde(skip)]
    pub target: TargetBinding,
}

impl MovementInstr {
    pub fn translate(direction: Direction) -> MovementInstr {
        MovementInstr {
            movement_type: MovementType::Translational,
            direction: Some(direction),
            rotation: None,
            object: None,
            is_ambiguous: false,
            position: None,
            constraints: Vec::new(),
            target: TargetBinding::default(),
        }
    }

    pub fn rotate(rotation: RotationKind) -> MovementInstr {
        MovementInstr {
            movement_type: MovementType::Rotational,
            rotation: Some(rotation),
            ..MovementInstr::translate(Direction::Up)
        }
        .without_direction()
    }

    pub fn toward(object: impl Into<String>, position: Option<Relation>) -> MovementInstr {
        MovementInstr {
            object: Some(object.into()),
            position,
            ..MovementInstr::translate(Direction::Up)
        }
        .without_direction()
    }

    fn without_direction(mut self) -> MovementInstr {
        self.direction = None;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemporalInstr {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control: Option<TemporalControl>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repeat: Option<u32>,
}

impl TemporalInstr {
    pub fn control(control: TemporalControl) -> TemporalInstr {
        TemporalInstr {
            control: Some(control),
            repeat: None,
        }
    }

    pub fn repeat(count: u32) -> TemporalInstr {
        TemporalInstr {
            control: None,
            repeat: Some(count),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Instruction {
    Gesture(GestureInstr),
    Movement(MovementInstr),
    Temporal(TemporalInstr),
}

impl Instruction {
    pub fn component_type(&self) -> &'static str {
        match self {
            Instruction::Gesture(_) => "gesture",
            Instruction::Movement(_) => "movement",
            Instruction::Temporal(_) => "temporal",
        }
    }

    pub fn gesture(g: GestureId) -> Instruction {
        Instruction::Gesture(GestureInstr::new(g))
    }

    pub fn release() -> Instruction {
        Instruction::gesture(GestureId::OpenHand)
    }

    pub fn target_mut(&mut self) -> Option<(&mut Option<String>, &mut bool, &mut Vec<SpatialConstraint>, &mut TargetBinding)> {
        match self {
            Instruction::Gesture(g) => Some((&mut g.object, &mut g.is_ambiguous, &mut g.constraints, &mut g.target)),
            Instruction::Movement(m) => Some((&mut m.object, &mut m.is_ambiguous, &mut m.constraints, &mut m.target)),
            Instruction::Temporal(_) => None,
        }
    }

    pub fn target(&self) -> Option<&TargetBinding> {
        match self {
            Instruction::Gesture(g) if g.object.is_some() => Some(&g.target),
            Instruction::Movement(m) if m.object.is_some() => Some(&m.target),
            _ => None,
        }
    }

    pub fn is_ambiguous(&self) -> bool {
        match self {
            Instruction::Gesture(g) => g.is_ambiguous,
            Instruction::Movement(m) => m.is_ambiguous,
            Instruction::Temporal(_) => false,
        }
    }

    /// Checks the structural invariants of one component.
    pub fn validate(&self, library: &GestureLibrary) -> Result<(), SchemaError> {
        match self {
            Instruction::Gesture(g) => {
                if library.get(&g.gesture_type).is_err() {
                    return Err(SchemaError::UnknownGesture(g.gesture_type.to_string()));
                }
                check_target(&g.object, g.is_ambiguous, &g.constraints)
            }
            Instruction::Movement(m) => {
                match m.movement_type {
                    MovementType::Translational => {
                        if m.rotation.is_some() {
                            return Err(SchemaError::Invalid("translational movement with a rotation".into()));
                        }
                        if m.direction.is_some() == m.object.is_some() {
                            return Err(SchemaError::Invalid(
                                "translational movement needs exactly one of direction or object".into(),
                            ));
                        }
                    }
                    MovementType::Rotational => {
                        if m.rotation.is_none() || m.direction.is_some() || m.object.is_some() || m.position.is_some() {
                            return Err(SchemaError::Invalid("rotational movement takes only a rotation".into()));
                        }
                    }
                }
                if m.position.is_some() && m.object.is_none() {
                    return Err(SchemaError::Invalid("position without an object".into()));
                }
                check_target(&m.object, m.is_ambiguous, &m.constraints)
            }
            Instruction::Temporal(t) => {
                if t.control.is_none() && t.repeat.is_none() {
                    return Err(SchemaError::Invalid("temporal component is empty".into()));
                }
                if let Some(n) = t.repeat {
                    if n == 0 || n > MAX_REPEAT {
                        return Err(SchemaError::Invalid(format!("repeat count {n} out of range")));
                    }
                }
                Ok(())
            }
        }
    }
}

fn check_target(object: &Option<String>, ambiguous: bool, constraints: &[SpatialConstraint]) -> Result<(), SchemaError> {
    match object {
        None if ambiguous => Err(SchemaError::Invalid("is_ambiguous without an object".into())),
        None if !constraints.is_empty() => Err(SchemaError::Invalid("constraints without an object".into())),
        Some(o) if o.trim().is_empty() => Err(SchemaError::Invalid("empty object reference".into())),
        _ => match constraints.iter().find(|c| !c.is_well_formed()) {
            Some(c) => Err(SchemaError::Invalid(format!("constraint `{}` has a misplaced anchor", c.kind))),
            None => Ok(()),
        },
    }
}

impl Serialize for Instruction {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(2))?;
        map.serialize_entry("component_type", self.component_type())?;
        match self {
            Instruction::Gesture(g) if g.is_bare_release() => map.serialize_entry("value", "release")?,
            Instruction::Gesture(g) => map.serialize_entry("value", g)?,
            Instruction::Movement(m) => map.serialize_entry("value", m)?,
            Instruction::Temporal(t) => map.serialize_entry("value", t)?,
        }
        map.end()
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum GestureValue {
    Name(String),
    Full(GestureInstr),
}

#[derive(Deserialize)]
#[serde(tag = "component_type", content = "value", rename_all = "snake_case")]
enum RawInstruction {
    Gesture(GestureValue),
    Movement(MovementInstr),
    Temporal(TemporalInstr),
}

impl<'de> Deserialize<'de> for Instruction {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        Ok(match RawInstruction::deserialize(deserializer)? {
            RawInstruction::Gesture(GestureValue::Name(name)) => {
                if name.trim().is_empty() {
                    return Err(D::Error::custom("empty gesture name"));
                }
                Instruction::gesture(GestureId::builtin(&name).unwrap_or(GestureId::Custom(name)))
            }
            RawInstruction::Gesture(GestureValue::Full(g)) => Instruction::Gesture(g),
            RawInstruction::Movement(m) => Instruction::Movement(m),
            RawInstruction::Temporal(t) => Instruction::Temporal(t),
        })
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SchemaError {
    #[error("malformed instruction JSON: {0}")]
    Json(String),
    #[error("unknown gesture `{0}`")]
    UnknownGesture(String),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Disposition {
    Execute,
    Irrelevant,
    Uninterpretable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstructionList {
    pub source: Command,
    pub steps: Vec<Instruction>,
    pub disposition: Disposition,
    /// Why a command was rejected, for the retry prompt.
    pub note: Option<String>,
}

impl InstructionList {
    pub fn execute(source: Command, steps: Vec<Instruction>) -> InstructionList {
        InstructionList {
            source,
            steps,
            disposition: Disposition::Execute,
            note: None,
        }
    }

    pub fn irrelevant(source: Command) -> InstructionList {
        InstructionList {
            source,
            steps: Vec::new(),
            disposition: Disposition::Irrelevant,
            note: None,
        }
    }

    pub fn uninterpretable(source: Command, note: impl Into<String>) -> InstructionList {
        InstructionList {
            source,
            steps: Vec::new(),
            disposition: Disposition::Uninterpretable,
            note: Some(note.into()),
        }
    }

    /// The steps as the JSON array the interpreter contract defines.
    pub fn to_json(&self) -> String {
        steps_to_json(&self.steps)
    }

    pub fn validate(&self, library: &GestureLibrary) -> Result<(), SchemaError> {
        match self.disposition {
            Disposition::Execute if self.steps.is_empty() => {
                Err(SchemaError::Invalid("executable list without steps".into()))
            }
            Disposition::Execute => self.steps.iter().try_for_each(|s| s.validate(library)),
            _ if !self.steps.is_empty() => Err(SchemaError::Invalid("rejected list carries steps".into())),
            _ => Ok(()),
        }
    }

    pub fn is_temporal_only(&self) -> bool {
        !self.steps.is_empty() && self.steps.iter().all(|s| matches!(s, Instruction::Temporal(_)))
    }
}

impl fmt::Display for InstructionList {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_json())
    }
}

pub fn steps_to_json(steps: &[Instruction]) -> String {
    serde_json::to_string(steps).expect("instructions always serialize")
}

/// Parses a component array, or an object wrapping one under `components`.
pub fn steps_from_json(doc: &str) -> Result<Vec<Instruction>, SchemaError> {
    let value: Value = serde_json::from_str(doc).map_err(|e| SchemaError::Json(e.to_string()))?;
    steps_from_value(value)
}

pub fn steps_from_value(value: Value) -> Result<Vec<Instruction>, SchemaError> {
    let array = match value {
        Value::Array(_) => value,
        Value::Object(mut map) => map
            .remove("components")
            .ok_or_else(|| SchemaError::Json("expected an array of components".into()))?,
        _ => return Err(SchemaError::Json("expected an array of components".into())),
    };
    serde_json::from_value(array).map_err(|e| SchemaError::Json(e.to_string()))
}
