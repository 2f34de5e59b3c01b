//! Expands goal-level requests ("increase the brightness") into primitive steps
//! according to what the target object affords.

use thiserror::Error;

use super::instruction::{Direction, GestureInstr, Instruction, MovementInstr, TargetBinding};
use crate::gesture::GestureId;
use crate::scene::{Affordance, Relation, SceneObject};
use crate::skeleton::RotationKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Goal {
    Increase,
    Decrease,
    Press,
    PressHold,
}

impl Goal {
    pub fn from_verb(verb: &str) -> Option<Goal> {
        let v = verb.trim().to_lowercase();
        Some(match v.as_str() {
            "increase" | "raise" | "turn up" | "brighten" | "boost" | "maximize" | "maximise" | "max out"
            | "louder" => Goal::Increase,
            "decrease" | "lower" | "turn down" | "dim" | "reduce" | "minimize" | "minimise" | "quieter" => {
                Goal::Decrease
            }
            "press" | "push" | "click" | "activate" => Goal::Press,
            "press and hold" | "hold down" => Goal::PressHold,
            _ => return None,
        })
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("don't know how to {goal} the {object} ({kind})")]
pub struct NoAffordancePlan {
    pub goal: String,
    pub object: String,
    pub kind: &'static str,
}

fn targeted_gesture(g: GestureId, object: &SceneObject, hold: bool) -> Instruction {
    let mut instr = GestureInstr::new(g);
    instr.object = Some(object.name.clone());
    instr.hold = hold;
    instr.target = TargetBinding {
        resolved: Some(object.id.clone()),
        candidates: Vec::new(),
    };
    Instruction::Gesture(instr)
}

pub fn plan_affordance(goal_verb: &str, object: &SceneObject) -> Result<Vec<Instruction>, NoAffordancePlan> {
    let fail = || NoAffordancePlan {
        goal: goal_verb.to_string(),
        object: object.name.clone(),
        kind: object.affordance.kind(),
    };
    let goal = Goal::from_verb(goal_verb).ok_or_else(fail)?;
    plan_goal(goal, object).ok_or_else(fail)
}

pub fn plan_goal(goal: Goal, object: &SceneObject) -> Option<Vec<Instruction>> {
    match (&object.affordance, goal) {
        (Affordance::Knob { .. }, Goal::Increase | Goal::Decrease) => {
            let turn = if goal == Goal::Increase {
                RotationKind::RollRight
            } else {
                RotationKind::RollLeft
            };
            Some(vec![
                targeted_gesture(GestureId::Grab, object, false),
                Instruction::Movement(MovementInstr::rotate(turn)),
            ])
        }
        (Affordance::Slider { axis, .. }, Goal::Increase | Goal::Decrease) => {
            let up = Direction::nearest(*axis);
            let dir = if goal == Goal::Increase { up } else { up.opposite() };
            Some(vec![
                targeted_gesture(GestureId::Pinch, object, false),
                Instruction::Movement(MovementInstr::translate(dir)),
            ])
        }
        (Affordance::Button { .. }, Goal::Press | Goal::PressHold) => {
            Some(vec![targeted_gesture(GestureId::Point, object, goal == Goal::PressHold)])
        }
        _ => None,
    }
}

/// Grab, carry over the container, let go.
pub fn plan_put(object: &SceneObject, container: &SceneObject, position: Relation) -> Vec<Instruction> {
    let mut carry = MovementInstr::toward(container.name.clone(), Some(position));
    carry.target.resolved = Some(container.id.clone());
    vec![
        targeted_gesture(GestureId::Grab, object, false),
        Instruction::Movement(carry),
        Instruction::release(),
    ]
}
