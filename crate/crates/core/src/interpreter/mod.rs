//! Text to instruction lists: segmentation, the keyword tier, the grammar tier
//! and the optional external backend.

pub mod affordance;
pub mod external;
pub mod grammar;
pub mod instruction;
pub mod priority;
pub mod segment;

use std::collections::VecDeque;

pub use affordance::{plan_affordance, plan_goal, plan_put, Goal, NoAffordancePlan};
pub use external::{ExternalBackend, ExternalConfig};
pub use grammar::{Grammar, GrammarState, ParseContext, Reject};
pub use instruction::{
    steps_from_json, steps_to_json, Command, Direction, Disposition, GestureInstr, Instruction, InstructionList,
    MovementInstr, MovementType, SchemaError, TargetBinding, TemporalControl, TemporalInstr,
};
pub use priority::match_priority;
pub use segment::{SegmentEvent, Segmenter};

use crate::gesture::GestureLibrary;
use crate::scene::{Scene, TargetResolution};

pub enum Backend {
    Grammar,
    External(ExternalBackend),
}

pub struct Interpreter {
    grammar: Grammar,
    state: GrammarState,
    history: VecDeque<Command>,
    depth: usize,
    backend: Backend,
}

impl Default for Interpreter {
    fn default() -> Self {
        Interpreter::new(Backend::Grammar, 50)
    }
}

impl Interpreter {
    pub fn new(backend: Backend, history_depth: usize) -> Interpreter {
        Interpreter {
            grammar: Grammar::new(),
            state: GrammarState::default(),
            history: VecDeque::new(),
            depth: history_depth.max(1),
            backend,
        }
    }

    pub fn history(&self) -> impl Iterator<Item = &Command> {
        self.history.iter()
    }

    pub fn grammar_state(&self) -> &GrammarState {
        &self.state
    }

    fn remember(&mut self, cmd: &Command) {
        if self.history.len() == self.depth {
            self.history.pop_front();
        }
        self.history.push_back(cmd.clone());
    }

    /// Interprets one command against the scene as it is right now.
    pub fn interpret(
        &mut self,
        cmd: &Command,
        scene: &Scene,
        library: &GestureLibrary,
        held: Option<&str>,
    ) -> InstructionList {
        let text = cmd.raw_text.trim();
        if text.is_empty() {
            return InstructionList::irrelevant(cmd.clone());
        }
        if let Some(t) = match_priority(text) {
            self.remember(cmd);
            return InstructionList::execute(cmd.clone(), vec![Instruction::Temporal(t)]);
        }
        let list = match &self.backend {
            Backend::Grammar => {
                let ctx = ParseContext { scene, library, held };
                match self.grammar.parse(text, &ctx, &mut self.state) {
                    Ok(steps) => InstructionList::execute(cmd.clone(), steps),
                    Err(Reject::Irrelevant) => InstructionList::irrelevant(cmd.clone()),
                    Err(Reject::Uninterpretable(note)) => InstructionList::uninterpretable(cmd.clone(), note),
                }
            }
            Backend::External(backend) => {
                let history: Vec<String> = self.history.iter().map(|c| c.raw_text.clone()).collect();
                match backend.request(text, scene, library, &history) {
                    Ok(steps) if steps.is_empty() => InstructionList::irrelevant(cmd.clone()),
                    Ok(steps) => match ground(steps, scene) {
                        Ok(steps) => InstructionList::execute(cmd.clone(), steps),
                        Err(note) => InstructionList::uninterpretable(cmd.clone(), note),
                    },
                    Err(note) => InstructionList::uninterpretable(cmd.clone(), note),
                }
            }
        };
        let list = match list.validate(library) {
            Ok(()) => list,
            Err(e) => InstructionList::uninterpretable(cmd.clone(), e.to_string()),
        };
        self.remember(cmd);
        list
    }
}

/// Resolves object references in externally produced steps against the scene.
pub fn ground(mut steps: Vec<Instruction>, scene: &Scene) -> Result<Vec<Instruction>, String> {
    for step in steps.iter_mut() {
        let Some((object, ambiguous, constraints, binding)) = step.target_mut() else {
            continue;
        };
        let Some(query) = object.clone() else {
            continue;
        };
        match scene.resolve_target(&query, constraints) {
            TargetResolution::Unique(id) => {
                *ambiguous = false;
                *binding = TargetBinding {
                    resolved: Some(id),
                    candidates: Vec::new(),
                };
            }
            TargetResolution::Ambiguous(ids) => {
                *ambiguous = true;
                *binding = TargetBinding {
                    resolved: None,
                    candidates: ids,
                };
            }
            TargetResolution::None => return Err(format!("no object matches \"{query}\"")),
        }
    }
    Ok(steps)
}

const ORDINALS: &[&str] = &[
    "first", "second", "third", "fourth", "fifth", "sixth", "seventh", "eighth", "ninth", "tenth",
];

/// Reads a reply to a numbered-label prompt ("2", "number two", "the second
/// one") as a 1-based label.
pub fn parse_label_reply(text: &str) -> Option<usize> {
    let words: Vec<String> = text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .filter(|w| !matches!(w.as_str(), "the" | "number" | "one" | "option" | "label" | "please" | "no" | "pick"))
        .collect();
    let [word] = words.as_slice() else {
        // "one" alone was filtered out above.
        return (text.trim().eq_ignore_ascii_case("one") || text.trim().eq_ignore_ascii_case("number one"))
            .then_some(1);
    };
    let digits = word.trim_end_matches(|c: char| c.is_alphabetic());
    if !digits.is_empty() && digits.len() < word.len() && !matches!(&word[digits.len()..], "st" | "nd" | "rd" | "th") {
        return None;
    }
    if let Ok(n) = digits.parse::<usize>() {
        return (n > 0).then_some(n);
    }
    if let Some(i) = ORDINALS.iter().position(|o| o == word) {
        return Some(i + 1);
    }
    grammar::number_word(word).filter(|n| *n > 0).map(|n| n as usize)
}
