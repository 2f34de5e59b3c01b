//! Deterministic slot grammar: verb, target phrase, direction or relation, count.
//!
//! Each clause is normalized (typo repair against the known vocabulary, then
//! multi-word phrase folding), split at "and"/"then" before a new verb, and
//! matched against a small set of verb frames. A verb frame remembers what a
//! command did so a bare follow-up reference ("the confirm button") can reuse it.

use std::collections::BTreeSet;

use super::affordance::{plan_goal, Goal};
use super::instruction::{
    Direction, GestureInstr, Instruction, MovementInstr, TargetBinding, TemporalInstr, MAX_REPEAT,
};
use super::priority::match_priority;
use crate::gesture::{GestureId, GestureLibrary};
use crate::scene::{
    lemma, Affordance, ConstraintKind, ObjectId, Relation, Scene, SpatialConstraint, TargetResolution,
};
use crate::skeleton::RotationKind;

#[derive(Debug, Clone, PartialEq)]
pub enum Reject {
    /// Not an interaction command at all.
    Irrelevant,
    /// Looks like a command but cannot be turned into steps.
    Uninterpretable(String),
}

fn fail<T>(msg: impl Into<String>) -> Result<T, Reject> {
    Err(Reject::Uninterpretable(msg.into()))
}

/// What the parser may consult besides the text.
pub struct ParseContext<'a> {
    pub scene: &'a Scene,
    pub library: &'a GestureLibrary,
    /// Object currently carried by the hand, if any.
    pub held: Option<&'a str>,
}

/// Memory carried between commands for ellipsis and pronouns.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GrammarState {
    last_frame: Option<Frame>,
    last_target: Option<ObjectId>,
}

impl GrammarState {
    pub fn last_target(&self) -> Option<&str> {
        self.last_target.as_deref()
    }
}

// ---------------------------------------------------------------------------
// Vocabulary

const FILLERS: &[&str] = &[
    "please", "now", "then", "ok", "okay", "alright", "so", "just", "hey", "um", "uh", "and", "also", "actually",
    "kindly", "quickly", "slowly", "gently", "there", "lets", "let's", "can", "could", "would",
    "will", "you", "i", "want", "to", "like_to", "try", "go_ahead", "for", "me", "by", "bit", "little", "slightly",
    "some", "more", "give", "show", "make", "do", "perform", "a", "an",
];

/// Fillers that may only be dropped at the start of a clause.
const LEADING_ONLY: &[&str] = &[
    "to", "you", "i", "want", "can", "could", "would", "will", "try", "for", "me", "more", "give", "show", "make",
    "do", "perform", "a", "an",
];

const DETERMINERS: &[&str] = &["the", "a", "an", "my", "your", "our", "its", "of", "one", "ones", "object", "thing"];

/// Words dropped from inside an object phrase.
const TARGET_NOISE: &[&str] = &[
    "please", "now", "just", "um", "uh", "kindly", "quickly", "slowly", "gently", "bit", "little", "slightly",
    "some", "for", "me", "and", "also", "there",
];

const PRONOUNS: &[&str] = &["it", "that", "this", "them", "him", "her"];

/// Multi-word phrases folded into single tokens, longest first.
const PHRASES: &[(&[&str], &[&str])] = &[
    (&["tap", "your", "index", "and", "thumb"], &["pinch"]),
    (&["tap", "index", "and", "thumb"], &["pinch"]),
    (&["touch", "index", "and", "thumb"], &["pinch"]),
    (&["index", "and", "thumb", "together"], &["pinch"]),
    (&["press", "and", "hold"], &["press_hold"]),
    (&["push", "and", "hold"], &["press_hold"]),
    (&["click", "and", "hold"], &["press_hold"]),
    (&["hold", "down"], &["press_hold"]),
    (&["to", "the", "left", "of"], &["left_of"]),
    (&["to", "the", "right", "of"], &["right_of"]),
    (&["on", "the", "left", "of"], &["left_of"]),
    (&["on", "the", "right", "of"], &["right_of"]),
    (&["left", "of"], &["left_of"]),
    (&["right", "of"], &["right_of"]),
    (&["on", "top", "of"], &["on_top_of"]),
    (&["in", "front", "of"], &["in_front_of"]),
    (&["next", "to"], &["near"]),
    (&["make", "a", "fist"], &["grab"]),
    (&["clench", "your", "fist"], &["grab"]),
    (&["close", "your", "hand"], &["grab"]),
    (&["open", "your", "hand"], &["open_hand"]),
    (&["open", "the", "hand"], &["open_hand"]),
    (&["open", "hand"], &["open_hand"]),
    (&["let", "go", "of"], &["release"]),
    (&["let", "it", "go"], &["release"]),
    (&["let", "go"], &["release"]),
    (&["thumbs", "up"], &["thumb_up"]),
    (&["thumb", "up"], &["thumb_up"]),
    (&["thumbs", "down"], &["thumb_down"]),
    (&["thumb", "down"], &["thumb_down"]),
    (&["turn", "up"], &["increase"]),
    (&["turn", "down"], &["decrease"]),
    (&["crank", "up"], &["increase"]),
    (&["max", "out"], &["maximize"]),
    (&["counter", "clockwise"], &["ccw"]),
    (&["anti", "clockwise"], &["ccw"]),
    (&["counterclockwise"], &["ccw"]),
    (&["anticlockwise"], &["ccw"]),
    (&["clockwise"], &["cw"]),
    (&["pick", "up"], &["grab"]),
    (&["point", "at"], &["point"]),
    (&["point", "to"], &["point"]),
    (&["go", "ahead", "and"], &["go_ahead"]),
    (&["would", "like", "to"], &["like_to"]),
    (&["i'd", "like", "to"], &["like_to"]),
    (&["a", "bit"], &["bit"]),
    (&["a", "little"], &["little"]),
    (&["one", "more", "time"], &["again"]),
    (&["once", "more"], &["again"]),
    (&["your", "hand"], &[]),
    (&["the", "hand"], &[]),
    (&["my", "hand"], &[]),
    (&["hand"], &[]),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RotFamily {
    Roll,
    Pan,
    Tilt,
}

#[derive(Debug, Clone, PartialEq)]
enum Verb {
    Gesture(GestureId),
    Press { hold: bool },
    Put,
    Move,
    Lift(Direction),
    Pull,
    Rotate(RotFamily),
    Goal(Goal),
    Release,
}

fn builtin_verb(word: &str) -> Option<Verb> {
    use GestureId as G;
    Some(match word {
        "pinch" => Verb::Gesture(G::Pinch),
        "point" | "tap" | "touch" | "poke" => Verb::Gesture(G::Point),
        "push" | "shove" | "nudge" => Verb::Gesture(G::Push),
        "grab" | "grasp" | "grip" | "take" | "fetch" | "get" | "hold" | "catch" | "seize" | "clutch" | "pick"
        | "collect" => Verb::Gesture(G::Grab),
        "swipe" | "flick" => Verb::Gesture(G::Swipe),
        "punch" | "hit" | "strike" | "jab" => Verb::Gesture(G::Punch),
        "squeeze" | "crush" | "squish" | "compress" | "clench" => Verb::Gesture(G::Squeeze),
        "cut" | "chop" | "slice" | "split" => Verb::Gesture(G::Cut),
        "thumb_up" => Verb::Gesture(G::ThumbUp),
        "thumb_down" => Verb::Gesture(G::ThumbDown),
        "press" | "click" | "activate" | "trigger" => Verb::Press { hold: false },
        "press_hold" => Verb::Press { hold: true },
        "put" | "place" | "set" | "throw" | "toss" | "insert" | "deposit" | "drop_into" => Verb::Put,
        "move" | "go" | "shift" | "slide" | "bring" | "carry" | "drag" | "head" | "reach" => Verb::Move,
        "raise" | "lift" => Verb::Lift(Direction::Up),
        "lower" => Verb::Lift(Direction::Down),
        "pull" | "yank" => Verb::Pull,
        "turn" | "twist" | "rotate" | "spin" | "roll" => Verb::Rotate(RotFamily::Roll),
        "pan" => Verb::Rotate(RotFamily::Pan),
        "tilt" => Verb::Rotate(RotFamily::Tilt),
        "increase" | "brighten" | "boost" | "maximize" | "maximise" => Verb::Goal(Goal::Increase),
        "decrease" | "dim" | "reduce" | "minimize" | "minimise" => Verb::Goal(Goal::Decrease),
        "release" | "drop" | "open_hand" | "unclench" | "relax" | "loosen" => Verb::Release,
        _ => return None,
    })
}

/// Surface words that can open a command; used to decide comma splits.
pub fn is_command_start(word: &str) -> bool {
    let w = word.to_lowercase();
    builtin_verb(&w).is_some()
        || matches!(
            w.as_str(),
            "then" | "let" | "open" | "thumbs" | "thumb" | "double" | "triple" | "repeat" | "do" | "again"
        )
}

fn direction_word(word: &str) -> Option<Direction> {
    Some(match word {
        "up" | "upward" | "upwards" | "higher" => Direction::Up,
        "down" | "downward" | "downwards" => Direction::Down,
        "left" | "leftward" | "leftwards" => Direction::Left,
        "right" | "rightward" | "rightwards" => Direction::Right,
        "forward" | "forwards" | "ahead" | "away" | "further" => Direction::Forward,
        "backward" | "backwards" | "back" | "closer" => Direction::Backward,
        _ => return None,
    })
}

fn position_word(word: &str) -> Option<Relation> {
    Some(match word {
        "on_top_of" | "onto" | "on" | "into" | "in" | "inside" | "over" | "above" => Relation::OnTopOf,
        "under" | "underneath" | "beneath" | "below" => Relation::Under,
        "in_front_of" => Relation::InFrontOf,
        "behind" => Relation::Behind,
        "left_of" => Relation::ToTheLeftOf,
        "right_of" => Relation::ToTheRightOf,
        _ => return None,
    })
}

fn relational_constraint(word: &str) -> Option<ConstraintKind> {
    Some(match word {
        "below" | "under" | "underneath" | "beneath" => ConstraintKind::Below,
        "above" | "over" | "on_top_of" => ConstraintKind::Above,
        "left_of" => ConstraintKind::ToTheLeftOf,
        "right_of" => ConstraintKind::ToTheRightOf,
        "in_front_of" => ConstraintKind::InFrontOf,
        "behind" => ConstraintKind::Behind,
        _ => return None,
    })
}

fn ordinal_word(word: &str) -> Option<ConstraintKind> {
    Some(match word {
        "left" | "leftmost" => ConstraintKind::OnTheLeft,
        "right" | "rightmost" => ConstraintKind::OnTheRight,
        "middle" | "center" | "centre" | "central" => ConstraintKind::InTheMiddle,
        "first" => ConstraintKind::First,
        "last" => ConstraintKind::Last,
        "closest" | "nearest" => ConstraintKind::Closest,
        "farthest" | "furthest" => ConstraintKind::Farthest,
        _ => return None,
    })
}

const NUMBER_WORDS: &[&str] = &["zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten"];

pub fn number_word(word: &str) -> Option<u32> {
    if let Ok(n) = word.parse::<u32>() {
        return Some(n);
    }
    NUMBER_WORDS.iter().position(|w| *w == word).map(|n| n as u32)
}

const OTHER_WORDS: &[&str] = &[
    "times", "twice", "thrice", "double", "triple", "do", "repeat", "again", "to", "toward", "towards", "with",
    "at", "from", "near", "and", "hold", "holding", "keep", "top", "front", "of", "index", "thumb", "thumbs",
    "together", "open", "let", "cw", "ccw", "counter", "anti", "max", "out", "crank", "hand", "hands", "what",
    "how", "are", "is", "today", "doing", "up", "down",
];

/// Every word the grammar knows, for typo repair.
fn grammar_words() -> BTreeSet<String> {
    let mut words: BTreeSet<String> = FILLERS
        .iter()
        .chain(DETERMINERS)
        .chain(PRONOUNS)
        .chain(NUMBER_WORDS)
        .chain(OTHER_WORDS)
        .map(|w| w.to_string())
        .collect();
    for (from, _) in PHRASES {
        words.extend(from.iter().map(|w| w.to_string()));
    }
    for w in [
        "pinch", "point", "tap", "touch", "poke", "push", "shove", "nudge", "grab", "grasp", "grip", "take", "fetch",
        "get", "catch", "seize", "clutch", "pick", "collect", "swipe", "flick", "punch", "hit", "strike", "jab",
        "squeeze", "crush", "squish", "compress", "clench", "cut", "chop", "slice", "split", "press", "click",
        "activate", "trigger", "put", "place", "set", "throw", "toss", "insert", "deposit", "move", "go", "shift",
        "slide", "bring", "carry", "drag", "head", "reach", "raise", "lift", "lower", "pull", "yank", "turn", "twist",
        "rotate", "spin", "roll", "pan", "tilt", "increase", "brighten", "boost", "maximize", "maximise", "decrease",
        "dim", "reduce", "minimize", "minimise", "release", "drop", "unclench", "relax", "loosen", "upward",
        "upwards", "higher", "downward", "downwards", "left", "leftward", "leftwards", "right", "rightward",
        "rightwards", "forward", "forwards", "ahead", "away", "further", "backward", "backwards", "back", "closer",
        "onto", "on", "into", "in", "inside", "over", "above", "under", "underneath", "beneath", "below", "behind",
        "leftmost", "rightmost", "middle", "center", "centre", "central", "first", "last", "closest", "nearest",
        "farthest", "furthest", "clockwise", "counterclockwise", "anticlockwise", "number", "second", "third",
    ] {
        words.insert(w.to_string());
    }
    words
}

// ---------------------------------------------------------------------------
// Normalization

fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .replace('’', "'")
        .split(|c: char| !(c.is_alphanumeric() || c == '\'' || c == '_'))
        .filter(|t| !t.is_empty() && *t != "'")
        .map(|t| t.trim_matches('\'').to_string())
        .filter(|t| !t.is_empty())
        .collect()
}

/// Replaces unknown words with the closest known word: one edit for words of
/// four or five letters, two for longer words. Shorter words are left alone.
fn repair(tokens: Vec<String>, lexicon: &BTreeSet<String>, scene_words: &BTreeSet<String>) -> Vec<String> {
    tokens
        .into_iter()
        .map(|t| {
            let n = t.chars().count();
            if n < 4 || t.chars().any(|c| c.is_ascii_digit()) {
                return t;
            }
            if lexicon.contains(&t) || lexicon.contains(&lemma(&t)) {
                return t;
            }
            let limit = if n <= 5 { 1 } else { 2 };
            let best = lexicon
                .iter()
                .filter(|w| w.chars().count().abs_diff(n) <= limit && !w.contains('_'))
                .map(|w| (strsim::levenshtein(&t, w), !scene_words.contains(w), w))
                .filter(|(d, _, _)| *d <= limit)
                .min();
            best.map(|(_, _, w)| w.clone()).unwrap_or(t)
        })
        .collect()
}

fn fold_phrases(tokens: &[String], custom: &[(Vec<String>, String)]) -> Vec<String> {
    let mut out = Vec::with_capacity(tokens.len());
    let mut i = 0;
    'outer: while i < tokens.len() {
        for (words, name) in custom {
            if tokens[i..].starts_with(words) {
                out.push(format!("custom:{name}"));
                i += words.len();
                continue 'outer;
            }
        }
        for (from, to) in PHRASES {
            if tokens.len() - i >= from.len() && from.iter().zip(&tokens[i..]).all(|(a, b)| a == b) {
                out.extend(to.iter().map(|t| t.to_string()));
                i += from.len();
                continue 'outer;
            }
        }
        out.push(tokens[i].clone());
        i += 1;
    }
    out
}

fn strip_fillers(mut tokens: Vec<String>) -> Vec<String> {
    while tokens.first().is_some_and(|t| FILLERS.contains(&t.as_str())) {
        tokens.remove(0);
    }
    while tokens
        .last()
        .is_some_and(|t| FILLERS.contains(&t.as_str()) && !LEADING_ONLY.contains(&t.as_str()))
    {
        tokens.pop();
    }
    tokens
}

// ---------------------------------------------------------------------------
// Targets

#[derive(Debug, Clone, PartialEq)]
pub struct TargetRef {
    pub text: String,
    pub constraints: Vec<SpatialConstraint>,
    pub resolution: TargetResolution,
}

impl TargetRef {
    fn unique(&self) -> Option<&str> {
        match &self.resolution {
            TargetResolution::Unique(id) => Some(id),
            _ => None,
        }
    }

    /// An id whose affordance speaks for all candidates.
    fn representative(&self) -> Option<&str> {
        match &self.resolution {
            TargetResolution::Unique(id) => Some(id),
            TargetResolution::Ambiguous(ids) => ids.first().map(String::as_str),
            TargetResolution::None => None,
        }
    }

    fn apply(&self, instr: &mut Instruction) {
        if let Some((object, ambiguous, constraints, binding)) = instr.target_mut() {
            *object = Some(self.text.clone());
            *constraints = self.constraints.clone();
            *ambiguous = matches!(self.resolution, TargetResolution::Ambiguous(_));
            *binding = match &self.resolution {
                TargetResolution::Unique(id) => TargetBinding {
                    resolved: Some(id.clone()),
                    candidates: Vec::new(),
                },
                TargetResolution::Ambiguous(ids) => TargetBinding {
                    resolved: None,
                    candidates: ids.clone(),
                },
                TargetResolution::None => TargetBinding::default(),
            };
        }
    }
}

#[derive(Debug, Default)]
struct TargetPhrase {
    terms: Vec<String>,
    constraints: Vec<SpatialConstraint>,
    pronoun: bool,
}

fn parse_target(tokens: &[String]) -> TargetPhrase {
    let toks: Vec<&str> = tokens
        .iter()
        .map(String::as_str)
        .filter(|t| !DETERMINERS.contains(t) && !TARGET_NOISE.contains(t) && *t != "to")
        .collect();
    let mut phrase = TargetPhrase::default();
    let mut i = 0;
    while i < toks.len() {
        let t = toks[i];
        if let Some(kind) = relational_constraint(t) {
            if i > 0 || !phrase.constraints.is_empty() {
                let anchor: Vec<&str> = toks[i + 1..].to_vec();
                if !anchor.is_empty() {
                    phrase
                        .constraints
                        .push(SpatialConstraint::relative(kind, anchor.join(" ")));
                }
                break;
            }
        }
        if (t == "on" || t == "in" || t == "at") && i + 1 < toks.len() {
            if let Some(kind) = ordinal_word(toks[i + 1]) {
                phrase.constraints.push(SpatialConstraint::ordinal(kind));
                i += 2;
                continue;
            }
        }
        if let Some(kind) = ordinal_word(t) {
            phrase.constraints.push(SpatialConstraint::ordinal(kind));
        } else if t != "on" && t != "in" && t != "at" {
            phrase.terms.push(t.to_string());
        }
        i += 1;
    }
    if phrase.terms.len() == 1 && PRONOUNS.contains(&phrase.terms[0].as_str()) {
        phrase.terms.clear();
        phrase.pronoun = true;
    }
    phrase
}

// ---------------------------------------------------------------------------
// Verb frames

#[derive(Debug, Clone, PartialEq)]
enum Frame {
    /// A single gesture, optionally on the target.
    Gesture { gesture: GestureId, hold: bool },
    /// Carry the target to `dest`.
    Put { position: Relation, dest: TargetRef },
    /// Move the hand to the target.
    MoveTo { position: Option<Relation> },
    /// Grab the target (when one is given), then run the motions.
    GrabThen { motions: Vec<MovementInstr>, hold: bool },
    Goal(Goal),
}

struct Parser<'a, 'b> {
    ctx: &'a ParseContext<'b>,
    state: &'a GrammarState,
    /// What the hand holds once the earlier clauses have run.
    held: Option<ObjectId>,
}

impl Parser<'_, '_> {
    fn resolve(&self, tokens: &[String]) -> Result<Option<TargetRef>, Reject> {
        let phrase = parse_target(tokens);
        if phrase.pronoun {
            let id = self
                .held
                .clone()
                .or_else(|| self.state.last_target.clone())
                .ok_or_else(|| Reject::Uninterpretable("nothing to refer back to".into()))?;
            return self.describe(&id).map(Some);
        }
        if phrase.terms.is_empty() {
            if phrase.constraints.is_empty() {
                return Ok(None);
            }
            return fail("which object?");
        }
        let query = phrase.terms.join(" ");
        let resolution = self.ctx.scene.resolve_target(&query, &phrase.constraints);
        if resolution == TargetResolution::None {
            return fail(format!("no object matches \"{query}\""));
        }
        // Prefer the canonical name when it picks out the same objects.
        let name = match &resolution {
            TargetResolution::Unique(id) => self.ctx.scene.get(id).map(|o| o.name.clone()),
            TargetResolution::Ambiguous(ids) => {
                let names: BTreeSet<&str> = ids
                    .iter()
                    .filter_map(|id| self.ctx.scene.get(id))
                    .map(|o| o.name.as_str())
                    .collect();
                (names.len() == 1).then(|| names.into_iter().next().expect("one name").to_string())
            }
            TargetResolution::None => None,
        };
        if let Some(name) = name {
            if self.ctx.scene.resolve_target(&name, &[]) == resolution {
                return Ok(Some(TargetRef {
                    text: name,
                    constraints: Vec::new(),
                    resolution,
                }));
            }
            if self.ctx.scene.resolve_target(&name, &phrase.constraints) == resolution {
                return Ok(Some(TargetRef {
                    text: name,
                    constraints: phrase.constraints,
                    resolution,
                }));
            }
        }
        Ok(Some(TargetRef {
            text: query,
            constraints: phrase.constraints,
            resolution,
        }))
    }

    /// A reference to a known object that resolves back to exactly it.
    fn describe(&self, id: &str) -> Result<TargetRef, Reject> {
        let obj = self
            .ctx
            .scene
            .get(id)
            .ok_or_else(|| Reject::Uninterpretable(format!("the {id} is gone")))?;
        let unique = TargetResolution::Unique(id.to_string());
        let mut options = vec![Vec::new()];
        options.extend(
            ConstraintKind::ALL
                .iter()
                .filter(|k| !k.is_relational())
                .map(|k| vec![SpatialConstraint::ordinal(*k)]),
        );
        for constraints in options {
            if self.ctx.scene.resolve_target(&obj.name, &constraints) == unique {
                return Ok(TargetRef {
                    text: obj.name.clone(),
                    constraints,
                    resolution: unique,
                });
            }
        }
        fail(format!("cannot tell which {} is meant", obj.name))
    }

    fn held_is(&self, target: &TargetRef) -> bool {
        matches!((self.held.as_deref(), target.unique()), (Some(h), Some(t)) if h == t)
    }

    fn grab(&self, target: Option<&TargetRef>, hold: bool) -> Instruction {
        let mut g = GestureInstr::new(GestureId::Grab);
        g.hold = hold;
        let mut instr = Instruction::Gesture(g);
        if let Some(t) = target {
            t.apply(&mut instr);
        }
        instr
    }

    fn build(&self, frame: &Frame, target: Option<&TargetRef>) -> Result<Vec<Instruction>, Reject> {
        match frame {
            Frame::Gesture { gesture, hold } => {
                let mut g = GestureInstr::new(gesture.clone());
                g.hold = *hold;
                let mut instr = Instruction::Gesture(g);
                if let Some(t) = target {
                    t.apply(&mut instr);
                }
                Ok(vec![instr])
            }
            Frame::Put { position, dest } => {
                let Some(t) = target else {
                    return fail("what should be moved?");
                };
                let mut steps = Vec::new();
                if !self.held_is(t) {
                    steps.push(self.grab(Some(t), false));
                }
                let mut carry = Instruction::Movement(MovementInstr::toward(dest.text.clone(), Some(*position)));
                dest.apply(&mut carry);
                steps.push(carry);
                steps.push(Instruction::release());
                Ok(steps)
            }
            Frame::MoveTo { position } => {
                let Some(t) = target else {
                    return fail("move where?");
                };
                let mut m = Instruction::Movement(MovementInstr::toward(t.text.clone(), *position));
                t.apply(&mut m);
                Ok(vec![m])
            }
            Frame::GrabThen { motions, hold } => {
                let mut steps = Vec::new();
                match target {
                    Some(t) if !self.held_is(t) => steps.push(self.grab(Some(t), *hold)),
                    None if *hold => steps.push(self.grab(None, true)),
                    _ => {}
                }
                steps.extend(motions.iter().cloned().map(Instruction::Movement));
                Ok(steps)
            }
            Frame::Goal(goal) => {
                let Some(t) = target else {
                    return fail("which control?");
                };
                let obj = t.representative().and_then(|id| self.ctx.scene.get(id));
                let Some(obj) = obj else {
                    return fail("which control?");
                };
                let mut steps = plan_goal(*goal, obj)
                    .ok_or_else(|| Reject::Uninterpretable(format!("the {} cannot do that", obj.name)))?;
                for s in steps.iter_mut() {
                    if s.target().is_some() {
                        t.apply(s);
                    }
                }
                Ok(steps)
            }
        }
    }

    fn ctx_verb(&self, word: &str) -> Option<Verb> {
        if let Some(name) = word.strip_prefix("custom:") {
            return self.ctx.library.lookup_name(name).map(Verb::Gesture);
        }
        builtin_verb(word)
    }

    /// Parses one simple clause into a frame plus its target.
    fn clause(&self, tokens: &[String], hold: bool) -> Result<(Frame, Option<TargetRef>), Reject> {
        let Some(first) = tokens.first() else {
            return Err(Reject::Irrelevant);
        };
        let Some(verb) = self.ctx_verb(first) else {
            return self.verbless(tokens, hold);
        };
        let rest = &tokens[1..];
        match verb {
            Verb::Gesture(g) => {
                if g == GestureId::Grab {
                    if let Some(split) = first_position(rest).filter(|&i| is_containment(&rest[i])) {
                        return self.put(&rest[..split], &rest[split..]);
                    }
                }
                let rest: Vec<String> = rest
                    .iter()
                    .filter(|t| direction_word(t).is_none() || rest.len() > 1 && !all_directions(rest))
                    .filter(|t| !(g == GestureId::Grab && (*t == "up")))
                    .cloned()
                    .collect();
                let target = self.resolve(&rest)?;
                if let Some(dir) = tokens[1..].iter().find_map(|t| direction_word(t)) {
                    if let Some(goal) = self.control_goal(target.as_ref(), dir) {
                        return Ok((Frame::Goal(goal), target));
                    }
                }
                Ok((Frame::Gesture { gesture: g, hold }, target))
            }
            Verb::Press { hold: h } => {
                let target = self.resolve(rest)?;
                Ok((
                    Frame::Gesture {
                        gesture: GestureId::Point,
                        hold: hold || h,
                    },
                    target,
                ))
            }
            Verb::Release => match first_position(rest) {
                Some(split) => self.put(&rest[..split], &rest[split..]),
                None => Ok((
                    Frame::Gesture {
                        gesture: GestureId::OpenHand,
                        hold: false,
                    },
                    None,
                )),
            },
            Verb::Put => match first_position(rest) {
                Some(split) => self.put(&rest[..split], &rest[split..]),
                None if rest.iter().any(|t| t == "down") => Ok((
                    Frame::Gesture {
                        gesture: GestureId::OpenHand,
                        hold: false,
                    },
                    None,
                )),
                None => fail("put it where?"),
            },
            Verb::Move => self.movement(rest),
            Verb::Lift(dir) => {
                let rest: Vec<String> = rest.iter().filter(|t| direction_word(t).is_none()).cloned().collect();
                let target = self.resolve(&rest)?;
                if let Some(goal) = self.control_goal(target.as_ref(), dir) {
                    return Ok((Frame::Goal(goal), target));
                }
                Ok((
                    Frame::GrabThen {
                        motions: vec![MovementInstr::translate(dir)],
                        hold,
                    },
                    target,
                ))
            }
            Verb::Pull => {
                let dir = rest.iter().find_map(|t| direction_word(t)).unwrap_or(Direction::Backward);
                let rest: Vec<String> = rest.iter().filter(|t| direction_word(t).is_none()).cloned().collect();
                let target = self.resolve(&rest)?;
                Ok((
                    Frame::GrabThen {
                        motions: vec![MovementInstr::translate(dir)],
                        hold: true,
                    },
                    target,
                ))
            }
            Verb::Rotate(family) => self.rotation(family, rest, hold),
            Verb::Goal(goal) => {
                let target = self.resolve(rest)?;
                if target.is_none() {
                    return fail("which control?");
                }
                Ok((Frame::Goal(goal), target))
            }
        }
    }

    fn control_goal(&self, target: Option<&TargetRef>, dir: Direction) -> Option<Goal> {
        let obj = self.ctx.scene.get(target?.representative()?)?;
        match obj.affordance {
            Affordance::Slider { .. } | Affordance::Knob { .. } => Some(match dir {
                Direction::Up | Direction::Right | Direction::Forward => Goal::Increase,
                _ => Goal::Decrease,
            }),
            _ => None,
        }
    }

    fn put(&self, object: &[String], tail: &[String]) -> Result<(Frame, Option<TargetRef>), Reject> {
        let position = position_word(&tail[0]).unwrap_or(Relation::OnTopOf);
        let dest = self
            .resolve(&tail[1..])?
            .ok_or_else(|| Reject::Uninterpretable("put it where?".into()))?;
        let target = match self.resolve(object)? {
            Some(t) => t,
            None => self
                .resolve(&["it".to_string()])?
                .ok_or_else(|| Reject::Uninterpretable("what should be moved?".into()))?,
        };
        Ok((Frame::Put { position, dest }, Some(target)))
    }

    fn movement(&self, rest: &[String]) -> Result<(Frame, Option<TargetRef>), Reject> {
        let split = rest
            .iter()
            .position(|t| position_word(t).is_some() || is_to(t))
            .or_else(|| rest.iter().position(|t| direction_word(t).is_some()));
        let Some(split) = split else {
            // "reach for the apple": the hand goes to the object.
            return match self.resolve(rest)? {
                Some(t) => Ok((Frame::MoveTo { position: None }, Some(t))),
                None => fail("move where?"),
            };
        };
        let object: Vec<String> = rest[..split]
            .iter()
            .filter(|t| direction_word(t).is_none())
            .cloned()
            .collect();
        let object = &object[..];
        let tail = &rest[split..];
        if let Some(dir) = tail.iter().find_map(|t| direction_word(t)) {
            if let Some(goal) = self.control_goal(self.resolve(object)?.as_ref(), dir) {
                return Ok((Frame::Goal(goal), self.resolve(object)?));
            }
        }
        let after_to: Vec<String> = tail
            .iter()
            .skip_while(|t| is_to(t))
            .filter(|t| !DETERMINERS.contains(&t.as_str()))
            .cloned()
            .collect();
        if !after_to.is_empty() && all_directions(&after_to) {
            let dir = direction_word(&after_to[0]).expect("checked");
            let target = self.resolve(object)?;
            return Ok((
                Frame::GrabThen {
                    motions: vec![MovementInstr::translate(dir)],
                    hold: false,
                },
                target,
            ));
        }
        let (position, dest_tokens) = if is_to(&tail[0]) {
            let dest: Vec<String> = tail.iter().skip_while(|t| is_to(t)).cloned().collect();
            match dest.first().and_then(|t| position_word(t)) {
                Some(p) => (Some(p), dest[1..].to_vec()),
                None => (None, dest),
            }
        } else if let Some(p) = position_word(&tail[0]) {
            (Some(p), tail[1..].to_vec())
        } else {
            return fail("move where?");
        };
        let dest = self
            .resolve(&dest_tokens)?
            .ok_or_else(|| Reject::Uninterpretable("move where?".into()))?;
        match self.resolve(object)? {
            Some(carried) => Ok((
                Frame::Put {
                    position: position.unwrap_or(Relation::OnTopOf),
                    dest,
                },
                Some(carried),
            )),
            None => Ok((Frame::MoveTo { position }, Some(dest))),
        }
    }

    fn rotation(&self, family: RotFamily, rest: &[String], hold: bool) -> Result<(Frame, Option<TargetRef>), Reject> {
        let dir_word = rest.iter().find(|t| rotation_word(t).is_some()).cloned();
        let object: Vec<String> = rest.iter().filter(|t| rotation_word(t).is_none()).cloned().collect();
        let target = self.resolve(&object)?;
        let rotation = match (family, dir_word.as_deref()) {
            (RotFamily::Roll, Some("right" | "cw")) | (RotFamily::Roll, None) if target.is_some() || dir_word.is_some() => {
                RotationKind::RollRight
            }
            (RotFamily::Roll, Some("left" | "ccw")) => RotationKind::RollLeft,
            (RotFamily::Roll, Some(d @ ("up" | "down"))) => {
                let dir = direction_word(d).expect("direction");
                if let Some(goal) = self.control_goal(target.as_ref(), dir) {
                    return Ok((Frame::Goal(goal), target));
                }
                if d == "up" {
                    RotationKind::TiltUp
                } else {
                    RotationKind::TiltDown
                }
            }
            (RotFamily::Pan, Some("left" | "ccw")) => RotationKind::PanLeft,
            (RotFamily::Pan, Some("right" | "cw")) => RotationKind::PanRight,
            (RotFamily::Tilt, Some("up")) => RotationKind::TiltUp,
            (RotFamily::Tilt, Some("down")) => RotationKind::TiltDown,
            _ => return fail("rotate which way?"),
        };
        Ok((
            Frame::GrabThen {
                motions: vec![MovementInstr::rotate(rotation)],
                hold,
            },
            target,
        ))
    }

    fn verbless(&self, tokens: &[String], hold: bool) -> Result<(Frame, Option<TargetRef>), Reject> {
        if all_directions(tokens) {
            let dir = direction_word(&tokens[0]).expect("checked");
            return Ok((
                Frame::GrabThen {
                    motions: vec![MovementInstr::translate(dir)],
                    hold: false,
                },
                None,
            ));
        }
        if let Some(split) = first_position(tokens) {
            if split > 0 {
                if let Ok(found) = self.put(&tokens[..split], &tokens[split..]) {
                    return Ok(found);
                }
            }
        }
        // Without a verb, every content word has to name something in the
        // scene; otherwise this is chatter that happens to share a word.
        let lexicon = self.ctx.scene.lexicon();
        let phrase = parse_target(tokens);
        if !phrase.pronoun && !phrase.terms.iter().all(|t| lexicon.contains(&lemma(t))) {
            return Err(Reject::Irrelevant);
        }
        let target = match self.resolve(tokens) {
            Ok(Some(t)) => t,
            _ => return Err(Reject::Irrelevant),
        };
        let mut frame = self
            .state
            .last_frame
            .clone()
            .ok_or_else(|| Reject::Uninterpretable(format!("what should I do with the {}?", target.text)))?;
        if hold {
            if let Frame::Gesture { hold: h, .. } = &mut frame {
                *h = true;
            }
        }
        Ok((frame, Some(target)))
    }
}

/// Relations that read as "into" after a grab verb; others describe the object.
fn is_containment(t: &str) -> bool {
    matches!(t, "into" | "in" | "inside" | "onto" | "on" | "on_top_of")
}

fn is_to(t: &str) -> bool {
    matches!(t, "to" | "toward" | "towards" | "near" | "at")
}

fn all_directions(tokens: &[String]) -> bool {
    !tokens.is_empty()
        && tokens
            .iter()
            .all(|t| direction_word(t).is_some() || DETERMINERS.contains(&t.as_str()) || t == "to")
        && tokens.iter().any(|t| direction_word(t).is_some())
}

fn rotation_word(t: &str) -> Option<()> {
    matches!(t, "left" | "right" | "cw" | "ccw" | "up" | "down").then_some(())
}

/// Index of the first word introducing a destination, skipping `on the left`
/// style ordinals that belong to the object phrase.
fn first_position(tokens: &[String]) -> Option<usize> {
    (0..tokens.len()).find(|&i| {
        let t = tokens[i].as_str();
        if position_word(t).is_none() || t == "above" || t == "below" {
            return false;
        }
        let next = tokens[i + 1..]
            .iter()
            .find(|w| !DETERMINERS.contains(&w.as_str()))
            .map(String::as_str);
        !(matches!(t, "on" | "in") && next.is_some_and(|n| ordinal_word(n).is_some()))
            && next.is_some()
    })
}

// ---------------------------------------------------------------------------
// Clause-level modifiers

fn take_repeat(tokens: &mut Vec<String>) -> Option<u32> {
    let n = tokens.len();
    if let Some(first) = tokens.first() {
        let count = match first.as_str() {
            "double" => Some(2),
            "triple" => Some(3),
            _ => None,
        };
        if count.is_some() && tokens.len() > 1 {
            tokens.remove(0);
            return count;
        }
    }
    match tokens.last().map(String::as_str) {
        Some("twice") => {
            tokens.pop();
            return Some(2);
        }
        Some("thrice") => {
            tokens.pop();
            return Some(3);
        }
        Some("times") if n >= 2 => {
            if n >= 3 && tokens[n - 2] == "more" {
                if let Some(k) = number_word(&tokens[n - 3]) {
                    tokens.truncate(n - 3);
                    return Some(k + 1);
                }
            }
            if let Some(k) = number_word(&tokens[n - 2]) {
                tokens.truncate(n - 2);
                return Some(k);
            }
        }
        _ => {}
    }
    None
}

fn take_hold(tokens: &mut Vec<String>) -> bool {
    for tail in [
        &["and", "keep", "holding"][..],
        &["and", "hold", "it"][..],
        &["and", "hold"][..],
        &["then", "hold"][..],
        &["keep", "holding"][..],
    ] {
        if tokens.len() > tail.len() && tokens.ends_with(&tail.iter().map(|s| s.to_string()).collect::<Vec<_>>()) {
            tokens.truncate(tokens.len() - tail.len());
            return true;
        }
    }
    false
}

/// "do it again", "repeat that 3 times", "once more".
fn standalone_repeat(tokens: &[String]) -> Option<u32> {
    let core: Vec<&str> = tokens
        .iter()
        .map(String::as_str)
        .filter(|t| !matches!(*t, "do" | "it" | "that" | "this" | "the" | "same" | "thing" | "please"))
        .collect();
    match core.as_slice() {
        ["again"] | ["repeat"] | ["repeat", "again"] => Some(2),
        ["again", "twice"] | ["repeat", "twice"] | ["twice"] => Some(3),
        [rest @ .., n, "times"] if rest.iter().all(|w| matches!(*w, "again" | "repeat")) => number_word(n),
        [rest @ .., n, "more", "times"] if rest.iter().all(|w| matches!(*w, "again" | "repeat")) => {
            number_word(n).map(|k| k + 1)
        }
        _ => None,
    }
}

fn split_compound(tokens: &[String], is_verb: impl Fn(&str) -> bool) -> Vec<Vec<String>> {
    let mut clauses = vec![Vec::new()];
    let mut i = 0;
    while i < tokens.len() {
        let t = tokens[i].as_str();
        if matches!(t, "and" | "then") && i > 0 {
            let mut j = i;
            while j < tokens.len() && matches!(tokens[j].as_str(), "and" | "then") {
                j += 1;
            }
            if j < tokens.len() && is_verb(&tokens[j]) && !clauses.last().expect("never empty").is_empty() {
                clauses.push(Vec::new());
                i = j;
                continue;
            }
        }
        clauses.last_mut().expect("never empty").push(tokens[i].clone());
        i += 1;
    }
    clauses
}

// ---------------------------------------------------------------------------
// Entry point

pub struct Grammar {
    base_lexicon: BTreeSet<String>,
}

impl Default for Grammar {
    fn default() -> Self {
        Grammar::new()
    }
}

impl Grammar {
    pub fn new() -> Grammar {
        Grammar {
            base_lexicon: grammar_words(),
        }
    }

    /// Lowercased, typo-repaired, phrase-folded tokens of `text`.
    pub fn normalize(&self, text: &str, ctx: &ParseContext) -> Vec<String> {
        let scene_words = ctx.scene.lexicon();
        let customs: Vec<(Vec<String>, String)> = ctx
            .library
            .custom_names()
            .into_iter()
            .map(|n| (n.split(['_', ' ', '-']).map(str::to_lowercase).collect(), n))
            .collect();
        let mut lexicon = self.base_lexicon.clone();
        lexicon.extend(scene_words.iter().cloned());
        for (words, _) in &customs {
            lexicon.extend(words.iter().cloned());
        }
        let tokens = repair(tokenize(text), &lexicon, &scene_words);
        fold_phrases(&tokens, &customs)
    }

    pub fn parse(&self, text: &str, ctx: &ParseContext, state: &mut GrammarState) -> Result<Vec<Instruction>, Reject> {
        if let Some(t) = match_priority(text) {
            return Ok(vec![Instruction::Temporal(t)]);
        }
        let mut tokens = strip_fillers(self.normalize(text, ctx));
        let trailing_hold = take_hold(&mut tokens);
        if tokens.is_empty() {
            return Err(Reject::Irrelevant);
        }
        if let Some(n) = standalone_repeat(&tokens) {
            return repeat_step(n).map(|s| vec![s]);
        }
        let parser = Parser {
            ctx,
            state,
            held: ctx.held.map(str::to_string),
        };
        let clauses = split_compound(&tokens, |w| parser.ctx_verb(w).is_some());
        let mut held = parser.held.clone();
        let mut steps = Vec::new();
        let mut scratch = state.clone();
        let mut last = None;
        let count = clauses.len();
        for (i, clause) in clauses.into_iter().enumerate() {
            let mut clause = strip_fillers(clause);
            let hold = take_hold(&mut clause) || (i + 1 == count && trailing_hold);
            let repeat = take_repeat(&mut clause);
            let clause = strip_fillers(clause);
            let parser = Parser {
                ctx,
                state: &scratch,
                held: held.clone(),
            };
            let (frame, target) = match parser.clause(&clause, hold) {
                Err(Reject::Irrelevant) if !steps.is_empty() => {
                    return fail("could not understand part of the command")
                }
                other => other?,
            };
            let built = parser.build(&frame, target.as_ref())?;
            for s in &built {
                if let Instruction::Gesture(g) = s {
                    if g.gesture_type == GestureId::OpenHand {
                        held = None;
                    } else if g.gesture_type.binds_objects() && g.target.resolved.is_some() {
                        held = g.target.resolved.clone();
                    }
                }
            }
            steps.extend(built);
            if let Some(n) = repeat {
                steps.push(repeat_step(n)?);
            }
            if let Some(id) = target.as_ref().and_then(|t| t.unique()) {
                scratch.last_target = Some(id.to_string());
            }
            scratch.last_frame = Some(frame);
            last = Some(());
        }
        if last.is_none() || steps.is_empty() {
            return Err(Reject::Irrelevant);
        }
        *state = scratch;
        Ok(steps)
    }
}

fn repeat_step(n: u32) -> Result<Instruction, Reject> {
    if n == 0 || n > MAX_REPEAT {
        return fail(format!("cannot repeat {n} times"));
    }
    Ok(Instruction::Temporal(TemporalInstr::repeat(n)))
}
