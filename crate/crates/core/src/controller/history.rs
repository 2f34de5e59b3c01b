use std::collections::VecDeque;

use crate::scene::{Binding, SceneSnapshot};
use crate::skeleton::HandPose;

/// Hand and world state after a command.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub pose: HandPose,
    pub scene: SceneSnapshot,
    pub held: Option<Binding>,
}

/// Bounded undo stack whose top is always the current committed state.
#[derive(Debug, Clone)]
pub struct History {
    past: VecDeque<Checkpoint>,
    redo: Vec<Checkpoint>,
    depth: usize,
}

impl History {
    pub fn new(initial: Checkpoint, depth: usize) -> History {
        History {
            past: VecDeque::from([initial]),
            redo: Vec::new(),
            depth: depth.max(1),
        }
    }

    pub fn current(&self) -> &Checkpoint {
        self.past.back().expect("history is never empty")
    }

    /// Number of steps that can be undone.
    pub fn undo_len(&self) -> usize {
        self.past.len() - 1
    }

    pub fn redo_len(&self) -> usize {
        self.redo.len()
    }

    pub fn push(&mut self, cp: Checkpoint) {
        self.redo.clear();
        self.past.push_back(cp);
        while self.past.len() > self.depth + 1 {
            self.past.pop_front();
        }
    }

    /// Steps back; returns the state to restore.
    pub fn undo(&mut self) -> Option<&Checkpoint> {
        if self.past.len() < 2 {
            return None;
        }
        let top = self.past.pop_back().expect("checked");
        self.redo.push(top);
        Some(self.current())
    }

    pub fn redo(&mut self) -> Option<&Checkpoint> {
        let cp = self.redo.pop()?;
        self.past.push_back(cp);
        Some(self.current())
    }
}
