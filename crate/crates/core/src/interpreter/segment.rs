//! Splits streamed text into commands.
//!
//! Sentences end at `.`, `?`, `!` or `;`. A comma ends a command only when the
//! next word starts a new one (an imperative verb or a priority keyword) or
//! when the text before it is a complete priority phrase such as "wait
//! actually". Otherwise the comma stays inside the command.

use super::grammar::is_command_start;
use super::instruction::{Command, TemporalInstr};
use super::priority::{is_priority_clause, match_priority, match_priority_partial, starts_priority};

#[derive(Debug, Clone, PartialEq)]
pub enum SegmentEvent {
    /// A finished command ready for interpretation.
    Command(Command),
    /// A priority control spotted in text that has not finished yet.
    Eager(TemporalInstr),
}

#[derive(Debug, Default)]
pub struct Segmenter {
    buf: String,
    scan: usize,
    next_seq: u64,
    /// Control already dispatched for the clause still in the buffer.
    eager_fired: Option<TemporalInstr>,
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '\''
}

impl Segmenter {
    pub fn new() -> Segmenter {
        Segmenter::default()
    }

    /// Starts numbering at `seq`.
    pub fn starting_at(seq: u64) -> Segmenter {
        Segmenter {
            next_seq: seq,
            ..Segmenter::default()
        }
    }

    pub fn pending(&self) -> &str {
        &self.buf
    }

    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    pub fn push(&mut self, chunk: &str, now_ms: u64) -> Vec<SegmentEvent> {
        self.buf.push_str(chunk);
        let mut out = self.scan(false, now_ms);
        if self.eager_fired.is_none() && self.buf.ends_with(char::is_whitespace) {
            if let Some(t) = match_priority_partial(&self.buf) {
                self.eager_fired = Some(t.clone());
                out.push(SegmentEvent::Eager(t));
            }
        }
        out
    }

    /// Ends the stream: whatever is buffered becomes the last command.
    pub fn flush(&mut self, now_ms: u64) -> Vec<SegmentEvent> {
        let mut out = self.scan(true, now_ms);
        let rest = std::mem::take(&mut self.buf);
        self.scan = 0;
        out.extend(self.emit(&rest, now_ms));
        out
    }

    fn emit(&mut self, text: &str, now_ms: u64) -> Option<SegmentEvent> {
        let fired = self.eager_fired.take();
        let text = text.trim();
        if text.is_empty() {
            return None;
        }
        if fired.is_some() && match_priority(text) == fired {
            return None;
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        Some(SegmentEvent::Command(Command::new(text, seq, now_ms)))
    }

    fn scan(&mut self, at_end: bool, now_ms: u64) -> Vec<SegmentEvent> {
        let mut out = Vec::new();
        loop {
            let Some(rel) = self.buf[self.scan..].find(['.', '?', '!', ';', ',']) else {
                break;
            };
            let idx = self.scan + rel;
            let c = self.buf[idx..].chars().next().unwrap_or(' ');
            let before = self.buf[..idx].chars().next_back();
            let after = self.buf[idx + 1..].chars().next();
            let split = match c {
                '.' if before.is_some_and(|b| b.is_ascii_digit()) => match after {
                    Some(a) if a.is_ascii_digit() => false,
                    Some(_) => true,
                    None if at_end => true,
                    None => break,
                },
                ',' => match self.comma_splits(idx, at_end) {
                    Some(s) => s,
                    None => break,
                },
                _ => true,
            };
            if split {
                let clause: String = self.buf[..idx].to_string();
                self.buf.drain(..idx + c.len_utf8());
                self.scan = 0;
                out.extend(self.emit(&clause, now_ms));
            } else {
                self.scan = idx + c.len_utf8();
            }
        }
        out
    }

    /// Whether the comma at `idx` ends a command; `None` while undecidable.
    fn comma_splits(&self, idx: usize, at_end: bool) -> Option<bool> {
        if is_priority_clause(&self.buf[..idx]) {
            return Some(true);
        }
        let rest = self.buf[idx + 1..].trim_start();
        let word: String = rest.chars().take_while(|c| is_word_char(*c)).collect();
        if word.is_empty() {
            return if rest.is_empty() && !at_end { None } else { Some(false) };
        }
        if word.len() == rest.len() && !at_end {
            return None;
        }
        Some(is_command_start(&word) || starts_priority(&word))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn commands(events: &[SegmentEvent]) -> Vec<String> {
        events
            .iter()
            .filter_map(|e| match e {
                SegmentEvent::Command(c) => Some(c.raw_text.clone()),
                SegmentEvent::Eager(_) => None,
            })
            .collect()
    }

    #[test]
    fn four_clause_stream() {
        let mut s = Segmenter::new();
        let mut ev = s.push(
            "put the pink fruit into the basket, press and hold the like button, wait actually, the confirm button",
            0,
        );
        ev.extend(s.flush(0));
        assert_eq!(
            commands(&ev),
            vec![
                "put the pink fruit into the basket",
                "press and hold the like button",
                "wait actually",
                "the confirm button"
            ]
        );
    }

    #[test]
    fn chunk_boundaries_do_not_matter() {
        let mut s = Segmenter::new();
        let mut ev = Vec::new();
        for chunk in ["pin", "ch the cu", "be."] {
            ev.extend(s.push(chunk, 0));
        }
        assert_eq!(commands(&ev), vec!["pinch the cube"]);
        assert!(s.pending().is_empty());
    }

    #[test]
    fn intra_command_commas_and_decimals() {
        let mut s = Segmenter::new();
        let ev = s.push("grab the apple, the red one. move up 0.5 metres. ", 0);
        assert_eq!(commands(&ev), vec!["grab the apple, the red one", "move up 0.5 metres"]);
    }

    #[test]
    fn comma_waits_for_the_next_word() {
        let mut s = Segmenter::new();
        assert!(commands(&s.push("grab the apple, mo", 0)).is_empty());
        let ev = s.push("ve up.", 0);
        assert_eq!(commands(&ev), vec!["grab the apple", "move up"]);
    }

    #[test]
    fn sequence_numbers_increase() {
        let mut s = Segmenter::starting_at(7);
        let ev = s.push("pinch. point. swipe.", 0);
        let seqs: Vec<u64> = ev
            .iter()
            .map(|e| match e {
                SegmentEvent::Command(c) => c.seq,
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(seqs, vec![7, 8, 9]);
    }

    #[test]
    fn eager_stop_fires_once() {
        let mut s = Segmenter::new();
        let mut ev = s.push("move right. stop ", 0);
        assert_eq!(commands(&ev), vec!["move right"]);
        assert!(matches!(ev.last(), Some(SegmentEvent::Eager(_))));
        ev = s.push("now.", 0);
        assert!(ev.is_empty());
        let ev = s.push("hold ", 0);
        assert!(ev.is_empty());
        assert_eq!(commands(&s.flush(0)), vec!["hold"]);
    }
}
