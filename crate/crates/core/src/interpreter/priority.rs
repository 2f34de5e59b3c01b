//! Keyword tier: time-critical temporal controls recognized without parsing.

use super::instruction::{TemporalControl, TemporalInstr};

/// Words that may pad a priority phrase without changing it.
const FILLERS: &[&str] = &[
    "please", "now", "ok", "okay", "just", "hey", "the", "it", "that", "um", "uh", "oh", "right", "there",
    "everything", "all", "again",
];

const PHRASES: &[(&str, TemporalControl)] = &[
    ("stop", TemporalControl::Stop),
    ("halt", TemporalControl::Stop),
    ("freeze", TemporalControl::Stop),
    ("pause", TemporalControl::Stop),
    ("stop moving", TemporalControl::Stop),
    ("continue", TemporalControl::Continue),
    ("resume", TemporalControl::Continue),
    ("go on", TemporalControl::Continue),
    ("keep going", TemporalControl::Continue),
    ("carry on", TemporalControl::Continue),
    ("faster", TemporalControl::Faster),
    ("speed up", TemporalControl::Faster),
    ("go faster", TemporalControl::Faster),
    ("quicker", TemporalControl::Faster),
    ("slower", TemporalControl::Slower),
    ("slow down", TemporalControl::Slower),
    ("go slower", TemporalControl::Slower),
    ("undo", TemporalControl::UndoStep),
    ("wait actually", TemporalControl::UndoStep),
    ("actually wait", TemporalControl::UndoStep),
    ("go back", TemporalControl::UndoStep),
    ("redo", TemporalControl::RedoStep),
    ("hold", TemporalControl::Hold),
    ("keep holding", TemporalControl::Hold),
    ("hold on", TemporalControl::Hold),
    ("hold still", TemporalControl::Hold),
];

/// Phrases that also begin ordinary commands ("hold the apple", "go back to
/// the basket", "go on top of it"); they only count once the sentence ends.
const PREFIX_PHRASES: &[&str] = &["hold", "hold on", "hold still", "keep holding", "go back", "go on"];

fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '\''))
        .filter(|w| !w.is_empty())
        .map(|w| w.to_lowercase())
        .collect()
}

fn core_phrase(text: &str) -> String {
    let w = words(text);
    let mut lo = 0;
    let mut hi = w.len();
    while lo < hi && FILLERS.contains(&w[lo].as_str()) {
        lo += 1;
    }
    while hi > lo && FILLERS.contains(&w[hi - 1].as_str()) {
        hi -= 1;
    }
    w[lo..hi].join(" ")
}

fn last_clause(text: &str) -> &str {
    text.rsplit(|c: char| matches!(c, ',' | '.' | '!' | '?' | ';'))
        .find(|part| !part.trim().is_empty())
        .unwrap_or("")
}

fn lookup(phrase: &str) -> Option<TemporalControl> {
    PHRASES.iter().find(|(p, _)| *p == phrase).map(|(_, c)| *c)
}

/// Recognizes a clause that is, apart from filler words, exactly a priority
/// phrase. Anything longer ("press and hold the like button") is left to the
/// grammar so that a keyword inside a larger command does not hijack it.
pub fn match_priority(text: &str) -> Option<TemporalInstr> {
    lookup(&core_phrase(last_clause(text))).map(TemporalInstr::control)
}

/// Like [`match_priority`], restricted to controls that cannot begin a longer
/// ordinary command. Used on text whose sentence has not ended yet.
pub fn match_priority_partial(text: &str) -> Option<TemporalInstr> {
    let phrase = core_phrase(last_clause(text));
    if PREFIX_PHRASES.contains(&phrase.as_str()) {
        return None;
    }
    lookup(&phrase).map(TemporalInstr::control)
}

/// True when the clause before a comma is a complete priority phrase.
pub fn is_priority_clause(text: &str) -> bool {
    lookup(&core_phrase(text)).is_some()
}

/// Words that begin a priority phrase, used when deciding whether a comma
/// starts a new command.
pub fn starts_priority(word: &str) -> bool {
    let w = word.to_lowercase();
    PHRASES.iter().any(|(p, _)| p.split(' ').next() == Some(w.as_str()))
}
