//! Plain text buffer with a cursor, and log replay on top of it.

use thiserror::Error;

use crate::session::{EventKind, SessionEvent};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EditError {
    #[error("cursor index {index} beyond text length {len}")]
    CursorOutOfRange { index: usize, len: usize },
    #[error("text at {at} does not match {expected:?}")]
    SpanMismatch { at: usize, expected: String },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TextBuffer {
    chars: Vec<char>,
    cursor: usize,
}

impl TextBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn text(&self) -> String {
        self.chars.iter().collect()
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn at_end(&self) -> bool {
        self.cursor == self.chars.len()
    }

    pub fn clear(&mut self) {
        self.chars.clear();
        self.cursor = 0;
    }

    pub fn insert(&mut self, c: char) {
        self.chars.insert(self.cursor, c);
        self.cursor += 1;
    }

    /// Deletes the character before the cursor, returning it.
    pub fn backspace(&mut self) -> Option<char> {
        if self.cursor == 0 {
            return None;
        }
        self.cursor -= 1;
        Some(self.chars.remove(self.cursor))
    }

    pub fn move_cursor(&mut self, index: usize) -> Result<(), EditError> {
        if index > self.chars.len() {
            return Err(EditError::CursorOutOfRange {
                index,
                len: self.chars.len(),
            });
        }
        self.cursor = index;
        Ok(())
    }

    /// Replaces the `expected` text starting at `at` with `with`. The cursor
    /// keeps its position relative to the surrounding text; a cursor inside
    /// the span ends up after the replacement.
    pub fn replace(&mut self, at: usize, expected: &str, with: &str) -> Result<(), EditError> {
        let old: Vec<char> = expected.chars().collect();
        let end = at + old.len();
        if end > self.chars.len() || self.chars[at..end] != old[..] {
            return Err(EditError::SpanMismatch {
                at,
                expected: expected.to_string(),
            });
        }
        let new: Vec<char> = with.chars().collect();
        let new_len = new.len();
        self.chars.splice(at..end, new);
        if self.cursor >= end {
            self.cursor = self.cursor - old.len() + new_len;
        } else if self.cursor > at {
            self.cursor = at + new_len;
        }
        Ok(())
    }
}

/// Rebuilds the visible text from a log.
#[derive(Debug, Clone, Default)]
pub struct Replay {
    pub buffer: TextBuffer,
    /// Events that could not be applied (mismatching spans, bad cursor moves).
    pub skipped: usize,
    pub last_submit: Option<String>,
}

impl Replay {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn apply(&mut self, event: &SessionEvent) {
        let ok = match &event.kind {
            EventKind::KeyDown { ch } => {
                self.buffer.insert(*ch);
                true
            }
            EventKind::Backspace => {
                self.buffer.backspace();
                true
            }
            EventKind::CursorMove { index } => self.buffer.move_cursor(*index).is_ok(),
            EventKind::SuggestionPick { at, replaced, word } => {
                self.buffer.replace(*at, replaced, word).is_ok()
            }
            EventKind::WordCommit { typed, displayed } => {
                let len = typed.chars().count();
                match self.buffer.cursor().checked_sub(len) {
                    Some(at) => self.buffer.replace(at, typed, displayed).is_ok(),
                    None => false,
                }
            }
            EventKind::InjectionDecision(_) => true,
            EventKind::PhraseShown { .. } => {
                self.buffer.clear();
                true
            }
            EventKind::Submit { final_text } => {
                self.last_submit = Some(final_text.clone());
                true
            }
        };
        if !ok {
            self.skipped += 1;
        }
    }

    pub fn run(events: &[SessionEvent]) -> Self {
        let mut r = Self::new();
        for e in events {
            r.apply(e);
        }
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(kind: EventKind) -> SessionEvent {
        SessionEvent::new(0, kind)
    }

    #[test]
    fn editing_basics() {
        let mut b = TextBuffer::new();
        for c in "abxc".chars() {
            b.insert(c);
        }
        b.move_cursor(3).unwrap();
        assert_eq!(b.backspace(), Some('x'));
        b.insert('b');
        assert_eq!(b.text(), "abbc");
        assert_eq!(b.cursor(), 3);
        assert!(b.move_cursor(9).is_err());
        let mut e = TextBuffer::new();
        assert_eq!(e.backspace(), None);
    }

    #[test]
    fn replace_shifts_cursor() {
        let mut b = TextBuffer::new();
        for c in "hrllo world".chars() {
            b.insert(c);
        }
        b.replace(0, "hrllo", "hello!").unwrap();
        assert_eq!(b.text(), "hello! world");
        assert_eq!(b.cursor(), 12);
        assert!(b.replace(0, "nope", "x").is_err());
        b.move_cursor(2).unwrap();
        b.replace(0, "hello!", "hi").unwrap();
        assert_eq!(b.cursor(), 2);
    }

    #[test]
    fn replay_word_commit_and_phrase_reset() {
        let events = vec![
            ev(EventKind::PhraseShown { text: "x".into() }),
            ev(EventKind::KeyDown { ch: 't' }),
            ev(EventKind::KeyDown { ch: 'o' }),
            ev(EventKind::KeyDown { ch: 'y' }),
            ev(EventKind::WordCommit {
                typed: "toy".into(),
                displayed: "tiy".into(),
            }),
            ev(EventKind::KeyDown { ch: ' ' }),
            ev(EventKind::WordCommit {
                typed: "zzz".into(),
                displayed: "aaa".into(),
            }),
        ];
        let r = Replay::run(&events);
        assert_eq!(r.buffer.text(), "tiy ");
        assert_eq!(r.skipped, 1);
    }
}
