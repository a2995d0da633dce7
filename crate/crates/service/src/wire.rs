//! Messages exchanged over a session channel.
//!
//! Every record is a JSON object `{seq, t_client_ms, kind, payload}`; the
//! server replies use the same envelope with `seq` set to the client message
//! they answer.

use keyfault_core::metrics::{FeedbackColor, WordClassKind};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientMessage {
    pub seq: u64,
    pub t_client_ms: u64,
    #[serde(flatten)]
    pub body: ClientBody,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum ClientBody {
    Key(char),
    Backspace,
    Cursor { index: usize },
    PickSuggestion { at: usize, replaced: String, word: String },
    Submit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerMessage {
    pub seq: u64,
    #[serde(flatten)]
    pub body: ServerBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum ServerBody {
    BufferState(BufferState),
    WordFeedback(WordFeedback),
    Phrase(PhrasePrompt),
    SessionDone { participant: u32, condition: String },
    /// The message was out of order; the client must adopt this state and
    /// continue from `expected_seq`.
    Resync { expected_seq: u64, state: BufferState },
    /// Persisting the log failed. The session accepts nothing but a retry of
    /// the pending submit.
    Paused { reason: String },
    Error { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BufferState {
    pub text: String,
    pub cursor: usize,
    /// Empty unless the condition highlights words.
    pub highlights: Vec<Highlight>,
    pub bar: Option<FeedbackColor>,
    /// Dictionary completions of the word at the cursor.
    pub suggestions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Highlight {
    /// Character offsets, end exclusive.
    pub start: usize,
    pub end: usize,
    pub class: WordClassKind,
    pub color: FeedbackColor,
    pub suggestions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordFeedback {
    pub word: String,
    pub start: usize,
    pub class: WordClassKind,
    pub suggestions: Vec<String>,
    pub bar: FeedbackColor,
    /// `None` for correct words and in conditions without highlighting.
    pub highlight: Option<FeedbackColor>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhrasePrompt {
    pub index: usize,
    pub total: usize,
    pub text: String,
    pub highlighting: bool,
}

impl ServerMessage {
    pub fn new(seq: u64, body: ServerBody) -> Self {
        Self { seq, body }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn envelope_shape() {
        let m: ClientMessage =
            serde_json::from_str(r#"{"seq":3,"t_client_ms":120,"kind":"key","payload":"s"}"#).unwrap();
        assert_eq!(m.body, ClientBody::Key('s'));
        let b: ClientMessage = serde_json::from_str(r#"{"seq":4,"t_client_ms":130,"kind":"backspace"}"#).unwrap();
        assert_eq!(b.body, ClientBody::Backspace);
        let c: ClientMessage =
            serde_json::from_str(r#"{"seq":5,"t_client_ms":1,"kind":"cursor","payload":{"index":2}}"#).unwrap();
        assert_eq!(c.body, ClientBody::Cursor { index: 2 });
        let json = serde_json::to_value(&m).unwrap();
        assert_eq!(json["kind"], "key");
        assert_eq!(json["payload"], "s");
    }

    #[test]
    fn server_envelope() {
        let m = ServerMessage::new(
            7,
            ServerBody::SessionDone {
                participant: 1,
                condition: "C2".into(),
            },
        );
        let v = serde_json::to_value(&m).unwrap();
        assert_eq!(v["seq"], 7);
        assert_eq!(v["kind"], "session_done");
        assert_eq!(v["payload"]["condition"], "C2");
        let back: ServerMessage = serde_json::from_value(v).unwrap();
        assert_eq!(back, m);
    }
}
