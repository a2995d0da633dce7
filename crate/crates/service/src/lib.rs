//! Live study service.
//!
//! Participants type through a thin browser client; every key goes to the
//! server, which owns the text buffer, runs the injection engine for the
//! participant's condition, classifies committed words and persists the
//! session log before acknowledging a submit.

pub mod http;
pub mod store;
pub mod study;
pub mod wire;

pub use store::{FsLogStore, LogStore, MemLogStore};
pub use study::{log_file_name, phrase_seed, LiveSession, ServiceError, StartedSession, Study, StudyConfig, StudyService};
pub use wire::{BufferState, ClientBody, ClientMessage, Highlight, PhrasePrompt, ServerBody, ServerMessage, WordFeedback};
