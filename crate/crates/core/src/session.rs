//! Session event logs, phrase sets and study plans.
//!
//! # Log file format
//!
//! UTF-8, one JSON object per line. Line 1 is the header:
//!
//! ```text
//! {"schema":"keyfault-log/1","session_id":"p000-C2","seed":42,"config_digest":"…"}
//! ```
//!
//! Every following line is one event: `t_ms`, optional `t_recv_ms`, and a
//! `kind` tag with its payload fields, e.g.
//!
//! ```text
//! {"t_ms":1200,"kind":"key_down","ch":"h"}
//! {"t_ms":1450,"kind":"backspace"}
//! {"t_ms":1500,"kind":"cursor_move","index":3}
//! {"t_ms":1600,"kind":"suggestion_pick","at":0,"replaced":"hrllo","word":"hello"}
//! {"t_ms":1700,"kind":"word_commit","typed":"toy","displayed":"tiy"}
//! {"t_ms":1700,"kind":"injection_decision","offset":4,"original":"o","emitted":"i","mode":"per_word","applied":true,"source":"engine"}
//! {"t_ms":0,"kind":"phrase_shown","text":"the quick fox"}
//! {"t_ms":9000,"kind":"submit","final_text":"the quick fox"}
//! ```

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::injection::InjectionDecision;
use crate::rng::{derived_rng, label};

pub const LOG_SCHEMA: &str = "keyfault-log/1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    /// A character was inserted at the cursor (after any per-key injection).
    KeyDown { ch: char },
    Backspace,
    CursorMove { index: usize },
    /// The text `replaced` starting at char index `at` was replaced by `word`.
    SuggestionPick {
        at: usize,
        replaced: String,
        word: String,
    },
    /// The word ending at the cursor was finalised; `displayed` replaces `typed`.
    WordCommit { typed: String, displayed: String },
    InjectionDecision(InjectionDecision),
    PhraseShown { text: String },
    Submit { final_text: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionEvent {
    /// Milliseconds since session start (client clock for live sessions).
    pub t_ms: u64,
    /// Server receive time, live sessions only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_recv_ms: Option<u64>,
    #[serde(flatten)]
    pub kind: EventKind,
}

impl SessionEvent {
    pub fn new(t_ms: u64, kind: EventKind) -> Self {
        Self {
            t_ms,
            t_recv_ms: None,
            kind,
        }
    }

    /// Key presses: printable characters and backspaces.
    pub fn is_key(&self) -> bool {
        matches!(self.kind, EventKind::KeyDown { .. } | EventKind::Backspace)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogHeader {
    pub schema: String,
    pub session_id: String,
    pub seed: u64,
    pub config_digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub participant: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<Condition>,
}

impl LogHeader {
    pub fn new(session_id: impl Into<String>, seed: u64, config_digest: impl Into<String>) -> Self {
        Self {
            schema: LOG_SCHEMA.to_string(),
            session_id: session_id.into(),
            seed,
            config_digest: config_digest.into(),
            participant: None,
            condition: None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LogError {
    #[error("log parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionLog {
    pub header: LogHeader,
    pub events: Vec<SessionEvent>,
}

/// One phrase task inside a log: the events up to and including a submit.
#[derive(Debug, Clone, Copy)]
pub struct Task<'a> {
    pub target: Option<&'a str>,
    pub events: &'a [SessionEvent],
}

impl<'a> Task<'a> {
    pub fn submitted(&self) -> Option<&'a str> {
        self.events.iter().rev().find_map(|e| match &e.kind {
            EventKind::Submit { final_text } => Some(final_text.as_str()),
            _ => None,
        })
    }
}

impl SessionLog {
    pub fn new(header: LogHeader) -> Self {
        Self {
            header,
            events: Vec::new(),
        }
    }

    pub fn push(&mut self, t_ms: u64, kind: EventKind) {
        self.events.push(SessionEvent::new(t_ms, kind));
    }

    pub fn serialize(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serializes");
        out.push('\n');
        for e in &self.events {
            out.push_str(&serialize_event(e));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, LogError> {
        let mut lines = text.lines().enumerate();
        let header = match lines.next() {
            Some((_, line)) => serde_json::from_str::<LogHeader>(line).map_err(|e| LogError::Parse {
                line: 1,
                message: e.to_string(),
            })?,
            None => {
                return Err(LogError::Parse {
                    line: 1,
                    message: "missing header".into(),
                })
            }
        };
        if header.schema != LOG_SCHEMA {
            return Err(LogError::Parse {
                line: 1,
                message: format!("unsupported schema {:?}", header.schema),
            });
        }
        let mut events = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let event = serde_json::from_str::<SessionEvent>(line).map_err(|e| LogError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            events.push(event);
        }
        Ok(Self { header, events })
    }

    /// Splits the log into phrase tasks. Each task ends with a submit; a
    /// trailing run of events without a submit forms a final open task.
    pub fn tasks(&self) -> Vec<Task<'_>> {
        split_tasks(&self.events)
    }

    pub fn decisions(&self) -> impl Iterator<Item = &InjectionDecision> {
        self.events.iter().filter_map(|e| match &e.kind {
            EventKind::InjectionDecision(d) => Some(d),
            _ => None,
        })
    }
}

pub fn serialize_event(e: &SessionEvent) -> String {
    serde_json::to_string(e).expect("event serializes")
}

pub fn split_tasks(events: &[SessionEvent]) -> Vec<Task<'_>> {
    let mut tasks = Vec::new();
    let mut start = 0;
    for (i, e) in events.iter().enumerate() {
        if matches!(e.kind, EventKind::Submit { .. }) {
            tasks.push(make_task(&events[start..=i]));
            start = i + 1;
        }
    }
    if events[start..].iter().any(|e| e.is_key()) {
        tasks.push(make_task(&events[start..]));
    }
    tasks
}

fn make_task(events: &[SessionEvent]) -> Task<'_> {
    let target = events.iter().find_map(|e| match &e.kind {
        EventKind::PhraseShown { text } => Some(text.as_str()),
        _ => None,
    });
    Task { target, events }
}

// ---------------------------------------------------------------------------
// Phrase sets

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhraseSet {
    pub id: usize,
    pub phrases: Vec<String>,
}

impl PhraseSet {
    pub fn mean_len(&self) -> f64 {
        mean_len(&self.phrases)
    }
}

fn mean_len(phrases: &[String]) -> f64 {
    if phrases.is_empty() {
        return 0.0;
    }
    phrases.iter().map(|p| p.chars().count()).sum::<usize>() as f64 / phrases.len() as f64
}

/// One phrase per line; blank lines and surrounding whitespace are dropped.
pub fn parse_phrases(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect()
}

pub fn bundled_phrases() -> Vec<String> {
    parse_phrases(crate::data::PHRASES)
}

pub const MAX_MEAN_GAP: f64 = 2.0;
const PARTITION_ATTEMPTS: u64 = 256;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("need {needed} phrases, pool has {available}")]
    InsufficientPhrases { needed: usize, available: usize },
    #[error("no partition within {MAX_MEAN_GAP} chars mean-length gap after {0} attempts")]
    PartitionFailed(u64),
}

/// Draws `k` disjoint phrase sets of `set_size` phrases each whose mean
/// lengths differ pairwise by at most [`MAX_MEAN_GAP`] characters.
///
/// Each attempt shuffles the pool with a seeded RNG, takes the first
/// `k * set_size` phrases and deals them longest-first to the non-full set with
/// the smallest total length so far. Attempts repeat with fresh shuffles until the
/// tolerance holds.
pub fn partition_phrases(
    pool: &[String],
    k: usize,
    set_size: usize,
    seed: u64,
) -> Result<Vec<PhraseSet>, PlanError> {
    let needed = k * set_size;
    if k == 0 || set_size == 0 || pool.len() < needed {
        return Err(PlanError::InsufficientPhrases {
            needed: needed.max(1),
            available: pool.len(),
        });
    }
    for attempt in 0..PARTITION_ATTEMPTS {
        let mut rng = derived_rng(seed, &[label("partition"), attempt]);
        let mut shuffled: Vec<&String> = pool.iter().collect();
        shuffled.shuffle(&mut rng);
        let mut chosen: Vec<&String> = shuffled.into_iter().take(needed).collect();
        // stable sort keeps the shuffled order among equal lengths
        chosen.sort_by_key(|p| std::cmp::Reverse(p.chars().count()));

        let mut sets: Vec<Vec<String>> = vec![Vec::with_capacity(set_size); k];
        for phrase in chosen {
            let target = sets
                .iter()
                .enumerate()
                .filter(|(_, s)| s.len() < set_size)
                .min_by_key(|(_, s)| (s.iter().map(|p| p.chars().count()).sum::<usize>(), s.len()))
                .map(|(i, _)| i)
                .expect("some set has room");
            sets[target].push(phrase.clone());
        }
        let means: Vec<f64> = sets.iter().map(|s| mean_len(s)).collect();
        let gap = means.iter().cloned().fold(f64::MIN, f64::max)
            - means.iter().cloned().fold(f64::MAX, f64::min);
        if gap <= MAX_MEAN_GAP {
            return Ok(sets
                .into_iter()
                .enumerate()
                .map(|(id, phrases)| PhraseSet { id, phrases })
                .collect());
        }
    }
    Err(PlanError::PartitionFailed(PARTITION_ATTEMPTS))
}

// ---------------------------------------------------------------------------
// Study plans

/// The four keyboard conditions of the 2×2 design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Condition {
    /// Normal keyboard.
    C1,
    /// Normal keyboard with injected errors.
    C2,
    /// Highlighting keyboard.
    C3,
    /// Highlighting keyboard with injected errors.
    C4,
}

impl Condition {
    pub const ALL: [Condition; 4] = [Condition::C1, Condition::C2, Condition::C3, Condition::C4];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn highlighting(self) -> bool {
        matches!(self, Condition::C3 | Condition::C4)
    }

    pub fn injection(self) -> bool {
        matches!(self, Condition::C2 | Condition::C4)
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "C{}", self.index() + 1)
    }
}

impl std::str::FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "C1" => Ok(Condition::C1),
            "C2" => Ok(Condition::C2),
            "C3" => Ok(Condition::C3),
            "C4" => Ok(Condition::C4),
            other => Err(format!("unknown condition {other:?}")),
        }
    }
}

use Condition::{C1, C2, C3, C4};

/// Balanced (Williams) 4×4 Latin square: every condition appears once in every
/// position and immediately follows every other condition exactly once.
pub const LATIN_SQUARE: [[Condition; 4]; 4] = [
    [C1, C2, C4, C3],
    [C2, C3, C1, C4],
    [C3, C4, C2, C1],
    [C4, C1, C3, C2],
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyPlan {
    pub participant_id: u32,
    pub conditions: [Condition; 4],
    /// Phrase-set index for each condition, indexed by `Condition::index`.
    pub phrase_set_for: [usize; 4],
}

impl StudyPlan {
    pub fn phrase_set(&self, c: Condition) -> usize {
        self.phrase_set_for[c.index()]
    }
}

/// Condition order from row `participant_index mod 4` of [`LATIN_SQUARE`];
/// the phrase-set assignment is a seeded shuffle independent of that order.
pub fn make_plan(participant_index: u32, seed: u64) -> StudyPlan {
    let conditions = LATIN_SQUARE[participant_index as usize % 4];
    let mut rng = derived_rng(seed, &[label("plan"), u64::from(participant_index)]);
    let mut sets = [0usize, 1, 2, 3];
    sets.shuffle(&mut rng);
    StudyPlan {
        participant_id: participant_index,
        conditions,
        phrase_set_for: sets,
    }
}

/// Tally helper used by plan checks: how often each condition got each set.
pub fn assignment_counts(plans: &[StudyPlan]) -> BTreeMap<Condition, [usize; 4]> {
    let mut out = BTreeMap::new();
    for p in plans {
        for c in Condition::ALL {
            out.entry(c).or_insert([0usize; 4])[p.phrase_set(c)] += 1;
        }
    }
    out
}
