//! Error injection engines.
//!
//! Two algorithms share one substitution model:
//!
//! - **Per key**: each eligible keystroke is selected as a candidate with
//!   probability `p_t`; a candidate is replaced immediately by a substitute
//!   drawn from its candidate set `S′` weighted by `F(i)/D(i,s)`.
//! - **Per word**: candidates are marked while a word is composed but only
//!   applied when the word is committed. Marks on characters that get
//!   backspaced away are discarded, and at commit at most
//!   `max(1, floor(L/4))` marks survive; the excess is evicted uniformly at
//!   random.
//!
//! Draws are two-stage (select with `p_t`, then pick a substitute), which is
//! the same distribution as sampling from `substitution_distribution`
//! directly but keeps the candidate decision visible in the audit log.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::alphabet::{self, ALPHABET, SIZE};
use crate::editor::{EditError, TextBuffer};
use crate::geometry::KeyboardLayout;
use crate::rng::{derived_rng, label, SessionRng};
use crate::session::{EventKind, LogHeader, SessionEvent, SessionLog};
use crate::substitution::{
    all_candidate_sets, substitution_distribution, CandidateSet, ModelError, SubstitutionMatrix,
};

pub const DEFAULT_P_T: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InjectionMode {
    Off,
    PerKey,
    PerWord,
}

impl FromStr for InjectionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "off" => Ok(Self::Off),
            "key" | "per_key" => Ok(Self::PerKey),
            "word" | "per_word" => Ok(Self::PerWord),
            other => Err(format!("unknown mode {other:?} (expected off, key or word)")),
        }
    }
}

impl fmt::Display for InjectionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Off => "off",
            Self::PerKey => "key",
            Self::PerWord => "word",
        })
    }
}

/// Who produced a substitution: the injection engine or a simulated typist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionSource {
    #[default]
    Engine,
    Typist,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectionDecision {
    /// Index of the originating keystroke in the engine's input stream.
    pub offset: u64,
    pub original: char,
    pub emitted: char,
    pub mode: InjectionMode,
    /// False for per-word marks evicted by the cap or discarded by a backspace.
    pub applied: bool,
    #[serde(default)]
    pub source: DecisionSource,
}

/// `max(1, floor(0.25 · word_len))`.
pub fn cap(word_len: usize) -> usize {
    (word_len / 4).max(1)
}

// ---------------------------------------------------------------------------
// Model

#[derive(Debug, Clone)]
struct Sampler {
    chars: Vec<char>,
    /// Cumulative normalised weights; the last entry is 1.0.
    cumulative: Vec<f64>,
}

impl Sampler {
    fn new(cs: &CandidateSet) -> Self {
        let weights = cs.weights();
        let total: f64 = weights.iter().sum();
        let mut acc = 0.0;
        let mut cumulative: Vec<f64> = weights
            .iter()
            .map(|w| {
                acc += w / total;
                acc
            })
            .collect();
        if let Some(last) = cumulative.last_mut() {
            *last = 1.0;
        }
        Self {
            chars: cs.entries.iter().map(|e| e.ch).collect(),
            cumulative,
        }
    }

    fn pick(&self, u: f64) -> char {
        let i = self.cumulative.partition_point(|&c| c <= u);
        self.chars[i.min(self.chars.len() - 1)]
    }
}

/// Matrix, layout and the derived candidate sets for all 29 characters.
#[derive(Debug, Clone)]
pub struct InjectionModel {
    matrix: SubstitutionMatrix,
    layout: KeyboardLayout,
    candidates: Vec<CandidateSet>,
    samplers: Vec<Sampler>,
}

impl InjectionModel {
    pub fn new(matrix: SubstitutionMatrix, layout: KeyboardLayout) -> Result<Self, ModelError> {
        let candidates = all_candidate_sets(&matrix, &layout)?;
        let samplers = candidates.iter().map(Sampler::new).collect();
        Ok(Self {
            matrix,
            layout,
            candidates,
            samplers,
        })
    }

    /// Bundled QWERTY layout with the synthetic matrix.
    pub fn bundled() -> Self {
        Self::new(SubstitutionMatrix::synthetic(), KeyboardLayout::qwerty())
            .expect("bundled model is valid")
    }

    pub fn matrix(&self) -> &SubstitutionMatrix {
        &self.matrix
    }

    pub fn layout(&self) -> &KeyboardLayout {
        &self.layout
    }

    /// Candidate set of a lowercase alphabet character.
    pub fn candidate_set(&self, c: char) -> Option<&CandidateSet> {
        alphabet::index(c).map(|i| &self.candidates[i])
    }

    pub fn distribution(&self, c: char, p_t: f64) -> Result<Vec<(char, f64)>, ModelError> {
        let cs = self.candidate_set(c).ok_or(ModelError::NotInAlphabet(c))?;
        substitution_distribution(cs, p_t)
    }

    /// Draws a substitute for `c` (case-folded) from its candidate set. The
    /// result keeps the case of `c`. Characters outside the alphabet are
    /// returned unchanged.
    pub fn sample_substitute(&self, c: char, rng: &mut SessionRng) -> char {
        match alphabet::index(alphabet::fold(c)) {
            Some(i) => alphabet::match_case(self.samplers[i].pick(rng.random::<f64>()), c),
            None => c,
        }
    }

    /// Stable digest of the matrix and layout.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.matrix.to_text().as_bytes());
        for (c, g) in self.layout.keys() {
            h.update(format!("{} {} {} {} {}\n", alphabet::token(c), g.cx, g.cy, g.w, g.h).as_bytes());
        }
        h.update(format!("standard {}\n", alphabet::token(self.layout.standard_key())).as_bytes());
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("p_t {0} outside [0, 1]")]
    InvalidProbability(f64),
}

#[derive(Debug, Clone)]
pub struct InjectionConfig {
    pub mode: InjectionMode,
    pub p_t: f64,
    pub seed: u64,
    pub model: Arc<InjectionModel>,
}

impl InjectionConfig {
    pub fn new(mode: InjectionMode, p_t: f64, seed: u64, model: Arc<InjectionModel>) -> Result<Self, ConfigError> {
        if !(0.0..=1.0).contains(&p_t) {
            return Err(ConfigError::InvalidProbability(p_t));
        }
        Ok(Self {
            mode,
            p_t,
            seed,
            model,
        })
    }

    pub fn bundled(mode: InjectionMode, p_t: f64, seed: u64) -> Result<Self, ConfigError> {
        Self::new(mode, p_t, seed, Arc::new(InjectionModel::bundled()))
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    /// Digest of everything but the seed.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(format!("mode={} p_t={:?}\n", self.mode, self.p_t).as_bytes());
        h.update(self.model.digest().as_bytes());
        hex::encode(h.finalize())
    }

    pub fn state(&self) -> InjectionState {
        InjectionState::new(self)
    }
}

// ---------------------------------------------------------------------------
// Engine state

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PendingSubstitution {
    pub index: usize,
    pub original: char,
    pub substitute: char,
    pub offset: u64,
}

/// The word being composed and its not-yet-applied marks.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WordBuffer {
    pub chars: Vec<char>,
    pub pending: Vec<PendingSubstitution>,
}

impl WordBuffer {
    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn text(&self) -> String {
        self.chars.iter().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordCommit {
    pub typed: String,
    pub displayed: String,
    pub decisions: Vec<InjectionDecision>,
}

/// Per-session engine. Not shared between sessions.
#[derive(Debug, Clone)]
pub struct InjectionState {
    mode: InjectionMode,
    p_t: f64,
    model: Arc<InjectionModel>,
    rng: SessionRng,
    word: WordBuffer,
    offset: u64,
}

impl InjectionState {
    pub fn new(config: &InjectionConfig) -> Self {
        Self {
            mode: config.mode,
            p_t: config.p_t,
            model: Arc::clone(&config.model),
            rng: derived_rng(config.seed, &[label("engine")]),
            word: WordBuffer::default(),
            offset: 0,
        }
    }

    pub fn mode(&self) -> InjectionMode {
        self.mode
    }

    pub fn p_t(&self) -> f64 {
        self.p_t
    }

    pub fn model(&self) -> &Arc<InjectionModel> {
        &self.model
    }

    pub fn word(&self) -> &WordBuffer {
        &self.word
    }

    /// Offset that the next keystroke will get.
    pub fn offset(&self) -> u64 {
        self.offset
    }

    /// Counts a keystroke the engine does not otherwise see (terminators,
    /// keys in Off mode, edits away from the end of the text) so offsets stay
    /// aligned with the input stream.
    pub fn skip_keystroke(&mut self) {
        self.offset += 1;
    }

    fn next_offset(&mut self) -> u64 {
        let o = self.offset;
        self.offset += 1;
        o
    }

    /// Selects `c` as a candidate with probability `p_t` and, if selected,
    /// draws its substitute.
    fn draw(&mut self, c: char) -> Option<char> {
        if !alphabet::contains(alphabet::fold(c)) {
            return None;
        }
        let u: f64 = self.rng.random();
        if u < self.p_t {
            Some(self.model.sample_substitute(c, &mut self.rng))
        } else {
            None
        }
    }

    /// Per-key injection: returns the character to display and the decision
    /// if the keystroke was selected as a candidate.
    pub fn on_keystroke_v1(&mut self, c: char) -> (char, Option<InjectionDecision>) {
        let offset = self.next_offset();
        match self.draw(c) {
            Some(sub) => (
                sub,
                Some(InjectionDecision {
                    offset,
                    original: c,
                    emitted: sub,
                    mode: InjectionMode::PerKey,
                    applied: true,
                    source: DecisionSource::Engine,
                }),
            ),
            None => (c, None),
        }
    }

    /// Per-word composition: appends `c` to the word and possibly marks it.
    /// The character is always displayed as typed. Terminators must go to
    /// [`commit_word_v2`](Self::commit_word_v2) instead.
    pub fn on_keystroke_v2(&mut self, c: char) -> char {
        debug_assert!(!alphabet::is_terminator(c), "terminator routed to on_keystroke_v2");
        let offset = self.next_offset();
        let index = self.word.chars.len();
        self.word.chars.push(c);
        if let Some(substitute) = self.draw(c) {
            self.word.pending.push(PendingSubstitution {
                index,
                original: c,
                substitute,
                offset,
            });
        }
        c
    }

    /// Removes the last character of the word. Marks on removed positions are
    /// returned as unapplied decisions. Returns `None` when the word buffer is
    /// empty (the host editor deletes committed text itself).
    pub fn on_backspace_v2(&mut self) -> Option<Vec<InjectionDecision>> {
        self.word.chars.pop()?;
        self.offset += 1;
        let len = self.word.chars.len();
        let mut discarded = Vec::new();
        self.word.pending.retain(|p| {
            if p.index < len {
                true
            } else {
                discarded.push(p.to_decision(false));
                false
            }
        });
        Some(discarded)
    }

    /// Ends the current word: enforces the cap, applies surviving marks and
    /// clears the buffer.
    pub fn commit_word_v2(&mut self) -> WordCommit {
        let mut word = std::mem::take(&mut self.word);
        let mut decisions = Vec::new();
        if word.chars.is_empty() {
            return WordCommit {
                typed: String::new(),
                displayed: String::new(),
                decisions,
            };
        }
        let typed: String = word.chars.iter().collect();
        let limit = cap(word.chars.len());
        while word.pending.len() > limit {
            let i = self.rng.random_range(0..word.pending.len());
            decisions.push(word.pending.remove(i).to_decision(false));
        }
        for p in &word.pending {
            word.chars[p.index] = p.substitute;
            decisions.push(p.to_decision(true));
        }
        decisions.sort_by_key(|d| d.offset);
        WordCommit {
            typed,
            displayed: word.chars.iter().collect(),
            decisions,
        }
    }

    /// Marks position `index` of the current word for substitution by
    /// `substitute`, replacing any existing mark there. Used to set up
    /// fixtures; returns false when `index` is outside the word.
    pub fn mark(&mut self, index: usize, substitute: char) -> bool {
        let Some(&original) = self.word.chars.get(index) else {
            return false;
        };
        let offset = self.offset - (self.word.chars.len() - index) as u64;
        self.word.pending.retain(|p| p.index != index);
        self.word.pending.push(PendingSubstitution {
            index,
            original,
            substitute,
            offset,
        });
        self.word.pending.sort_by_key(|p| p.index);
        true
    }

    /// Drops the current word without applying anything.
    pub fn reset_word(&mut self) {
        self.word = WordBuffer::default();
    }
}

impl PendingSubstitution {
    fn to_decision(self, applied: bool) -> InjectionDecision {
        InjectionDecision {
            offset: self.offset,
            original: self.original,
            emitted: self.substitute,
            mode: InjectionMode::PerWord,
            applied,
            source: DecisionSource::Engine,
        }
    }
}

// ---------------------------------------------------------------------------
// Editor driving the engine

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputEvent {
    Key { ch: char },
    Backspace,
    CursorMove { index: usize },
    PickSuggestion {
        at: usize,
        replaced: String,
        word: String,
    },
    Submit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimedInput {
    pub t_ms: u64,
    #[serde(flatten)]
    pub input: InputEvent,
}

/// A text editor whose keystrokes pass through an injection engine. Every
/// applied input yields the log events describing it.
///
/// In per-word mode the word under composition is the text immediately
/// before the cursor while the cursor is at the end of the text. A cursor
/// move, suggestion pick or submit commits that word; characters inserted
/// away from the end of the text are never marked.
#[derive(Debug, Clone)]
pub struct InjectingEditor {
    buffer: TextBuffer,
    engine: InjectionState,
}

impl InjectingEditor {
    pub fn new(engine: InjectionState) -> Self {
        Self {
            buffer: TextBuffer::new(),
            engine,
        }
    }

    pub fn text(&self) -> String {
        self.buffer.text()
    }

    pub fn buffer(&self) -> &TextBuffer {
        &self.buffer
    }

    pub fn engine(&self) -> &InjectionState {
        &self.engine
    }

    /// Direct engine access, used to plant marks in fixtures.
    pub fn engine_mut(&mut self) -> &mut InjectionState {
        &mut self.engine
    }

    /// Clears the text for a new phrase; pending marks are dropped.
    pub fn reset(&mut self) {
        self.buffer.clear();
        self.engine.reset_word();
    }

    fn commit(&mut self, t_ms: u64, out: &mut Vec<SessionEvent>) {
        if self.engine.mode() != InjectionMode::PerWord || self.engine.word().is_empty() {
            return;
        }
        let commit = self.engine.commit_word_v2();
        let at = self.buffer.cursor() - commit.typed.chars().count();
        self.buffer
            .replace(at, &commit.typed, &commit.displayed)
            .expect("word buffer mirrors the text before the cursor");
        for d in commit.decisions {
            out.push(SessionEvent::new(t_ms, EventKind::InjectionDecision(d)));
        }
        out.push(SessionEvent::new(
            t_ms,
            EventKind::WordCommit {
                typed: commit.typed,
                displayed: commit.displayed,
            },
        ));
    }

    pub fn apply(&mut self, t_ms: u64, input: &InputEvent) -> Result<Vec<SessionEvent>, EditError> {
        let mut out = Vec::new();
        match input {
            InputEvent::Key { ch } => {
                let ch = *ch;
                match self.engine.mode() {
                    InjectionMode::Off => {
                        self.engine.skip_keystroke();
                        self.buffer.insert(ch);
                    }
                    InjectionMode::PerKey => {
                        let (emitted, decision) = self.engine.on_keystroke_v1(ch);
                        if let Some(d) = decision {
                            out.push(SessionEvent::new(t_ms, EventKind::InjectionDecision(d)));
                        }
                        self.buffer.insert(emitted);
                        out.push(SessionEvent::new(t_ms, EventKind::KeyDown { ch: emitted }));
                        return Ok(out);
                    }
                    InjectionMode::PerWord => {
                        if alphabet::is_terminator(ch) {
                            self.commit(t_ms, &mut out);
                            self.engine.skip_keystroke();
                        } else if self.buffer.at_end() {
                            self.engine.on_keystroke_v2(ch);
                        } else {
                            self.engine.skip_keystroke();
                        }
                        self.buffer.insert(ch);
                    }
                }
                out.push(SessionEvent::new(t_ms, EventKind::KeyDown { ch }));
            }
            InputEvent::Backspace => {
                let mut counted = false;
                if self.engine.mode() == InjectionMode::PerWord && self.buffer.at_end() {
                    if let Some(discarded) = self.engine.on_backspace_v2() {
                        counted = true;
                        for d in discarded {
                            out.push(SessionEvent::new(t_ms, EventKind::InjectionDecision(d)));
                        }
                    }
                }
                if !counted {
                    self.engine.skip_keystroke();
                }
                self.buffer.backspace();
                out.push(SessionEvent::new(t_ms, EventKind::Backspace));
            }
            InputEvent::CursorMove { index } => {
                if *index > self.buffer.len() {
                    return Err(EditError::CursorOutOfRange {
                        index: *index,
                        len: self.buffer.len(),
                    });
                }
                self.commit(t_ms, &mut out);
                self.buffer.move_cursor(*index)?;
                out.push(SessionEvent::new(t_ms, EventKind::CursorMove { index: *index }));
            }
            InputEvent::PickSuggestion { at, replaced, word } => {
                self.commit(t_ms, &mut out);
                self.buffer.replace(*at, replaced, word)?;
                out.push(SessionEvent::new(
                    t_ms,
                    EventKind::SuggestionPick {
                        at: *at,
                        replaced: replaced.clone(),
                        word: word.clone(),
                    },
                ));
            }
            InputEvent::Submit => {
                self.commit(t_ms, &mut out);
                out.push(SessionEvent::new(
                    t_ms,
                    EventKind::Submit {
                        final_text: self.buffer.text(),
                    },
                ));
            }
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// Batch driver

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("stream event {offset}: {source}")]
pub struct StreamError {
    pub offset: usize,
    pub source: EditError,
}

#[derive(Debug, Clone)]
pub struct StreamOutput {
    pub text: String,
    pub decisions: Vec<InjectionDecision>,
    pub log: SessionLog,
}

/// Feeds `events` through an [`InjectingEditor`]. If the stream does not end
/// with a submit, a trailing per-word composition is committed so the output
/// text is final.
pub fn run_stream(config: &InjectionConfig, events: &[TimedInput]) -> Result<StreamOutput, StreamError> {
    let mut editor = InjectingEditor::new(config.state());
    let mut log = SessionLog::new(LogHeader::new("stream", config.seed, config.digest()));
    for (offset, e) in events.iter().enumerate() {
        let produced = editor
            .apply(e.t_ms, &e.input)
            .map_err(|source| StreamError { offset, source })?;
        log.events.extend(produced);
    }
    if !matches!(events.last().map(|e| &e.input), Some(InputEvent::Submit)) {
        let t = events.last().map(|e| e.t_ms).unwrap_or(0);
        let mut out = Vec::new();
        editor.commit(t, &mut out);
        log.events.extend(out);
    }
    let decisions = log.decisions().cloned().collect();
    Ok(StreamOutput {
        text: editor.text(),
        decisions,
        log,
    })
}

/// One keystroke per character, timestamps 0, 1, 2, …
pub fn text_to_inputs(text: &str) -> Vec<TimedInput> {
    text.chars()
        .enumerate()
        .map(|(i, ch)| TimedInput {
            t_ms: i as u64,
            input: InputEvent::Key { ch },
        })
        .collect()
}

/// Alphabet characters, for fuzzers and calibration runs.
pub fn alphabet_chars() -> &'static [char; SIZE] {
    &ALPHABET
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(mode: InjectionMode, p_t: f64, seed: u64) -> InjectionState {
        InjectionConfig::bundled(mode, p_t, seed).unwrap().state()
    }

    #[test]
    fn cap_values() {
        assert_eq!(cap(8), 2);
        assert_eq!(cap(3), 1);
        assert_eq!(cap(12), 3);
        assert_eq!(cap(1), 1);
        assert_eq!(cap(7), 1);
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("word".parse::<InjectionMode>(), Ok(InjectionMode::PerWord));
        assert_eq!("key".parse::<InjectionMode>(), Ok(InjectionMode::PerKey));
        assert_eq!("off".parse::<InjectionMode>(), Ok(InjectionMode::Off));
        assert!("sometimes".parse::<InjectionMode>().is_err());
        assert!(InjectionConfig::bundled(InjectionMode::Off, 1.5, 0).is_err());
    }

    #[test]
    fn v1_zero_probability_never_selects() {
        let mut s = state(InjectionMode::PerKey, 0.0, 1);
        for c in "hello world".chars() {
            assert_eq!(s.on_keystroke_v1(c), (c, None));
        }
    }

    #[test]
    fn v1_out_of_alphabet_passes_through() {
        let mut s = state(InjectionMode::PerKey, 1.0, 1);
        for c in "7!@'".chars() {
            assert_eq!(s.on_keystroke_v1(c), (c, None));
        }
    }

    #[test]
    fn v1_selected_substitute_is_a_neighbor() {
        let layout = KeyboardLayout::qwerty();
        let near = layout.neighbor_set('s').unwrap();
        let mut s = state(InjectionMode::PerKey, 1.0, 99);
        for _ in 0..200 {
            let (emitted, d) = s.on_keystroke_v1('s');
            let d = d.expect("p_t = 1 always selects");
            assert_eq!(d.emitted, emitted);
            assert!(d.applied);
            assert!(near.contains(&emitted));
        }
    }

    #[test]
    fn v1_keeps_case() {
        let mut s = state(InjectionMode::PerKey, 1.0, 3);
        for _ in 0..50 {
            let (emitted, _) = s.on_keystroke_v1('S');
            assert!(emitted.is_uppercase() || !emitted.is_alphabetic(), "{emitted:?}");
        }
    }

    #[test]
    fn v2_keystroke_displays_as_typed() {
        let mut s = state(InjectionMode::PerWord, 1.0, 5);
        for c in "toy".chars() {
            assert_eq!(s.on_keystroke_v2(c), c);
        }
        assert_eq!(s.word().text(), "toy");
        assert_eq!(s.word().pending.len(), 3);
        let idx: Vec<usize> = s.word().pending.iter().map(|p| p.index).collect();
        assert_eq!(idx, vec![0, 1, 2]);
    }

    /// Finds a seed whose per-word stream marks exactly index 1 of "toy".
    #[test]
    fn v2_fixed_seed_marks_second_letter() {
        let near_o = KeyboardLayout::qwerty().neighbor_set('o').unwrap();
        let seed = (0..10_000u64)
            .find(|&seed| {
                let mut s = state(InjectionMode::PerWord, DEFAULT_P_T, seed);
                "toy".chars().for_each(|c| {
                    s.on_keystroke_v2(c);
                });
                s.word().pending.iter().map(|p| p.index).collect::<Vec<_>>() == vec![1]
            })
            .expect("some seed marks only the 'o'");
        let mut s = state(InjectionMode::PerWord, DEFAULT_P_T, seed);
        "toy".chars().for_each(|c| {
            s.on_keystroke_v2(c);
        });
        let p = s.word().pending[0];
        assert_eq!((p.index, p.original), (1, 'o'));
        assert!(near_o.contains(&p.substitute));
    }

    fn with_pending(word: &str, pending: &[(usize, char)]) -> InjectionState {
        let mut s = state(InjectionMode::PerWord, 0.0, 0);
        for c in word.chars() {
            s.on_keystroke_v2(c);
        }
        let chars: Vec<char> = word.chars().collect();
        s.word.pending = pending
            .iter()
            .map(|&(index, substitute)| PendingSubstitution {
                index,
                original: chars[index],
                substitute,
                offset: index as u64,
            })
            .collect();
        s
    }

    #[test]
    fn backspace_retention_toying_to_toyed() {
        let mut s = with_pending("toying", &[(1, 'i'), (4, 'b')]);
        let mut discarded = Vec::new();
        for _ in 0..3 {
            discarded.extend(s.on_backspace_v2().unwrap());
        }
        assert_eq!(s.word().text(), "toy");
        assert_eq!(s.word().pending.len(), 1);
        assert_eq!((s.word().pending[0].index, s.word().pending[0].substitute), (1, 'i'));
        assert_eq!(discarded.len(), 1);
        assert_eq!((discarded[0].original, discarded[0].emitted, discarded[0].applied), ('n', 'b', false));
        for c in "ed".chars() {
            s.on_keystroke_v2(c);
        }
        let commit = s.commit_word_v2();
        assert_eq!(commit.typed, "toyed");
        assert_eq!(commit.displayed, "tiyed");
    }

    #[test]
    fn backspace_full_and_empty() {
        let mut s = with_pending("a", &[(0, 's')]);
        let d = s.on_backspace_v2().unwrap();
        assert_eq!(d.len(), 1);
        assert!(s.word().is_empty());
        assert!(s.word().pending.is_empty());
        assert_eq!(s.on_backspace_v2(), None);
    }

    #[test]
    fn retyping_rerolls_only_new_characters() {
        let mut s = state(InjectionMode::PerWord, 1.0, 17);
        for c in "toying".chars() {
            s.on_keystroke_v2(c);
        }
        let kept: Vec<PendingSubstitution> = s.word().pending[..3].to_vec();
        for _ in 0..3 {
            s.on_backspace_v2();
        }
        for c in "ed".chars() {
            s.on_keystroke_v2(c);
        }
        assert_eq!(&s.word().pending[..3], &kept[..]);
        assert_eq!(s.word().pending.len(), 5);
        assert_eq!(s.word().pending[3].index, 3);
        assert_eq!(s.word().pending[4].index, 4);
    }

    #[test]
    fn commit_enforces_cap() {
        for seed in 0..50 {
            let mut s = with_pending("try", &[(0, 'y'), (1, 'e')]);
            s.rng = derived_rng(seed, &[]);
            let c = s.commit_word_v2();
            assert!(c.displayed == "yry" || c.displayed == "tey", "{}", c.displayed);
            assert_eq!(c.decisions.iter().filter(|d| d.applied).count(), 1);
            assert_eq!(c.decisions.iter().filter(|d| !d.applied).count(), 1);
        }
        let mut s = with_pending("keyboard", &[(2, 'r'), (5, 'i')]);
        let c = s.commit_word_v2();
        assert_eq!(c.displayed, "kerboird");
        assert!(c.decisions.iter().all(|d| d.applied));

        let mut s = with_pending("plain", &[]);
        assert_eq!(s.commit_word_v2().displayed, "plain");
        let mut empty = state(InjectionMode::PerWord, 1.0, 0);
        let c = empty.commit_word_v2();
        assert!(c.typed.is_empty() && c.decisions.is_empty());
    }

    #[test]
    fn cap_eviction_is_roughly_uniform() {
        let mut kept = [0usize; 2];
        for seed in 0..2000 {
            let mut s = with_pending("try", &[(0, 'y'), (1, 'e')]);
            s.rng = derived_rng(seed, &[]);
            let c = s.commit_word_v2();
            kept[usize::from(c.displayed == "tey")] += 1;
        }
        assert!(kept[0] > 900 && kept[1] > 900, "{kept:?}");
    }

    fn run(mode: InjectionMode, p_t: f64, seed: u64, text: &str) -> StreamOutput {
        let cfg = InjectionConfig::bundled(mode, p_t, seed).unwrap();
        run_stream(&cfg, &text_to_inputs(text)).unwrap()
    }

    #[test]
    fn off_mode_is_identity() {
        let text = "Hello, World. 123 typing\ttest\n";
        let out = run(InjectionMode::Off, 1.0, 1, text);
        assert_eq!(out.text, text);
        assert!(out.decisions.is_empty());
    }

    #[test]
    fn certainty_selects_every_keystroke() {
        let text: String = (0..1000).map(|i| ALPHABET[i % SIZE]).collect();
        let out = run(InjectionMode::PerKey, 1.0, 8, &text);
        assert_eq!(out.decisions.len(), 1000);
    }

    #[test]
    fn stream_is_deterministic() {
        let text = "the quick brown fox jumps over the lazy dog. ".repeat(20);
        for mode in [InjectionMode::PerKey, InjectionMode::PerWord] {
            let a = run(mode, 0.15, 42, &text);
            let b = run(mode, 0.15, 42, &text);
            assert_eq!(a.log.serialize(), b.log.serialize());
            assert_eq!(a.text, b.text);
            let c = run(mode, 0.15, 43, &text);
            assert_ne!(a.log.serialize(), c.log.serialize());
        }
    }

    #[test]
    fn stream_rejects_bad_cursor() {
        let cfg = InjectionConfig::bundled(InjectionMode::Off, 0.0, 0).unwrap();
        let events = vec![
            TimedInput { t_ms: 0, input: InputEvent::Key { ch: 'a' } },
            TimedInput { t_ms: 1, input: InputEvent::CursorMove { index: 5 } },
        ];
        let err = run_stream(&cfg, &events).unwrap_err();
        assert_eq!(err.offset, 1);
    }

    #[test]
    fn per_word_submit_applies_final_word() {
        let cfg = InjectionConfig::bundled(InjectionMode::PerWord, 1.0, 4).unwrap();
        let mut ed = InjectingEditor::new(cfg.state());
        for ch in "have a good day".chars() {
            ed.apply(0, &InputEvent::Key { ch }).unwrap();
        }
        assert!(ed.text().ends_with("day"), "final word is not yet committed");
        let events = ed.apply(1, &InputEvent::Submit).unwrap();
        let applied = events
            .iter()
            .filter(|e| matches!(&e.kind, EventKind::InjectionDecision(d) if d.applied))
            .count();
        assert_eq!(applied, 1);
        assert!(matches!(events.last().unwrap().kind, EventKind::Submit { .. }));
    }

    #[test]
    fn editor_log_replays_to_text() {
        let cfg = InjectionConfig::bundled(InjectionMode::PerWord, 0.5, 11).unwrap();
        let mut ed = InjectingEditor::new(cfg.state());
        let mut events = Vec::new();
        let inputs = [
            InputEvent::Key { ch: 'h' },
            InputEvent::Key { ch: 'e' },
            InputEvent::Key { ch: 'l' },
            InputEvent::Backspace,
            InputEvent::Key { ch: 'y' },
            InputEvent::Key { ch: ' ' },
            InputEvent::Key { ch: 'y' },
            InputEvent::Key { ch: 'o' },
            InputEvent::CursorMove { index: 1 },
            InputEvent::Key { ch: 'x' },
            InputEvent::CursorMove { index: 7 },
            InputEvent::Key { ch: 'u' },
            InputEvent::Submit,
        ];
        for i in &inputs {
            events.extend(ed.apply(0, i).unwrap());
        }
        let replay = crate::editor::Replay::run(&events);
        assert_eq!(replay.skipped, 0);
        assert_eq!(replay.buffer.text(), ed.text());
        assert_eq!(replay.last_submit.as_deref(), Some(ed.text().as_str()));
    }
}
