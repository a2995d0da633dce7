//! Studies, participants' sessions and message handling.

use std::cell::RefCell;
use std::collections::HashMap;
use std::io;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use keyfault_core::alphabet;
use keyfault_core::injection::{InjectingEditor, InjectionConfig, InputEvent, DEFAULT_P_T};
use keyfault_core::metrics::{classify_word, clean_word, Dictionary, FeedbackColor, WordClass};
use keyfault_core::rng::derive_seed;
use keyfault_core::session::{
    bundled_phrases, make_plan, partition_phrases, Condition, EventKind, LogHeader, PhraseSet,
    SessionEvent, SessionLog, StudyPlan,
};
use keyfault_core::{InjectionMode, InjectionModel};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::store::LogStore;
use crate::wire::{
    BufferState, ClientBody, ClientMessage, Highlight, PhrasePrompt, ServerBody, ServerMessage,
    WordFeedback,
};

const STUDY_FILE: &str = "study.json";
const SUGGESTION_LIMIT: usize = 5;

fn default_set_size() -> usize {
    14
}
fn default_p_t() -> f64 {
    DEFAULT_P_T
}
fn default_mode() -> InjectionMode {
    InjectionMode::PerWord
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub seed: u64,
    #[serde(default = "default_set_size")]
    pub phrases_per_set: usize,
    #[serde(default = "default_p_t")]
    pub p_t: f64,
    /// Injection mode of C2 and C4.
    #[serde(default = "default_mode")]
    pub injected_mode: InjectionMode,
    /// Minor words are highlighted orange instead of yellow. Off in the
    /// replication setting.
    #[serde(default)]
    pub autocorrect: bool,
    /// Phrase pool; the bundled pool when absent.
    #[serde(default)]
    pub phrases: Option<Vec<String>>,
}

impl StudyConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            phrases_per_set: default_set_size(),
            p_t: default_p_t(),
            injected_mode: default_mode(),
            autocorrect: false,
            phrases: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("unknown study {0}")]
    UnknownStudy(String),
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("invalid study config: {0}")]
    InvalidConfig(String),
    #[error("participant {0} has completed all conditions")]
    ParticipantFinished(u32),
    #[error("stored data is corrupt: {0}")]
    Corrupt(String),
    #[error("log store: {0}")]
    Store(#[from] io::Error),
}

#[derive(Debug)]
pub struct Study {
    pub id: String,
    pub config: StudyConfig,
    pub phrase_sets: Vec<PhraseSet>,
    injection: HashMap<Condition, InjectionConfig>,
}

impl Study {
    fn build(id: String, config: StudyConfig, model: &Arc<InjectionModel>) -> Result<Self, ServiceError> {
        let pool = config.phrases.clone().unwrap_or_else(bundled_phrases);
        let phrase_sets = partition_phrases(&pool, 4, config.phrases_per_set, config.seed)
            .map_err(|e| ServiceError::InvalidConfig(e.to_string()))?;
        let mut injection = HashMap::new();
        for c in Condition::ALL {
            let mode = if c.injection() { config.injected_mode } else { InjectionMode::Off };
            let cfg = InjectionConfig::new(mode, config.p_t, config.seed, Arc::clone(model))
                .map_err(|e| ServiceError::InvalidConfig(e.to_string()))?;
            injection.insert(c, cfg);
        }
        Ok(Self {
            id,
            config,
            phrase_sets,
            injection,
        })
    }

    pub fn injection(&self, c: Condition) -> &InjectionConfig {
        &self.injection[&c]
    }

    pub fn plan(&self, participant: u32) -> StudyPlan {
        make_plan(participant, self.config.seed)
    }

    pub fn phrases(&self, participant: u32, c: Condition) -> &[String] {
        &self.phrase_sets[self.plan(participant).phrase_set(c)].phrases
    }
}

/// Log file holding one participant's block of one condition.
pub fn log_file_name(participant: u32, c: Condition) -> String {
    format!("p{participant:03}-{c}.jsonl")
}

/// Engine seed for one phrase. Reseeding per phrase lets a resumed session
/// continue exactly as an uninterrupted one would.
pub fn phrase_seed(study_seed: u64, participant: u32, c: Condition, phrase: usize) -> u64 {
    derive_seed(study_seed, &[u64::from(participant), c.index() as u64, phrase as u64])
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StartedSession {
    pub session_id: String,
    pub participant: u32,
    pub condition: Condition,
    pub messages: Vec<ServerMessage>,
}

pub struct StudyService {
    store: Arc<dyn LogStore>,
    model: Arc<InjectionModel>,
    dict: Arc<Dictionary>,
    studies: Mutex<HashMap<String, Arc<Study>>>,
    sessions: Mutex<HashMap<String, Arc<Mutex<LiveSession>>>>,
}

impl StudyService {
    pub fn new(store: Arc<dyn LogStore>, model: Arc<InjectionModel>, dict: Arc<Dictionary>) -> Self {
        Self {
            store,
            model,
            dict,
            studies: Mutex::new(HashMap::new()),
            sessions: Mutex::new(HashMap::new()),
        }
    }

    /// Service with the bundled model and dictionary.
    pub fn bundled(store: Arc<dyn LogStore>) -> Self {
        Self::new(store, Arc::new(InjectionModel::bundled()), Arc::new(Dictionary::bundled()))
    }

    pub fn store(&self) -> &Arc<dyn LogStore> {
        &self.store
    }

    pub fn create_study(&self, config: StudyConfig) -> Result<String, ServiceError> {
        let mut k = 0u32;
        let id = loop {
            let id = format!("study-{}-{k}", config.seed);
            if self.store.read(&id, STUDY_FILE)?.is_none() && !self.studies.lock().unwrap().contains_key(&id) {
                break id;
            }
            k += 1;
        };
        let study = Study::build(id.clone(), config, &self.model)?;
        let json = serde_json::to_string_pretty(&study.config).expect("config serialises");
        self.store.write(&id, STUDY_FILE, &json)?;
        self.studies.lock().unwrap().insert(id.clone(), Arc::new(study));
        Ok(id)
    }

    /// Looks a study up, loading it from the store after a restart.
    pub fn study(&self, id: &str) -> Result<Arc<Study>, ServiceError> {
        if let Some(s) = self.studies.lock().unwrap().get(id) {
            return Ok(Arc::clone(s));
        }
        let text = self
            .store
            .read(id, STUDY_FILE)
            .ok()
            .flatten()
            .ok_or_else(|| ServiceError::UnknownStudy(id.to_string()))?;
        let config: StudyConfig =
            serde_json::from_str(&text).map_err(|e| ServiceError::Corrupt(e.to_string()))?;
        let study = Arc::new(Study::build(id.to_string(), config, &self.model)?);
        self.studies
            .lock()
            .unwrap()
            .insert(id.to_string(), Arc::clone(&study));
        Ok(study)
    }

    /// Opens the participant's first unfinished condition block, resuming at
    /// its first unsubmitted phrase.
    pub fn start_session(&self, study_id: &str, participant: u32) -> Result<StartedSession, ServiceError> {
        let study = self.study(study_id)?;
        let per_set = study.config.phrases_per_set;
        for condition in study.plan(participant).conditions {
            let session_id = format!("{study_id}-p{participant}-{condition}");
            if let Some(live) = self.sessions.lock().unwrap().get(&session_id) {
                let live = live.lock().unwrap();
                if !live.done {
                    return Ok(StartedSession {
                        session_id,
                        participant,
                        condition,
                        messages: live.current_state(0),
                    });
                }
                continue;
            }
            let file = log_file_name(participant, condition);
            let existing = match self.store.read(study_id, &file)? {
                Some(text) => {
                    Some(SessionLog::parse(&text).map_err(|e| ServiceError::Corrupt(format!("{file}: {e}")))?)
                }
                None => None,
            };
            let submitted = existing.as_ref().map_or(0, |l| submits(&l.events));
            if submitted >= per_set {
                continue;
            }
            let live = LiveSession::open(
                session_id.clone(),
                Arc::clone(&study),
                Arc::clone(&self.store),
                Arc::clone(&self.dict),
                participant,
                condition,
                existing,
            );
            let messages = live.current_state(0);
            self.sessions
                .lock()
                .unwrap()
                .insert(session_id.clone(), Arc::new(Mutex::new(live)));
            return Ok(StartedSession {
                session_id,
                participant,
                condition,
                messages,
            });
        }
        Err(ServiceError::ParticipantFinished(participant))
    }

    pub fn session(&self, session_id: &str) -> Result<Arc<Mutex<LiveSession>>, ServiceError> {
        self.sessions
            .lock()
            .unwrap()
            .get(session_id)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownSession(session_id.to_string()))
    }

    pub fn handle(&self, session_id: &str, msg: &ClientMessage) -> Result<Vec<ServerMessage>, ServiceError> {
        let session = self.session(session_id)?;
        let mut live = session.lock().unwrap();
        Ok(live.handle(msg))
    }

    pub fn list_logs(&self, study_id: &str) -> Result<Vec<String>, ServiceError> {
        self.study(study_id)?;
        Ok(self.store.list(study_id)?)
    }

    pub fn read_log(&self, study_id: &str, file: &str) -> Result<Option<String>, ServiceError> {
        self.study(study_id)?;
        Ok(self.store.read(study_id, file)?)
    }
}

fn submits(events: &[SessionEvent]) -> usize {
    events
        .iter()
        .filter(|e| matches!(e.kind, EventKind::Submit { .. }))
        .count()
}

/// A word of the buffer followed by a terminator.
#[derive(Debug, Clone, PartialEq, Eq)]
struct CommittedWord {
    start: usize,
    end: usize,
    text: String,
}

fn committed_words(chars: &[char]) -> Vec<CommittedWord> {
    let mut out = Vec::new();
    let mut start = 0;
    for (i, &c) in chars.iter().enumerate() {
        if alphabet::is_terminator(c) {
            if i > start {
                out.push(CommittedWord {
                    start,
                    end: i,
                    text: chars[start..i].iter().collect(),
                });
            }
            start = i + 1;
        }
    }
    out
}

/// One participant working through one condition block.
pub struct LiveSession {
    pub session_id: String,
    pub participant: u32,
    pub condition: Condition,
    study: Arc<Study>,
    store: Arc<dyn LogStore>,
    dict: Arc<Dictionary>,
    phrase_index: usize,
    editor: InjectingEditor,
    log: SessionLog,
    last_seq: u64,
    last_reply: Vec<ServerMessage>,
    /// Sequence number of a submit whose log write failed.
    paused_submit: Option<u64>,
    bar: Option<FeedbackColor>,
    classes: RefCell<HashMap<String, WordClass>>,
    started: Instant,
    done: bool,
}

impl LiveSession {
    fn open(
        session_id: String,
        study: Arc<Study>,
        store: Arc<dyn LogStore>,
        dict: Arc<Dictionary>,
        participant: u32,
        condition: Condition,
        existing: Option<SessionLog>,
    ) -> Self {
        let config = study.injection(condition);
        let mut log = existing.unwrap_or_else(|| {
            let mut header = LogHeader::new(
                session_id.clone(),
                derive_seed(study.config.seed, &[u64::from(participant), condition.index() as u64]),
                config.digest(),
            );
            header.participant = Some(participant);
            header.condition = Some(condition);
            SessionLog::new(header)
        });
        // anything after the last acknowledged submit was never confirmed
        let keep = log
            .events
            .iter()
            .rposition(|e| matches!(e.kind, EventKind::Submit { .. }))
            .map_or(0, |i| i + 1);
        log.events.truncate(keep);
        let phrase_index = submits(&log.events);
        let editor = InjectingEditor::new(config.state());
        let mut s = Self {
            session_id,
            participant,
            condition,
            study,
            store,
            dict,
            phrase_index,
            editor,
            log,
            last_seq: 0,
            last_reply: Vec::new(),
            paused_submit: None,
            bar: None,
            classes: RefCell::new(HashMap::new()),
            started: Instant::now(),
            done: false,
        };
        s.begin_phrase(0);
        s
    }

    fn phrases(&self) -> &[String] {
        self.study.phrases(self.participant, self.condition)
    }

    pub fn phrase_index(&self) -> usize {
        self.phrase_index
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn log(&self) -> &SessionLog {
        &self.log
    }

    pub fn text(&self) -> String {
        self.editor.text()
    }

    fn begin_phrase(&mut self, t_ms: u64) {
        let seed = phrase_seed(self.study.config.seed, self.participant, self.condition, self.phrase_index);
        let config = self.study.injection(self.condition).with_seed(seed);
        self.editor = InjectingEditor::new(config.state());
        self.bar = None;
        let text = self.phrases()[self.phrase_index].clone();
        let recv = self.recv_ms();
        let mut e = SessionEvent::new(t_ms, EventKind::PhraseShown { text });
        e.t_recv_ms = Some(recv);
        self.log.events.push(e);
    }

    fn recv_ms(&self) -> u64 {
        self.started.elapsed().as_millis() as u64
    }

    fn classify(&self, word: &str) -> Option<WordClass> {
        if clean_word(word).is_empty() {
            return None;
        }
        if let Some(c) = self.classes.borrow().get(word) {
            return Some(c.clone());
        }
        let c = classify_word(word, &self.dict).ok()?;
        self.classes.borrow_mut().insert(word.to_string(), c.clone());
        Some(c)
    }

    pub fn buffer_state(&self) -> BufferState {
        let chars = self.editor.buffer().chars().to_vec();
        let cursor = self.editor.buffer().cursor();
        let mut highlights = Vec::new();
        if self.condition.highlighting() {
            for w in committed_words(&chars) {
                let Some(class) = self.classify(&w.text) else { continue };
                if let Some(color) = class.class.highlight_color(self.study.config.autocorrect) {
                    highlights.push(Highlight {
                        start: w.start,
                        end: w.end,
                        class: class.class,
                        color,
                        suggestions: class.suggestions,
                    });
                }
            }
        }
        let prefix_start = chars[..cursor]
            .iter()
            .rposition(|&c| alphabet::is_terminator(c))
            .map_or(0, |i| i + 1);
        let prefix: String = chars[prefix_start..cursor].iter().collect();
        let prefix = clean_word(&prefix);
        let suggestions = if prefix.is_empty() {
            Vec::new()
        } else {
            self.dict.completions(&prefix, SUGGESTION_LIMIT)
        };
        BufferState {
            text: chars.iter().collect(),
            cursor,
            highlights,
            bar: self.bar,
            suggestions,
        }
    }

    fn prompt(&self) -> PhrasePrompt {
        PhrasePrompt {
            index: self.phrase_index,
            total: self.phrases().len(),
            text: self.phrases()[self.phrase_index].clone(),
            highlighting: self.condition.highlighting(),
        }
    }

    /// What a (re)connecting client needs to render.
    pub fn current_state(&self, seq: u64) -> Vec<ServerMessage> {
        if self.done {
            return vec![self.done_message(seq)];
        }
        vec![
            ServerMessage::new(seq, ServerBody::Phrase(self.prompt())),
            ServerMessage::new(seq, ServerBody::BufferState(self.buffer_state())),
        ]
    }

    fn done_message(&self, seq: u64) -> ServerMessage {
        ServerMessage::new(
            seq,
            ServerBody::SessionDone {
                participant: self.participant,
                condition: self.condition.to_string(),
            },
        )
    }

    fn error(&self, seq: u64, message: String) -> Vec<ServerMessage> {
        vec![
            ServerMessage::new(seq, ServerBody::Error { message }),
            ServerMessage::new(seq, ServerBody::BufferState(self.buffer_state())),
        ]
    }

    /// Handles one client message. Messages must arrive with consecutive
    /// sequence numbers starting at 1; a repeat of the last message gets the
    /// same reply again and changes nothing.
    pub fn handle(&mut self, msg: &ClientMessage) -> Vec<ServerMessage> {
        if msg.seq == self.last_seq && self.last_seq > 0 {
            return self.last_reply.clone();
        }
        if let Some(pending) = self.paused_submit {
            if msg.seq == pending && msg.body == ClientBody::Submit {
                return self.finish_submit(msg.seq);
            }
            return vec![ServerMessage::new(
                msg.seq,
                ServerBody::Paused {
                    reason: "log write failed; resend the submit".into(),
                },
            )];
        }
        if msg.seq != self.last_seq + 1 {
            return vec![ServerMessage::new(
                msg.seq,
                ServerBody::Resync {
                    expected_seq: self.last_seq + 1,
                    state: self.buffer_state(),
                },
            )];
        }
        if self.done {
            let reply = vec![self.done_message(msg.seq)];
            self.acknowledge(msg.seq, reply.clone());
            return reply;
        }
        let reply = self.process(msg);
        if self.paused_submit.is_none() {
            self.acknowledge(msg.seq, reply.clone());
        }
        reply
    }

    fn acknowledge(&mut self, seq: u64, reply: Vec<ServerMessage>) {
        self.last_seq = seq;
        self.last_reply = reply;
    }

    fn record(&mut self, events: Vec<SessionEvent>) {
        let recv = self.recv_ms();
        for mut e in events {
            e.t_recv_ms = Some(recv);
            self.log.events.push(e);
        }
    }

    fn process(&mut self, msg: &ClientMessage) -> Vec<ServerMessage> {
        let seq = msg.seq;
        let input = match &msg.body {
            ClientBody::Key(ch) if ch.is_control() && *ch != '\n' => {
                return self.error(seq, format!("unsupported key {ch:?}"));
            }
            ClientBody::Key(ch) => InputEvent::Key { ch: *ch },
            ClientBody::Backspace => InputEvent::Backspace,
            ClientBody::Cursor { index } => InputEvent::CursorMove { index: *index },
            ClientBody::PickSuggestion { at, replaced, word } => InputEvent::PickSuggestion {
                at: *at,
                replaced: replaced.clone(),
                word: word.clone(),
            },
            ClientBody::Submit => InputEvent::Submit,
        };
        let events = match self.editor.apply(msg.t_client_ms, &input) {
            Ok(events) => events,
            Err(e) => return self.error(seq, e.to_string()),
        };
        self.record(events);
        match &msg.body {
            ClientBody::Submit => self.finish_submit(seq),
            ClientBody::Key(ch) if alphabet::is_terminator(*ch) => {
                let feedback = self.word_feedback();
                let mut reply = vec![ServerMessage::new(seq, ServerBody::BufferState(self.buffer_state()))];
                if let Some(f) = feedback {
                    reply.push(ServerMessage::new(seq, ServerBody::WordFeedback(f)));
                }
                reply
            }
            _ => vec![ServerMessage::new(seq, ServerBody::BufferState(self.buffer_state()))],
        }
    }

    /// Feedback for the word just ended by the terminator before the cursor.
    fn word_feedback(&mut self) -> Option<WordFeedback> {
        let chars = self.editor.buffer().chars();
        let end = self.editor.buffer().cursor().checked_sub(1)?;
        let start = chars[..end]
            .iter()
            .rposition(|&c| alphabet::is_terminator(c))
            .map_or(0, |i| i + 1);
        let word: String = chars[start..end].iter().collect();
        let class = self.classify(&word)?;
        let bar = class.class.bar_color();
        self.bar = Some(bar);
        let highlight = if self.condition.highlighting() {
            class.class.highlight_color(self.study.config.autocorrect)
        } else {
            None
        };
        Some(WordFeedback {
            word,
            start,
            class: class.class,
            suggestions: class.suggestions,
            bar,
            highlight,
        })
    }

    /// Persists the log and moves on to the next phrase. On a write failure
    /// the session pauses until the same submit is sent again.
    fn finish_submit(&mut self, seq: u64) -> Vec<ServerMessage> {
        let file = log_file_name(self.participant, self.condition);
        if let Err(e) = self.store.write(&self.study.id, &file, &self.log.serialize()) {
            log::warn!("{}: log write failed: {e}", self.session_id);
            self.paused_submit = Some(seq);
            return vec![ServerMessage::new(
                seq,
                ServerBody::Paused {
                    reason: format!("log write failed: {e}"),
                },
            )];
        }
        self.paused_submit = None;
        let submitted = ServerMessage::new(seq, ServerBody::BufferState(self.buffer_state()));
        self.phrase_index += 1;
        let reply = if self.phrase_index >= self.phrases().len() {
            self.done = true;
            vec![submitted, self.done_message(seq)]
        } else {
            let t = self.log.events.last().map_or(0, |e| e.t_ms);
            self.begin_phrase(t);
            vec![submitted, ServerMessage::new(seq, ServerBody::Phrase(self.prompt()))]
        };
        self.acknowledge(seq, reply.clone());
        reply
    }
}
