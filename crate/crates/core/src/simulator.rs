//! Synthetic typists.
//!
//! A typist copies a phrase key by key through an [`InjectingEditor`]. It
//! makes its own substitution slips (drawn from the same substitution model
//! as the engine), notices some of them immediately, and otherwise compares
//! the screen with the phrase at its vigilance points: after every key,
//! after every word terminator, or once before submitting. Detected errors are
//! fixed by backspacing or by moving the cursor next to the error.
//!
//! Inter-key intervals are log-normal. Noticing an error costs a fixed
//! review latency; moving the cursor costs a pointing time.
//!
//! Per-run seeds: the engine stream uses `derive_seed(seed, [label("engine")])`
//! and the typist stream `derive_seed(seed, [label("typist")])`. In
//! experiments each phrase gets `derive_seed(seed, [participant, condition, phrase])`.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, LogNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alphabet;
use crate::injection::{
    DecisionSource, InjectingEditor, InjectionConfig, InjectionDecision, InjectionMode,
    InjectionModel, InputEvent,
};
use crate::metrics::{tasks_report, Dictionary, MetricsError, MetricsReport};
use crate::rng::{derive_seed, derived_rng, label, SessionRng};
use crate::session::{
    make_plan, partition_phrases, Condition, EventKind, LogHeader, PhraseSet, PlanError,
    SessionEvent, SessionLog,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Vigilance {
    PerChar,
    AtCommit,
    AtSubmit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    SequentialBackspace,
    CursorReposition,
}

fn default_slip_awareness() -> f64 {
    0.8
}
fn default_review_latency() -> f64 {
    900.0
}
fn default_backspace_interval() -> f64 {
    220.0
}
fn default_pointing() -> f64 {
    1100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypistProfile {
    #[serde(default)]
    pub name: String,
    pub interkey_mean_ms: f64,
    /// Log-space standard deviation of the inter-key interval.
    pub interkey_jitter: f64,
    /// Probability that a keystroke is a self-made substitution.
    pub natural_error_rate: f64,
    /// Probability that a self-made substitution is felt and fixed at once.
    #[serde(default = "default_slip_awareness")]
    pub slip_awareness: f64,
    pub vigilance: Vigilance,
    /// Probability that a visible error is noticed at a vigilance point.
    pub detection_prob: f64,
    pub strategy: Strategy,
    /// Errors further back than this many characters are fixed by moving the
    /// cursor (with [`Strategy::CursorReposition`]).
    pub reposition_threshold: usize,
    #[serde(default = "default_review_latency")]
    pub review_latency_ms: f64,
    #[serde(default = "default_backspace_interval")]
    pub backspace_interval_ms: f64,
    #[serde(default = "default_pointing")]
    pub pointing_ms: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid typist profile: {0}")]
    Profile(String),
    #[error("phrase is empty")]
    EmptyPhrase,
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("manifest: {0}")]
    Manifest(String),
}

impl TypistProfile {
    /// A careful typist that never errs and never looks back.
    pub fn perfect() -> Self {
        Self {
            name: "perfect".into(),
            interkey_mean_ms: 450.0,
            interkey_jitter: 0.3,
            natural_error_rate: 0.0,
            slip_awareness: 1.0,
            vigilance: Vigilance::PerChar,
            detection_prob: 1.0,
            strategy: Strategy::SequentialBackspace,
            reposition_threshold: 4,
            review_latency_ms: default_review_latency(),
            backspace_interval_ms: default_backspace_interval(),
            pointing_ms: default_pointing(),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let probs = [
            ("natural_error_rate", self.natural_error_rate),
            ("slip_awareness", self.slip_awareness),
            ("detection_prob", self.detection_prob),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(SimError::Profile(format!("{name} = {p} outside [0, 1]")));
            }
        }
        let times = [
            ("interkey_mean_ms", self.interkey_mean_ms),
            ("review_latency_ms", self.review_latency_ms),
            ("backspace_interval_ms", self.backspace_interval_ms),
            ("pointing_ms", self.pointing_ms),
        ];
        for (name, t) in times {
            if !(t > 0.0 && t.is_finite()) {
                return Err(SimError::Profile(format!("{name} = {t} must be positive")));
            }
        }
        if !(self.interkey_jitter >= 0.0 && self.interkey_jitter.is_finite()) {
            return Err(SimError::Profile("interkey_jitter must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrectionAction {
    Backspaces(usize),
    /// Move the cursor just past the error, backspace over it and retype.
    MoveThenFix { error_offset: usize },
}

/// How a typist whose cursor is at `cursor_offset` fixes an error at
/// `error_offset` (`error_offset < cursor_offset`).
pub fn correction_action(profile: &TypistProfile, error_offset: usize, cursor_offset: usize) -> CorrectionAction {
    let distance = cursor_offset.saturating_sub(error_offset);
    match profile.strategy {
        Strategy::CursorReposition if distance > profile.reposition_threshold => {
            CorrectionAction::MoveThenFix { error_offset }
        }
        _ => CorrectionAction::Backspaces(distance),
    }
}

/// Probability that a cursor reposition lands one character too far.
const OVERSHOOT_PROB: f64 = 0.25;
/// Bound on corrective actions per phrase, as a multiple of its length.
const ACTION_BUDGET_PER_CHAR: usize = 12;

struct Typist<'a> {
    profile: &'a TypistProfile,
    model: Arc<InjectionModel>,
    intent: Vec<char>,
    editor: InjectingEditor,
    rng: SessionRng,
    interval: LogNormal<f64>,
    t: f64,
    log: SessionLog,
    overlooked: BTreeSet<usize>,
    budget: usize,
}

impl<'a> Typist<'a> {
    fn now(&self) -> u64 {
        self.t.round() as u64
    }

    fn send(&mut self, input: InputEvent) {
        let t = self.now();
        let events = self
            .editor
            .apply(t, &input)
            .expect("typist only issues valid edits");
        self.log.events.extend(events);
    }

    fn wait_key(&mut self) {
        self.t += self.interval.sample(&mut self.rng);
    }

    fn chars(&self) -> Vec<char> {
        self.editor.buffer().chars().to_vec()
    }

    fn len(&self) -> usize {
        self.editor.buffer().len()
    }

    fn prune_overlooked(&mut self) {
        let len = self.len();
        self.overlooked.retain(|&i| i < len);
    }

    /// Types the intended character at the end of the text. First attempts
    /// may slip; returns true when a slip was made.
    fn type_next(&mut self, first_attempt: bool) -> bool {
        let pos = self.len();
        let c = self.intent[pos];
        let mut pressed = c;
        if first_attempt && alphabet::contains(alphabet::fold(c)) && self.rng.random::<f64>() < self.profile.natural_error_rate {
            pressed = self.model.sample_substitute(c, &mut self.rng);
            if pressed != c {
                let offset = self.editor.engine().offset();
                self.log.push(
                    self.now(),
                    EventKind::InjectionDecision(InjectionDecision {
                        offset,
                        original: c,
                        emitted: pressed,
                        mode: InjectionMode::PerKey,
                        applied: true,
                        source: DecisionSource::Typist,
                    }),
                );
            }
        }
        self.send(InputEvent::Key { ch: pressed });
        self.wait_key();
        pressed != c
    }

    fn backspaces(&mut self, n: usize) {
        for i in 0..n {
            if i > 0 {
                self.t += self.profile.backspace_interval_ms;
            }
            self.send(InputEvent::Backspace);
        }
        self.t += self.profile.backspace_interval_ms;
        self.prune_overlooked();
    }

    fn first_mismatch(&self) -> Option<usize> {
        let chars = self.chars();
        chars
            .iter()
            .zip(&self.intent)
            .enumerate()
            .find(|(i, (a, b))| a != b && !self.overlooked.contains(i))
            .map(|(i, _)| i)
    }

    /// Compares the screen with the phrase and fixes what is noticed.
    /// Returns once nothing further is noticed.
    fn review(&mut self) {
        while let Some(i) = self.first_mismatch() {
            if self.budget == 0 || self.rng.random::<f64>() >= self.profile.detection_prob {
                self.overlooked.insert(i);
                continue;
            }
            self.budget -= 1;
            self.t += self.profile.review_latency_ms;
            self.fix(i);
        }
    }

    /// Fixes the error at `i`. After a backspace fix the text ends at `i`
    /// and typing resumes from there.
    fn fix(&mut self, i: usize) {
        let len = self.len();
        match correction_action(self.profile, i, len) {
            CorrectionAction::Backspaces(n) => self.backspaces(n),
            CorrectionAction::MoveThenFix { error_offset } => {
                let overshoot = error_offset + 2 <= len && self.rng.random::<f64>() < OVERSHOOT_PROB;
                let land = error_offset + 1 + usize::from(overshoot);
                self.t += self.profile.pointing_ms;
                self.send(InputEvent::CursorMove { index: land });
                self.t += self.profile.review_latency_ms / 3.0;
                self.backspaces(land - error_offset);
                for pos in error_offset..land {
                    let c = self.intent[pos];
                    self.send(InputEvent::Key { ch: c });
                    self.wait_key();
                }
                self.t += self.profile.pointing_ms;
                let end = self.len();
                self.send(InputEvent::CursorMove { index: end });
                self.wait_key();
            }
        }
    }

    fn run(mut self) -> SessionLog {
        let mut retyping_from = 0usize;
        while self.len() < self.intent.len() {
            let pos = self.len();
            let first_attempt = pos >= retyping_from;
            let slipped = self.type_next(first_attempt);
            retyping_from = retyping_from.max(pos + 1);
            if slipped && self.budget > 0 && self.rng.random::<f64>() < self.profile.slip_awareness {
                self.budget -= 1;
                self.backspaces(1);
                continue;
            }
            let just_typed = self.chars()[pos];
            let checkpoint = match self.profile.vigilance {
                Vigilance::PerChar => true,
                Vigilance::AtCommit => alphabet::is_terminator(just_typed),
                Vigilance::AtSubmit => false,
            };
            if checkpoint {
                self.review();
            }
        }
        if self.profile.vigilance == Vigilance::AtSubmit {
            self.t += self.profile.review_latency_ms;
            self.final_reread();
        }
        self.send(InputEvent::Submit);
        self.log
    }

    /// One pass over the whole line, fixing noticed errors right to left.
    fn final_reread(&mut self) {
        let chars = self.chars();
        let mut errors: Vec<usize> = chars
            .iter()
            .zip(&self.intent)
            .enumerate()
            .filter(|(i, (a, b))| a != b && !self.overlooked.contains(i))
            .map(|(i, _)| i)
            .collect();
        errors.reverse();
        for i in errors {
            if self.rng.random::<f64>() >= self.profile.detection_prob {
                continue;
            }
            self.fix(i);
            // backspace fixes leave the tail to be retyped
            while self.len() < self.intent.len() {
                self.type_next(false);
            }
        }
    }
}

/// Simulates one phrase task. The log starts with the phrase being shown and
/// ends with the submit.
pub fn simulate_phrase(
    profile: &TypistProfile,
    phrase: &str,
    config: &InjectionConfig,
    seed: u64,
) -> Result<SessionLog, SimError> {
    profile.validate()?;
    if phrase.is_empty() {
        return Err(SimError::EmptyPhrase);
    }
    let engine_cfg = config.with_seed(derive_seed(seed, &[label("engine")]));
    let sigma = profile.interkey_jitter;
    let interval = LogNormal::new(profile.interkey_mean_ms.ln() - sigma * sigma / 2.0, sigma)
        .map_err(|e| SimError::Profile(e.to_string()))?;
    let intent: Vec<char> = phrase.chars().collect();
    let mut log = SessionLog::new(LogHeader::new(
        format!("sim-{}", profile.name),
        seed,
        config.digest(),
    ));
    log.push(0, EventKind::PhraseShown { text: phrase.to_string() });
    let budget = intent.len() * ACTION_BUDGET_PER_CHAR;
    let typist = Typist {
        profile,
        model: Arc::clone(&config.model),
        intent,
        editor: InjectingEditor::new(engine_cfg.state()),
        rng: derived_rng(seed, &[label("typist")]),
        interval,
        t: profile.review_latency_ms,
        log,
        overlooked: BTreeSet::new(),
        budget,
    };
    Ok(typist.run())
}

// ---------------------------------------------------------------------------
// Experiments

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSpec {
    #[serde(flatten)]
    pub profile: TypistProfile,
    /// Number of synthetic typists drawn from this profile.
    #[serde(default = "one")]
    pub replicas: usize,
    /// Each replica's inter-key mean is scaled by a factor drawn uniformly
    /// from `[1 - speed_spread, 1 + speed_spread]`.
    #[serde(default)]
    pub speed_spread: f64,
}

fn one() -> usize {
    1
}

fn default_set_size() -> usize {
    14
}

fn default_p_t() -> f64 {
    crate::injection::DEFAULT_P_T
}

fn default_injected_mode() -> InjectionMode {
    InjectionMode::PerWord
}

/// Experiment manifest (TOML).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    #[serde(default = "default_set_size")]
    pub phrases_per_set: usize,
    #[serde(default = "default_p_t")]
    pub p_t: f64,
    /// Mode used in the injected conditions C2 and C4.
    #[serde(default = "default_injected_mode")]
    pub injected_mode: InjectionMode,
    /// Phrase file; the bundled pool when absent.
    #[serde(default)]
    pub phrases: Option<String>,
    #[serde(rename = "profile")]
    pub profiles: Vec<ProfileSpec>,
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Self, SimError> {
        let m: Manifest = toml::from_str(text).map_err(|e| SimError::Manifest(e.to_string()))?;
        if m.profiles.is_empty() {
            return Err(SimError::Manifest("no profiles".into()));
        }
        for p in &m.profiles {
            p.profile.validate()?;
        }
        Ok(m)
    }

    pub fn bundled() -> Self {
        Self::parse(crate::data::MANIFEST).expect("bundled manifest is valid")
    }

    /// Expands replicas into individual typists, deterministically.
    pub fn typists(&self) -> Vec<TypistProfile> {
        let mut out = Vec::new();
        for (pi, spec) in self.profiles.iter().enumerate() {
            for r in 0..spec.replicas {
                let mut rng = derived_rng(self.seed, &[label("typist-spread"), pi as u64, r as u64]);
                let mut p = spec.profile.clone();
                if spec.speed_spread > 0.0 {
                    p.interkey_mean_ms *= 1.0 + rng.random_range(-spec.speed_spread..=spec.speed_spread);
                }
                p.name = format!("{}-{}", spec.profile.name, r + 1);
                out.push(p);
            }
        }
        out
    }

    /// Injection configuration for each condition.
    pub fn conditions(&self, model: Arc<InjectionModel>) -> Result<Vec<(Condition, InjectionConfig)>, SimError> {
        Condition::ALL
            .iter()
            .map(|&c| {
                let mode = if c.injection() { self.injected_mode } else { InjectionMode::Off };
                InjectionConfig::new(mode, self.p_t, self.seed, Arc::clone(&model))
                    .map(|cfg| (c, cfg))
                    .map_err(|e| SimError::Manifest(e.to_string()))
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentRow {
    pub participant: u32,
    pub typist: String,
    pub condition: Condition,
    pub logs: Vec<SessionLog>,
    pub report: MetricsReport,
}

/// Pause between consecutive phrases in a merged log.
const PHRASE_GAP_MS: u64 = 2000;

impl ExperimentRow {
    /// The row's phrase logs as one log, phrases laid out one after another
    /// on a common clock.
    pub fn merged_log(&self, seed: u64) -> SessionLog {
        let digest = self
            .logs
            .first()
            .map(|l| l.header.config_digest.clone())
            .unwrap_or_default();
        let mut header = LogHeader::new(format!("sim-p{}-{}", self.participant, self.condition), seed, digest);
        header.participant = Some(self.participant);
        header.condition = Some(self.condition);
        let mut merged = SessionLog::new(header);
        let mut base = 0;
        for log in &self.logs {
            let mut end = base;
            for e in &log.events {
                let mut e = e.clone();
                e.t_ms += base;
                end = end.max(e.t_ms);
                merged.events.push(e);
            }
            base = end + PHRASE_GAP_MS;
        }
        merged
    }
}

/// Runs every typist through every condition in its plan order, with the
/// plan's phrase-set assignment. One row per (typist, condition).
pub fn run_experiment(
    typists: &[TypistProfile],
    phrase_sets: &[PhraseSet],
    conditions: &[(Condition, InjectionConfig)],
    seed: u64,
    dict: &Dictionary,
) -> Result<Vec<ExperimentRow>, SimError> {
    if typists.is_empty() || phrase_sets.is_empty() || conditions.is_empty() {
        return Err(SimError::Manifest("experiment needs typists, phrase sets and conditions".into()));
    }
    let jobs: Vec<(u32, Condition)> = (0..typists.len() as u32)
        .flat_map(|p| {
            make_plan(p, seed)
                .conditions
                .into_iter()
                .filter(|c| conditions.iter().any(|(cc, _)| cc == c))
                .map(move |c| (p, c))
        })
        .collect();
    jobs.par_iter()
        .map(|&(participant, condition)| {
            let typist = &typists[participant as usize];
            let plan = make_plan(participant, seed);
            let set = &phrase_sets[plan.phrase_set(condition) % phrase_sets.len()];
            let config = &conditions
                .iter()
                .find(|(c, _)| *c == condition)
                .expect("filtered above")
                .1;
            let mut logs = Vec::with_capacity(set.phrases.len());
            for (j, phrase) in set.phrases.iter().enumerate() {
                let run_seed = derive_seed(
                    seed,
                    &[u64::from(participant), condition.index() as u64, j as u64],
                );
                let mut log = simulate_phrase(typist, phrase, config, run_seed)?;
                log.header.participant = Some(participant);
                log.header.condition = Some(condition);
                logs.push(log);
            }
            let report = tasks_report(
                logs.iter().zip(&set.phrases).map(|(l, p)| {
                    (
                        crate::session::Task {
                            target: Some(p.as_str()),
                            events: l.events.as_slice(),
                        },
                        p.as_str(),
                    )
                }),
                dict,
            )?;
            Ok(ExperimentRow {
                participant,
                typist: typist.name.clone(),
                condition,
                logs,
                report,
            })
        })
        .collect()
}

/// Runs a manifest end to end with the given model, phrase pool and dictionary.
pub fn run_manifest(
    manifest: &Manifest,
    model: Arc<InjectionModel>,
    pool: &[String],
    dict: &Dictionary,
) -> Result<Vec<ExperimentRow>, SimError> {
    let sets = partition_phrases(pool, 4, manifest.phrases_per_set, manifest.seed)?;
    let conditions = manifest.conditions(model)?;
    run_experiment(&manifest.typists(), &sets, &conditions, manifest.seed, dict)
}

/// Events of a log with only key presses, for quick inspection in tests.
pub fn key_events(log: &SessionLog) -> impl Iterator<Item = &SessionEvent> {
    log.events.iter().filter(|e| e.is_key())
}
