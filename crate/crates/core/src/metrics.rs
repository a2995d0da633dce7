//! Per-session text-entry measures.
//!
//! Ratios use printable keystrokes (every `KeyDown`, terminators included,
//! backspaces excluded) as the denominator. WPM uses the length of the
//! submitted text over the time from the first keystroke to the submit.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::session::{split_tasks, EventKind, SessionEvent, Task};
use crate::substitution::extract_suspects_from;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("no input keystrokes")]
    NoInput,
    #[error("first keystroke and submit share a timestamp")]
    NoDuration,
    #[error("task was never submitted")]
    NotSubmitted,
    #[error("dictionary is empty")]
    NoDictionary,
}

fn printable_count(events: &[SessionEvent]) -> usize {
    events
        .iter()
        .filter(|e| matches!(e.kind, EventKind::KeyDown { .. }))
        .count()
}

fn backspace_count(events: &[SessionEvent]) -> usize {
    events
        .iter()
        .filter(|e| matches!(e.kind, EventKind::Backspace))
        .count()
}

pub fn backspace_ratio(events: &[SessionEvent]) -> Result<f64, MetricsError> {
    let printable = printable_count(events);
    if printable == 0 {
        return Err(MetricsError::NoInput);
    }
    Ok(backspace_count(events) as f64 / printable as f64)
}

/// Suspect characters (as found by the suspect heuristic) per printable keystroke.
pub fn suspect_ratio(events: &[SessionEvent]) -> Result<f64, MetricsError> {
    let printable = printable_count(events);
    if printable == 0 {
        return Err(MetricsError::NoInput);
    }
    Ok(extract_suspects_from(events, "").pairs.len() as f64 / printable as f64)
}

fn submitted(events: &[SessionEvent]) -> Option<(u64, &str)> {
    events.iter().rev().find_map(|e| match &e.kind {
        EventKind::Submit { final_text } => Some((e.t_ms, final_text.as_str())),
        _ => None,
    })
}

/// `(chars / 5) / minutes`, from the first keystroke to the submit.
pub fn wpm(events: &[SessionEvent]) -> Result<f64, MetricsError> {
    let (t_submit, text) = submitted(events).ok_or(MetricsError::NotSubmitted)?;
    let chars = text.chars().count();
    if chars == 0 {
        return Ok(0.0);
    }
    let t_first = events
        .iter()
        .find(|e| e.is_key())
        .map(|e| e.t_ms)
        .ok_or(MetricsError::NoInput)?;
    if t_submit <= t_first {
        return Err(MetricsError::NoDuration);
    }
    let minutes = (t_submit - t_first) as f64 / 60_000.0;
    Ok(chars as f64 / 5.0 / minutes)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct InterkeyStats {
    pub mean_ms: f64,
    /// Sample standard deviation; 0 with a single interval.
    pub sd_ms: f64,
    /// Mean time before the first backspace of a run, by run length.
    pub by_run_length: BTreeMap<usize, f64>,
}

#[derive(Debug, Clone, Default)]
struct InterkeyAcc {
    intervals: Vec<f64>,
    run_sums: BTreeMap<usize, (f64, usize)>,
}

impl InterkeyAcc {
    fn add(&mut self, events: &[SessionEvent]) {
        let keys: Vec<&SessionEvent> = events.iter().filter(|e| e.is_key()).collect();
        for w in keys.windows(2) {
            self.intervals.push(w[1].t_ms.saturating_sub(w[0].t_ms) as f64);
        }
        for run in runs(events) {
            if let Some(pause) = run.preceding_ms {
                let slot = self.run_sums.entry(run.len).or_insert((0.0, 0));
                slot.0 += pause as f64;
                slot.1 += 1;
            }
        }
    }

    fn finish(&self) -> InterkeyStats {
        let n = self.intervals.len();
        let mean = if n == 0 {
            0.0
        } else {
            self.intervals.iter().sum::<f64>() / n as f64
        };
        let sd = if n < 2 {
            0.0
        } else {
            (self.intervals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        InterkeyStats {
            mean_ms: mean,
            sd_ms: sd,
            by_run_length: self
                .run_sums
                .iter()
                .map(|(&len, &(sum, count))| (len, sum / count as f64))
                .collect(),
        }
    }
}

pub fn interkey_stats(events: &[SessionEvent]) -> Result<InterkeyStats, MetricsError> {
    if events.iter().filter(|e| e.is_key()).count() < 2 {
        return Err(MetricsError::NoInput);
    }
    let mut acc = InterkeyAcc::default();
    acc.add(events);
    Ok(acc.finish())
}

struct Run {
    len: usize,
    /// Time between the previous key event and the run's first backspace.
    preceding_ms: Option<u64>,
}

/// Maximal runs of consecutive backspaces. Injection decisions and word
/// commits do not interrupt a run; every other event does.
fn runs(events: &[SessionEvent]) -> Vec<Run> {
    let mut out = Vec::new();
    let mut current: Option<Run> = None;
    let mut last_key_t: Option<u64> = None;
    for e in events {
        match &e.kind {
            EventKind::Backspace => {
                match current.as_mut() {
                    Some(r) => r.len += 1,
                    None => {
                        current = Some(Run {
                            len: 1,
                            preceding_ms: last_key_t.map(|t| e.t_ms.saturating_sub(t)),
                        })
                    }
                }
                last_key_t = Some(e.t_ms);
            }
            EventKind::InjectionDecision(_) | EventKind::WordCommit { .. } => {}
            other => {
                out.extend(current.take());
                if matches!(other, EventKind::KeyDown { .. }) {
                    last_key_t = Some(e.t_ms);
                }
            }
        }
    }
    out.extend(current);
    out
}

/// Histogram of backspace run lengths.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunHistogram(pub BTreeMap<usize, usize>);

impl RunHistogram {
    pub fn total(&self) -> usize {
        self.0.values().sum()
    }

    pub fn add(&mut self, len: usize, count: usize) {
        *self.0.entry(len).or_insert(0) += count;
    }

    pub fn merge(&mut self, other: &RunHistogram) {
        for (&len, &count) in &other.0 {
            self.add(len, count);
        }
    }

    pub fn max_len(&self) -> Option<usize> {
        self.0.keys().next_back().copied()
    }

    /// Smallest run length at which the cumulative count exceeds
    /// `q × total`; `None` for an empty histogram.
    pub fn percentile(&self, q: f64) -> Option<usize> {
        let total = self.total();
        if total == 0 {
            return None;
        }
        let threshold = q * total as f64;
        let mut cum = 0usize;
        for (&len, &count) in &self.0 {
            cum += count;
            if cum as f64 > threshold {
                return Some(len);
            }
        }
        self.max_len()
    }

    pub fn p90(&self) -> Option<usize> {
        self.percentile(0.9)
    }
}

pub fn backspace_runs(events: &[SessionEvent]) -> RunHistogram {
    let mut h = RunHistogram::default();
    for r in runs(events) {
        h.add(r.len, 1);
    }
    h
}

// ---------------------------------------------------------------------------
// Edit distance

/// Unit-cost Levenshtein distance over Unicode scalar values.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let cost = usize::from(ca != cb);
            cur[j + 1] = (cur[j] + 1).min(prev[j + 1] + 1).min(prev[j] + cost);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Lowercase, drop every '.' and ',', then trim surrounding whitespace.
pub fn normalize(s: &str) -> String {
    s.to_lowercase()
        .chars()
        .filter(|c| *c != '.' && *c != ',')
        .collect::<String>()
        .trim()
        .to_string()
}

pub fn normalized_levenshtein(submitted: &str, target: &str) -> usize {
    levenshtein(&normalize(submitted), &normalize(target))
}

fn drop_last_word(s: &str) -> &str {
    match s.trim_end().rfind(char::is_whitespace) {
        Some(i) => s[..i].trim_end(),
        None => "",
    }
}

/// Distance of the submitted text to the target, in full and with the last
/// word of both strings removed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Accuracy {
    pub full: usize,
    pub last_word_removed: usize,
}

pub fn accuracy_of(submitted: &str, target: &str) -> Accuracy {
    let s = normalize(submitted);
    let t = normalize(target);
    Accuracy {
        full: levenshtein(&s, &t),
        last_word_removed: levenshtein(drop_last_word(&s), drop_last_word(&t)),
    }
}

pub fn accuracy(events: &[SessionEvent], target: &str) -> Result<Accuracy, MetricsError> {
    let (_, text) = submitted(events).ok_or(MetricsError::NotSubmitted)?;
    Ok(accuracy_of(text, target))
}

// ---------------------------------------------------------------------------
// Dictionary and word classification

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WordClassKind {
    /// Known word.
    Correct,
    /// Unknown word with at least one dictionary word one edit away.
    Minor,
    /// Unknown word with no dictionary word one edit away.
    Serious,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackColor {
    Green,
    Yellow,
    Orange,
    Red,
}

impl WordClassKind {
    /// Colour of the feedback bar shown after the word is committed.
    pub fn bar_color(self) -> FeedbackColor {
        match self {
            Self::Correct => FeedbackColor::Green,
            Self::Minor => FeedbackColor::Orange,
            Self::Serious => FeedbackColor::Red,
        }
    }

    /// Colour of the persistent word highlight; correct words are not
    /// highlighted. Minor errors are yellow without autocorrect.
    pub fn highlight_color(self, autocorrect: bool) -> Option<FeedbackColor> {
        match self {
            Self::Correct => None,
            Self::Minor if autocorrect => Some(FeedbackColor::Orange),
            Self::Minor => Some(FeedbackColor::Yellow),
            Self::Serious => Some(FeedbackColor::Red),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordClass {
    pub word: String,
    pub class: WordClassKind,
    pub suggestions: Vec<String>,
}

pub const MAX_SUGGESTIONS: usize = 5;

#[derive(Debug, Clone, Default)]
pub struct Dictionary {
    freq: HashMap<String, u64>,
    /// Sorted words for prefix lookups.
    sorted: Vec<String>,
}

const EDIT_ALPHABET: &str = "abcdefghijklmnopqrstuvwxyz'";

impl Dictionary {
    /// Newline-separated words, optionally followed by a frequency. `#`
    /// starts a comment line.
    pub fn parse(text: &str) -> Self {
        let mut freq = HashMap::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split_whitespace();
            let Some(word) = fields.next() else { continue };
            let f = fields.next().and_then(|f| f.parse().ok()).unwrap_or(1);
            let e = freq.entry(word.to_lowercase()).or_insert(0);
            *e = (*e).max(f);
        }
        let mut sorted: Vec<String> = freq.keys().cloned().collect();
        sorted.sort();
        Self { freq, sorted }
    }

    pub fn bundled() -> Self {
        Self::parse(crate::data::WORDLIST)
    }

    pub fn len(&self) -> usize {
        self.freq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freq.is_empty()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.freq.contains_key(word)
    }

    pub fn frequency(&self, word: &str) -> u64 {
        self.freq.get(word).copied().unwrap_or(0)
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.sorted.iter().map(String::as_str)
    }

    fn rank(&self, mut words: Vec<String>, limit: usize) -> Vec<String> {
        words.sort_by(|a, b| self.frequency(b).cmp(&self.frequency(a)).then(a.cmp(b)));
        words.dedup();
        words.truncate(limit);
        words
    }

    /// Dictionary words exactly one edit from `word`, most frequent first.
    pub fn within_one(&self, word: &str) -> Vec<String> {
        let found: Vec<String> = edits1(word)
            .into_iter()
            .filter(|w| w != word && self.contains(w))
            .collect();
        let mut found = found;
        found.sort();
        found.dedup();
        self.rank(found, usize::MAX)
    }

    /// Dictionary words at edit distance one or two, most frequent first.
    fn within_two(&self, word: &str) -> Vec<String> {
        let len = word.chars().count();
        let found: Vec<String> = self
            .sorted
            .iter()
            .filter(|w| w.chars().count().abs_diff(len) <= 2 && w.as_str() != word)
            .filter(|w| levenshtein(w, word) <= 2)
            .cloned()
            .collect();
        self.rank(found, MAX_SUGGESTIONS)
    }

    /// Dictionary words starting with `prefix`, most frequent first.
    pub fn completions(&self, prefix: &str, limit: usize) -> Vec<String> {
        let prefix = prefix.to_lowercase();
        let start = self.sorted.partition_point(|w| w.as_str() < prefix.as_str());
        let found: Vec<String> = self.sorted[start..]
            .iter()
            .take_while(|w| w.starts_with(&prefix))
            .cloned()
            .collect();
        self.rank(found, limit)
    }
}

fn edits1(word: &str) -> Vec<String> {
    let chars: Vec<char> = word.chars().collect();
    let mut out = Vec::with_capacity(chars.len() * 55 + 27);
    for i in 0..=chars.len() {
        let (l, r) = chars.split_at(i);
        for c in EDIT_ALPHABET.chars() {
            out.push(l.iter().chain([c].iter()).chain(r).collect());
        }
        if !r.is_empty() {
            out.push(l.iter().chain(&r[1..]).collect());
            for c in EDIT_ALPHABET.chars() {
                if c != r[0] {
                    out.push(l.iter().chain([c].iter()).chain(&r[1..]).collect());
                }
            }
        }
    }
    out
}

/// Lowercases and strips ASCII punctuation other than apostrophes.
pub fn clean_word(word: &str) -> String {
    word.to_lowercase()
        .chars()
        .filter(|c| !(c.is_ascii_punctuation() && *c != '\''))
        .collect()
}

/// Correct if known; Minor if a dictionary word is one edit away (those are
/// the suggestions); Serious otherwise, with up to [`MAX_SUGGESTIONS`] words
/// two edits away offered as suggestions.
pub fn classify_word(word: &str, dict: &Dictionary) -> Result<WordClass, MetricsError> {
    if dict.is_empty() {
        return Err(MetricsError::NoDictionary);
    }
    let clean = clean_word(word);
    if clean.is_empty() || dict.contains(&clean) || clean.chars().all(|c| c.is_ascii_digit()) {
        return Ok(WordClass {
            word: word.to_string(),
            class: WordClassKind::Correct,
            suggestions: vec![],
        });
    }
    let near = dict.within_one(&clean);
    if !near.is_empty() {
        let mut suggestions = near;
        suggestions.truncate(MAX_SUGGESTIONS);
        return Ok(WordClass {
            word: word.to_string(),
            class: WordClassKind::Minor,
            suggestions,
        });
    }
    Ok(WordClass {
        word: word.to_string(),
        class: WordClassKind::Serious,
        suggestions: dict.within_two(&clean),
    })
}

// ---------------------------------------------------------------------------
// Reports

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub sentences: usize,
    pub backspace_ratio: f64,
    pub suspect_ratio: f64,
    pub wpm: f64,
    pub interkey_mean_ms: f64,
    pub interkey_sd_ms: f64,
    /// Suggestion picks per sentence.
    pub picked_suggestions: f64,
    /// Serious-class words in the submitted text, per sentence.
    pub serious_errors: f64,
    /// Minor-class words in the submitted text, per sentence.
    pub minor_errors: f64,
    /// Mean normalised edit distance to the target.
    pub accuracy_full: f64,
    pub accuracy_last_word_removed: f64,
    pub backspace_run_histogram: RunHistogram,
    pub interkey_by_run_length: BTreeMap<usize, f64>,
}

impl MetricsReport {
    pub fn backspace_p90(&self) -> Option<usize> {
        self.backspace_run_histogram.p90()
    }
}

/// Builds one report over any number of submitted tasks. Ratios and
/// inter-key statistics are pooled over all keystrokes; per-sentence fields
/// are means over tasks.
pub fn tasks_report<'a>(
    tasks: impl IntoIterator<Item = (Task<'a>, &'a str)>,
    dict: &Dictionary,
) -> Result<MetricsReport, MetricsError> {
    let mut printable = 0usize;
    let mut backspaces = 0usize;
    let mut suspects = 0usize;
    let mut wpm_sum = 0.0;
    let mut picks = 0usize;
    let mut serious = 0usize;
    let mut minor = 0usize;
    let mut acc_full = 0usize;
    let mut acc_last = 0usize;
    let mut sentences = 0usize;
    let mut hist = RunHistogram::default();
    let mut interkey = InterkeyAcc::default();

    for (task, target) in tasks {
        let events = task.events;
        let (_, text) = submitted(events).ok_or(MetricsError::NotSubmitted)?;
        sentences += 1;
        printable += printable_count(events);
        backspaces += backspace_count(events);
        suspects += extract_suspects_from(events, "").pairs.len();
        wpm_sum += wpm(events)?;
        picks += events
            .iter()
            .filter(|e| matches!(e.kind, EventKind::SuggestionPick { .. }))
            .count();
        for word in text.split_whitespace() {
            match classify_word(word, dict)?.class {
                WordClassKind::Correct => {}
                WordClassKind::Minor => minor += 1,
                WordClassKind::Serious => serious += 1,
            }
        }
        let a = accuracy_of(text, target);
        acc_full += a.full;
        acc_last += a.last_word_removed;
        hist.merge(&backspace_runs(events));
        interkey.add(events);
    }
    if sentences == 0 || printable == 0 {
        return Err(MetricsError::NoInput);
    }
    let n = sentences as f64;
    let stats = interkey.finish();
    Ok(MetricsReport {
        sentences,
        backspace_ratio: backspaces as f64 / printable as f64,
        suspect_ratio: suspects as f64 / printable as f64,
        wpm: wpm_sum / n,
        interkey_mean_ms: stats.mean_ms,
        interkey_sd_ms: stats.sd_ms,
        picked_suggestions: picks as f64 / n,
        serious_errors: serious as f64 / n,
        minor_errors: minor as f64 / n,
        accuracy_full: acc_full as f64 / n,
        accuracy_last_word_removed: acc_last as f64 / n,
        backspace_run_histogram: hist,
        interkey_by_run_length: stats.by_run_length,
    })
}

/// Report for a single phrase task.
pub fn session_report(
    events: &[SessionEvent],
    target: &str,
    dict: &Dictionary,
) -> Result<MetricsReport, MetricsError> {
    let task = Task {
        target: Some(target),
        events,
    };
    tasks_report([(task, target)], dict)
}

/// Report over every submitted task of a log, with targets taken from the
/// `phrase_shown` events (or `fallback_target` when a task has none).
pub fn log_report(
    events: &[SessionEvent],
    targets: Option<&[String]>,
    dict: &Dictionary,
) -> Result<MetricsReport, MetricsError> {
    let tasks: Vec<Task<'_>> = split_tasks(events)
        .into_iter()
        .filter(|t| t.submitted().is_some())
        .collect();
    let mut pairs = Vec::with_capacity(tasks.len());
    for (i, t) in tasks.into_iter().enumerate() {
        let target = match (t.target, targets) {
            (Some(target), _) => target,
            (None, Some(ts)) => ts.get(i).map(String::as_str).unwrap_or(""),
            (None, None) => "",
        };
        pairs.push((t, target));
    }
    tasks_report(pairs, dict)
}

// ---------------------------------------------------------------------------
// Tables

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = if n < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    (mean, sd)
}

type Column<'a> = (&'a str, fn(&MetricsReport) -> f64, usize);

const TABLE_ROWS: [Column<'static>; 10] = [
    ("Backspace ratio", |r| r.backspace_ratio, 3),
    ("Suspect key ratio", |r| r.suspect_ratio, 3),
    ("WPM", |r| r.wpm, 2),
    ("Inter-key time (ms)", |r| r.interkey_mean_ms, 0),
    ("Picked suggestions", |r| r.picked_suggestions, 2),
    ("Serious errors", |r| r.serious_errors, 2),
    ("Minor errors", |r| r.minor_errors, 2),
    ("Levenshtein distance", |r| r.accuracy_full, 2),
    ("Levenshtein (last word removed)", |r| r.accuracy_last_word_removed, 2),
    ("Backspace run p90", |r| r.backspace_p90().unwrap_or(0) as f64, 1),
];

/// Aligned text table: one row per measure, one `mean (SD)` column per group.
pub fn format_table(groups: &[(String, Vec<MetricsReport>)]) -> String {
    let label_w = TABLE_ROWS.iter().map(|r| r.0.len()).max().unwrap_or(0);
    let cells: Vec<Vec<String>> = TABLE_ROWS
        .iter()
        .map(|(_, get, prec)| {
            groups
                .iter()
                .map(|(_, reports)| {
                    let values: Vec<f64> = reports.iter().map(get).collect();
                    let (m, sd) = mean_sd(&values);
                    format!("{m:.p$} ({sd:.p$})", p = *prec)
                })
                .collect()
        })
        .collect();
    let col_w: Vec<usize> = groups
        .iter()
        .enumerate()
        .map(|(j, (name, _))| cells.iter().map(|r| r[j].len()).max().unwrap_or(0).max(name.len()))
        .collect();

    let mut out = String::new();
    let _ = write!(out, "{:<label_w$}", "");
    for ((name, _), w) in groups.iter().zip(&col_w) {
        let _ = write!(out, "  {name:>w$}");
    }
    out.push('\n');
    for ((label, _, _), row) in TABLE_ROWS.iter().zip(&cells) {
        let _ = write!(out, "{label:<label_w$}");
        for (cell, w) in row.iter().zip(&col_w) {
            let _ = write!(out, "  {cell:>w$}");
        }
        out.push('\n');
    }
    out
}
