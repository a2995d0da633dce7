//! Substitution model: suspect-character extraction, the 29×29 frequency
//! matrix, and per-character substitute distributions.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alphabet::{self, ALPHABET, SIZE};
use crate::editor::TextBuffer;
use crate::geometry::{KeyboardLayout, LayoutError};
use crate::session::{EventKind, SessionEvent, SessionLog};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("{0:?} is not in the substitution alphabet")]
    NotInAlphabet(char),
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error("candidate set is empty")]
    EmptyCandidateSet,
    #[error("probability {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("matrix parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
}

// ---------------------------------------------------------------------------
// Suspect characters

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SuspectPair {
    /// The character typed in place of the deleted one.
    pub intended: char,
    /// The leftmost character removed by the backspace run.
    pub typed: char,
    pub session_id: String,
    /// Index of the retyped key event in the session's event stream.
    pub offset: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SuspectScan {
    pub pairs: Vec<SuspectPair>,
    /// Events that could not be replayed.
    pub malformed: usize,
    /// Suspects involving characters outside the alphabet.
    pub out_of_alphabet: usize,
}

pub fn extract_suspects(log: &SessionLog) -> SuspectScan {
    extract_suspects_from(&log.events, &log.header.session_id)
}

/// A character is a suspect when it is the leftmost character deleted by a
/// maximal backspace run and a character is then typed at the position the
/// run stopped at. The retyped character is taken as the intended one. A run
/// ends at any cursor move, suggestion pick, phrase change or submit; such a
/// run yields nothing. Pairs whose retyped character equals the deleted one
/// are dropped.
pub fn extract_suspects_from(events: &[SessionEvent], session_id: &str) -> SuspectScan {
    struct Run {
        leftmost: char,
        position: usize,
    }

    let mut scan = SuspectScan::default();
    let mut buffer = TextBuffer::new();
    let mut run: Option<Run> = None;
    let mut in_backspaces = false;

    for (offset, event) in events.iter().enumerate() {
        match &event.kind {
            EventKind::Backspace => {
                if let Some(deleted) = buffer.backspace() {
                    let position = buffer.cursor();
                    match (&mut run, in_backspaces) {
                        (Some(r), true) => {
                            r.leftmost = deleted;
                            r.position = position;
                        }
                        _ => {
                            run = Some(Run {
                                leftmost: deleted,
                                position,
                            })
                        }
                    }
                }
                in_backspaces = true;
            }
            EventKind::KeyDown { ch } => {
                if let Some(r) = run.take() {
                    if buffer.cursor() == r.position {
                        let intended = alphabet::fold(*ch);
                        let typed = alphabet::fold(r.leftmost);
                        if intended != typed {
                            if alphabet::contains(intended) && alphabet::contains(typed) {
                                scan.pairs.push(SuspectPair {
                                    intended,
                                    typed,
                                    session_id: session_id.to_string(),
                                    offset,
                                });
                            } else {
                                scan.out_of_alphabet += 1;
                            }
                        }
                    }
                }
                buffer.insert(*ch);
                in_backspaces = false;
            }
            EventKind::CursorMove { index } => {
                if buffer.move_cursor(*index).is_err() {
                    scan.malformed += 1;
                }
                run = None;
                in_backspaces = false;
            }
            EventKind::SuggestionPick { at, replaced, word } => {
                if buffer.replace(*at, replaced, word).is_err() {
                    scan.malformed += 1;
                }
                run = None;
                in_backspaces = false;
            }
            EventKind::WordCommit { typed, displayed } => {
                let len = typed.chars().count();
                let ok = buffer
                    .cursor()
                    .checked_sub(len)
                    .map(|at| buffer.replace(at, typed, displayed).is_ok())
                    .unwrap_or(false);
                if !ok {
                    scan.malformed += 1;
                }
            }
            EventKind::InjectionDecision(_) => {}
            EventKind::PhraseShown { .. } => {
                buffer.clear();
                run = None;
                in_backspaces = false;
            }
            EventKind::Submit { .. } => {
                run = None;
                in_backspaces = false;
            }
        }
    }
    if scan.malformed > 0 {
        log::warn!(
            "session {session_id}: {} malformed events skipped",
            scan.malformed
        );
    }
    scan
}

// ---------------------------------------------------------------------------
// Matrix

/// Substitution counts: row = intended character, column = typed substitute,
/// both in [`ALPHABET`] order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubstitutionMatrix {
    counts: [[u64; SIZE]; SIZE],
}

impl Default for SubstitutionMatrix {
    fn default() -> Self {
        Self::zeros()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MatrixBuild {
    pub matrix: SubstitutionMatrix,
    pub skipped: usize,
}

impl SubstitutionMatrix {
    pub fn zeros() -> Self {
        Self {
            counts: [[0; SIZE]; SIZE],
        }
    }

    /// The bundled synthetic matrix.
    pub fn synthetic() -> Self {
        Self::parse(crate::data::SYNTHETIC_MATRIX).expect("bundled matrix is valid")
    }

    pub fn get(&self, intended: char, typed: char) -> u64 {
        match (alphabet::index(intended), alphabet::index(typed)) {
            (Some(i), Some(j)) => self.counts[i][j],
            _ => 0,
        }
    }

    pub fn row(&self, intended: char) -> Option<&[u64; SIZE]> {
        alphabet::index(intended).map(|i| &self.counts[i])
    }

    /// Adds one observation; returns false when either char is outside the alphabet.
    pub fn record(&mut self, intended: char, typed: char) -> bool {
        match (alphabet::index(intended), alphabet::index(typed)) {
            (Some(i), Some(j)) => {
                self.counts[i][j] += 1;
                true
            }
            _ => false,
        }
    }

    pub fn merge(&mut self, other: &SubstitutionMatrix) {
        for (row, other_row) in self.counts.iter_mut().zip(&other.counts) {
            for (c, o) in row.iter_mut().zip(other_row) {
                *c += o;
            }
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn nonzero_cells(&self) -> usize {
        self.counts.iter().flatten().filter(|&&c| c > 0).count()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# rows: intended, columns: typed; order: abcdefghijklmnopqrstuvwxyz SPACE PERIOD COMMA\n");
        for row in &self.counts {
            let line: Vec<String> = row.iter().map(u64::to_string).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, ModelError> {
        let mut counts = [[0u64; SIZE]; SIZE];
        let mut rows = 0;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| ModelError::Parse {
                line: i + 1,
                message,
            };
            if rows == SIZE {
                return Err(err(format!("more than {SIZE} rows")));
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != SIZE {
                return Err(err(format!("expected {SIZE} counts, found {}", fields.len())));
            }
            for (slot, f) in counts[rows].iter_mut().zip(&fields) {
                *slot = f.parse().map_err(|_| err(format!("bad count {f:?}")))?;
            }
            rows += 1;
        }
        if rows != SIZE {
            return Err(ModelError::Parse {
                line: text.lines().count(),
                message: format!("expected {SIZE} rows, found {rows}"),
            });
        }
        Ok(Self { counts })
    }
}

/// Counts `counts[intended][typed]` over the pairs. Pairs outside the
/// alphabet are skipped and tallied.
pub fn build_matrix<'a>(pairs: impl IntoIterator<Item = &'a SuspectPair>) -> MatrixBuild {
    let mut build = MatrixBuild::default();
    for p in pairs {
        if !build.matrix.record(p.intended, p.typed) {
            build.skipped += 1;
        }
    }
    build
}

// ---------------------------------------------------------------------------
// Candidate sets

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateEntry {
    pub ch: char,
    pub frequency: u64,
    /// Key distance to the origin, in `k` units.
    pub distance: f64,
}

/// The adjusted substitute set `S′` for one origin character.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub origin: char,
    pub entries: Vec<CandidateEntry>,
    /// True when every in-range neighbour had zero frequency and the set was
    /// replaced by a uniform one.
    pub fallback: bool,
}

impl CandidateSet {
    /// Applies the zero-frequency rule to the raw neighbour set `S`
    /// (`origin` itself excluded): neighbours with zero frequency are
    /// removed and the origin is added with a frequency equal to the number
    /// removed. If no neighbour has a non-zero frequency the set becomes
    /// uniform over the neighbours instead.
    pub fn from_neighbors(origin: char, origin_distance: f64, neighbors: &[CandidateEntry]) -> Self {
        let zeros = neighbors.iter().filter(|e| e.frequency == 0).count() as u64;
        if !neighbors.is_empty() && zeros == neighbors.len() as u64 {
            return Self {
                origin,
                entries: neighbors
                    .iter()
                    .map(|e| CandidateEntry { frequency: 1, ..*e })
                    .collect(),
                fallback: true,
            };
        }
        let mut entries = Vec::with_capacity(neighbors.len() + 1);
        if zeros > 0 {
            entries.push(CandidateEntry {
                ch: origin,
                frequency: zeros,
                distance: origin_distance,
            });
        }
        entries.extend(neighbors.iter().filter(|e| e.frequency > 0).copied());
        Self {
            origin,
            entries,
            fallback: false,
        }
    }

    pub fn get(&self, ch: char) -> Option<&CandidateEntry> {
        self.entries.iter().find(|e| e.ch == ch)
    }

    /// Unnormalised weights `F(i) / D(i, s)`.
    pub fn weights(&self) -> Vec<f64> {
        self.entries
            .iter()
            .map(|e| e.frequency as f64 / e.distance)
            .collect()
    }
}

pub fn build_candidate_set(
    matrix: &SubstitutionMatrix,
    layout: &KeyboardLayout,
    c: char,
) -> Result<CandidateSet, ModelError> {
    if !alphabet::contains(c) {
        return Err(ModelError::NotInAlphabet(c));
    }
    let mut neighbors = Vec::new();
    for m in layout.neighbor_set(c)? {
        if m == c {
            continue;
        }
        neighbors.push(CandidateEntry {
            ch: m,
            frequency: matrix.get(c, m),
            distance: layout.key_distance(c, m)?,
        });
    }
    let set = CandidateSet::from_neighbors(c, layout.key_distance(c, c)?, &neighbors);
    if set.entries.is_empty() {
        return Err(ModelError::EmptyCandidateSet);
    }
    Ok(set)
}

/// `P(i) = p_t · (F(i)/D(i,s)) / Σₙ (F(n)/D(n,s))`, so the probabilities sum to `p_t`.
pub fn substitution_distribution(cs: &CandidateSet, p_t: f64) -> Result<Vec<(char, f64)>, ModelError> {
    if !(0.0..=1.0).contains(&p_t) {
        return Err(ModelError::InvalidProbability(p_t));
    }
    if cs.entries.is_empty() {
        return Err(ModelError::EmptyCandidateSet);
    }
    let weights = cs.weights();
    let total: f64 = weights.iter().sum();
    Ok(cs
        .entries
        .iter()
        .zip(weights)
        .map(|(e, w)| (e.ch, p_t * w / total))
        .collect())
}

/// Candidate sets for every alphabet character, in alphabet order.
pub fn all_candidate_sets(
    matrix: &SubstitutionMatrix,
    layout: &KeyboardLayout,
) -> Result<Vec<CandidateSet>, ModelError> {
    ALPHABET
        .iter()
        .map(|&c| build_candidate_set(matrix, layout, c))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::session::LogHeader;
    use proptest::prelude::*;

    fn keys(log: &mut SessionLog, t: &mut u64, s: &str) {
        for ch in s.chars() {
            *t += 100;
            log.push(*t, EventKind::KeyDown { ch });
        }
    }

    fn backspaces(log: &mut SessionLog, t: &mut u64, n: usize) {
        for _ in 0..n {
            *t += 100;
            log.push(*t, EventKind::Backspace);
        }
    }

    fn log() -> SessionLog {
        SessionLog::new(LogHeader::new("s", 0, ""))
    }

    #[test]
    fn hrlllo_yields_r_for_e() {
        let mut l = log();
        let mut t = 0;
        keys(&mut l, &mut t, "hrlllo");
        backspaces(&mut l, &mut t, 5);
        keys(&mut l, &mut t, "ello");
        let pairs = extract_suspects(&l).pairs;
        assert_eq!(pairs.len(), 1);
        assert_eq!((pairs[0].typed, pairs[0].intended), ('r', 'e'));
        assert_eq!(pairs[0].offset, 11);
    }

    #[test]
    fn hrlllo_three_backspaces_yields_l_for_e_position() {
        // "hrlllo" minus three characters leaves "hrl"; the leftmost deleted is 'l'
        let mut l = log();
        let mut t = 0;
        keys(&mut l, &mut t, "hrlllo");
        backspaces(&mut l, &mut t, 3);
        keys(&mut l, &mut t, "ello");
        let pairs = extract_suspects(&l).pairs;
        assert_eq!(pairs.len(), 1);
        assert_eq!((pairs[0].typed, pairs[0].intended), ('l', 'e'));
    }

    #[test]
    fn no_backspaces_no_suspects() {
        let mut l = log();
        let mut t = 0;
        keys(&mut l, &mut t, "abc");
        l.push(t + 1, EventKind::Submit { final_text: "abc".into() });
        assert!(extract_suspects(&l).pairs.is_empty());
    }

    #[test]
    fn cursor_positioned_deletion() {
        let mut l = log();
        let mut t = 0;
        keys(&mut l, &mut t, "abxc");
        l.push(t, EventKind::CursorMove { index: 3 });
        backspaces(&mut l, &mut t, 1);
        keys(&mut l, &mut t, "b");
        let pairs = extract_suspects(&l).pairs;
        assert_eq!(pairs.len(), 1);
        assert_eq!((pairs[0].typed, pairs[0].intended), ('x', 'b'));
    }

    #[test]
    fn runs_without_retype_or_same_char_yield_nothing() {
        let mut l = log();
        let mut t = 0;
        keys(&mut l, &mut t, "abc");
        backspaces(&mut l, &mut t, 1);
        l.push(t, EventKind::CursorMove { index: 0 });
        keys(&mut l, &mut t, "z");
        backspaces(&mut l, &mut t, 1);
        keys(&mut l, &mut t, "z");
        backspaces(&mut l, &mut t, 1);
        l.push(t, EventKind::Submit { final_text: String::new() });
        let scan = extract_suspects(&l);
        assert!(scan.pairs.is_empty(), "{:?}", scan.pairs);
    }

    #[test]
    fn uppercase_is_folded_and_symbols_tallied() {
        let mut l = log();
        let mut t = 0;
        keys(&mut l, &mut t, "Hrl");
        backspaces(&mut l, &mut t, 2);
        keys(&mut l, &mut t, "E");
        keys(&mut l, &mut t, "7");
        backspaces(&mut l, &mut t, 1);
        keys(&mut l, &mut t, "l");
        let scan = extract_suspects(&l);
        assert_eq!(scan.pairs.len(), 1);
        assert_eq!((scan.pairs[0].typed, scan.pairs[0].intended), ('r', 'e'));
        assert_eq!(scan.out_of_alphabet, 1);
    }

    fn pair(typed: char, intended: char) -> SuspectPair {
        SuspectPair {
            intended,
            typed,
            session_id: "s".into(),
            offset: 0,
        }
    }

    #[test]
    fn matrix_counting() {
        let m = build_matrix(&[pair('r', 'e')]).matrix;
        assert_eq!(m.get('e', 'r'), 1);
        assert_eq!(m.total(), 1);
        assert_eq!(build_matrix(&[]).matrix, SubstitutionMatrix::zeros());
        let b = build_matrix(&[pair('r', 'e'), pair('r', 'e'), pair('a', 's'), pair('7', 's')]);
        assert_eq!(b.matrix.get('e', 'r'), 2);
        assert_eq!(b.matrix.get('s', 'a'), 1);
        assert_eq!(b.matrix.total(), 3);
        assert_eq!(b.skipped, 1);
    }

    #[test]
    fn matrix_text_round_trip_and_errors() {
        let m = SubstitutionMatrix::synthetic();
        assert_eq!(SubstitutionMatrix::parse(&m.to_text()).unwrap(), m);
        assert!(matches!(
            SubstitutionMatrix::parse("# c\n1 2 3\n"),
            Err(ModelError::Parse { line: 2, .. })
        ));
        let short: String = m.to_text().lines().take(10).collect::<Vec<_>>().join("\n");
        assert!(matches!(SubstitutionMatrix::parse(&short), Err(ModelError::Parse { .. })));
    }

    fn entry(ch: char, frequency: u64) -> CandidateEntry {
        CandidateEntry {
            ch,
            frequency,
            distance: 1.0,
        }
    }

    #[test]
    fn zero_frequency_rule_worked_example() {
        let s = [entry('a', 0), entry('b', 1), entry('c', 0), entry('d', 3), entry('e', 1)];
        let cs = CandidateSet::from_neighbors('s', 1.0, &s);
        let got: Vec<(char, u64)> = cs.entries.iter().map(|e| (e.ch, e.frequency)).collect();
        assert_eq!(got, vec![('s', 2), ('b', 1), ('d', 3), ('e', 1)]);
        assert!(!cs.fallback);
    }

    #[test]
    fn no_zero_frequencies_keeps_set() {
        let s: Vec<CandidateEntry> = "abcde".chars().map(|c| entry(c, 5)).collect();
        let cs = CandidateSet::from_neighbors('s', 1.0, &s);
        assert_eq!(cs.entries, s);
        assert!(cs.get('s').is_none());
    }

    #[test]
    fn all_zero_falls_back_to_uniform() {
        let s: Vec<CandidateEntry> = "abc".chars().map(|c| entry(c, 0)).collect();
        let cs = CandidateSet::from_neighbors('s', 1.0, &s);
        assert!(cs.fallback);
        assert!(cs.get('s').is_none());
        let dist = substitution_distribution(&cs, 0.3).unwrap();
        for (_, p) in dist {
            assert!((p - 0.1).abs() < 1e-12);
        }
        let m = SubstitutionMatrix::zeros();
        let cs = build_candidate_set(&m, &KeyboardLayout::qwerty(), 's').unwrap();
        assert!(cs.fallback);
        assert_eq!(cs.entries.len(), KeyboardLayout::qwerty().neighbor_set('s').unwrap().len() - 1);
    }

    #[test]
    fn candidate_set_for_s_on_bundled_matrix() {
        let layout = KeyboardLayout::qwerty();
        let m = SubstitutionMatrix::synthetic();
        let cs = build_candidate_set(&m, &layout, 's').unwrap();
        for e in &cs.entries {
            assert!(e.distance <= 2.0);
            assert!(e.frequency > 0);
        }
        // q, r and f are in range with zero counts
        assert_eq!(cs.get('s').map(|e| e.frequency), Some(3));
        assert_eq!(cs.get('a').map(|e| e.frequency), Some(63));
        assert!(cs.get('p').is_none());
        assert_eq!(build_candidate_set(&m, &layout, '7'), Err(ModelError::NotInAlphabet('7')));
    }

    #[test]
    fn distribution_examples() {
        let cs = CandidateSet {
            origin: 's',
            entries: vec![entry('b', 1), entry('d', 3)],
            fallback: false,
        };
        let d = substitution_distribution(&cs, 0.15).unwrap();
        // 0.15 * 1/4 and 0.15 * 3/4
        assert!((d[0].1 - 0.0375).abs() < 1e-15);
        assert!((d[1].1 - 0.1125).abs() < 1e-15);

        let zero = substitution_distribution(&cs, 0.0).unwrap();
        assert!(zero.iter().all(|(_, p)| *p == 0.0));

        let single = CandidateSet {
            origin: 'x',
            entries: vec![CandidateEntry {
                ch: 'x',
                frequency: 7,
                distance: 1.4,
            }],
            fallback: false,
        };
        assert_eq!(substitution_distribution(&single, 0.15).unwrap(), vec![('x', 0.15)]);

        let empty = CandidateSet {
            origin: 'x',
            entries: vec![],
            fallback: false,
        };
        assert_eq!(substitution_distribution(&empty, 0.1), Err(ModelError::EmptyCandidateSet));
        assert_eq!(
            substitution_distribution(&cs, 1.5),
            Err(ModelError::InvalidProbability(1.5))
        );
    }

    fn arb_entries() -> impl Strategy<Value = Vec<CandidateEntry>> {
        proptest::collection::vec((0u64..50, 1.0f64..2.0), 1..8).prop_map(|v| {
            v.into_iter()
                .enumerate()
                .map(|(i, (frequency, distance))| CandidateEntry {
                    ch: ALPHABET[i],
                    frequency,
                    distance,
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn mass_equals_threshold(entries in arb_entries(), p_t in 0.0f64..=1.0) {
            let cs = CandidateSet::from_neighbors('z', 1.0, &entries);
            let d = substitution_distribution(&cs, p_t).unwrap();
            let total: f64 = d.iter().map(|(_, p)| p).sum();
            prop_assert!((total - p_t).abs() < 1e-12);
            if p_t > 0.0 {
                prop_assert!(d.iter().all(|(_, p)| *p > 0.0));
            }
        }

        #[test]
        fn monotone_in_frequency_and_distance(
            fa in 1u64..100, fb in 1u64..100, da in 1.0f64..2.0, db in 1.0f64..2.0,
        ) {
            let cs = CandidateSet {
                origin: 'z',
                entries: vec![
                    CandidateEntry { ch: 'a', frequency: fa, distance: 1.5 },
                    CandidateEntry { ch: 'b', frequency: fb, distance: 1.5 },
                    CandidateEntry { ch: 'c', frequency: 10, distance: da },
                    CandidateEntry { ch: 'd', frequency: 10, distance: db },
                ],
                fallback: false,
            };
            let d = substitution_distribution(&cs, 0.15).unwrap();
            if fa > fb { prop_assert!(d[0].1 > d[1].1); }
            if da < db { prop_assert!(d[2].1 > d[3].1); }
        }

        #[test]
        fn matrix_build_is_order_independent(
            raw in proptest::collection::vec((0usize..29, 0usize..29), 0..60),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            let mut pairs: Vec<SuspectPair> =
                raw.iter().map(|&(a, b)| pair(ALPHABET[a], ALPHABET[b])).collect();
            let before = build_matrix(&pairs).matrix;
            pairs.shuffle(&mut crate::rng::rng_from(seed));
            prop_assert_eq!(build_matrix(&pairs).matrix, before);
        }
    }
}
