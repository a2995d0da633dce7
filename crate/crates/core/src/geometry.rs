//! Soft-keyboard geometry and the standard key distance.
//!
//! Distances between keys are Euclidean distances between key centroids,
//! expressed in units of `k`, where `k` is half the sum of a standard letter
//! key's width and height. Distances are clamped below at 1.0 so that a key's
//! distance to itself is finite and equal to that of an adjacent key.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::alphabet::{self, ALPHABET};

/// Keys further apart than this (in `k` units) are never substitutes.
pub const NEIGHBOR_CUTOFF: f64 = 2.0;

/// Distance assigned to keys beyond the cutoff.
pub const OUT_OF_RANGE_DISTANCE: f64 = 100.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LayoutError {
    #[error("layout has no key for {0:?}")]
    MissingKey(char),
    #[error("layout parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("letter keys {0:?} and {1:?} share a centroid")]
    DuplicateCentroid(char, char),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyGeom {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeyboardLayout {
    keys: BTreeMap<char, KeyGeom>,
    standard_key: char,
    unit_k: f64,
}

impl KeyboardLayout {
    /// The bundled QWERTY layout.
    pub fn qwerty() -> Self {
        Self::parse(crate::data::QWERTY_LAYOUT).expect("bundled layout is valid")
    }

    /// Parses the line-oriented layout format:
    ///
    /// ```text
    /// # comment
    /// standard a            (optional, defaults to 'a')
    /// <char-or-token> <cx> <cy> <w> <h>
    /// ```
    pub fn parse(text: &str) -> Result<Self, LayoutError> {
        let mut keys = BTreeMap::new();
        let mut standard_key = 'a';
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let parse_err = |message: String| LayoutError::Parse {
                line: line_no,
                message,
            };
            if fields[0] == "standard" {
                if fields.len() != 2 {
                    return Err(parse_err("expected `standard <key>`".into()));
                }
                standard_key = alphabet::from_token(fields[1])
                    .ok_or_else(|| parse_err(format!("bad key token {:?}", fields[1])))?;
                continue;
            }
            if fields.len() != 5 {
                return Err(parse_err(format!(
                    "expected 5 fields, found {}",
                    fields.len()
                )));
            }
            let ch = alphabet::from_token(fields[0])
                .ok_or_else(|| parse_err(format!("bad key token {:?}", fields[0])))?;
            let mut nums = [0.0f64; 4];
            for (slot, field) in nums.iter_mut().zip(&fields[1..]) {
                *slot = field
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse_err(format!("bad number {field:?}")))?;
            }
            let [cx, cy, w, h] = nums;
            if w <= 0.0 || h <= 0.0 {
                return Err(parse_err("key width and height must be positive".into()));
            }
            if keys.insert(ch, KeyGeom { cx, cy, w, h }).is_some() {
                return Err(parse_err(format!("duplicate key {ch:?}")));
            }
        }

        for &c in ALPHABET.iter() {
            if !keys.contains_key(&c) {
                return Err(LayoutError::MissingKey(c));
            }
        }
        let standard = keys
            .get(&standard_key)
            .ok_or(LayoutError::MissingKey(standard_key))?;
        let unit_k = (standard.w + standard.h) / 2.0;

        let letters: Vec<(char, &KeyGeom)> =
            keys.iter().filter(|(c, _)| c.is_ascii_lowercase()).map(|(c, g)| (*c, g)).collect();
        for (i, (a, ga)) in letters.iter().enumerate() {
            for (b, gb) in &letters[i + 1..] {
                if ga.cx == gb.cx && ga.cy == gb.cy {
                    return Err(LayoutError::DuplicateCentroid(*a, *b));
                }
            }
        }

        Ok(Self {
            keys,
            standard_key,
            unit_k,
        })
    }

    pub fn unit_k(&self) -> f64 {
        self.unit_k
    }

    pub fn standard_key(&self) -> char {
        self.standard_key
    }

    pub fn key(&self, c: char) -> Option<&KeyGeom> {
        self.keys.get(&c)
    }

    pub fn keys(&self) -> impl Iterator<Item = (char, &KeyGeom)> {
        self.keys.iter().map(|(c, g)| (*c, g))
    }

    fn geom(&self, c: char) -> Result<&KeyGeom, LayoutError> {
        self.keys.get(&c).ok_or(LayoutError::MissingKey(c))
    }

    /// Unclamped centroid distance `E(a, b) / k`.
    pub fn raw_distance(&self, a: char, b: char) -> Result<f64, LayoutError> {
        let ga = self.geom(a)?;
        let gb = self.geom(b)?;
        Ok((ga.cx - gb.cx).hypot(ga.cy - gb.cy) / self.unit_k)
    }

    /// `D(a, b) = max(E(a, b) / k, 1.0)`.
    pub fn key_distance(&self, a: char, b: char) -> Result<f64, LayoutError> {
        Ok(self.raw_distance(a, b)?.max(1.0))
    }

    /// Distance used for weighting substitutes: `D` within the cutoff,
    /// [`OUT_OF_RANGE_DISTANCE`] beyond it.
    pub fn weighting_distance(&self, a: char, b: char) -> Result<f64, LayoutError> {
        let d = self.key_distance(a, b)?;
        Ok(if d > NEIGHBOR_CUTOFF { OUT_OF_RANGE_DISTANCE } else { d })
    }

    /// Alphabet characters within [`NEIGHBOR_CUTOFF`] of `c`, including `c`,
    /// in alphabet order.
    pub fn neighbor_set(&self, c: char) -> Result<Vec<char>, LayoutError> {
        self.geom(c)?;
        let mut out = Vec::new();
        for &m in ALPHABET.iter() {
            if self.key_distance(c, m)? <= NEIGHBOR_CUTOFF {
                out.push(m);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn layout_with(extra: &str, skip: Option<&str>) -> String {
        crate::data::QWERTY_LAYOUT
            .lines()
            .filter(|l| match skip {
                Some(tok) => !l.starts_with(&format!("{tok} ")),
                None => true,
            })
            .chain(extra.lines())
            .collect::<Vec<_>>()
            .join("\n")
    }

    #[test]
    fn bundled_layout_has_unit_k_one() {
        let l = KeyboardLayout::qwerty();
        assert_eq!(l.unit_k(), 1.0);
        assert!(l.keys().count() >= 29);
    }

    #[test]
    fn unit_k_from_declared_standard_key() {
        let text = layout_with("", Some("a")).replace("standard a", "standard a\na 1.0 1.5 1.0 1.5");
        let l = KeyboardLayout::parse(&text).unwrap();
        assert_eq!(l.unit_k(), 1.25);
    }

    #[test]
    fn missing_comma_is_reported() {
        let text = layout_with("", Some("COMMA"));
        assert_eq!(KeyboardLayout::parse(&text), Err(LayoutError::MissingKey(',')));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = KeyboardLayout::parse("standard a\na 1.0 x 1 1\n").unwrap_err();
        assert_eq!(
            err,
            LayoutError::Parse {
                line: 2,
                message: "bad number \"x\"".into()
            }
        );
        let err = KeyboardLayout::parse("a 1 2 3\n").unwrap_err();
        assert!(matches!(err, LayoutError::Parse { line: 1, .. }));
        let err = KeyboardLayout::parse("a 1 2 0 1\n").unwrap_err();
        assert!(matches!(err, LayoutError::Parse { line: 1, .. }));
    }

    #[test]
    fn shared_centroid_rejected() {
        let text = layout_with("", Some("b")) + "\nb 1.0 1.5 1.0 1.0";
        assert_eq!(
            KeyboardLayout::parse(&text),
            Err(LayoutError::DuplicateCentroid('a', 'b'))
        );
    }

    #[test]
    fn worked_distances() {
        let l = KeyboardLayout::qwerty();
        assert_eq!(l.key_distance('s', 'a').unwrap(), 1.0);
        assert_eq!(l.key_distance('s', 's').unwrap(), 1.0);
        assert!((l.key_distance('q', 'p').unwrap() - 9.0).abs() < 1e-12);
        assert_eq!(l.weighting_distance('q', 'p').unwrap(), OUT_OF_RANGE_DISTANCE);
        assert_eq!(l.key_distance('s', '!'), Err(LayoutError::MissingKey('!')));
    }

    #[test]
    fn neighbor_sets() {
        let l = KeyboardLayout::qwerty();
        let s = l.neighbor_set('s').unwrap();
        for c in ['a', 'd', 'w', 'e', 'x', 'z', 's'] {
            assert!(s.contains(&c), "{c} missing from {s:?}");
        }
        assert!(!l.neighbor_set('q').unwrap().contains(&'p'));
        // digits are keys but never neighbours
        assert!(l.key('1').is_some());
        assert!(l.neighbor_set('q').unwrap().iter().all(|c| crate::alphabet::contains(*c)));
        assert!(l.neighbor_set('7').unwrap().iter().all(|c| crate::alphabet::contains(*c)));
        assert_eq!(l.neighbor_set('!'), Err(LayoutError::MissingKey('!')));
    }

    fn alpha() -> impl Strategy<Value = char> {
        proptest::sample::select(ALPHABET.to_vec())
    }

    proptest! {
        #[test]
        fn distance_symmetric_and_clamped(a in alpha(), b in alpha()) {
            let l = KeyboardLayout::qwerty();
            let ab = l.key_distance(a, b).unwrap();
            prop_assert_eq!(ab, l.key_distance(b, a).unwrap());
            prop_assert!(ab >= 1.0);
        }

        #[test]
        fn cutoff_partition(c in alpha(), m in alpha()) {
            let l = KeyboardLayout::qwerty();
            let set = l.neighbor_set(c).unwrap();
            prop_assert!(set.contains(&c));
            if set.contains(&m) {
                prop_assert!(l.key_distance(c, m).unwrap() <= NEIGHBOR_CUTOFF);
            } else {
                prop_assert!(l.raw_distance(c, m).unwrap() > NEIGHBOR_CUTOFF);
            }
        }
    }
}
