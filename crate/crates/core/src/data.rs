//! Files bundled with the crate.

/// Default QWERTY geometry (layout file format).
pub const QWERTY_LAYOUT: &str = include_str!("../data/qwerty.layout");

/// Synthetic substitution matrix generated from the QWERTY geometry. It is
/// not learned from human logs.
pub const SYNTHETIC_MATRIX: &str = include_str!("../data/synthetic_matrix.txt");

/// About 10k lowercase English words with frequency counts.
pub const WORDLIST: &str = include_str!("../data/words.txt");

/// 200 short transcription phrases, one per line.
pub const PHRASES: &str = include_str!("../data/phrases.txt");

/// Experiment manifest: 20 synthetic typists across the four conditions.
pub const MANIFEST: &str = include_str!("../data/experiment.toml");
