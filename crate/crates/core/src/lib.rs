//! Error injection and evaluation toolkit for soft-keyboard text-entry studies.
//!
//! The crate is organised around the pipeline a study goes through:
//!
//! - [`geometry`]: key centroids and the standard key distance `k`.
//! - [`substitution`]: learning the 29×29 substitution matrix from logs and
//!   turning it into per-character substitute distributions.
//! - [`injection`]: the per-keystroke and per-word injection engines plus an
//!   editor that drives them from input events.
//! - [`session`]: event logs, phrase sets and study plans.
//! - [`metrics`]: backspace/suspect ratios, WPM, inter-key times, edit
//!   distance accuracy and word classification.
//! - [`simulator`]: synthetic typists used to exercise everything above
//!   without human participants.

pub mod alphabet;
pub mod data;
pub mod editor;
pub mod geometry;
pub mod injection;
pub mod metrics;
pub mod rng;
pub mod session;
pub mod simulator;
pub mod substitution;

pub use geometry::{KeyGeom, KeyboardLayout, LayoutError};
pub use injection::{
    cap, DecisionSource, InjectionConfig, InjectionDecision, InjectionMode, InjectionModel,
    InjectionState,
};
pub use metrics::{Dictionary, MetricsReport, WordClass, WordClassKind};
pub use session::{EventKind, SessionEvent, SessionLog};
pub use substitution::{CandidateSet, SubstitutionMatrix, SuspectPair};
