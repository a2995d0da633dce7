//! Python bindings: injection engine, word classification, edit distance,
//! study planning, the synthetic-typist experiment and log analysis.

use std::sync::Arc;

use keyfault_core::injection::{run_stream, text_to_inputs, InjectionDecision};
use keyfault_core::metrics::{self, log_report};
use keyfault_core::session::{bundled_phrases, make_plan as plan_for, parse_phrases};
use keyfault_core::simulator::{run_manifest, Manifest};
use keyfault_core::{Dictionary, InjectionConfig as CoreConfig, InjectionMode, InjectionModel, InjectionState, SessionLog};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde::Serialize;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Converts any serialisable value to plain Python objects through `json`.
fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(value_err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn decisions<'py>(py: Python<'py>, ds: &[InjectionDecision]) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &ds)
}

/// Injection settings: mode ("off", "key" or "word"), p_t and seed.
#[pyclass(name = "InjectionConfig", frozen)]
struct PyInjectionConfig {
    inner: CoreConfig,
}

#[pymethods]
impl PyInjectionConfig {
    #[new]
    #[pyo3(signature = (mode = "word", p_t = 0.15, seed = 0))]
    fn new(mode: &str, p_t: f64, seed: u64) -> PyResult<Self> {
        let mode: InjectionMode = mode.parse().map_err(PyValueError::new_err)?;
        let inner = CoreConfig::new(mode, p_t, seed, Arc::new(InjectionModel::bundled())).map_err(value_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn mode(&self) -> String {
        self.inner.mode.to_string()
    }

    #[getter]
    fn p_t(&self) -> f64 {
        self.inner.p_t
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    fn digest(&self) -> String {
        self.inner.digest()
    }

    /// Types `text` one key at a time; returns `(output, decisions)`.
    fn inject<'py>(&self, py: Python<'py>, text: &str) -> PyResult<(String, Bound<'py, PyAny>)> {
        let out = run_stream(&self.inner, &text_to_inputs(text)).map_err(value_err)?;
        Ok((out.text, decisions(py, &out.decisions)?))
    }

    /// Substitute distribution for `c` as `(char, probability)` pairs.
    fn distribution(&self, c: char) -> PyResult<Vec<(char, f64)>> {
        self.inner.model.distribution(c, 1.0).map_err(value_err)
    }

    fn engine(&self) -> PyEngine {
        PyEngine {
            inner: self.inner.state(),
        }
    }

    fn __repr__(&self) -> String {
        format!(
            "InjectionConfig(mode={:?}, p_t={}, seed={})",
            self.inner.mode.to_string(),
            self.inner.p_t,
            self.inner.seed
        )
    }
}

/// Stateful engine for driving keystrokes by hand.
#[pyclass(name = "Engine")]
struct PyEngine {
    inner: InjectionState,
}

#[pymethods]
impl PyEngine {
    /// Per-key route: returns `(shown_char, decision_or_None)`.
    fn key_v1<'py>(&mut self, py: Python<'py>, c: char) -> PyResult<(char, Option<Bound<'py, PyAny>>)> {
        let (shown, d) = self.inner.on_keystroke_v1(c);
        Ok((shown, d.map(|d| to_py(py, &d)).transpose()?))
    }

    /// Per-word route: the character is always echoed unchanged.
    fn key_v2(&mut self, c: char) -> char {
        self.inner.on_keystroke_v2(c)
    }

    /// Per-word backspace; returns discarded decisions, or None outside a word.
    fn backspace_v2<'py>(&mut self, py: Python<'py>) -> PyResult<Option<Bound<'py, PyAny>>> {
        self.inner.on_backspace_v2().map(|ds| decisions(py, &ds)).transpose()
    }

    /// Commits the current word; returns `(typed, displayed, decisions)`.
    fn commit_v2<'py>(&mut self, py: Python<'py>) -> PyResult<(String, String, Bound<'py, PyAny>)> {
        let c = self.inner.commit_word_v2();
        Ok((c.typed, c.displayed, decisions(py, &c.decisions)?))
    }

    #[getter]
    fn offset(&self) -> u64 {
        self.inner.offset()
    }
}

/// Shared bundled dictionary.
#[pyclass(name = "Dictionary", frozen)]
struct PyDictionary {
    inner: Dictionary,
}

#[pymethods]
impl PyDictionary {
    /// Bundled list, or the `word frequency` lines given in `text`.
    #[new]
    #[pyo3(signature = (text = None))]
    fn new(text: Option<&str>) -> Self {
        Self {
            inner: text.map(Dictionary::parse).unwrap_or_else(Dictionary::bundled),
        }
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __contains__(&self, word: &str) -> bool {
        self.inner.contains(word)
    }

    /// Returns `(class, suggestions)` with class "correct", "minor" or "serious".
    fn classify(&self, word: &str) -> PyResult<(String, Vec<String>)> {
        let c = metrics::classify_word(word, &self.inner).map_err(value_err)?;
        let class = serde_json::to_value(c.class).map_err(value_err)?;
        Ok((class.as_str().unwrap_or_default().to_string(), c.suggestions))
    }

    #[pyo3(signature = (prefix, limit = 5))]
    fn completions(&self, prefix: &str, limit: usize) -> Vec<String> {
        self.inner.completions(prefix, limit)
    }
}

#[pyfunction]
fn classify_word(word: &str) -> PyResult<(String, Vec<String>)> {
    PyDictionary::new(None).classify(word)
}

#[pyfunction]
fn levenshtein(a: &str, b: &str) -> usize {
    metrics::levenshtein(a, b)
}

/// Edit distance after lower-casing and dropping punctuation.
#[pyfunction]
fn normalized_levenshtein(submitted: &str, target: &str) -> usize {
    metrics::normalized_levenshtein(submitted, target)
}

/// Condition order and phrase-set assignment for one participant.
#[pyfunction]
#[pyo3(signature = (participant, seed = 0))]
fn make_plan<'py>(py: Python<'py>, participant: u32, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &plan_for(participant, seed))
}

/// Runs the synthetic-typist experiment; returns one report dict per
/// (participant, condition).
#[pyfunction]
#[pyo3(signature = (manifest = None, seed = None, phrases = None))]
fn simulate<'py>(
    py: Python<'py>,
    manifest: Option<&str>,
    seed: Option<u64>,
    phrases: Option<&str>,
) -> PyResult<Bound<'py, PyAny>> {
    let mut m = match manifest {
        Some(text) => Manifest::parse(text).map_err(value_err)?,
        None => Manifest::bundled(),
    };
    if let Some(s) = seed {
        m.seed = s;
    }
    let pool = phrases.map(parse_phrases).unwrap_or_else(bundled_phrases);
    let dict = Dictionary::bundled();
    let rows = py
        .detach(|| run_manifest(&m, Arc::new(InjectionModel::bundled()), &pool, &dict))
        .map_err(value_err)?;
    #[derive(Serialize)]
    struct Row<'a> {
        participant: u32,
        typist: &'a str,
        condition: String,
        report: &'a metrics::MetricsReport,
    }
    let out: Vec<Row<'_>> = rows
        .iter()
        .map(|r| Row {
            participant: r.participant,
            typist: &r.typist,
            condition: r.condition.to_string(),
            report: &r.report,
        })
        .collect();
    to_py(py, &out)
}

/// Metrics for a JSONL session log.
#[pyfunction]
#[pyo3(signature = (log, targets = None))]
fn analyze<'py>(py: Python<'py>, log: &str, targets: Option<Vec<String>>) -> PyResult<Bound<'py, PyAny>> {
    let log = SessionLog::parse(log).map_err(value_err)?;
    let report = log_report(&log.events, targets.as_deref(), &Dictionary::bundled()).map_err(value_err)?;
    to_py(py, &report)
}

#[pymodule]
fn keyfault(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyInjectionConfig>()?;
    m.add_class::<PyEngine>()?;
    m.add_class::<PyDictionary>()?;
    m.add_function(wrap_pyfunction!(classify_word, m)?)?;
    m.add_function(wrap_pyfunction!(levenshtein, m)?)?;
    m.add_function(wrap_pyfunction!(normalized_levenshtein, m)?)?;
    m.add_function(wrap_pyfunction!(make_plan, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    Ok(())
}
