//! Python bindings for `smf-core`.
//!
//! Structured results (convergences, reports, traces) cross the boundary as
//! plain dicts and lists decoded from their JSON form.

use std::collections::BTreeMap;
use std::sync::Arc;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyAny;

use smf_core::converge::{self as conv, View};
use smf_core::graph::{self, input, Runtime, Value};
use smf_core::kb as core_kb;
use smf_core::planner;
use smf_core::predictions::{self, PredictionError};
use smf_core::reasoner;
use smf_core::study::{self, ReportFormat};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn from_json<'py>(py: Python<'py>, json: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (json,))
}

fn to_py<'py, T: serde::Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    from_json(py, &serde_json::to_string(v).map_err(value_err)?)
}

fn view(label: &str, source: &str) -> PyResult<View> {
    View::new(label, source).map_err(value_err)
}

fn load_corpus(path: &str) -> PyResult<predictions::PredictionCorpus> {
    predictions::load_predictions(path).map_err(|e| match e {
        PredictionError::Io(io) => PyIOError::new_err(format!("{path}: {io}")),
        other => value_err(other),
    })
}

/// An ontology in `.smk` form.
#[pyclass(name = "KnowledgeBase", module = "smf", frozen)]
struct PyKnowledgeBase {
    inner: Arc<core_kb::KnowledgeBase>,
}

#[pymethods]
impl PyKnowledgeBase {
    /// Parse and validate `.smk` text.
    #[new]
    fn new(text: &str) -> PyResult<Self> {
        core_kb::parse_kb(text)
            .map(|kb| PyKnowledgeBase {
                inner: Arc::new(kb),
            })
            .map_err(value_err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PyIOError::new_err(format!("{path}: {e}")))?;
        Self::new(&text)
    }

    fn serialize(&self) -> String {
        core_kb::serialize_kb(&self.inner)
    }

    #[getter]
    fn digest(&self) -> String {
        self.inner.source_digest().to_string()
    }

    fn classes(&self) -> Vec<String> {
        self.inner.classes().keys().cloned().collect()
    }

    fn individuals(&self) -> Vec<String> {
        self.inner.individuals().keys().cloned().collect()
    }

    /// `(class, depth)` pairs, nearest first, `Thing` last.
    fn ancestors(&self, individual: &str) -> PyResult<Vec<(String, usize)>> {
        let list = reasoner::ancestors(individual, &self.inner).map_err(value_err)?;
        Ok(list
            .entries()
            .iter()
            .map(|e| (e.class.clone(), e.depth))
            .collect())
    }

    fn lowest_common_ancestor(&self, a: &str, b: &str) -> PyResult<Option<String>> {
        let la = reasoner::ancestors(a, &self.inner).map_err(value_err)?;
        let lb = reasoner::ancestors(b, &self.inner).map_err(value_err)?;
        Ok(reasoner::lowest_level_ancestor(&la, &lb))
    }

    fn properties(&self, individual: &str) -> PyResult<BTreeMap<String, Option<String>>> {
        reasoner::get_properties(individual, &self.inner).map_err(value_err)
    }

    fn is_subclass(&self, c1: &str, c2: &str) -> PyResult<bool> {
        reasoner::is_subclass(c1, c2, &self.inner).map_err(value_err)
    }

    fn __len__(&self) -> usize {
        self.inner.classes().len()
    }

    fn __repr__(&self) -> String {
        format!(
            "KnowledgeBase({} classes, {} individuals)",
            self.inner.classes().len(),
            self.inner.individuals().len()
        )
    }
}

#[pyfunction]
fn normalize(label: &str) -> PyResult<String> {
    conv::normalize(label).map_err(value_err)
}

/// Rendered explanation, or `None` when the labels cannot be explained.
#[pyfunction]
fn explain(kb: &PyKnowledgeBase, label1: &str, label2: &str) -> PyResult<Option<String>> {
    Ok(conv::explain(
        &view(label1, "label1")?,
        &view(label2, "label2")?,
        &kb.inner,
    )
    .map(|e| e.rendered))
}

/// `{"abstraction", "properties", "relationships"}` for two labels.
#[pyfunction]
fn converge<'py>(
    py: Python<'py>,
    kb: &PyKnowledgeBase,
    label1: &str,
    label2: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let c = conv::converge(
        &view(label1, "label1")?,
        &view(label2, "label2")?,
        &kb.inner,
    );
    to_py(py, &c)
}

/// Full outcome: kind, explained flag, convergence and explanation.
#[pyfunction]
fn classify_outcome<'py>(
    py: Python<'py>,
    kb: &PyKnowledgeBase,
    label1: &str,
    label2: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let o = conv::classify_outcome(
        &view(label1, "label1")?,
        &view(label2, "label2")?,
        &kb.inner,
    );
    to_py(py, &o)
}

/// `(statistic, p)` for two counts against an even split.
#[pyfunction]
fn chi_squared_2x1(a: u64, b: u64) -> PyResult<(f64, f64)> {
    study::chi_squared_2x1(a, b).map_err(value_err)
}

/// Step names of the shortest plan, or `None` when the goal is unreachable.
#[pyfunction]
fn plan(domain: &str, problem: &str) -> PyResult<Option<Vec<String>>> {
    let d = planner::parse_domain(domain).map_err(value_err)?;
    let p = planner::parse_domain(problem).map_err(value_err)?;
    let found = planner::plan(&d.merge(p)).map_err(value_err)?;
    Ok(found.map(|plan| plan.steps.iter().map(|s| s.name()).collect()))
}

/// Aggregate report over a prediction file, as a dict (`"json"`) or a
/// text table (`"text"`).
#[pyfunction]
#[pyo3(signature = (kb, predictions_path, classifier1, classifier2, format = "json"))]
fn run_corpus<'py>(
    py: Python<'py>,
    kb: &PyKnowledgeBase,
    predictions_path: &str,
    classifier1: &str,
    classifier2: &str,
    format: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let fmt: ReportFormat = format.parse().map_err(value_err)?;
    let corpus = load_corpus(predictions_path)?;
    let report =
        study::run_corpus(&corpus, (classifier1, classifier2), &kb.inner).map_err(value_err)?;
    let rendered = study::render_report(&report, fmt);
    match fmt {
        ReportFormat::Json => from_json(py, &rendered),
        ReportFormat::Text => Ok(rendered.into_pyobject(py)?.into_any()),
    }
}

/// Per-image S/U/D/D* symbols in image-id order.
#[pyfunction]
fn stream(
    kb: &PyKnowledgeBase,
    predictions_path: &str,
    classifier1: &str,
    classifier2: &str,
) -> PyResult<Vec<String>> {
    let corpus = load_corpus(predictions_path)?;
    let outcomes = study::evaluate_corpus(&corpus, (classifier1, classifier2), &kb.inner)
        .map_err(value_err)?;
    Ok(study::encode_stream(outcomes.iter().map(|(_, o)| o))
        .0
        .iter()
        .map(|s| s.as_str().to_string())
        .collect())
}

/// Execute a program graph on one image. Returns
/// `{"trace": [...], "values": {node_id: summary}, "dot": str}`.
#[pyfunction]
fn run_program<'py>(
    py: Python<'py>,
    program: &str,
    kb: &PyKnowledgeBase,
    predictions_path: &str,
    image_id: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let runtime = Runtime::new();
    let mut g = runtime.load_program(program).map_err(value_err)?;
    let inputs = BTreeMap::from([
        (
            input::IMAGE_ID.to_string(),
            Value::Text(image_id.to_string()),
        ),
        (
            input::KB.to_string(),
            Value::Knowledge(Arc::clone(&kb.inner)),
        ),
        (
            input::PREDICTIONS.to_string(),
            Value::Corpus(Arc::new(load_corpus(predictions_path)?)),
        ),
    ]);
    let trace = runtime.execute(&mut g, &inputs).map_err(value_err)?;
    let values: BTreeMap<&str, String> = g
        .nodes()
        .iter()
        .filter_map(|n| n.value.as_ref().map(|v| (n.id.as_str(), v.summary())))
        .collect();
    let doc = serde_json::json!({
        "trace": trace.records,
        "values": values,
        "dot": graph::draw(&g),
    });
    from_json(py, &doc.to_string())
}

#[pymodule]
fn smf(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyKnowledgeBase>()?;
    m.add_function(wrap_pyfunction!(normalize, m)?)?;
    m.add_function(wrap_pyfunction!(explain, m)?)?;
    m.add_function(wrap_pyfunction!(converge, m)?)?;
    m.add_function(wrap_pyfunction!(classify_outcome, m)?)?;
    m.add_function(wrap_pyfunction!(chi_squared_2x1, m)?)?;
    m.add_function(wrap_pyfunction!(plan, m)?)?;
    m.add_function(wrap_pyfunction!(run_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(stream, m)?)?;
    m.add_function(wrap_pyfunction!(run_program, m)?)?;
    Ok(())
}
