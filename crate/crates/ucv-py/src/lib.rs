//! Python bindings for the UCV toolkit: theories, structures, evaluation,
//! satisfiability, view enumeration, the shrinking pipeline, and the
//! undecidability/inexpressibility applications.

use std::collections::BTreeMap;
use std::time::Duration;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyType;

use ucv_core::apps::deps::{check_containment, Containment};
use ucv_core::apps::twocm::{self, TwoCounterMachine};
use ucv_core::apps::witness::{self, WitnessBounds};
use ucv_core::eval;
use ucv_core::frontend;
use ucv_core::logic::{UcvFormula, Var, Vocabulary};
use ucv_core::pipeline::{self, PipelineParams};
use ucv_core::sat;
use ucv_core::viewenum;
use ucv_core::Error as CoreError;

fn err(e: CoreError) -> PyErr {
    match e {
        CoreError::Resource(_) => PyRuntimeError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn json_to_py(py: Python<'_>, value: &serde_json::Value) -> PyResult<PyObject> {
    let json = py.import_bound("json")?;
    let loaded = json.call_method1("loads", (value.to_string(),))?;
    Ok(loaded.into())
}

fn to_json<T: serde::Serialize>(py: Python<'_>, value: &T) -> PyResult<PyObject> {
    let v = serde_json::to_value(value)
        .map_err(|e| PyValueError::new_err(format!("serialization failed: {e}")))?;
    json_to_py(py, &v)
}

fn vocab_from_pairs(pairs: Vec<(String, usize)>) -> PyResult<Vocabulary> {
    Vocabulary::new(pairs).map_err(err)
}

/// A relational structure (finite database).
#[pyclass(name = "Structure")]
#[derive(Clone)]
struct PyStructure {
    inner: ucv_core::logic::Structure,
}

#[pymethods]
impl PyStructure {
    /// Parses a `.facts` database over the given vocabulary (name, arity)
    /// pairs.
    #[classmethod]
    fn parse(_cls: &Bound<'_, PyType>, vocab: Vec<(String, usize)>, text: &str) -> PyResult<Self> {
        let vocab = vocab_from_pairs(vocab)?;
        Ok(PyStructure { inner: frontend::parse_facts(text, &vocab).map_err(err)? })
    }

    fn render(&self) -> String {
        frontend::render_facts(&self.inner)
    }

    fn universe(&self) -> Vec<String> {
        self.inner.universe().iter().map(|c| c.0.clone()).collect()
    }

    fn size(&self) -> usize {
        self.inner.universe().len()
    }

    fn __repr__(&self) -> String {
        format!("Structure(size={})", self.inner.universe().len())
    }
}

/// A parsed `.ucv` theory: vocabulary, views, and a query sentence.
#[pyclass(name = "Theory")]
#[derive(Clone)]
struct PyTheory {
    inner: frontend::Theory,
}

#[pymethods]
impl PyTheory {
    #[classmethod]
    fn parse(_cls: &Bound<'_, PyType>, text: &str) -> PyResult<Self> {
        Ok(PyTheory { inner: frontend::parse_theory(text).map_err(err)? })
    }

    fn render(&self) -> String {
        frontend::render_theory(&self.inner)
    }

    fn dialect(&self) -> String {
        self.inner.dialect.to_string()
    }

    fn view_names(&self) -> Vec<String> {
        self.inner.views.views.iter().map(|v| v.name.clone()).collect()
    }

    fn parse_facts(&self, text: &str) -> PyResult<PyStructure> {
        Ok(PyStructure {
            inner: frontend::parse_facts(text, &self.inner.vocab).map_err(err)?,
        })
    }

    /// Truth value of the theory's query sentence in the structure.
    fn model_check(&self, db: &PyStructure) -> PyResult<bool> {
        eval::model_check(&self.inner.query, &self.inner.views, &db.inner).map_err(err)
    }

    /// Image of a named view.
    fn eval_view(&self, name: &str, db: &PyStructure) -> PyResult<Vec<String>> {
        let view = self
            .inner
            .views
            .get(name)
            .ok_or_else(|| PyValueError::new_err(format!("unknown view {name}")))?;
        Ok(eval::eval_view(view, &db.inner)
            .map_err(err)?
            .into_iter()
            .map(|c| c.0)
            .collect())
    }

    /// Element -> class signature string (e.g. "C_101").
    fn class_table(&self, db: &PyStructure) -> PyResult<BTreeMap<String, String>> {
        let table = eval::class_table(&db.inner, &self.inner.views).map_err(err)?;
        Ok(table.classes.iter().map(|(c, s)| (c.0.clone(), s.to_string())).collect())
    }

    /// The Λ map: the unary structure interpreting each view by its image.
    fn lambda_map(&self, db: &PyStructure) -> PyResult<PyStructure> {
        Ok(PyStructure {
            inner: eval::lambda_map(&db.inner, &self.inner.views).map_err(err)?,
        })
    }

    /// Decides satisfiability of the query; returns the verdict document.
    #[pyo3(signature = (max_size = 4, time_secs = 10))]
    fn decide(&self, py: Python<'_>, max_size: usize, time_secs: u64) -> PyResult<PyObject> {
        let budget = sat::Budget {
            max_size,
            time: Duration::from_secs(time_secs),
            ..Default::default()
        };
        let verdict =
            sat::decide(&self.inner.query, &self.inner.views, &self.inner.vocab, &budget)
                .map_err(err)?;
        to_json(py, &verdict)
    }

    /// CQ containment between two named pure views.
    fn cq_contains(&self, a: &str, b: &str) -> PyResult<bool> {
        let get = |name: &str| {
            self.inner
                .views
                .get(name)
                .ok_or_else(|| PyValueError::new_err(format!("unknown view {name}")))
        };
        viewenum::cq_contains(get(a)?, get(b)?, &self.inner.vocab).map_err(err)
    }

    /// Containment of view `q1` in view `q2` modulo satisfiability:
    /// "CONTAINED", "COUNTEREXAMPLE", or "UNKNOWN".
    #[pyo3(signature = (q1, q2, max_size = 4, time_secs = 10))]
    fn check_containment(
        &self,
        q1: &str,
        q2: &str,
        max_size: usize,
        time_secs: u64,
    ) -> PyResult<String> {
        let x = Var::new("x");
        let f1 = UcvFormula::view(q1, x.clone());
        let f2 = UcvFormula::view(q2, x);
        let budget = sat::Budget {
            max_size,
            time: Duration::from_secs(time_secs),
            ..Default::default()
        };
        let got = check_containment(&f1, &f2, &self.inner.views, &self.inner.vocab, &[], &budget)
            .map_err(err)?;
        Ok(match got {
            Containment::Contained => "CONTAINED".into(),
            Containment::Counterexample { .. } => "COUNTEREXAMPLE".into(),
            Containment::Unknown { .. } => "UNKNOWN".into(),
        })
    }

    /// Runs the model-shrinking pipeline on a satisfying structure and
    /// returns (final_structure, report document).
    #[pyo3(signature = (db, c = 1, seed = 0))]
    fn run_pipeline(
        &self,
        py: Python<'_>,
        db: &PyStructure,
        c: usize,
        seed: u64,
    ) -> PyResult<(PyStructure, PyObject)> {
        let params = PipelineParams { c, seed, ..Default::default() };
        let outcome = pipeline::run_pipeline(&db.inner, &self.inner.query, &self.inner.views, &params)
            .map_err(err)?;
        let final_model = PyStructure { inner: outcome.final_model.clone() };
        Ok((final_model, to_json(py, &outcome)?))
    }

    fn __repr__(&self) -> String {
        format!(
            "Theory(dialect={}, views={})",
            self.inner.dialect,
            self.inner.views.n()
        )
    }
}

/// Enumerates the canonical view universe for a vocabulary and bound m;
/// returns rendered view rules.
#[pyfunction]
#[pyo3(signature = (vocab, m, cap = 200_000))]
fn enumerate_views(vocab: Vec<(String, usize)>, m: usize, cap: usize) -> PyResult<Vec<String>> {
    let vocab = vocab_from_pairs(vocab)?;
    let views = viewenum::enumerate_views(&vocab, m, cap).map_err(err)?;
    Ok(views.views.iter().map(frontend::render_view).collect())
}

/// The doubly-exponential model-size bound, exact (as a Python int).
#[pyfunction]
fn theoretical_bound(py: Python<'_>, p: usize, m: usize, c: usize) -> PyResult<PyObject> {
    let bound = sat::theoretical_bound(p, m, c);
    let builtins = py.import_bound("builtins")?;
    Ok(builtins.getattr("int")?.call1((bound.to_string(),))?.into())
}

/// Compiles a two-counter machine (text format) into a UCV≠ theory;
/// returns (theory, conjunct names).
#[pyfunction]
fn compile_2cm(text: &str) -> PyResult<(PyTheory, Vec<String>)> {
    let machine = TwoCounterMachine::parse(text).map_err(err)?;
    let compiled = twocm::compile_2cm(&machine).map_err(err)?;
    let names = compiled.conjuncts.iter().map(|(n, _)| n.clone()).collect();
    Ok((PyTheory { inner: compiled.theory }, names))
}

/// Simulates a halting machine and encodes its run as a structure.
#[pyfunction]
fn encode_trace(text: &str, max_steps: usize) -> PyResult<PyStructure> {
    let machine = TwoCounterMachine::parse(text).map_err(err)?;
    Ok(PyStructure { inner: twocm::encode_trace(&machine, max_steps).map_err(err)? })
}

/// The homomorphism-agreement certificate check.
#[pyfunction]
fn hom_agreement_check(a: &PyStructure, b: &PyStructure) -> PyResult<bool> {
    witness::hom_agreement_check(&a.inner, &b.inner).map_err(err)
}

/// Searches for an inexpressibility witness pair for "sym", "trans", or
/// "edge" over E/2; returns rendered facts or None.
#[pyfunction]
fn search_witness(
    query: &str,
    a_sizes: Vec<usize>,
    b_sizes: Vec<usize>,
) -> PyResult<Option<(PyStructure, PyStructure)>> {
    let q = match query {
        "sym" => witness::sym_query(),
        "trans" => witness::trans_query(),
        "edge" => witness::some_edge_query(),
        other => return Err(PyValueError::new_err(format!("unknown query {other}"))),
    };
    let vocab = Vocabulary::new(vec![("E".into(), 2)]).map_err(err)?;
    let bounds = WitnessBounds { a_sizes, b_sizes };
    Ok(witness::search_inexpressibility_witness(&q, &vocab, &bounds)
        .map_err(err)?
        .map(|(a, b)| (PyStructure { inner: a }, PyStructure { inner: b })))
}

#[pymodule]
fn ucv_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTheory>()?;
    m.add_class::<PyStructure>()?;
    m.add_function(wrap_pyfunction!(enumerate_views, m)?)?;
    m.add_function(wrap_pyfunction!(theoretical_bound, m)?)?;
    m.add_function(wrap_pyfunction!(compile_2cm, m)?)?;
    m.add_function(wrap_pyfunction!(encode_trace, m)?)?;
    m.add_function(wrap_pyfunction!(hom_agreement_check, m)?)?;
    m.add_function(wrap_pyfunction!(search_witness, m)?)?;
    Ok(())
}
