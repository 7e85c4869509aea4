//! Python bindings: parse documents, check schedules, decide robustness.
//!
//! Results that carry structure come back as plain dicts and lists, built
//! from the same JSON the command line prints.

use std::time::Duration;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

use vrobust_core::cli::format;
use vrobust_core::isolation::allowed_under_allocation;
use vrobust_core::polygraph::{self, ReductionLimits};
use vrobust_core::robustness::{self, is_generalized_split_schedule, RobustnessMode};
use vrobust_core::serializability::{is_conflict_serializable, is_view_serializable, serialization_graph};
use vrobust_core::{Error, SearchLimits, ViewLimits};

create_exception!(vrobust, VrobustError, PyException);
create_exception!(vrobust, LimitExceeded, VrobustError);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::LimitExceeded { .. } => LimitExceeded::new_err(e.to_string()),
        other => VrobustError::new_err(other.to_string()),
    }
}

fn parse_err(e: format::ParseError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_python<T: serde::Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| VrobustError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn ids(list: &[vrobust_core::TxnId]) -> Vec<String> {
    list.iter().map(ToString::to_string).collect()
}

/// Transactions with an isolation-level allocation.
#[pyclass(frozen, module = "vrobust")]
pub struct Workload(vrobust_core::Workload);

#[pymethods]
impl Workload {
    /// Parses a workload document (`txn T1: R(t) W(t) C`, `alloc T1=SI ...`).
    #[new]
    fn new(text: &str) -> PyResult<Self> {
        format::parse_workload(text).map(Workload).map_err(parse_err)
    }

    fn render(&self) -> String {
        format::render_workload(&self.0)
    }

    #[getter]
    fn transaction_ids(&self) -> Vec<String> {
        ids(&self.0.ids())
    }

    /// Decides robustness. `mode` is conflict, view, exact-conflict or exact-view;
    /// `method` is enumerate or split.
    #[pyo3(signature = (mode, method = "enumerate", max_txns = 4, max_candidates = 10_000_000, budget_ms = 60_000))]
    fn robust(
        &self,
        py: Python<'_>,
        mode: &str,
        method: &str,
        max_txns: usize,
        max_candidates: u64,
        budget_ms: u64,
    ) -> PyResult<Py<PyAny>> {
        let mode: RobustnessMode = mode.parse().map_err(PyValueError::new_err)?;
        let limits = SearchLimits {
            max_txns,
            max_candidates,
            budget: Duration::from_millis(budget_ms),
            ..SearchLimits::default()
        };
        let w = &self.0;
        let verdict = py
            .detach(|| match method {
                "enumerate" => Ok(robustness::decide(w, mode, &limits)),
                "split" => Ok(robustness::decide_by_split(w, mode, &limits)),
                other => Err(other.to_string()),
            })
            .map_err(|m| PyValueError::new_err(format!("unknown method `{m}`")))?
            .map_err(to_py)?;
        let counterexample = verdict.counterexample.as_ref().map(|c| {
            serde_json::json!({
                "subset": ids(&c.subset),
                "schedule": format::render_schedule(&c.schedule),
            })
        });
        to_python(
            py,
            &serde_json::json!({
                "robust": verdict.robust,
                "mode": verdict.mode,
                "method": verdict.method,
                "examined": verdict.examined,
                "counterexample": counterexample,
            }),
        )
    }

    /// Every schedule allowed under the allocation.
    fn enumerate_allowed(&self, py: Python<'_>) -> PyResult<Vec<Schedule>> {
        let w = &self.0;
        let all = py.detach(|| robustness::enumerate_allowed_schedules(w, &SearchLimits::default())).map_err(to_py)?;
        Ok(all.into_iter().map(Schedule).collect())
    }

    fn __repr__(&self) -> String {
        format!("Workload({:?})", format::render_workload(&self.0))
    }
}

/// A multiversion schedule over a workload's transactions.
#[pyclass(frozen, module = "vrobust")]
pub struct Schedule(vrobust_core::Schedule);

#[pymethods]
impl Schedule {
    #[new]
    fn new(text: &str, workload: &Workload) -> PyResult<Self> {
        format::parse_schedule(text, &workload.0.txns).map(Schedule).map_err(parse_err)
    }

    fn render(&self) -> String {
        format::render_schedule(&self.0)
    }

    #[getter]
    fn order(&self) -> String {
        format::render_order(&self.0)
    }

    #[getter]
    fn transaction_ids(&self) -> Vec<String> {
        ids(&self.0.txn_ids())
    }

    /// Dependency edges between transactions as (from, to) pairs.
    fn serialization_graph(&self) -> Vec<(String, String)> {
        serialization_graph(&self.0).edge_pairs().into_iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    /// Returns (serializable, cycle); the cycle is None when serializable.
    fn is_conflict_serializable(&self) -> (bool, Option<Vec<String>>) {
        let (ok, cycle) = is_conflict_serializable(&self.0);
        (ok, cycle.as_deref().map(ids))
    }

    /// Returns the witnessing serial order, or None when not view-serializable.
    fn view_witness(&self) -> PyResult<Option<Vec<String>>> {
        let w = is_view_serializable(&self.0, ViewLimits::default()).map_err(to_py)?;
        Ok(w.witness.as_deref().map(ids))
    }

    fn is_view_serializable(&self) -> PyResult<bool> {
        Ok(self.view_witness()?.is_some())
    }

    fn is_split_schedule(&self) -> bool {
        is_generalized_split_schedule(&self.0).holds
    }

    /// Admissibility under the workload's allocation, as a dict.
    fn allowed(&self, py: Python<'_>, workload: &Workload) -> PyResult<Py<PyAny>> {
        let report = allowed_under_allocation(&self.0, &workload.0.alloc).map_err(to_py)?;
        to_python(py, &report)
    }

    fn __eq__(&self, other: &Schedule) -> bool {
        self.0 == other.0
    }

    fn __repr__(&self) -> String {
        format!("Schedule({:?})", format::render_order(&self.0))
    }
}

/// A polygraph: nodes, mandatory arcs and three-node choices.
#[pyclass(frozen, module = "vrobust")]
pub struct Polygraph(vrobust_core::Polygraph);

#[pymethods]
impl Polygraph {
    #[new]
    fn new(text: &str) -> PyResult<Self> {
        format::parse_polygraph(text).map(Polygraph).map_err(parse_err)
    }

    fn render(&self) -> String {
        format::render_polygraph(&self.0)
    }

    fn is_acyclic(&self) -> PyResult<bool> {
        polygraph::is_acyclic_polygraph(&self.0, polygraph::DEFAULT_MAX_CHOICES).map(|(ok, _)| ok).map_err(to_py)
    }

    /// The reduction's transactions (under all-RC) and schedule.
    fn reduce(&self) -> PyResult<(Workload, Schedule)> {
        let red = polygraph::reduce_to_schedule(&self.0).map_err(to_py)?;
        let txns = red.transactions().to_vec();
        let alloc = vrobust_core::Allocation::uniform(txns.iter().map(|t| t.id()), vrobust_core::IsolationLevel::RC);
        Ok((Workload(vrobust_core::Workload::new(txns, alloc)), Schedule(red.schedule)))
    }

    fn verify(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        let p = &self.0;
        let report = py.detach(|| polygraph::verify_reduction(p, &ReductionLimits::default())).map_err(to_py)?;
        to_python(py, &report)
    }
}

/// Runs the command line with `args` (without the program name).
/// Returns (exit code, printed output).
#[pyfunction]
fn run(py: Python<'_>, args: Vec<String>) -> (i32, String) {
    py.detach(|| vrobust_core::cli::run(std::iter::once("vrobust".to_string()).chain(args)))
}

#[pymodule]
fn vrobust(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Workload>()?;
    m.add_class::<Schedule>()?;
    m.add_class::<Polygraph>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add("VrobustError", m.py().get_type::<VrobustError>())?;
    m.add("LimitExceeded", m.py().get_type::<LimitExceeded>())?;
    m.add("REPORT_SCHEMA", vrobust_core::cli::report::JSON_SCHEMA)?;
    Ok(())
}
