//! Python bindings for the QBF portfolio solver.

use std::sync::Arc;
use std::time::Duration;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use qbf_portfolio::bench;
use qbf_portfolio::formula::{self, Constraint, ConstraintKind, Quantifier, Var};
use qbf_portfolio::portfolio::{self, PortfolioOptions};
use qbf_portfolio::qcdcl::{self, Budget, SolverConfig};
use qbf_portfolio::{qbce, resolution, sharing};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn quantifier(q: &str) -> PyResult<Quantifier> {
    match q {
        "a" | "A" | "forall" => Ok(Quantifier::Universal),
        "e" | "E" | "exists" => Ok(Quantifier::Existential),
        _ => Err(PyValueError::new_err(format!("unknown quantifier {q:?}"))),
    }
}

fn clause(lits: &[i32]) -> PyResult<Constraint> {
    constraint(ConstraintKind::Clause, lits)
}

fn cube(lits: &[i32]) -> PyResult<Constraint> {
    constraint(ConstraintKind::Cube, lits)
}

fn constraint(kind: ConstraintKind, lits: &[i32]) -> PyResult<Constraint> {
    if lits.contains(&0) {
        return Err(PyValueError::new_err("literal 0"));
    }
    Constraint::from_dimacs(kind, lits)
        .ok_or_else(|| PyValueError::new_err("constraint contains complementary literals"))
}

fn to_py_json<'py, T: serde::Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let s = serde_json::to_string(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (s,))
}

/// A closed QBF in prenex CNF.
#[pyclass(name = "Pcnf", frozen)]
struct PyPcnf {
    inner: Arc<formula::Pcnf>,
}

#[pymethods]
impl PyPcnf {
    /// `prefix` is a list of `(quantifier, [vars])` pairs with quantifier
    /// `"a"` or `"e"`; `clauses` are lists of non-zero DIMACS literals.
    #[new]
    fn new(num_vars: u32, prefix: Vec<(String, Vec<u32>)>, clauses: Vec<Vec<i32>>) -> PyResult<Self> {
        let blocks = prefix
            .into_iter()
            .map(|(q, vs)| Ok((quantifier(&q)?, vs)))
            .collect::<PyResult<Vec<_>>>()?;
        let p = formula::Pcnf::from_parts(num_vars, blocks, &clauses).map_err(value_err)?;
        Ok(PyPcnf { inner: Arc::new(p) })
    }

    #[staticmethod]
    fn from_qdimacs(text: &str) -> PyResult<Self> {
        let p = formula::parse_qdimacs(text).map_err(value_err)?;
        Ok(PyPcnf { inner: Arc::new(p) })
    }

    fn to_qdimacs(&self) -> String {
        self.inner.to_qdimacs()
    }

    #[getter]
    fn num_vars(&self) -> u32 {
        self.inner.num_vars()
    }

    #[getter]
    fn clauses(&self) -> Vec<Vec<i32>> {
        self.inner.clauses().iter().map(|c| c.to_dimacs()).collect()
    }

    /// Normalized prefix as `(quantifier, level, [vars])` triples.
    #[getter]
    fn prefix(&self) -> Vec<(String, u32, Vec<u32>)> {
        self.inner
            .prefix()
            .blocks()
            .iter()
            .map(|b| (b.quantifier.symbol().to_string(), b.level, b.vars.iter().map(|v| v.0).collect()))
            .collect()
    }

    /// `(quantifier, level)` of a variable; free variables report `("e", 0)`.
    fn quant_info(&self, var: u32) -> PyResult<(String, u32)> {
        let (q, l) = self.inner.quant_info(Var(var)).map_err(value_err)?;
        Ok((q.symbol().to_string(), l))
    }

    fn universal_reduce(&self, lits: Vec<i32>) -> PyResult<Vec<i32>> {
        Ok(formula::universal_reduce(self.inner.prefix(), &clause(&lits)?).to_dimacs())
    }

    fn existential_reduce(&self, lits: Vec<i32>) -> PyResult<Vec<i32>> {
        Ok(formula::existential_reduce(self.inner.prefix(), &cube(&lits)?).to_dimacs())
    }

    fn q_resolve(&self, c1: Vec<i32>, c2: Vec<i32>, pivot: u32) -> PyResult<Vec<i32>> {
        resolution::q_resolve(self.inner.prefix(), &clause(&c1)?, &clause(&c2)?, Var(pivot))
            .map(|c| c.to_dimacs())
            .map_err(value_err)
    }

    fn term_resolve(&self, t1: Vec<i32>, t2: Vec<i32>, pivot: u32) -> PyResult<Vec<i32>> {
        resolution::term_resolve(self.inner.prefix(), &cube(&t1)?, &cube(&t2)?, Var(pivot))
            .map(|c| c.to_dimacs())
            .map_err(value_err)
    }

    /// Indices of the clauses removed by blocked clause elimination.
    fn qbce_fixpoint(&self) -> Vec<usize> {
        let refs: Vec<&Constraint> = self.inner.clauses().iter().collect();
        qbce::qbce_fixpoint(self.inner.prefix(), &refs)
    }

    /// Exhaustive evaluation; `"SAT"` or `"UNSAT"`.
    fn brute_force_eval(&self, py: Python<'_>) -> PyResult<&'static str> {
        let p = Arc::clone(&self.inner);
        py.detach(move || bench::brute_force_eval(&p))
            .map(|s| s.as_str())
            .map_err(value_err)
    }

    fn __repr__(&self) -> String {
        format!("Pcnf(num_vars={}, clauses={})", self.inner.num_vars(), self.inner.clauses().len())
    }
}

/// Runs one sequential solver instance. `rank`/`size` select a diversified
/// configuration; the default is the reference configuration.
#[pyfunction]
#[pyo3(signature = (pcnf, time_limit=None, max_conflicts=None, rank=0, size=1, seed=0))]
fn solve<'py>(
    py: Python<'py>,
    pcnf: &PyPcnf,
    time_limit: Option<f64>,
    max_conflicts: Option<u64>,
    rank: usize,
    size: usize,
    seed: u64,
) -> PyResult<(&'static str, Bound<'py, PyAny>)> {
    let config = if size <= 1 && rank == 0 {
        SolverConfig::reference()
    } else {
        SolverConfig::diversify(rank, size, seed).map_err(value_err)?
    };
    let budget = Budget {
        time_limit: time_limit.map(|t| Duration::from_secs_f64(t.max(0.0))),
        max_conflicts,
        stop: None,
    };
    let p = Arc::clone(&pcnf.inner);
    let r = py.detach(move || qcdcl::solve(p, config, &budget));
    Ok((r.status.as_str(), to_py_json(py, &r.stats)?))
}

/// Runs a portfolio of `threads` instances; returns a dict with the status,
/// winner, summed statistics and per-instance reports.
#[pyfunction]
#[pyo3(signature = (pcnf, threads=4, seed=0, time_limit=None, sharing=true, diversify=true))]
fn run_portfolio<'py>(
    py: Python<'py>,
    pcnf: &PyPcnf,
    threads: usize,
    seed: u64,
    time_limit: Option<f64>,
    sharing: bool,
    diversify: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let opts = PortfolioOptions {
        seed,
        time_limit: time_limit.map(|t| Duration::from_secs_f64(t.max(0.0))),
        sharing,
        diversify,
        ..PortfolioOptions::with_threads(threads)
    };
    let p = Arc::clone(&pcnf.inner);
    let r = py
        .detach(move || portfolio::run_portfolio(p, opts))
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    let out = to_py_json(py, &r)?;
    out.cast::<PyDict>()?.set_item("wall_time", r.wall_time.as_secs_f64())?;
    Ok(out)
}

/// Wire encoding of one constraint (`kind` is `"clause"` or `"cube"`).
#[pyfunction]
fn encode(kind: &str, lits: Vec<i32>, num_vars: u32) -> PyResult<Vec<i32>> {
    let c = match kind {
        "clause" => clause(&lits)?,
        "cube" => cube(&lits)?,
        _ => return Err(PyValueError::new_err(format!("unknown kind {kind:?}"))),
    };
    sharing::encode(&c, num_vars).map_err(value_err)
}

/// Decodes a message stream into `(kind, lits)` pairs.
#[pyfunction]
fn decode(ints: Vec<i32>, num_vars: u32) -> PyResult<Vec<(&'static str, Vec<i32>)>> {
    let cs = sharing::decode(&ints, num_vars).map_err(value_err)?;
    Ok(cs
        .iter()
        .map(|c| {
            let k = match c.kind() {
                ConstraintKind::Clause => "clause",
                ConstraintKind::Cube => "cube",
            };
            (k, c.to_dimacs())
        })
        .collect())
}

#[pyfunction]
fn efficiency(median_big: f64, cores: usize) -> f64 {
    bench::efficiency(median_big, cores)
}

#[pymodule]
fn qbf_portfolio_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPcnf>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(run_portfolio, m)?)?;
    m.add_function(wrap_pyfunction!(encode, m)?)?;
    m.add_function(wrap_pyfunction!(decode, m)?)?;
    m.add_function(wrap_pyfunction!(efficiency, m)?)?;
    Ok(())
}
