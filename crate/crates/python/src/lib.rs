//! Python bindings: the command-line workflows, posterior draws and the
//! evaluation metrics. Matrices cross the boundary as lists of rows.

use std::path::PathBuf;

use nalgebra::DMatrix;
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

use sjsdm::model::{FactorModel, PosteriorDraws};
use sjsdm::workflow::{self, Overrides, RunConfig};
use sjsdm::{bvn, evaluate, io, kernel, Error};

create_exception!(sjsdm_py, SjsdmError, PyException, "Raised with `(kind, message)` when a model operation fails.");

fn err(e: Error) -> PyErr {
    SjsdmError::new_err((e.kind(), e.to_string()))
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<DMatrix<f64>> {
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != c) {
        return Err(err(Error::dim("ragged matrix")));
    }
    Ok(DMatrix::from_fn(rows.len(), c, |i, j| rows[i][j]))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn to_py_json<'py, T: serde::Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let s = serde_json::to_string(v).map_err(|e| err(e.into()))?;
    py.import("json")?.call_method1("loads", (s,))
}

#[allow(clippy::too_many_arguments)]
fn load_config(
    config: Option<PathBuf>,
    seed: Option<u64>,
    chains: Option<usize>,
    variant: Option<&str>,
    holdout_frac: Option<f64>,
    min_presence: Option<usize>,
    out: Option<PathBuf>,
) -> PyResult<RunConfig> {
    let mut cfg = match config {
        Some(p) => RunConfig::load(&p).map_err(err)?,
        None => RunConfig::default(),
    };
    let variant = variant.map(str::parse::<FactorModel>).transpose().map_err(err)?;
    cfg.apply(&Overrides { seed, chains, variant, holdout_frac, min_presence, output: out });
    Ok(cfg)
}

/// Runs one workflow (`simulate`, `fit`, `predict`, `evaluate` or
/// `diagnose`) and returns its main report as a dict.
#[pyfunction]
#[pyo3(signature = (command, config=None, *, seed=None, chains=None, variant=None, holdout_frac=None, min_presence=None, out=None))]
#[allow(clippy::too_many_arguments)]
fn run<'py>(
    py: Python<'py>,
    command: &str,
    config: Option<PathBuf>,
    seed: Option<u64>,
    chains: Option<usize>,
    variant: Option<&str>,
    holdout_frac: Option<f64>,
    min_presence: Option<usize>,
    out: Option<PathBuf>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = load_config(config, seed, chains, variant, holdout_frac, min_presence, out)?;
    match command {
        "simulate" => {
            let t = py.detach(|| workflow::run_simulate(&cfg)).map_err(err)?;
            to_py_json(py, &t)
        }
        "fit" => {
            let f = py.detach(|| workflow::run_fit(&cfg)).map_err(err)?;
            to_py_json(py, &f.summary)
        }
        "predict" => {
            let (_, s) = py.detach(|| workflow::run_predict(&cfg)).map_err(err)?;
            to_py_json(py, &s)
        }
        "evaluate" => {
            let m = py.detach(|| workflow::run_evaluate(&cfg)).map_err(err)?;
            to_py_json(py, &m)
        }
        "diagnose" => {
            let d = py.detach(|| workflow::run_diagnose(&cfg)).map_err(err)?;
            to_py_json(py, &d)
        }
        other => Err(err(Error::invalid(format!("unknown command `{other}`")))),
    }
}

/// Posterior draws read from a `draws/` directory written by `fit`.
#[pyclass(frozen)]
struct Posterior {
    draws: PosteriorDraws,
    species: Vec<String>,
}

#[pymethods]
impl Posterior {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let (draws, m) = io::read_draws(&path).map_err(err)?;
        Ok(Posterior { draws, species: m.meta.species })
    }

    fn __len__(&self) -> usize {
        self.draws.len()
    }

    #[getter]
    fn species(&self) -> Vec<String> {
        self.species.clone()
    }

    #[getter]
    fn phi_acceptance(&self) -> f64 {
        self.draws.phi_acceptance
    }

    fn phi_trace(&self) -> Vec<f64> {
        self.draws.phi_trace()
    }

    fn sigma2_trace(&self) -> Vec<f64> {
        self.draws.sigma2_trace()
    }

    fn cluster_counts(&self) -> Vec<usize> {
        self.draws.cluster_count_trace()
    }

    /// Least-squares point estimate of the species partition.
    fn point_partition(&self) -> Vec<usize> {
        self.draws.point_partition()
    }

    fn co_occurrence(&self) -> Vec<Vec<f64>> {
        rows(&self.draws.co_occurrence())
    }

    /// `Lambda Lambda^T + sigma2 I` at the posterior means of `Lambda` and `sigma2`.
    fn sigma_star_hat(&self) -> PyResult<Vec<Vec<f64>>> {
        self.draws.sigma_star_hat().map(|m| rows(&m)).ok_or_else(|| err(Error::invalid("no draws")))
    }

    fn coefficients(&self, draw: usize) -> PyResult<Vec<Vec<f64>>> {
        self.draws.draws.get(draw).map(|d| rows(&d.b)).ok_or_else(|| err(Error::invalid(format!("draw {draw} out of range"))))
    }
}

#[pyfunction]
fn pmse(truth: Vec<Vec<f64>>, pred: Vec<Vec<f64>>) -> PyResult<f64> {
    evaluate::pmse(&matrix(truth)?, &matrix(pred)?).map_err(err)
}

/// Per-species Tjur R2 (None where undefined) and their mean.
#[pyfunction]
fn tjur_r(y: Vec<Vec<f64>>, pi: Vec<Vec<f64>>) -> PyResult<(Vec<Option<f64>>, f64)> {
    let t = evaluate::tjur_r(&matrix(y)?, &matrix(pi)?).map_err(err)?;
    Ok((t.per_species, t.mean))
}

#[pyfunction]
fn frobenius_gap(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>) -> PyResult<f64> {
    evaluate::frobenius_gap(&matrix(a)?, &matrix(b)?).map_err(err)
}

#[pyfunction]
fn inefficiency_factor(trace: Vec<f64>) -> PyResult<f64> {
    evaluate::inefficiency_factor(&trace).map_err(err)
}

#[pyfunction]
fn adjusted_rand_index(a: Vec<usize>, b: Vec<usize>) -> PyResult<f64> {
    evaluate::adjusted_rand_index(&a, &b).map_err(err)
}

#[pyfunction]
fn bvn_cdf(a: f64, b: f64, rho: f64) -> f64 {
    bvn::bvn_cdf(a, b, rho)
}

/// Prior bounds on the decay parameter from the smallest and largest site distance.
#[pyfunction]
fn phi_bounds(d_min: f64, d_max: f64) -> (f64, f64) {
    kernel::phi_bounds_from_distances(d_min, d_max)
}

#[pymodule]
fn sjsdm_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("SjsdmError", m.py().get_type::<SjsdmError>())?;
    m.add_class::<Posterior>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(pmse, m)?)?;
    m.add_function(wrap_pyfunction!(tjur_r, m)?)?;
    m.add_function(wrap_pyfunction!(frobenius_gap, m)?)?;
    m.add_function(wrap_pyfunction!(inefficiency_factor, m)?)?;
    m.add_function(wrap_pyfunction!(adjusted_rand_index, m)?)?;
    m.add_function(wrap_pyfunction!(bvn_cdf, m)?)?;
    m.add_function(wrap_pyfunction!(phi_bounds, m)?)?;
    Ok(())
}
