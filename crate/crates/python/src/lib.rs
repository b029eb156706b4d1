//! Python bindings for `ivbma-core`.
//!
//! Matrices cross the boundary as lists of rows and vectors as flat lists.

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

use ivbma_core::bma::{self, ExactOptions, GPrior, PriorConfig, SamplerConfig, SingleStage};
use ivbma_core::pipeline::DesignMatrices;
use ivbma_core::report::{self, Method, RunConfig};
use ivbma_core::synthetic::{self, SyntheticConfig};

create_exception!(ivbma, IvbmaError, PyException);

fn err(e: ivbma_core::Error) -> PyErr {
    IvbmaError::new_err(e.to_string())
}

fn matrix(rows: &[Vec<f64>], n: usize, what: &str) -> PyResult<DMatrix<f64>> {
    if rows.len() != n {
        return Err(PyValueError::new_err(format!("{what} has {} rows, expected {n}", rows.len())));
    }
    let k = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != k) {
        return Err(PyValueError::new_err(format!("{what} rows have different lengths")));
    }
    Ok(DMatrix::from_fn(n, k, |i, j| rows[i][j]))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn g_prior(g: Option<f64>) -> GPrior {
    g.map_or(GPrior::UnitInformation, GPrior::Fixed)
}

fn stage(y: Vec<f64>, columns: &[Vec<f64>], names: Option<Vec<String>>) -> PyResult<SingleStage> {
    let n = y.len();
    let x = matrix(columns, n, "columns")?;
    let y = DVector::from_vec(y);
    match names {
        Some(names) => SingleStage::new(y, x, names),
        None => SingleStage::unnamed(y, x),
    }
    .map_err(err)
}

/// Posterior summary of one variable.
#[pyclass(frozen, get_all, skip_from_py_object, module = "ivbma")]
#[derive(Clone)]
pub struct VariableSummary {
    name: String,
    pip: f64,
    post_mean: f64,
    post_sd: f64,
}

#[pymethods]
impl VariableSummary {
    fn __repr__(&self) -> String {
        format!(
            "VariableSummary(name={:?}, pip={:.4}, post_mean={:.4}, post_sd={:.4})",
            self.name, self.pip, self.post_mean, self.post_sd
        )
    }
}

#[pyclass(frozen, get_all, skip_from_py_object, module = "ivbma")]
#[derive(Clone)]
pub struct PosteriorSummary {
    variables: Vec<VariableSummary>,
    models_visited: usize,
    /// `(mask, pmp)` pairs with the mask as a 0/1 string.
    top_models: Vec<(String, f64)>,
}

impl From<&bma::PosteriorSummary> for PosteriorSummary {
    fn from(s: &bma::PosteriorSummary) -> Self {
        Self {
            variables: s
                .variables
                .iter()
                .map(|v| VariableSummary {
                    name: v.name.clone(),
                    pip: v.pip,
                    post_mean: v.post_mean,
                    post_sd: v.post_sd,
                })
                .collect(),
            models_visited: s.models_visited,
            top_models: s.top_models.iter().map(|m| (m.mask.to_string(), m.pmp)).collect(),
        }
    }
}

#[pymethods]
impl PosteriorSummary {
    fn pips(&self) -> Vec<f64> {
        self.variables.iter().map(|v| v.pip).collect()
    }

    fn post_means(&self) -> Vec<f64> {
        self.variables.iter().map(|v| v.post_mean).collect()
    }

    fn post_sds(&self) -> Vec<f64> {
        self.variables.iter().map(|v| v.post_sd).collect()
    }

    fn __getitem__(&self, name: &str) -> PyResult<VariableSummary> {
        self.variables
            .iter()
            .find(|v| v.name == name)
            .cloned()
            .ok_or_else(|| pyo3::exceptions::PyKeyError::new_err(name.to_string()))
    }

    fn __len__(&self) -> usize {
        self.variables.len()
    }
}

/// Outcome, endogenous regressors `x`, exogenous regressors `w` and instruments `z`.
#[pyclass(skip_from_py_object, module = "ivbma")]
#[derive(Clone)]
pub struct Design {
    inner: DesignMatrices,
}

#[pymethods]
impl Design {
    #[new]
    #[pyo3(signature = (y, x, w, z, x_names=None, w_names=None, z_names=None))]
    fn new(
        y: Vec<f64>,
        x: Vec<Vec<f64>>,
        w: Vec<Vec<f64>>,
        z: Vec<Vec<f64>>,
        x_names: Option<Vec<String>>,
        w_names: Option<Vec<String>>,
        z_names: Option<Vec<String>>,
    ) -> PyResult<Self> {
        let n = y.len();
        let (x, w, z) = (matrix(&x, n, "x")?, matrix(&w, n, "w")?, matrix(&z, n, "z")?);
        let default = |prefix: &str, k: usize| (1..=k).map(|i| format!("{prefix}{i}")).collect::<Vec<_>>();
        let inner = DesignMatrices::new(
            (1..=n).map(|i| format!("C{i:05}")).collect(),
            "y".into(),
            DVector::from_vec(y),
            x.clone(),
            x_names.unwrap_or_else(|| default("x", x.ncols())),
            w.clone(),
            w_names.unwrap_or_else(|| default("w", w.ncols())),
            z.clone(),
            z_names.unwrap_or_else(|| default("z", z.ncols())),
        )
        .map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn y(&self) -> Vec<f64> {
        self.inner.y.iter().copied().collect()
    }

    #[getter]
    fn x(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.x)
    }

    #[getter]
    fn w(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.w)
    }

    #[getter]
    fn z(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.z)
    }

    #[getter]
    fn second_stage_names(&self) -> Vec<String> {
        self.inner.second_stage_names()
    }

    /// OLS and 2SLS slopes of `y` on `[x w]`.
    fn reference_fits(&self) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let d = &self.inner;
        let f = synthetic::reference_fits(&d.y, &d.x, &d.w, &d.z).map_err(err)?;
        Ok((f.ols.iter().copied().collect(), f.tsls.iter().copied().collect()))
    }
}

#[pyclass(frozen, get_all, module = "ivbma")]
pub struct IvbmaResult {
    second_stage: PosteriorSummary,
    /// One summary per endogenous regressor, over `[z w]`.
    first_stage: Vec<PosteriorSummary>,
    sigma_mean: Vec<Vec<f64>>,
    outcome_acceptance: f64,
    retained_draws: usize,
}

/// Exact BMA by enumerating every model; `columns` is a list of rows.
#[pyfunction]
#[pyo3(signature = (y, columns, names=None, g=None))]
fn exact_bma(y: Vec<f64>, columns: Vec<Vec<f64>>, names: Option<Vec<String>>, g: Option<f64>) -> PyResult<PosteriorSummary> {
    let s = stage(y, &columns, names)?;
    let prior = PriorConfig { g: g_prior(g) };
    let r = bma::exact_bma(&s, &prior, ExactOptions::default()).map_err(err)?;
    Ok((&r.summary).into())
}

#[pyfunction]
#[pyo3(signature = (y, columns, iterations, burn_in, seed=42, names=None, g=None))]
fn mc3_sample(
    y: Vec<f64>,
    columns: Vec<Vec<f64>>,
    iterations: usize,
    burn_in: usize,
    seed: u64,
    names: Option<Vec<String>>,
    g: Option<f64>,
) -> PyResult<PosteriorSummary> {
    let s = stage(y, &columns, names)?;
    let mut config = SamplerConfig::new(iterations, burn_in, seed);
    config.g = g_prior(g);
    let r = bma::mc3_sample(&s, &config).map_err(err)?;
    Ok((&r.summary).into())
}

/// Log Bayes factor of the model with all `columns` against the intercept-only model.
#[pyfunction]
#[pyo3(signature = (y, columns, g=None))]
fn log_marginal_likelihood(y: Vec<f64>, columns: Vec<Vec<f64>>, g: Option<f64>) -> PyResult<f64> {
    let n = y.len();
    let x = matrix(&columns, n, "columns")?;
    bma::log_marginal_likelihood(&DVector::from_vec(y), &x, &PriorConfig { g: g_prior(g) }).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (design, iterations, burn_in, seed=42, thinning=10, g=None))]
fn run_ivbma(
    py: Python<'_>,
    design: &Design,
    iterations: usize,
    burn_in: usize,
    seed: u64,
    thinning: usize,
    g: Option<f64>,
) -> PyResult<IvbmaResult> {
    let mut config = SamplerConfig::new(iterations, burn_in, seed);
    config.thinning = thinning;
    config.g = g_prior(g);
    let d = design.inner.clone();
    let r = py.detach(move || ivbma_core::ivbma::run_ivbma(&d, &config)).map_err(err)?;
    Ok(IvbmaResult {
        second_stage: (&r.second_stage).into(),
        first_stage: r.first_stage.iter().map(Into::into).collect(),
        sigma_mean: rows(&r.sigma_summary),
        outcome_acceptance: r.outcome_acceptance,
        retained_draws: r.draws.len(),
    })
}

/// Kass-Raftery evidence class of a PIP: "Weak", "Positive", "Strong" or "Decisive".
#[pyfunction]
fn classify_evidence(pip: f64) -> PyResult<&'static str> {
    report::classify_evidence(pip).map(|c| c.as_str()).map_err(err)
}

/// Synthetic system with one endogenous regressor and `q` irrelevant exogenous ones.
#[pyfunction]
#[pyo3(signature = (n, q, beta, rho_error, strength, seed))]
fn simulate_endogenous(n: usize, q: usize, beta: f64, rho_error: f64, strength: f64, seed: u64) -> PyResult<Design> {
    let config = SyntheticConfig::single_endogenous(n, q, beta, rho_error, strength, seed);
    let inner = synthetic::generate_endogenous(&config).map_err(err)?;
    Ok(Design { inner })
}

/// Full pipeline: load, average, fit and write the report files to `out`. Returns the report text.
#[pyfunction]
#[pyo3(signature = (data, roster, out, method="ivbma", iterations=3_000_000, burn_in=200_000, thinning=10, seed=42, g=None, subsample=None))]
#[allow(clippy::too_many_arguments)]
fn run(
    py: Python<'_>,
    data: PathBuf,
    roster: PathBuf,
    out: PathBuf,
    method: &str,
    iterations: usize,
    burn_in: usize,
    thinning: usize,
    seed: u64,
    g: Option<f64>,
    subsample: Option<PathBuf>,
) -> PyResult<String> {
    let method: Method = method.parse().map_err(|e: ivbma_core::Error| PyValueError::new_err(e.to_string()))?;
    let mut config = RunConfig::new(data, roster, method, out);
    config.iterations = iterations;
    config.burn_in = burn_in;
    config.thinning = thinning;
    config.seed = seed;
    config.g = g_prior(g);
    config.subsample = subsample;
    py.detach(move || report::run(&config))
        .map(|o| o.report)
        .map_err(|e| IvbmaError::new_err(e.to_string()))
}

#[pymodule]
fn ivbma(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("IvbmaError", m.py().get_type::<IvbmaError>())?;
    m.add_class::<VariableSummary>()?;
    m.add_class::<PosteriorSummary>()?;
    m.add_class::<Design>()?;
    m.add_class::<IvbmaResult>()?;
    m.add_function(wrap_pyfunction!(exact_bma, m)?)?;
    m.add_function(wrap_pyfunction!(mc3_sample, m)?)?;
    m.add_function(wrap_pyfunction!(log_marginal_likelihood, m)?)?;
    m.add_function(wrap_pyfunction!(run_ivbma, m)?)?;
    m.add_function(wrap_pyfunction!(classify_evidence, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_endogenous, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
