//! Python bindings. Matrices cross the boundary as lists of rows.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use ::sxmc::completion::{complete as run_completion, CompletionConfig};
use ::sxmc::experiment::{aggregate, generate_dataset, run_scenario, ScenarioSpec};
use ::sxmc::expression::{update_expression, ExpressionSettings};
use ::sxmc::{Error, FixedRankPoint, Matrix, SamplingPattern, SelfExpressiveManifold};

type Rows = Vec<Vec<f64>>;
type DictList<'py> = Vec<Bound<'py, PyDict>>;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::DimensionMismatch { .. }
        | Error::NonFinite(_)
        | Error::InvalidArgument(_)
        | Error::NonzeroDiagonal { .. }
        | Error::InfeasibleRank { .. }
        | Error::OffManifold(_)
        | Error::ZeroDenominator(_)
        | Error::Parse { .. } => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn matrix(rows: &Rows) -> PyResult<Matrix> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("ragged matrix"));
    }
    Ok(Matrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

fn rows(a: &Matrix) -> Rows {
    (0..a.nrows()).map(|i| a.row(i).iter().copied().collect()).collect()
}

fn pattern(mask: &[Vec<bool>]) -> PyResult<SamplingPattern> {
    let cols = mask.first().map_or(0, Vec::len);
    if mask.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("ragged mask"));
    }
    SamplingPattern::from_mask(mask.len(), cols, mask.concat()).map_err(to_py)
}

fn mask_rows(p: &SamplingPattern) -> Vec<Vec<bool>> {
    (0..p.rows()).map(|i| (0..p.cols()).map(|j| p.contains(i, j)).collect()).collect()
}

/// Fixed-rank manifold, optionally constrained by `X C = X`.
#[pyclass(name = "Manifold")]
struct PyManifold {
    inner: SelfExpressiveManifold,
}

#[pymethods]
impl PyManifold {
    #[new]
    #[pyo3(signature = (c, r, m, rank_tol=None))]
    fn new(c: Rows, r: usize, m: usize, rank_tol: Option<f64>) -> PyResult<Self> {
        let inner = SelfExpressiveManifold::new(&matrix(&c)?, r, m, rank_tol).map_err(to_py)?;
        Ok(PyManifold { inner })
    }

    #[staticmethod]
    fn fixed_rank(m: usize, n: usize, r: usize) -> PyResult<Self> {
        let inner = SelfExpressiveManifold::fixed_rank(m, n, r).map_err(to_py)?;
        Ok(PyManifold { inner })
    }

    #[getter]
    fn q(&self) -> usize {
        self.inner.q()
    }

    #[getter]
    fn rank(&self) -> usize {
        self.inner.rank()
    }

    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn tangent_dimension(&self) -> usize {
        self.inner.tangent_dimension()
    }

    /// Nearest manifold point to `a`.
    fn point(&self, a: Rows) -> PyResult<Rows> {
        Ok(rows(&self.inner.point_from_ambient(&matrix(&a)?).map_err(to_py)?.embed()))
    }

    fn project_tangent(&self, x: Rows, z: Rows) -> PyResult<Rows> {
        let x = FixedRankPoint::from_matrix(&matrix(&x)?, self.inner.rank()).map_err(to_py)?;
        let xi = self.inner.project_tangent(&x, &matrix(&z)?).map_err(to_py)?;
        Ok(rows(xi.ambient()))
    }

    /// `R_X(P_X(xi))`.
    fn retract(&self, x: Rows, xi: Rows) -> PyResult<Rows> {
        let x = FixedRankPoint::from_matrix(&matrix(&x)?, self.inner.rank()).map_err(to_py)?;
        let t = self.inner.project_tangent(&x, &matrix(&xi)?).map_err(to_py)?;
        Ok(rows(&self.inner.retract(&t).map_err(to_py)?.point.embed()))
    }

    fn self_expressive_residual(&self, x: Rows) -> PyResult<f64> {
        let x = matrix(&x)?;
        Ok(self.inner.self_expressive_residual(&x) / x.norm().max(f64::MIN_POSITIVE))
    }
}

/// A scenario sweep, starting from a preset.
#[pyclass(name = "Scenario")]
struct PyScenario {
    spec: ScenarioSpec,
}

#[pymethods]
impl PyScenario {
    #[new]
    fn new(name: &str) -> PyResult<Self> {
        ScenarioSpec::preset(name)
            .map(|spec| PyScenario { spec })
            .ok_or_else(|| PyValueError::new_err(format!("unknown scenario `{name}`")))
    }

    /// Applies a partial TOML table.
    fn update(&mut self, toml: &str) -> PyResult<()> {
        self.spec = self.spec.merge_toml(toml).map_err(to_py)?;
        Ok(())
    }

    fn to_toml(&self) -> PyResult<String> {
        self.spec.to_toml().map_err(to_py)
    }

    #[getter]
    fn grid(&self) -> Vec<f64> {
        self.spec.grid.clone()
    }

    #[setter]
    fn set_grid(&mut self, grid: Vec<f64>) {
        self.spec.grid = grid;
    }

    #[getter]
    fn trials(&self) -> usize {
        self.spec.trials
    }

    #[setter]
    fn set_trials(&mut self, trials: usize) {
        self.spec.trials = trials;
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.spec.base_seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.spec.base_seed = seed;
    }

    #[getter]
    fn noisy(&self) -> bool {
        self.spec.noisy
    }

    #[setter]
    fn set_noisy(&mut self, noisy: bool) {
        self.spec.noisy = noisy;
    }

    /// Runs the sweep; returns `(records, aggregates)` as lists of dicts.
    fn run<'py>(&self, py: Python<'py>) -> PyResult<(DictList<'py>, DictList<'py>)> {
        let records = run_scenario(&self.spec).map_err(to_py)?;
        let mut out = Vec::with_capacity(records.len());
        for r in &records {
            let d = PyDict::new(py);
            d.set_item("value", r.value)?;
            d.set_item("trial", r.trial)?;
            d.set_item("seed", r.seed)?;
            d.set_item("method", r.method.to_string())?;
            d.set_item("nmse", r.nmse)?;
            d.set_item("rnmse", r.rnmse)?;
            d.set_item("outer_iters", r.outer_iters)?;
            d.set_item("inner_iters", r.inner_iters)?;
            d.set_item("termination", &r.termination)?;
            d.set_item("seconds_per_iter", r.seconds_per_iter)?;
            d.set_item("error", r.error.clone())?;
            out.push(d);
        }
        let mut agg = Vec::new();
        for a in aggregate(&records) {
            let d = PyDict::new(py);
            d.set_item("value", a.value)?;
            d.set_item("method", a.method)?;
            d.set_item("trials", a.trials)?;
            d.set_item("failures", a.failures)?;
            d.set_item("mean_nmse", a.mean_nmse)?;
            d.set_item("stderr_nmse", a.stderr_nmse)?;
            d.set_item("mean_rnmse", a.mean_rnmse)?;
            d.set_item("stderr_rnmse", a.stderr_rnmse)?;
            agg.push(d);
        }
        Ok((out, agg))
    }

    /// Dataset of one trial: `M`, `observed`, `mask`, `Bprime`, `Aprime`, `rank`, `seed`.
    fn generate<'py>(&self, py: Python<'py>, grid_index: usize, trial: usize) -> PyResult<Bound<'py, PyDict>> {
        let b = generate_dataset(&self.spec, grid_index, trial).map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item("M", rows(&b.truth.m))?;
        d.set_item("observed", rows(&b.observed))?;
        d.set_item("mask", mask_rows(&b.pattern))?;
        d.set_item("Bprime", rows(&b.bprime))?;
        d.set_item("Aprime", rows(&b.aprime))?;
        d.set_item("rank", b.manifest.r)?;
        d.set_item("seed", b.manifest.seed)?;
        Ok(d)
    }
}

/// Completes `observed` on the mask. Returns `x_hat`, `termination`,
/// `outer_iterations`, `q` and `max_self_expressive_residual`.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (observed, mask, bprime, rank, baseline=false, seed=0, max_iters=None))]
fn complete<'py>(
    py: Python<'py>,
    observed: Rows,
    mask: Vec<Vec<bool>>,
    bprime: Rows,
    rank: usize,
    baseline: bool,
    seed: u64,
    max_iters: Option<usize>,
) -> PyResult<Bound<'py, PyDict>> {
    let mut cfg = CompletionConfig {
        baseline,
        seed,
        ..CompletionConfig::with_rank(rank)
    };
    if let Some(k) = max_iters {
        cfg.solver.max_iters = k;
    }
    let res = run_completion(&matrix(&observed)?, &pattern(&mask)?, &matrix(&bprime)?, &cfg).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("x_hat", rows(&res.x_hat.embed()))?;
    d.set_item("termination", res.termination.to_string())?;
    d.set_item("outer_iterations", res.outer_iterations())?;
    d.set_item("q", res.dimension.q)?;
    d.set_item("max_self_expressive_residual", res.max_self_expressive_residual())?;
    Ok(d)
}

/// Sparsest self-expression `C` of the columns of `d`.
#[pyfunction]
#[pyo3(signature = (d, eps_rel=1e-8))]
fn sparse_expression(d: Rows, eps_rel: f64) -> PyResult<Rows> {
    let settings = ExpressionSettings {
        eps_rel,
        ..ExpressionSettings::default()
    };
    Ok(rows(&update_expression(&matrix(&d)?, &settings).map_err(to_py)?.c))
}

#[pyfunction]
fn nmse(m: Rows, m_hat: Rows) -> PyResult<f64> {
    ::sxmc::metrics::nmse(&matrix(&m)?, &matrix(&m_hat)?).map_err(to_py)
}

#[pyfunction]
fn rnmse(m: Rows, m_hat: Rows, mask: Vec<Vec<bool>>) -> PyResult<f64> {
    ::sxmc::metrics::rnmse(&matrix(&m)?, &matrix(&m_hat)?, &pattern(&mask)?).map_err(to_py)
}

#[pymodule]
fn sxmc(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyManifold>()?;
    m.add_class::<PyScenario>()?;
    m.add_function(wrap_pyfunction!(complete, m)?)?;
    m.add_function(wrap_pyfunction!(sparse_expression, m)?)?;
    m.add_function(wrap_pyfunction!(nmse, m)?)?;
    m.add_function(wrap_pyfunction!(rnmse, m)?)?;
    Ok(())
}
