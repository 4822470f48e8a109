//! Python surface for the kklab core. Matrices cross the boundary as
//! nested lists of complex numbers; structured reports come back as
//! JSON strings so the Python side can `json.loads` them without a
//! custom type per report.

use kklab::matrix::{CMat, C64};
use kklab::{
    build_algebra, build_space, canonical_diagonal, cb_norm_interval, check_diagonal,
    kk_distance_interval, near_inclusion_gamma, run_batch, run_pipeline, BatchConfig,
    BallGeometry, LinearOperatorMap, OperatorAlgebra, PipelineMode, SearchParams, Tolerances,
};
use num_complex::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

type PyMatrix = Vec<Vec<Complex64>>;

fn to_cmat(rows: &PyMatrix) -> PyResult<CMat> {
    let r = rows.len();
    if r == 0 {
        return Err(PyValueError::new_err("empty matrix"));
    }
    let c = rows[0].len();
    if rows.iter().any(|row| row.len() != c) {
        return Err(PyValueError::new_err("ragged matrix rows"));
    }
    let flat: Vec<C64> = rows.iter().flatten().copied().collect();
    Ok(CMat::from_row_slice(r, c, &flat))
}

fn from_cmat(m: &CMat) -> PyMatrix {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn kk_err(e: kklab::KkError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn params_with(starts: Option<usize>, seed: Option<u64>) -> SearchParams {
    let mut p = SearchParams::default();
    if let Some(s) = starts {
        p.starts = s;
    }
    if let Some(s) = seed {
        p.seed = s;
    }
    p
}

fn parse_mode(mode: &str) -> PyResult<PipelineMode> {
    match mode {
        "certified" => Ok(PipelineMode::Certified),
        "heuristic" => Ok(PipelineMode::Heuristic),
        other => Err(PyValueError::new_err(format!(
            "mode must be 'certified' or 'heuristic', got '{other}'"
        ))),
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> PyResult<String> {
    serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// A unital subalgebra of M_k given by a spanning set of matrices.
#[pyclass(name = "Algebra")]
struct PyAlgebra {
    inner: OperatorAlgebra,
}

#[pymethods]
impl PyAlgebra {
    #[new]
    fn new(ambient_dim: usize, basis: Vec<PyMatrix>) -> PyResult<Self> {
        let mats = basis.iter().map(|m| to_cmat(m)).collect::<PyResult<Vec<_>>>()?;
        let space = build_space(ambient_dim, mats).map_err(kk_err)?;
        let inner = build_algebra(space, true).map_err(kk_err)?;
        Ok(PyAlgebra { inner })
    }

    /// Full matrix algebra M_k.
    #[staticmethod]
    fn full(k: usize) -> PyAlgebra {
        PyAlgebra {
            inner: kklab::full_matrix_algebra(k),
        }
    }

    /// Block-diagonal sum of full matrix algebras inside M_{ambient_dim},
    /// padded with a scalar acting on the complement when the blocks do
    /// not fill the ambient space.
    #[staticmethod]
    fn multi_matrix(block_sizes: Vec<usize>, ambient_dim: usize) -> PyResult<PyAlgebra> {
        let inner =
            kklab::multi_matrix_algebra(&block_sizes, ambient_dim).map_err(kk_err)?;
        Ok(PyAlgebra { inner })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn ambient_dim(&self) -> usize {
        self.inner.ambient_dim()
    }

    #[getter]
    fn is_selfadjoint(&self) -> bool {
        self.inner.is_selfadjoint()
    }

    /// Sizes of the full matrix blocks, when the spectral analysis
    /// recognizes the algebra as multi-matrix; None otherwise.
    #[getter]
    fn block_sizes(&self) -> Option<Vec<usize>> {
        self.inner.block_structure().map(|b| b.block_sizes.clone())
    }

    fn contains(&self, x: PyMatrix, tol: f64) -> PyResult<bool> {
        Ok(self.inner.space().contains(&to_cmat(&x)?, tol))
    }

    fn project(&self, x: PyMatrix) -> PyResult<PyMatrix> {
        Ok(from_cmat(&self.inner.space().project(&to_cmat(&x)?)))
    }

    fn basis(&self) -> Vec<PyMatrix> {
        self.inner.basis().iter().map(from_cmat).collect()
    }

    /// Worst multiplication-table residual of the certified basis.
    fn structure_residual(&self) -> f64 {
        self.inner.structure_residual()
    }

    fn __repr__(&self) -> String {
        format!(
            "Algebra(dim={}, ambient_dim={}, blocks={:?})",
            self.inner.dim(),
            self.inner.ambient_dim(),
            self.inner.block_structure().map(|b| b.block_sizes.clone()),
        )
    }
}

/// Canonical virtual diagonal of a multi-matrix algebra, with its
/// certificate: (c1, c2) module/multiplication residuals and a rigorous
/// h-norm enclosure. Returned as a dict.
#[pyfunction]
#[pyo3(signature = (algebra, starts=None, seed=None))]
fn diagonal_certificate(
    py: Python<'_>,
    algebra: &PyAlgebra,
    starts: Option<usize>,
    seed: Option<u64>,
) -> PyResult<PyObject> {
    let params = params_with(starts, seed);
    let (u, _) = canonical_diagonal(&algebra.inner, &params).map_err(kk_err)?;
    let cert = check_diagonal(&u, &algebra.inner, &params);
    let d = pyo3::types::PyDict::new_bound(py);
    d.set_item("c1_residual", cert.c1_residual)?;
    d.set_item("c2_residual", cert.c2_residual)?;
    d.set_item("h_norm_lower", cert.h_norm.lower)?;
    d.set_item("h_norm_upper", cert.h_norm.upper)?;
    d.set_item("passes", cert.passes(Tolerances::default().diag_tol))?;
    Ok(d.into())
}

/// Completely bounded norm of the transpose map on M_k (should be k).
#[pyfunction]
#[pyo3(signature = (k, starts=None, seed=None))]
fn cb_norm_transpose(k: usize, starts: Option<usize>, seed: Option<u64>) -> (f64, f64) {
    let params = params_with(starts, seed);
    let t = LinearOperatorMap::transpose_on_full(k).with_geometry(Some(BallGeometry::full(k)));
    let iv = cb_norm_interval(&t, &params);
    (iv.lower, iv.upper)
}

/// One-sided near-inclusion constant: sup over the unit ball of `a` of
/// the distance to `b`. Returns (lower, upper).
#[pyfunction]
#[pyo3(signature = (a, b, starts=None, seed=None))]
fn near_inclusion(
    a: &PyAlgebra,
    b: &PyAlgebra,
    starts: Option<usize>,
    seed: Option<u64>,
) -> PyResult<(f64, f64)> {
    let params = params_with(starts, seed);
    let tol = Tolerances::default();
    let geo = BallGeometry::from_algebra(&a.inner);
    let iv = near_inclusion_gamma(
        a.inner.space(),
        b.inner.space(),
        a.inner.ambient_dim(),
        geo.as_ref(),
        tol.dist_tol,
        &params,
    )
    .map_err(kk_err)?;
    Ok((iv.lower, iv.upper))
}

/// Symmetrized Kadison-Kastler distance between two algebras in the
/// same ambient M_k. Returns (lower, upper).
#[pyfunction]
#[pyo3(signature = (a, b, gamma_upper_hint=None, starts=None, seed=None))]
fn kk_distance(
    a: &PyAlgebra,
    b: &PyAlgebra,
    gamma_upper_hint: Option<f64>,
    starts: Option<usize>,
    seed: Option<u64>,
) -> PyResult<(f64, f64)> {
    let params = params_with(starts, seed);
    let tol = Tolerances::default();
    let ga = BallGeometry::from_algebra(&a.inner);
    let gb = BallGeometry::from_algebra(&b.inner);
    let iv = kk_distance_interval(
        a.inner.space(),
        b.inner.space(),
        ga.as_ref(),
        gb.as_ref(),
        gamma_upper_hint,
        tol.dist_tol,
        &params,
    )
    .map_err(kk_err)?;
    Ok((iv.lower, iv.upper))
}

/// Every intermediate constant of the perturbation chain at a given
/// gamma and diagonal norm bound, as a JSON string.
#[pyfunction]
#[pyo3(signature = (gamma, u_norm=1.0))]
fn audit_chain(gamma: f64, u_norm: f64) -> PyResult<String> {
    let audit = kklab::audit_chain(gamma, u_norm).map_err(kk_err)?;
    to_json(&audit)
}

/// Largest gamma in [0, 1/8) at which both final feasibility checks of
/// the chain stay below 1 (bisection).
#[pyfunction]
#[pyo3(signature = (u_norm=1.0))]
fn gamma_threshold(u_norm: f64) -> f64 {
    kklab::gamma_feasibility_threshold(u_norm)
}

/// Run the full pipeline on a generated perturbation instance
/// N -> S0 N S0^{-1} with S0 = I + tX. Returns the report as JSON.
#[pyfunction]
#[pyo3(signature = (block_sizes, t, seed, ambient_dim=None, mode="certified", starts=None))]
fn pipeline_generated(
    block_sizes: Vec<usize>,
    t: f64,
    seed: u64,
    ambient_dim: Option<usize>,
    mode: &str,
    starts: Option<usize>,
) -> PyResult<String> {
    let params = params_with(starts, None);
    let tol = Tolerances::default();
    let k = ambient_dim.unwrap_or_else(|| block_sizes.iter().sum());
    let inst =
        kklab::generate_instance(&block_sizes, k, t, seed, &params).map_err(kk_err)?;
    let report = run_pipeline(
        &inst.m,
        &inst.n,
        Some(&inst.u_m_cert),
        Some(inst.gamma_analytic),
        parse_mode(mode)?,
        &params,
        &tol,
    );
    to_json(&report)
}

/// Run the full pipeline on two explicitly given algebras. Returns the
/// report as JSON.
#[pyfunction]
#[pyo3(signature = (m, n, mode="certified", starts=None))]
fn pipeline(m: &PyAlgebra, n: &PyAlgebra, mode: &str, starts: Option<usize>) -> PyResult<String> {
    let params = params_with(starts, None);
    let tol = Tolerances::default();
    let report = run_pipeline(
        &m.inner,
        &n.inner,
        None,
        None,
        parse_mode(mode)?,
        &params,
        &tol,
    );
    to_json(&report)
}

/// Batch sweep over (t, seed); returns the summary as JSON.
#[pyfunction]
#[pyo3(signature = (block_sizes, t_grid, seeds, ambient_dim=None, mode="certified", starts=None))]
fn batch(
    block_sizes: Vec<usize>,
    t_grid: Vec<f64>,
    seeds: Vec<u64>,
    ambient_dim: Option<usize>,
    mode: &str,
    starts: Option<usize>,
) -> PyResult<String> {
    let params = params_with(starts, None);
    let tol = Tolerances::default();
    let config = BatchConfig {
        block_sizes,
        ambient_dim,
        t_grid,
        seeds,
        mode: parse_mode(mode)?,
    };
    let (summary, _) = run_batch(&config, &params, &tol).map_err(kk_err)?;
    to_json(&summary)
}

/// Spectral norm of a complex matrix.
#[pyfunction]
fn op_norm(m: PyMatrix) -> PyResult<f64> {
    Ok(kklab::matrix::op_norm(&to_cmat(&m)?))
}

#[pymodule]
fn kklab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyAlgebra>()?;
    m.add_function(wrap_pyfunction!(diagonal_certificate, m)?)?;
    m.add_function(wrap_pyfunction!(cb_norm_transpose, m)?)?;
    m.add_function(wrap_pyfunction!(near_inclusion, m)?)?;
    m.add_function(wrap_pyfunction!(kk_distance, m)?)?;
    m.add_function(wrap_pyfunction!(audit_chain, m)?)?;
    m.add_function(wrap_pyfunction!(gamma_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(pipeline_generated, m)?)?;
    m.add_function(wrap_pyfunction!(pipeline, m)?)?;
    m.add_function(wrap_pyfunction!(batch, m)?)?;
    m.add_function(wrap_pyfunction!(op_norm, m)?)?;
    m.add("GAMMA_DENOMINATOR", kklab::GAMMA_DENOMINATOR)?;
    m.add("SIMILARITY_CONSTANT", kklab::SIMILARITY_CONSTANT)?;
    Ok(())
}
