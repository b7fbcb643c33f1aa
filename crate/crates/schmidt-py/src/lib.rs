//! Python bindings. Structured results come back as plain dicts.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use schmidt_games::dynamics::SystemSpec;
use schmidt_games::games::{play_game, GameTranscript};
use schmidt_games::strategies::{self as st, BobPolicy, StrategyConstants};
use schmidt_games::tilings::{certify_tiling as certify, TilingFamily};
use schmidt_games::verification as ver;
use schmidt_games::{MetricBall, TorusPoint};
use std::sync::Arc;

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py, T: serde::Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn point(x: &[f64]) -> TorusPoint {
    TorusPoint::from_f64(x, 128)
}

fn system(spec: &str) -> PyResult<SystemSpec> {
    SystemSpec::parse_short(spec).map_err(err)
}

/// A torus map, built from a short name such as `doubling` or `circle:2:0.05`.
#[pyclass(name = "System", frozen)]
struct PySystem {
    inner: SystemSpec,
}

#[pymethods]
impl PySystem {
    #[new]
    fn new(spec: &str) -> PyResult<Self> {
        Ok(PySystem { inner: system(spec)? })
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn apply(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.iterate(x, 1)
    }

    fn iterate(&self, x: Vec<f64>, k: u32) -> PyResult<Vec<f64>> {
        if x.len() != self.inner.dim() {
            return Err(err(format!("expected {} coordinates", self.inner.dim())));
        }
        Ok(self.inner.iterate(&point(&x), k).to_f64())
    }

    /// `(σ₁, σ₂)`.
    fn expansion_bounds(&self) -> PyResult<(f64, f64)> {
        let b = self.inner.expansion_bounds().map_err(err)?;
        Ok((b.sigma1, b.sigma2))
    }

    fn __repr__(&self) -> String {
        format!("System({:?})", self.inner.name())
    }
}

/// Strategy constants together with the tiling a modified game needs.
#[pyclass(name = "Constants", frozen)]
struct PyConstants {
    inner: StrategyConstants,
    tiling: Option<Arc<TilingFamily>>,
}

fn rounds(k: &StrategyConstants) -> u32 {
    match k {
        StrategyConstants::Potential(k) => k.r,
        StrategyConstants::Anosov(k) => k.r,
        StrategyConstants::Modified(k) => k.r,
    }
}

#[pymethods]
impl PyConstants {
    #[getter]
    fn r(&self) -> u32 {
        rounds(&self.inner)
    }

    /// Problems found when re-checking the defining inequalities.
    fn check(&self) -> Vec<String> {
        self.inner.check()
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner)
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = serde_json::from_str(text).map_err(err)?;
        Ok(PyConstants { tiling: None, inner })
    }

    /// Plays one game against Bob; `depth` defaults to `10 r`.
    #[pyo3(signature = (seed, depth=None, policy="random"))]
    fn play(&self, py: Python<'_>, seed: u64, depth: Option<u32>, policy: &str) -> PyResult<PyTranscript> {
        let policy: BobPolicy = policy.parse().map_err(err)?;
        let depth = depth.unwrap_or(10 * self.r());
        py.detach(|| {
            let mut g = st::prepare_game(&self.inner, policy, depth, self.tiling.clone()).map_err(err)?;
            let t = play_game(&g.setup, g.alice.as_mut(), g.bob.as_mut(), depth, seed).map_err(err)?;
            Ok(PyTranscript { inner: t })
        })
    }

    fn __repr__(&self) -> String {
        let kind = match &self.inner {
            StrategyConstants::Potential(_) => "potential",
            StrategyConstants::Anosov(_) => "schmidt",
            StrategyConstants::Modified(_) => "modified",
        };
        format!("Constants({kind}, r={})", self.r())
    }
}

/// A played game.
#[pyclass(name = "Transcript", frozen)]
struct PyTranscript {
    inner: GameTranscript,
}

#[pymethods]
impl PyTranscript {
    #[getter]
    fn kind(&self) -> String {
        self.inner.kind.to_string()
    }

    #[getter]
    fn depth(&self) -> u32 {
        self.inner.depth
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn failure(&self) -> Option<String> {
        self.inner.failure.clone()
    }

    fn __len__(&self) -> usize {
        self.inner.moves.len()
    }

    fn to_jsonl(&self) -> String {
        self.inner.to_jsonl()
    }

    #[staticmethod]
    fn from_jsonl(text: &str) -> PyResult<Self> {
        Ok(PyTranscript { inner: GameTranscript::from_jsonl(text).map_err(err)? })
    }

    /// Replays and audits the game; returns the avoidance report as a dict.
    fn verify<'py>(&self, py: Python<'py>, constants: &PyConstants) -> PyResult<Bound<'py, PyAny>> {
        let rep = py.detach(|| ver::verify_transcript_with(&self.inner, &constants.inner, constants.tiling.clone())).map_err(err)?;
        to_py(py, &rep)
    }

    fn __eq__(&self, other: &PyTranscript) -> bool {
        self.inner == other.inner
    }
}

/// Derives strategy constants for `game` in `potential`, `schmidt`, `modified`.
#[pyfunction]
#[pyo3(signature = (game, system_spec, beta=0.5, gamma=1.0, rho=1e-4, target=None, b=None, epsilon=0.1, tiling_seed=1, levels=12))]
#[allow(clippy::too_many_arguments)]
fn derive_constants(
    py: Python<'_>,
    game: &str,
    system_spec: &str,
    beta: f64,
    gamma: f64,
    rho: f64,
    target: Option<Vec<f64>>,
    b: Option<u32>,
    epsilon: f64,
    tiling_seed: u64,
    levels: u32,
) -> PyResult<PyConstants> {
    let sys = system(system_spec)?;
    let y = point(&target.unwrap_or_else(|| if sys.dim() == 2 { vec![0.5, 0.5] } else { vec![0.0] }));
    py.detach(|| match game {
        "potential" => Ok(PyConstants {
            inner: StrategyConstants::Potential(st::derive_potential_constants(&sys, beta, gamma, rho, &y).map_err(err)?),
            tiling: None,
        }),
        "schmidt" | "anosov" => Ok(PyConstants {
            inner: StrategyConstants::Anosov(st::derive_anosov_constants(&sys, beta, rho, &y).map_err(err)?),
            tiling: None,
        }),
        "modified" => {
            let mut t = TilingFamily::new(sys.clone(), epsilon, tiling_seed).map_err(err)?;
            certify(&mut t, levels, tiling_seed).map_err(err)?;
            let k = st::derive_modified_constants(&sys, b, &t, tiling_seed, &y).map_err(err)?;
            Ok(PyConstants { inner: StrategyConstants::Modified(k), tiling: Some(Arc::new(t)) })
        }
        other => Err(err(format!("unknown game {other:?}"))),
    })
}

/// Minimal `(r, N)` for the potential game.
#[pyfunction]
fn potential_r_n(sigma1: f64, beta: f64, gamma: f64) -> PyResult<(u32, u64)> {
    st::potential_r_n(sigma1, beta, gamma).map_err(err)
}

#[pyfunction]
fn min_a_for_sigma(sigma1: f64) -> u32 {
    st::min_a_for_sigma(sigma1)
}

/// Picks `x₂` with `B(x₂, αρ) ⊆ B(x₁, ρ)` avoiding many targets; returns `(x₂, avoided)`.
#[pyfunction]
fn avoidance_choose(x1: Vec<f64>, rho: f64, targets: Vec<Vec<f64>>, alpha: f64) -> PyResult<(Vec<f64>, Vec<usize>)> {
    let targets: Vec<TorusPoint> = targets.iter().map(|t| point(t)).collect();
    let (x2, av) = st::avoidance_choose(&point(&x1), rho, &targets, alpha).map_err(err)?;
    Ok((x2.to_f64(), av))
}

#[pyfunction]
#[pyo3(signature = (system_spec, c, k_max=20, samples=10_000, seed=0))]
fn empirical_distortion(py: Python<'_>, system_spec: &str, c: f64, k_max: u32, samples: u32, seed: u64) -> PyResult<f64> {
    let sys = system(system_spec)?;
    Ok(py.detach(|| ver::empirical_distortion(&sys, c, k_max, samples, seed)))
}

/// Box-counting estimate for the survivor set of the hole `B(center, radius)`.
#[pyfunction]
#[pyo3(signature = (system_spec, center, radius, depth=14))]
fn survivor_dimension<'py>(py: Python<'py>, system_spec: &str, center: f64, radius: f64, depth: u32) -> PyResult<Bound<'py, PyAny>> {
    let sys = system(system_spec)?;
    let hole = MetricBall::from_f64(&[center], radius, 64).map_err(err)?;
    let est = py.detach(|| ver::survivor_box_dimension(&sys, &hole, depth)).map_err(err)?;
    to_py(py, &est)
}

#[pyfunction]
#[pyo3(signature = (system_spec, epsilon=0.1, seed=1, levels=12))]
fn certify_tiling<'py>(py: Python<'py>, system_spec: &str, epsilon: f64, seed: u64, levels: u32) -> PyResult<Bound<'py, PyAny>> {
    let sys = system(system_spec)?;
    let rep = py
        .detach(|| {
            let mut t = TilingFamily::new(sys, epsilon, seed)?;
            certify(&mut t, levels, seed)
        })
        .map_err(err)?;
    to_py(py, &rep)
}

/// Adds the classes and functions to `m`.
pub fn register(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySystem>()?;
    m.add_class::<PyConstants>()?;
    m.add_class::<PyTranscript>()?;
    m.add_function(wrap_pyfunction!(derive_constants, m)?)?;
    m.add_function(wrap_pyfunction!(potential_r_n, m)?)?;
    m.add_function(wrap_pyfunction!(min_a_for_sigma, m)?)?;
    m.add_function(wrap_pyfunction!(avoidance_choose, m)?)?;
    m.add_function(wrap_pyfunction!(empirical_distortion, m)?)?;
    m.add_function(wrap_pyfunction!(survivor_dimension, m)?)?;
    m.add_function(wrap_pyfunction!(certify_tiling, m)?)?;
    Ok(())
}

#[pymodule]
#[pyo3(name = "schmidt_games")]
fn init(m: &Bound<'_, PyModule>) -> PyResult<()> {
    register(m)
}
