//! Python bindings. Every entry point takes the TOML text of a run
//! configuration and releases the GIL while the solvers run.

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use rta_core::config::RunConfig;
use rta_core::fractional_pde::{NonlocalOperator, PdeCoefficients, SpatialGrid};
use rta_core::harness::{derive_seed, ExperimentSpec, Harness, MeanField, EXPERIMENTS};
use rta_core::io::ConvergenceSummary;
use rta_core::kinetic_mc::{estimate_w_n, McOptions};
use rta_core::model::{validate, ValidatedModel};
use rta_core::rng::Parallelism;
use rta_core::stable_limit::{estimate_w_limit, RegularizedLevyConfig};
use rta_core::Error;

create_exception!(rta, RtaError, PyException, "Solver error; args are (code, message, exit_code).");

fn to_py(e: Error) -> PyErr {
    RtaError::new_err((e.code(), e.to_string(), e.exit_code()))
}

fn parse(config: &str) -> PyResult<RunConfig> {
    RunConfig::parse(config, "<config>").map_err(to_py)
}

fn model(cfg: &RunConfig) -> PyResult<ValidatedModel> {
    validate(&cfg.model).map_err(to_py)
}

/// Serialisable value to a Python object through `json.loads`.
fn to_object<'py, T: serde::Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| to_py(Error::from(e)))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn mc(cfg: &RunConfig, samples: Option<usize>, tag: u64) -> McOptions {
    McOptions {
        n_samples: samples.unwrap_or(cfg.simulate.samples),
        seed: derive_seed(cfg.seed, tag, 0),
        par: Parallelism::new(cfg.workers),
    }
}

/// Validated model report as a dict.
#[pyfunction]
fn model_report<'py>(py: Python<'py>, config: &str) -> PyResult<Bound<'py, PyAny>> {
    let cfg = parse(config)?;
    let m = model(&cfg)?;
    to_object(py, &m.report())
}

/// Kinetic Monte-Carlo estimate at (t, y, k): (mean, stderr, samples).
#[pyfunction]
#[pyo3(signature = (config, t, y, k, samples=None, n=None))]
fn estimate_kinetic(
    py: Python<'_>,
    config: &str,
    t: f64,
    y: f64,
    k: f64,
    samples: Option<usize>,
    n: Option<f64>,
) -> PyResult<(f64, f64, u64)> {
    let cfg = parse(config)?;
    let m = model(&cfg)?;
    let w0 = cfg.initial.field(m.temperature());
    let scale = n.unwrap_or(cfg.simulate.n);
    let e = py
        .detach(|| estimate_w_n(t, y, k, &w0, scale, &m, mc(&cfg, samples, 1)))
        .map_err(to_py)?;
    Ok((e.mean, e.std_error, e.n_samples))
}

/// Limit-process estimate at (t, y): (mean, stderr, samples).
#[pyfunction]
#[pyo3(signature = (config, t, y, samples=None, a=None))]
fn estimate_limit(
    py: Python<'_>,
    config: &str,
    t: f64,
    y: f64,
    samples: Option<usize>,
    a: Option<f64>,
) -> PyResult<(f64, f64, u64)> {
    let cfg = parse(config)?;
    let m = model(&cfg)?;
    let field = cfg.initial.field(m.temperature());
    let w0 = MeanField(&field);
    let e = py
        .detach(|| {
            let levy = RegularizedLevyConfig::new(&m.constants, a.unwrap_or(cfg.solver.stable.a))?;
            estimate_w_limit(t, y, &w0, &levy, m.interface(), m.temperature(), mc(&cfg, samples, 2))
        })
        .map_err(to_py)?;
    Ok((e.mean, e.std_error, e.n_samples))
}

/// Limit equation on the configured grid: dict with `nodes`, `times`
/// and `values` (one list per time).
#[pyfunction]
fn solve_pde<'py>(py: Python<'py>, config: &str) -> PyResult<Bound<'py, PyDict>> {
    let cfg = parse(config)?;
    let m = model(&cfg)?;
    let pc = cfg.solver.pde.clone();
    let temp = m.temperature();
    let profile = cfg.initial.clone();
    let traj = py
        .detach(|| {
            let grid = SpatialGrid::new(pc.h, pc.half_width)?;
            let op = NonlocalOperator::assemble(grid, pc.truncation(), PdeCoefficients::from_model(&m), temp)?;
            let w0 = op.grid.sample(|y| profile.k_mean(temp, y));
            op.solve(&w0, pc.t_end, pc.dt)
        })
        .map_err(to_py)?;
    let nodes: Vec<f64> = (0..traj.grid.len()).map(|i| traj.grid.node(i)).collect();
    let d = PyDict::new(py);
    d.set_item("nodes", nodes)?;
    d.set_item("times", traj.times.clone())?;
    d.set_item("values", traj.fields.clone())?;
    Ok(d)
}

/// Run one convergence experiment and return its pass/fail summary.
#[pyfunction]
#[pyo3(signature = (config, name, smoke=false))]
fn run_experiment<'py>(py: Python<'py>, config: &str, name: &str, smoke: bool) -> PyResult<Bound<'py, PyAny>> {
    let cfg = parse(config)?;
    let m = model(&cfg)?;
    let spec = if smoke {
        ExperimentSpec {
            initial: cfg.experiment.initial.clone(),
            ..ExperimentSpec::smoke()
        }
    } else {
        cfg.experiment.clone()
    };
    let table = py
        .detach(|| {
            Harness {
                model: &m,
                spec: &spec,
                seed: cfg.seed,
                par: Parallelism::new(cfg.workers),
            }
            .run(name)
        })
        .map_err(to_py)?;
    to_object(py, &ConvergenceSummary::of(&table))
}

/// Names accepted by `run_experiment`.
#[pyfunction]
fn experiments() -> Vec<&'static str> {
    EXPERIMENTS.to_vec()
}

#[pymodule]
fn rta(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("RtaError", m.py().get_type::<RtaError>())?;
    m.add_function(wrap_pyfunction!(model_report, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_kinetic, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_limit, m)?)?;
    m.add_function(wrap_pyfunction!(solve_pde, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(experiments, m)?)?;
    Ok(())
}
