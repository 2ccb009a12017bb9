//! Python bindings: configs, single-node runs, sweeps, presets, grid runs
//! and efficiency calibration.

use std::path::Path;

use dldo_core::config::{parse_quantity, Config as CoreConfig};
use dldo_core::engine::{self, Metrics as CoreMetrics, RunSetup, SweepParam, Trace as CoreTrace};
use dldo_core::grid::{run_grid, summarize};
use dldo_core::{presets, Error};
use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

create_exception!(dldo, ConfigError, PyValueError, "Invalid configuration or argument.");
create_exception!(dldo, NotSettledError, PyRuntimeError, "The output never settled; args[1] is the tail ripple.");

fn to_py(e: Error) -> PyErr {
    match e {
        Error::NotSettled { tail_ripple } => NotSettledError::new_err((e.to_string(), tail_ripple)),
        Error::Config(_) | Error::InvalidArgument(_) | Error::UndefinedEfficiency | Error::Singular(_) => {
            ConfigError::new_err(e.to_string())
        }
        Error::CorruptedState(_) => PyRuntimeError::new_err(e.to_string()),
    }
}

/// A parsed run configuration.
#[pyclass(frozen, skip_from_py_object, module = "dldo")]
#[derive(Clone)]
struct Config {
    inner: CoreConfig,
}

#[pymethods]
impl Config {
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(Config { inner: CoreConfig::from_toml(text).map_err(to_py)? })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Config { inner: CoreConfig::from_json(text).map_err(to_py)? })
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml()
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner).expect("config serializes")
    }

    /// Copy with `sim.seed` replaced.
    fn with_seed(&self, seed: u64) -> Self {
        let mut inner = self.inner.clone();
        inner.sim.seed = seed;
        Config { inner }
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!("Config(scheme={:?}, t_end={})", self.inner.sim.scheme, self.inner.sim.t_end.0)
    }
}

#[pyclass(frozen, module = "dldo")]
struct Trace {
    inner: CoreTrace,
}

#[pymethods]
impl Trace {
    #[getter]
    fn t(&self) -> Vec<f64> {
        self.inner.samples.iter().map(|s| s.t).collect()
    }

    #[getter]
    fn v_out(&self) -> Vec<f64> {
        self.inner.samples.iter().map(|s| s.v_out).collect()
    }

    #[getter]
    fn n_on(&self) -> Vec<usize> {
        self.inner.samples.iter().map(|s| s.n_on).collect()
    }

    #[getter]
    fn i_load(&self) -> Vec<f64> {
        self.inner.samples.iter().map(|s| s.i_load).collect()
    }

    #[getter]
    fn period_eff(&self) -> Vec<f64> {
        self.inner.samples.iter().map(|s| s.period_eff).collect()
    }

    /// `(q_supply, q_load, c_load * (v_end - v_start))` in coulombs.
    fn charge(&self) -> (f64, f64, f64) {
        let c = &self.inner.charge;
        (c.q_supply, c.q_load, c.c_load * (c.v_end - c.v_start))
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv_string()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

#[pyclass(frozen, get_all, skip_from_py_object, module = "dldo")]
#[derive(Clone)]
struct Metrics {
    ripple_pp: f64,
    settling_time: f64,
    current_efficiency: Option<f64>,
    v_mean_ss: f64,
}

impl From<CoreMetrics> for Metrics {
    fn from(m: CoreMetrics) -> Self {
        Metrics {
            ripple_pp: m.ripple_pp,
            settling_time: m.settling_time,
            current_efficiency: m.current_efficiency,
            v_mean_ss: m.v_mean_ss,
        }
    }
}

#[pymethods]
impl Metrics {
    fn __repr__(&self) -> String {
        format!(
            "Metrics(ripple_pp={:e}, settling_time={:e}, current_efficiency={:?}, v_mean_ss={})",
            self.ripple_pp, self.settling_time, self.current_efficiency, self.v_mean_ss
        )
    }
}

fn setup(config: &Config) -> PyResult<RunSetup> {
    config.inner.run_setup().map_err(to_py)
}

/// Runs the engine and returns the trace.
#[pyfunction]
fn run(config: &Config) -> PyResult<Trace> {
    Ok(Trace { inner: setup(config)?.run().map_err(to_py)? })
}

/// Ripple, settling, efficiency and mean level of a trace produced from `config`.
#[pyfunction]
fn evaluate(trace: &Trace, config: &Config) -> PyResult<Metrics> {
    let s = setup(config)?;
    Ok(engine::evaluate(&trace.inner, &s.sim, &s.controller).map_err(to_py)?.into())
}

/// `run` followed by `evaluate`; raises `NotSettledError` if the output never settles.
#[pyfunction]
fn simulate(config: &Config) -> PyResult<(Trace, Metrics)> {
    let s = setup(config)?;
    let trace = s.run().map_err(to_py)?;
    let m = engine::evaluate(&trace, &s.sim, &s.controller).map_err(to_py)?;
    Ok((Trace { inner: trace }, m.into()))
}

fn sweep_rows(base: &RunSetup, param: SweepParam, values: &[f64]) -> PyResult<Vec<(f64, Option<Metrics>)>> {
    let rows = engine::sweep(base, param, values).map_err(to_py)?;
    Ok(rows.into_iter().map(|r| (r.value, r.metrics.ok().map(Metrics::from))).collect())
}

/// One run per value; rows that never settle carry `None`.
#[pyfunction]
fn sweep(config: &Config, param: &str, values: Vec<f64>) -> PyResult<Vec<(f64, Option<Metrics>)>> {
    let param: SweepParam = param.parse().map_err(to_py)?;
    sweep_rows(&setup(config)?, param, &values)
}

/// Names of the figure presets.
#[pyfunction]
fn preset_names() -> Vec<&'static str> {
    presets::PRESET_NAMES.to_vec()
}

/// Runs a figure preset: `(parameter name, rows)`.
#[pyfunction]
fn run_preset(name: &str) -> PyResult<(String, Vec<(f64, Option<Metrics>)>)> {
    let p = presets::preset(name).map_err(to_py)?;
    Ok((p.param.name().to_string(), sweep_rows(&p.base, p.param, &p.values)?))
}

/// Grid co-simulation of `config`; returns the summary as a dict.
#[pyfunction]
#[pyo3(signature = (config, base_dir = "."))]
fn grid(py: Python<'_>, config: &Config, base_dir: &str) -> PyResult<Py<PyAny>> {
    let (spec, sc) = config.inner.grid_setup(Path::new(base_dir)).map_err(to_py)?;
    let sim = config.inner.sim_config().map_err(to_py)?;
    let summary = py
        .detach(|| {
            let run = run_grid(&spec, &sc, sim.t_end, None)?;
            summarize(&spec, &sc, &run, sim.ripple_window())
        })
        .map_err(to_py)?;
    let text = serde_json::to_string(&summary).expect("summary serializes");
    Ok(PyModule::import(py, "json")?.call_method1("loads", (text,))?.unbind())
}

/// Energy per comparison that yields `target_eta` at one operating point.
#[pyfunction]
fn calibrate_ecmp(target_eta: f64, i_load: f64, f_clk: f64, n_comparators: usize, vdd: f64) -> PyResult<f64> {
    engine::calibrate_ecmp(target_eta, i_load, f_clk, n_comparators, vdd).map_err(to_py)
}

/// Reads `"9n"`, `"2.5 mA"`, `"1e-9"` and the like.
#[pyfunction(name = "parse_quantity")]
fn py_parse_quantity(s: &str) -> PyResult<f64> {
    parse_quantity(s).map_err(to_py)
}

#[pymodule]
fn dldo(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Config>()?;
    m.add_class::<Trace>()?;
    m.add_class::<Metrics>()?;
    m.add("ConfigError", m.py().get_type::<ConfigError>())?;
    m.add("NotSettledError", m.py().get_type::<NotSettledError>())?;
    for f in [
        wrap_pyfunction!(run, m)?,
        wrap_pyfunction!(evaluate, m)?,
        wrap_pyfunction!(simulate, m)?,
        wrap_pyfunction!(sweep, m)?,
        wrap_pyfunction!(preset_names, m)?,
        wrap_pyfunction!(run_preset, m)?,
        wrap_pyfunction!(grid, m)?,
        wrap_pyfunction!(calibrate_ecmp, m)?,
        wrap_pyfunction!(py_parse_quantity, m)?,
    ] {
        m.add_function(f)?;
    }
    Ok(())
}
