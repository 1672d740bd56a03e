//! Python bindings. Structured results cross the boundary as plain Python
//! dicts and lists built from the JSON form of the Rust types.

use std::collections::BTreeMap;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::de::DeserializeOwned;
use serde::Serialize;

use panelconv::bias;
use panelconv::dgp::{simulate_panel, DgpSpec};
use panelconv::estimators::barro::phi_from_b;
use panelconv::estimators::{self, BarroOptions, EstimatorKind, EstimatorOptions, GroupMap};
use panelconv::montecarlo::{run_montecarlo, MonteCarloConfig};
use panelconv::panel::{self, CsvSchema, PanelDataset};
use panelconv::two_step::{self, FilterSource, ZTable};

fn to_py_err(e: panelconv::Error) -> PyErr {
    match e {
        panelconv::Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn to_python<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Accepts a dict (or JSON string) and deserializes it into `T`.
fn from_python<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = if let Ok(s) = obj.extract::<String>() {
        s
    } else {
        obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?
    };
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn options(obj: Option<&Bound<'_, PyAny>>) -> PyResult<EstimatorOptions> {
    obj.map_or(Ok(EstimatorOptions::default()), from_python)
}

fn kind(name: &str) -> PyResult<EstimatorKind> {
    from_python_str(name)
}

fn from_python_str<T: DeserializeOwned>(name: &str) -> PyResult<T> {
    serde_json::from_value(serde_json::Value::String(name.to_string()))
        .map_err(|e| PyValueError::new_err(format!("unknown value {name:?}: {e}")))
}

/// Long-format country-year panel.
#[pyclass(name = "Panel", module = "panelconv_py", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyPanel {
    inner: PanelDataset,
}

#[pymethods]
impl PyPanel {
    /// Builds a panel from `(country, year)` keys and per-variable columns.
    /// `None` or NaN marks a missing value.
    #[new]
    fn new(countries: Vec<String>, years: Vec<i32>, variables: BTreeMap<String, Vec<Option<f64>>>) -> PyResult<Self> {
        let n = countries.len();
        if years.len() != n || variables.values().any(|v| v.len() != n) {
            return Err(PyValueError::new_err("countries, years and every variable need equal lengths"));
        }
        let cells = variables.iter().flat_map(|(name, col)| {
            countries
                .iter()
                .zip(&years)
                .zip(col)
                .map(move |((c, y), v)| (c.clone(), *y, name.clone(), v.filter(|x| !x.is_nan())))
        });
        PanelDataset::from_cells(cells.collect::<Vec<_>>())
            .map(|inner| PyPanel { inner })
            .map_err(to_py_err)
    }

    #[staticmethod]
    #[pyo3(signature = (path, country_column = "country", year_column = "year"))]
    fn from_csv(path: &str, country_column: &str, year_column: &str) -> PyResult<Self> {
        let schema = CsvSchema {
            country_column: country_column.into(),
            year_column: year_column.into(),
        };
        panel::load_long_csv(path, &schema)
            .map(|inner| PyPanel { inner })
            .map_err(to_py_err)
    }

    fn to_csv(&self, path: &str) -> PyResult<()> {
        panel::save_long_csv(&self.inner, path).map_err(to_py_err)
    }

    #[getter]
    fn countries(&self) -> Vec<String> {
        self.inner.countries().to_vec()
    }

    #[getter]
    fn years(&self) -> Vec<i32> {
        self.inner.years().collect()
    }

    #[getter]
    fn variables(&self) -> Vec<String> {
        self.inner.variable_names().map(String::from).collect()
    }

    /// One country's series over the panel years (NaN where missing).
    fn series(&self, variable: &str, country: &str) -> PyResult<Vec<f64>> {
        let idx = self
            .inner
            .country_index(country)
            .ok_or_else(|| PyValueError::new_err(format!("unknown country {country}")))?;
        self.inner.series(variable, idx).map(<[f64]>::to_vec).map_err(to_py_err)
    }

    fn __len__(&self) -> usize {
        self.inner.n_countries()
    }

    fn __repr__(&self) -> String {
        format!(
            "Panel(countries={}, years={}..={}, variables={:?})",
            self.inner.n_countries(),
            self.inner.first_year(),
            self.inner.last_year(),
            self.variables()
        )
    }
}

/// Estimate an error-correction panel regression.
///
/// `kind` is one of "twfe", "fe-gte", "dccep", "dccemg"; `options` a dict
/// with keys such as `lags`, `covariates`, `se_kind`.
#[pyfunction]
#[pyo3(signature = (kind_name, panel, outcome, options = None, jackknife = false, groups = None))]
fn estimate<'py>(
    py: Python<'py>,
    kind_name: &str,
    panel: &PyPanel,
    outcome: &str,
    options: Option<&Bound<'py, PyAny>>,
    jackknife: bool,
    groups: Option<GroupMap>,
) -> PyResult<Bound<'py, PyAny>> {
    let k = kind(kind_name)?;
    let opts = self::options(options)?;
    let report = py
        .detach(|| {
            if jackknife {
                estimators::half_panel_jackknife(k, &panel.inner, outcome, &opts, groups.as_ref())
            } else {
                estimators::estimate(k, &panel.inner, outcome, &opts, groups.as_ref())
            }
        })
        .map_err(to_py_err)?;
    to_python(py, &report)
}

/// Cross-country growth regression over `[year0, year1]`.
#[pyfunction]
#[pyo3(signature = (panel, outcome, year0, year1, options = None))]
fn barro<'py>(
    py: Python<'py>,
    panel: &PyPanel,
    outcome: &str,
    year0: i32,
    year1: i32,
    options: Option<&Bound<'py, PyAny>>,
) -> PyResult<Bound<'py, PyAny>> {
    let mut opts: BarroOptions = match options {
        Some(o) => {
            let d = PyDict::new(py);
            d.set_item("year0", year0)?;
            d.set_item("year1", year1)?;
            d.update(o.cast::<PyDict>()?.as_mapping())?;
            from_python(d.as_any())?
        }
        None => BarroOptions::new(year0, year1),
    };
    opts.year0 = year0;
    opts.year1 = year1;
    let r = estimators::barro_estimate(&panel.inner, outcome, &opts).map_err(to_py_err)?;
    to_python(py, &r)
}

/// Simulate a panel; returns `(Panel, truth)`.
#[pyfunction]
fn simulate<'py>(py: Python<'py>, spec: &Bound<'py, PyAny>) -> PyResult<(PyPanel, Bound<'py, PyAny>)> {
    let spec: DgpSpec = from_python(spec)?;
    let (inner, truth) = py.detach(|| simulate_panel(&spec)).map_err(to_py_err)?;
    Ok((PyPanel { inner }, to_python(py, &truth)?))
}

/// Monte Carlo run; `config` has keys `dgp`, `replications`, `estimators`.
#[pyfunction]
#[pyo3(signature = (config, seed, jobs = None))]
fn montecarlo<'py>(
    py: Python<'py>,
    config: &Bound<'py, PyAny>,
    seed: u64,
    jobs: Option<usize>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg: MonteCarloConfig = from_python(config)?;
    let out = py.detach(|| run_montecarlo(&cfg, seed, jobs)).map_err(to_py_err)?;
    to_python(py, &out)
}

/// Pooled first stage, filtered intercepts and the regression of the
/// intercepts on `z` (a dict country -> list of regressors).
#[pyfunction]
#[pyo3(signature = (panel, outcome, z, z_names, source = "dccep-jackknife", options = None))]
fn two_step_estimate<'py>(
    py: Python<'py>,
    panel: &PyPanel,
    outcome: &str,
    z: BTreeMap<String, Vec<f64>>,
    z_names: Vec<String>,
    source: &str,
    options: Option<&Bound<'py, PyAny>>,
) -> PyResult<Bound<'py, PyAny>> {
    if z.values().any(|r| r.len() != z_names.len()) {
        return Err(PyValueError::new_err("every z row needs one value per name"));
    }
    let source: FilterSource = from_python_str(source)?;
    let opts = self::options(options)?;
    let table = ZTable { names: z_names, rows: z };
    let (report, fi, tie) = py
        .detach(|| two_step::two_step(&panel.inner, outcome, &opts, source, &table))
        .map_err(to_py_err)?;
    let d = PyDict::new(py);
    d.set_item("first_stage", to_python(py, &report)?)?;
    d.set_item("intercepts", to_python(py, &fi)?)?;
    d.set_item("second_stage", to_python(py, &tie)?)?;
    Ok(d.into_any())
}

#[pyfunction]
fn barro_bias<'py>(py: Python<'py>, rho: f64, t: usize, ratio: f64) -> PyResult<Bound<'py, PyAny>> {
    to_python(py, &bias::barro_asymptotic_bias(rho, t, ratio).map_err(to_py_err)?)
}

#[pyfunction]
fn twfe_stationary_bias<'py>(
    py: Python<'py>,
    rho: f64,
    kappa2: f64,
    a: f64,
    sigma_f2: f64,
) -> PyResult<Bound<'py, PyAny>> {
    to_python(py, &bias::twfe_bias_stationary_factor(rho, kappa2, a, sigma_f2).map_err(to_py_err)?)
}

#[pyfunction]
fn nickell_bias<'py>(py: Python<'py>, rho: f64, t: usize) -> PyResult<Bound<'py, PyAny>> {
    to_python(py, &bias::nickell_bias_approx(rho, t).map_err(to_py_err)?)
}

#[pyfunction]
fn kappa_squared(sigma_gamma2: f64, sigma_u2: f64, rho: f64) -> f64 {
    bias::kappa_squared(sigma_gamma2, sigma_u2, rho)
}

/// `phi = 1 - (1 + b)^(1/T)`.
#[pyfunction]
fn phi_from_growth_slope(b: f64, horizon: usize) -> PyResult<f64> {
    phi_from_b(b, horizon).map_err(to_py_err)
}

#[pymodule]
fn panelconv_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPanel>()?;
    m.add_function(wrap_pyfunction!(estimate, m)?)?;
    m.add_function(wrap_pyfunction!(barro, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(montecarlo, m)?)?;
    m.add_function(wrap_pyfunction!(two_step_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(barro_bias, m)?)?;
    m.add_function(wrap_pyfunction!(twfe_stationary_bias, m)?)?;
    m.add_function(wrap_pyfunction!(nickell_bias, m)?)?;
    m.add_function(wrap_pyfunction!(kappa_squared, m)?)?;
    m.add_function(wrap_pyfunction!(phi_from_growth_slope, m)?)?;
    Ok(())
}
