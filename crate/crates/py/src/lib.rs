//! Python bindings. Structured artefacts (scenarios, reports, paths, plans)
//! cross the boundary as JSON strings; logs as CSV text.

use std::path::Path;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use slope_energy::calibration::{calibrate, CalibrationConfig};
use slope_energy::path::{energy_of_path as core_energy, superposition_check, PathSpec};
use slope_energy::planner::{LatticeConfig, Node, Planner};
use slope_energy::synth::{generate_telemetry as core_generate, Scenario};
use slope_energy::telemetry::{parse_log, preprocess, write_log, PreprocessConfig, TelemetrySample};
use slope_energy::wrench::{EvalMode, MotionAxis};
use slope_energy::{se2, Error};

fn to_py(e: Error) -> PyErr {
    if e.is_validation() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn json_err(e: serde_json::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_config<T: serde::de::DeserializeOwned + Default>(text: Option<&str>) -> PyResult<T> {
    match text {
        Some(t) => serde_json::from_str(t).map_err(json_err),
        None => Ok(T::default()),
    }
}

fn log_to_csv(samples: &[TelemetrySample]) -> PyResult<String> {
    let mut buf = Vec::new();
    write_log(&mut buf, samples).map_err(to_py)?;
    String::from_utf8(buf).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pyclass(name = "Pose", module = "slope_energy", from_py_object)]
#[derive(Clone, Copy)]
struct PyPose(se2::Pose);

#[pymethods]
impl PyPose {
    #[new]
    fn new(x: f64, y: f64, yaw: f64) -> Self {
        Self(se2::Pose::new(x, y, yaw))
    }

    #[getter]
    fn x(&self) -> f64 {
        self.0.x
    }

    #[getter]
    fn y(&self) -> f64 {
        self.0.y
    }

    #[getter]
    fn yaw(&self) -> f64 {
        self.0.yaw
    }

    fn compose(&self, other: &PyPose) -> PyPose {
        PyPose(self.0.compose(&other.0))
    }

    fn inverse(&self) -> PyPose {
        PyPose(self.0.inverse())
    }

    fn between(&self, other: &PyPose) -> PyPose {
        PyPose(self.0.between(&other.0))
    }

    fn log(&self) -> PyResult<PyTwist> {
        self.0.log().map(PyTwist).map_err(to_py)
    }

    fn distance_to(&self, other: &PyPose) -> f64 {
        self.0.distance_to(&other.0)
    }

    fn __repr__(&self) -> String {
        format!("Pose(x={}, y={}, yaw={})", self.0.x, self.0.y, self.0.yaw)
    }
}

#[pyclass(name = "Twist", module = "slope_energy", from_py_object)]
#[derive(Clone, Copy)]
struct PyTwist(se2::Twist);

#[pymethods]
impl PyTwist {
    #[new]
    fn new(vx: f64, vy: f64, omega: f64) -> Self {
        Self(se2::Twist::new(vx, vy, omega))
    }

    #[getter]
    fn vx(&self) -> f64 {
        self.0.vx
    }

    #[getter]
    fn vy(&self) -> f64 {
        self.0.vy
    }

    #[getter]
    fn omega(&self) -> f64 {
        self.0.omega
    }

    fn __repr__(&self) -> String {
        format!("Twist(vx={}, vy={}, omega={})", self.0.vx, self.0.vy, self.0.omega)
    }
}

#[pyclass(name = "SlopeFrame", module = "slope_energy", from_py_object)]
#[derive(Clone, Copy)]
struct PySlopeFrame(slope_energy::SlopeFrame);

#[pymethods]
impl PySlopeFrame {
    #[new]
    fn new(alpha: f64, gamma: f64) -> PyResult<Self> {
        slope_energy::SlopeFrame::new(alpha, gamma).map(Self).map_err(to_py)
    }

    #[staticmethod]
    fn from_degrees(alpha_deg: f64, gamma_deg: f64) -> PyResult<Self> {
        slope_energy::SlopeFrame::from_degrees(alpha_deg, gamma_deg)
            .map(Self)
            .map_err(to_py)
    }

    #[staticmethod]
    fn from_gravity(gx: f64, gy: f64, gz: f64) -> PyResult<Self> {
        slope_energy::slope_from_gravity([gx, gy, gz]).map(Self).map_err(to_py)
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.0.alpha
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.0.gamma
    }

    fn __repr__(&self) -> String {
        format!("SlopeFrame(alpha={}, gamma={})", self.0.alpha, self.0.gamma)
    }
}

fn parse_axis(axis: &str) -> PyResult<MotionAxis> {
    match axis {
        "forward" => Ok(MotionAxis::Forward),
        "lateral" => Ok(MotionAxis::Lateral),
        "rotation" => Ok(MotionAxis::Rotation),
        other => Err(PyValueError::new_err(format!("unknown axis '{other}'"))),
    }
}

#[pyclass(name = "WrenchModel", module = "slope_energy", from_py_object)]
#[derive(Clone)]
struct PyWrenchModel(slope_energy::WrenchModel);

#[pymethods]
impl PyWrenchModel {
    #[staticmethod]
    fn reference() -> Self {
        Self(slope_energy::WrenchModel::reference())
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        slope_energy::WrenchModel::from_json(text).map(Self).map_err(to_py)
    }

    fn to_json(&self) -> String {
        self.0.to_json()
    }

    #[getter]
    fn eval_mode(&self) -> &'static str {
        match self.0.eval_mode {
            EvalMode::Literal => "literal",
            EvalMode::Dissipative => "dissipative",
        }
    }

    #[setter]
    fn set_eval_mode(&mut self, mode: &str) -> PyResult<()> {
        self.0.eval_mode = match mode {
            "literal" => EvalMode::Literal,
            "dissipative" => EvalMode::Dissipative,
            other => return Err(PyValueError::new_err(format!("unknown eval mode '{other}'"))),
        };
        Ok(())
    }

    #[getter]
    fn idle_power_w(&self) -> f64 {
        self.0.idle_power_w
    }

    /// Returns `(fx, fy, tau)`.
    fn evaluate(&self, frame: &PySlopeFrame) -> (f64, f64, f64) {
        let w = self.0.evaluate(&frame.0);
        (w.fx, w.fy, w.tau)
    }

    fn power(&self, frame: &PySlopeFrame, twist: &PyTwist) -> f64 {
        self.0.power(&frame.0, &twist.0)
    }

    #[pyo3(signature = (frame, axis = "forward"))]
    fn unit_cost(&self, frame: &PySlopeFrame, axis: &str) -> PyResult<f64> {
        Ok(self.0.unit_cost(&frame.0, parse_axis(axis)?))
    }
}

#[pyclass(name = "Terrain", module = "slope_energy", from_py_object)]
#[derive(Clone)]
struct PyTerrain(slope_energy::Terrain);

#[pymethods]
impl PyTerrain {
    #[staticmethod]
    fn plane(alpha: f64, aspect: f64) -> PyResult<Self> {
        slope_energy::Terrain::plane(alpha, aspect).map(Self).map_err(to_py)
    }

    #[staticmethod]
    #[pyo3(signature = (text, base_dir = "."))]
    fn from_json(text: &str, base_dir: &str) -> PyResult<Self> {
        slope_energy::Terrain::from_json(text, Path::new(base_dir))
            .map(Self)
            .map_err(to_py)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        slope_energy::Terrain::load(Path::new(path)).map(Self).map_err(to_py)
    }

    /// Returns `(alpha, uphill_azimuth)`.
    fn local_slope(&self, x: f64, y: f64) -> PyResult<(f64, f64)> {
        self.0.local_slope(x, y).map_err(to_py)
    }

    fn frame_at(&self, pose: &PyPose) -> PyResult<PySlopeFrame> {
        self.0.frame_at(&pose.0).map(PySlopeFrame).map_err(to_py)
    }
}

#[pyfunction]
fn exp(twist: &PyTwist, dt: f64) -> PyPose {
    PyPose(se2::exp(&twist.0, dt))
}

#[pyfunction]
fn log(pose: &PyPose) -> PyResult<PyTwist> {
    se2::log(&pose.0).map(PyTwist).map_err(to_py)
}

/// Energy report of a path, as JSON.
#[pyfunction]
#[pyo3(signature = (path_json, terrain, model, dt = 0.01))]
fn energy_of_path(path_json: &str, terrain: &PyTerrain, model: &PyWrenchModel, dt: f64) -> PyResult<String> {
    let path = PathSpec::from_json(path_json).map_err(to_py)?;
    let report = core_energy(&path, &terrain.0, &model.0, dt).map_err(to_py)?;
    serde_json::to_string(&report).map_err(json_err)
}

/// Relative difference between a path and the sum of its primitives.
#[pyfunction]
#[pyo3(signature = (path_json, terrain, model, dt = 0.01))]
fn superposition(path_json: &str, terrain: &PyTerrain, model: &PyWrenchModel, dt: f64) -> PyResult<f64> {
    let path = PathSpec::from_json(path_json).map_err(to_py)?;
    superposition_check(&path.split(), &path, &terrain.0, &model.0, dt)
        .map(|s| s.relative_difference)
        .map_err(to_py)
}

/// Returns `(telemetry_csv, manifest_json)`; the default grid when no scenario is given.
#[pyfunction]
#[pyo3(signature = (scenario_json = None, seed = None))]
fn generate_telemetry(scenario_json: Option<&str>, seed: Option<u64>) -> PyResult<(String, String)> {
    let mut scenario = match scenario_json {
        Some(t) => Scenario::from_json(t).map_err(to_py)?,
        None => Scenario::default_grid(slope_energy::WrenchModel::reference()),
    };
    if let Some(s) = seed {
        scenario.seed = s;
    }
    let generated = core_generate(&scenario).map_err(to_py)?;
    let manifest = serde_json::to_string(&generated.manifest).map_err(json_err)?;
    Ok((log_to_csv(&generated.samples)?, manifest))
}

/// Returns `(cleaned_csv, report_json)`.
#[pyfunction]
#[pyo3(signature = (csv, config_json = None, model = None))]
fn preprocess_log(csv: &str, config_json: Option<&str>, model: Option<&PyWrenchModel>) -> PyResult<(String, String)> {
    let cfg: PreprocessConfig = parse_config(config_json)?;
    let log = parse_log(csv.as_bytes()).map_err(to_py)?;
    let out = preprocess(&log, &cfg, model.map(|m| &m.0)).map_err(to_py)?;
    let report = serde_json::to_string(&out.report).map_err(json_err)?;
    Ok((log_to_csv(&out.samples)?, report))
}

/// Returns `(model, fit_report_json)`.
#[pyfunction]
#[pyo3(signature = (csv, config_json = None, terrain = None))]
fn calibrate_log(csv: &str, config_json: Option<&str>, terrain: Option<&PyTerrain>) -> PyResult<(PyWrenchModel, String)> {
    let cfg: CalibrationConfig = parse_config(config_json)?;
    let log = parse_log(csv.as_bytes()).map_err(to_py)?;
    let cal = calibrate(&log, &cfg, terrain.map(|t| &t.0)).map_err(to_py)?;
    let report = serde_json::to_string(&cal.report).map_err(json_err)?;
    Ok((PyWrenchModel(cal.model), report))
}

/// Plans from `(col, row, heading)` to `(col, row)`; returns the plan as JSON.
#[pyfunction]
#[pyo3(signature = (terrain, model, start, goal, config_json = None))]
fn plan(
    terrain: &PyTerrain,
    model: &PyWrenchModel,
    start: (usize, usize, usize),
    goal: (usize, usize),
    config_json: Option<&str>,
) -> PyResult<String> {
    let cfg: LatticeConfig = parse_config(config_json)?;
    let planner = Planner::new(&terrain.0, &model.0, cfg).map_err(to_py)?;
    let p = planner
        .plan(Node::new(start.0, start.1, start.2), goal)
        .map_err(to_py)?;
    serde_json::to_string(&p).map_err(json_err)
}

#[pymodule]
#[pyo3(name = "slope_energy")]
fn slope_energy_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPose>()?;
    m.add_class::<PyTwist>()?;
    m.add_class::<PySlopeFrame>()?;
    m.add_class::<PyWrenchModel>()?;
    m.add_class::<PyTerrain>()?;
    m.add_function(wrap_pyfunction!(exp, m)?)?;
    m.add_function(wrap_pyfunction!(log, m)?)?;
    m.add_function(wrap_pyfunction!(energy_of_path, m)?)?;
    m.add_function(wrap_pyfunction!(superposition, m)?)?;
    m.add_function(wrap_pyfunction!(generate_telemetry, m)?)?;
    m.add_function(wrap_pyfunction!(preprocess_log, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate_log, m)?)?;
    m.add_function(wrap_pyfunction!(plan, m)?)?;
    Ok(())
}
