//! Experiment configuration files (JSON, `"schema": 1`).

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use optrack_core::desired::Component;
use optrack_core::models::{self, make_realizable_target, Model, ModelSpec};
use optrack_core::projectors::{latin_hypercube, verify_linearizing, LinearizingReport, DEFAULT_SAMPLES, DEFAULT_TOLERANCE};
use optrack_core::trajectory::uniform_grid;
use optrack_core::{DesiredTrajectory, Preset, TrackingProblem};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    pub model: ModelSpec,
    pub cost: CostConfig,
    pub desired: DesiredConfig,
    pub time: TimeConfig,
    pub boundary: BoundaryConfig,
    #[serde(default)]
    pub method: Method,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub linearizing: LinearizingConfig,
    #[serde(default)]
    pub oracle: OracleConfig,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    pub weight: Weight,
    pub epsilon: f64,
}

/// `S` as its diagonal or as full rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Weight {
    Diagonal(Vec<f64>),
    Full(Vec<Vec<f64>>),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DesiredConfig {
    /// One term list per state component.
    Components(Vec<Component>),
    /// Position profile of a mechanical planar model; the velocity is its derivative.
    RealizableFrom(Component),
    Preset(Preset),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub t0: f64,
    pub t1: f64,
    pub dt: f64,
}

/// Missing boundary states are taken from the desired trajectory when
/// `from_desired` is set.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x1: Option<Vec<f64>>,
    #[serde(default)]
    pub from_desired: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Outer,
    #[default]
    Composite,
    Exact0,
    Oracle,
    Compare,
}

impl Method {
    pub fn needs_positive_epsilon(self) -> bool {
        matches!(self, Method::Composite | Method::Oracle | Method::Compare)
    }
}

impl std::str::FromStr for Method {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| CliError::field("method", format!("unknown method '{s}' (outer, composite, exact0, oracle, compare)")))
    }
}

/// Sample box and tolerance for the linearizing check. The box defaults to the
/// model's own.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearizingConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi: Option<Vec<f64>>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_samples() -> usize {
    DEFAULT_SAMPLES
}

fn default_seed() -> u64 {
    11
}

fn default_tolerance() -> f64 {
    DEFAULT_TOLERANCE
}

impl Default for LinearizingConfig {
    fn default() -> Self {
        Self { lo: None, hi: None, samples: DEFAULT_SAMPLES, seed: default_seed(), tolerance: DEFAULT_TOLERANCE }
    }
}

/// Overrides for the direct solver; unset fields use its defaults.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segments: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integrator_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub newton_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_newton_iters: Option<usize>,
    /// Start Newton from the composite solution when one exists.
    #[serde(default = "default_true")]
    pub warm_start: bool,
}

fn default_true() -> bool {
    true
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { segments: None, integrator_tol: None, newton_tol: None, max_newton_iters: None, warm_start: true }
    }
}

/// Read, parse and validate a configuration file.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = serde_json::from_str(text)
        .map_err(|e| CliError::Parse { line: e.line(), column: e.column(), message: e.to_string() })?;
    cfg.validate()?;
    Ok(cfg)
}

fn check_dim(field: &str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(CliError::DimensionMismatch { field: field.to_string(), expected, got })
    }
}

impl ExperimentConfig {
    /// All checks that do not need a solve.
    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(CliError::field("schema", format!("unsupported schema {}, expected {SCHEMA_VERSION}", self.schema)));
        }
        let model = self.build_model()?;
        let n = model.system.n();
        let t = &self.time;
        if !(t.t0.is_finite() && t.t1.is_finite() && t.t1 > t.t0) {
            return Err(CliError::field("time", format!("need t1 > t0, got [{}, {}]", t.t0, t.t1)));
        }
        if !(t.dt > 0.0 && t.dt.is_finite()) {
            return Err(CliError::field("time.dt", "must be positive"));
        }
        if t.dt > t.t1 - t.t0 {
            return Err(CliError::field("time.dt", "exceeds the horizon"));
        }
        let eps = self.cost.epsilon;
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(CliError::field("cost.epsilon", "must be finite and >= 0"));
        }
        if eps == 0.0 && self.method.needs_positive_epsilon() {
            return Err(CliError::field(
                "cost.epsilon",
                "epsilon = 0 has no composite or direct solution; use method \"exact0\"",
            ));
        }
        match &self.cost.weight {
            Weight::Diagonal(d) => check_dim("cost.weight", n, d.len())?,
            Weight::Full(rows) => {
                check_dim("cost.weight", n, rows.len())?;
                for (i, row) in rows.iter().enumerate() {
                    check_dim(&format!("cost.weight[{i}]"), n, row.len())?;
                }
            }
        }
        match &self.desired {
            DesiredConfig::Components(c) => check_dim("desired.components", n, c.len())?,
            DesiredConfig::RealizableFrom(_) => {}
            DesiredConfig::Preset(_) => check_dim("desired.preset", n, 2)?,
        }
        for (name, value) in [("boundary.x0", &self.boundary.x0), ("boundary.x1", &self.boundary.x1)] {
            match value {
                Some(v) => check_dim(name, n, v.len())?,
                None if !self.boundary.from_desired => {
                    return Err(CliError::field(name, "missing; give the state or set boundary.from_desired"));
                }
                None => {}
            }
        }
        let lin = &self.linearizing;
        for (name, value) in [("linearizing.lo", &lin.lo), ("linearizing.hi", &lin.hi)] {
            if let Some(v) = value {
                check_dim(name, n, v.len())?;
            }
        }
        if !(lin.tolerance > 0.0) {
            return Err(CliError::field("linearizing.tolerance", "must be positive"));
        }
        // Remaining checks (weight definiteness, realizable form) need the built objects.
        self.build_problem()?;
        Ok(())
    }

    pub fn build_model(&self) -> Result<Model> {
        models::build(&self.model).map_err(|e| CliError::field("model", e.to_string()))
    }

    pub fn weight(&self, n: usize) -> DMatrix<f64> {
        match &self.cost.weight {
            Weight::Diagonal(d) => DMatrix::from_diagonal(&DVector::from_column_slice(d)),
            Weight::Full(rows) => DMatrix::from_fn(n, n, |i, j| rows[i][j]),
        }
    }

    pub fn desired(&self, model: &Model) -> Result<DesiredTrajectory> {
        Ok(match &self.desired {
            DesiredConfig::Components(c) => DesiredTrajectory::from_components(c.clone()),
            DesiredConfig::RealizableFrom(profile) => make_realizable_target(&model.system, profile.clone())
                .map_err(|e| CliError::field("desired.realizable_from", e.to_string()))?,
            DesiredConfig::Preset(p) => p.build(),
        })
    }

    pub fn build_problem(&self) -> Result<(TrackingProblem, Model)> {
        let model = self.build_model()?;
        let n = model.system.n();
        let desired = self.desired(&model)?;
        check_dim("desired", n, desired.dim())?;
        let t = &self.time;
        let pick = |v: &Option<Vec<f64>>, at: f64| match v {
            Some(v) => DVector::from_column_slice(v),
            None => desired.value(at),
        };
        let x0 = pick(&self.boundary.x0, t.t0);
        let x1 = pick(&self.boundary.x1, t.t1);
        let problem = TrackingProblem::new(
            model.system.clone(),
            self.weight(n),
            self.cost.epsilon,
            desired,
            t.t0,
            t.t1,
            x0,
            x1,
        )
        .map_err(|e| CliError::field("cost", e.to_string()))?;
        Ok((problem, model))
    }

    pub fn grid(&self) -> Vec<f64> {
        uniform_grid(self.time.t0, self.time.t1, self.time.dt)
    }

    /// Linearizing report on the configured sample box.
    pub fn certify(&self, problem: &TrackingProblem, model: &Model) -> Result<LinearizingReport> {
        let lin = &self.linearizing;
        let lo = lin.lo.as_deref().map(DVector::from_column_slice).unwrap_or_else(|| model.sample_lo.clone());
        let hi = lin.hi.as_deref().map(DVector::from_column_slice).unwrap_or_else(|| model.sample_hi.clone());
        let samples = latin_hypercube(&lo, &hi, lin.samples, lin.seed);
        Ok(verify_linearizing(&problem.system, &problem.weight, &samples, lin.tolerance)?)
    }
}
