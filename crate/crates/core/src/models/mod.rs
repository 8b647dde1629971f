//! Model zoo and registry.
//!
//! Planar models use the convention `x' = a0 + a1 x + a2 y`,
//! `y' = R(x, y) + b(x, y) u`: `x` is the uncontrolled component.

pub mod expr;

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::desired::{differentiate_component, Component, DesiredTrajectory};
use crate::error::{Error, Result};
use crate::system::{ControlAffineSystem, PlanarForm};
use expr::Var;

pub const REGISTRY: [&str; 4] = ["pendulum", "fhn", "sir", "generic2d"];

/// Model name plus parameters, as given in configuration files.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
    /// `generic2d` only: `drift` and `gain` expressions.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub expressions: BTreeMap<String, String>,
}

impl ModelSpec {
    pub fn named(name: &str) -> Self {
        Self { name: name.to_string(), ..Self::default() }
    }

    pub fn with_param(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    pub fn with_expression(mut self, key: &str, value: &str) -> Self {
        self.expressions.insert(key.to_string(), value.to_string());
        self
    }
}

/// A constructed model with the state box used to certify it.
#[derive(Clone, Debug)]
pub struct Model {
    pub system: Arc<ControlAffineSystem>,
    pub sample_lo: DVector<f64>,
    pub sample_hi: DVector<f64>,
}

/// Build a registry model from its spec.
pub fn build(spec: &ModelSpec) -> Result<Model> {
    let square = |lo: f64, hi: f64| (DVector::from_element(2, lo), DVector::from_element(2, hi));
    let (system, (lo, hi)) = match spec.name.as_str() {
        "pendulum" => {
            check_params(spec, &[])?;
            check_expressions(spec, &[])?;
            (make_pendulum(), square(-3.0, 3.0))
        }
        "fhn" => {
            check_params(spec, &FHN_PARAMS)?;
            check_expressions(spec, &[])?;
            let p = FhnParams {
                a: spec.params["a"],
                b: spec.params["b"],
                phi: spec.params["phi"],
                current: spec.params["current"],
                cubic: spec.params["cubic"],
            };
            (make_fitzhugh_nagumo(p), square(-2.5, 2.5))
        }
        "sir" => {
            check_params(spec, &["gamma"])?;
            check_expressions(spec, &[])?;
            let gamma = spec.params["gamma"];
            if !(gamma >= 0.0) {
                return Err(Error::InvalidProblem(format!("sir: gamma must be >= 0, got {gamma}")));
            }
            (make_sir(gamma), square(0.05, 1.0))
        }
        "generic2d" => {
            for required in ["a0", "a1", "a2"] {
                if !spec.params.contains_key(required) {
                    return Err(missing(spec, required));
                }
            }
            check_expressions(spec, &["drift", "gain"])?;
            let constants: BTreeMap<String, f64> = spec
                .params
                .iter()
                .filter(|(k, _)| !matches!(k.as_str(), "a0" | "a1" | "a2"))
                .map(|(k, v)| (k.clone(), *v))
                .collect();
            let system = make_generic2d(
                spec.params["a0"],
                spec.params["a1"],
                spec.params["a2"],
                &spec.expressions["drift"],
                &spec.expressions["gain"],
                &constants,
            )?;
            (system, square(-2.0, 2.0))
        }
        other => return Err(Error::UnknownModel(other.to_string())),
    };
    Ok(Model { system: Arc::new(system), sample_lo: lo, sample_hi: hi })
}

fn missing(spec: &ModelSpec, param: &str) -> Error {
    Error::MissingParameter { model: spec.name.clone(), param: param.to_string() }
}

fn check_params(spec: &ModelSpec, required: &[&str]) -> Result<()> {
    for r in required {
        if !spec.params.contains_key(*r) {
            return Err(missing(spec, r));
        }
    }
    if let Some(extra) = spec.params.keys().find(|k| !required.contains(&k.as_str())) {
        return Err(Error::InvalidProblem(format!("model '{}' has no parameter '{extra}'", spec.name)));
    }
    Ok(())
}

fn check_expressions(spec: &ModelSpec, required: &[&str]) -> Result<()> {
    for r in required {
        if !spec.expressions.contains_key(*r) {
            return Err(missing(spec, r));
        }
    }
    if let Some(extra) = spec.expressions.keys().find(|k| !required.contains(&k.as_str())) {
        return Err(Error::InvalidProblem(format!("model '{}' has no expression '{extra}'", spec.name)));
    }
    Ok(())
}

fn v2(a: f64, b: f64) -> DVector<f64> {
    DVector::from_vec(vec![a, b])
}

fn col2(a: f64, b: f64) -> DMatrix<f64> {
    DMatrix::from_column_slice(2, 1, &[a, b])
}

/// Damped pendulum `x' = y`, `y' = -y/2 - sin x + (1 + x^2/4) u`.
pub fn make_pendulum() -> ControlAffineSystem {
    let gain = |x: f64| 1.0 + 0.25 * x * x;
    ControlAffineSystem::new(
        "pendulum",
        2,
        1,
        |s| v2(s[1], -0.5 * s[1] - s[0].sin()),
        |s| DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -s[0].cos(), -0.5]),
        move |s| col2(0.0, gain(s[0])),
        |s| vec![col2(0.0, 0.5 * s[0]), col2(0.0, 0.0)],
    )
    .with_affine_part(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]), DVector::zeros(2))
    .with_planar_form(PlanarForm::new(0.0, 0.0, 1.0, move |x, _| gain(x), |_, _| 0.0, false))
}

pub const FHN_PARAMS: [&str; 5] = ["a", "b", "phi", "current", "cubic"];

/// FitzHugh–Nagumo constants: inhibitor `x' = phi (y + a - b x)`, controlled
/// activator `y' = y - cubic y^3 - x + current + u`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FhnParams {
    pub a: f64,
    pub b: f64,
    pub phi: f64,
    pub current: f64,
    pub cubic: f64,
}

impl Default for FhnParams {
    /// The classic excitable regime `a = 0.7, b = 0.8, phi = 0.08` with cubic `1/3`.
    fn default() -> Self {
        Self { a: 0.7, b: 0.8, phi: 0.08, current: 0.5, cubic: 1.0 / 3.0 }
    }
}

impl FhnParams {
    pub fn to_spec(self) -> ModelSpec {
        ModelSpec::named("fhn")
            .with_param("a", self.a)
            .with_param("b", self.b)
            .with_param("phi", self.phi)
            .with_param("current", self.current)
            .with_param("cubic", self.cubic)
    }
}

pub fn make_fitzhugh_nagumo(p: FhnParams) -> ControlAffineSystem {
    let (a0, a1, a2) = (p.phi * p.a, -p.phi * p.b, p.phi);
    ControlAffineSystem::new(
        "fhn",
        2,
        1,
        move |s| v2(a0 + a1 * s[0] + a2 * s[1], s[1] - p.cubic * s[1].powi(3) - s[0] + p.current),
        move |s| DMatrix::from_row_slice(2, 2, &[a1, a2, -1.0, 1.0 - 3.0 * p.cubic * s[1] * s[1]]),
        |_| col2(0.0, 1.0),
        |_| vec![col2(0.0, 0.0), col2(0.0, 0.0)],
    )
    .with_affine_part(DMatrix::from_row_slice(2, 2, &[a1, a2, 0.0, 0.0]), v2(a0, 0.0))
    .with_planar_form(PlanarForm::new(a0, a1, a2, |_, _| 1.0, |_, _| 0.0, false))
    .with_constant_input()
}

/// SIR dynamics on `(S, I)` with the transmission rate as control:
/// `S' = -S I u`, `I' = S I u - gamma I`.
pub fn make_sir(gamma: f64) -> ControlAffineSystem {
    ControlAffineSystem::new(
        "sir",
        2,
        1,
        move |s| v2(0.0, -gamma * s[1]),
        move |_| DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, -gamma]),
        |s| col2(-s[0] * s[1], s[0] * s[1]),
        |s| vec![col2(-s[1], s[1]), col2(-s[0], s[0])],
    )
    .with_affine_part(DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, -gamma]), DVector::zeros(2))
}

/// Planar system with user expressions for the controlled drift `R(x, y)` and
/// gain `b(x, y)`.
pub fn make_generic2d(
    a0: f64,
    a1: f64,
    a2: f64,
    drift: &str,
    gain: &str,
    constants: &BTreeMap<String, f64>,
) -> Result<ControlAffineSystem> {
    if a2 == 0.0 {
        return Err(Error::InvalidProblem("generic2d: a2 must be nonzero".into()));
    }
    let r = Arc::new(expr::parse(drift, constants)?);
    let b = Arc::new(expr::parse(gain, constants)?);
    let rx = Arc::new(r.derivative(Var::X));
    let ry = Arc::new(r.derivative(Var::Y));
    let bx = Arc::new(b.derivative(Var::X));
    let by = Arc::new(b.derivative(Var::Y));
    let constant_input = b.is_constant();
    let gain_depends_on_y = b.depends_on(Var::Y);

    let system = {
        let (r, rx, ry, b, bx, by) = (r.clone(), rx, ry, b.clone(), bx, by.clone());
        let b_in = b.clone();
        ControlAffineSystem::new(
            "generic2d",
            2,
            1,
            move |s| v2(a0 + a1 * s[0] + a2 * s[1], r.eval(s[0], s[1])),
            move |s| DMatrix::from_row_slice(2, 2, &[a1, a2, rx.eval(s[0], s[1]), ry.eval(s[0], s[1])]),
            move |s| col2(0.0, b_in.eval(s[0], s[1])),
            move |s| vec![col2(0.0, bx.eval(s[0], s[1])), col2(0.0, by.eval(s[0], s[1]))],
        )
    };
    let planar = {
        let (b, by) = (b.clone(), by);
        PlanarForm::new(a0, a1, a2, move |x, y| b.eval(x, y), move |x, y| by.eval(x, y), gain_depends_on_y)
    };
    let mut system = system
        .with_affine_part(DMatrix::from_row_slice(2, 2, &[a1, a2, 0.0, 0.0]), v2(a0, 0.0))
        .with_planar_form(planar);
    if constant_input {
        system = system.with_constant_input();
    }
    Ok(system)
}

/// `(x_d, y_d = x_d')` for a mechanical planar system (`x' = y`), which the
/// uncontrolled dynamics follows exactly.
pub fn make_realizable_target(system: &ControlAffineSystem, profile: Component) -> Result<DesiredTrajectory> {
    let planar = system.planar().ok_or(Error::NotMechanicalForm)?;
    if !planar.is_mechanical() {
        return Err(Error::NotMechanicalForm);
    }
    let velocity = differentiate_component(&profile);
    Ok(DesiredTrajectory::from_components(vec![profile, velocity]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::desired::{pendulum_displacement, Term};
    use crate::system::{drift_jacobian_fd_error, input_gradient_fd_error};

    #[test]
    fn pendulum_values() {
        let p = make_pendulum();
        let o = DVector::zeros(2);
        assert_eq!(p.drift(&o), DVector::zeros(2));
        assert_eq!(p.input(&o), col2(0.0, 1.0));
        assert_eq!(p.input(&v2(-1.0, 0.3)), col2(0.0, 1.25));
        assert_eq!(p.drift_jacobian(&o), DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -0.5]));
    }

    #[test]
    fn registry_models_have_consistent_gradients() {
        let specs = vec![
            ModelSpec::named("pendulum"),
            FhnParams::default().to_spec(),
            ModelSpec::named("sir").with_param("gamma", 0.3),
            ModelSpec::named("generic2d")
                .with_param("a0", 0.2)
                .with_param("a1", -0.3)
                .with_param("a2", 1.1)
                .with_expression("drift", "-0.5*y - sin(x) + x*y^2")
                .with_expression("gain", "1 + x^2/4 + 0.1*cos(y)"),
        ];
        for spec in specs {
            let m = build(&spec).unwrap();
            for &(x, y) in &[(0.3, -0.2), (0.7, 0.4), (-1.1, 0.9)] {
                let s = v2(x, y);
                assert!(drift_jacobian_fd_error(&m.system, &s, 1e-7) < 1e-5, "{}", spec.name);
                assert!(input_gradient_fd_error(&m.system, &s, 1e-7) < 1e-5, "{}", spec.name);
            }
        }
    }

    #[test]
    fn registry_errors() {
        assert!(matches!(build(&ModelSpec::named("lorenz")), Err(Error::UnknownModel(_))));
        assert!(matches!(build(&ModelSpec::named("sir")), Err(Error::MissingParameter { .. })));
        assert!(matches!(build(&ModelSpec::named("pendulum").with_param("g", 9.8)), Err(Error::InvalidProblem(_))));
        let bad = ModelSpec::named("generic2d")
            .with_param("a0", 0.0)
            .with_param("a1", 0.0)
            .with_param("a2", 1.0)
            .with_expression("drift", "y +")
            .with_expression("gain", "1");
        assert!(matches!(build(&bad), Err(Error::ExpressionParse { .. })));
    }

    #[test]
    fn generic_reproduces_pendulum() {
        let g = make_generic2d(0.0, 0.0, 1.0, "-0.5*y - sin(x)", "1 + x^2/4", &BTreeMap::new()).unwrap();
        let p = make_pendulum();
        for &(x, y) in &[(0.0, 0.0), (-1.0, 2.0), (2.5, -0.7)] {
            let s = v2(x, y);
            assert!((g.drift(&s) - p.drift(&s)).amax() < 1e-15);
            assert!((g.drift_jacobian(&s) - p.drift_jacobian(&s)).amax() < 1e-15);
            assert!((g.input(&s) - p.input(&s)).amax() < 1e-15);
        }
        assert!(!g.planar().unwrap().gain_depends_on_y());
        assert!(!g.has_constant_input());
    }

    #[test]
    fn realizable_target() {
        let xd = make_realizable_target(&make_pendulum(), pendulum_displacement()).unwrap();
        let t = 0.37;
        let expect = -2.0 * std::f64::consts::PI * (2.0 * std::f64::consts::PI * t).sin() - 2.0;
        assert!((xd.value(t)[1] - expect).abs() < 1e-12);
        let c = make_realizable_target(&make_pendulum(), vec![Term::Constant { value: 0.4 }]).unwrap();
        assert_eq!(c.value(3.0)[1], 0.0);
        let fhn = make_fitzhugh_nagumo(FhnParams::default());
        assert!(matches!(make_realizable_target(&fhn, pendulum_displacement()), Err(Error::NotMechanicalForm)));
    }
}
