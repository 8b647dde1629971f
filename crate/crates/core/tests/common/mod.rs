#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use optrack_core::models::{self, Model, ModelSpec};
use optrack_core::projectors::{latin_hypercube, verify_linearizing, LinearizingReport, DEFAULT_SAMPLES, DEFAULT_TOLERANCE};
use optrack_core::{DesiredTrajectory, Preset, TrackingProblem};

pub fn identity(n: usize) -> DMatrix<f64> {
    DMatrix::identity(n, n)
}

pub fn v(xs: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(xs)
}

/// Pendulum experiment: x0 = (-1, -1), x1 = (-1, -1) on [0, 1].
pub fn pendulum_fig1(eps: f64) -> TrackingProblem {
    let model = models::build(&ModelSpec::named("pendulum")).unwrap();
    TrackingProblem::new(
        model.system,
        identity(2),
        eps,
        Preset::PendulumFig1.build(),
        0.0,
        1.0,
        v(&[-1.0, -1.0]),
        v(&[-1.0, -1.0]),
    )
    .unwrap()
}

pub fn certify(model: &Model, s: &DMatrix<f64>) -> LinearizingReport {
    let samples = latin_hypercube(&model.sample_lo, &model.sample_hi, DEFAULT_SAMPLES, 11);
    verify_linearizing(&model.system, s, &samples, DEFAULT_TOLERANCE).unwrap()
}

pub fn report_for(problem: &TrackingProblem) -> LinearizingReport {
    let lo = DVector::from_element(problem.n(), -3.0);
    let hi = DVector::from_element(problem.n(), 3.0);
    let samples = latin_hypercube(&lo, &hi, DEFAULT_SAMPLES, 11);
    verify_linearizing(&problem.system, &problem.weight, &samples, DEFAULT_TOLERANCE).unwrap()
}

pub fn problem_with(
    system: Arc<optrack_core::ControlAffineSystem>,
    s: DMatrix<f64>,
    eps: f64,
    desired: DesiredTrajectory,
    x0: DVector<f64>,
    x1: DVector<f64>,
) -> TrackingProblem {
    TrackingProblem::new(system, s, eps, desired, 0.0, 1.0, x0, x1).unwrap()
}

pub fn harmonic(amplitude: f64, omega: f64, offset: f64) -> Vec<optrack_core::Term> {
    use optrack_core::Term;
    vec![Term::Constant { value: offset }, Term::Sin { amplitude, omega, phase: 0.0 }]
}

/// FitzHugh-Nagumo with default constants, tracking a slow oscillation.
pub fn fhn_problem(eps: f64) -> TrackingProblem {
    let model = models::build(&models::FhnParams::default().to_spec()).unwrap();
    let desired = DesiredTrajectory::from_components(vec![
        harmonic(0.5, 2.0 * std::f64::consts::PI, 0.2),
        harmonic(1.0, std::f64::consts::PI, -0.3),
    ]);
    problem_with(model.system, DMatrix::from_diagonal(&v(&[1.0, 2.0])), eps, desired, v(&[0.0, 0.0]), v(&[0.4, 0.5]))
}

pub fn generic2d_spec() -> ModelSpec {
    ModelSpec::named("generic2d")
        .with_param("a0", 0.2)
        .with_param("a1", -0.3)
        .with_param("a2", 1.1)
        .with_param("k", 0.5)
        .with_expression("drift", "-k*y - sin(x)")
        .with_expression("gain", "1 + x^2/4")
}

pub fn generic2d_problem(eps: f64) -> TrackingProblem {
    let model = models::build(&generic2d_spec()).unwrap();
    let desired = DesiredTrajectory::from_components(vec![
        harmonic(0.8, 2.0 * std::f64::consts::PI, -0.5),
        harmonic(0.6, 3.0, 0.1),
    ]);
    problem_with(model.system, DMatrix::from_diagonal(&v(&[0.5, 1.5])), eps, desired, v(&[-0.5, 0.4]), v(&[0.3, -0.2]))
}

/// Linearizing report certified on the model's own sample box.
pub fn report_in_box(problem: &TrackingProblem, lo: f64, hi: f64) -> LinearizingReport {
    let lo = DVector::from_element(problem.n(), lo);
    let hi = DVector::from_element(problem.n(), hi);
    let samples = latin_hypercube(&lo, &hi, DEFAULT_SAMPLES, 11);
    verify_linearizing(&problem.system, &problem.weight, &samples, DEFAULT_TOLERANCE).unwrap()
}
