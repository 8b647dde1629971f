mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use optrack_core::desired::pendulum_displacement;
use optrack_core::models::{self, ModelSpec};
use optrack_core::{DesiredTrajectory, Error, Flavor, Preset, Term, TrackingProblem, TrajectorySolution};
use proptest::prelude::*;

fn term() -> impl Strategy<Value = Term> {
    prop_oneof![
        (-3.0f64..3.0).prop_map(|value| Term::Constant { value }),
        (-2.0f64..2.0, 0u32..5).prop_map(|(coefficient, exponent)| Term::Power { coefficient, exponent }),
        (-2.0f64..2.0, 0.0f64..10.0, -3.0f64..3.0).prop_map(|(amplitude, omega, phase)| Term::Cos { amplitude, omega, phase }),
        (-2.0f64..2.0, 0.0f64..10.0, -3.0f64..3.0).prop_map(|(amplitude, omega, phase)| Term::Sin { amplitude, omega, phase }),
    ]
}

proptest! {
    #[test]
    fn derivative_matches_central_differences(
        components in prop::collection::vec(prop::collection::vec(term(), 1..5), 1..4),
        times in prop::collection::vec(-1.0f64..2.0, 100),
    ) {
        let xd = DesiredTrajectory::from_components(components);
        let h = 1e-6;
        for t in times {
            let fd = (xd.value(t + h) - xd.value(t - h)) / (2.0 * h);
            prop_assert!((fd - xd.derivative(t)).amax() <= 1e-6);
        }
    }

    #[test]
    fn desired_round_trips_through_json(components in prop::collection::vec(prop::collection::vec(term(), 0..4), 1..4)) {
        let xd = DesiredTrajectory::from_components(components.clone());
        let text = serde_json::to_string(&xd).unwrap();
        let back: DesiredTrajectory = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back.components().unwrap(), components.as_slice());
    }
}

#[test]
fn desired_examples() {
    let xd = DesiredTrajectory::from_components(vec![pendulum_displacement()]);
    let (x, d) = xd.eval(1.0);
    assert!((x[0] + 1.0).abs() < 1e-12 && (d[0] + 2.0).abs() < 1e-12);
    assert_eq!(DesiredTrajectory::constant(&[1.5, -2.0]).eval(4.0).1, DVector::zeros(2));
    let sq = DesiredTrajectory::from_components(vec![vec![Term::Power { coefficient: 1.0, exponent: 2 }]]);
    assert_eq!(sq.eval(3.0), (DVector::from_element(1, 9.0), DVector::from_element(1, 6.0)));
}

#[test]
fn default_preset_offsets_velocity_from_displacement() {
    let xd = Preset::PendulumFig1.build();
    for t in [0.0, 0.125, 0.5] {
        let x = xd.value(t);
        assert!((x[1] - x[0] - (4.0 * std::f64::consts::PI * t).sin()).abs() < 1e-14);
    }
}

#[test]
fn problem_validation() {
    let model = models::build(&ModelSpec::named("pendulum")).unwrap();
    let make = |s: DMatrix<f64>, eps: f64, t1: f64| {
        TrackingProblem::new(model.system.clone(), s, eps, DesiredTrajectory::zeros(2), 0.0, t1, v(&[0.0, 0.0]), v(&[0.0, 0.0]))
    };
    assert!(make(identity(2), 1e-3, 1.0).is_ok());
    assert!(make(identity(2), 0.0, 1.0).is_ok());
    assert!(matches!(make(identity(2), -1e-3, 1.0), Err(Error::InvalidProblem(_))));
    assert!(matches!(make(identity(2), 1e-3, 0.0), Err(Error::InvalidProblem(_))));
    let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
    assert!(matches!(make(asym, 1e-3, 1.0), Err(Error::InvalidProblem(_))));
    let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
    assert!(matches!(make(indefinite, 1e-3, 1.0), Err(Error::InvalidProblem(_))));
    assert!(matches!(make(identity(3), 1e-3, 1.0), Err(Error::InvalidProblem(_))));
}

#[test]
fn trajectory_validation() {
    let x = vec![v(&[0.0]), v(&[1.0]), v(&[2.0])];
    let u = vec![v(&[0.0]); 3];
    assert!(TrajectorySolution::new(vec![0.0, 0.5, 1.0], x.clone(), None, u.clone(), Flavor::Outer).is_ok());
    let bad_grid = TrajectorySolution::new(vec![0.0, 0.5, 0.5], x.clone(), None, u.clone(), Flavor::Outer);
    assert!(matches!(bad_grid, Err(Error::GridMismatch(_))));
    let short = TrajectorySolution::new(vec![0.0, 0.5, 1.0], x[..2].to_vec(), None, u.clone(), Flavor::Outer);
    assert!(matches!(short, Err(Error::GridMismatch(_))));
    let nan = vec![v(&[0.0]), v(&[f64::NAN]), v(&[2.0])];
    assert!(TrajectorySolution::new(vec![0.0, 0.5, 1.0], nan, None, u, Flavor::Outer).is_err());
}
