mod common;

use std::sync::Arc;

use common::*;
use nalgebra::{DMatrix, DVector};
use optrack_core::desired::pendulum_displacement;
use optrack_core::models::{self, make_realizable_target, ModelSpec};
use optrack_core::outer::*;
use optrack_core::projectors::{latin_hypercube, verify_linearizing};
use optrack_core::trajectory::uniform_grid;
use optrack_core::{ControlAffineSystem, DesiredTrajectory, Error, TrackingProblem};

fn max_diff(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).amax()).fold(0.0, f64::max)
}

#[test]
fn operator_blocks_match_definition() {
    for (p, lo, hi) in [(pendulum_fig1(1e-3), -3.0, 3.0), (fhn_problem(1e-3), -2.5, 2.5), (generic2d_problem(1e-3), -2.0, 2.0)] {
        let report = report_in_box(&p, lo, hi);
        let sys = build_outer_system(&p, &report).unwrap();
        let n = p.n();
        let (q, omega, a, s) = (&report.q, &report.omega, &report.fitted_a, &p.weight);
        let qt = q.transpose();
        let blocks = [
            ((0, 0), -(&qt * a.transpose() * &qt)),
            ((0, n), -(&qt * s * q)),
            ((n, 0), -(q * a * omega * a.transpose() * &qt)),
            ((n, n), q * a * q),
        ];
        for ((r, c), expected) in blocks {
            assert!((sys.m.view((r, c), (n, n)) - expected).amax() < 1e-14);
        }
        // P Omega = Omega, so both forms of the lower-left block agree.
        assert!((sys.lower_left_via_p() - sys.m.view((n, 0), (n, n))).amax() < 1e-12);
    }
}

#[test]
fn pendulum_operator_by_hand() {
    let p = pendulum_fig1(1e-3);
    let sys = build_outer_system(&p, &report_for(&p)).unwrap();
    let mut expected = DMatrix::zeros(4, 4);
    expected[(0, 2)] = -1.0;
    expected[(2, 0)] = -1.0;
    assert!((&sys.m - expected).amax() < 1e-14);
    assert_eq!(sys.reduced_dim(), 1);
}

fn pendulum_with(desired: DesiredTrajectory, x0: &[f64], x1: &[f64]) -> TrackingProblem {
    let model = models::build(&ModelSpec::named("pendulum")).unwrap();
    problem_with(model.system, identity(2), 1e-3, desired, v(x0), v(x1))
}

#[test]
fn zero_data_gives_zero_solution() {
    let p = pendulum_with(DesiredTrajectory::zeros(2), &[0.0, 0.0], &[0.0, 0.0]);
    let r = report_for(&p);
    let sys = build_outer_system(&p, &r).unwrap();
    assert_eq!(sys.forcing(0.3).amax(), 0.0);
    let grid = uniform_grid(0.0, 1.0, 1e-2);
    for sol in [solve_outer(&p, &r, &grid).unwrap(), solve_outer_2d(&p, &grid).unwrap()] {
        assert!(sol.x.iter().chain(&sol.q_lambda).all(|v| v.amax() < 1e-14));
    }
    let po = PlanarOuter::from_problem(&p).unwrap();
    assert_eq!(po.y_init(&p, 1e-10), 0.0);
}

#[test]
fn realizable_target_is_followed_exactly() {
    let model = models::build(&ModelSpec::named("pendulum")).unwrap();
    let desired = make_realizable_target(&model.system, pendulum_displacement()).unwrap();
    let p = TrackingProblem::on_desired(model.system, identity(2), 1e-3, desired, 0.0, 1.0).unwrap();
    let r = report_for(&p);
    let grid = uniform_grid(0.0, 1.0, 1e-3);
    let sol = solve_outer(&p, &r, &grid).unwrap();
    let xd: Vec<_> = grid.iter().map(|&t| p.desired.value(t)).collect();
    assert!(sol.q_lambda.iter().all(|l| l.amax() <= 1e-8));
    assert!(max_diff(&sol.x, &xd) <= 1e-8);
}

fn check_invariants(p: &TrackingProblem, sol: &OuterSolution) {
    let (pm, q) = (&sol.p, &sol.q);
    let omega_at = report_for(p).omega;
    let sys = build_outer_system(p, &report_for(p)).unwrap();
    for (k, &t) in sol.grid.iter().enumerate() {
        assert!((pm.transpose() * &sol.q_lambda[k]).amax() < 1e-12, "P^T Lambda != 0");
        let px_expected = pm * p.desired.value(t) - &omega_at * sys.a_eff.transpose() * &sol.q_lambda[k];
        assert!((&sol.px[k] - px_expected).amax() <= 1e-8);
        assert!((&sol.px[k] + &sol.qx[k] - &sol.x[k]).amax() < 1e-14);
    }
    assert!((q * &p.x0 - &sol.qx[0]).amax() < 1e-9);
    assert!((q * &p.x1 - sol.qx.last().unwrap()).amax() < 1e-9);
}

#[test]
fn solution_invariants() {
    for p in [pendulum_fig1(1e-3), generic2d_problem(1e-3)] {
        let grid = uniform_grid(0.0, 1.0, 1e-2);
        let sol = solve_outer(&p, &report_for(&p), &grid).unwrap();
        check_invariants(&p, &sol);
    }
}

#[test]
fn generic_and_closed_form_paths_agree() {
    let grid = uniform_grid(0.0, 1.0, 1e-3);
    for (p, lo, hi) in [(pendulum_fig1(1e-3), -3.0, 3.0), (fhn_problem(1e-3), -2.5, 2.5), (generic2d_problem(1e-3), -2.0, 2.0)] {
        let generic = solve_outer(&p, &report_in_box(&p, lo, hi), &grid).unwrap();
        let closed = solve_outer_2d(&p, &grid).unwrap();
        assert!(max_diff(&generic.x, &closed.x) <= 1e-8, "{}", p.system.name());
        assert!(max_diff(&generic.q_lambda, &closed.q_lambda) <= 1e-8, "{}", p.system.name());
        let y_init = PlanarOuter::from_problem(&p).unwrap().y_init(&p, 1e-10);
        assert!((generic.x[0][1] - y_init).abs() <= 1e-8);
    }
}

/// Five-point derivative in the interior, three-point near the ends.
fn fd(grid: &[f64], vals: &[DVector<f64>], k: usize) -> DVector<f64> {
    let h = grid[1] - grid[0];
    let n = grid.len();
    if k >= 2 && k + 2 < n {
        (&vals[k - 2] - &vals[k - 1] * 8.0 + &vals[k + 1] * 8.0 - &vals[k + 2]) / (12.0 * h)
    } else if k < 2 {
        (&vals[k] * -3.0 + &vals[k + 1] * 4.0 - &vals[k + 2]) / (2.0 * h)
    } else {
        (&vals[k] * 3.0 - &vals[k - 1] * 4.0 + &vals[k - 2]) / (2.0 * h)
    }
}

#[test]
fn outer_equations_hold_on_a_fine_grid() {
    let p = pendulum_fig1(1e-3);
    let r = report_for(&p);
    let sys = build_outer_system(&p, &r).unwrap();
    let grid = uniform_grid(0.0, 1.0, 1.0 / 999.0);
    assert_eq!(grid.len(), 1000);
    let sol = solve_outer(&p, &r, &grid).unwrap();
    let n = p.n();
    let mut worst: f64 = 0.0;
    for k in 2..grid.len() - 2 {
        let mut z = DVector::zeros(2 * n);
        z.rows_mut(0, n).copy_from(&sol.q_lambda[k]);
        z.rows_mut(n, n).copy_from(&sol.qx[k]);
        let rhs = sys.rhs(grid[k], &z);
        let dl = fd(&grid, &sol.q_lambda, k);
        let dx = fd(&grid, &sol.qx, k);
        worst = worst.max((dl - rhs.rows(0, n)).amax()).max((dx - rhs.rows(n, n)).amax());
        // The full state also obeys the Q-projected dynamics.
        let qdyn = &sol.q * (fd(&grid, &sol.x, k) - p.system.drift(&sol.x[k]));
        worst = worst.max(qdyn.amax());
    }
    assert!(worst <= 1e-7, "outer defect {worst:e}");
}

fn sum_desired(a: &DesiredTrajectory, b: &DesiredTrajectory) -> DesiredTrajectory {
    let (ca, cb) = (a.components().unwrap(), b.components().unwrap());
    DesiredTrajectory::from_components(ca.iter().zip(cb).map(|(x, y)| [x.clone(), y.clone()].concat()).collect())
}

#[test]
fn solution_is_linear_in_the_data() {
    let d1 = DesiredTrajectory::from_components(vec![harmonic(0.7, 5.0, 0.1), harmonic(0.2, 2.0, -0.4)]);
    let d2 = DesiredTrajectory::from_components(vec![harmonic(-0.3, 1.0, 0.6), harmonic(1.1, 7.0, 0.0)]);
    let p1 = pendulum_with(d1.clone(), &[0.2, -0.1], &[1.0, 0.3]);
    let p2 = pendulum_with(d2.clone(), &[-0.6, 0.4], &[0.5, 0.9]);
    let p12 = pendulum_with(sum_desired(&d1, &d2), &[-0.4, 0.3], &[1.5, 1.2]);
    let grid = uniform_grid(0.0, 1.0, 1e-2);
    let r = report_for(&p1);
    let s1 = solve_outer(&p1, &r, &grid).unwrap();
    let s2 = solve_outer(&p2, &r, &grid).unwrap();
    let s12 = solve_outer(&p12, &r, &grid).unwrap();
    let summed: Vec<_> = s1.x.iter().zip(&s2.x).map(|(a, b)| a + b).collect();
    assert!(max_diff(&summed, &s12.x) <= 1e-9);
    let summed: Vec<_> = s1.q_lambda.iter().zip(&s2.q_lambda).map(|(a, b)| a + b).collect();
    assert!(max_diff(&summed, &s12.q_lambda) <= 1e-9);
}

#[test]
fn full_actuation_tracks_desired_exactly() {
    let sys = ControlAffineSystem::new(
        "full",
        2,
        2,
        |s| v(&[s[1], -s[0]]),
        |_| DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]),
        |_| DMatrix::identity(2, 2),
        |_| vec![DMatrix::zeros(2, 2); 2],
    );
    let desired = DesiredTrajectory::from_components(vec![harmonic(1.0, 3.0, 0.0), harmonic(0.5, 1.0, 1.0)]);
    let p = problem_with(Arc::new(sys), identity(2), 1e-3, desired, v(&[2.0, 2.0]), v(&[-1.0, 0.0]));
    let samples = latin_hypercube(&v(&[-1.0, -1.0]), &v(&[1.0, 1.0]), 16, 1);
    let r = verify_linearizing(&p.system, &p.weight, &samples, 1e-9).unwrap();
    let sys = build_outer_system(&p, &r).unwrap();
    assert_eq!(sys.reduced_dim(), 0);
    assert!(sys.m.amax() < 1e-14);
    let grid = uniform_grid(0.0, 1.0, 1e-2);
    let sol = solve_outer(&p, &r, &grid).unwrap();
    let xd: Vec<_> = grid.iter().map(|&t| p.desired.value(t)).collect();
    assert!(max_diff(&sol.x, &xd) < 1e-12);
}

#[test]
fn closed_form_requires_planar_class() {
    let sir = models::build(&ModelSpec::named("sir").with_param("gamma", 0.2)).unwrap();
    let p = problem_with(sir.system, identity(2), 1e-3, DesiredTrajectory::constant(&[0.5, 0.3]), v(&[0.6, 0.2]), v(&[0.4, 0.3]));
    let grid = uniform_grid(0.0, 1.0, 1e-2);
    assert!(matches!(solve_outer_2d(&p, &grid), Err(Error::NotTwoDimClass(_))));

    let full = pendulum_fig1(1e-3);
    let mut p = full.clone();
    p.weight = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 1.0]);
    assert!(matches!(solve_outer_2d(&p, &grid), Err(Error::NotTwoDimClass(_))));
}

#[test]
fn unit_coefficients_give_unit_phi() {
    let p = pendulum_fig1(1e-3);
    let po = PlanarOuter::from_problem(&p).unwrap();
    assert_eq!(po.phi(), 1.0);
}

#[test]
fn failing_report_is_rejected() {
    let p = pendulum_fig1(1e-3);
    let mut r = report_for(&p);
    r.qr_affine = false;
    assert!(matches!(build_outer_system(&p, &r), Err(Error::NotLinearizable(_))));
}
