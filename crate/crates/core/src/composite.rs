//! Uniformly valid composite solutions and the exact `eps = 0` limit.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::inner::{solve_inner, InnerSolution, Side};
use crate::outer::{solve_outer, OuterSolution};
use crate::problem::TrackingProblem;
use crate::projectors::{projector_set, LinearizingReport};
use crate::quadrature;
use crate::system::ControlAffineSystem;
use crate::trajectory::{DeltaKick, Flavor, TrajectorySolution};

/// Allowed mismatch between layer limits and the outer endpoint values.
pub const MATCHING_TOLERANCE: f64 = 1e-8;

/// Composite `x = X(t) + P X_L((t - t0)/eps) + P X_R((t1 - t)/eps) - P X(t0) - P X(t1)`.
#[derive(Clone, Debug)]
pub struct CompositeSolution {
    /// Samples on the outer grid. `lambda` holds `Q^T Lambda - eps^2 Gamma (x' - R)`.
    pub trajectory: TrajectorySolution,
    pub outer: OuterSolution,
    pub left: InnerSolution,
    pub right: InnerSolution,
    /// `P X(t0)`
    pub overlap_left: DVector<f64>,
    /// `P X(t1)`
    pub overlap_right: DVector<f64>,
    /// Leading-order co-state `Q^T Lambda` on the grid.
    pub outer_costate: Vec<DVector<f64>>,
    pub epsilon: f64,
    system: Arc<ControlAffineSystem>,
    weight: DMatrix<f64>,
}

impl CompositeSolution {
    /// `(x(t), x'(t))` at any `t` in the horizon.
    pub fn eval(&self, t: f64) -> (DVector<f64>, DVector<f64>) {
        let (x_out, dx_out) = self.outer.state_and_derivative_at(t);
        self.assemble(t, x_out, dx_out)
    }

    fn assemble(&self, t: f64, x_out: DVector<f64>, dx_out: DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let eps = self.epsilon;
        let (l, dl) = self.left.eval((t - self.outer.t0()) / eps);
        let (r, dr) = self.right.eval((self.outer.t1() - t) / eps);
        let x = x_out + l + r - &self.overlap_left - &self.overlap_right;
        let dx = dx_out + (dl - dr) / eps;
        (x, dx)
    }

    /// Control `B^g(x) (x' - R(x))` at any `t`.
    pub fn control_at(&self, t: f64) -> Result<DVector<f64>> {
        let (x, dx) = self.eval(t);
        control_from_derivative(&self.system, &self.weight, &x, &dx, t)
    }

    pub fn system(&self) -> &Arc<ControlAffineSystem> {
        &self.system
    }
}

fn control_from_derivative(
    system: &ControlAffineSystem,
    s: &DMatrix<f64>,
    x: &DVector<f64>,
    dx: &DVector<f64>,
    t: f64,
) -> Result<DVector<f64>> {
    let ps = projector_set(system, s, x).map_err(|e| match e {
        Error::SingularGram { .. } => Error::VanishingB { gain: system.input(x).singular_values().min(), at: t },
        other => other,
    })?;
    Ok(&ps.bg * (dx - system.drift(x)))
}

/// Assemble the composite solution from an outer solution and both layers.
pub fn compose(
    problem: &TrackingProblem,
    outer: OuterSolution,
    left: InnerSolution,
    right: InnerSolution,
) -> Result<CompositeSolution> {
    if !(problem.epsilon > 0.0) {
        return Err(Error::InvalidProblem("composite solutions need eps > 0; use the exact eps = 0 path".into()));
    }
    let overlap_left = &outer.p * outer.x_start();
    let overlap_right = &outer.p * outer.x_end();
    let scale = 1.0 + overlap_left.amax().max(overlap_right.amax());
    let residual = (&left.limit_value - &overlap_left).amax().max((&right.limit_value - &overlap_right).amax());
    if residual > MATCHING_TOLERANCE * scale {
        return Err(Error::MatchingFailure { residual });
    }

    let mut sol = CompositeSolution {
        trajectory: TrajectorySolution {
            grid: Vec::new(),
            x: Vec::new(),
            lambda: None,
            u: Vec::new(),
            xdot: None,
            flavor: Flavor::Composite,
            kicks: Vec::new(),
        },
        outer_costate: outer.q_lambda.clone(),
        overlap_left,
        overlap_right,
        epsilon: problem.epsilon,
        system: problem.system.clone(),
        weight: problem.weight.clone(),
        outer,
        left,
        right,
    };

    let grid = sol.outer.grid.clone();
    let eps2 = problem.epsilon * problem.epsilon;
    let (mut xs, mut dxs, mut us, mut lams) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (k, &t) in grid.iter().enumerate() {
        let (x, dx) = sol.assemble(t, sol.outer.x[k].clone(), sol.outer.xdot[k].clone());
        let ps = projector_set(&problem.system, &problem.weight, &x).map_err(|e| match e {
            Error::SingularGram { .. } => {
                Error::VanishingB { gain: problem.system.input(&x).singular_values().min(), at: t }
            }
            other => other,
        })?;
        let defect = &dx - problem.system.drift(&x);
        us.push(&ps.bg * &defect);
        lams.push(&sol.outer_costate[k] - &ps.gamma * defect * eps2);
        xs.push(x);
        dxs.push(dx);
    }
    // Layers are exact at the boundary: pin the endpoints to the data.
    let last = xs.len() - 1;
    xs[0] = problem.x0.clone();
    xs[last] = problem.x1.clone();
    sol.trajectory = TrajectorySolution::new(grid, xs, Some(lams), us, Flavor::Composite)?.with_xdot(dxs)?;
    Ok(sol)
}

/// Outer solution, both layers and their composite on `grid`.
pub fn solve_composite(problem: &TrackingProblem, report: &LinearizingReport, grid: &[f64]) -> Result<CompositeSolution> {
    let outer = solve_outer(problem, report, grid)?;
    let left = solve_inner(problem, &outer, Side::Left)?;
    let right = solve_inner(problem, &outer, Side::Right)?;
    compose(problem, outer, left, right)
}

/// `u = B^g(x) (x' - R(x))` along a trajectory.
///
/// Uses the trajectory's analytic derivative when present, otherwise central
/// differences on the grid (one-sided at the ends).
pub fn control_signal(
    traj: &TrajectorySolution,
    system: &ControlAffineSystem,
    s: &DMatrix<f64>,
) -> Result<Vec<DVector<f64>>> {
    let derivs = match &traj.xdot {
        Some(d) => d.clone(),
        None => grid_derivative(&traj.grid, &traj.x),
    };
    traj.grid
        .iter()
        .zip(traj.x.iter().zip(&derivs))
        .map(|(&t, (x, dx))| control_from_derivative(system, s, x, dx, t))
        .collect()
}

/// Second-order finite-difference derivative on a possibly nonuniform grid.
pub fn grid_derivative(grid: &[f64], values: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let n = grid.len();
    assert!(n >= 3, "need at least three samples");
    let three_point = |i0: usize, at: usize| {
        let (t0, t1, t2) = (grid[i0], grid[i0 + 1], grid[i0 + 2]);
        let t = grid[at];
        let w0 = (2.0 * t - t1 - t2) / ((t0 - t1) * (t0 - t2));
        let w1 = (2.0 * t - t0 - t2) / ((t1 - t0) * (t1 - t2));
        let w2 = (2.0 * t - t0 - t1) / ((t2 - t0) * (t2 - t1));
        &values[i0] * w0 + &values[i0 + 1] * w1 + &values[i0 + 2] * w2
    };
    (0..n)
        .map(|i| match i {
            0 => three_point(0, 0),
            i if i == n - 1 => three_point(n - 3, n - 1),
            i => three_point(i - 1, i),
        })
        .collect()
}

/// Leading-order solution for `eps = 0`: the outer solution in the interior,
/// the prescribed states at the endpoints, and delta kicks that mediate the jumps.
pub fn exact_eps0(problem: &TrackingProblem, report: &LinearizingReport, grid: &[f64]) -> Result<TrajectorySolution> {
    report.require()?;
    let outer = solve_outer(problem, report, grid)?;
    let system = &problem.system;
    let s = &problem.weight;
    let mut u = Vec::with_capacity(grid.len());
    for (k, &t) in grid.iter().enumerate() {
        u.push(control_from_derivative(system, s, &outer.x[k], &outer.xdot[k], t)?);
    }
    let mut x = outer.x.clone();
    let last = x.len() - 1;
    x[0] = problem.x0.clone();
    x[last] = problem.x1.clone();

    let mut kicks = Vec::new();
    for (t_b, x_b, x_out, sign) in [
        (problem.t0, &problem.x0, outer.x_start(), 1.0),
        (problem.t1, &problem.x1, outer.x_end(), -1.0),
    ] {
        let jump = &outer.p * (x_out - x_b);
        if jump.amax() == 0.0 {
            continue;
        }
        let bg = projector_set(system, s, x_b)?.bg;
        let strength = &bg * (x_out - x_b) * (2.0 * sign);
        kicks.push(DeltaKick {
            time: t_b,
            strength: strength.iter().copied().collect(),
            jump: jump.iter().copied().collect(),
        });
    }
    let traj = TrajectorySolution::new(grid.to_vec(), x, Some(outer.q_lambda.clone()), u, Flavor::ExactEps0)?;
    Ok(traj.with_kicks(kicks))
}

/// Control impulse over the left layer window for one `eps`.
#[derive(Clone, Debug)]
pub struct KickImpulse {
    pub epsilon: f64,
    /// `int_{t0}^{t0 + C eps} u dt`
    pub impulse: DVector<f64>,
    /// `2 B^g(x0) (X(t0) - x0)`
    pub strength: DVector<f64>,
}

impl KickImpulse {
    /// Relative deviation of the two-sided impulse `2 * impulse` from the kick strength.
    ///
    /// A delta at the edge of the interval contributes half its weight to a
    /// one-sided integral, so `2 * impulse` is the quantity that converges to `strength`.
    pub fn relative_error(&self) -> f64 {
        let scale = self.strength.amax();
        if scale == 0.0 {
            return (&self.impulse * 2.0).amax();
        }
        (&self.impulse * 2.0 - &self.strength).amax() / scale
    }
}

/// Integrate the composite control across the left layer for each `eps`.
pub fn kick_impulse_check(
    problem: &TrackingProblem,
    report: &LinearizingReport,
    eps_list: &[f64],
    window: f64,
    grid_dt: f64,
) -> Result<Vec<KickImpulse>> {
    let mut out = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let p = problem.with_epsilon(eps)?;
        let grid = crate::trajectory::uniform_grid(p.t0, p.t1, grid_dt);
        let comp = solve_composite(&p, report, &grid)?;
        let a = p.t0;
        let b = p.t0 + window * eps;
        let mut failure = None;
        let impulse = quadrature::integrate_vec(
            |t| match comp.control_at(t) {
                Ok(u) => u,
                Err(e) => {
                    failure.get_or_insert(e);
                    DVector::zeros(p.p())
                }
            },
            a,
            b,
            1e-12,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        let bg = projector_set(&p.system, &p.weight, &p.x0)?.bg;
        let strength = bg * (comp.outer.x_start() - &p.x0) * 2.0;
        out.push(KickImpulse { epsilon: eps, impulse, strength });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_derivative_exact_for_quadratics() {
        let grid = vec![0.0, 0.1, 0.25, 0.5, 0.55, 1.0];
        let vals: Vec<_> = grid.iter().map(|&t| DVector::from_element(1, 3.0 * t * t - t + 2.0)).collect();
        for (t, d) in grid.iter().zip(grid_derivative(&grid, &vals)) {
            assert!((d[0] - (6.0 * t - 1.0)).abs() < 1e-12);
        }
    }
}
