//! Sampled-data feedback: re-solve the composite problem from the measured
//! state at every sample and apply its control until the next one.

use nalgebra::DVector;
use optrack_core::composite::{solve_composite, CompositeSolution};
use optrack_core::ode::{self, OdeOptions};
use optrack_core::trajectory::{uniform_grid, Flavor};
use optrack_core::{DesiredTrajectory, Error, TrackingProblem, TrajectorySolution};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};

/// Smallest remaining horizon, in units of `eps`, worth a new solve.
pub const MIN_HORIZON_WIDTHS: f64 = 10.0;

#[derive(Clone, Debug)]
pub struct FeedbackResult {
    pub trajectory: TrajectorySolution,
    /// Times at which the control was recomputed.
    pub sample_times: Vec<f64>,
}

/// Simulate the plant `x' = R(x) + B(x) u + d(t)` under sampled composite feedback.
///
/// Samples are taken every `sample_dt` from `t0`. A sample that would leave
/// less than `10 eps` of horizon is skipped and the previous control is kept.
pub fn sampled_feedback(
    cfg: &ExperimentConfig,
    sample_dt: f64,
    disturbance: Option<&DesiredTrajectory>,
) -> Result<FeedbackResult> {
    let (problem, model) = cfg.build_problem()?;
    let report = cfg.certify(&problem, &model)?;
    report.require()?;
    if !(sample_dt >= cfg.time.dt) {
        return Err(CliError::field("sample_dt", format!("must be at least time.dt = {}", cfg.time.dt)));
    }
    if let Some(d) = disturbance {
        if d.dim() != problem.n() {
            return Err(CliError::DimensionMismatch { field: "disturbance".into(), expected: problem.n(), got: d.dim() });
        }
    }
    let eps = problem.epsilon;
    let limit = MIN_HORIZON_WIDTHS * eps;
    if !(eps > 0.0) {
        return Err(CliError::field("cost.epsilon", "feedback needs epsilon > 0"));
    }
    if problem.horizon() < limit {
        return Err(Error::HorizonTooShort { remaining: problem.horizon(), limit }.into());
    }

    let grid = cfg.grid();
    let mut sample_times = vec![problem.t0];
    for k in 1.. {
        let t = problem.t0 + k as f64 * sample_dt;
        if problem.t1 - t < limit {
            break;
        }
        sample_times.push(t);
    }

    let opts = OdeOptions::tol(1e-10, 1e-12);
    let mut xs = Vec::with_capacity(grid.len());
    let mut us = Vec::with_capacity(grid.len());
    let mut x = problem.x0.clone();
    let mut next = 0;
    for (k, &ts) in sample_times.iter().enumerate() {
        let te = sample_times.get(k + 1).copied().unwrap_or(problem.t1);
        let plan = plan_from(&problem, &report, ts, &x, cfg.time.dt)?;
        let mut times = vec![ts];
        let first = next;
        while next < grid.len() && (grid[next] < te || (k + 1 == sample_times.len() && grid[next] <= te)) {
            if grid[next] > ts {
                times.push(grid[next]);
            }
            next += 1;
        }
        if *times.last().unwrap() < te {
            times.push(te);
        }
        let states = simulate(&problem, &plan, disturbance, &times, &x, &opts)?;
        // `times[0] == ts`; grid points strictly after it follow in order.
        let mut j = 1;
        for &t in &grid[first..next] {
            let state = if t <= ts {
                x.clone()
            } else {
                j += 1;
                states[j - 1].clone()
            };
            us.push(plan.control_at(t)?);
            xs.push(state);
        }
        x = states.last().unwrap().clone();
    }
    let trajectory = TrajectorySolution::new(grid, xs, None, us, Flavor::ClosedLoop)?;
    Ok(FeedbackResult { trajectory, sample_times })
}

/// The plant under the composite control computed once at `t0`.
pub fn open_loop(cfg: &ExperimentConfig, disturbance: Option<&DesiredTrajectory>) -> Result<TrajectorySolution> {
    let horizon = cfg.time.t1 - cfg.time.t0;
    Ok(sampled_feedback(cfg, horizon, disturbance)?.trajectory)
}

fn plan_from(
    problem: &TrackingProblem,
    report: &optrack_core::projectors::LinearizingReport,
    t: f64,
    x: &DVector<f64>,
    dt: f64,
) -> Result<CompositeSolution> {
    let restarted = if t == problem.t0 { problem.clone() } else { problem.restarted_at(t, x.clone())? };
    let grid = uniform_grid(t, problem.t1, dt.min(0.5 * (problem.t1 - t)));
    Ok(solve_composite(&restarted, report, &grid)?)
}

fn simulate(
    problem: &TrackingProblem,
    plan: &CompositeSolution,
    disturbance: Option<&DesiredTrajectory>,
    times: &[f64],
    x0: &DVector<f64>,
    opts: &OdeOptions,
) -> Result<Vec<DVector<f64>>> {
    let sys = &problem.system;
    let mut failure = None;
    let rhs = |t: f64, x: &DVector<f64>| {
        let u = match plan.control_at(t) {
            Ok(u) => u,
            Err(e) => {
                failure.get_or_insert(e);
                DVector::zeros(sys.p())
            }
        };
        let mut dx = sys.rhs(x, &u);
        if let Some(d) = disturbance {
            dx += d.value(t);
        }
        dx
    };
    let states = ode::integrate(rhs, times, x0, opts)?;
    if let Some(e) = failure {
        return Err(e.into());
    }
    Ok(states)
}
