//! Repeated composite solves over a list of `eps`.

use optrack_core::composite::{exact_eps0, solve_composite, CompositeSolution};
use optrack_core::oracle::evaluate_cost;
use optrack_core::projectors::LinearizingReport;
use optrack_core::trajectory::layer_refined_grid;
use optrack_core::TrackingProblem;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::experiment::EXCLUDE_WIDTHS;

/// Layer widths (in `eps`) resolved by the refined sweep grid.
const REFINED_WIDTHS: f64 = 40.0;
const POINTS_PER_EPS: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub epsilon: f64,
    /// Distance from `t0` over which the left layer decays by `1/e`; absent
    /// when there is no initial jump.
    pub layer_width: Option<f64>,
    /// Largest control magnitude on the refined grid.
    pub u_peak: f64,
    /// Largest state difference from the `eps = 0` solution away from both ends.
    pub interior_deviation: f64,
    /// Cost of the composite solution.
    pub cost: f64,
}

/// One row per `eps`, computed concurrently; rows keep the order of `eps_list`.
pub fn epsilon_sweep(cfg: &ExperimentConfig, eps_list: &[f64]) -> Result<Vec<SweepRow>> {
    if eps_list.len() < 2 {
        return Err(CliError::field("epsilon", "a sweep needs at least two values"));
    }
    if let Some(bad) = eps_list.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
        return Err(CliError::field("epsilon", format!("sweep values must be positive, got {bad}")));
    }
    let (problem, model) = cfg.build_problem()?;
    let report = cfg.certify(&problem, &model)?;
    report.require()?;
    eps_list.par_iter().map(|&eps| sweep_row(cfg, &problem, &report, eps)).collect()
}

fn sweep_row(cfg: &ExperimentConfig, base: &TrackingProblem, report: &LinearizingReport, eps: f64) -> Result<SweepRow> {
    let problem = base.with_epsilon(eps)?;
    let grid = layer_refined_grid(problem.t0, problem.t1, cfg.time.dt, eps, REFINED_WIDTHS, POINTS_PER_EPS);
    let comp = solve_composite(&problem, report, &grid)?;
    let exact = exact_eps0(&problem, report, &grid)?;
    let u_peak = comp.trajectory.u.iter().map(|u| u.amax()).fold(0.0, f64::max);
    let margin = EXCLUDE_WIDTHS * eps;
    let interior_deviation = grid
        .iter()
        .enumerate()
        .filter(|(_, &t)| t >= problem.t0 + margin && t <= problem.t1 - margin)
        .map(|(k, _)| (&comp.trajectory.x[k] - &exact.x[k]).amax())
        .fold(0.0, f64::max);
    let cost = evaluate_cost(&comp.trajectory, &problem)?.total;
    Ok(SweepRow { epsilon: eps, layer_width: layer_width(&comp), u_peak, interior_deviation, cost })
}

/// Offset from `t0` at which the composite's departure from the outer solution
/// has fallen to `1/e` of its initial size.
pub fn layer_width(comp: &CompositeSolution) -> Option<f64> {
    let t0 = comp.outer.t0();
    let gap = |t: f64| (comp.eval(t).0 - comp.outer.state_at(t)).amax();
    let initial = gap(t0);
    if initial == 0.0 {
        return None;
    }
    let target = initial * (-1.0f64).exp();
    let mut hi = comp.left.tau_max * comp.epsilon;
    if gap(t0 + hi) > target {
        return None;
    }
    let mut lo = 0.0;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if gap(t0 + mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}
