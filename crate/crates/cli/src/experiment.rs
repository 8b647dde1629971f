//! Method dispatch for a single configuration.

use std::collections::BTreeMap;

use optrack_core::composite::{control_signal, exact_eps0, solve_composite, CompositeSolution};
use optrack_core::oracle::{compare_solutions, evaluate_cost, solve_tpbvp, Comparison, InitialGuess, ShootingConfig};
use optrack_core::outer::solve_outer;
use optrack_core::projectors::LinearizingReport;
use optrack_core::trajectory::{layer_refined_grid, Flavor};
use optrack_core::{TrackingProblem, TrajectorySolution};

use crate::config::{ExperimentConfig, Method, OracleConfig};
use crate::error::Result;

/// Widths (in `eps`) excluded at each end when comparing interiors.
pub const EXCLUDE_WIDTHS: f64 = 10.0;

/// A trajectory to be written as `<name>.csv`.
#[derive(Clone, Debug)]
pub struct Artifact {
    pub name: String,
    pub trajectory: TrajectorySolution,
}

/// Everything one run produces.
#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub method: Method,
    pub report: LinearizingReport,
    pub artifacts: Vec<Artifact>,
    pub metrics: BTreeMap<String, f64>,
}

impl ExperimentOutput {
    pub fn artifact(&self, name: &str) -> Option<&TrajectorySolution> {
        self.artifacts.iter().find(|a| a.name == name).map(|a| &a.trajectory)
    }
}

/// Certify the linearizing assumption, then run the configured method.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let (problem, model) = cfg.build_problem()?;
    let report = cfg.certify(&problem, &model)?;
    report.require()?;
    let grid = cfg.grid();
    let mut metrics = BTreeMap::new();
    let mut artifacts = Vec::new();
    let mut push = |name: &str, trajectory: TrajectorySolution| artifacts.push(Artifact { name: name.into(), trajectory });

    match cfg.method {
        Method::Outer => {
            let traj = outer_trajectory(&problem, &report, &grid)?;
            record_cost(&mut metrics, "", &traj, &problem)?;
            push("trajectory", traj);
        }
        Method::Composite => {
            let comp = solve_composite(&problem, &report, &grid)?;
            record_composite(&mut metrics, &comp);
            record_composite_cost(&mut metrics, "", &problem, &report, &grid)?;
            push("trajectory", comp.trajectory);
        }
        Method::Exact0 => {
            let traj = exact_eps0(&problem, &report, &grid)?;
            metrics.insert("kicks".into(), traj.kicks.len() as f64);
            record_cost(&mut metrics, "", &traj, &problem)?;
            push("trajectory", traj);
        }
        Method::Oracle => {
            let (traj, oracle_metrics) = run_oracle(&problem, &report, &grid, &cfg.oracle)?;
            metrics.extend(oracle_metrics);
            record_cost(&mut metrics, "", &traj, &problem)?;
            push("trajectory", traj);
        }
        Method::Compare => {
            let comp = solve_composite(&problem, &report, &grid)?;
            let (oracle, oracle_metrics) = run_oracle(&problem, &report, &grid, &cfg.oracle)?;
            let cmp = compare_solutions(&oracle, &comp.trajectory, EXCLUDE_WIDTHS * problem.epsilon)?;
            record_composite(&mut metrics, &comp);
            record_composite_cost(&mut metrics, "composite_", &problem, &report, &grid)?;
            record_cost(&mut metrics, "oracle_", &oracle, &problem)?;
            metrics.extend(oracle_metrics);
            record_comparison(&mut metrics, &cmp, &oracle, &comp.trajectory);
            push("trajectory", comp.trajectory);
            push("oracle", oracle);
        }
    }
    Ok(ExperimentOutput { method: cfg.method, report, artifacts, metrics })
}

/// Outer solution as a trajectory with `u = B^g (X' - R(X))`.
pub fn outer_trajectory(problem: &TrackingProblem, report: &LinearizingReport, grid: &[f64]) -> Result<TrajectorySolution> {
    let outer = solve_outer(problem, report, grid)?;
    // Placeholder control; only the states and their derivatives feed the real one.
    let shell = TrajectorySolution::new(
        grid.to_vec(),
        outer.x.clone(),
        None,
        vec![nalgebra::DVector::zeros(problem.p()); grid.len()],
        Flavor::Outer,
    )?
    .with_xdot(outer.xdot.clone())?;
    let u = control_signal(&shell, &problem.system, &problem.weight)?;
    Ok(TrajectorySolution::new(grid.to_vec(), outer.x, Some(outer.q_lambda), u, Flavor::Outer)?.with_xdot(outer.xdot)?)
}

/// Direct solution, warm-started from the composite when one is available.
pub fn run_oracle(
    problem: &TrackingProblem,
    report: &LinearizingReport,
    grid: &[f64],
    opts: &OracleConfig,
) -> Result<(TrajectorySolution, BTreeMap<String, f64>)> {
    let mut cfg = ShootingConfig::for_problem(problem);
    if let Some(s) = opts.segments {
        cfg.segments = s;
    }
    if let Some(t) = opts.integrator_tol {
        cfg.integrator_tol = t;
    }
    if let Some(t) = opts.newton_tol {
        cfg.newton_tol = t;
    }
    if let Some(m) = opts.max_newton_iters {
        cfg.max_newton_iters = m;
    }
    let mut warm = false;
    if opts.warm_start {
        let fine = refined_grid(problem, grid);
        // Problems without a layer solver fall back to a cold start.
        if let Ok(comp) = solve_composite(problem, report, &fine) {
            cfg = cfg.with_guess(InitialGuess::Trajectory(comp.trajectory));
            warm = true;
        }
    }
    let (traj, rep) = solve_tpbvp(problem, &cfg, grid)?;
    let metrics = BTreeMap::from([
        ("oracle_iterations".to_string(), rep.iterations as f64),
        ("oracle_defect".to_string(), rep.defect),
        ("oracle_segments".to_string(), rep.segments as f64),
        ("oracle_warm_start".to_string(), if warm { 1.0 } else { 0.0 }),
    ]);
    Ok((traj, metrics))
}

fn record_cost(
    metrics: &mut BTreeMap<String, f64>,
    prefix: &str,
    traj: &TrajectorySolution,
    problem: &TrackingProblem,
) -> Result<()> {
    let cost = evaluate_cost(traj, problem)?;
    metrics.insert(format!("{prefix}cost_tracking"), cost.tracking);
    metrics.insert(format!("{prefix}cost_control"), cost.control);
    metrics.insert(format!("{prefix}cost_total"), cost.total);
    Ok(())
}

/// Grid that resolves both boundary layers.
fn refined_grid(problem: &TrackingProblem, grid: &[f64]) -> Vec<f64> {
    layer_refined_grid(problem.t0, problem.t1, grid[1] - grid[0], problem.epsilon, 40.0, 20)
}

/// The composite is available in closed form, so its cost is integrated on a
/// grid that resolves the layers rather than on the output grid.
fn record_composite_cost(
    metrics: &mut BTreeMap<String, f64>,
    prefix: &str,
    problem: &TrackingProblem,
    report: &LinearizingReport,
    grid: &[f64],
) -> Result<()> {
    let fine = solve_composite(problem, report, &refined_grid(problem, grid))?;
    record_cost(metrics, prefix, &fine.trajectory, problem)
}

fn record_composite(metrics: &mut BTreeMap<String, f64>, comp: &CompositeSolution) {
    metrics.insert("left_decay_rate".into(), comp.left.decay_rate);
    metrics.insert("right_decay_rate".into(), comp.right.decay_rate);
    metrics.insert("left_jump".into(), (&comp.left.boundary_value - &comp.left.limit_value).amax());
    metrics.insert("right_jump".into(), (&comp.right.boundary_value - &comp.right.limit_value).amax());
}

fn record_comparison(
    metrics: &mut BTreeMap<String, f64>,
    cmp: &Comparison,
    oracle: &TrajectorySolution,
    composite: &TrajectorySolution,
) {
    metrics.insert("exclude_width".into(), cmp.exclude_width);
    metrics.insert("interior_state_max".into(), cmp.interior.state_max_norm());
    metrics.insert("interior_control_max".into(), cmp.interior.control_max.iter().copied().fold(0.0, f64::max));
    metrics.insert("full_state_max".into(), cmp.full.state_max_norm());
    metrics.insert("full_state_argmax".into(), cmp.full.state_argmax);
    metrics.insert("full_control_max".into(), cmp.full.control_max.iter().copied().fold(0.0, f64::max));
    for (i, v) in cmp.interior.state_max.iter().enumerate() {
        metrics.insert(format!("interior_state_max_x{}", i + 1), *v);
    }
    // Largest state difference inside the excluded end windows.
    let (lo, hi) = (cmp.interior.start, cmp.interior.end);
    let layer = oracle
        .grid
        .iter()
        .enumerate()
        .filter(|(_, &t)| t < lo || t > hi)
        .map(|(k, &t)| (&oracle.x[k] - composite.state_at(t)).amax())
        .fold(0.0, f64::max);
    metrics.insert("layer_state_max".into(), layer);
}
