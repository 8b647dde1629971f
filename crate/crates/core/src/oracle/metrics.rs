//! Cost evaluation and trajectory comparison.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::TrackingProblem;
use crate::trajectory::{interpolate, Flavor, TrajectorySolution};

/// The two parts of the cost and their sum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cost {
    /// `1/2 int (x - x_d)^T S (x - x_d) dt`
    pub tracking: f64,
    /// `eps^2/2 int |u|^2 dt`; infinite for delta kicks at `eps > 0`.
    pub control: f64,
    pub total: f64,
}

/// Trapezoidal cost along a sampled trajectory.
///
/// Delta kicks carry infinite control energy for any `eps > 0`, so an
/// `exact-eps0` trajectory with kicks reports `control = total = inf` there.
/// At `eps = 0` the control term vanishes and kicks are ignored.
pub fn evaluate_cost(traj: &TrajectorySolution, problem: &TrackingProblem) -> Result<Cost> {
    check_coverage(traj, problem)?;
    let s = &problem.weight;
    let eps2 = problem.epsilon * problem.epsilon;
    let mut tracking = 0.0;
    let mut energy = 0.0;
    let point = |k: usize| {
        let err = &traj.x[k] - problem.desired.value(traj.grid[k]);
        (0.5 * err.dot(&(s * &err)), 0.5 * traj.u[k].norm_squared())
    };
    let mut prev = point(0);
    for k in 1..traj.len() {
        let cur = point(k);
        let h = traj.grid[k] - traj.grid[k - 1];
        tracking += 0.5 * h * (prev.0 + cur.0);
        energy += 0.5 * h * (prev.1 + cur.1);
        prev = cur;
    }
    let control = if traj.flavor == Flavor::ExactEps0 && !traj.kicks.is_empty() && problem.epsilon > 0.0 {
        f64::INFINITY
    } else {
        eps2 * energy
    };
    Ok(Cost { tracking, control, total: tracking + control })
}

/// `int |u|^2 / 2 dt` along a trajectory, the feedforward energy of its control.
pub fn control_energy(traj: &TrajectorySolution) -> f64 {
    traj.grid
        .windows(2)
        .enumerate()
        .map(|(k, w)| 0.25 * (w[1] - w[0]) * (traj.u[k].norm_squared() + traj.u[k + 1].norm_squared()))
        .sum()
}

fn check_coverage(traj: &TrajectorySolution, problem: &TrackingProblem) -> Result<()> {
    let slack = 1e-9 * (1.0 + problem.horizon());
    if traj.len() < 2 || (traj.t0() - problem.t0).abs() > slack || (traj.t1() - problem.t1).abs() > slack {
        return Err(Error::GridMismatch(format!(
            "trajectory covers [{}, {}], horizon is [{}, {}]",
            traj.grid.first().copied().unwrap_or(f64::NAN),
            traj.grid.last().copied().unwrap_or(f64::NAN),
            problem.t0,
            problem.t1
        )));
    }
    if traj.n() != problem.n() {
        return Err(Error::GridMismatch("state dimension does not match the problem".into()));
    }
    Ok(())
}

/// Per-component differences over one time window.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WindowMetrics {
    pub start: f64,
    pub end: f64,
    pub state_max: Vec<f64>,
    pub state_l2: Vec<f64>,
    pub control_max: Vec<f64>,
    /// Time at which the largest state difference (any component) occurs.
    pub state_argmax: f64,
}

impl WindowMetrics {
    pub fn state_max_norm(&self) -> f64 {
        self.state_max.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub exclude_width: f64,
    pub interior: WindowMetrics,
    pub full: WindowMetrics,
}

/// Differences `a - b` on the samples of `a`, with `b` resampled linearly.
///
/// `interior` drops `exclude_width` at each end of the common interval.
pub fn compare_solutions(a: &TrajectorySolution, b: &TrajectorySolution, exclude_width: f64) -> Result<Comparison> {
    if a.n() != b.n() || a.p() != b.p() {
        return Err(Error::GridMismatch("trajectories have different dimensions".into()));
    }
    if !(exclude_width >= 0.0) {
        return Err(Error::GridMismatch("exclude_width must be non-negative".into()));
    }
    let start = a.t0().max(b.t0());
    let end = a.t1().min(b.t1());
    if end <= start {
        return Err(Error::GridMismatch("trajectories do not overlap".into()));
    }
    let full = window(a, b, start, end)?;
    let (lo, hi) = (start + exclude_width, end - exclude_width);
    if hi <= lo {
        return Err(Error::GridMismatch("exclude_width leaves no interior".into()));
    }
    let interior = window(a, b, lo, hi)?;
    Ok(Comparison { exclude_width, interior, full })
}

fn window(a: &TrajectorySolution, b: &TrajectorySolution, lo: f64, hi: f64) -> Result<WindowMetrics> {
    let idx: Vec<usize> = (0..a.len()).filter(|&k| a.grid[k] >= lo && a.grid[k] <= hi).collect();
    if idx.is_empty() {
        return Err(Error::GridMismatch(format!("no samples in [{lo}, {hi}]")));
    }
    let (n, p) = (a.n(), a.p());
    let mut m = WindowMetrics {
        start: lo,
        end: hi,
        state_max: vec![0.0; n],
        state_l2: vec![0.0; n],
        control_max: vec![0.0; p],
        state_argmax: a.grid[idx[0]],
    };
    let mut best = -1.0;
    let mut prev: Option<(f64, DVector<f64>)> = None;
    for &k in &idx {
        let t = a.grid[k];
        let dx = &a.x[k] - interpolate(&b.grid, &b.x, t);
        let du = &a.u[k] - interpolate(&b.grid, &b.u, t);
        for i in 0..n {
            m.state_max[i] = m.state_max[i].max(dx[i].abs());
        }
        for i in 0..p {
            m.control_max[i] = m.control_max[i].max(du[i].abs());
        }
        if dx.amax() > best {
            best = dx.amax();
            m.state_argmax = t;
        }
        let sq = dx.map(|v| v * v);
        if let Some((tp, sp)) = &prev {
            let h = t - tp;
            for i in 0..n {
                m.state_l2[i] += 0.5 * h * (sp[i] + sq[i]);
            }
        }
        prev = Some((t, sq));
    }
    for v in &mut m.state_l2 {
        *v = v.sqrt();
    }
    Ok(m)
}
