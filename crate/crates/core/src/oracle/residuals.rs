//! Pointwise audits of the optimality conditions along a sampled trajectory.
//!
//! Time derivatives are second-order finite differences on the grid (central in
//! the interior, one-sided at the ends). Their truncation error is estimated by
//! repeating every audit with the stencil stretched to every other sample: the
//! two results differ by about three times the O(dt^2) error of the first.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::TrackingProblem;
use crate::projectors::projector_set;
use crate::trajectory::TrajectorySolution;

/// Multiple of the discretization estimate tolerated on top of a residual.
pub const DISCRETIZATION_SAFETY: f64 = 10.0;

/// Maxima over the grid of each residual group and of its discretization estimate.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ResidualReport {
    /// `eps^2 u + B^T lambda`
    pub stationarity_max: f64,
    /// `x' - R - B u`
    pub state_defect_max: f64,
    /// `lambda' + (dR/dx + dB/dx . u)^T lambda + S (x - x_d)`
    pub costate_defect_max: f64,
    /// `P^T lambda + eps^2 Gamma (x' - R)`
    pub projected_costate_max: f64,
    /// Rearranged system: co-state `Q` part, second-order `P` part, `Q` dynamics.
    pub rearranged_max: [f64; 3],
    pub state_defect_discretization: f64,
    pub costate_defect_discretization: f64,
    pub projected_costate_discretization: f64,
    pub rearranged_discretization: [f64; 3],
    /// `max_i (r_i - SAFETY * d_i)` over the three raw groups, where `d_i` is the
    /// local discretization estimate.
    pub raw_excess: f64,
    /// Same as `raw_excess` for the `P^T lambda` identity.
    pub projected_costate_excess: f64,
    /// `max_i (rr_i - SAFETY * (raw_i + d_i))` for the rearranged groups.
    pub rearranged_excess: f64,
    pub samples: usize,
}

impl ResidualReport {
    pub fn raw_max(&self) -> f64 {
        self.stationarity_max.max(self.state_defect_max).max(self.costate_defect_max)
    }

    pub fn is_finite(&self) -> bool {
        [
            self.stationarity_max,
            self.state_defect_max,
            self.costate_defect_max,
            self.projected_costate_max,
            self.rearranged_max[0],
            self.rearranged_max[1],
            self.rearranged_max[2],
            self.raw_excess,
            self.projected_costate_excess,
            self.rearranged_excess,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// Residual vectors at one sample.
struct Pointwise {
    stationarity: DVector<f64>,
    state: DVector<f64>,
    costate: DVector<f64>,
    projected_costate: DVector<f64>,
    rearranged: [DVector<f64>; 3],
}

/// Three-point derivative at sample `i` from samples `stride` apart.
fn stencil_derivative<T>(grid: &[f64], values: &[T], i: usize, stride: usize) -> T
where
    T: Clone + std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T>,
{
    let n = grid.len();
    let s = stride;
    let (a, b, c) = if i >= s && i + s < n {
        (i - s, i, i + s)
    } else if i < s {
        (i, i + s, i + 2 * s)
    } else {
        (i - 2 * s, i - s, i)
    };
    let (t0, t1, t2, t) = (grid[a], grid[b], grid[c], grid[i]);
    let w0 = (2.0 * t - t1 - t2) / ((t0 - t1) * (t0 - t2));
    let w1 = (2.0 * t - t0 - t2) / ((t1 - t0) * (t1 - t2));
    let w2 = (2.0 * t - t0 - t1) / ((t2 - t0) * (t2 - t1));
    values[a].clone() * w0 + values[b].clone() * w1 + values[c].clone() * w2
}

fn derivatives<T>(grid: &[f64], values: &[T], stride: usize) -> Vec<T>
where
    T: Clone + std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T>,
{
    (0..grid.len()).map(|i| stencil_derivative(grid, values, i, stride)).collect()
}

struct Audit<'a> {
    problem: &'a TrackingProblem,
    traj: &'a TrajectorySolution,
    lambda: &'a [DVector<f64>],
    gamma: Vec<DMatrix<f64>>,
    q: Vec<DMatrix<f64>>,
    p: Vec<DMatrix<f64>>,
    bg: Vec<DMatrix<f64>>,
}

impl Audit<'_> {
    fn pointwise(&self, stride: usize) -> Vec<Pointwise> {
        let grid = &self.traj.grid;
        let sys = &self.problem.system;
        let s = &self.problem.weight;
        let eps2 = self.problem.epsilon * self.problem.epsilon;
        let xdot = derivatives(grid, &self.traj.x, stride);
        let xddot = derivatives(grid, &xdot, stride);
        let lamdot = derivatives(grid, self.lambda, stride);
        let gamma_dot = derivatives(grid, &self.gamma, stride);
        let q_dot = derivatives(grid, &self.q, stride);

        (0..grid.len())
            .map(|i| {
                let x = &self.traj.x[i];
                let lam = &self.lambda[i];
                let u = &self.traj.u[i];
                let (q, p, gamma) = (&self.q[i], &self.p[i], &self.gamma[i]);
                let b = sys.input(x);
                let r = sys.drift(x);
                let jr = sys.drift_jacobian(x);
                let err = x - self.problem.desired.value(grid[i]);
                let defect = &xdot[i] - &r;

                let stationarity = u * eps2 + b.transpose() * lam;
                let state = &defect - &b * u;
                let costate =
                    &lamdot[i] + (&jr + sys.input_gradient_times(x, u)).transpose() * lam + s * &err;
                let projected_costate = p.transpose() * lam + gamma * &defect * eps2;

                // W_ij = sum_kl dB_il/dx_j Bg_lk (x'_k - R_k)
                let w_mat = sys.input_gradient_times(x, &(&self.bg[i] * &defect));
                let w_eps = (&jr + &w_mat).transpose() * (q.transpose() * lam - gamma * &defect * eps2);

                let r11 = q.transpose() * &lamdot[i] + q.transpose() * &w_eps + q.transpose() * s * q * &err;
                let r12 = gamma * &xddot[i] * eps2
                    - p.transpose() * (gamma * &jr * &xdot[i] - &gamma_dot[i] * &defect) * eps2
                    - p.transpose() * &w_eps
                    - p.transpose() * q_dot[i].transpose() * q.transpose() * lam
                    - p.transpose() * s * p * &err;
                let r13 = q * &defect;

                Pointwise { stationarity, state, costate, projected_costate, rearranged: [r11, r12, r13] }
            })
            .collect()
    }
}

/// Audit the raw optimality conditions, the `P^T lambda` identity and the
/// rearranged singularly perturbed system along `traj`.
///
/// The trajectory must carry a co-state and at least five samples.
pub fn optimality_residuals(traj: &TrajectorySolution, problem: &TrackingProblem) -> Result<ResidualReport> {
    let lambda = traj
        .lambda
        .as_ref()
        .ok_or_else(|| Error::GridMismatch("residual audit needs a co-state".into()))?;
    if traj.len() < 5 {
        return Err(Error::GridMismatch("residual audit needs at least five samples".into()));
    }
    if traj.n() != problem.n() || traj.p() != problem.p() {
        return Err(Error::GridMismatch("trajectory dimensions do not match the problem".into()));
    }
    let mut audit = Audit { problem, traj, lambda, gamma: vec![], q: vec![], p: vec![], bg: vec![] };
    for x in &traj.x {
        let ps = projector_set(&problem.system, &problem.weight, x)?;
        audit.gamma.push(ps.gamma);
        audit.q.push(ps.q);
        audit.p.push(ps.p);
        audit.bg.push(ps.bg);
    }
    let fine = audit.pointwise(1);
    let coarse = audit.pointwise(2);

    // Residual norms per sample and group: stationarity, state, costate, projected_costate, rearranged x3.
    const GROUPS: usize = 7;
    let norms = |p: &Pointwise| -> [DVector<f64>; GROUPS] {
        let [a, b, c] = &p.rearranged;
        [p.stationarity.clone(), p.state.clone(), p.costate.clone(), p.projected_costate.clone(), a.clone(), b.clone(), c.clone()]
    };
    let len = fine.len();
    let mut r = vec![[0.0; GROUPS]; len];
    let mut d_local = vec![[0.0; GROUPS]; len];
    for i in 0..len {
        let (f, c) = (norms(&fine[i]), norms(&coarse[i]));
        for g in 0..GROUPS {
            r[i][g] = f[g].amax();
            d_local[i][g] = (&f[g] - &c[g]).amax() / 3.0;
        }
    }
    // The estimate can pass through zero or undershoot where the grid spacing
    // changes, so take its largest value over the stencil footprint.
    let d: Vec<[f64; GROUPS]> = (0..len)
        .map(|i| {
            let mut out = [0.0; GROUPS];
            for row in &d_local[i.saturating_sub(2)..(i + 3).min(len)] {
                for g in 0..GROUPS {
                    out[g] = f64::max(out[g], row[g]);
                }
            }
            out
        })
        .collect();

    let mut rep = ResidualReport { samples: traj.len(), ..Default::default() };
    for (ri, di) in r.iter().zip(&d) {
        rep.stationarity_max = rep.stationarity_max.max(ri[0]);
        rep.state_defect_max = rep.state_defect_max.max(ri[1]);
        rep.costate_defect_max = rep.costate_defect_max.max(ri[2]);
        rep.projected_costate_max = rep.projected_costate_max.max(ri[3]);
        rep.state_defect_discretization = rep.state_defect_discretization.max(di[1]);
        rep.costate_defect_discretization = rep.costate_defect_discretization.max(di[2]);
        rep.projected_costate_discretization = rep.projected_costate_discretization.max(di[3]);

        let raw_excess = ri[0]
            .max(ri[1] - DISCRETIZATION_SAFETY * di[1])
            .max(ri[2] - DISCRETIZATION_SAFETY * di[2]);
        rep.raw_excess = rep.raw_excess.max(raw_excess);
        rep.projected_costate_excess = rep.projected_costate_excess.max(ri[3] - DISCRETIZATION_SAFETY * di[3]);

        let raw = ri[0].max(ri[1]).max(ri[2]);
        let d_raw = di[1].max(di[2]);
        for j in 0..3 {
            rep.rearranged_max[j] = rep.rearranged_max[j].max(ri[4 + j]);
            rep.rearranged_discretization[j] = rep.rearranged_discretization[j].max(di[4 + j]);
            let excess = ri[4 + j] - DISCRETIZATION_SAFETY * (raw + d_raw + di[4 + j]);
            rep.rearranged_excess = rep.rearranged_excess.max(excess);
        }
    }
    Ok(rep)
}
