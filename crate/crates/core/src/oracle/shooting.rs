//! Multiple shooting with Newton on the Hamiltonian boundary-value problem.
//!
//! The control is eliminated through `u = -B^T lambda / eps^2`, leaving the
//! 2n-dimensional system
//!
//! ```text
//! x'      = R(x) + B(x) u
//! lambda' = -(dR/dx + dB/dx . u)^T lambda - S (x - x_d)
//! ```
//!
//! with `x(t0) = x0` and `x(t1) = x1`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ode::{self, OdeOptions};
use crate::problem::TrackingProblem;
use crate::trajectory::{interpolate, Flavor, TrajectorySolution};

/// Largest `rate * segment length` the automatic segment count allows.
const GROWTH_PER_SEGMENT: f64 = 5.0;
const MAX_AUTO_SEGMENTS: usize = 4000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JacobianKind {
    /// Variational equations integrated alongside each segment.
    Analytic,
    /// Central differences of the segment flow maps.
    FiniteDifference,
}

#[derive(Clone, Debug)]
pub enum InitialGuess {
    /// Straight line from `x0` to `x1` with zero co-state.
    Zeros,
    Trajectory(TrajectorySolution),
}

#[derive(Clone, Debug)]
pub struct ShootingConfig {
    pub segments: usize,
    pub integrator_tol: f64,
    pub newton_tol: f64,
    pub max_newton_iters: usize,
    pub jacobian: JacobianKind,
    pub initial_guess: InitialGuess,
}

impl Default for ShootingConfig {
    fn default() -> Self {
        Self {
            segments: 20,
            integrator_tol: 1e-11,
            newton_tol: 1e-8,
            max_newton_iters: 30,
            jacobian: JacobianKind::Analytic,
            initial_guess: InitialGuess::Zeros,
        }
    }
}

impl ShootingConfig {
    /// Default settings with enough segments that no segment spans more than a
    /// few boundary-layer e-foldings.
    pub fn for_problem(problem: &TrackingProblem) -> Self {
        let rate = stiff_rate(problem);
        let wanted = (problem.horizon() * rate / GROWTH_PER_SEGMENT).ceil() as usize;
        Self { segments: wanted.clamp(20, MAX_AUTO_SEGMENTS), ..Self::default() }
    }

    pub fn with_guess(mut self, guess: InitialGuess) -> Self {
        self.initial_guess = guess;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidProblem(m.into()));
        if self.segments < 1 {
            return bad("shooting needs at least one segment");
        }
        if !(self.integrator_tol > 0.0 && self.newton_tol > 0.0) {
            return bad("shooting tolerances must be positive");
        }
        if self.max_newton_iters == 0 {
            return bad("max_newton_iters must be positive");
        }
        Ok(())
    }
}

/// Estimate of the fastest Hamiltonian time scale: `sqrt(lambda_max(B^T S B)) / eps`
/// plus the drift's own growth, sampled along the desired path and the boundary data.
pub fn stiff_rate(problem: &TrackingProblem) -> f64 {
    let sys = &problem.system;
    let mut states = vec![problem.x0.clone(), problem.x1.clone()];
    let samples = 64;
    for k in 0..=samples {
        let t = problem.t0 + problem.horizon() * k as f64 / samples as f64;
        states.push(problem.desired.value(t));
    }
    states
        .iter()
        .map(|x| {
            let b = sys.input(x);
            let gram = b.transpose() * &problem.weight * &b;
            let top = gram.symmetric_eigenvalues().max().max(0.0);
            top.sqrt() / problem.epsilon + sys.drift_jacobian(x).norm()
        })
        .fold(0.0, f64::max)
}

/// Outcome of a converged Newton iteration.
#[derive(Clone, Debug)]
pub struct ShootingReport {
    pub iterations: usize,
    pub defect: f64,
    pub segments: usize,
}

/// Segment flows and the Newton residual for one problem.
pub struct Shooter<'a> {
    problem: &'a TrackingProblem,
    nodes: Vec<f64>,
    opts: OdeOptions,
    eps2: f64,
}

impl<'a> Shooter<'a> {
    pub fn new(problem: &'a TrackingProblem, segments: usize, integrator_tol: f64) -> Result<Self> {
        problem.validate()?;
        if !(problem.epsilon > 0.0) {
            return Err(Error::InvalidProblem(
                "the shooting oracle needs eps > 0; use the exact eps = 0 path instead".into(),
            ));
        }
        let segments = segments.max(1);
        let h = problem.horizon() / segments as f64;
        let nodes = (0..=segments)
            .map(|k| if k == segments { problem.t1 } else { problem.t0 + k as f64 * h })
            .collect();
        let opts = OdeOptions::tol(integrator_tol, integrator_tol);
        Ok(Self { problem, nodes, opts, eps2: problem.epsilon * problem.epsilon })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn segments(&self) -> usize {
        self.nodes.len() - 1
    }

    fn n(&self) -> usize {
        self.problem.n()
    }

    /// Number of Newton unknowns: `lambda(t0)` and the full state at interior nodes.
    pub fn unknowns(&self) -> usize {
        let n = self.n();
        n + 2 * n * (self.segments() - 1)
    }

    /// Right-hand side of the Hamiltonian system.
    pub fn field(&self, t: f64, y: &DVector<f64>) -> DVector<f64> {
        let n = self.n();
        let sys = &self.problem.system;
        let x = y.rows(0, n).into_owned();
        let lam = y.rows(n, n);
        let b = sys.input(&x);
        let u = -(b.transpose() * lam) / self.eps2;
        let xdot = sys.drift(&x) + &b * &u;
        let coupling = sys.drift_jacobian(&x) + sys.input_gradient_times(&x, &u);
        let err = x - self.problem.desired.value(t);
        let lamdot = -(coupling.transpose() * lam) - &self.problem.weight * err;
        let mut out = DVector::zeros(2 * n);
        out.rows_mut(0, n).copy_from(&xdot);
        out.rows_mut(n, n).copy_from(&lamdot);
        out
    }

    /// Jacobian of [`Self::field`] by central differences of the closed-form field.
    pub fn field_jacobian(&self, t: f64, y: &DVector<f64>) -> DMatrix<f64> {
        let m = y.len();
        let mut jac = DMatrix::zeros(m, m);
        let mut yp = y.clone();
        for j in 0..m {
            let h = 1e-6 * (1.0 + y[j].abs());
            yp[j] = y[j] + h;
            let fp = self.field(t, &yp);
            yp[j] = y[j] - h;
            let fm = self.field(t, &yp);
            yp[j] = y[j];
            jac.set_column(j, &((fp - fm) / (2.0 * h)));
        }
        jac
    }

    /// Flow of segment `k` from its left node.
    pub fn flow(&self, k: usize, y0: &DVector<f64>) -> Result<DVector<f64>> {
        ode::integrate_to(|t, y| self.field(t, y), self.nodes[k], self.nodes[k + 1], y0, &self.opts)
    }

    /// Flow of segment `k` and its sensitivity to the initial value.
    pub fn flow_with_sensitivity(&self, k: usize, y0: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let m = y0.len();
        let mut z0 = DVector::zeros(m + m * m);
        z0.rows_mut(0, m).copy_from(y0);
        for i in 0..m {
            z0[m + i * m + i] = 1.0;
        }
        let rhs = |t: f64, z: &DVector<f64>| {
            let y = z.rows(0, m).into_owned();
            let jac = self.field_jacobian(t, &y);
            let phi = DMatrix::from_column_slice(m, m, &z.as_slice()[m..]);
            let dphi = jac * phi;
            let mut out = DVector::zeros(m + m * m);
            out.rows_mut(0, m).copy_from(&self.field(t, &y));
            out.as_mut_slice()[m..].copy_from_slice(dphi.as_slice());
            out
        };
        let z1 = ode::integrate_to(rhs, self.nodes[k], self.nodes[k + 1], &z0, &self.opts)?;
        let y1 = z1.rows(0, m).into_owned();
        let phi = DMatrix::from_column_slice(m, m, &z1.as_slice()[m..]);
        Ok((y1, phi))
    }

    /// Initial value of every segment encoded by `z`.
    fn segment_starts(&self, z: &DVector<f64>) -> Vec<DVector<f64>> {
        let n = self.n();
        let mut starts = Vec::with_capacity(self.segments());
        let mut first = DVector::zeros(2 * n);
        first.rows_mut(0, n).copy_from(&self.problem.x0);
        first.rows_mut(n, n).copy_from(&z.rows(0, n));
        starts.push(first);
        for k in 1..self.segments() {
            starts.push(z.rows(n + 2 * n * (k - 1), 2 * n).into_owned());
        }
        starts
    }

    fn assemble_residual(&self, starts: &[DVector<f64>], ends: &[DVector<f64>]) -> DVector<f64> {
        let n = self.n();
        let segs = self.segments();
        let mut r = DVector::zeros(self.unknowns());
        for k in 0..segs - 1 {
            r.rows_mut(2 * n * k, 2 * n).copy_from(&(&ends[k] - &starts[k + 1]));
        }
        let last = ends[segs - 1].rows(0, n) - &self.problem.x1;
        r.rows_mut(2 * n * (segs - 1), n).copy_from(&last);
        r
    }

    /// Matching and terminal defects for the unknowns `z`.
    pub fn residual(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        let starts = self.segment_starts(z);
        let ends: Vec<_> = (0..self.segments())
            .into_par_iter()
            .map(|k| self.flow(k, &starts[k]))
            .collect::<Result<_>>()?;
        Ok(self.assemble_residual(&starts, &ends))
    }

    /// Residual and Newton Jacobian at `z`.
    pub fn jacobian(&self, z: &DVector<f64>, kind: JacobianKind) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let starts = self.segment_starts(z);
        let flows: Vec<(DVector<f64>, DMatrix<f64>)> = (0..self.segments())
            .into_par_iter()
            .map(|k| match kind {
                JacobianKind::Analytic => self.flow_with_sensitivity(k, &starts[k]),
                JacobianKind::FiniteDifference => self.flow_with_fd_sensitivity(k, &starts[k]),
            })
            .collect::<Result<_>>()?;
        let ends: Vec<_> = flows.iter().map(|(y, _)| y.clone()).collect();
        let r = self.assemble_residual(&starts, &ends);

        let n = self.n();
        let segs = self.segments();
        let dim = self.unknowns();
        let mut jac = DMatrix::zeros(dim, dim);
        for (k, (_, phi)) in flows.iter().enumerate() {
            let row = 2 * n * k;
            let rows = if k + 1 == segs { n } else { 2 * n };
            // Dependence on this segment's own start.
            if k == 0 {
                jac.view_mut((row, 0), (rows, n)).copy_from(&phi.view((0, n), (rows, n)));
            } else {
                let col = n + 2 * n * (k - 1);
                jac.view_mut((row, col), (rows, 2 * n)).copy_from(&phi.view((0, 0), (rows, 2 * n)));
            }
            // Matching against the next segment's start.
            if k + 1 < segs {
                let col = n + 2 * n * k;
                for i in 0..2 * n {
                    jac[(row + i, col + i)] = -1.0;
                }
            }
        }
        Ok((r, jac))
    }

    fn flow_with_fd_sensitivity(&self, k: usize, y0: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let m = y0.len();
        let y1 = self.flow(k, y0)?;
        let mut phi = DMatrix::zeros(m, m);
        let mut yp = y0.clone();
        for j in 0..m {
            let h = 1e-6 * (1.0 + y0[j].abs());
            yp[j] = y0[j] + h;
            let fp = self.flow(k, &yp)?;
            yp[j] = y0[j] - h;
            let fm = self.flow(k, &yp)?;
            yp[j] = y0[j];
            phi.set_column(j, &((fp - fm) / (2.0 * h)));
        }
        Ok((y1, phi))
    }

    /// Newton unknowns sampled from a trajectory (zero co-state when it has none).
    pub fn unknowns_from(&self, guess: &InitialGuess) -> DVector<f64> {
        let n = self.n();
        let (x0, x1) = (&self.problem.x0, &self.problem.x1);
        let sample = |t: f64| -> (DVector<f64>, DVector<f64>) {
            match guess {
                InitialGuess::Zeros => {
                    let w = (t - self.problem.t0) / self.problem.horizon();
                    (x0 * (1.0 - w) + x1 * w, DVector::zeros(n))
                }
                InitialGuess::Trajectory(traj) => {
                    let x = interpolate(&traj.grid, &traj.x, t);
                    let lam = traj
                        .lambda
                        .as_ref()
                        .map(|l| interpolate(&traj.grid, l, t))
                        .unwrap_or_else(|| DVector::zeros(n));
                    (x, lam)
                }
            }
        };
        let mut z = DVector::zeros(self.unknowns());
        z.rows_mut(0, n).copy_from(&sample(self.nodes[0]).1);
        for k in 1..self.segments() {
            let (x, lam) = sample(self.nodes[k]);
            let off = n + 2 * n * (k - 1);
            z.rows_mut(off, n).copy_from(&x);
            z.rows_mut(off + n, n).copy_from(&lam);
        }
        z
    }

    /// Damped Newton from `z`.
    pub fn newton(&self, mut z: DVector<f64>, cfg: &ShootingConfig) -> Result<(DVector<f64>, ShootingReport)> {
        let mut defect = f64::INFINITY;
        for iter in 0..=cfg.max_newton_iters {
            let (r, jac) = self.jacobian(&z, cfg.jacobian)?;
            defect = r.amax();
            if !defect.is_finite() {
                break;
            }
            if defect <= cfg.newton_tol {
                let report = ShootingReport { iterations: iter, defect, segments: self.segments() };
                return Ok((z, report));
            }
            if iter == cfg.max_newton_iters {
                break;
            }
            let step = jac.lu().solve(&(-&r)).ok_or(Error::ShootingSingular { condition: f64::INFINITY })?;
            let merit = r.norm();
            let mut alpha = 1.0;
            let mut accepted = false;
            while alpha >= 1.0 / 1024.0 {
                let trial = &z + &step * alpha;
                if let Ok(rt) = self.residual(&trial) {
                    let m = rt.norm();
                    if m.is_finite() && m <= (1.0 - 1e-4 * alpha) * merit {
                        z = trial;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !accepted {
                return Err(Error::NewtonDiverged { iterations: iter + 1, defect });
            }
        }
        Err(Error::NewtonDiverged { iterations: cfg.max_newton_iters, defect })
    }

    /// Sample the solution encoded by `z` on `grid`.
    pub fn trajectory(&self, z: &DVector<f64>, grid: &[f64]) -> Result<TrajectorySolution> {
        let n = self.n();
        let starts = self.segment_starts(z);
        let segs = self.segments();
        let mut buckets: Vec<Vec<f64>> = vec![Vec::new(); segs];
        for &t in grid {
            let k = self.nodes[1..segs].partition_point(|&node| node <= t);
            buckets[k].push(t);
        }
        let pieces: Vec<Vec<DVector<f64>>> = buckets
            .par_iter()
            .enumerate()
            .map(|(k, ts)| {
                if ts.is_empty() {
                    return Ok(Vec::new());
                }
                let mut times = vec![self.nodes[k]];
                times.extend(ts.iter().copied().filter(|&t| t > self.nodes[k]));
                let skip_first = ts[0] > self.nodes[k];
                let ys = ode::integrate(|t, y| self.field(t, y), &times, &starts[k], &self.opts)?;
                Ok(if skip_first { ys[1..].to_vec() } else { ys })
            })
            .collect::<Result<_>>()?;
        let ys: Vec<DVector<f64>> = pieces.into_iter().flatten().collect();
        let b_of = |x: &DVector<f64>| self.problem.system.input(x);
        let mut xs = Vec::with_capacity(ys.len());
        let mut lams = Vec::with_capacity(ys.len());
        let mut us = Vec::with_capacity(ys.len());
        for y in &ys {
            let x = y.rows(0, n).into_owned();
            let lam = y.rows(n, n).into_owned();
            us.push(-(b_of(&x).transpose() * &lam) / self.eps2);
            xs.push(x);
            lams.push(lam);
        }
        TrajectorySolution::new(grid.to_vec(), xs, Some(lams), us, Flavor::Oracle)
    }
}

/// Solve the optimality system by multiple shooting and sample the result on `grid`.
pub fn solve_tpbvp(
    problem: &TrackingProblem,
    cfg: &ShootingConfig,
    grid: &[f64],
) -> Result<(TrajectorySolution, ShootingReport)> {
    cfg.validate()?;
    let first = grid.first().copied().unwrap_or(f64::NAN);
    let last = grid.last().copied().unwrap_or(f64::NAN);
    let slack = 1e-12 * (1.0 + problem.horizon());
    if grid.len() < 2 || first < problem.t0 - slack || last > problem.t1 + slack {
        return Err(Error::GridMismatch("output grid must lie inside the horizon".into()));
    }
    let shooter = Shooter::new(problem, cfg.segments, cfg.integrator_tol)?;
    let z0 = shooter.unknowns_from(&cfg.initial_guess);
    let (z, report) = shooter.newton(z0, cfg)?;
    Ok((shooter.trajectory(&z, grid)?, report))
}

/// Largest column-wise relative difference between two Jacobians.
pub fn jacobian_mismatch(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .zip(b.column_iter())
        .map(|(ca, cb)| {
            let scale = cb.amax().max(ca.amax());
            if scale == 0.0 {
                0.0
            } else {
                (ca - cb).amax() / scale
            }
        })
        .fold(0.0, f64::max)
}
