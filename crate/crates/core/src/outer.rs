//! Linear outer problem away from the interval endpoints.
//!
//! Under the linearizing assumption the outer co-state `Q^T Lambda` and state
//! part `Q X` obey the linear system `z' = M z + f(t)` with
//!
//! ```text
//! M = [ -Q^T A^T Q^T      -Q^T S Q ]      f = [ Q^T S Q x_d       ]
//!     [ -Q A Omega A^T Q^T  Q A Q  ]          [ Q A P x_d + Q b   ]
//! ```
//!
//! and `P X = P x_d - Omega A^T Q^T Lambda`.

use nalgebra::{DMatrix, DVector};

use crate::desired::DesiredTrajectory;
use crate::error::{Error, Result};
use crate::linalg;
use crate::ode::{self, OdeOptions};
use crate::problem::TrackingProblem;
use crate::projectors::{projector_set, LinearizingReport, ProjectorSet};
use crate::quadrature;
use crate::trajectory::locate;

/// Shooting systems above this condition number are rejected.
pub const SHOOTING_CONDITION_LIMIT: f64 = 1e12;

#[derive(Clone, Debug)]
pub struct OuterSystem {
    /// `2n x 2n`, acting on the stack `(Q^T Lambda, Q X)`.
    pub m: DMatrix<f64>,
    pub a_eff: DMatrix<f64>,
    pub b_eff: DVector<f64>,
    pub projectors: ProjectorSet,
    pub weight: DMatrix<f64>,
    desired: DesiredTrajectory,
}

impl OuterSystem {
    pub fn n(&self) -> usize {
        self.projectors.n()
    }

    /// Number of independent outer co-state (and state) directions, `n - p`.
    pub fn reduced_dim(&self) -> usize {
        linalg::range_basis(&self.projectors.q, 1e-10).ncols()
    }

    pub fn forcing(&self, t: f64) -> DVector<f64> {
        let n = self.n();
        let (p, q) = (&self.projectors.p, &self.projectors.q);
        let xd = self.desired.value(t);
        let upper = q.transpose() * &self.weight * q * &xd;
        let lower = q * (&self.a_eff * p * &xd + &self.b_eff);
        let mut f = DVector::zeros(2 * n);
        f.rows_mut(0, n).copy_from(&upper);
        f.rows_mut(n, n).copy_from(&lower);
        f
    }

    pub fn rhs(&self, t: f64, z: &DVector<f64>) -> DVector<f64> {
        &self.m * z + self.forcing(t)
    }

    /// `P X` from the outer co-state.
    pub fn px(&self, t: f64, q_lambda: &DVector<f64>) -> DVector<f64> {
        let ps = &self.projectors;
        &ps.p * self.desired.value(t) - &ps.omega * self.a_eff.transpose() * q_lambda
    }

    pub fn px_dot(&self, t: f64, q_lambda_dot: &DVector<f64>) -> DVector<f64> {
        let ps = &self.projectors;
        &ps.p * self.desired.derivative(t) - &ps.omega * self.a_eff.transpose() * q_lambda_dot
    }

    /// Lower-left block in the alternative form `-Q A P Omega A^T Q^T`.
    pub fn lower_left_via_p(&self) -> DMatrix<f64> {
        let ps = &self.projectors;
        -(&ps.q * &self.a_eff * &ps.p * &ps.omega * self.a_eff.transpose() * ps.q.transpose())
    }
}

/// Assemble the outer operator from a certified linearizing report.
pub fn build_outer_system(problem: &TrackingProblem, report: &LinearizingReport) -> Result<OuterSystem> {
    report.require()?;
    let n = problem.n();
    let s = &problem.weight;
    let projectors = projector_set(&problem.system, s, &report.reference_state)?;
    let (q, omega) = (&projectors.q, &projectors.omega);
    let a = &report.fitted_a;
    let qt = q.transpose();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(&(-(&qt * a.transpose() * &qt)));
    m.view_mut((0, n), (n, n)).copy_from(&(-(&qt * s * q)));
    m.view_mut((n, 0), (n, n)).copy_from(&(-(q * a * omega * a.transpose() * &qt)));
    m.view_mut((n, n), (n, n)).copy_from(&(q * a * q));
    Ok(OuterSystem {
        m,
        a_eff: a.clone(),
        b_eff: report.fitted_b.clone(),
        projectors,
        weight: s.clone(),
        desired: problem.desired.clone(),
    })
}

/// Outer solution sampled on a grid, with analytic time derivatives.
#[derive(Clone, Debug)]
pub struct OuterSolution {
    pub grid: Vec<f64>,
    pub q_lambda: Vec<DVector<f64>>,
    pub q_lambda_dot: Vec<DVector<f64>>,
    pub qx: Vec<DVector<f64>>,
    pub px: Vec<DVector<f64>>,
    /// `X = P X + Q X`
    pub x: Vec<DVector<f64>>,
    pub xdot: Vec<DVector<f64>>,
    /// `Q^T Lambda(t0)` fixed by the terminal condition.
    pub lambda_init: DVector<f64>,
    pub p: DMatrix<f64>,
    pub q: DMatrix<f64>,
}

impl OuterSolution {
    pub fn t0(&self) -> f64 {
        self.grid[0]
    }

    pub fn t1(&self) -> f64 {
        *self.grid.last().unwrap()
    }

    pub fn x_start(&self) -> &DVector<f64> {
        &self.x[0]
    }

    pub fn x_end(&self) -> &DVector<f64> {
        self.x.last().unwrap()
    }

    /// State at arbitrary `t` by cubic Hermite interpolation.
    pub fn state_at(&self, t: f64) -> DVector<f64> {
        hermite(&self.grid, &self.x, &self.xdot, t).0
    }

    /// `(X(t), X'(t))`
    pub fn state_and_derivative_at(&self, t: f64) -> (DVector<f64>, DVector<f64>) {
        hermite(&self.grid, &self.x, &self.xdot, t)
    }

    pub fn costate_at(&self, t: f64) -> DVector<f64> {
        hermite(&self.grid, &self.q_lambda, &self.q_lambda_dot, t).0
    }
}

fn hermite(grid: &[f64], y: &[DVector<f64>], dy: &[DVector<f64>], t: f64) -> (DVector<f64>, DVector<f64>) {
    let i = locate(grid, t);
    let h = grid[i + 1] - grid[i];
    let s = ((t - grid[i]) / h).clamp(0.0, 1.0);
    let (s2, s3) = (s * s, s * s * s);
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    let value = &y[i] * h00 + &dy[i] * (h10 * h) + &y[i + 1] * h01 + &dy[i + 1] * (h11 * h);
    let d00 = (6.0 * s2 - 6.0 * s) / h;
    let d10 = 3.0 * s2 - 4.0 * s + 1.0;
    let d01 = (-6.0 * s2 + 6.0 * s) / h;
    let d11 = 3.0 * s2 - 2.0 * s;
    let deriv = &y[i] * d00 + &dy[i] * d10 + &y[i + 1] * d01 + &dy[i + 1] * d11;
    (value, deriv)
}

/// Solve the outer two-point problem on `grid` by linear shooting.
///
/// One particular and `n - p` homogeneous solutions are integrated together in
/// coordinates adapted to the ranges of `Q^T` and `Q`; the terminal condition
/// `Q X(t1) = Q x1` fixes the initial co-state.
pub fn solve_outer_bvp(sys: &OuterSystem, problem: &TrackingProblem, grid: &[f64]) -> Result<OuterSolution> {
    let n = problem.n();
    let q = &sys.projectors.q;
    let lam_basis = linalg::range_basis(&q.transpose(), 1e-10);
    let x_basis = linalg::range_basis(q, 1e-10);
    let r = lam_basis.ncols();
    if x_basis.ncols() != r {
        return Err(Error::NotLinearizable("ranges of Q and Q^T differ in dimension".into()));
    }

    let mut samples = Vec::with_capacity(grid.len());
    let lambda_init;
    if r == 0 {
        lambda_init = DVector::zeros(n);
        samples.resize(grid.len(), DVector::zeros(2 * n));
    } else {
        // Reduced coordinates: Q^T Lambda = U alpha, Q X = V beta.
        let mut basis = DMatrix::zeros(2 * n, 2 * r);
        basis.view_mut((0, 0), (n, r)).copy_from(&lam_basis);
        basis.view_mut((n, r), (n, r)).copy_from(&x_basis);
        let mr = basis.transpose() * &sys.m * &basis;
        let cols = r + 1;
        let mut w0 = DMatrix::zeros(2 * r, cols);
        let beta0 = x_basis.transpose() * q * &problem.x0;
        w0.view_mut((r, 0), (r, 1)).copy_from(&beta0);
        for k in 0..r {
            w0[(k, k + 1)] = 1.0;
        }
        let y0 = DVector::from_column_slice(w0.as_slice());
        let field = |t: f64, y: &DVector<f64>| {
            let w = DMatrix::from_column_slice(2 * r, cols, y.as_slice());
            let mut dw = &mr * &w;
            let f = basis.transpose() * sys.forcing(t);
            {
                let mut c0 = dw.column_mut(0);
                c0 += &f;
            }
            DVector::from_column_slice(dw.as_slice())
        };
        let traj = ode::integrate(field, grid, &y0, &OdeOptions::tol(1e-10, 1e-12))?;
        let w1 = DMatrix::from_column_slice(2 * r, cols, traj.last().unwrap().as_slice());
        let h = w1.view((r, 1), (r, r)).clone_owned();
        let target = x_basis.transpose() * q * &problem.x1 - w1.view((r, 0), (r, 1)).column(0);
        let c = linalg::solve_checked(&h, &target, SHOOTING_CONDITION_LIMIT)?;
        let mut coef = DVector::zeros(cols);
        coef[0] = 1.0;
        coef.rows_mut(1, r).copy_from(&c);
        for y in &traj {
            let w = DMatrix::from_column_slice(2 * r, cols, y.as_slice());
            samples.push(&basis * (w * &coef));
        }
        lambda_init = &lam_basis * c;
    }

    let mut out = OuterSolution {
        grid: grid.to_vec(),
        q_lambda: Vec::with_capacity(grid.len()),
        q_lambda_dot: Vec::with_capacity(grid.len()),
        qx: Vec::with_capacity(grid.len()),
        px: Vec::with_capacity(grid.len()),
        x: Vec::with_capacity(grid.len()),
        xdot: Vec::with_capacity(grid.len()),
        lambda_init,
        p: sys.projectors.p.clone(),
        q: q.clone(),
    };
    for (&t, z) in grid.iter().zip(samples) {
        let dz = sys.rhs(t, &z);
        let ql = z.rows(0, n).clone_owned();
        let qld = dz.rows(0, n).clone_owned();
        let qx = z.rows(n, n).clone_owned();
        let px = sys.px(t, &ql);
        let xdot = dz.rows(n, n) + sys.px_dot(t, &qld);
        out.x.push(&px + &qx);
        out.xdot.push(xdot);
        out.q_lambda.push(ql);
        out.q_lambda_dot.push(qld);
        out.qx.push(qx);
        out.px.push(px);
    }
    Ok(out)
}

/// Build and solve the outer problem in one step.
pub fn solve_outer(problem: &TrackingProblem, report: &LinearizingReport, grid: &[f64]) -> Result<OuterSolution> {
    let sys = build_outer_system(problem, report)?;
    solve_outer_bvp(&sys, problem, grid)
}

/// Parameters of the planar class read off a problem.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlanarOuter {
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
    pub s1: f64,
    pub s2: f64,
}

impl PlanarOuter {
    pub fn from_problem(problem: &TrackingProblem) -> Result<Self> {
        let planar = problem
            .system
            .planar()
            .ok_or_else(|| Error::NotTwoDimClass(format!("model '{}' declares no planar form", problem.system.name())))?;
        let s = problem
            .diagonal_weight()
            .ok_or_else(|| Error::NotTwoDimClass("weight matrix must be diagonal".into()))?;
        if planar.a2 == 0.0 {
            return Err(Error::NotTwoDimClass("a2 must be nonzero".into()));
        }
        Ok(Self { a0: planar.a0, a1: planar.a1, a2: planar.a2, s1: s[0], s2: s[1] })
    }

    /// Growth rate `phi = sqrt(a1^2 s2 + a2^2 s1) / sqrt(s2)`.
    pub fn phi(&self) -> f64 {
        (self.a1 * self.a1 * self.s2 + self.a2 * self.a2 * self.s1).sqrt() / self.s2.sqrt()
    }

    fn coupling(&self) -> f64 {
        self.a2 * self.s1 / self.s2
    }

    /// State-transition matrix of `(X, Y)` over an elapsed time `tau`.
    pub fn transition(&self, tau: f64) -> nalgebra::Matrix2<f64> {
        let phi = self.phi();
        let (ch, sh) = ((phi * tau).cosh(), (phi * tau).sinh());
        let k = nalgebra::Matrix2::new(self.a1, self.a2, self.coupling(), -self.a1);
        nalgebra::Matrix2::identity() * ch + k * (sh / phi)
    }

    fn forcing(&self, desired: &DesiredTrajectory, t: f64) -> nalgebra::Vector2<f64> {
        let (v, d) = desired.eval(t);
        nalgebra::Vector2::new(self.a0, d[1] + self.a1 * v[1] - self.coupling() * v[0])
    }

    /// Closed-form initial value `Y(t0)` of the outer controlled component.
    pub fn y_init(&self, problem: &TrackingProblem, tol: f64) -> f64 {
        let (a0, a1, a2) = (self.a0, self.a1, self.a2);
        let (t0, t1) = (problem.t0, problem.t1);
        let (x0, x1) = (problem.x0[0], problem.x1[0]);
        let phi = self.phi();
        let big_t = t1 - t0;
        let csch = 1.0 / (phi * big_t).sinh();
        let ch = (phi * big_t).cosh();
        let c = self.coupling();
        let xd = &problem.desired;
        let i1 = quadrature::integrate(
            |tau| {
                let v = xd.value(tau);
                (c * v[0] - a1 * v[1]) * (phi * (t1 - tau)).sinh()
            },
            t0,
            t1,
            tol,
        );
        let i2 = quadrature::integrate(|tau| xd.value(tau)[1] * (phi * (t1 - tau)).cosh(), t0, t1, tol);
        let yd0 = xd.value(t0)[1];
        csch * (i1 - phi * i2) + (a2 * yd0 - a1 * x0 - a0) / a2
            - csch / (a2 * phi) * (ch * (a0 * a1 + phi * phi * x0) - a0 * a1 - phi * phi * x1)
    }
}

/// Closed-form outer solution for the planar class with diagonal weight.
pub fn solve_outer_2d(problem: &TrackingProblem, grid: &[f64]) -> Result<OuterSolution> {
    const QUAD_TOL: f64 = 1e-10;
    let po = PlanarOuter::from_problem(problem)?;
    let xd = &problem.desired;
    let y0 = po.y_init(problem, QUAD_TOL);
    let mut z = nalgebra::Vector2::new(problem.x0[0], y0);
    let mut states = Vec::with_capacity(grid.len());
    states.push(z);
    for w in grid.windows(2) {
        let (ta, tb) = (w[0], w[1]);
        let conv = quadrature::integrate_vec(
            |tau| {
                let v = po.transition(tb - tau) * po.forcing(xd, tau);
                DVector::from_column_slice(v.as_slice())
            },
            ta,
            tb,
            QUAD_TOL * (tb - ta) / (problem.t1 - problem.t0),
        );
        z = po.transition(tb - ta) * z + nalgebra::Vector2::new(conv[0], conv[1]);
        states.push(z);
    }

    let ratio = po.s2 / po.a2;
    let k = nalgebra::Matrix2::new(po.a1, po.a2, po.coupling(), -po.a1);
    let mut out = OuterSolution {
        grid: grid.to_vec(),
        q_lambda: Vec::with_capacity(grid.len()),
        q_lambda_dot: Vec::with_capacity(grid.len()),
        qx: Vec::with_capacity(grid.len()),
        px: Vec::with_capacity(grid.len()),
        x: Vec::with_capacity(grid.len()),
        xdot: Vec::with_capacity(grid.len()),
        lambda_init: DVector::from_vec(vec![ratio * (xd.value(grid[0])[1] - y0), 0.0]),
        p: DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]),
        q: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
    };
    for (&t, z) in grid.iter().zip(states) {
        let (v, _) = xd.eval(t);
        let lam = ratio * (v[1] - z[1]);
        let lam_dot = -po.a1 * lam - po.s1 * (z[0] - v[0]);
        let dz = k * z + po.forcing(xd, t);
        out.q_lambda.push(DVector::from_vec(vec![lam, 0.0]));
        out.q_lambda_dot.push(DVector::from_vec(vec![lam_dot, 0.0]));
        out.qx.push(DVector::from_vec(vec![z[0], 0.0]));
        out.px.push(DVector::from_vec(vec![0.0, z[1]]));
        out.x.push(DVector::from_vec(vec![z[0], z[1]]));
        out.xdot.push(DVector::from_vec(vec![dz[0], dz[1]]));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phi_unit_case() {
        let po = PlanarOuter { a0: 0.0, a1: 0.0, a2: 1.0, s1: 1.0, s2: 1.0 };
        assert_eq!(po.phi(), 1.0);
    }

    #[test]
    fn transition_composes() {
        let po = PlanarOuter { a0: 0.3, a1: -0.4, a2: 1.5, s1: 2.0, s2: 0.7 };
        let lhs = po.transition(0.3) * po.transition(0.5);
        assert!((lhs - po.transition(0.8)).amax() < 1e-12);
    }

    #[test]
    fn hermite_reproduces_cubic() {
        let grid = vec![0.0, 0.5, 1.0];
        let f = |t: f64| t * t * t - t;
        let df = |t: f64| 3.0 * t * t - 1.0;
        let y: Vec<_> = grid.iter().map(|&t| DVector::from_element(1, f(t))).collect();
        let dy: Vec<_> = grid.iter().map(|&t| DVector::from_element(1, df(t))).collect();
        let (v, d) = hermite(&grid, &y, &dy, 0.7);
        assert!((v[0] - f(0.7)).abs() < 1e-14);
        assert!((d[0] - df(0.7)).abs() < 1e-13);
    }
}
