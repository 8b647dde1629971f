//! Boundary layers on the stretched times `tau = (t - t0)/eps` (left) and
//! `tau = (t1 - t)/eps` (right).
//!
//! Only the `P` part of the state moves inside a layer. It starts at `P x_b`
//! and relaxes to the matching value `P X(t_b)` of the outer solution.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::ode::{self, OdeOptions};
use crate::outer::OuterSolution;
use crate::problem::TrackingProblem;
use crate::projectors::{projector_set, ProjectorSet};
use crate::system::ControlAffineSystem;
use crate::trajectory::locate;

/// Number of e-foldings resolved by a layer before it is considered converged.
pub const LAYER_EFOLDS: f64 = 40.0;
/// Gains below this magnitude count as lost control authority.
pub const GAIN_THRESHOLD: f64 = 1e-8;
const TABLE_POINTS: usize = 4001;
const REPORT_POINTS: usize = 401;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }
}

#[derive(Clone, Debug)]
enum Profile {
    /// `limit + exp(-rate tau) (boundary - limit)`
    Exponential,
    /// Tabulated solution of the planar first-order reduction
    /// `Y' = sqrt(s2) (limit - Y) |b(x_b, Y)|`.
    Planar {
        x_b: f64,
        s2_sqrt: f64,
        system: std::sync::Arc<ControlAffineSystem>,
        taus: Vec<f64>,
        ys: Vec<f64>,
    },
    /// `limit + B V exp(-sqrt(mu) tau) V^T B^g (boundary - limit)` for constant `B`.
    Modal { b: DMatrix<f64>, v: DMatrix<f64>, rates: DVector<f64>, coeff: DVector<f64> },
}

/// One boundary layer.
#[derive(Clone, Debug)]
pub struct InnerSolution {
    pub side: Side,
    pub tau_grid: Vec<f64>,
    /// `P X_L(tau)` on `tau_grid`.
    pub px_layer: Vec<DVector<f64>>,
    /// Matching value `P X(t_b)`.
    pub limit_value: DVector<f64>,
    /// `P x_b`
    pub boundary_value: DVector<f64>,
    /// Slowest e-folding rate in `tau`.
    pub decay_rate: f64,
    pub tau_max: f64,
    profile: Profile,
}

impl InnerSolution {
    /// `(P X_L(tau), d/dtau P X_L(tau))`
    pub fn eval(&self, tau: f64) -> (DVector<f64>, DVector<f64>) {
        let tau = tau.max(0.0);
        let jump = &self.boundary_value - &self.limit_value;
        match &self.profile {
            Profile::Exponential => {
                let e = (-self.decay_rate * tau).exp();
                (&self.limit_value + &jump * e, &jump * (-self.decay_rate * e))
            }
            Profile::Planar { x_b, s2_sqrt, system, taus, ys } => {
                let y = if tau >= *taus.last().unwrap() {
                    *ys.last().unwrap()
                } else {
                    let i = locate(taus, tau);
                    let h = taus[i + 1] - taus[i];
                    let f = |y: f64| planar_rate(system, *x_b, *s2_sqrt, self.limit_value[1], y);
                    let s = (tau - taus[i]) / h;
                    let (s2, s3) = (s * s, s * s * s);
                    (2.0 * s3 - 3.0 * s2 + 1.0) * ys[i]
                        + (s3 - 2.0 * s2 + s) * h * f(ys[i])
                        + (-2.0 * s3 + 3.0 * s2) * ys[i + 1]
                        + (s3 - s2) * h * f(ys[i + 1])
                };
                let dy = planar_rate(system, *x_b, *s2_sqrt, self.limit_value[1], y);
                (DVector::from_vec(vec![0.0, y]), DVector::from_vec(vec![0.0, dy]))
            }
            Profile::Modal { b, v, rates, coeff } => {
                let decay = DVector::from_fn(rates.len(), |i, _| (-rates[i] * tau).exp() * coeff[i]);
                let value = &self.limit_value + b * (v * &decay);
                let rated = decay.component_mul(rates);
                (value, -(b * (v * rated)))
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        self.boundary_value == self.limit_value
    }
}

fn planar_rate(system: &ControlAffineSystem, x_b: f64, s2_sqrt: f64, limit: f64, y: f64) -> f64 {
    let b = system.planar().expect("planar system").gain(x_b, y);
    s2_sqrt * (limit - y) * b.abs()
}

/// `tau_max`: `LAYER_EFOLDS` e-foldings, capped at a quarter of the horizon.
pub fn tau_max(problem: &TrackingProblem, rate: f64) -> f64 {
    let efolds = LAYER_EFOLDS / rate;
    if problem.epsilon > 0.0 {
        efolds.min(problem.horizon() / (4.0 * problem.epsilon))
    } else {
        efolds
    }
}

fn report_grid(tau_max: f64) -> Vec<f64> {
    (0..REPORT_POINTS).map(|k| tau_max * k as f64 / (REPORT_POINTS - 1) as f64).collect()
}

fn boundary_state(problem: &TrackingProblem, side: Side) -> &DVector<f64> {
    match side {
        Side::Left => &problem.x0,
        Side::Right => &problem.x1,
    }
}

fn planar_layer(problem: &TrackingProblem, side: Side, limit: f64) -> Result<InnerSolution> {
    let planar = problem
        .system
        .planar()
        .ok_or_else(|| Error::NotTwoDimClass(format!("model '{}' declares no planar form", problem.system.name())))?;
    let s = problem
        .diagonal_weight()
        .ok_or_else(|| Error::NotTwoDimClass("weight matrix must be diagonal".into()))?;
    let s2_sqrt = s[1].sqrt();
    let xb = boundary_state(problem, side);
    let (x_b, y_b) = (xb[0], xb[1]);

    // The layer moves monotonically from y_b to the limit; b must stay away from zero on the way.
    let mut min_gain = f64::INFINITY;
    let mut at = y_b;
    for k in 0..=200 {
        let y = y_b + (limit - y_b) * k as f64 / 200.0;
        let g = planar.gain(x_b, y).abs();
        if g < min_gain {
            min_gain = g;
            at = y;
        }
    }
    if !(min_gain >= GAIN_THRESHOLD) {
        return Err(Error::VanishingB { gain: min_gain, at });
    }

    let rate = s2_sqrt * planar.gain(x_b, limit).abs();
    let tmax = tau_max(problem, rate);
    let boundary_value = DVector::from_vec(vec![0.0, y_b]);
    let limit_value = DVector::from_vec(vec![0.0, limit]);
    let tau_grid = report_grid(tmax);

    let profile = if !planar.gain_depends_on_y() || y_b == limit {
        Profile::Exponential
    } else {
        let system = problem.system.clone();
        let taus: Vec<f64> = (0..TABLE_POINTS).map(|k| tmax * k as f64 / (TABLE_POINTS - 1) as f64).collect();
        let f = |_: f64, y: &DVector<f64>| DVector::from_element(1, planar_rate(&system, x_b, s2_sqrt, limit, y[0]));
        let ys: Vec<f64> = ode::integrate(f, &taus, &DVector::from_element(1, y_b), &OdeOptions::tol(1e-12, 1e-14))?
            .into_iter()
            .map(|v| v[0])
            .collect();
        let reached = (ys.last().unwrap() - limit).abs();
        if tmax * rate >= LAYER_EFOLDS && reached > 1e-8 * limit.abs().max(1.0) {
            return Err(Error::NoDecay(format!(
                "{} layer ends {reached:.3e} away from its limit after {tmax:.3e} stretched time units",
                side.as_str()
            )));
        }
        Profile::Planar { x_b, s2_sqrt, system, taus, ys }
    };

    let mut sol = InnerSolution {
        side,
        tau_grid: Vec::new(),
        px_layer: Vec::new(),
        limit_value,
        boundary_value,
        decay_rate: rate,
        tau_max: tmax,
        profile,
    };
    sol.px_layer = tau_grid.iter().map(|&t| sol.eval(t).0).collect();
    sol.tau_grid = tau_grid;
    Ok(sol)
}

/// Left layer of a planar problem: `Y_L' = sqrt(s2) (y_init - Y_L) |b(x0, Y_L)|`, `Y_L(0) = y0`.
pub fn inner_left_2d(problem: &TrackingProblem, y_init: f64) -> Result<InnerSolution> {
    planar_layer(problem, Side::Left, y_init)
}

/// Right layer of a planar problem, in `tau = (t1 - t)/eps`, relaxing from `y1` to `y_end`.
pub fn inner_right_2d(problem: &TrackingProblem, y_end: f64) -> Result<InnerSolution> {
    planar_layer(problem, Side::Right, y_end)
}

/// Layer for a state-independent `B`: `c'' = (B^T S B) c` along `P X_L = limit + B c`,
/// keeping the decaying modes.
pub fn inner_linear_const_b(problem: &TrackingProblem, side: Side, limit_value: &DVector<f64>) -> Result<InnerSolution> {
    if !problem.system.has_constant_input() {
        return Err(Error::NotSupported("linear layer requires a state-independent input matrix".into()));
    }
    let xb = boundary_state(problem, side);
    let ps = projector_set(&problem.system, &problem.weight, xb)?;
    let b = problem.system.input(xb);
    let gram = b.transpose() * &problem.weight * &b;
    let eig = gram.symmetric_eigen();
    let mu_min = eig.eigenvalues.min();
    if !(mu_min > 0.0) {
        return Err(Error::NonHyperbolic { eigenvalue: mu_min });
    }
    let rates = eig.eigenvalues.map(f64::sqrt);
    let v = eig.eigenvectors;
    let boundary_value = &ps.p * xb;
    let coeff = v.transpose() * (&ps.bg * (&boundary_value - limit_value));
    let rate = rates.min();
    let tmax = tau_max(problem, rate);
    let tau_grid = report_grid(tmax);
    let mut sol = InnerSolution {
        side,
        tau_grid: Vec::new(),
        px_layer: Vec::new(),
        limit_value: limit_value.clone(),
        boundary_value,
        decay_rate: rate,
        tau_max: tmax,
        profile: Profile::Modal { b, v, rates, coeff },
    };
    sol.px_layer = tau_grid.iter().map(|&t| sol.eval(t).0).collect();
    sol.tau_grid = tau_grid;
    Ok(sol)
}

/// Pick the layer solver for `problem` and match it to `outer` at `side`.
pub fn solve_inner(problem: &TrackingProblem, outer: &OuterSolution, side: Side) -> Result<InnerSolution> {
    let x_outer = match side {
        Side::Left => outer.x_start(),
        Side::Right => outer.x_end(),
    };
    let limit = &outer.p * x_outer;
    let planar_ok = problem.system.planar().is_some() && problem.diagonal_weight().is_some();
    if planar_ok {
        planar_layer(problem, side, limit[1])
    } else if problem.system.has_constant_input() {
        inner_linear_const_b(problem, side, &limit)
    } else {
        Err(Error::NotSupported(format!(
            "boundary layers for state-dependent B are only available for planar systems with diagonal weight \
             (model '{}'); use the exact eps = 0 solution instead",
            problem.system.name()
        )))
    }
}

/// `V(x, y) = (grad B) B^g y`, with `V_ij = sum_{k,l} d_j B_il B^g_lk y_k`.
pub fn v_matrix(system: &ControlAffineSystem, ps: &ProjectorSet, x: &DVector<f64>, y: &DVector<f64>) -> DMatrix<f64> {
    let w = &ps.bg * y;
    system.input_gradient_times(x, &w)
}

/// `U(x) = -(grad B) B^g R(x)`.
pub fn u_matrix(system: &ControlAffineSystem, ps: &ProjectorSet, x: &DVector<f64>) -> DMatrix<f64> {
    -v_matrix(system, ps, x, &system.drift(x))
}

/// Largest entry of `Q^T V^T(x, y) Q^T` over the given pairs; zero means the
/// layer co-state `Q^T Lambda` is constant on both sides.
pub fn costate_coupling(system: &ControlAffineSystem, s: &DMatrix<f64>, pairs: &[(DVector<f64>, DVector<f64>)]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for (x, y) in pairs {
        let ps = projector_set(system, s, x)?;
        let qt = ps.q.transpose();
        let m = &qt * v_matrix(system, &ps, x, y).transpose() * &qt;
        worst = worst.max(m.amax());
    }
    Ok(worst)
}
