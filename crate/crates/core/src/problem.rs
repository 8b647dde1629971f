use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::desired::DesiredTrajectory;
use crate::error::{Error, Result};
use crate::system::ControlAffineSystem;

const SYMMETRY_TOL: f64 = 1e-12;

/// Tracking problem: minimize `1/2 int (x - x_d)^T S (x - x_d) + eps^2/2 int |u|^2`
/// subject to the dynamics and fixed boundary states.
#[derive(Clone, Debug)]
pub struct TrackingProblem {
    pub system: Arc<ControlAffineSystem>,
    pub weight: DMatrix<f64>,
    pub epsilon: f64,
    pub desired: DesiredTrajectory,
    pub t0: f64,
    pub t1: f64,
    pub x0: DVector<f64>,
    pub x1: DVector<f64>,
}

impl TrackingProblem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        system: Arc<ControlAffineSystem>,
        weight: DMatrix<f64>,
        epsilon: f64,
        desired: DesiredTrajectory,
        t0: f64,
        t1: f64,
        x0: DVector<f64>,
        x1: DVector<f64>,
    ) -> Result<Self> {
        let problem = Self { system, weight, epsilon, desired, t0, t1, x0, x1 };
        problem.validate()?;
        Ok(problem)
    }

    /// Boundary states taken from the desired trajectory at `t0` and `t1`.
    pub fn on_desired(
        system: Arc<ControlAffineSystem>,
        weight: DMatrix<f64>,
        epsilon: f64,
        desired: DesiredTrajectory,
        t0: f64,
        t1: f64,
    ) -> Result<Self> {
        let x0 = desired.value(t0);
        let x1 = desired.value(t1);
        Self::new(system, weight, epsilon, desired, t0, t1, x0, x1)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.system.n();
        let bad = |m: String| Err(Error::InvalidProblem(m));
        if self.weight.shape() != (n, n) {
            return bad(format!("weight matrix is {:?}, expected {n}x{n}", self.weight.shape()));
        }
        if self.x0.len() != n || self.x1.len() != n {
            return bad(format!("boundary states must have dimension {n}"));
        }
        if self.desired.dim() != n {
            return bad(format!("desired trajectory has dimension {}, expected {n}", self.desired.dim()));
        }
        if !(self.t0.is_finite() && self.t1.is_finite() && self.t1 > self.t0) {
            return bad(format!("need t1 > t0, got [{}, {}]", self.t0, self.t1));
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return bad(format!("epsilon must be finite and >= 0, got {}", self.epsilon));
        }
        if self.x0.iter().chain(self.x1.iter()).any(|v| !v.is_finite()) {
            return bad("boundary states must be finite".into());
        }
        let asym = (&self.weight - self.weight.transpose()).amax();
        if asym > SYMMETRY_TOL * self.weight.amax().max(1.0) {
            return bad(format!("weight matrix is not symmetric (max asymmetry {asym:.3e})"));
        }
        let min_eig = self.weight.clone().symmetric_eigenvalues().min();
        if min_eig <= 0.0 {
            return bad(format!("weight matrix is not positive definite (min eigenvalue {min_eig:.3e})"));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.system.n()
    }

    pub fn p(&self) -> usize {
        self.system.p()
    }

    pub fn horizon(&self) -> f64 {
        self.t1 - self.t0
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        let mut p = self.clone();
        p.epsilon = epsilon;
        p.validate()?;
        Ok(p)
    }

    /// Same problem restarted at `(t, x)` with the original terminal data.
    pub fn restarted_at(&self, t: f64, x: DVector<f64>) -> Result<Self> {
        let mut p = self.clone();
        p.t0 = t;
        p.x0 = x;
        p.validate()?;
        Ok(p)
    }

    /// Diagonal of `S` when `S` is diagonal.
    pub fn diagonal_weight(&self) -> Option<DVector<f64>> {
        let n = self.n();
        for i in 0..n {
            for j in 0..n {
                if i != j && self.weight[(i, j)] != 0.0 {
                    return None;
                }
            }
        }
        Some(self.weight.diagonal())
    }
}
