//! Sampled trajectories and time grids.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Flavor {
    Outer,
    InnerLeft,
    InnerRight,
    Composite,
    ExactEps0,
    Oracle,
    ClosedLoop,
}

impl Flavor {
    pub fn as_str(self) -> &'static str {
        match self {
            Flavor::Outer => "outer",
            Flavor::InnerLeft => "inner-left",
            Flavor::InnerRight => "inner-right",
            Flavor::Composite => "composite",
            Flavor::ExactEps0 => "exact-eps0",
            Flavor::Oracle => "oracle",
            Flavor::ClosedLoop => "closed-loop",
        }
    }
}

/// Impulsive control at a boundary of the exact `eps = 0` solution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaKick {
    pub time: f64,
    /// Coefficient of the Dirac delta in the control, `+-2 B^g(x_b) (X(t_b) - x_b)`.
    pub strength: Vec<f64>,
    /// `P (X(t_b) - x_b)`, the state discontinuity mediated by the kick.
    pub jump: Vec<f64>,
}

/// Samples of state, co-state and control on a strictly increasing grid.
///
/// `xdot`, when present, holds the analytic state derivative at each sample.
#[derive(Clone, Debug)]
pub struct TrajectorySolution {
    pub grid: Vec<f64>,
    pub x: Vec<DVector<f64>>,
    pub lambda: Option<Vec<DVector<f64>>>,
    pub u: Vec<DVector<f64>>,
    pub xdot: Option<Vec<DVector<f64>>>,
    pub flavor: Flavor,
    pub kicks: Vec<DeltaKick>,
}

impl TrajectorySolution {
    pub fn new(
        grid: Vec<f64>,
        x: Vec<DVector<f64>>,
        lambda: Option<Vec<DVector<f64>>>,
        u: Vec<DVector<f64>>,
        flavor: Flavor,
    ) -> Result<Self> {
        let sol = Self { grid, x, lambda, u, xdot: None, flavor, kicks: Vec::new() };
        sol.validate()?;
        Ok(sol)
    }

    pub fn with_xdot(mut self, xdot: Vec<DVector<f64>>) -> Result<Self> {
        self.xdot = Some(xdot);
        self.validate()?;
        Ok(self)
    }

    pub fn with_kicks(mut self, kicks: Vec<DeltaKick>) -> Self {
        self.kicks = kicks;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let len = self.grid.len();
        if len < 2 {
            return Err(Error::GridMismatch("trajectory needs at least two samples".into()));
        }
        if self.grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::GridMismatch("grid is not strictly increasing".into()));
        }
        let lens_ok = self.x.len() == len
            && self.u.len() == len
            && self.lambda.as_ref().is_none_or(|l| l.len() == len)
            && self.xdot.as_ref().is_none_or(|d| d.len() == len);
        if !lens_ok {
            return Err(Error::GridMismatch("sample arrays differ in length from the grid".into()));
        }
        let finite = self.grid.iter().all(|t| t.is_finite())
            && all_finite(&self.x)
            && all_finite(&self.u)
            && self.lambda.as_deref().is_none_or(all_finite)
            && self.xdot.as_deref().is_none_or(all_finite);
        if !finite {
            return Err(Error::GridMismatch("trajectory contains non-finite samples".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn n(&self) -> usize {
        self.x[0].len()
    }

    pub fn p(&self) -> usize {
        self.u[0].len()
    }

    pub fn t0(&self) -> f64 {
        self.grid[0]
    }

    pub fn t1(&self) -> f64 {
        *self.grid.last().unwrap()
    }

    /// Linear interpolation of the state at `t` (clamped to the grid).
    pub fn state_at(&self, t: f64) -> DVector<f64> {
        interpolate(&self.grid, &self.x, t)
    }

    pub fn control_at(&self, t: f64) -> DVector<f64> {
        interpolate(&self.grid, &self.u, t)
    }

    pub fn costate_at(&self, t: f64) -> Option<DVector<f64>> {
        self.lambda.as_ref().map(|l| interpolate(&self.grid, l, t))
    }
}

fn all_finite(v: &[DVector<f64>]) -> bool {
    v.iter().all(|x| x.iter().all(|c| c.is_finite()))
}

/// Index `i` with `grid[i] <= t < grid[i + 1]`, clamped to valid intervals.
pub fn locate(grid: &[f64], t: f64) -> usize {
    let last = grid.len() - 2;
    match grid.binary_search_by(|g| g.partial_cmp(&t).unwrap()) {
        Ok(i) => i.min(last),
        Err(0) => 0,
        Err(i) => (i - 1).min(last),
    }
}

pub fn interpolate(grid: &[f64], values: &[DVector<f64>], t: f64) -> DVector<f64> {
    if t <= grid[0] {
        return values[0].clone();
    }
    if t >= grid[grid.len() - 1] {
        return values[values.len() - 1].clone();
    }
    let i = locate(grid, t);
    let w = (t - grid[i]) / (grid[i + 1] - grid[i]);
    &values[i] * (1.0 - w) + &values[i + 1] * w
}

/// Uniform grid from `t0` to `t1` with step close to `dt`; endpoints are exact.
pub fn uniform_grid(t0: f64, t1: f64, dt: f64) -> Vec<f64> {
    assert!(dt > 0.0 && t1 > t0);
    let steps = ((t1 - t0) / dt - 1e-9).ceil().max(1.0) as usize;
    let h = (t1 - t0) / steps as f64;
    (0..=steps)
        .map(|k| if k == steps { t1 } else { t0 + k as f64 * h })
        .collect()
}

/// Uniform grid with extra samples inside both boundary layers.
///
/// Adds `per_width` points per `eps` over the first and last `layer_widths * eps`.
pub fn layer_refined_grid(t0: f64, t1: f64, dt: f64, eps: f64, layer_widths: f64, per_width: usize) -> Vec<f64> {
    let mut grid = uniform_grid(t0, t1, dt);
    if eps > 0.0 {
        let span = (layer_widths * eps).min(0.5 * (t1 - t0));
        let h = eps / per_width as f64;
        let count = (span / h).floor() as usize;
        for k in 1..=count {
            let s = k as f64 * h;
            grid.push(t0 + s);
            grid.push(t1 - s);
        }
    }
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let min_gap = 1e-12 * (t1 - t0);
    grid.dedup_by(|b, a| (*b - *a).abs() <= min_gap);
    let last = grid.len() - 1;
    grid[last] = t1;
    grid
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_grid_hits_endpoints() {
        let g = uniform_grid(0.0, 1.0, 1e-3);
        assert_eq!(g.len(), 1001);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[1000], 1.0);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn refined_grid_is_strictly_increasing() {
        let g = layer_refined_grid(0.0, 1.0, 1e-2, 1e-3, 20.0, 10);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(*g.last().unwrap(), 1.0);
        assert!(g.iter().filter(|&&t| t < 0.02).count() >= 200);
    }

    #[test]
    fn rejects_bad_trajectories() {
        let x = vec![DVector::zeros(1); 2];
        let u = vec![DVector::zeros(1); 2];
        assert!(TrajectorySolution::new(vec![0.0, 0.0], x.clone(), None, u.clone(), Flavor::Outer).is_err());
        let mut bad = x.clone();
        bad[1][0] = f64::NAN;
        assert!(TrajectorySolution::new(vec![0.0, 1.0], bad, None, u.clone(), Flavor::Outer).is_err());
        assert!(TrajectorySolution::new(vec![0.0, 1.0], x, None, u, Flavor::Outer).is_ok());
    }

    #[test]
    fn interpolation_is_linear() {
        let grid = vec![0.0, 1.0, 3.0];
        let vals = vec![DVector::from_element(1, 0.0), DVector::from_element(1, 2.0), DVector::from_element(1, 0.0)];
        assert_eq!(interpolate(&grid, &vals, 0.5)[0], 1.0);
        assert_eq!(interpolate(&grid, &vals, 2.0)[0], 1.0);
        assert_eq!(interpolate(&grid, &vals, 5.0)[0], 0.0);
    }
}
