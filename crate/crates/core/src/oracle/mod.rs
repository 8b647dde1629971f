//! Independent ground truth: direct solution of the optimality system,
//! cost evaluation and residual audits.

mod metrics;
mod residuals;
mod shooting;

pub use metrics::{compare_solutions, control_energy, evaluate_cost, Comparison, Cost, WindowMetrics};
pub use residuals::{optimality_residuals, ResidualReport, DISCRETIZATION_SAFETY};
pub use shooting::{
    jacobian_mismatch, solve_tpbvp, stiff_rate, InitialGuess, JacobianKind, Shooter, ShootingConfig, ShootingReport,
};
