//! Optimal trajectory tracking for control-affine systems by singular perturbation.
//!
//! The pipeline is: certify the linearizing structure ([`projectors`]), solve
//! the linear outer problem ([`outer`]), heal the boundary conditions with
//! boundary layers ([`inner`]) and assemble a uniformly valid solution
//! ([`composite`]). [`oracle`] solves the full necessary conditions directly
//! and is used as ground truth.

pub mod composite;
pub mod desired;
pub mod error;
pub mod inner;
pub mod linalg;
pub mod models;
pub mod ode;
pub mod oracle;
pub mod outer;
pub mod problem;
pub mod projectors;
pub mod quadrature;
pub mod system;
pub mod trajectory;

pub use desired::{DesiredTrajectory, Preset, Term};
pub use error::{Error, Result};
pub use problem::TrackingProblem;
pub use system::ControlAffineSystem;
pub use trajectory::{DeltaKick, Flavor, TrajectorySolution};
