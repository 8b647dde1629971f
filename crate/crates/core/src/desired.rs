//! Desired trajectories built from constants, monomials and harmonics.
//!
//! Each state component is a finite sum of [`Term`]s, so value and time
//! derivative are both available in closed form. Library users may also wrap
//! an arbitrary closure with [`DesiredTrajectory::custom`]; such trajectories
//! cannot be serialized.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

/// One summand of a desired-trajectory component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Term {
    Constant {
        value: f64,
    },
    /// `coefficient * t^exponent`
    Power {
        coefficient: f64,
        exponent: u32,
    },
    /// `amplitude * cos(omega t + phase)`
    Cos {
        amplitude: f64,
        omega: f64,
        #[serde(default)]
        phase: f64,
    },
    /// `amplitude * sin(omega t + phase)`
    Sin {
        amplitude: f64,
        omega: f64,
        #[serde(default)]
        phase: f64,
    },
}

impl Term {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Term::Constant { value } => value,
            Term::Power { coefficient, exponent } => coefficient * t.powi(exponent as i32),
            Term::Cos { amplitude, omega, phase } => amplitude * (omega * t + phase).cos(),
            Term::Sin { amplitude, omega, phase } => amplitude * (omega * t + phase).sin(),
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match *self {
            Term::Constant { .. } => 0.0,
            Term::Power { exponent: 0, .. } => 0.0,
            Term::Power { coefficient, exponent } => {
                coefficient * exponent as f64 * t.powi(exponent as i32 - 1)
            }
            Term::Cos { amplitude, omega, phase } => -amplitude * omega * (omega * t + phase).sin(),
            Term::Sin { amplitude, omega, phase } => amplitude * omega * (omega * t + phase).cos(),
        }
    }

    /// The time derivative expressed as terms of the same family.
    pub fn differentiated(&self) -> Option<Term> {
        match *self {
            Term::Constant { .. } | Term::Power { exponent: 0, .. } => None,
            Term::Power { coefficient, exponent } => Some(Term::Power {
                coefficient: coefficient * exponent as f64,
                exponent: exponent - 1,
            }),
            Term::Cos { amplitude, omega, phase } => Some(Term::Sin {
                amplitude: -amplitude * omega,
                omega,
                phase,
            }),
            Term::Sin { amplitude, omega, phase } => Some(Term::Cos {
                amplitude: amplitude * omega,
                omega,
                phase,
            }),
        }
    }
}

/// A scalar component: sum of terms.
pub type Component = Vec<Term>;

pub fn component_value(terms: &[Term], t: f64) -> f64 {
    terms.iter().map(|term| term.value(t)).sum()
}

pub fn component_derivative(terms: &[Term], t: f64) -> f64 {
    terms.iter().map(|term| term.derivative(t)).sum()
}

/// Term-wise derivative of a component.
pub fn differentiate_component(terms: &[Term]) -> Component {
    terms.iter().filter_map(Term::differentiated).collect()
}

type CustomFn = dyn Fn(f64) -> (DVector<f64>, DVector<f64>) + Send + Sync;

#[derive(Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum Repr {
    Terms(Vec<Component>),
    #[serde(skip)]
    Custom { dim: usize, f: Arc<CustomFn> },
}

/// Desired trajectory `x_d(t)` with analytic derivative.
#[derive(Clone, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DesiredTrajectory {
    repr: Repr,
}

impl DesiredTrajectory {
    pub fn from_components(components: Vec<Component>) -> Self {
        Self { repr: Repr::Terms(components) }
    }

    /// Wrap a closure returning `(x_d(t), dx_d/dt(t))`.
    pub fn custom<F>(dim: usize, f: F) -> Self
    where
        F: Fn(f64) -> (DVector<f64>, DVector<f64>) + Send + Sync + 'static,
    {
        Self { repr: Repr::Custom { dim, f: Arc::new(f) } }
    }

    pub fn constant(values: &[f64]) -> Self {
        Self::from_components(values.iter().map(|&value| vec![Term::Constant { value }]).collect())
    }

    pub fn zeros(dim: usize) -> Self {
        Self::from_components(vec![Vec::new(); dim])
    }

    pub fn dim(&self) -> usize {
        match &self.repr {
            Repr::Terms(c) => c.len(),
            Repr::Custom { dim, .. } => *dim,
        }
    }

    pub fn components(&self) -> Option<&[Component]> {
        match &self.repr {
            Repr::Terms(c) => Some(c),
            Repr::Custom { .. } => None,
        }
    }

    pub fn value(&self, t: f64) -> DVector<f64> {
        self.eval(t).0
    }

    pub fn derivative(&self, t: f64) -> DVector<f64> {
        self.eval(t).1
    }

    /// Value and first derivative at `t`.
    pub fn eval(&self, t: f64) -> (DVector<f64>, DVector<f64>) {
        match &self.repr {
            Repr::Terms(c) => (
                DVector::from_iterator(c.len(), c.iter().map(|terms| component_value(terms, t))),
                DVector::from_iterator(c.len(), c.iter().map(|terms| component_derivative(terms, t))),
            ),
            Repr::Custom { f, .. } => f(t),
        }
    }

    /// Component `i` as a closure `t -> (value, derivative)`.
    pub fn component_fn(&self, i: usize) -> impl Fn(f64) -> (f64, f64) + '_ {
        move |t| match &self.repr {
            Repr::Terms(c) => (component_value(&c[i], t), component_derivative(&c[i], t)),
            Repr::Custom { f, .. } => {
                let (v, d) = f(t);
                (v[i], d[i])
            }
        }
    }
}

impl fmt::Debug for DesiredTrajectory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.repr {
            Repr::Terms(c) => f.debug_tuple("DesiredTrajectory").field(c).finish(),
            Repr::Custom { dim, .. } => write!(f, "DesiredTrajectory(custom, dim = {dim})"),
        }
    }
}

/// `cos(2 pi t) - 2 t`, the angular-displacement target of the pendulum experiment.
pub fn pendulum_displacement() -> Component {
    vec![
        Term::Cos { amplitude: 1.0, omega: 2.0 * PI, phase: 0.0 },
        Term::Power { coefficient: -2.0, exponent: 1 },
    ]
}

/// Named desired-trajectory presets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// `x_d = cos(2 pi t) - 2t`, `y_d = x_d + sin(4 pi t)`: the velocity target is
    /// built from the displacement itself, not its derivative.
    PendulumFig1,
    /// `x_d` as above, `y_d = dx_d/dt + sin(4 pi t)`.
    PendulumFig1Velocity,
}

impl Preset {
    pub fn build(self) -> DesiredTrajectory {
        let xd = pendulum_displacement();
        let wobble = Term::Sin { amplitude: 1.0, omega: 4.0 * PI, phase: 0.0 };
        let mut yd = match self {
            Preset::PendulumFig1 => xd.clone(),
            Preset::PendulumFig1Velocity => differentiate_component(&xd),
        };
        yd.push(wobble);
        DesiredTrajectory::from_components(vec![xd, yd])
    }
}
