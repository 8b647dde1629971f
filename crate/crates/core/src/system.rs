//! Control-affine dynamics `x' = R(x) + B(x) u`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

type VecFn = dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync;
type MatFn = dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync;
type TensorFn = dyn Fn(&DVector<f64>) -> Vec<DMatrix<f64>> + Send + Sync;
type ScalarFn2 = dyn Fn(f64, f64) -> f64 + Send + Sync;

/// Declared constant affine structure `R(x) ~ A x + b` on the uncontrolled rows.
#[derive(Clone, Debug, PartialEq)]
pub struct AffinePart {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

/// Metadata for planar systems `x' = a0 + a1 x + a2 y`, `y' = R(x, y) + b(x, y) u`.
#[derive(Clone)]
pub struct PlanarForm {
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
    gain: Arc<ScalarFn2>,
    gain_dy: Arc<ScalarFn2>,
    gain_depends_on_y: bool,
}

impl PlanarForm {
    pub fn new<G, Gy>(a0: f64, a1: f64, a2: f64, gain: G, gain_dy: Gy, gain_depends_on_y: bool) -> Self
    where
        G: Fn(f64, f64) -> f64 + Send + Sync + 'static,
        Gy: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            a0,
            a1,
            a2,
            gain: Arc::new(gain),
            gain_dy: Arc::new(gain_dy),
            gain_depends_on_y,
        }
    }

    pub fn gain(&self, x: f64, y: f64) -> f64 {
        (self.gain)(x, y)
    }

    pub fn gain_dy(&self, x: f64, y: f64) -> f64 {
        (self.gain_dy)(x, y)
    }

    pub fn gain_depends_on_y(&self) -> bool {
        self.gain_depends_on_y
    }

    pub fn is_mechanical(&self) -> bool {
        self.a0 == 0.0 && self.a1 == 0.0 && self.a2 == 1.0
    }
}

impl fmt::Debug for PlanarForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PlanarForm")
            .field("a0", &self.a0)
            .field("a1", &self.a1)
            .field("a2", &self.a2)
            .field("gain_depends_on_y", &self.gain_depends_on_y)
            .finish()
    }
}

/// A control-affine system with user-supplied first derivatives.
///
/// `input_gradient(x)[j]` is the `n x p` matrix `dB/dx_j`.
#[derive(Clone)]
pub struct ControlAffineSystem {
    name: String,
    n: usize,
    p: usize,
    drift: Arc<VecFn>,
    drift_jacobian: Arc<MatFn>,
    input: Arc<MatFn>,
    input_gradient: Arc<TensorFn>,
    affine_part: Option<AffinePart>,
    planar: Option<PlanarForm>,
    constant_input: bool,
}

impl ControlAffineSystem {
    pub fn new<R, JR, B, JB>(
        name: impl Into<String>,
        n: usize,
        p: usize,
        drift: R,
        drift_jacobian: JR,
        input: B,
        input_gradient: JB,
    ) -> Self
    where
        R: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        JR: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
        B: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
        JB: Fn(&DVector<f64>) -> Vec<DMatrix<f64>> + Send + Sync + 'static,
    {
        assert!(p >= 1 && p <= n, "control dimension must satisfy 1 <= p <= n");
        Self {
            name: name.into(),
            n,
            p,
            drift: Arc::new(drift),
            drift_jacobian: Arc::new(drift_jacobian),
            input: Arc::new(input),
            input_gradient: Arc::new(input_gradient),
            affine_part: None,
            planar: None,
            constant_input: false,
        }
    }

    pub fn with_affine_part(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        assert_eq!(a.shape(), (self.n, self.n));
        assert_eq!(b.len(), self.n);
        self.affine_part = Some(AffinePart { a, b });
        self
    }

    pub fn with_planar_form(mut self, planar: PlanarForm) -> Self {
        assert_eq!((self.n, self.p), (2, 1), "planar form requires n = 2, p = 1");
        self.planar = Some(planar);
        self
    }

    /// Marks `B` as state independent.
    pub fn with_constant_input(mut self) -> Self {
        self.constant_input = true;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn drift(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.drift)(x)
    }

    pub fn drift_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        (self.drift_jacobian)(x)
    }

    pub fn input(&self, x: &DVector<f64>) -> DMatrix<f64> {
        (self.input)(x)
    }

    pub fn input_gradient(&self, x: &DVector<f64>) -> Vec<DMatrix<f64>> {
        (self.input_gradient)(x)
    }

    pub fn affine_part(&self) -> Option<&AffinePart> {
        self.affine_part.as_ref()
    }

    pub fn planar(&self) -> Option<&PlanarForm> {
        self.planar.as_ref()
    }

    pub fn has_constant_input(&self) -> bool {
        self.constant_input
    }

    /// `R(x) + B(x) u`
    pub fn rhs(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        self.drift(x) + self.input(x) * u
    }

    /// `(dB/dx . u)_{ij} = sum_l dB_il/dx_j u_l`
    pub fn input_gradient_times(&self, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        let grads = self.input_gradient(x);
        let mut out = DMatrix::zeros(self.n, self.n);
        for (j, g) in grads.iter().enumerate() {
            out.set_column(j, &(g * u));
        }
        out
    }

    /// Smallest singular value of `B(x)` relative to the largest.
    pub fn input_rank_ratio(&self, x: &DVector<f64>) -> f64 {
        let sv = self.input(x).singular_values();
        let max = sv.max();
        if max == 0.0 {
            0.0
        } else {
            sv.min() / max
        }
    }
}

impl fmt::Debug for ControlAffineSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlAffineSystem")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("p", &self.p)
            .field("affine_part", &self.affine_part)
            .field("planar", &self.planar)
            .field("constant_input", &self.constant_input)
            .finish()
    }
}

/// Maximum deviation between `drift_jacobian` and a forward difference of `drift`.
pub fn drift_jacobian_fd_error(system: &ControlAffineSystem, x: &DVector<f64>, h: f64) -> f64 {
    let jac = system.drift_jacobian(x);
    let r0 = system.drift(x);
    let mut err: f64 = 0.0;
    for j in 0..system.n() {
        let mut xp = x.clone();
        xp[j] += h;
        let col = (system.drift(&xp) - &r0) / h;
        err = err.max((col - jac.column(j)).amax());
    }
    err
}

/// Maximum deviation between `input_gradient` and a forward difference of `input`.
pub fn input_gradient_fd_error(system: &ControlAffineSystem, x: &DVector<f64>, h: f64) -> f64 {
    let grads = system.input_gradient(x);
    let b0 = system.input(x);
    let mut err: f64 = 0.0;
    for (j, g) in grads.iter().enumerate() {
        let mut xp = x.clone();
        xp[j] += h;
        let fd = (system.input(&xp) - &b0) / h;
        err = err.max((fd - g).amax());
    }
    err
}
