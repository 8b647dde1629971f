//! Weighted projectors onto the controlled and uncontrolled directions.
//!
//! With `G = B^T S B`:
//! `Omega = B G^-1 B^T`, `P = Omega S`, `Q = I - P`, `B^g = G^-1 B^T S` and
//! `Gamma = B^gT B^g`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, serde_rows, serde_vec};
use crate::system::ControlAffineSystem;

#[derive(Clone, Debug, PartialEq)]
pub struct ProjectorSet {
    pub omega: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
    pub bg: DMatrix<f64>,
    pub at_state: DVector<f64>,
    /// Condition number of `B^T S B`.
    pub condition: f64,
}

/// Frobenius-norm residuals of the projector identities.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct IdentityResiduals {
    pub p_idempotent: f64,
    pub q_idempotent: f64,
    pub p_plus_q: f64,
    pub pb: f64,
    pub qb: f64,
    pub omega_symmetric: f64,
    pub omega_s_omega: f64,
    pub bg_b: f64,
    pub pt_gamma: f64,
    pub gamma_symmetric: f64,
    pub pt_s: f64,
    pub p_omega: f64,
}

impl IdentityResiduals {
    pub fn max(&self) -> f64 {
        [
            self.p_idempotent,
            self.q_idempotent,
            self.p_plus_q,
            self.pb,
            self.qb,
            self.omega_symmetric,
            self.omega_s_omega,
            self.bg_b,
            self.pt_gamma,
            self.gamma_symmetric,
            self.pt_s,
            self.p_omega,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

impl ProjectorSet {
    /// Projectors for an explicit input matrix `b`.
    pub fn from_input(b: &DMatrix<f64>, s: &DMatrix<f64>, at_state: DVector<f64>) -> Result<Self> {
        let n = b.nrows();
        let gram = b.transpose() * s * b;
        let (gram_inv, condition) = linalg::spd_inverse(&gram)?;
        let omega = b * &gram_inv * b.transpose();
        let p = &omega * s;
        let q = DMatrix::identity(n, n) - &p;
        let bg = &gram_inv * b.transpose() * s;
        let gamma = bg.transpose() * &bg;
        Ok(Self { omega, p, q, gamma, bg, at_state, condition })
    }

    pub fn n(&self) -> usize {
        self.p.nrows()
    }

    pub fn identity_residuals(&self, b: &DMatrix<f64>, s: &DMatrix<f64>) -> IdentityResiduals {
        let n = self.n();
        let id = DMatrix::<f64>::identity(n, n);
        let ip = DMatrix::<f64>::identity(b.ncols(), b.ncols());
        IdentityResiduals {
            p_idempotent: (&self.p * &self.p - &self.p).norm(),
            q_idempotent: (&self.q * &self.q - &self.q).norm(),
            p_plus_q: (&self.p + &self.q - id).norm(),
            pb: (&self.p * b - b).norm(),
            qb: (&self.q * b).norm(),
            omega_symmetric: (&self.omega - self.omega.transpose()).norm(),
            omega_s_omega: (&self.omega * s * &self.omega - &self.omega).norm(),
            bg_b: (&self.bg * b - ip).norm(),
            pt_gamma: (self.p.transpose() * &self.gamma - &self.gamma).norm(),
            gamma_symmetric: (&self.gamma - self.gamma.transpose()).norm(),
            pt_s: (self.p.transpose() * s - s * &self.p).norm(),
            p_omega: (&self.p * &self.omega - &self.omega).norm(),
        }
    }
}

/// Projectors of `system` at state `x`.
pub fn projector_set(system: &ControlAffineSystem, s: &DMatrix<f64>, x: &DVector<f64>) -> Result<ProjectorSet> {
    ProjectorSet::from_input(&system.input(x), s, x.clone())
}

/// Outcome of checking that `Omega` is constant and `Q R` is affine.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LinearizingReport {
    pub omega_constant: bool,
    pub omega_deviation: f64,
    pub qr_affine: bool,
    pub qr_residual: f64,
    #[serde(with = "serde_rows")]
    pub fitted_a: DMatrix<f64>,
    #[serde(with = "serde_vec")]
    pub fitted_b: DVector<f64>,
    /// True when `(fitted_a, fitted_b)` echo the system's declared affine part.
    pub declared_affine: bool,
    pub samples_used: usize,
    pub tolerance: f64,
    #[serde(with = "serde_vec")]
    pub reference_state: DVector<f64>,
    #[serde(with = "serde_rows")]
    pub omega: DMatrix<f64>,
    #[serde(with = "serde_rows")]
    pub p: DMatrix<f64>,
    #[serde(with = "serde_rows")]
    pub q: DMatrix<f64>,
}

impl LinearizingReport {
    pub fn passed(&self) -> bool {
        self.omega_constant && self.qr_affine
    }

    /// `Err(NotLinearizable)` unless both conditions hold.
    pub fn require(&self) -> Result<()> {
        if self.passed() {
            return Ok(());
        }
        let mut why = Vec::new();
        if !self.omega_constant {
            why.push(format!("Omega varies by {:.3e} over the samples", self.omega_deviation));
        }
        if !self.qr_affine {
            why.push(format!("Q R deviates from an affine map by {:.3e}", self.qr_residual));
        }
        Err(Error::NotLinearizable(why.join("; ")))
    }
}

/// Check the linearizing assumption on `samples`.
///
/// The first sample is the reference state at which the returned projectors are
/// evaluated. `(A, b)` come from the declared affine part when it reproduces
/// `Q R` within `tol`, otherwise from a least-squares fit of `Q R(x) ~ M x + c`.
pub fn verify_linearizing(
    system: &ControlAffineSystem,
    s: &DMatrix<f64>,
    samples: &[DVector<f64>],
    tol: f64,
) -> Result<LinearizingReport> {
    let n = system.n();
    let needed = n + 2;
    if samples.len() < needed {
        return Err(Error::InsufficientSamples { needed, got: samples.len() });
    }
    let mut design = DMatrix::zeros(samples.len(), n + 1);
    for (i, x) in samples.iter().enumerate() {
        for j in 0..n {
            design[(i, j)] = x[j];
        }
        design[(i, n)] = 1.0;
    }
    let rank = design.clone().svd(false, false).rank(1e-10 * design.amax().max(1.0));
    if rank < n + 1 {
        return Err(Error::InsufficientSamples { needed, got: rank + 1 });
    }

    let reference = projector_set(system, s, &samples[0])?;
    let mut sets = Vec::with_capacity(samples.len());
    for x in samples {
        sets.push(projector_set(system, s, x)?);
    }
    let omega_deviation = sets.iter().map(|ps| (&ps.omega - &reference.omega).amax()).fold(0.0, f64::max);
    let omega_constant = omega_deviation <= tol;
    let q = &reference.q;

    let qr: Vec<DVector<f64>> = samples.iter().map(|x| q * system.drift(x)).collect();
    let affine_residual = |a: &DMatrix<f64>, b: &DVector<f64>| {
        samples
            .iter()
            .zip(&qr)
            .map(|(x, qrx)| (qrx - q * (a * x + b)).amax())
            .fold(0.0, f64::max)
    };

    let declared = system.affine_part().map(|ap| (ap.a.clone(), ap.b.clone(), affine_residual(&ap.a, &ap.b)));
    let (fitted_a, fitted_b, qr_residual, declared_affine) = match declared {
        Some((a, b, res)) if res <= tol => (a, b, res, true),
        _ => {
            let mut rhs = DMatrix::zeros(samples.len(), n);
            for (i, v) in qr.iter().enumerate() {
                rhs.set_row(i, &v.transpose());
            }
            let coef = design
                .clone()
                .svd(true, true)
                .solve(&rhs, 1e-14)
                .map_err(|e| Error::NotLinearizable(format!("least-squares fit failed: {e}")))?;
            // coef is (n+1) x n: rows 0..n hold M^T, the last row holds c^T.
            let a = coef.rows(0, n).transpose();
            let b = coef.row(n).transpose();
            let res = affine_residual(&a, &b);
            (a, b, res, false)
        }
    };

    Ok(LinearizingReport {
        omega_constant,
        omega_deviation,
        qr_affine: qr_residual <= tol,
        qr_residual,
        fitted_a,
        fitted_b,
        declared_affine,
        samples_used: samples.len(),
        tolerance: tol,
        reference_state: samples[0].clone(),
        omega: reference.omega,
        p: reference.p,
        q: reference.q,
    })
}

/// Latin-hypercube samples in the box `[lo, hi]`, deterministic in `seed`.
///
/// Returns `count` points: the box centre, so the reference state is
/// reproducible, followed by `count - 1` stratified samples.
pub fn latin_hypercube(lo: &DVector<f64>, hi: &DVector<f64>, count: usize, seed: u64) -> Vec<DVector<f64>> {
    let n = lo.len();
    if count == 0 {
        return Vec::new();
    }
    let count = count - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(n);
    for d in 0..n {
        let mut strata: Vec<usize> = (0..count).collect();
        for i in (1..count).rev() {
            let j = rng.gen_range(0..=i);
            strata.swap(i, j);
        }
        columns.push(
            strata
                .into_iter()
                .map(|k| {
                    let u = (k as f64 + rng.gen::<f64>()) / count as f64;
                    lo[d] + u * (hi[d] - lo[d])
                })
                .collect(),
        );
    }
    let mut out = vec![(lo + hi) * 0.5];
    out.extend((0..count).map(|i| DVector::from_fn(n, |d, _| columns[d][i])));
    out
}

/// Default number of Latin-hypercube samples for [`verify_linearizing`].
pub const DEFAULT_SAMPLES: usize = 64;
/// Default absolute tolerance for [`verify_linearizing`].
pub const DEFAULT_TOLERANCE: f64 = 1e-9;

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(v.len(), 1, v)
    }

    #[test]
    fn unit_single_input() {
        let ps = ProjectorSet::from_input(&col(&[0.0, 1.0]), &DMatrix::identity(2, 2), DVector::zeros(2)).unwrap();
        assert_eq!(ps.omega, DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]));
        assert_eq!(ps.p, DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]));
        assert_eq!(ps.q, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
        assert_eq!(ps.gamma, DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]));
        assert_eq!(ps.bg, DMatrix::from_row_slice(1, 2, &[0.0, 1.0]));
    }

    #[test]
    fn weighted_single_input() {
        let s = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 5.0]));
        let ps = ProjectorSet::from_input(&col(&[0.0, 1.0]), &s, DVector::zeros(2)).unwrap();
        assert!((ps.omega[(1, 1)] - 0.2).abs() < 1e-15);
        assert_eq!(ps.omega[(0, 0)], 0.0);
        assert!((ps.gamma - DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0])).amax() < 1e-15);
        assert!((ps.bg - DMatrix::from_row_slice(1, 2, &[0.0, 1.0])).amax() < 1e-15);
    }

    #[test]
    fn rank_deficient_input_is_singular() {
        let r = ProjectorSet::from_input(&col(&[0.0, 0.0]), &DMatrix::identity(2, 2), DVector::zeros(2));
        assert!(matches!(r, Err(Error::SingularGram { .. })));
    }

    #[test]
    fn latin_hypercube_is_stratified() {
        let lo = DVector::from_vec(vec![-1.0, 0.0]);
        let hi = DVector::from_vec(vec![1.0, 10.0]);
        let pts = latin_hypercube(&lo, &hi, 17, 7);
        assert_eq!(pts.len(), 17);
        for d in 0..2 {
            let mut bins: Vec<usize> = pts[1..]
                .iter()
                .map(|x| (((x[d] - lo[d]) / (hi[d] - lo[d])) * 16.0).floor() as usize)
                .collect();
            bins.sort_unstable();
            assert_eq!(bins, (0..16).collect::<Vec<_>>());
        }
        assert_eq!(pts, latin_hypercube(&lo, &hi, 17, 7));
    }
}
