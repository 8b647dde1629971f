//! Adaptive Gauss–Kronrod (7, 15) quadrature.

use nalgebra::DVector;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights for the odd-indexed Kronrod nodes (1, 3, 5) and the centre.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_DEPTH: u32 = 40;

fn gk15<F: FnMut(f64) -> DVector<f64>>(f: &mut F, a: f64, b: f64) -> (DVector<f64>, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = &fc * WGK[7];
    let mut gauss = &fc * WG[3];
    for (i, (&x, &w)) in XGK[..7].iter().zip(&WGK[..7]).enumerate() {
        let f1 = f(c - h * x);
        let f2 = f(c + h * x);
        let s = f1 + f2;
        kron += &s * w;
        if i % 2 == 1 {
            gauss += &s * WG[i / 2];
        }
    }
    let err = ((&kron - &gauss) * h).amax();
    (kron * h, err)
}

/// Integral of a vector-valued function over `[a, b]` to absolute tolerance `tol`
/// (max-norm).
pub fn integrate_vec<F: FnMut(f64) -> DVector<f64>>(mut f: F, a: f64, b: f64, tol: f64) -> DVector<f64> {
    let (whole, err) = gk15(&mut f, a, b);
    refine(&mut f, a, b, whole, err, tol, 0)
}

fn refine<F: FnMut(f64) -> DVector<f64>>(
    f: &mut F,
    a: f64,
    b: f64,
    whole: DVector<f64>,
    err: f64,
    tol: f64,
    depth: u32,
) -> DVector<f64> {
    if err <= tol || depth >= MAX_DEPTH {
        return whole;
    }
    let m = 0.5 * (a + b);
    let (left, el) = gk15(f, a, m);
    let (right, er) = gk15(f, m, b);
    if (el + er) <= tol {
        return left + right;
    }
    refine(f, a, m, left, el, 0.5 * tol, depth + 1) + refine(f, m, b, right, er, 0.5 * tol, depth + 1)
}

/// Scalar integral over `[a, b]` to absolute tolerance `tol`.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> f64 {
    integrate_vec(|t| DVector::from_element(1, f(t)), a, b, tol)[0]
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn polynomial_is_exact() {
        let v = integrate(|t| t.powi(7) - 3.0 * t * t, 0.0, 2.0, 1e-12);
        assert!((v - (32.0 - 8.0)).abs() < 1e-12);
    }

    #[test]
    fn oscillatory_integrand() {
        let v = integrate(|t| (20.0 * PI * t).sin().powi(2), 0.0, 1.0, 1e-12);
        assert!((v - 0.5).abs() < 1e-11);
    }

    #[test]
    fn sharp_exponential() {
        let v = integrate(|t| (-1000.0 * t).exp(), 0.0, 1.0, 1e-13);
        assert!((v - (1.0 - (-1000.0f64).exp()) / 1000.0).abs() < 1e-12);
    }
}
