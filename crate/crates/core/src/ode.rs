//! Adaptive Dormand–Prince 5(4) integration.

use nalgebra::DVector;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step; chosen automatically when `None`.
    pub h_init: Option<f64>,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self { rtol: 1e-10, atol: 1e-12, h_init: None, h_max: f64::INFINITY, max_steps: 2_000_000 }
    }
}

impl OdeOptions {
    pub fn tol(rtol: f64, atol: f64) -> Self {
        Self { rtol, atol, ..Self::default() }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// Difference between 5th- and 4th-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Integrate `y' = f(t, y)` from `times[0]` and return the state at every entry of `times`.
///
/// `times` must be strictly monotone (increasing or decreasing); each output time
/// is hit exactly by a step.
pub fn integrate<F>(mut f: F, times: &[f64], y0: &DVector<f64>, opts: &OdeOptions) -> Result<Vec<DVector<f64>>>
where
    F: FnMut(f64, &DVector<f64>) -> DVector<f64>,
{
    let mut out = Vec::with_capacity(times.len());
    out.push(y0.clone());
    if times.len() < 2 {
        return Ok(out);
    }
    let dir = (times[1] - times[0]).signum();
    if dir == 0.0 || times.windows(2).any(|w| (w[1] - w[0]) * dir <= 0.0) {
        return Err(Error::IntegratorFailure("output times must be strictly monotone".into()));
    }
    let mut t = times[0];
    let mut y = y0.clone();
    let mut k1 = f(t, &y);
    let mut h = opts.h_init.unwrap_or_else(|| initial_step(&mut f, t, &y, &k1, opts)).abs().min(opts.h_max);
    let mut steps = 0usize;

    for &target in &times[1..] {
        while (target - t) * dir > 0.0 {
            steps += 1;
            if steps > opts.max_steps {
                return Err(Error::IntegratorFailure(format!("step budget exhausted at t = {t}")));
            }
            let remaining = (target - t).abs();
            let last = h >= remaining * (1.0 - 1e-12);
            let hs = if last { remaining } else { h };
            let step = dopri_step(&mut f, t, &y, &k1, hs * dir);
            let err = error_norm(&step.err, &y, &step.y, opts);
            if !err.is_finite() {
                h = hs * 0.1;
                if h < 1e-14 * (1.0 + t.abs()) {
                    return Err(Error::IntegratorFailure(format!("non-finite state near t = {t}")));
                }
                continue;
            }
            if err <= 1.0 {
                t = if last { target } else { t + hs * dir };
                y = step.y;
                k1 = step.k7;
                let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                // Don't let a short final step shrink the next one.
                h = (hs.max(if last { h } else { 0.0 }) * fac).min(opts.h_max);
            } else {
                h = hs * (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
                if h < 1e-14 * (1.0 + t.abs()) {
                    return Err(Error::IntegratorFailure(format!("step size underflow at t = {t}")));
                }
            }
        }
        out.push(y.clone());
    }
    Ok(out)
}

/// Integrate to a single final time.
pub fn integrate_to<F>(f: F, t0: f64, t1: f64, y0: &DVector<f64>, opts: &OdeOptions) -> Result<DVector<f64>>
where
    F: FnMut(f64, &DVector<f64>) -> DVector<f64>,
{
    if t0 == t1 {
        return Ok(y0.clone());
    }
    Ok(integrate(f, &[t0, t1], y0, opts)?.pop().unwrap())
}

struct Step {
    y: DVector<f64>,
    err: DVector<f64>,
    k7: DVector<f64>,
}

fn dopri_step<F>(f: &mut F, t: f64, y: &DVector<f64>, k1: &DVector<f64>, h: f64) -> Step
where
    F: FnMut(f64, &DVector<f64>) -> DVector<f64>,
{
    let k2 = f(t + C2 * h, &(y + k1 * (h * A21)));
    let k3 = f(t + C3 * h, &(y + (k1 * A31 + &k2 * A32) * h));
    let k4 = f(t + C4 * h, &(y + (k1 * A41 + &k2 * A42 + &k3 * A43) * h));
    let k5 = f(t + C5 * h, &(y + (k1 * A51 + &k2 * A52 + &k3 * A53 + &k4 * A54) * h));
    let k6 = f(t + h, &(y + (k1 * A61 + &k2 * A62 + &k3 * A63 + &k4 * A64 + &k5 * A65) * h));
    let y_new = y + (k1 * B1 + &k3 * B3 + &k4 * B4 + &k5 * B5 + &k6 * B6) * h;
    let k7 = f(t + h, &y_new);
    let err = (k1 * E1 + &k3 * E3 + &k4 * E4 + &k5 * E5 + &k6 * E6 + &k7 * E7) * h;
    Step { y: y_new, err, k7 }
}

fn error_norm(err: &DVector<f64>, y: &DVector<f64>, y_new: &DVector<f64>, opts: &OdeOptions) -> f64 {
    let n = err.len().max(1) as f64;
    let sum: f64 = err
        .iter()
        .zip(y.iter().zip(y_new.iter()))
        .map(|(e, (a, b))| {
            let sc = opts.atol + opts.rtol * a.abs().max(b.abs());
            (e / sc).powi(2)
        })
        .sum();
    (sum / n).sqrt()
}

fn initial_step<F>(f: &mut F, t: f64, y: &DVector<f64>, f0: &DVector<f64>, opts: &OdeOptions) -> f64
where
    F: FnMut(f64, &DVector<f64>) -> DVector<f64>,
{
    let scale = |v: &DVector<f64>| {
        let n = v.len().max(1) as f64;
        (v.iter()
            .zip(y.iter())
            .map(|(a, b)| (a / (opts.atol + opts.rtol * b.abs())).powi(2))
            .sum::<f64>()
            / n)
            .sqrt()
    };
    let d0 = scale(y);
    let d1 = scale(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let f1 = f(t + h0, &(y + f0 * h0));
    let d2 = scale(&(f1 - f0)) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let times: Vec<f64> = (0..=10).map(|k| k as f64 * 0.1).collect();
        let y0 = DVector::from_element(1, 1.0);
        let ys = integrate(|_, y| -y, &times, &y0, &OdeOptions::default()).unwrap();
        for (t, y) in times.iter().zip(&ys) {
            assert!((y[0] - (-t).exp()).abs() < 1e-10);
        }
    }

    #[test]
    fn harmonic_oscillator_backward() {
        let y0 = DVector::from_vec(vec![1.0, 0.0]);
        let f = |_: f64, y: &DVector<f64>| DVector::from_vec(vec![y[1], -y[0]]);
        let y = integrate_to(f, 0.0, -2.0, &y0, &OdeOptions::default()).unwrap();
        assert!((y[0] - 2.0f64.cos()).abs() < 1e-9);
        assert!((y[1] - 2.0f64.sin()).abs() < 1e-9);
    }

    #[test]
    fn rejects_non_monotone_times() {
        let y0 = DVector::from_element(1, 1.0);
        assert!(integrate(|_, y| -y, &[0.0, 1.0, 0.5], &y0, &OdeOptions::default()).is_err());
    }
}
