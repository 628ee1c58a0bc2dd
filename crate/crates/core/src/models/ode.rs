//! Adaptive Dormand–Prince 5(4) integration with the usual mixed
//! absolute/relative error control.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub atol: f64,
    pub rtol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { atol: 1e-8, rtol: 1e-8 }
    }
}

const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// fifth-order weights equal the last row of A (first same as last)
const B: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B_LOW: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

const MAX_STEPS: usize = 1_000_000;

/// Integrates the autonomous system `ẋ = f(x)` over `[0, dt]`.
pub fn integrate<F>(f: F, x0: &[f64], dt: f64, tol: Tolerances) -> Result<Vec<f64>>
where
    F: Fn(&[f64], &mut [f64]),
{
    if !(dt >= 0.0) || !dt.is_finite() {
        return Err(Error::Integration(format!("invalid interval {dt}")));
    }
    let n = x0.len();
    let mut x = x0.to_vec();
    if dt == 0.0 || n == 0 {
        return Ok(x);
    }
    let mut k = vec![vec![0.0; n]; 7];
    let mut stage = vec![0.0; n];
    let mut x_new = vec![0.0; n];
    f(&x, &mut k[0]);

    let scale = |x: &[f64], i: usize, y: f64| tol.atol + tol.rtol * x[i].abs().max(y.abs());
    let d0 = rms((0..n).map(|i| x[i] / scale(&x, i, x[i])));
    let d1 = rms((0..n).map(|i| k[0][i] / scale(&x, i, x[i])));
    let mut h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h = h.min(dt);

    let mut t = 0.0;
    let h_min = 1e-14 * dt;
    for _ in 0..MAX_STEPS {
        if t >= dt {
            return Ok(x);
        }
        let last = t + h >= dt;
        if last {
            h = dt - t;
        }
        for s in 1..7 {
            for i in 0..n {
                let mut acc = x[i];
                for (j, kj) in k.iter().enumerate().take(s) {
                    acc += h * A[s][j] * kj[i];
                }
                stage[i] = acc;
            }
            f(&stage, &mut k[s]);
        }
        for i in 0..n {
            x_new[i] = x[i] + h * (0..7).map(|s| B[s] * k[s][i]).sum::<f64>();
        }
        let err = rms((0..n).map(|i| {
            let e = h * (0..7).map(|s| (B[s] - B_LOW[s]) * k[s][i]).sum::<f64>();
            e / scale(&x, i, x_new[i])
        }));
        if !err.is_finite() {
            return Err(Error::Integration("non-finite state".into()));
        }
        if err <= 1.0 {
            t = if last { dt } else { t + h };
            x.copy_from_slice(&x_new);
            k.swap(0, 6);
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= if err <= 1.0 { factor } else { factor.min(1.0) };
        if h < h_min && t < dt {
            return Err(Error::Integration(format!("step size underflow at t = {t}")));
        }
    }
    Err(Error::Integration("step budget exhausted".into()))
}

fn rms(v: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = v.len().max(1) as f64;
    (v.map(|x| x * x).sum::<f64>() / n).sqrt()
}
