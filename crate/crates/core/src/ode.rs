//! Dormand–Prince 5(4) integrator with embedded error control.
//!
//! Used only to build the exact-model proxy, so the interface is minimal:
//! integrate an autonomous-in-input right-hand side over one interval.

use crate::error::{Error, Result};
use crate::vecops::all_finite;

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

const MAX_STEPS: usize = 1_000_000;

/// Integrate `ẋ = f(t, x)` from `t0` to `t1` with mixed error tolerance
/// `tol·(1 + |x_i|)` per component.
pub fn dopri45<F>(f: F, t0: f64, t1: f64, x0: &[f64], tol: f64) -> Result<Vec<f64>>
where
    F: Fn(f64, &[f64]) -> Vec<f64>,
{
    let n = x0.len();
    let mut t = t0;
    let mut x = x0.to_vec();
    let span = t1 - t0;
    if span == 0.0 {
        return Ok(x);
    }
    let dir = span.signum();
    let mut h = dir * span.abs().min(0.1 * span.abs().max(1e-3));
    let mut k = vec![vec![0.0; n]; 7];
    k[0] = f(t, &x);
    let mut stage = vec![0.0; n];
    for _ in 0..MAX_STEPS {
        if (t1 - t) * dir <= 0.0 {
            return Ok(x);
        }
        if (t + h - t1) * dir > 0.0 {
            h = t1 - t;
        }
        for s in 1..7 {
            for i in 0..n {
                let mut acc = x[i];
                for j in 0..s {
                    acc += h * A[s][j] * k[j][i];
                }
                stage[i] = acc;
            }
            k[s] = f(t + C[s] * h, &stage);
        }
        // stage now holds the 5th-order solution (FSAL row)
        let mut err = 0.0f64;
        for i in 0..n {
            let mut e = 0.0;
            for s in 0..7 {
                e += (B5[s] - B4[s]) * k[s][i];
            }
            let sc = tol * (1.0 + x[i].abs().max(stage[i].abs()));
            err = err.max((h * e).abs() / sc);
        }
        if !err.is_finite() || !all_finite(&stage) {
            err = f64::INFINITY;
        }
        if err <= 1.0 {
            t = if (t + h - t1) * dir >= 0.0 { t1 } else { t + h };
            x.copy_from_slice(&stage);
            k[0] = k[6].clone();
        }
        let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= fac;
        if h.abs() < 1e-14 * (1.0 + t.abs()) {
            return Err(Error::StepUnderflow { t, state: x });
        }
    }
    Err(Error::StepUnderflow { t, state: x })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let x = dopri45(|_, x| vec![-x[0]], 0.0, 1.0, &[1.0], 1e-10).unwrap();
        assert!((x[0] - (-1f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn harmonic_oscillator_period() {
        let x = dopri45(|_, x| vec![x[1], -x[0]], 0.0, 2.0 * std::f64::consts::PI, &[1.0, 0.0], 1e-11).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-8 && x[1].abs() < 1e-8);
    }

    #[test]
    fn finite_time_blowup_underflows() {
        let e = dopri45(|_, x| vec![x[0] * x[0]], 0.0, 2.0, &[1.0], 1e-10).unwrap_err();
        assert!(matches!(e, Error::StepUnderflow { .. }));
    }
}
