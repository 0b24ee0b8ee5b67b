//! Adaptive Simpson quadrature for scalar and vector integrands.

use crate::error::{Error, Result};

const MAX_DEPTH: u32 = 50;

/// `∫_a^b f` to absolute tolerance `tol`.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(&f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if !delta.is_finite() {
        return Err(Error::Quadrature { lo: a, hi: b });
    }
    if delta.abs() <= 15.0 * tol || (b - a).abs() < 1e-15 * (1.0 + a.abs()) {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(Error::Quadrature { lo: a, hi: b });
    }
    Ok(simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?
        + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?)
}

/// Componentwise `∫_a^b f`, refined until every component meets `tol`.
pub fn simpson_vec<F: Fn(f64) -> Vec<f64>>(f: F, a: f64, b: f64, tol: f64) -> Result<Vec<f64>> {
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = simpson_panel(a, b, &fa, &fm, &fb);
    simpson_vec_rec(&f, a, b, &fa, &fm, &fb, whole, tol, MAX_DEPTH)
}

fn simpson_panel(a: f64, b: f64, fa: &[f64], fm: &[f64], fb: &[f64]) -> Vec<f64> {
    let h = (b - a) / 6.0;
    (0..fa.len()).map(|i| h * (fa[i] + 4.0 * fm[i] + fb[i])).collect()
}

#[allow(clippy::too_many_arguments)]
fn simpson_vec_rec<F: Fn(f64) -> Vec<f64>>(
    f: &F,
    a: f64,
    b: f64,
    fa: &[f64],
    fm: &[f64],
    fb: &[f64],
    whole: Vec<f64>,
    tol: f64,
    depth: u32,
) -> Result<Vec<f64>> {
    let m = 0.5 * (a + b);
    let (flm, frm) = (f(0.5 * (a + m)), f(0.5 * (m + b)));
    let left = simpson_panel(a, m, fa, &flm, fm);
    let right = simpson_panel(m, b, fm, &frm, fb);
    let mut worst = 0.0f64;
    let mut out = Vec::with_capacity(whole.len());
    for i in 0..whole.len() {
        let delta = left[i] + right[i] - whole[i];
        if !delta.is_finite() {
            return Err(Error::Quadrature { lo: a, hi: b });
        }
        worst = worst.max(delta.abs());
        out.push(left[i] + right[i] + delta / 15.0);
    }
    if worst <= 15.0 * tol || (b - a).abs() < 1e-15 * (1.0 + a.abs()) {
        return Ok(out);
    }
    if depth == 0 {
        return Err(Error::Quadrature { lo: a, hi: b });
    }
    let l = simpson_vec_rec(f, a, m, fa, &flm, fm, left, 0.5 * tol, depth - 1)?;
    let r = simpson_vec_rec(f, m, b, fm, &frm, fb, right, 0.5 * tol, depth - 1)?;
    Ok(l.iter().zip(&r).map(|(p, q)| p + q).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_sine() {
        let v = simpson(f64::sin, 0.0, 0.1, 1e-14).unwrap();
        assert!((v - (1.0 - 0.1f64.cos())).abs() < 1e-14);
    }

    #[test]
    fn integrates_reciprocal() {
        let v = simpson(|t| 1.0 / t, 1.0, 10.0, 1e-12).unwrap();
        assert!((v - 10f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn vector_matches_scalar() {
        let v = simpson_vec(|t| vec![t.cos(), t * t], 0.0, 2.0, 1e-13).unwrap();
        assert!((v[0] - 2f64.sin()).abs() < 1e-12);
        assert!((v[1] - 8.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn non_finite_integrand_is_reported() {
        let e = simpson(|t| 1.0 / t, 0.0, 1.0, 1e-10).unwrap_err();
        assert!(matches!(e, Error::Quadrature { .. }));
    }
}
