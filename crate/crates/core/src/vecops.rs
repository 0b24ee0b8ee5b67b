//! Small dense-vector helpers. States in this crate are low dimensional and
//! stored as plain `Vec<f64>`.

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        .sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(p, q)| p - q).collect()
}

/// `x + h * d`
pub fn axpy(x: &[f64], h: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(p, q)| p + h * q).collect()
}

pub fn scale(x: &[f64], c: f64) -> Vec<f64> {
    x.iter().map(|v| c * v).collect()
}

pub fn all_finite(x: &[f64]) -> bool {
    x.iter().all(|v| v.is_finite())
}

/// Concatenate two state blocks, `(x, z) -> ξ`.
pub fn stack(x: &[f64], z: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len() + z.len());
    out.extend_from_slice(x);
    out.extend_from_slice(z);
    out
}

/// Eigenvalues of a real 2x2 matrix `[[a, b], [c, d]]` as `(re, im)` pairs.
pub fn eig2(m: [[f64; 2]; 2]) -> [(f64, f64); 2] {
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = tr * tr / 4.0 - det;
    if disc >= 0.0 {
        let r = disc.sqrt();
        [(tr / 2.0 + r, 0.0), (tr / 2.0 - r, 0.0)]
    } else {
        let r = (-disc).sqrt();
        [(tr / 2.0, r), (tr / 2.0, -r)]
    }
}

/// Spectral norm of a real 2x2 matrix.
pub fn spectral_norm2(m: [[f64; 2]; 2]) -> f64 {
    // largest eigenvalue of M^T M
    let a = m[0][0] * m[0][0] + m[1][0] * m[1][0];
    let d = m[0][1] * m[0][1] + m[1][1] * m[1][1];
    let b = m[0][0] * m[0][1] + m[1][0] * m[1][1];
    let tr = a + d;
    let det = a * d - b * b;
    let disc = (tr * tr / 4.0 - det).max(0.0);
    (tr / 2.0 + disc.sqrt()).sqrt()
}
