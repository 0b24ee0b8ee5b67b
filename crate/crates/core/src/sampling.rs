//! Deterministic sampling of compact sets.
//!
//! Sup-norms and "for all" quantifiers over balls are approximated by a fixed
//! point set: the box corners, the axis points (face centres and the centre),
//! then a scrambled-free Halton sequence filling the interior. The same
//! request always yields the same points in the same order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vecops::norm;

const PRIMES: [u32; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Radical inverse of `index` in base `base`.
pub fn radical_inverse(mut index: u64, base: u32) -> f64 {
    let b = base as u64;
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while index > 0 {
        r += f * (index % b) as f64;
        index /= b;
        f *= inv;
    }
    r
}

/// The `index`-th point of the Halton sequence in `[0,1)^dim`.
pub fn halton(index: u64, dim: usize) -> Vec<f64> {
    assert!(dim <= PRIMES.len(), "halton supports up to {} dimensions", PRIMES.len());
    (0..dim).map(|d| radical_inverse(index, PRIMES[d])).collect()
}

/// Axis-aligned box `[lo_i, hi_i]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::Domain("box bounds must be nonempty and of equal length".into()));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a <= b) || !a.is_finite() || !b.is_finite()) {
            return Err(Error::Domain(format!("invalid box bounds {lo:?} .. {hi:?}")));
        }
        Ok(Self { lo, hi })
    }

    /// The cube `[-r, r]^dim`.
    pub fn cube(dim: usize, r: f64) -> Self {
        Self { lo: vec![-r; dim], hi: vec![r; dim] }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    fn lerp(&self, unit: &[f64]) -> Vec<f64> {
        unit.iter()
            .enumerate()
            .map(|(i, u)| self.lo[i] + u * (self.hi[i] - self.lo[i]))
            .collect()
    }

    /// Corner points, in binary order.
    pub fn corners(&self) -> Vec<Vec<f64>> {
        let d = self.dim();
        (0..(1u64 << d))
            .map(|mask| {
                (0..d)
                    .map(|i| if mask >> i & 1 == 1 { self.hi[i] } else { self.lo[i] })
                    .collect()
            })
            .collect()
    }

    /// Centre plus the centre of every face.
    pub fn axis_points(&self) -> Vec<Vec<f64>> {
        let centre: Vec<f64> = self.lo.iter().zip(&self.hi).map(|(a, b)| 0.5 * (a + b)).collect();
        let mut out = vec![centre.clone()];
        for i in 0..self.dim() {
            for end in [self.lo[i], self.hi[i]] {
                let mut p = centre.clone();
                p[i] = end;
                out.push(p);
            }
        }
        out
    }

    /// `n` points: corners, axis points, then Halton interior points. When `n`
    /// is smaller than the number of structural points the list is truncated.
    pub fn samples(&self, n: usize) -> Vec<Vec<f64>> {
        let mut out = self.corners();
        out.extend(self.axis_points());
        out.truncate(n);
        let mut idx = 1u64;
        while out.len() < n {
            out.push(self.lerp(&halton(idx, self.dim())));
            idx += 1;
        }
        out
    }

    /// Tensor grid with `per_axis` points along every axis (endpoints included).
    pub fn grid(&self, per_axis: usize) -> Vec<Vec<f64>> {
        assert!(per_axis >= 1);
        let d = self.dim();
        let total = per_axis.pow(d as u32);
        (0..total)
            .map(|mut flat| {
                let mut p = vec![0.0; d];
                for (i, slot) in p.iter_mut().enumerate() {
                    let j = flat % per_axis;
                    flat /= per_axis;
                    let u = if per_axis == 1 { 0.5 } else { j as f64 / (per_axis - 1) as f64 };
                    *slot = self.lo[i] + u * (self.hi[i] - self.lo[i]);
                }
                p
            })
            .collect()
    }
}

/// `n` deterministic points of the closed ball of radius `r` in `dim`
/// dimensions: cube samples with points outside the ball projected radially
/// onto its boundary.
pub fn ball_samples(dim: usize, r: f64, n: usize) -> Vec<Vec<f64>> {
    BoxDomain::cube(dim, r)
        .samples(n)
        .into_iter()
        .map(|p| clip_to_ball(p, r))
        .collect()
}

pub fn clip_to_ball(p: Vec<f64>, r: f64) -> Vec<f64> {
    let n = norm(&p);
    if n > r {
        p.iter().map(|v| v * r / n).collect()
    } else {
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radical_inverse_base_two() {
        assert_eq!(radical_inverse(1, 2), 0.5);
        assert_eq!(radical_inverse(2, 2), 0.25);
        assert_eq!(radical_inverse(3, 2), 0.75);
    }

    #[test]
    fn samples_start_with_corners_and_stay_inside() {
        let b = BoxDomain::new(vec![-1.0, 0.0], vec![1.0, 2.0]).unwrap();
        let s = b.samples(100);
        assert_eq!(s.len(), 100);
        assert_eq!(s[0], vec![-1.0, 0.0]);
        assert_eq!(s[3], vec![1.0, 2.0]);
        for p in &s {
            assert!(p[0] >= -1.0 && p[0] <= 1.0 && p[1] >= 0.0 && p[1] <= 2.0);
        }
        assert_eq!(s, b.samples(100));
    }

    #[test]
    fn grid_counts_and_endpoints() {
        let g = BoxDomain::cube(2, 5.0).grid(41);
        assert_eq!(g.len(), 41 * 41);
        assert_eq!(g[0], vec![-5.0, -5.0]);
        assert_eq!(g[40], vec![5.0, -5.0]);
        assert!(g.iter().any(|p| p == &vec![0.0, 0.0]));
    }

    #[test]
    fn ball_samples_respect_radius() {
        for p in ball_samples(3, 2.0, 200) {
            assert!(norm(&p) <= 2.0 + 1e-12);
        }
    }

    #[test]
    fn bad_box_rejected() {
        assert!(BoxDomain::new(vec![1.0], vec![0.0]).is_err());
        assert!(BoxDomain::new(vec![], vec![]).is_err());
    }
}
