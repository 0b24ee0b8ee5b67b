//! Discrete-time models `F_T(k, x)` built from continuous-time plants, and the
//! consistency / Lipschitz measurements that compare model families.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::dopri45;
use crate::quad::simpson_vec;
use crate::sampling::{halton, BoxDomain};
use crate::vecops::{all_finite, axpy, dist, norm};

type FieldFn = dyn Fn(f64, &[f64], &[f64]) -> Vec<f64> + Send + Sync;
type LawFn = dyn Fn(f64, usize, &[f64]) -> Result<Vec<f64>> + Send + Sync;
type StepFn = dyn Fn(f64, usize, &[f64]) -> Result<Vec<f64>> + Send + Sync;

/// Right-hand side `f(t, x, u)` of a continuous-time plant.
#[derive(Clone)]
pub struct VectorField {
    pub dim_x: usize,
    pub dim_u: usize,
    f: Arc<FieldFn>,
}

impl VectorField {
    pub fn new<F>(dim_x: usize, dim_u: usize, f: F) -> Self
    where
        F: Fn(f64, &[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        Self { dim_x, dim_u, f: Arc::new(f) }
    }

    pub fn eval(&self, t: f64, x: &[f64], u: &[f64]) -> Vec<f64> {
        (self.f)(t, x, u)
    }
}

impl fmt::Debug for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "VectorField(dim_x={}, dim_u={})", self.dim_x, self.dim_u)
    }
}

/// How the input is chosen on each sampling interval. The value is held
/// constant over the interval (zero-order hold).
#[derive(Clone)]
pub enum InputLaw {
    Held(Vec<f64>),
    /// `u(k) = law(T, k, x(k))`
    Feedback(Arc<LawFn>),
}

impl InputLaw {
    pub fn feedback<F>(law: F) -> Self
    where
        F: Fn(f64, usize, &[f64]) -> Result<Vec<f64>> + Send + Sync + 'static,
    {
        InputLaw::Feedback(Arc::new(law))
    }

    pub fn input(&self, t: f64, k: usize, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            InputLaw::Held(u) => Ok(u.clone()),
            InputLaw::Feedback(law) => law(t, k, x),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MapLabel {
    Euler,
    ModifiedEuler,
    ExactProxy,
    Custom,
}

/// A family of transition maps `F_T(k, x)` indexed by the sampling period.
#[derive(Clone)]
pub struct ParameterizedMap {
    pub dim: usize,
    pub t_max: f64,
    pub label: MapLabel,
    step: Arc<StepFn>,
}

impl fmt::Debug for ParameterizedMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ParameterizedMap({:?}, dim={}, t_max={})", self.label, self.dim, self.t_max)
    }
}

impl ParameterizedMap {
    pub fn new<F>(dim: usize, t_max: f64, label: MapLabel, step: F) -> Self
    where
        F: Fn(f64, usize, &[f64]) -> Result<Vec<f64>> + Send + Sync + 'static,
    {
        Self { dim, t_max, label, step: Arc::new(step) }
    }

    pub fn custom<F>(dim: usize, t_max: f64, step: F) -> Self
    where
        F: Fn(f64, usize, &[f64]) -> Result<Vec<f64>> + Send + Sync + 'static,
    {
        Self::new(dim, t_max, MapLabel::Custom, step)
    }

    /// `F_T(k, x)` for `T ∈ (0, t_max)`.
    pub fn step(&self, t: f64, k: usize, x: &[f64]) -> Result<Vec<f64>> {
        if !(t > 0.0 && t < self.t_max) {
            return Err(Error::Precondition(format!(
                "sampling period {t} outside (0, {}) for {:?} map",
                self.t_max, self.label
            )));
        }
        if x.len() != self.dim {
            return Err(Error::Domain(format!("state has dimension {}, map expects {}", x.len(), self.dim)));
        }
        (self.step)(t, k, x)
    }

    pub fn with_t_max(mut self, t_max: f64) -> Self {
        self.t_max = t_max;
        self
    }
}

/// `x + T f(kT, x, u(k))`
pub fn euler_map(f: &VectorField, law: InputLaw) -> ParameterizedMap {
    let f = f.clone();
    ParameterizedMap::new(f.dim_x, f64::INFINITY, MapLabel::Euler, move |t, k, x| {
        let u = law.input(t, k, x)?;
        Ok(axpy(x, t, &f.eval(k as f64 * t, x, &u)))
    })
}

/// `x + ∫_{kT}^{(k+1)T} f(τ, x, u(k)) dτ` with `x` frozen over the interval.
pub fn modified_euler_map(f: &VectorField, law: InputLaw) -> ParameterizedMap {
    let f = f.clone();
    ParameterizedMap::new(f.dim_x, f64::INFINITY, MapLabel::ModifiedEuler, move |t, k, x| {
        let u = law.input(t, k, x)?;
        let t0 = k as f64 * t;
        let scale = 1.0 + norm(&f.eval(t0, x, &u));
        let integral = simpson_vec(|tau| f.eval(tau, x, &u), t0, t0 + t, 1e-14 * t * scale)?;
        Ok(x.iter().zip(&integral).map(|(a, b)| a + b).collect())
    })
}

/// Zero-order-hold solution of `ẋ = f(t, x, u(k))` over `[kT, (k+1)T]`,
/// integrated with local error below `tol`.
pub fn exact_proxy_map(f: &VectorField, law: InputLaw, tol: f64) -> ParameterizedMap {
    let f = f.clone();
    ParameterizedMap::new(f.dim_x, f64::INFINITY, MapLabel::ExactProxy, move |t, k, x| {
        let u = law.input(t, k, x)?;
        let t0 = k as f64 * t;
        dopri45(|tau, y| f.eval(tau, y, &u), t0, t0 + t, x, tol)
    })
}

/// Default accuracy of the exact-model proxy.
pub const EXACT_PROXY_TOL: f64 = 1e-10;

/// One-step gap between two model families over a range of periods.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    /// Strictly decreasing.
    pub t_samples: Vec<f64>,
    pub max_errors: Vec<f64>,
    /// Least-squares slope of `log(max_error)` against `log(T)`; undefined
    /// when fewer than two errors are positive.
    pub slope: Option<f64>,
    pub k_est: Option<f64>,
}

impl ConsistencyReport {
    pub fn csv_rows(&self) -> Vec<[f64; 3]> {
        self.t_samples
            .iter()
            .zip(&self.max_errors)
            .map(|(t, e)| [*t, *e, e / t])
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("T,max_error,error_over_T\n");
        for [t, e, r] in self.csv_rows() {
            s.push_str(&format!("{t},{e},{r}\n"));
        }
        s
    }
}

/// Least-squares slope of `log y` against `log x` over the points with
/// positive `y`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0 && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(sxy / sxx)
}

fn sorted_periods(t_list: &[f64]) -> Result<Vec<f64>> {
    let mut ts = t_list.to_vec();
    if ts.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::Domain("sampling periods must be positive".into()));
    }
    ts.sort_by(|a, b| b.partial_cmp(a).unwrap());
    ts.dedup();
    Ok(ts)
}

/// `max_errors[i] = max |F_ref − F_apx|` over `points × k_set` at the i-th
/// period (periods sorted decreasing).
pub fn consistency_order(
    f_ref: &ParameterizedMap,
    f_apx: &ParameterizedMap,
    points: &[Vec<f64>],
    k_set: &[usize],
    t_list: &[f64],
) -> Result<ConsistencyReport> {
    if f_ref.dim != f_apx.dim {
        return Err(Error::Domain("maps have different dimensions".into()));
    }
    if points.is_empty() || k_set.is_empty() {
        return Err(Error::Domain("empty domain sample".into()));
    }
    let ts = sorted_periods(t_list)?;
    let mut max_errors = Vec::with_capacity(ts.len());
    for &t in &ts {
        let errs: Vec<f64> = points
            .par_iter()
            .map(|x| -> Result<f64> {
                let mut worst = 0.0f64;
                for &k in k_set {
                    let a = f_ref.step(t, k, x)?;
                    let b = f_apx.step(t, k, x)?;
                    worst = worst.max(dist(&a, &b));
                }
                Ok(worst)
            })
            .collect::<Result<_>>()?;
        max_errors.push(errs.into_iter().fold(0.0, f64::max));
    }
    let slope = loglog_slope(&ts, &max_errors);
    Ok(ConsistencyReport { t_samples: ts, max_errors, slope, k_est: None })
}

/// Same as [`consistency_order`] with `n` deterministic samples of `domain`.
pub fn consistency_order_on_box(
    f_ref: &ParameterizedMap,
    f_apx: &ParameterizedMap,
    domain: &BoxDomain,
    n: usize,
    k_set: &[usize],
    t_list: &[f64],
) -> Result<ConsistencyReport> {
    consistency_order(f_ref, f_apx, &domain.samples(n), k_set, t_list)
}

/// Empirical growth constant of a map family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LipschitzEstimate {
    /// Smallest `K` with `|F_T(k,x₁) − F_T(k,x₂)| ≤ (1 + KT)|x₁ − x₂|` on all
    /// sampled pairs and periods.
    pub k: f64,
    /// `(T, K_T)` per period, periods decreasing.
    pub per_period: Vec<(f64, f64)>,
}

/// Sample pairs: `n` distant pairs from the domain sample, plus `n` close
/// pairs at separation 1e-4 of the box diameter.
pub fn lipschitz_pairs(domain: &BoxDomain, n: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
    let pts = domain.samples(2 * n);
    let d = domain.dim();
    let diam = dist(&domain.lo, &domain.hi);
    let mut pairs: Vec<_> = (0..n).map(|i| (pts[i].clone(), pts[n + i].clone())).collect();
    for i in 0..n {
        let dir: Vec<f64> = halton(i as u64 + 1, d).iter().map(|u| 2.0 * u - 1.0).collect();
        let dn = norm(&dir).max(1e-12);
        let h = 1e-4 * diam / dn;
        let x = &pts[i];
        pairs.push((x.clone(), axpy(x, h, &dir)));
    }
    pairs
}

pub fn lipschitz_growth_estimate(
    f: &ParameterizedMap,
    domain: &BoxDomain,
    t_list: &[f64],
    k_set: &[usize],
    pair_samples: usize,
) -> Result<LipschitzEstimate> {
    if pair_samples < 2 {
        return Err(Error::Domain("need at least two sample pairs".into()));
    }
    let ts = sorted_periods(t_list)?;
    let pairs = lipschitz_pairs(domain, pair_samples);
    let mut per_period = Vec::with_capacity(ts.len());
    for &t in &ts {
        let ks: Vec<f64> = pairs
            .par_iter()
            .map(|(a, b)| -> Result<f64> {
                let d0 = dist(a, b);
                let mut worst = 0.0f64;
                if d0 == 0.0 {
                    return Ok(0.0);
                }
                for &k in k_set {
                    let fa = f.step(t, k, a)?;
                    let fb = f.step(t, k, b)?;
                    if !all_finite(&fa) || !all_finite(&fb) {
                        return Err(Error::UnboundedGrowth(format!("non-finite image at T={t}, k={k}")));
                    }
                    worst = worst.max((dist(&fa, &fb) / d0 - 1.0) / t);
                }
                Ok(worst)
            })
            .collect::<Result<_>>()?;
        per_period.push((t, ks.into_iter().fold(0.0, f64::max)));
    }
    let (tv, kv): (Vec<f64>, Vec<f64>) = per_period.iter().cloned().unzip();
    if let Some(s) = loglog_slope(&tv, &kv) {
        if s < -0.5 {
            return Err(Error::UnboundedGrowth(format!(
                "K_T grows like T^{s:.2} as T decreases; the ratio is not 1 + O(T)"
            )));
        }
    }
    let k = kv.iter().cloned().fold(0.0, f64::max);
    Ok(LipschitzEstimate { k, per_period })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn double_integrator() -> VectorField {
        VectorField::new(2, 1, |_, x, u| vec![x[1], u[0]])
    }

    #[test]
    fn euler_hand_value() {
        let m = euler_map(&double_integrator(), InputLaw::Held(vec![3.0]));
        let y = m.step(0.1, 0, &[1.0, 2.0]).unwrap();
        assert!((y[0] - 1.2).abs() < 1e-15 && (y[1] - 2.3).abs() < 1e-15);
        let z = m.step(0.1, 5, &[0.0, 0.0]).unwrap();
        assert!(z[0] == 0.0 && (z[1] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn modified_euler_of_time_varying_scalar() {
        let f = VectorField::new(1, 0, |t, x, _| vec![t.sin() * x[0]]);
        let m = modified_euler_map(&f, InputLaw::Held(vec![]));
        let y = m.step(0.1, 0, &[1.0]).unwrap();
        assert!((y[0] - (2.0 - 0.1f64.cos())).abs() < 1e-14);
        assert_eq!(m.step(0.1, 3, &[0.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn exact_proxy_double_integrator() {
        let m = exact_proxy_map(&double_integrator(), InputLaw::Held(vec![1.0]), EXACT_PROXY_TOL);
        let y = m.step(0.5, 0, &[0.0, 0.0]).unwrap();
        assert!((y[0] - 0.125).abs() < 1e-10 && (y[1] - 0.5).abs() < 1e-10);
        let e = VectorField::new(1, 0, |_, x, _| vec![-x[0]]);
        let m = exact_proxy_map(&e, InputLaw::Held(vec![]), EXACT_PROXY_TOL);
        assert!((m.step(1.0, 0, &[1.0]).unwrap()[0] - (-1f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn period_outside_range_is_rejected() {
        let m = euler_map(&double_integrator(), InputLaw::Held(vec![0.0])).with_t_max(0.5);
        assert!(matches!(m.step(0.5, 0, &[0.0, 0.0]), Err(Error::Precondition(_))));
        assert!(m.step(0.0, 0, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn identical_maps_have_undefined_slope() {
        let m = euler_map(&double_integrator(), InputLaw::Held(vec![1.0]));
        let r = consistency_order_on_box(&m, &m, &BoxDomain::cube(2, 1.0), 64, &[0], &[0.1, 0.01]).unwrap();
        assert!(r.max_errors.iter().all(|e| *e == 0.0));
        assert_eq!(r.slope, None);
    }

    #[test]
    fn identity_and_contraction_growth() {
        let d = BoxDomain::cube(2, 1.0);
        let id = ParameterizedMap::custom(2, 1.0, |_, _, x| Ok(x.to_vec()));
        let e = lipschitz_growth_estimate(&id, &d, &[0.1, 0.01], &[0], 16).unwrap();
        assert!(e.k < 1e-9);
        let c = ParameterizedMap::custom(2, 1.0, |t, _, x| Ok(x.iter().map(|v| (1.0 - t) * v).collect()));
        let e = lipschitz_growth_estimate(&c, &d, &[0.1, 0.01], &[0], 16).unwrap();
        assert!(e.k < 1e-9);
    }

    #[test]
    fn non_affine_growth_is_reported() {
        let d = BoxDomain::cube(1, 1.0);
        let g = ParameterizedMap::custom(1, 1.0, |_, _, x| Ok(vec![2.0 * x[0]]));
        let e = lipschitz_growth_estimate(&g, &d, &[0.1, 0.01, 0.001], &[0], 8).unwrap_err();
        assert!(matches!(e, Error::UnboundedGrowth(_)));
    }

    #[test]
    fn csv_header() {
        let r = ConsistencyReport { t_samples: vec![0.1], max_errors: vec![0.01], slope: None, k_est: None };
        assert!(r.to_csv().starts_with("T,max_error,error_over_T\n0.1,0.01,"));
    }
}
