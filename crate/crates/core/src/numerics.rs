//! Comparison functions (classes K, K∞, N and KL) and the horizon index.

use serde::{Deserialize, Serialize};

use crate::cascade::Trajectory;
use crate::error::{Error, Result};

/// Class of a comparison function as determined from its parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComparisonClass {
    /// Zero at zero, strictly increasing and unbounded.
    KInfinity,
    /// Zero at zero and strictly increasing on the covered range.
    K,
    /// Continuous and nondecreasing only.
    N,
}

/// A scalar comparison function on `[0, ∞)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "kebab-case")]
pub enum ClassK {
    /// `gain · s`
    Linear { gain: f64 },
    /// `gain · s^exponent`
    Power { gain: f64, exponent: f64 },
    /// `min(offset + slope · s, cap)`; class N unless `offset = 0` and uncapped.
    AffineCapped {
        slope: f64,
        offset: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cap: Option<f64>,
    },
    /// Piecewise-linear interpolation through `(input, output)` pairs with
    /// strictly increasing coordinates, extrapolated linearly past the ends.
    Tabulated { points: Vec<(f64, f64)> },
    /// Pointwise sum.
    Sum { terms: Vec<ClassK> },
}

/// Result of inverting a comparison function.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Inverse {
    pub value: f64,
    /// The query lay outside the range covered by the function and the
    /// returned value is the nearest admissible one.
    pub clamped: bool,
}

impl ClassK {
    pub fn identity() -> Self {
        ClassK::Linear { gain: 1.0 }
    }

    pub fn zero() -> Self {
        ClassK::Linear { gain: 0.0 }
    }

    pub fn linear(gain: f64) -> Self {
        ClassK::Linear { gain }
    }

    pub fn power(gain: f64, exponent: f64) -> Self {
        ClassK::Power { gain, exponent }
    }

    /// `c · (s + 1)`, the class-N shape used for interconnection bounds.
    pub fn affine(slope: f64, offset: f64) -> Self {
        ClassK::AffineCapped { slope, offset, cap: None }
    }

    pub fn tabulated(points: Vec<(f64, f64)>) -> Result<Self> {
        let f = ClassK::Tabulated { points };
        f.validate()?;
        Ok(f)
    }

    pub fn eval(&self, s: f64) -> f64 {
        match self {
            ClassK::Linear { gain } => gain * s,
            ClassK::Power { gain, exponent } => gain * s.powf(*exponent),
            ClassK::AffineCapped { slope, offset, cap } => {
                let v = offset + slope * s;
                match cap {
                    Some(c) => v.min(*c),
                    None => v,
                }
            }
            ClassK::Tabulated { points } => interpolate(points, s, false),
            ClassK::Sum { terms } => terms.iter().map(|t| t.eval(s)).sum(),
        }
    }

    /// Checks the parameter constraints of each kind.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Domain(format!("invalid comparison function: {m}")));
        match self {
            ClassK::Linear { gain } if !(gain.is_finite() && *gain >= 0.0) => bad("gain must be finite and >= 0"),
            ClassK::Power { gain, exponent }
                if !(gain.is_finite() && *gain >= 0.0 && exponent.is_finite() && *exponent > 0.0) =>
            {
                bad("power needs gain >= 0 and exponent > 0")
            }
            ClassK::AffineCapped { slope, offset, cap } => {
                if !(slope.is_finite() && *slope >= 0.0 && offset.is_finite() && *offset >= 0.0) {
                    return bad("affine needs slope >= 0 and offset >= 0");
                }
                if let Some(c) = cap {
                    if !(c >= offset) {
                        return bad("cap below offset");
                    }
                }
                Ok(())
            }
            ClassK::Tabulated { points } => {
                if points.len() < 2 {
                    return bad("tabulated needs at least two points");
                }
                if points.iter().any(|(a, b)| !a.is_finite() || !b.is_finite()) || points[0].0 < 0.0 {
                    return bad("tabulated points must be finite with nonnegative inputs");
                }
                if points.windows(2).any(|w| !(w[1].0 > w[0].0 && w[1].1 > w[0].1)) {
                    return bad("tabulated points must be strictly increasing in both coordinates");
                }
                Ok(())
            }
            ClassK::Sum { terms } => {
                if terms.is_empty() {
                    return bad("empty sum");
                }
                terms.iter().try_for_each(|t| t.validate())
            }
            _ => Ok(()),
        }
    }

    pub fn class(&self) -> ComparisonClass {
        match self {
            ClassK::Linear { gain } | ClassK::Power { gain, .. } => {
                if *gain > 0.0 {
                    ComparisonClass::KInfinity
                } else {
                    ComparisonClass::N
                }
            }
            ClassK::AffineCapped { slope, offset, cap } => {
                if *offset == 0.0 && *slope > 0.0 && cap.is_none() {
                    ComparisonClass::KInfinity
                } else {
                    ComparisonClass::N
                }
            }
            ClassK::Tabulated { points } => {
                if points[0] == (0.0, 0.0) {
                    ComparisonClass::KInfinity
                } else {
                    ComparisonClass::N
                }
            }
            ClassK::Sum { terms } => {
                let classes: Vec<_> = terms.iter().map(|t| t.class()).collect();
                if self.eval(0.0) != 0.0 {
                    ComparisonClass::N
                } else if classes.contains(&ComparisonClass::KInfinity) {
                    ComparisonClass::KInfinity
                } else if classes.contains(&ComparisonClass::K) {
                    ComparisonClass::K
                } else {
                    ComparisonClass::N
                }
            }
        }
    }

    /// `c · self`
    pub fn scaled(&self, c: f64) -> Self {
        match self {
            ClassK::Linear { gain } => ClassK::Linear { gain: c * gain },
            ClassK::Power { gain, exponent } => ClassK::Power { gain: c * gain, exponent: *exponent },
            ClassK::AffineCapped { slope, offset, cap } => ClassK::AffineCapped {
                slope: c * slope,
                offset: c * offset,
                cap: cap.map(|v| c * v),
            },
            ClassK::Tabulated { points } => ClassK::Tabulated {
                points: points.iter().map(|(a, b)| (*a, c * b)).collect(),
            },
            ClassK::Sum { terms } => ClassK::Sum { terms: terms.iter().map(|t| t.scaled(c)).collect() },
        }
    }

    /// Smallest `s ≥ 0` with `self(s) = y`. Queries outside the range are
    /// clamped to the nearest end and flagged.
    pub fn inverse(&self, y: f64) -> Result<Inverse> {
        if !(y >= 0.0) {
            return Err(Error::Domain(format!("inverse queried at {y}")));
        }
        let exact = |value: f64| Ok(Inverse { value, clamped: false });
        match self {
            ClassK::Linear { gain } if *gain > 0.0 => exact(y / gain),
            ClassK::Power { gain, exponent } if *gain > 0.0 => exact((y / gain).powf(1.0 / exponent)),
            ClassK::AffineCapped { slope, offset, cap } if *slope > 0.0 => {
                if y < *offset {
                    return Ok(Inverse { value: 0.0, clamped: true });
                }
                let top = cap.unwrap_or(f64::INFINITY);
                if y > top {
                    return Ok(Inverse { value: (top - offset) / slope, clamped: true });
                }
                exact((y - offset) / slope)
            }
            ClassK::Tabulated { points } => {
                let (first, last) = (points[0], points[points.len() - 1]);
                if y < first.1 {
                    return Ok(Inverse { value: first.0, clamped: true });
                }
                if y > last.1 {
                    return Ok(Inverse { value: last.0, clamped: true });
                }
                let swapped: Vec<(f64, f64)> = points.iter().map(|(a, b)| (*b, *a)).collect();
                exact(interpolate(&swapped, y, true))
            }
            ClassK::Sum { .. } => self.bisect_inverse(y),
            _ => Err(Error::Domain("function is not invertible (zero slope)".into())),
        }
    }

    fn bisect_inverse(&self, y: f64) -> Result<Inverse> {
        let y0 = self.eval(0.0);
        if y <= y0 {
            return Ok(Inverse { value: 0.0, clamped: y < y0 });
        }
        let mut hi = 1.0;
        while self.eval(hi) < y {
            hi *= 2.0;
            if hi > 1e300 {
                return Ok(Inverse { value: hi, clamped: true });
            }
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.eval(mid) < y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(Inverse { value: hi, clamped: false })
    }
}

/// Linear interpolation through increasing knots, extrapolating past the
/// ends with the end segments (or clamping when `clamp` is set).
fn interpolate(points: &[(f64, f64)], s: f64, clamp: bool) -> f64 {
    let n = points.len();
    let idx = points.partition_point(|p| p.0 <= s);
    let seg = idx.clamp(1, n - 1);
    let (a, b) = (points[seg - 1], points[seg]);
    if clamp {
        if s <= points[0].0 {
            return points[0].1;
        }
        if s >= points[n - 1].0 {
            return points[n - 1].1;
        }
    }
    a.1 + (s - a.0) * (b.1 - a.1) / (b.0 - a.0)
}

/// A class-KL bound `β(s, t)`; `t` is continuous time `(k − k₀)T`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "kebab-case")]
pub enum KlBound {
    /// `m · s · e^{−λ t}`
    Exp { m: f64, lambda: f64 },
    /// `σ(κ(s) · e^{shift − t})`
    SigmaKappa { sigma: ClassK, kappa: ClassK, shift: f64 },
    /// Cascade composition of three bounds and a gain.
    Composed(Box<Composition>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Composition {
    pub b1: KlBound,
    pub b2: KlBound,
    pub b3: KlBound,
    pub gamma: ClassK,
    pub global: bool,
    /// Time shift applied on top of the composition by [`kl_shift`].
    #[serde(default)]
    pub shift: f64,
}

impl KlBound {
    pub fn exp(m: f64, lambda: f64) -> Self {
        KlBound::Exp { m, lambda }
    }

    pub fn eval(&self, s: f64, t: f64) -> f64 {
        match self {
            KlBound::Exp { m, lambda } => m * s * (-lambda * t).exp(),
            KlBound::SigmaKappa { sigma, kappa, shift } => sigma.eval(kappa.eval(s) * (shift - t).exp()),
            KlBound::Composed(c) => {
                let t = (t - c.shift).max(0.0);
                let h = 0.5 * t;
                let g = &c.gamma;
                let (k1, k2, k3) = if c.global { (1.0, 1.0, 1.0) } else { (4.0, 2.0, 2.0) };
                let inner = k2 * c.b1.eval(s, h) + k2 * g.eval(c.b2.eval(s, 0.0));
                k1 * c.b1.eval(inner, h) + k1 * g.eval(c.b2.eval(s, h)) + k3 * c.b3.eval(s, t)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            KlBound::Exp { m, lambda } => {
                if !(m.is_finite() && *m >= 1.0 && lambda.is_finite() && *lambda > 0.0) {
                    return Err(Error::Domain(format!("exp bound needs M >= 1, lambda > 0 (got {m}, {lambda})")));
                }
                Ok(())
            }
            KlBound::SigmaKappa { sigma, kappa, shift } => {
                sigma.validate()?;
                kappa.validate()?;
                if !(shift.is_finite() && *shift >= 0.0) {
                    return Err(Error::Domain("shift must be finite and >= 0".into()));
                }
                Ok(())
            }
            KlBound::Composed(c) => {
                c.b1.validate()?;
                c.b2.validate()?;
                c.b3.validate()?;
                c.gamma.validate()
            }
        }
    }

    /// Nondecreasing in `s` and nonincreasing in `t` on the given grids, and
    /// zero at `s = 0`.
    pub fn is_monotone_on(&self, s_grid: &[f64], t_grid: &[f64]) -> bool {
        let tol = |v: f64| 1e-12 * (1.0 + v.abs());
        for &t in t_grid {
            if self.eval(0.0, t).abs() > 1e-300 {
                return false;
            }
            for w in s_grid.windows(2) {
                let (a, b) = (self.eval(w[0], t), self.eval(w[1], t));
                if b < a - tol(a) {
                    return false;
                }
            }
        }
        for &s in s_grid {
            for w in t_grid.windows(2) {
                let (a, b) = (self.eval(s, w[0]), self.eval(s, w[1]));
                if b > a + tol(a) {
                    return false;
                }
            }
        }
        true
    }
}

/// `ℓ_{L,T}` together with its inputs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorizonIndex {
    pub horizon: f64,
    pub period: f64,
    pub value: usize,
}

/// Largest integer `ℓ` with `ℓ·T ≤ L`.
pub fn horizon_index(l: f64, t: f64) -> Result<usize> {
    if !(l > 0.0 && t > 0.0 && l.is_finite() && t.is_finite()) {
        return Err(Error::Domain(format!("horizon index needs L, T > 0 (got {l}, {t})")));
    }
    let mut v = (l / t).floor() as usize;
    // correct the division rounding so the product form holds
    while v > 0 && v as f64 * t > l {
        v -= 1;
    }
    while (v + 1) as f64 * t <= l {
        v += 1;
    }
    Ok(v)
}

impl HorizonIndex {
    pub fn new(horizon: f64, period: f64) -> Result<Self> {
        Ok(Self { horizon, period, value: horizon_index(horizon, period)? })
    }
}

/// A bound `β̃` with `β(s, t) ≤ β̃(s, t + c)`.
pub fn kl_shift(beta: &KlBound, c: f64) -> Result<KlBound> {
    if !(c >= 0.0 && c.is_finite()) {
        return Err(Error::Domain(format!("shift must be >= 0 (got {c})")));
    }
    Ok(match beta {
        KlBound::Exp { m, lambda } => KlBound::Exp { m: m * (lambda * c).exp(), lambda: *lambda },
        KlBound::SigmaKappa { sigma, kappa, shift } => KlBound::SigmaKappa {
            sigma: sigma.clone(),
            kappa: kappa.clone(),
            shift: shift + c,
        },
        KlBound::Composed(comp) => {
            let mut comp = comp.clone();
            comp.shift += c;
            KlBound::Composed(comp)
        }
    })
}

/// Cascade bound built from an x-bound `β₁`, an interconnection bound `β₂`
/// with gain `γ`, and a z-bound `β₃`. Each `βᵢ` is first shifted by `c`.
pub fn kl_compose(
    b1: &KlBound,
    b2: &KlBound,
    b3: &KlBound,
    gamma: &ClassK,
    c: f64,
    global: bool,
) -> Result<KlBound> {
    Ok(KlBound::Composed(Box::new(Composition {
        b1: kl_shift(b1, c)?,
        b2: kl_shift(b2, c)?,
        b3: kl_shift(b3, c)?,
        gamma: gamma.clone(),
        global,
        shift: 0.0,
    })))
}

/// Outcome of [`fit_kl_envelope`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum EnvelopeFit {
    Fitted { m: f64, lambda: f64 },
    Falsified { trajectory: usize, k: usize },
}

impl EnvelopeFit {
    pub fn bound(&self) -> Option<KlBound> {
        match self {
            EnvelopeFit::Fitted { m, lambda } => Some(KlBound::exp(*m, *lambda)),
            EnvelopeFit::Falsified { .. } => None,
        }
    }
}

/// Gain grid `1.25^n ≤ 10⁴`.
pub fn envelope_m_grid() -> Vec<f64> {
    (0..).map(|n| 1.25f64.powi(n)).take_while(|m| *m <= 1e4).collect()
}

/// Decay-rate grid, logarithmic from `10⁻⁴` to `10` with 401 points.
pub fn envelope_lambda_grid() -> Vec<f64> {
    (0..=400).map(|j| 1e-4 * 10f64.powf(5.0 * j as f64 / 400.0)).collect()
}

fn first_violation(trajs: &[Trajectory], nu: f64, m: f64, lambda: f64) -> Option<(usize, usize)> {
    for (id, tr) in trajs.iter().enumerate() {
        let n0 = tr.norms[0];
        for (k, &n) in tr.norms.iter().enumerate() {
            let env = (m * n0 * (-lambda * k as f64 * tr.period).exp()).max(nu);
            if !(n <= env + 1e-9) {
                return Some((id, k));
            }
        }
    }
    None
}

/// Smallest exponential envelope `max{M|ξ₀|e^{−λ(k−k₀)T}, ν}` covering every
/// sample. `M` is minimised first, then `λ` maximised for that `M`.
pub fn fit_kl_envelope(trajs: &[Trajectory], nu: f64) -> Result<EnvelopeFit> {
    if trajs.is_empty() || trajs.iter().any(|t| t.norms.is_empty()) {
        return Err(Error::Domain("envelope fit needs nonempty trajectories".into()));
    }
    let lambdas = envelope_lambda_grid();
    let ms = envelope_m_grid();
    for &m in &ms {
        if first_violation(trajs, nu, m, lambdas[0]).is_some() {
            continue;
        }
        // feasibility is monotone in λ: find the last feasible index
        let (mut lo, mut hi) = (0usize, lambdas.len());
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if first_violation(trajs, nu, m, lambdas[mid]).is_none() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        return Ok(EnvelopeFit::Fitted { m, lambda: lambdas[lo] });
    }
    let (trajectory, k) =
        first_violation(trajs, nu, *ms.last().unwrap(), lambdas[0]).expect("infeasible pair has a violation");
    Ok(EnvelopeFit::Falsified { trajectory, k })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_traj(period: f64, values: impl Iterator<Item = f64>) -> Trajectory {
        Trajectory::new(period, 0, values.map(|v| vec![v]).collect())
    }

    #[test]
    fn horizon_examples() {
        assert_eq!(horizon_index(1.0, 0.3).unwrap(), 3);
        assert_eq!(horizon_index(2.0, 0.01).unwrap(), 200);
        assert_eq!(horizon_index(0.5, 0.7).unwrap(), 0);
        assert_eq!(horizon_index(std::f64::consts::PI, 0.01).unwrap(), 314);
        assert!(horizon_index(0.0, 1.0).is_err());
        assert!(horizon_index(1.0, -1.0).is_err());
    }

    #[test]
    fn shift_of_unit_exponential() {
        let b = KlBound::exp(1.0, 1.0);
        let s = kl_shift(&b, 1.0).unwrap();
        assert!((s.eval(1.0, 0.0) - std::f64::consts::E).abs() < 1e-15);
        assert!((s.eval(0.7, 2.3) - b.eval(0.7, 1.3)).abs() < 1e-15);
        assert_eq!(kl_shift(&KlBound::exp(2.0, 3.0), 0.0).unwrap(), KlBound::exp(2.0, 3.0));
        let s2 = kl_shift(&b, 2.0).unwrap();
        assert!(s2.eval(1.0, 2.0) >= b.eval(1.0, 0.0));
    }

    #[test]
    fn compose_hand_values() {
        let e = KlBound::exp(1.0, 1.0);
        let b = kl_compose(&e, &e, &e, &ClassK::identity(), 0.0, false).unwrap();
        assert!((b.eval(1.0, 0.0) - 22.0).abs() < 1e-12);
        let b0 = kl_compose(&e, &e, &e, &ClassK::zero(), 0.0, false).unwrap();
        assert!((b0.eval(1.0, 0.0) - 10.0).abs() < 1e-12);
        let g = kl_compose(&e, &e, &e, &ClassK::identity(), 0.0, true).unwrap();
        assert!((g.eval(1.0, 0.0) - 4.0).abs() < 1e-12);
        for t in [0.0, 0.5, 3.0] {
            assert_eq!(b.eval(0.0, t), 0.0);
        }
    }

    #[test]
    fn tabulated_inverse_is_clamped_out_of_range() {
        let f = ClassK::tabulated(vec![(0.0, 0.0), (1.0, 2.0), (2.0, 3.0)]).unwrap();
        assert_eq!(f.eval(1.5), 2.5);
        assert_eq!(f.eval(3.0), 4.0);
        let i = f.inverse(2.5).unwrap();
        assert!((i.value - 1.5).abs() < 1e-15 && !i.clamped);
        let o = f.inverse(10.0).unwrap();
        assert_eq!(o, Inverse { value: 2.0, clamped: true });
        assert!(ClassK::tabulated(vec![(0.0, 0.0), (1.0, 0.0)]).is_err());
    }

    #[test]
    fn classes() {
        assert_eq!(ClassK::identity().class(), ComparisonClass::KInfinity);
        assert_eq!(ClassK::affine(2.0, 2.0).class(), ComparisonClass::N);
        assert_eq!(ClassK::zero().class(), ComparisonClass::N);
    }

    #[test]
    fn json_shape() {
        let f = ClassK::power(2.0, 0.5);
        let j = serde_json::to_value(&f).unwrap();
        assert_eq!(j, serde_json::json!({"kind": "power", "params": {"gain": 2.0, "exponent": 0.5}}));
        let b: KlBound = serde_json::from_value(serde_json::json!({"kind": "exp", "params": {"m": 1.0, "lambda": 2.0}}))
            .unwrap();
        assert_eq!(b, KlBound::exp(1.0, 2.0));
    }

    #[test]
    fn envelope_of_zero_trajectory() {
        let tr = scalar_traj(1.0, std::iter::repeat(0.0).take(20));
        let fit = fit_kl_envelope(&[tr], 0.0).unwrap();
        assert_eq!(fit, EnvelopeFit::Fitted { m: 1.0, lambda: 10.0 });
    }

    #[test]
    fn envelope_of_geometric_decay() {
        let tr = scalar_traj(1.0, (0..200).map(|k| 0.9f64.powi(k)));
        match fit_kl_envelope(&[tr], 0.0).unwrap() {
            EnvelopeFit::Fitted { m, lambda } => {
                assert_eq!(m, 1.0);
                let exact = -(0.9f64.ln());
                assert!(lambda <= exact * (1.0 + 1e-6) && lambda > exact / 1.03, "{lambda}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn envelope_of_growth_is_falsified() {
        let tr = scalar_traj(1.0, (0..200).map(|k| 1.1f64.powi(k)));
        match fit_kl_envelope(&[tr], 0.0).unwrap() {
            EnvelopeFit::Falsified { trajectory, k } => {
                assert_eq!(trajectory, 0);
                assert!(k > 50);
            }
            other => panic!("{other:?}"),
        }
    }
}
