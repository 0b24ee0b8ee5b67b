//! Unicycle trajectory tracking.
//!
//! Error coordinates `(x_e, y_e, θ_e)` relative to a reference vehicle, the
//! linear time-varying controller
//!
//! ```text
//! ω = ω_r(k) + a₁θ_e,    v = v_r(k) + a₂x_e + Tϑ(k, x)
//! ```
//!
//! with its optional correction `ϑ`, the closed loop written as a cascade
//! with `x = (x_e, y_e)` driven by `z = θ_e`, and the Lyapunov functions
//! `V`, `W` and `U = V + εW` used to audit it.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cascade::CascadeSystem;
use crate::discretize::{euler_map, exact_proxy_map, InputLaw, ParameterizedMap, VectorField};
use crate::error::{Error, Result};
use crate::numerics::{horizon_index, ClassK};
use crate::stability::{Assumption2, StabilityVerdict, Tally, VerdictKind, Witness};
use crate::vecops::norm;

/// A scalar reference signal of continuous time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Signal {
    Zero,
    Constant {
        value: f64,
    },
    /// `amplitude · sin(frequency · t + phase)`
    Sine {
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
}

impl Signal {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Signal::Zero => 0.0,
            Signal::Constant { value } => *value,
            Signal::Sine { amplitude, frequency, phase } => amplitude * (frequency * t + phase).sin(),
        }
    }

    /// `sup_t |s(t)|`
    pub fn sup_abs(&self) -> f64 {
        match self {
            Signal::Zero => 0.0,
            Signal::Constant { value } => value.abs(),
            Signal::Sine { amplitude, .. } => amplitude.abs(),
        }
    }

    /// Period in seconds of a periodic signal.
    pub fn period(&self) -> Option<f64> {
        match self {
            Signal::Sine { frequency, .. } if *frequency != 0.0 => Some(2.0 * std::f64::consts::PI / frequency.abs()),
            _ => None,
        }
    }
}

/// Reference velocities; sampled as `v_r(k) = v_r(kT)`, `ω_r(k) = ω_r(kT)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSignal {
    pub vr: Signal,
    pub wr: Signal,
}

impl ReferenceSignal {
    pub fn vr_k(&self, t: f64, k: i64) -> f64 {
        self.vr.eval(k as f64 * t)
    }

    /// `ω_r(k)`; `k = −1` evaluates the signal at `−T`.
    pub fn wr_k(&self, t: f64, k: i64) -> f64 {
        self.wr.eval(k as f64 * t)
    }

    /// `max{|v_r(k)|, |ω_r(k)|, |ω_r(k) − ω_r(k−1)|/T}` over `k = 0..=steps`.
    pub fn w_m(&self, t: f64, steps: usize) -> f64 {
        (0..=steps as i64)
            .map(|k| {
                let dw = (self.wr_k(t, k) - self.wr_k(t, k - 1)).abs() / t;
                self.vr_k(t, k).abs().max(self.wr_k(t, k).abs()).max(dw)
            })
            .fold(0.0, f64::max)
    }

    /// Steps in one period of `ω_r`, rounded up; one step for aperiodic signals.
    pub fn period_steps(&self, t: f64) -> usize {
        self.wr.period().map_or(1, |p| (p / t).ceil() as usize)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrackingErrorState {
    pub x_e: f64,
    pub y_e: f64,
    pub theta_e: f64,
}

impl TrackingErrorState {
    pub fn new(x_e: f64, y_e: f64, theta_e: f64) -> Self {
        Self { x_e, y_e, theta_e }
    }

    pub fn to_vec(self) -> Vec<f64> {
        vec![self.x_e, self.y_e, self.theta_e]
    }

    pub fn from_slice(s: &[f64]) -> Self {
        Self { x_e: s[0], y_e: s[1], theta_e: s[2] }
    }
}

/// Which correction term `ϑ` the controller adds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Correction {
    /// `ϑ = 0`: the emulated continuous-time controller.
    None,
    /// `ϑ = factor · numerator`, without the denominator.
    Scaled { factor: f64 },
    /// The full quotient.
    #[default]
    Full,
}

impl Correction {
    pub fn name(&self) -> String {
        match self {
            Correction::None => "none".into(),
            Correction::Scaled { factor } => format!("scaled-{factor}"),
            Correction::Full => "full".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControllerGains {
    pub a1: f64,
    pub a2: f64,
    pub alpha_y: f64,
    #[serde(default)]
    pub correction: Correction,
}

impl ControllerGains {
    /// `ε = α_y + T`
    pub fn epsilon(&self, t: f64) -> f64 {
        self.alpha_y + t
    }

    pub fn validate(&self, t: f64) -> Result<()> {
        if !(self.a1 > 0.0 && self.a2 > 0.0 && self.alpha_y > 0.0) {
            return Err(Error::Domain("gains a1, a2 and alpha_y must be positive".into()));
        }
        if !(t > 0.0 && t * self.a1 < 1.0) {
            return Err(Error::Precondition(format!("need 0 < T·a1 < 1 (T = {t}, a1 = {})", self.a1)));
        }
        Ok(())
    }

    pub fn with_correction(&self, correction: Correction) -> Self {
        Self { correction, ..self.clone() }
    }

    /// `K` with `|ϑ(k,x)| ≤ K|x|` for the full correction, valid for all
    /// `T ≤ t` with `a₂T < 1`.
    pub fn correction_bound(&self, t: f64, w_m: f64) -> f64 {
        let (a2, e) = (self.a2, self.epsilon(t));
        (a2 * a2 + w_m * w_m + e * a2 + 2.0 * a2 * w_m + e * w_m.powi(3)) / (2.0 * (1.0 - a2 * t))
    }
}

/// The continuous-time error dynamics with input `u = (v, ω)`.
pub fn error_dynamics_field(refs: &ReferenceSignal) -> VectorField {
    let refs = refs.clone();
    VectorField::new(3, 2, move |t, s, u| {
        let (x, y, th) = (s[0], s[1], s[2]);
        let (v, w) = (u[0], u[1]);
        let vr = refs.vr.eval(t);
        vec![w * y - v + vr * th.cos(), -w * x + vr * th.sin(), refs.wr.eval(t) - w]
    })
}

/// Numerator of the correction, `(a₂² + ω² − εa₂)x_e − (2a₂ω − εω³)y_e`.
pub fn correction_numerator(t: f64, k: usize, x_e: f64, y_e: f64, refs: &ReferenceSignal, g: &ControllerGains) -> f64 {
    let w = refs.wr_k(t, k as i64);
    let e = g.epsilon(t);
    (g.a2 * g.a2 + w * w - e * g.a2) * x_e - (2.0 * g.a2 * w - e * w * w * w) * y_e
}

/// The full correction: numerator over `2(1 − a₂T) + εω²T`.
pub fn redesign_correction(t: f64, k: usize, x_e: f64, y_e: f64, refs: &ReferenceSignal, g: &ControllerGains) -> Result<f64> {
    let w = refs.wr_k(t, k as i64);
    let den = 2.0 * (1.0 - g.a2 * t) + g.epsilon(t) * w * w * t;
    if den.abs() < 1e-12 {
        return Err(Error::Domain(format!("correction denominator vanishes at k = {k}, T = {t}")));
    }
    Ok(correction_numerator(t, k, x_e, y_e, refs, g) / den)
}

/// `ϑ(k, x)` for the configured variant.
pub fn correction(t: f64, k: usize, x_e: f64, y_e: f64, refs: &ReferenceSignal, g: &ControllerGains) -> Result<f64> {
    match g.correction {
        Correction::None => Ok(0.0),
        Correction::Scaled { factor } => Ok(factor * correction_numerator(t, k, x_e, y_e, refs, g)),
        Correction::Full => redesign_correction(t, k, x_e, y_e, refs, g),
    }
}

/// Control values at one step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Control {
    pub v: f64,
    pub omega: f64,
    pub theta: f64,
}

pub fn tracking_controller(
    t: f64,
    k: usize,
    s: &TrackingErrorState,
    refs: &ReferenceSignal,
    g: &ControllerGains,
) -> Result<Control> {
    let th = correction(t, k, s.x_e, s.y_e, refs, g)?;
    let omega = refs.wr_k(t, k as i64) + g.a1 * s.theta_e;
    let v = refs.vr_k(t, k as i64) + g.a2 * s.x_e + t * th;
    Ok(Control { v, omega, theta: th })
}

fn control_law(refs: &ReferenceSignal, g: &ControllerGains) -> InputLaw {
    let (refs, g) = (refs.clone(), g.clone());
    InputLaw::feedback(move |t, k, x| {
        let c = tracking_controller(t, k, &TrackingErrorState::from_slice(x), &refs, &g)?;
        Ok(vec![c.v, c.omega])
    })
}

/// Euler model of the error dynamics in closed loop with the controller.
pub fn closed_loop_euler_map(refs: &ReferenceSignal, g: &ControllerGains) -> ParameterizedMap {
    euler_map(&error_dynamics_field(refs), control_law(refs, g)).with_t_max(1.0 / g.a1.max(g.a2))
}

/// Exact-model proxy of the closed loop (controller held over each interval).
pub fn closed_loop_exact_map(refs: &ReferenceSignal, g: &ControllerGains, tol: f64) -> ParameterizedMap {
    exact_proxy_map(&error_dynamics_field(refs), control_law(refs, g), tol).with_t_max(1.0 / g.a1.max(g.a2))
}

/// `F_1T(k, x)`: the x-part with `θ_e = 0`, including the `−T²ϑ` term.
pub fn zero_input_part(t: f64, k: usize, x: &[f64], refs: &ReferenceSignal, g: &ControllerGains) -> Result<Vec<f64>> {
    let (xe, ye) = (x[0], x[1]);
    let w = refs.wr_k(t, k as i64);
    let th = correction(t, k, xe, ye, refs, g)?;
    Ok(vec![(1.0 - t * g.a2) * xe + t * w * ye - t * t * th, ye - t * w * xe])
}

/// `G_T(k, x, z)`: the terms of the x-update that depend on `θ_e`.
pub fn interconnection(t: f64, k: usize, x: &[f64], z: &[f64], refs: &ReferenceSignal, g: &ControllerGains) -> Vec<f64> {
    let (xe, ye, th) = (x[0], x[1], z[0]);
    let vr = refs.vr_k(t, k as i64);
    vec![
        t * (g.a1 * th * ye - vr + vr * th.cos()),
        t * (-g.a1 * th * xe + vr * th.sin()),
    ]
}

/// The closed loop as a cascade: `x(k+1) = F_1T + G_T`, `θ_e(k+1) = (1 − Ta₁)θ_e`.
pub fn closed_loop_euler_cascade(refs: &ReferenceSignal, g: &ControllerGains) -> CascadeSystem {
    let (rf, gf) = (refs.clone(), g.clone());
    let a1 = g.a1;
    CascadeSystem::new(
        2,
        1,
        1.0 / g.a1.max(g.a2),
        move |t, k, x, z| {
            let f1 = zero_input_part(t, k, x, &rf, &gf)?;
            let gt = interconnection(t, k, x, z, &rf, &gf);
            Ok(vec![f1[0] + gt[0], f1[1] + gt[1]])
        },
        move |t, _, z| Ok(vec![(1.0 - t * a1) * z[0]]),
    )
}

/// Growth constant `c` of `|G_T(k,x,z)| ≤ Tc|z|(|x| + 1)`. Since
/// `|(cos θ − 1, sin θ)| = 2|sin(θ/2)| ≤ |θ|`, `c = max{a₁, sup|v_r|}`.
pub fn interconnection_constant(refs: &ReferenceSignal, g: &ControllerGains) -> f64 {
    g.a1.max(refs.vr.sup_abs())
}

/// `γ₁` of the growth bound `|f_T| ≤ γ₁(|ξ|)` for all `T ≤ t_max`, with the
/// full correction bounded by [`ControllerGains::correction_bound`].
pub fn growth_bound(refs: &ReferenceSignal, g: &ControllerGains, t_max: f64, w_m: f64) -> ClassK {
    let c = interconnection_constant(refs, g);
    let k_th = match g.correction {
        Correction::None => 0.0,
        Correction::Full => g.correction_bound(t_max, w_m),
        Correction::Scaled { factor } => {
            let e = g.epsilon(t_max);
            factor.abs() * (g.a2 * g.a2 + w_m * w_m + e * g.a2 + 2.0 * g.a2 * w_m + e * w_m.powi(3))
        }
    };
    let lin = 1.0 + t_max * (g.a2 * g.a2 + 2.0 * w_m * w_m).sqrt() + t_max * t_max * k_th + t_max * c;
    ClassK::Sum { terms: vec![ClassK::linear(lin), ClassK::power(t_max * c, 2.0)] }
}

/// Persistency-of-excitation windows for one sampling period.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeWindows {
    pub period: f64,
    pub ell: usize,
    /// `T Σ_{k=j}^{j+ℓ} ω_r(k)²` for each window start `j`.
    pub sums: Vec<f64>,
}

impl PeWindows {
    pub fn infimum(&self) -> f64 {
        self.sums.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// Window sums for `j = 0..=j_max` via prefix sums.
pub fn pe_windows(wr: &Signal, l: f64, t: f64, j_max: usize) -> Result<PeWindows> {
    let ell = horizon_index(l, t)?;
    let n = j_max + ell + 1;
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for k in 0..n {
        let w = wr.eval(k as f64 * t);
        acc += w * w;
        prefix.push(acc);
    }
    let sums = (0..=j_max).map(|j| t * (prefix[j + ell + 1] - prefix[j])).collect();
    Ok(PeWindows { period: t, ell, sums })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeReport {
    pub verdict: StabilityVerdict,
    pub windows: Vec<PeWindows>,
}

/// `T Σ_{k=j}^{j+ℓ_{L,T}} ω_r(k)² ≥ μ` for every `T` and every start
/// `j ≤ j_max(T)`; by default `j_max` covers one period of the signal.
pub fn check_pe(wr: &Signal, l: f64, mu: f64, t_list: &[f64], j_max: Option<usize>) -> Result<PeReport> {
    if !(l > 0.0 && mu > 0.0) {
        return Err(Error::Domain("PE check needs L > 0 and μ > 0".into()));
    }
    let mut tally = Tally::default();
    let mut windows = Vec::new();
    for &t in t_list {
        let jm = j_max.unwrap_or_else(|| wr.period().map_or(0, |p| (p / t).ceil() as usize));
        let w = pe_windows(wr, l, t, jm)?;
        for (j, s) in w.sums.iter().enumerate() {
            // the inequality reads μ ≤ window sum
            tally.record(mu, *s, || Witness { period: t, k0: j, state: vec![], k: j + w.ell, measured: mu, bound: *s });
        }
        windows.push(w);
    }
    Ok(PeReport { verdict: tally.into_verdict(), windows })
}

/// `V_T(k, x) = |x|² − εω_r(k−1)x_e y_e`
pub fn lyap_v(t: f64, k: usize, x: &[f64], refs: &ReferenceSignal, g: &ControllerGains) -> f64 {
    let w = refs.wr_k(t, k as i64 - 1);
    x[0] * x[0] + x[1] * x[1] - g.epsilon(t) * w * x[0] * x[1]
}

/// A constant with its admissibility flag.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Flagged {
    pub value: f64,
    pub valid: bool,
}

impl Flagged {
    pub fn positive(value: f64) -> Self {
        Self { value, valid: value > 0.0 && value.is_finite() }
    }
}

/// `(c₁, c₂) = (1 ∓ ½(α_y + T*)w_M)`
pub fn v_constants(alpha_y: f64, t_star: f64, w_m: f64) -> (Flagged, Flagged) {
    let h = 0.5 * (alpha_y + t_star) * w_m;
    (Flagged::positive(1.0 - h), Flagged::positive(1.0 + h))
}

/// `W_T(k, y_e) = −T Σ_{i≥k} e^{(k−i)T} ω_r(i)² y_e²`, truncated once the
/// geometric tail bound `2w_M² e^{−NT} y_e²` is below `tail_tol`.
pub fn lyap_w(t: f64, k: usize, y_e: f64, refs: &ReferenceSignal, tail_tol: f64) -> f64 {
    let wm = refs.wr.sup_abs().max(f64::MIN_POSITIVE);
    let scale = 2.0 * wm * wm * y_e * y_e;
    if scale == 0.0 {
        return 0.0;
    }
    let n = ((scale / tail_tol).ln().max(0.0) / t).ceil() as usize;
    let mut s = 0.0;
    for j in 0..=n {
        let w = refs.wr_k(t, (k + j) as i64);
        s += (-(j as f64) * t).exp() * w * w;
    }
    -t * s * y_e * y_e
}

/// `S_k = T Σ_{i≥k} e^{(k−i)T} ω_r(i)²` for `k = 0..=k_max`, so that
/// `W_T(k, x) = −S_k y_e²`. Filled backwards from a truncated tail with
/// `S_k = Tω_r(k)² + e^{−T}S_{k+1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightCache {
    pub period: f64,
    pub s: Vec<f64>,
}

impl WeightCache {
    pub fn new(refs: &ReferenceSignal, t: f64, k_max: usize, tail_tol: f64) -> Self {
        let tail = -lyap_w(t, k_max + 1, 1.0, refs, tail_tol);
        let mut s = vec![0.0; k_max + 2];
        s[k_max + 1] = tail;
        let decay = (-t).exp();
        for k in (0..=k_max).rev() {
            let w = refs.wr_k(t, k as i64);
            s[k] = t * w * w + decay * s[k + 1];
        }
        Self { period: t, s }
    }

    pub fn weight(&self, k: usize) -> f64 {
        self.s[k]
    }

    pub fn w(&self, k: usize, y_e: f64) -> f64 {
        -self.s[k] * y_e * y_e
    }

    pub fn k_max(&self) -> usize {
        self.s.len() - 2
    }
}

/// `c₃ = 2w_M²`, `c₄ = e^{−L}μ/(1 − e^{−L})` and the period thresholds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WConstants {
    pub c3: Flagged,
    pub c4: Flagged,
    /// Largest `T` with `T/(1 − e^{−T}) ≤ 2`.
    pub t3_star: f64,
    /// Largest `T` with `(1 − e^{−T})/T ≥ 1/2` (the same root).
    pub t4_star: f64,
    /// `μe^{−L}/(4(1 − e^{−L}))`
    pub t5_star: f64,
}

/// Root of `T/(1 − e^{−T}) = 2`, by bisection.
pub fn t3_star() -> f64 {
    let f = |t: f64| t / (1.0 - (-t).exp()) - 2.0;
    let (mut lo, mut hi) = (1e-6, 5.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

pub fn w_constants(mu: f64, l: f64, w_m: f64) -> WConstants {
    let c4 = (-l).exp() * mu / (1.0 - (-l).exp());
    let t3 = t3_star();
    WConstants {
        c3: Flagged::positive(2.0 * w_m * w_m),
        c4: Flagged::positive(c4),
        t3_star: t3,
        t4_star: t3,
        t5_star: c4 / 4.0,
    }
}

/// Everything the Lyapunov chain needs, each constant with its flag.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseStudyConstants {
    pub period: f64,
    pub t_star: f64,
    pub w_m: f64,
    pub mu_pe: f64,
    pub l_pe: f64,
    pub c1: Flagged,
    pub c2: Flagged,
    pub alpha_x: Flagged,
    pub k1: Flagged,
    pub c3: Flagged,
    pub c4: Flagged,
    pub alpha_y_tilde: Flagged,
    pub k2: Flagged,
    pub eps_small: Flagged,
    pub c3_tilde: Flagged,
    pub t_tilde: Flagged,
    pub t3_star: f64,
    pub t5_star: f64,
    /// Whether the audited period lies below the sufficient threshold `T̃`.
    pub period_below_t_tilde: bool,
}

impl CaseStudyConstants {
    /// First constant whose flag is not valid.
    pub fn first_invalid(&self) -> Option<&'static str> {
        let all = [
            ("c1", self.c1),
            ("c2", self.c2),
            ("alpha_x", self.alpha_x),
            ("k1", self.k1),
            ("c3", self.c3),
            ("c4", self.c4),
            ("alpha_y_tilde", self.alpha_y_tilde),
            ("k2", self.k2),
            ("eps_small", self.eps_small),
            ("c3_tilde", self.c3_tilde),
            ("t_tilde", self.t_tilde),
        ];
        all.iter().find(|(_, f)| !f.valid).map(|(n, _)| *n)
    }
}

/// `α_x = a₂ − (α_y + T*)w_M² − ½ε²w_M²(1 + a₂)²` with `ε = α_y + T*`.
pub fn alpha_x(g: &ControllerGains, t_star: f64, w_m: f64) -> f64 {
    let e = g.alpha_y + t_star;
    g.a2 - e * w_m * w_m - 0.5 * e * e * w_m * w_m * (1.0 + g.a2).powi(2)
}

/// Grid of the Lyapunov chain: states `x = (x_e, y_e)` and time indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainGrid {
    pub points: Vec<Vec<f64>>,
    pub k_max: usize,
}

impl ChainGrid {
    /// `n × n` grid on `[−r, r]²` with `k = 0..=⌈2π/T⌉`.
    pub fn square(r: f64, n: usize, t: f64) -> Self {
        let points = crate::sampling::BoxDomain::cube(2, r).grid(n);
        Self { points, k_max: (2.0 * std::f64::consts::PI / t).ceil() as usize }
    }
}

/// Context shared by the chain computations at one period.
pub struct ChainContext<'a> {
    pub refs: &'a ReferenceSignal,
    pub gains: &'a ControllerGains,
    pub t: f64,
    pub cache: WeightCache,
}

impl<'a> ChainContext<'a> {
    pub fn new(refs: &'a ReferenceSignal, gains: &'a ControllerGains, t: f64, k_max: usize) -> Self {
        Self { refs, gains, t, cache: WeightCache::new(refs, t, k_max + 1, 1e-12) }
    }

    pub fn v(&self, k: usize, x: &[f64]) -> f64 {
        lyap_v(self.t, k, x, self.refs, self.gains)
    }

    pub fn w(&self, k: usize, x: &[f64]) -> f64 {
        self.cache.w(k, x[1])
    }

    /// `U_T = V_T + εW_T`
    pub fn u(&self, k: usize, x: &[f64], eps_small: f64) -> f64 {
        self.v(k, x) + eps_small * self.w(k, x)
    }

    pub fn step(&self, k: usize, x: &[f64]) -> Result<Vec<f64>> {
        zero_input_part(self.t, k, x, self.refs, self.gains)
    }

    pub fn wr(&self, k: usize) -> f64 {
        self.refs.wr_k(self.t, k as i64)
    }
}

/// Computes every case-study constant at period `t`; `K₁` and `K₂` are the
/// smallest values that make their inequalities hold on `grid`, and
/// `α̃_y = c₄/4`.
pub fn case_study_constants(
    refs: &ReferenceSignal,
    gains: &ControllerGains,
    t: f64,
    t_star: f64,
    l_pe: f64,
    grid: &ChainGrid,
) -> Result<CaseStudyConstants> {
    gains.validate(t)?;
    let period_steps = refs.period_steps(t).max(grid.k_max);
    let w_m = refs.w_m(t, period_steps);
    let pe = check_pe(&refs.wr, l_pe, f64::MIN_POSITIVE, &[t], Some(period_steps))?;
    let mu_pe = pe.windows[0].infimum();
    let (c1, c2) = v_constants(gains.alpha_y, t_star, w_m);
    let ax = alpha_x(gains, t_star, w_m);
    let wc = w_constants(mu_pe, l_pe, w_m);
    let aty = wc.c4.value / 4.0;
    let ctx = ChainContext::new(refs, gains, t, grid.k_max);
    let ks: Vec<usize> = (0..=grid.k_max).collect();
    let fits: Vec<(f64, f64, bool)> = ks
        .par_iter()
        .map(|&k| -> Result<(f64, f64, bool)> {
            let mut k1 = 0.0f64;
            let mut k2 = 0.0f64;
            let mut ye_ok = true;
            let w = ctx.wr(k);
            for x in &grid.points {
                let n2 = x[0] * x[0] + x[1] * x[1];
                if n2 == 0.0 {
                    continue;
                }
                let xn = ctx.step(k, x)?;
                let dv = (ctx.v(k + 1, &xn) - ctx.v(k, x)) / t;
                let r1 = dv + ax * x[0] * x[0] + gains.alpha_y * w * w * x[1] * x[1];
                k1 = k1.max(r1 / (t * n2));
                let dw = (ctx.w(k + 1, &xn) - ctx.w(k, x)) / t;
                let r2 = dw - w * w * x[1] * x[1] + aty * x[1] * x[1];
                if x[0] != 0.0 {
                    k2 = k2.max(r2 / (x[0] * x[0]));
                } else if r2 > 1e-9 {
                    ye_ok = false;
                }
            }
            Ok((k1, k2, ye_ok))
        })
        .collect::<Result<_>>()?;
    let k1 = fits.iter().map(|f| f.0).fold(0.0, f64::max);
    let k2 = fits.iter().map(|f| f.1).fold(0.0, f64::max);
    let ye_ok = fits.iter().all(|f| f.2);
    let eps_small = (c1.value / (2.0 * wc.c3.value)).min(ax / (2.0 * k2.max(f64::MIN_POSITIVE))).min(gains.alpha_y);
    let inner = (ax / 2.0).min(eps_small * aty);
    let c3t = 0.5 * inner;
    let t_tilde = if k1 > 0.0 { t_star.min(inner / (2.0 * k1)) } else { t_star };
    Ok(CaseStudyConstants {
        period: t,
        t_star,
        w_m,
        mu_pe,
        l_pe,
        c1,
        c2,
        alpha_x: Flagged::positive(ax),
        k1: Flagged { value: k1, valid: k1.is_finite() },
        c3: wc.c3,
        c4: wc.c4,
        alpha_y_tilde: Flagged { value: aty, valid: aty > 0.0 && ye_ok },
        k2: Flagged { value: k2, valid: k2.is_finite() },
        eps_small: Flagged::positive(eps_small),
        c3_tilde: Flagged::positive(c3t),
        t_tilde: Flagged::positive(t_tilde),
        t3_star: wc.t3_star,
        t5_star: wc.t5_star,
        period_below_t_tilde: t < t_tilde,
    })
}

/// `U_T(k, x) = V_T(k, x) + εW_T(k, x)`; refuses constants with an invalid flag.
pub fn lyap_u(ctx: &ChainContext<'_>, k: usize, x: &[f64], c: &CaseStudyConstants) -> Result<f64> {
    if let Some(name) = c.first_invalid() {
        return Err(Error::Precondition(format!("case-study constant {name} is not admissible")));
    }
    Ok(ctx.u(k, x, c.eps_small.value))
}

/// Verdicts of each link of the Lyapunov chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainReport {
    pub constants: CaseStudyConstants,
    /// `c₁|x|² ≤ V ≤ c₂|x|²`
    pub v_sandwich: StabilityVerdict,
    /// `ΔV/T ≤ −(α_x x_e² + α_y ω² y_e²) + TK₁|x|²`
    pub v_decrease: StabilityVerdict,
    /// `−c₃y_e² ≤ W ≤ −c₄y_e²`
    pub w_sandwich: StabilityVerdict,
    /// `ΔW/T ≤ ω²y_e² − α̃_y y_e² + K₂x_e²`
    pub w_decrease: StabilityVerdict,
    /// `(c₁/2)|x|² ≤ U ≤ c₂|x|²`
    pub u_sandwich: StabilityVerdict,
    /// `ΔU/T ≤ −c̃₃|x|²`
    pub u_decrease: StabilityVerdict,
}

impl ChainReport {
    pub fn parts(&self) -> [(&'static str, &StabilityVerdict); 6] {
        [
            ("v_sandwich", &self.v_sandwich),
            ("v_decrease", &self.v_decrease),
            ("w_sandwich", &self.w_sandwich),
            ("w_decrease", &self.w_decrease),
            ("u_sandwich", &self.u_sandwich),
            ("u_decrease", &self.u_decrease),
        ]
    }

    pub fn overall(&self) -> StabilityVerdict {
        let p = self.parts();
        StabilityVerdict::all(&p.iter().map(|(_, v)| *v).collect::<Vec<_>>())
    }
}

/// Audits every link of the chain pointwise on the grid for the zero-input
/// closed loop `x(k+1) = F_1T(k, x)`.
pub fn audit_lyapunov_chain(
    refs: &ReferenceSignal,
    gains: &ControllerGains,
    t: f64,
    t_star: f64,
    l_pe: f64,
    grid: &ChainGrid,
) -> Result<ChainReport> {
    let c = case_study_constants(refs, gains, t, t_star, l_pe, grid)?;
    if let Some(name) = c.first_invalid() {
        return Err(Error::Precondition(format!("case-study constant {name} is not admissible")));
    }
    let ctx = ChainContext::new(refs, gains, t, grid.k_max);
    let eps = c.eps_small.value;
    let ks: Vec<usize> = (0..=grid.k_max).collect();
    let parts: Vec<[Tally; 6]> = ks
        .par_iter()
        .map(|&k| -> Result<[Tally; 6]> {
            let mut out: [Tally; 6] = Default::default();
            let w = ctx.wr(k);
            for x in &grid.points {
                let wit = |m: f64, b: f64| Witness { period: t, k0: k, state: x.clone(), k, measured: m, bound: b };
                let n2 = x[0] * x[0] + x[1] * x[1];
                let y2 = x[1] * x[1];
                let xn = ctx.step(k, x)?;
                let (v0, v1) = (ctx.v(k, x), ctx.v(k + 1, &xn));
                let (w0, w1) = (ctx.w(k, x), ctx.w(k + 1, &xn));
                let (u0, u1) = (v0 + eps * w0, v1 + eps * w1);

                let (lo, hi) = (c.c1.value * n2, c.c2.value * n2);
                out[0].record(lo, v0, || wit(lo, v0));
                out[0].record(v0, hi, || wit(v0, hi));

                let dv = (v1 - v0) / t;
                let bv = -(c.alpha_x.value * x[0] * x[0] + gains.alpha_y * w * w * y2) + t * c.k1.value * n2;
                out[1].record(dv, bv, || wit(dv, bv));

                let (lo, hi) = (-c.c3.value * y2, -c.c4.value * y2);
                out[2].record(lo, w0, || wit(lo, w0));
                out[2].record(w0, hi, || wit(w0, hi));

                let dw = (w1 - w0) / t;
                let bw = w * w * y2 - c.alpha_y_tilde.value * y2 + c.k2.value * x[0] * x[0];
                out[3].record(dw, bw, || wit(dw, bw));

                let (lo, hi) = (0.5 * c.c1.value * n2, c.c2.value * n2);
                out[4].record(lo, u0, || wit(lo, u0));
                out[4].record(u0, hi, || wit(u0, hi));

                let du = (u1 - u0) / t;
                let bu = -c.c3_tilde.value * n2;
                out[5].record(du, bu, || wit(du, bu));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut tot: [Tally; 6] = Default::default();
    for p in parts {
        for (a, b) in tot.iter_mut().zip(p) {
            a.merge(b);
        }
    }
    let [a, b, cc, d, e, f] = tot.map(|t| t.into_verdict());
    Ok(ChainReport { constants: c, v_sandwich: a, v_decrease: b, w_sandwich: cc, w_decrease: d, u_sandwich: e, u_decrease: f })
}

/// Growth-assumption candidates for `V = U_T` on the driven x-subsystem:
/// `φ(s) = s`, `γ̃₁(s) = γ̃₂(s) = d·s`, `α̃₁ = (c₁/2)s²`, `α̃₂ = c₂s²`, with `d`
/// the smallest value making the cross-term inequality hold on the grid.
pub fn assumption2_candidates(
    ctx: &ChainContext<'_>,
    sys: &CascadeSystem,
    c: &CaseStudyConstants,
    x_points: &[Vec<f64>],
    z_points: &[Vec<f64>],
    k_max: usize,
) -> Result<Assumption2> {
    let eps = c.eps_small.value;
    let t = ctx.t;
    let ks: Vec<usize> = (0..=k_max).collect();
    let d = ks
        .par_iter()
        .map(|&k| -> Result<f64> {
            let mut d = 0.0f64;
            for x in x_points {
                let u0 = ctx.u(k, x, eps);
                let uz = ctx.u(k + 1, &sys.f(t, k, x, &[0.0])?, eps);
                for z in z_points {
                    let nz = norm(z);
                    if nz == 0.0 {
                        continue;
                    }
                    let u1 = ctx.u(k + 1, &sys.f(t, k, x, z)?, eps);
                    d = d.max((u1 - uz) / (t * nz * (u0 + 1.0)));
                }
            }
            Ok(d)
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(Assumption2 {
        alpha1: ClassK::power(0.5 * c.c1.value, 2.0),
        alpha2: ClassK::power(c.c2.value, 2.0),
        c: 0.0,
        phi: ClassK::identity(),
        gamma1: ClassK::linear(d),
        gamma2: ClassK::linear(d),
    })
}

/// Plant used by the comparison experiment.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlantModel {
    #[default]
    Euler,
    ExactProxy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonConfig {
    pub refs: ReferenceSignal,
    pub gains: ControllerGains,
    #[serde(rename = "T")]
    pub period: f64,
    pub horizon_s: f64,
    pub initial_error: [f64; 3],
    #[serde(default)]
    pub plant: PlantModel,
    pub variants: Vec<Correction>,
    #[serde(default = "default_proxy_tol")]
    pub proxy_tol: f64,
}

fn default_proxy_tol() -> f64 {
    crate::discretize::EXACT_PROXY_TOL
}

/// One row: `k, t, x_e, y_e, θ_e, v, ω, ϑ`.
pub type ComparisonRow = [f64; 8];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantMetrics {
    pub variant: String,
    /// `T Σ (x_e² + y_e²)`
    pub ise: f64,
    pub peak_v: f64,
    /// `T Σ v²`
    pub energy: f64,
    /// First step from which `|(x_e, y_e)| ≤ 0.01` holds to the end.
    pub settling_step: Option<usize>,
    /// First step from which `|(x_e, y_e, θ_e)| < 0.01` holds to the end.
    pub converged_step: Option<usize>,
    pub final_norm: f64,
    /// Step at which the state became non-finite.
    pub diverged_at: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantRun {
    pub metrics: VariantMetrics,
    pub rows: Vec<ComparisonRow>,
}

/// Simulates every variant from the common initial error. A variant whose
/// state becomes non-finite stops there and reports the step.
pub fn run_comparison_experiment(cfg: &ComparisonConfig) -> Result<Vec<VariantRun>> {
    cfg.gains.validate(cfg.period)?;
    let steps = horizon_index(cfg.horizon_s, cfg.period)?;
    cfg.variants
        .par_iter()
        .map(|variant| simulate_variant(cfg, *variant, steps))
        .collect()
}

fn simulate_variant(cfg: &ComparisonConfig, variant: Correction, steps: usize) -> Result<VariantRun> {
    let t = cfg.period;
    let g = cfg.gains.with_correction(variant);
    let plant = match cfg.plant {
        PlantModel::Euler => closed_loop_euler_map(&cfg.refs, &g),
        PlantModel::ExactProxy => closed_loop_exact_map(&cfg.refs, &g, cfg.proxy_tol),
    };
    let mut rows = Vec::with_capacity(steps + 1);
    let mut s = cfg.initial_error.to_vec();
    let mut diverged_at = None;
    for k in 0..=steps {
        let st = TrackingErrorState::from_slice(&s);
        let c = tracking_controller(t, k, &st, &cfg.refs, &g)?;
        rows.push([k as f64, k as f64 * t, s[0], s[1], s[2], c.v, c.omega, c.theta]);
        if k == steps {
            break;
        }
        let next = match plant.step(t, k, &s) {
            Ok(n) => n,
            Err(Error::StepUnderflow { .. }) => {
                diverged_at = Some(k + 1);
                break;
            }
            Err(e) => return Err(e),
        };
        if !crate::vecops::all_finite(&next) {
            diverged_at = Some(k + 1);
            break;
        }
        s = next;
    }
    let finite: Vec<&ComparisonRow> = rows.iter().filter(|r| r.iter().all(|v| v.is_finite())).collect();
    let ise = t * finite.iter().map(|r| r[2] * r[2] + r[3] * r[3]).sum::<f64>();
    let peak_v = finite.iter().map(|r| r[5].abs()).fold(0.0, f64::max);
    let energy = t * finite.iter().map(|r| r[5] * r[5]).sum::<f64>();
    let last_outside = |pred: &dyn Fn(&ComparisonRow) -> bool| -> Option<usize> {
        if diverged_at.is_some() {
            return None;
        }
        match rows.iter().rposition(|r| !pred(r)) {
            None => Some(0),
            Some(i) if i + 1 < rows.len() => Some(i + 1),
            Some(_) => None,
        }
    };
    let settling_step = last_outside(&|r| (r[2] * r[2] + r[3] * r[3]).sqrt() <= 0.01);
    let converged_step = last_outside(&|r| (r[2] * r[2] + r[3] * r[3] + r[4] * r[4]).sqrt() < 0.01);
    let last = rows.last().unwrap();
    let final_norm = (last[2] * last[2] + last[3] * last[3] + last[4] * last[4]).sqrt();
    Ok(VariantRun {
        metrics: VariantMetrics {
            variant: variant.name(),
            ise,
            peak_v,
            energy,
            settling_step,
            converged_step,
            final_norm,
            diverged_at,
        },
        rows,
    })
}

/// Verdict that a variant reached the 1e-2 ball within the horizon.
pub fn convergence_verdict(run: &VariantRun, period: f64) -> StabilityVerdict {
    let mut v = Tally::default();
    let m = &run.metrics;
    v.record(m.final_norm, 0.01, || Witness {
        period,
        k0: 0,
        state: run.rows[0][2..5].to_vec(),
        k: run.rows.len() - 1,
        measured: m.final_norm,
        bound: 0.01,
    });
    let mut out = v.into_verdict();
    if m.diverged_at.is_some() {
        out.kind = VerdictKind::Falsified;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo_refs() -> ReferenceSignal {
        ReferenceSignal { vr: Signal::Constant { value: 1.0 }, wr: Signal::Sine { amplitude: 20.0, frequency: 1.0, phase: 0.0 } }
    }

    fn demo_gains(c: Correction) -> ControllerGains {
        ControllerGains { a1: 10.0, a2: 70.0, alpha_y: 2.0 - 0.01, correction: c }
    }

    #[test]
    fn field_substitutions() {
        let r = ReferenceSignal { vr: Signal::Constant { value: 1.0 }, wr: Signal::Constant { value: 0.3 } };
        let f = error_dynamics_field(&r);
        assert_eq!(f.eval(0.0, &[0.0, 0.0, 0.0], &[1.0, 0.3]), vec![0.0, 0.0, 0.0]);
        assert_eq!(f.eval(0.0, &[1.0, 0.0, 0.0], &[0.0, 0.0]), vec![1.0, 0.0, 0.3]);
        let d = f.eval(0.0, &[0.0, 0.0, std::f64::consts::FRAC_PI_2], &[0.0, 0.3]);
        assert!((d[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn controller_hand_values() {
        let r = demo_refs();
        let g = demo_gains(Correction::None);
        let c = tracking_controller(0.01, 0, &TrackingErrorState::new(1.0, 0.0, 0.0), &r, &g).unwrap();
        assert_eq!(c.v, 71.0);
        assert_eq!(c.omega, 0.0);
        let th = redesign_correction(0.01, 0, 1.0, 0.0, &r, &demo_gains(Correction::Full)).unwrap();
        assert!((th - 4760.0 / 0.6).abs() < 1e-9);
        let z = tracking_controller(0.01, 3, &TrackingErrorState::default(), &r, &demo_gains(Correction::Full)).unwrap();
        assert_eq!((z.v, z.theta), (1.0, 0.0));
    }

    #[test]
    fn vanishing_denominator_is_a_domain_error() {
        let r = ReferenceSignal { vr: Signal::Zero, wr: Signal::Zero };
        let g = ControllerGains { a1: 1.0, a2: 100.0, alpha_y: 0.1, correction: Correction::Full };
        assert!(matches!(redesign_correction(0.01, 0, 1.0, 0.0, &r, &g), Err(Error::Domain(_))));
    }

    #[test]
    fn v_hand_values() {
        let r = ReferenceSignal { vr: Signal::Zero, wr: Signal::Constant { value: 1.0 } };
        let g = ControllerGains { a1: 1.0, a2: 1.0, alpha_y: 0.1 - 0.01, correction: Correction::None };
        assert!((lyap_v(0.01, 5, &[1.0, 1.0], &r, &g) - 1.9).abs() < 1e-15);
        let (c1, _) = v_constants(2.0 - 0.01, 0.01, 20.0);
        assert_eq!(c1.value, -19.0);
        assert!(!c1.valid);
    }

    #[test]
    fn weight_cache_matches_direct_sum() {
        let r = demo_refs();
        let cache = WeightCache::new(&r, 0.01, 700, 1e-12);
        for k in [0, 1, 157, 314, 629] {
            let direct = lyap_w(0.01, k, 1.0, &r, 1e-12);
            assert!((cache.w(k, 1.0) - direct).abs() < 1e-9, "{k}");
        }
        assert_eq!(lyap_w(0.01, 3, 0.0, &r, 1e-10), 0.0);
    }

    #[test]
    fn constant_reference_weight_limit() {
        let w = 1.5;
        let r = ReferenceSignal { vr: Signal::Zero, wr: Signal::Constant { value: w } };
        let t = 0.01;
        let exact = -w * w * t / (1.0 - (-t).exp());
        assert!((lyap_w(t, 0, 1.0, &r, 1e-12) - exact).abs() < 1e-9);
        assert!(lyap_w(t, 0, 1.0, &r, 1e-12) >= -2.0 * w * w);
    }

    #[test]
    fn t3_root() {
        let t = t3_star();
        assert!((t / (1.0 - (-t).exp()) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_signal_fails_pe() {
        let r = check_pe(&Signal::Zero, 1.0, 0.1, &[0.01], Some(10)).unwrap();
        assert!(r.verdict.is_falsified());
    }

    #[test]
    fn constant_signal_pe_sum() {
        let c = 0.7;
        let r = check_pe(&Signal::Constant { value: c }, 1.0, c * c * 1.0, &[0.01, 0.03, 0.07], Some(50)).unwrap();
        assert!(r.verdict.passed());
    }

    #[test]
    fn demo_constants_are_flagged() {
        let r = demo_refs();
        let g = demo_gains(Correction::Full);
        let grid = ChainGrid { points: BoxPoints::small(), k_max: 20 };
        let c = case_study_constants(&r, &g, 0.01, 0.01, std::f64::consts::PI, &grid).unwrap();
        assert_eq!(c.first_invalid(), Some("c1"));
        let ctx = ChainContext::new(&r, &g, 0.01, 20);
        assert!(matches!(lyap_u(&ctx, 0, &[0.0, 0.0], &c), Err(Error::Precondition(_))));
    }

    struct BoxPoints;
    impl BoxPoints {
        fn small() -> Vec<Vec<f64>> {
            crate::sampling::BoxDomain::cube(2, 1.0).grid(5)
        }
    }
}
