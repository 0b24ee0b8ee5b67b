//! Grid audits of the stability, boundedness and Lyapunov properties, the
//! summability test, and the `ρ ∘ V` boundedness certificate.
//!
//! Every audit returns a [`StabilityVerdict`]. A falsified verdict carries the
//! first violating sample in grid order; a passing one carries the sample
//! closest to violation.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cascade::{CascadeSystem, Trajectory};
use crate::error::{Error, Result};
use crate::numerics::{ClassK, KlBound};
use crate::quad::simpson;
use crate::system::{check_period, DiscreteSystem};
use crate::vecops::{all_finite, dist, norm, scale};

/// Absolute slack granted to every inequality for floating-point noise.
pub const SLACK: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerdictKind {
    Pass,
    Falsified,
    Inconclusive,
}

/// A sample at which an inequality `measured ≤ bound` was evaluated. For
/// trajectory audits `state` is the initial condition at `k0` and `k` the
/// absolute step index; for pointwise audits `k0 = k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub period: f64,
    pub k0: usize,
    pub state: Vec<f64>,
    pub k: usize,
    pub measured: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityVerdict {
    pub kind: VerdictKind,
    /// First violation in grid order (falsified verdicts only).
    pub witness: Option<Witness>,
    /// Sample with the largest `measured − bound`.
    pub worst: Option<Witness>,
    /// Largest `measured / bound` over samples with positive bound.
    pub worst_ratio: f64,
    /// Largest `measured − bound`.
    pub worst_slack: f64,
    pub checked: usize,
    pub violations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl StabilityVerdict {
    pub fn passed(&self) -> bool {
        self.kind == VerdictKind::Pass
    }

    pub fn is_falsified(&self) -> bool {
        self.kind == VerdictKind::Falsified
    }

    /// Combines verdicts of several inequalities into one; the first falsified
    /// component provides the witness.
    pub fn all(parts: &[&StabilityVerdict]) -> StabilityVerdict {
        let mut t = Tally::default();
        for p in parts {
            t.merge(Tally::from_verdict(p));
        }
        let mut v = t.into_verdict();
        if v.kind == VerdictKind::Pass && parts.iter().any(|p| p.kind == VerdictKind::Inconclusive) {
            v.kind = VerdictKind::Inconclusive;
        }
        v
    }
}

impl fmt::Display for StabilityVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:?}: {} samples, {} violations, worst slack {:.3e}",
            self.kind, self.checked, self.violations, self.worst_slack
        )
    }
}

/// Running summary of `measured ≤ bound` checks. Tallies built over disjoint
/// parts of a grid are merged in grid order so the result does not depend on
/// how the work was split.
#[derive(Clone, Debug, Default)]
pub struct Tally {
    checked: usize,
    violations: usize,
    worst_ratio: Option<f64>,
    worst_slack: Option<f64>,
    witness: Option<Witness>,
    worst: Option<Witness>,
}

impl Tally {
    pub fn record<W: FnOnce() -> Witness>(&mut self, measured: f64, bound: f64, witness: W) {
        self.checked += 1;
        let slack = if measured.is_nan() { f64::INFINITY } else { measured - bound };
        let violated = !(measured <= bound + SLACK);
        if bound > 0.0 {
            let r = measured / bound;
            self.worst_ratio = Some(self.worst_ratio.map_or(r, |w| w.max(r)));
        }
        let improves = self.worst_slack.map_or(true, |w| slack > w);
        if violated {
            self.violations += 1;
        }
        if improves || (violated && self.witness.is_none()) {
            let w = witness();
            if violated && self.witness.is_none() {
                self.witness = Some(w.clone());
            }
            if improves {
                self.worst_slack = Some(slack);
                self.worst = Some(w);
            }
        }
    }

    pub fn merge(&mut self, other: Tally) {
        self.checked += other.checked;
        self.violations += other.violations;
        self.worst_ratio = match (self.worst_ratio, other.worst_ratio) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        };
        if self.witness.is_none() {
            self.witness = other.witness;
        }
        if let Some(s) = other.worst_slack {
            if self.worst_slack.map_or(true, |w| s > w) {
                self.worst_slack = Some(s);
                self.worst = other.worst;
            }
        }
    }

    fn from_verdict(v: &StabilityVerdict) -> Tally {
        Tally {
            checked: v.checked,
            violations: v.violations,
            worst_ratio: (v.checked > 0).then_some(v.worst_ratio),
            worst_slack: (v.checked > 0).then_some(v.worst_slack),
            witness: v.witness.clone(),
            worst: v.worst.clone(),
        }
    }

    pub fn into_verdict(self) -> StabilityVerdict {
        StabilityVerdict {
            kind: if self.violations > 0 { VerdictKind::Falsified } else { VerdictKind::Pass },
            witness: self.witness,
            worst: self.worst,
            worst_ratio: self.worst_ratio.unwrap_or(0.0),
            worst_slack: self.worst_slack.unwrap_or(f64::NEG_INFINITY),
            checked: self.checked,
            violations: self.violations,
            note: None,
        }
    }
}

/// Grid of initial conditions, start indices, periods and horizon shared by
/// the trajectory audits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryGrid {
    pub points: Vec<Vec<f64>>,
    pub k0_set: Vec<usize>,
    pub t_list: Vec<f64>,
    /// Steps simulated after `k0`.
    pub horizon: usize,
}

/// Simulates every grid case and checks `|φ(k)| ≤ bound(|y₀|, (k−k₀)T)`.
/// Non-finite states count as violations at the step where they appear.
pub fn audit_trajectories<S, B>(sys: &S, grid: &TrajectoryGrid, bound: B) -> Result<StabilityVerdict>
where
    S: DiscreteSystem + ?Sized,
    B: Fn(f64, f64) -> f64 + Sync,
{
    let mut cases = Vec::new();
    for &t in &grid.t_list {
        check_period(t, sys.t_max())?;
        for &k0 in &grid.k0_set {
            for y0 in &grid.points {
                cases.push((t, k0, y0));
            }
        }
    }
    let tallies: Vec<Tally> = cases
        .par_iter()
        .map(|&(t, k0, y0)| -> Result<Tally> {
            let mut tally = Tally::default();
            let n0 = norm(y0);
            let mut y = y0.clone();
            for i in 0..=grid.horizon {
                if i > 0 {
                    y = sys.step(t, k0 + i - 1, &y)?;
                }
                let measured = if all_finite(&y) { norm(&y) } else { f64::INFINITY };
                let b = bound(n0, i as f64 * t);
                tally.record(measured, b, || Witness {
                    period: t,
                    k0,
                    state: y0.clone(),
                    k: k0 + i,
                    measured,
                    bound: b,
                });
                if !measured.is_finite() {
                    break;
                }
            }
            Ok(tally)
        })
        .collect::<Result<_>>()?;
    let mut total = Tally::default();
    for t in tallies {
        total.merge(t);
    }
    Ok(total.into_verdict())
}

/// Comparator of the stability audit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "form", content = "delta")]
pub enum SpuasForm {
    /// `|φ(k)| ≤ max{β(|y₀|, (k−k₀)T), ν}`
    Max,
    /// `|φ(k)| ≤ β(|y₀|, (k−k₀)T) + δ`
    PlusDelta(f64),
}

/// Looks for a trajectory leaving the KL envelope. Initial states outside the
/// ball of radius `delta` are skipped.
pub fn falsify_spuas<S: DiscreteSystem + ?Sized>(
    sys: &S,
    beta: &KlBound,
    delta: f64,
    nu: f64,
    grid: &TrajectoryGrid,
    form: SpuasForm,
) -> Result<StabilityVerdict> {
    if !(delta > nu && nu >= 0.0) {
        return Err(Error::Domain(format!("need Δ > ν ≥ 0 (got {delta}, {nu})")));
    }
    let mut g = grid.clone();
    g.points.retain(|p| norm(p) <= delta * (1.0 + 1e-12));
    audit_trajectories(sys, &g, |s, t| match form {
        SpuasForm::Max => beta.eval(s, t).max(nu),
        SpuasForm::PlusDelta(d) => beta.eval(s, t) + d,
    })
}

/// `|φ(k)| ≤ κ(|y₀|) + c` along every grid trajectory.
pub fn check_boundedness<S: DiscreteSystem + ?Sized>(
    sys: &S,
    kappa: &ClassK,
    c: f64,
    delta: f64,
    grid: &TrajectoryGrid,
) -> Result<StabilityVerdict> {
    if !(delta > 0.0 && c >= 0.0) {
        return Err(Error::Domain("need Δ > 0 and c ≥ 0".into()));
    }
    let mut g = grid.clone();
    g.points.retain(|p| norm(p) <= delta * (1.0 + 1e-12));
    audit_trajectories(sys, &g, |s, _| kappa.eval(s) + c)
}

/// Re-simulates a trajectory witness and returns `|φ(k)|`.
pub fn replay_witness<S: DiscreteSystem + ?Sized>(sys: &S, w: &Witness) -> Result<f64> {
    let mut y = w.state.clone();
    for k in w.k0..w.k {
        y = sys.step(w.period, k, &y)?;
    }
    Ok(if all_finite(&y) { norm(&y) } else { f64::INFINITY })
}

type VFn = dyn Fn(f64, usize, &[f64]) -> f64 + Send + Sync;

/// A Lyapunov function candidate `V_T(k, y)` with its comparison functions.
#[derive(Clone)]
pub struct LyapunovCandidate {
    eval: Arc<VFn>,
    pub alpha1: ClassK,
    pub alpha2: ClassK,
    pub alpha3: ClassK,
    /// Lipschitz modulus `L(·)` of class N.
    pub l_mod: ClassK,
}

impl fmt::Debug for LyapunovCandidate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LyapunovCandidate")
            .field("alpha1", &self.alpha1)
            .field("alpha2", &self.alpha2)
            .field("alpha3", &self.alpha3)
            .field("l_mod", &self.l_mod)
            .finish()
    }
}

impl LyapunovCandidate {
    pub fn new<F>(eval: F, alpha1: ClassK, alpha2: ClassK, alpha3: ClassK, l_mod: ClassK) -> Self
    where
        F: Fn(f64, usize, &[f64]) -> f64 + Send + Sync + 'static,
    {
        Self { eval: Arc::new(eval), alpha1, alpha2, alpha3, l_mod }
    }

    pub fn eval(&self, t: f64, k: usize, y: &[f64]) -> f64 {
        (self.eval)(t, k, y)
    }

    /// `λ·V` with all comparison functions scaled by `λ`.
    pub fn scaled(&self, lambda: f64) -> Self {
        let inner = self.eval.clone();
        Self {
            eval: Arc::new(move |t, k, y| lambda * inner(t, k, y)),
            alpha1: self.alpha1.scaled(lambda),
            alpha2: self.alpha2.scaled(lambda),
            alpha3: self.alpha3.scaled(lambda),
            l_mod: self.l_mod.scaled(lambda),
        }
    }
}

/// Form of the decrease inequality.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecreaseForm {
    /// `ΔV ≤ −T(α₃(|y|) + ν)`
    #[default]
    AsPrinted,
    /// `ΔV ≤ −Tα₃(|y|) + Tν`
    Practical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovAudit {
    pub delta: f64,
    pub nu: f64,
    pub points: Vec<Vec<f64>>,
    pub k_set: Vec<usize>,
    pub t_list: Vec<f64>,
    pub form: DecreaseForm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovReport {
    pub sandwich: StabilityVerdict,
    pub decrease: StabilityVerdict,
    pub lipschitz: StabilityVerdict,
}

impl LyapunovReport {
    pub fn overall(&self) -> StabilityVerdict {
        StabilityVerdict::all(&[&self.sandwich, &self.decrease, &self.lipschitz])
    }
}

pub fn decrease_bound(v: &LyapunovCandidate, t: f64, y: &[f64], nu: f64, form: DecreaseForm) -> f64 {
    let a3 = v.alpha3.eval(norm(y));
    match form {
        DecreaseForm::AsPrinted => -t * (a3 + nu),
        DecreaseForm::Practical => -t * a3 + t * nu,
    }
}

/// Audits sandwich, decrease and Lipschitz inequalities on the grid. The
/// Lipschitz check pairs point `i` with point `i + n/2` and with a 0.1%
/// radial contraction of itself.
pub fn audit_lyapunov<S: DiscreteSystem + ?Sized>(
    v: &LyapunovCandidate,
    f: &S,
    audit: &LyapunovAudit,
) -> Result<LyapunovReport> {
    if !(audit.delta > 0.0 && audit.nu >= 0.0) {
        return Err(Error::Domain("need Δ > 0 and ν ≥ 0".into()));
    }
    let pts: Vec<&Vec<f64>> = audit.points.iter().filter(|p| norm(p) <= audit.delta * (1.0 + 1e-12)).collect();
    let half = pts.len() / 2;
    let mut cases = Vec::new();
    for &t in &audit.t_list {
        check_period(t, f.t_max())?;
        for &k in &audit.k_set {
            for (i, y) in pts.iter().enumerate() {
                cases.push((t, k, i, *y));
            }
        }
    }
    let parts: Vec<[Tally; 3]> = cases
        .par_iter()
        .map(|&(t, k, i, y)| -> Result<[Tally; 3]> {
            let mut out: [Tally; 3] = Default::default();
            let wit = |m: f64, b: f64, s: &[f64]| Witness { period: t, k0: k, state: s.to_vec(), k, measured: m, bound: b };
            let n = norm(y);
            let val = v.eval(t, k, y);
            let (a1, a2) = (v.alpha1.eval(n), v.alpha2.eval(n));
            // sandwich as two checks with the same witness shape
            out[0].record(a1, val, || wit(a1, val, y));
            out[0].record(val, a2, || wit(val, a2, y));
            let next = f.step(t, k, y)?;
            let dv = if all_finite(&next) { v.eval(t, k + 1, &next) - val } else { f64::INFINITY };
            let b = decrease_bound(v, t, y, audit.nu, audit.form);
            out[1].record(dv, b, || wit(dv, b, y));
            let mut partners = vec![scale(y, 0.999)];
            if i < half {
                partners.push(pts[i + half].clone());
            }
            for r in partners {
                let d = dist(y, &r);
                let m = (val - v.eval(t, k, &r)).abs();
                let b = v.l_mod.eval(n.max(norm(&r))) * d;
                out[2].record(m, b, || wit(m, b, y));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut tot: [Tally; 3] = Default::default();
    for [a, b, c] in parts {
        tot[0].merge(a);
        tot[1].merge(b);
        tot[2].merge(c);
    }
    let [s, d, l] = tot;
    Ok(LyapunovReport { sandwich: s.into_verdict(), decrease: d.into_verdict(), lipschitz: l.into_verdict() })
}

/// Recomputes `V(k+1, F(k, y)) − V(k, y)` at a decrease witness.
pub fn replay_decrease<S: DiscreteSystem + ?Sized>(v: &LyapunovCandidate, f: &S, w: &Witness) -> Result<f64> {
    let next = f.step(w.period, w.k, &w.state)?;
    Ok(v.eval(w.period, w.k + 1, &next) - v.eval(w.period, w.k, &w.state))
}

/// Geometric tail certificate of a nonnegative series.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub partial: f64,
    /// Fitted ratio of consecutive terms over the last third, `None` when the
    /// terms there are all zero.
    pub ratio: Option<f64>,
    pub tail: f64,
}

/// Fits `term(k) ≈ C r^k` on the last third of `terms` and bounds the
/// remainder by `last · r / (1 − r)`. A ratio `≥ 1` gives an infinite tail.
pub fn geometric_tail(terms: &[f64]) -> TailEstimate {
    let partial: f64 = terms.iter().sum();
    let n = terms.len();
    let from = n - n / 3;
    let tail_terms = &terms[from.min(n)..];
    let pts: Vec<(f64, f64)> = tail_terms
        .iter()
        .enumerate()
        .filter(|(_, v)| **v > 0.0)
        .map(|(i, v)| (i as f64, v.ln()))
        .collect();
    if tail_terms.iter().all(|v| *v == 0.0) {
        return TailEstimate { partial, ratio: None, tail: 0.0 };
    }
    if pts.len() < 2 {
        return TailEstimate { partial, ratio: Some(1.0), tail: f64::INFINITY };
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let r = (sxy / sxx).exp();
    let last = *terms.last().unwrap();
    let tail = if r < 1.0 { last * r / (1.0 - r) } else { f64::INFINITY };
    TailEstimate { partial, ratio: Some(r), tail }
}

/// `T Σ μ(|φ^z(k)|) ≤ ρ(|z₀|)` for each trajectory, with the infinite sum
/// bounded by a geometric tail fit. A tail that does not decay, or that is
/// not below 1e-6 of the partial sum, makes the verdict inconclusive unless
/// the partial sum alone already exceeds the bound.
pub fn check_summability(z_trajs: &[Trajectory], mu: &ClassK, rho: &ClassK) -> StabilityVerdict {
    let mut tally = Tally::default();
    let mut inconclusive = Vec::new();
    for (id, tr) in z_trajs.iter().enumerate() {
        let t = tr.period;
        let terms: Vec<f64> = tr.norms.iter().map(|n| t * mu.eval(*n)).collect();
        let est = geometric_tail(&terms);
        let bound = rho.eval(tr.norms[0]);
        let settled = est.tail.is_finite() && est.tail <= 1e-6 * est.partial.max(f64::MIN_POSITIVE);
        let total = est.partial + if est.tail.is_finite() { est.tail } else { 0.0 };
        let w = || Witness {
            period: t,
            k0: tr.k0,
            state: tr.states[0].clone(),
            k: tr.k0 + tr.len() - 1,
            measured: total,
            bound,
        };
        if !settled && est.tail != 0.0 && est.partial <= bound + SLACK {
            inconclusive.push(id);
            continue;
        }
        tally.record(total, bound, w);
    }
    let mut v = tally.into_verdict();
    if v.kind == VerdictKind::Pass && !inconclusive.is_empty() {
        v.kind = VerdictKind::Inconclusive;
        v.note = Some(format!("tail not certified for trajectories {inconclusive:?}"));
    }
    v
}

/// `α₁(|φ^x(k)|) ≤ α₂(|x₀|) + T Σ_{i<k} μ(|z(i)|)` along one trajectory.
pub fn check_iisns(
    x_traj: &Trajectory,
    z_inputs: &[Vec<f64>],
    alpha1: &ClassK,
    alpha2: &ClassK,
    mu: &ClassK,
) -> Result<StabilityVerdict> {
    if z_inputs.len() + 1 < x_traj.len() {
        return Err(Error::Domain("input sequence shorter than trajectory".into()));
    }
    let t = x_traj.period;
    let a0 = alpha2.eval(x_traj.norms[0]);
    let mut acc = 0.0;
    let mut tally = Tally::default();
    for (i, n) in x_traj.norms.iter().enumerate() {
        if i > 0 {
            acc += t * mu.eval(norm(&z_inputs[i - 1]));
        }
        let m = alpha1.eval(*n);
        let b = a0 + acc;
        tally.record(m, b, || Witness {
            period: t,
            k0: x_traj.k0,
            state: x_traj.states[0].clone(),
            k: x_traj.k0 + i,
            measured: m,
            bound: b,
        });
    }
    Ok(tally.into_verdict())
}

/// Whether `∫_1^∞ ds/φ(s)` diverges, decided from the parametric form.
pub fn integral_diverges(phi: &ClassK) -> bool {
    match phi {
        ClassK::Linear { .. } | ClassK::AffineCapped { .. } | ClassK::Tabulated { .. } => true,
        ClassK::Power { exponent, .. } => *exponent <= 1.0,
        ClassK::Sum { terms } => terms.iter().all(integral_diverges),
    }
}

/// `ρ(s) = ∫_0^s q`, `q(s) = 1/φ(max{s, 1})`. Below one the closed form
/// `s/φ(1)` is used; above, values are accumulated by adaptive Simpson
/// between knots on a geometric grid and completed from the nearest knot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rho {
    pub phi: ClassK,
    phi1: f64,
    knots: Vec<(f64, f64)>,
}

const RHO_TOL: f64 = 1e-10;
const RHO_KNOTS_PER_DOUBLING: usize = 16;

impl Rho {
    pub fn new(phi: ClassK, s_max: f64) -> Result<Self> {
        phi.validate()?;
        if !integral_diverges(&phi) {
            return Err(Error::Precondition("∫_1^∞ ds/φ(s) converges for this φ".into()));
        }
        let phi1 = phi.eval(1.0);
        if !(phi1 > 0.0) {
            return Err(Error::Precondition("φ(1) must be positive".into()));
        }
        let mut rho = Self { phi, phi1, knots: vec![(1.0, 1.0 / phi1)] };
        let step = 2f64.powf(1.0 / RHO_KNOTS_PER_DOUBLING as f64);
        let mut s = 1.0;
        while s < s_max {
            let next = s * step;
            let piece = simpson(|u| rho.q(u), s, next, RHO_TOL / 64.0)?;
            let last = rho.knots.last().unwrap().1;
            rho.knots.push((next, last + piece));
            s = next;
        }
        Ok(rho)
    }

    pub fn q(&self, s: f64) -> f64 {
        if s <= 1.0 {
            1.0 / self.phi1
        } else {
            1.0 / self.phi.eval(s)
        }
    }

    pub fn eval(&self, s: f64) -> f64 {
        if s <= 1.0 {
            return s.max(0.0) / self.phi1;
        }
        let i = self.knots.partition_point(|(a, _)| *a <= s) - 1;
        let (a, base) = self.knots[i];
        if a == s {
            return base;
        }
        base + simpson(|u| self.q(u), a, s, RHO_TOL / 64.0).unwrap_or(f64::NAN)
    }
}

/// Candidate functions of the growth assumption behind the certificate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assumption2 {
    pub alpha1: ClassK,
    pub alpha2: ClassK,
    pub c: f64,
    pub phi: ClassK,
    pub gamma1: ClassK,
    pub gamma2: ClassK,
}

impl Assumption2 {
    /// `μ(s) = γ̃₁(s) + γ̃₂(s)/φ(1)`
    pub fn mu(&self) -> ClassK {
        ClassK::Sum { terms: vec![self.gamma1.clone(), self.gamma2.scaled(1.0 / self.phi.eval(1.0))] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UgbCertificate {
    pub assumption: Assumption2,
    pub rho: Rho,
    pub mu: ClassK,
}

impl UgbCertificate {
    /// `W = ρ ∘ V`
    pub fn w(&self, v: f64) -> f64 {
        self.rho.eval(v)
    }
}

/// Grid for the certificate audit: states, inputs, time indices and periods.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CascadeGrid {
    pub x_points: Vec<Vec<f64>>,
    pub z_points: Vec<Vec<f64>>,
    pub k_set: Vec<usize>,
    pub t_list: Vec<f64>,
}

/// How often each branch of the increment argument was taken.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseCounts {
    /// `V` did not increase.
    pub decreasing: usize,
    /// `V` increased from a value at most one.
    pub small: usize,
    /// `V` increased from a value above one.
    pub large: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UgbReport {
    pub certificate: UgbCertificate,
    pub sandwich: StabilityVerdict,
    pub cross_term: StabilityVerdict,
    pub zero_input_decrease: StabilityVerdict,
    /// `W(k+1, f(k,x,z)) − W(k,x) ≤ Tμ(|z|)`
    pub w_increment: StabilityVerdict,
    pub cases: CaseCounts,
}

impl UgbReport {
    pub fn hypotheses(&self) -> StabilityVerdict {
        StabilityVerdict::all(&[&self.sandwich, &self.cross_term, &self.zero_input_decrease])
    }
}

/// Verifies the growth assumption on the grid, builds `ρ`, `μ` and
/// `W = ρ ∘ V`, and audits the increment bound of `W`.
pub fn build_ugb_certificate<V>(v: V, sys: &CascadeSystem, a2: &Assumption2, grid: &CascadeGrid) -> Result<UgbReport>
where
    V: Fn(f64, usize, &[f64]) -> f64 + Sync,
{
    let mut cases = Vec::new();
    for &t in &grid.t_list {
        check_period(t, sys.t_max)?;
        for &k in &grid.k_set {
            for x in &grid.x_points {
                cases.push((t, k, x));
            }
        }
    }
    // V values along the grid bound the range ρ must cover
    let zero = vec![0.0; sys.dim_z];
    let v_max = cases
        .par_iter()
        .map(|&(t, k, x)| -> Result<f64> {
            let mut m = v(t, k, x);
            for z in &grid.z_points {
                m = m.max(v(t, k + 1, &sys.f(t, k, x, z)?));
            }
            Ok(m)
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(1.0, f64::max);
    let rho = Rho::new(a2.phi.clone(), 2.0 * v_max)?;
    let mu = a2.mu();
    let cert = UgbCertificate { assumption: a2.clone(), rho, mu: mu.clone() };
    let parts: Vec<([Tally; 4], CaseCounts)> = cases
        .par_iter()
        .map(|&(t, k, x)| -> Result<([Tally; 4], CaseCounts)> {
            let mut out: [Tally; 4] = Default::default();
            let mut counts = CaseCounts::default();
            let wit = |m: f64, b: f64, s: Vec<f64>| Witness { period: t, k0: k, state: s, k, measured: m, bound: b };
            let nx = norm(x);
            let v0 = v(t, k, x);
            let (lo, hi) = (a2.alpha1.eval(nx), a2.alpha2.eval(nx) + a2.c);
            out[0].record(lo, v0, || wit(lo, v0, x.clone()));
            out[0].record(v0, hi, || wit(v0, hi, x.clone()));
            let v_zero = v(t, k + 1, &sys.f(t, k, x, &zero)?);
            let d0 = v_zero - v0;
            out[2].record(d0, 0.0, || wit(d0, 0.0, x.clone()));
            let w0 = cert.w(v0);
            for z in &grid.z_points {
                let nz = norm(z);
                let xi = || crate::vecops::stack(x, z);
                let v1 = v(t, k + 1, &sys.f(t, k, x, z)?);
                let cross = v1 - v_zero;
                let cb = t * a2.gamma1.eval(nz) * a2.phi.eval(v0) + t * a2.gamma2.eval(nz);
                out[1].record(cross, cb, || wit(cross, cb, xi()));
                if v1 <= v0 {
                    counts.decreasing += 1;
                } else if v0 <= 1.0 {
                    counts.small += 1;
                } else {
                    counts.large += 1;
                }
                let dw = cert.w(v1) - w0;
                let wb = t * mu.eval(nz);
                out[3].record(dw, wb, || wit(dw, wb, xi()));
            }
            Ok((out, counts))
        })
        .collect::<Result<_>>()?;
    let mut tot: [Tally; 4] = Default::default();
    let mut counts = CaseCounts::default();
    for (p, c) in parts {
        for (a, b) in tot.iter_mut().zip(p) {
            a.merge(b);
        }
        counts.decreasing += c.decreasing;
        counts.small += c.small;
        counts.large += c.large;
    }
    let [s, x, d, w] = tot;
    Ok(UgbReport {
        certificate: cert,
        sandwich: s.into_verdict(),
        cross_term: x.into_verdict(),
        zero_input_decrease: d.into_verdict(),
        w_increment: w.into_verdict(),
        cases: counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::ParameterizedMap;

    fn scalar(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> ParameterizedMap {
        ParameterizedMap::custom(1, 1.0, move |t, _, x| Ok(vec![f(t, x[0])]))
    }

    fn grid(points: Vec<f64>, t_list: Vec<f64>, horizon: usize) -> TrajectoryGrid {
        TrajectoryGrid { points: points.into_iter().map(|p| vec![p]).collect(), k0_set: vec![0, 7], t_list, horizon }
    }

    #[test]
    fn contraction_passes_half_rate_envelope() {
        let a1 = 10.0;
        let sys = scalar(move |t, y| (1.0 - t * a1) * y).with_t_max(0.1);
        let beta = KlBound::exp(1.0, a1 / 2.0);
        let g = grid(vec![-1.0, -0.3, 0.0, 0.5, 1.0], vec![0.001, 0.01, 0.05, 0.0999], 500);
        let v = falsify_spuas(&sys, &beta, 1.0, 0.0, &g, SpuasForm::Max).unwrap();
        assert!(v.passed(), "{v}");
    }

    #[test]
    fn expansion_is_falsified_and_witness_replays() {
        let sys = scalar(|t, y| (1.0 + t) * y);
        let beta = KlBound::exp(100.0, 1e-4);
        let g = grid(vec![1.0], vec![0.1], 2000);
        let v = falsify_spuas(&sys, &beta, 2.0, 0.0, &g, SpuasForm::Max).unwrap();
        assert!(v.is_falsified());
        let w = v.witness.unwrap();
        assert!((replay_witness(&sys, &w).unwrap() - w.measured).abs() <= 1e-12 * w.measured);
    }

    #[test]
    fn drift_breaks_boundedness() {
        let sys = scalar(|t, y| y + t);
        let g = grid(vec![0.0, 1.0], vec![0.1], 200);
        let v = check_boundedness(&sys, &ClassK::identity(), 5.0, 1.0, &g).unwrap();
        assert!(v.is_falsified());
        let c = scalar(|t, y| (1.0 - t) * y);
        assert!(check_boundedness(&c, &ClassK::identity(), 0.0, 1.0, &g).unwrap().passed());
    }

    fn square() -> LyapunovCandidate {
        LyapunovCandidate::new(
            |_, _, y| y[0] * y[0],
            ClassK::power(1.0, 2.0),
            ClassK::power(1.0, 2.0),
            ClassK::power(1.0, 2.0),
            ClassK::linear(2.0),
        )
    }

    #[test]
    fn lyapunov_square_of_contraction() {
        let pts: Vec<Vec<f64>> = (-10..=10).map(|i| vec![i as f64 / 10.0]).collect();
        let audit = LyapunovAudit {
            delta: 1.0,
            nu: 0.0,
            points: pts,
            k_set: vec![0, 3],
            t_list: vec![0.01, 0.5, 0.99],
            form: DecreaseForm::AsPrinted,
        };
        let r = audit_lyapunov(&square(), &scalar(|t, y| (1.0 - t) * y), &audit).unwrap();
        assert!(r.overall().passed(), "{:?}", r);
        let id = audit_lyapunov(&square(), &scalar(|_, y| y), &audit).unwrap();
        assert!(id.decrease.is_falsified());
        let w = id.decrease.witness.unwrap();
        assert!((replay_decrease(&square(), &scalar(|_, y| y), &w).unwrap() - w.measured).abs() < 1e-12);
    }

    #[test]
    fn summability_examples() {
        let (t, a1) = (0.01, 10.0);
        let z: Vec<Vec<f64>> = (0..3000).map(|k| vec![2.0 * (1.0f64 - t * a1).powi(k)]).collect();
        let tr = Trajectory::new(t, 0, z);
        let rho = ClassK::linear(1.0 / a1);
        let v = check_summability(&[tr], &ClassK::identity(), &rho.scaled(1.0 + 1e-9));
        assert!(v.passed(), "{v:?}");
        let zero = Trajectory::new(t, 0, vec![vec![0.0]; 10]);
        assert!(check_summability(&[zero], &ClassK::identity(), &ClassK::linear(1e-3)).passed());
        let h = Trajectory::new(1.0, 0, (0..5000).map(|k| vec![1.0 / (k as f64 + 1.0)]).collect());
        let v = check_summability(&[h], &ClassK::identity(), &ClassK::linear(100.0));
        assert!(!v.passed());
    }

    #[test]
    fn iisns_examples() {
        let t = 0.1;
        let z: Vec<Vec<f64>> = (0..20).map(|k| vec![(k % 3) as f64]).collect();
        let mut xs = vec![vec![0.5]];
        for zk in &z {
            let x = xs.last().unwrap()[0];
            xs.push(vec![x + t * zk[0]]);
        }
        let tr = Trajectory::new(t, 0, xs);
        let id = ClassK::identity();
        let v = check_iisns(&tr, &z, &id, &id, &id).unwrap();
        assert!(v.passed());
        assert!(v.worst_slack.abs() < 1e-12);
        let v = check_iisns(&tr, &z, &id, &ClassK::linear(0.5), &id).unwrap();
        assert_eq!(v.witness.unwrap().k, 0);
    }

    #[test]
    fn rho_for_identity_growth() {
        let rho = Rho::new(ClassK::identity(), 100.0).unwrap();
        for s in [0.0f64, 0.3, 1.0, 1.7, 5.0, 42.0, 99.0, 250.0] {
            let exact = if s <= 1.0 { s } else { 1.0 + s.ln() };
            assert!((rho.eval(s) - exact).abs() < 1e-8, "{s}");
        }
        assert!(Rho::new(ClassK::power(1.0, 2.0), 10.0).is_err());
    }
}
