//! Time-varying cascades
//!
//! ```text
//! x(k+1) = f_T(k, x(k), z(k))
//! z(k+1) = g_T(k, z(k))
//! ```
//!
//! with simulation, driven simulation and audits of the interconnection
//! growth and continuity hypotheses.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{horizon_index, ClassK};
use crate::sampling::{ball_samples, halton};
use crate::stability::{StabilityVerdict, Tally, Witness};
use crate::system::{check_period, DiscreteSystem};
use crate::vecops::{all_finite, dist, norm, stack};

type FFn = dyn Fn(f64, usize, &[f64], &[f64]) -> Result<Vec<f64>> + Send + Sync;
type GFn = dyn Fn(f64, usize, &[f64]) -> Result<Vec<f64>> + Send + Sync;

#[derive(Clone)]
pub struct CascadeSystem {
    pub dim_x: usize,
    pub dim_z: usize,
    pub t_max: f64,
    f: Arc<FFn>,
    g: Arc<GFn>,
}

impl fmt::Debug for CascadeSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CascadeSystem(dim_x={}, dim_z={}, t_max={})", self.dim_x, self.dim_z, self.t_max)
    }
}

impl CascadeSystem {
    pub fn new<F, G>(dim_x: usize, dim_z: usize, t_max: f64, f: F, g: G) -> Self
    where
        F: Fn(f64, usize, &[f64], &[f64]) -> Result<Vec<f64>> + Send + Sync + 'static,
        G: Fn(f64, usize, &[f64]) -> Result<Vec<f64>> + Send + Sync + 'static,
    {
        Self { dim_x, dim_z, t_max, f: Arc::new(f), g: Arc::new(g) }
    }

    pub fn f(&self, t: f64, k: usize, x: &[f64], z: &[f64]) -> Result<Vec<f64>> {
        (self.f)(t, k, x, z)
    }

    pub fn g(&self, t: f64, k: usize, z: &[f64]) -> Result<Vec<f64>> {
        (self.g)(t, k, z)
    }

    /// The x-subsystem with `z ≡ 0`.
    pub fn zero_input(&self) -> ZeroInput<'_> {
        ZeroInput(self)
    }

    /// The autonomous z-subsystem.
    pub fn z_subsystem(&self) -> ZSubsystem<'_> {
        ZSubsystem(self)
    }

    pub fn split<'a>(&self, xi: &'a [f64]) -> (&'a [f64], &'a [f64]) {
        xi.split_at(self.dim_x)
    }
}

/// The cascade as a single system in `ξ = (x, z)`.
impl DiscreteSystem for CascadeSystem {
    fn dim(&self) -> usize {
        self.dim_x + self.dim_z
    }
    fn t_max(&self) -> f64 {
        self.t_max
    }
    fn step(&self, t: f64, k: usize, y: &[f64]) -> Result<Vec<f64>> {
        let (x, z) = self.split(y);
        Ok(stack(&self.f(t, k, x, z)?, &self.g(t, k, z)?))
    }
}

pub struct ZeroInput<'a>(&'a CascadeSystem);

impl DiscreteSystem for ZeroInput<'_> {
    fn dim(&self) -> usize {
        self.0.dim_x
    }
    fn t_max(&self) -> f64 {
        self.0.t_max
    }
    fn step(&self, t: f64, k: usize, y: &[f64]) -> Result<Vec<f64>> {
        self.0.f(t, k, y, &vec![0.0; self.0.dim_z])
    }
}

pub struct ZSubsystem<'a>(&'a CascadeSystem);

impl DiscreteSystem for ZSubsystem<'_> {
    fn dim(&self) -> usize {
        self.0.dim_z
    }
    fn t_max(&self) -> f64 {
        self.0.t_max
    }
    fn step(&self, t: f64, k: usize, y: &[f64]) -> Result<Vec<f64>> {
        self.0.g(t, k, y)
    }
}

/// Input values `ω(k)` for `k = start, start+1, …`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputSequence {
    pub start: usize,
    pub values: Vec<Vec<f64>>,
    pub sup_norm: f64,
}

impl InputSequence {
    pub fn new(start: usize, values: Vec<Vec<f64>>) -> Self {
        let sup_norm = values.iter().map(|v| norm(v)).fold(0.0, f64::max);
        Self { start, values, sup_norm }
    }

    pub fn zero(start: usize, len: usize, dim: usize) -> Self {
        Self::new(start, vec![vec![0.0; dim]; len])
    }

    pub fn constant(start: usize, len: usize, value: Vec<f64>) -> Self {
        Self::new(start, vec![value; len])
    }

    /// Covers `[start, end)`.
    pub fn end(&self) -> usize {
        self.start + self.values.len()
    }

    pub fn at(&self, k: usize) -> Option<&[f64]> {
        k.checked_sub(self.start).and_then(|i| self.values.get(i)).map(|v| v.as_slice())
    }
}

/// States `φ(k)` for `k = k0, k0+1, …` with cached Euclidean norms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub period: f64,
    pub k0: usize,
    pub states: Vec<Vec<f64>>,
    pub norms: Vec<f64>,
}

impl Trajectory {
    pub fn new(period: f64, k0: usize, states: Vec<Vec<f64>>) -> Self {
        assert!(!states.is_empty(), "a trajectory holds at least its initial state");
        let norms = states.iter().map(|s| norm(s)).collect();
        Self { period, k0, states, norms }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn initial(&self) -> &[f64] {
        &self.states[0]
    }

    pub fn last(&self) -> &[f64] {
        self.states.last().unwrap()
    }

    /// Rows `k, t = kT, components…, norm`.
    pub fn rows(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        self.states.iter().zip(&self.norms).enumerate().map(move |(i, (s, n))| {
            let k = self.k0 + i;
            let mut row = Vec::with_capacity(s.len() + 3);
            row.push(k as f64);
            row.push(k as f64 * self.period);
            row.extend_from_slice(s);
            row.push(*n);
            row
        })
    }

    /// CSV with the given component names (`x1, x2, …` when empty).
    pub fn to_csv(&self, names: &[&str]) -> String {
        let dim = self.states[0].len();
        let mut header = vec!["k".to_string(), "t".to_string()];
        for j in 0..dim {
            header.push(names.get(j).map(|s| s.to_string()).unwrap_or(format!("x{}", j + 1)));
        }
        header.push("norm".into());
        let mut out = header.join(",");
        out.push('\n');
        for row in self.rows() {
            let cells: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(j, v)| if j == 0 { format!("{}", *v as usize) } else { format!("{v}") })
                .collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// Iterates both maps for `steps` steps.
pub fn simulate_cascade(
    sys: &CascadeSystem,
    t: f64,
    k0: usize,
    x0: &[f64],
    z0: &[f64],
    steps: usize,
) -> Result<(Trajectory, Trajectory)> {
    check_period(t, sys.t_max)?;
    let mut xs = vec![x0.to_vec()];
    let mut zs = vec![z0.to_vec()];
    for i in 0..steps {
        let k = k0 + i;
        let xn = sys.f(t, k, &xs[i], &zs[i])?;
        let zn = sys.g(t, k, &zs[i])?;
        if !all_finite(&xn) || !all_finite(&zn) {
            return Err(Error::Divergence { index: k + 1 });
        }
        xs.push(xn);
        zs.push(zn);
    }
    Ok((Trajectory::new(t, k0, xs), Trajectory::new(t, k0, zs)))
}

/// `φ^x_T(·, k0, x0, ω)` over the whole input range.
pub fn simulate_driven(
    sys: &CascadeSystem,
    t: f64,
    k0: usize,
    x0: &[f64],
    omega: &InputSequence,
    steps: usize,
) -> Result<Trajectory> {
    check_period(t, sys.t_max)?;
    if omega.start > k0 || omega.end() < k0 + steps {
        return Err(Error::Domain(format!(
            "input covers [{}, {}) but the horizon is [{k0}, {})",
            omega.start,
            omega.end(),
            k0 + steps
        )));
    }
    let mut xs = vec![x0.to_vec()];
    for i in 0..steps {
        let k = k0 + i;
        let xn = sys.f(t, k, &xs[i], omega.at(k).unwrap())?;
        if !all_finite(&xn) {
            return Err(Error::Divergence { index: k + 1 });
        }
        xs.push(xn);
    }
    Ok(Trajectory::new(t, k0, xs))
}

/// Verdicts for the two interconnection inequalities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterconnectionReport {
    /// `|f_T(k,x,z)| ≤ γ₁(|ξ|)`
    pub growth: StabilityVerdict,
    /// `|f_T(k,x,z) − f_T(k,x,0)| ≤ T γ₂(|x|) γ₃(|z|)`
    pub interconnection: StabilityVerdict,
}

impl InterconnectionReport {
    pub fn passed(&self) -> bool {
        self.growth.passed() && self.interconnection.passed()
    }
}

/// Checks both interconnection inequalities on every `(T, k, x, z)` sample.
#[allow(clippy::too_many_arguments)]
pub fn check_interconnection_bound(
    sys: &CascadeSystem,
    gamma1: &ClassK,
    gamma2: &ClassK,
    gamma3: &ClassK,
    x_points: &[Vec<f64>],
    z_points: &[Vec<f64>],
    k_set: &[usize],
    t_list: &[f64],
) -> Result<InterconnectionReport> {
    let zero = vec![0.0; sys.dim_z];
    let mut cases = Vec::new();
    for &t in t_list {
        check_period(t, sys.t_max)?;
        for &k in k_set {
            for x in x_points {
                cases.push((t, k, x));
            }
        }
    }
    let tallies: Vec<(Tally, Tally)> = cases
        .par_iter()
        .map(|&(t, k, x)| -> Result<(Tally, Tally)> {
            let mut a = Tally::default();
            let mut b = Tally::default();
            let f0 = sys.f(t, k, x, &zero)?;
            for z in z_points {
                let xi = stack(x, z);
                let fz = sys.f(t, k, x, z)?;
                let wit = |m: f64, bnd: f64| Witness { period: t, k0: k, state: xi.clone(), k, measured: m, bound: bnd };
                let m1 = norm(&fz);
                let b1 = gamma1.eval(norm(&xi));
                a.record(m1, b1, || wit(m1, b1));
                let m2 = dist(&fz, &f0);
                let b2 = t * gamma2.eval(norm(x)) * gamma3.eval(norm(z));
                b.record(m2, b2, || wit(m2, b2));
            }
            Ok((a, b))
        })
        .collect::<Result<_>>()?;
    let (mut ga, mut gb) = (Tally::default(), Tally::default());
    for (a, b) in tallies {
        ga.merge(a);
        gb.merge(b);
    }
    Ok(InterconnectionReport { growth: ga.into_verdict(), interconnection: gb.into_verdict() })
}

/// Smallest constants for the two continuity inequalities
/// `|f(k,x₁,z) − f(k,x₂,z)| ≤ (1 + KT)|x₁ − x₂|` and
/// `|f(k,x,z₁) − f(k,x,z₂)| ≤ KT|z₁ − z₂|` on the sampled balls.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UscConstants {
    pub k_state: f64,
    pub k_input: f64,
    /// `max(k_state, k_input)`, the single constant of both inequalities.
    pub k: f64,
    pub pairs_checked: usize,
}

pub fn estimate_usc_constants(
    sys: &CascadeSystem,
    delta1: f64,
    delta2: f64,
    t_list: &[f64],
    k_set: &[usize],
    samples: usize,
) -> Result<UscConstants> {
    if !(delta1 > 0.0 && delta2 > 0.0) {
        return Err(Error::Domain("ball radii must be positive".into()));
    }
    let xs = ball_samples(sys.dim_x, delta1, 2 * samples);
    let zs = ball_samples(sys.dim_z, delta2, 2 * samples);
    let mut cases = Vec::new();
    for &t in t_list {
        check_period(t, sys.t_max)?;
        for &k in k_set {
            for i in 0..samples {
                cases.push((t, k, i));
            }
        }
    }
    let per: Vec<(f64, f64)> = cases
        .par_iter()
        .map(|&(t, k, i)| -> Result<(f64, f64)> {
            let (x1, x2) = (&xs[i], &xs[samples + i]);
            let (z1, z2) = (&zs[i], &zs[samples + i]);
            let dx = dist(x1, x2);
            let dz = dist(z1, z2);
            let mut ks = 0.0f64;
            let mut ki = 0.0f64;
            if dx > 0.0 {
                let r = dist(&sys.f(t, k, x1, z1)?, &sys.f(t, k, x2, z1)?) / dx;
                ks = ks.max((r - 1.0) / t);
            }
            if dz > 0.0 {
                let r = dist(&sys.f(t, k, x1, z1)?, &sys.f(t, k, x1, z2)?) / dz;
                ki = ki.max(r / t);
            }
            Ok((ks, ki))
        })
        .collect::<Result<_>>()?;
    let k_state = per.iter().map(|p| p.0).fold(0.0, f64::max);
    let k_input = per.iter().map(|p| p.1).fold(0.0, f64::max);
    Ok(UscConstants { k_state, k_input, k: k_state.max(k_input), pairs_checked: per.len() })
}

/// Settings of the continuity probe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UscProbe {
    /// Radius of the initial-condition ball.
    pub eta: f64,
    pub epsilon: f64,
    /// Horizon in seconds; the probe runs `ℓ_{L,T}` steps.
    pub horizon: f64,
    pub t_list: Vec<f64>,
    pub mu_grid: Vec<f64>,
    pub k0_set: Vec<usize>,
    pub initial_states: usize,
    pub random_inputs: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UscProbeReport {
    /// Largest grid value of μ for which every sample stayed within ε.
    pub largest_mu: Option<f64>,
    /// `(μ, worst deviation)` per grid value.
    pub deviations: Vec<(f64, f64)>,
    /// Number of driven/zero-input pairs simulated per μ.
    pub coverage: usize,
}

/// Piecewise-constant input with `|ω(k)| ≤ mu`, drawn from `rng`.
pub fn random_piecewise_input<R: Rng>(rng: &mut R, start: usize, len: usize, dim: usize, mu: f64) -> InputSequence {
    let mut values = Vec::with_capacity(len);
    let max_seg = (len / 4).max(1);
    while values.len() < len {
        let seg = rng.gen_range(1..=max_seg);
        let dir: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let n = norm(&dir);
        let r = mu * rng.gen_range(0.0..=1.0f64);
        let v: Vec<f64> = if n > 0.0 { dir.iter().map(|d| d * r / n).collect() } else { vec![0.0; dim] };
        for _ in 0..seg.min(len - values.len()) {
            values.push(v.clone());
        }
    }
    InputSequence::new(start, values)
}

/// Worst deviation between driven and zero-input solutions from `x0`.
pub fn continuity_deviation(
    sys: &CascadeSystem,
    t: f64,
    k0: usize,
    x0: &[f64],
    omega: &InputSequence,
    steps: usize,
) -> Result<f64> {
    let driven = simulate_driven(sys, t, k0, x0, omega, steps)?;
    let zero = simulate_driven(sys, t, k0, x0, &InputSequence::zero(k0, steps, sys.dim_z), steps)?;
    Ok(driven
        .states
        .iter()
        .zip(&zero.states)
        .map(|(a, b)| dist(a, b))
        .fold(0.0, f64::max))
}

/// Largest μ on the grid for which driven solutions stay within ε of the
/// zero-input ones over `ℓ_{L,T}` steps. Inputs are constant inputs of norm
/// μ along each axis plus seeded random piecewise-constant inputs.
pub fn usc_probe(sys: &CascadeSystem, probe: &UscProbe) -> Result<UscProbeReport> {
    if !(probe.eta > 0.0 && probe.epsilon > 0.0 && probe.horizon > 0.0) {
        return Err(Error::Domain("η, ε and L must be positive".into()));
    }
    let x0s = ball_samples(sys.dim_x, probe.eta, probe.initial_states);
    let mut deviations = Vec::with_capacity(probe.mu_grid.len());
    let mut coverage = 0;
    for (mi, &mu) in probe.mu_grid.iter().enumerate() {
        let mut cases = Vec::new();
        for (ti, &t) in probe.t_list.iter().enumerate() {
            check_period(t, sys.t_max)?;
            let steps = horizon_index(probe.horizon, t)?;
            for &k0 in &probe.k0_set {
                for (xi, x0) in x0s.iter().enumerate() {
                    for input in 0..(2 * sys.dim_z + probe.random_inputs) {
                        cases.push((ti, t, steps, k0, xi, x0, input));
                    }
                }
            }
        }
        coverage = cases.len();
        let devs: Vec<f64> = cases
            .par_iter()
            .map(|&(ti, t, steps, k0, xi, x0, input)| -> Result<f64> {
                let omega = if input < 2 * sys.dim_z {
                    let mut v = vec![0.0; sys.dim_z];
                    v[input / 2] = if input % 2 == 0 { mu } else { -mu };
                    InputSequence::constant(k0, steps, v)
                } else {
                    let key = [probe.seed, mi as u64, ti as u64, k0 as u64, xi as u64, input as u64];
                    let mut rng = ChaCha8Rng::seed_from_u64(mix(&key));
                    random_piecewise_input(&mut rng, k0, steps, sys.dim_z, mu)
                };
                continuity_deviation(sys, t, k0, x0, &omega, steps)
            })
            .collect::<Result<_>>()?;
        deviations.push((mu, devs.into_iter().fold(0.0, f64::max)));
    }
    let largest_mu = deviations
        .iter()
        .filter(|(_, d)| *d <= probe.epsilon)
        .map(|(m, _)| *m)
        .fold(None, |acc: Option<f64>, m| Some(acc.map_or(m, |a| a.max(m))));
    Ok(UscProbeReport { largest_mu, deviations, coverage })
}

/// Deterministic 64-bit mixing of a key (splitmix64 chain).
pub fn mix(key: &[u64]) -> u64 {
    let mut h = 0x9E37_79B9_7F4A_7C15u64;
    for &v in key {
        h ^= v.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(h << 6).wrapping_add(h >> 2);
        h = h.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = h;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

/// Quasi-random directions in the unit ball used by some audits.
pub fn unit_directions(dim: usize, n: usize) -> Vec<Vec<f64>> {
    (1..=n as u64)
        .map(|i| {
            let d: Vec<f64> = halton(i, dim).iter().map(|u| 2.0 * u - 1.0).collect();
            let m = norm(&d).max(1e-12);
            d.iter().map(|v| v / m).collect()
        })
        .collect()
}
