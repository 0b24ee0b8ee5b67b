//! Double integrator `ẋ₁ = x₂, ẋ₂ = u` under `u = −(x₁ + 2x₂)/T`, designed on
//! the Euler model. The Euler closed loop is stable for every `T ∈ (0, 1)`
//! while the exact closed loop keeps an eigenvalue on the unit circle.

use dtcascade::cascade::mix;
use dtcascade::discretize::{euler_map, exact_proxy_map, EXACT_PROXY_TOL};
use dtcascade::numerics::horizon_index;
use dtcascade::system::simulate;
use dtcascade::vecops::{eig2, norm};
use dtcascade::{InputLaw, ParameterizedMap, VectorField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::{parse_params, CliError, Outcome, RunContext, Status, Table};

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    /// Single period for the eigenvalue check; overrides `eigen_periods`.
    #[serde(rename = "T")]
    pub period: Option<f64>,
    pub eigen_periods: Vec<f64>,
    pub fd_step: f64,
    pub trajectories: usize,
    /// Random periods are drawn uniformly from this range.
    pub period_range: [f64; 2],
    pub euler_horizon_s: f64,
    /// Rate `r` of the envelope `b|x₀|e^{−rkT}`.
    pub decay_rate: f64,
    pub b_max: f64,
    pub exact_steps: usize,
    /// Fraction of `|x₀|` the exact loop must stay above.
    pub exact_threshold: f64,
    pub min_nonconverging_fraction: f64,
    pub proxy_tol: f64,
    pub budget_steps: u64,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            period: None,
            eigen_periods: vec![0.01, 0.1, 0.19, 0.3],
            fd_step: 0.5,
            trajectories: 100,
            period_range: [1e-3, 0.5],
            euler_horizon_s: 20.0,
            decay_rate: 0.5,
            b_max: 10.0,
            exact_steps: 10_000,
            exact_threshold: 0.1,
            min_nonconverging_fraction: 0.5,
            proxy_tol: EXACT_PROXY_TOL,
            budget_steps: 100_000_000,
        }
    }
}

pub fn plant() -> VectorField {
    VectorField::new(2, 1, |_, x, u| vec![x[1], u[0]])
}

pub fn controller() -> InputLaw {
    InputLaw::feedback(|t, _, x| Ok(vec![-(x[0] + 2.0 * x[1]) / t]))
}

pub fn euler_loop() -> ParameterizedMap {
    euler_map(&plant(), controller()).with_t_max(1.0)
}

pub fn exact_loop(tol: f64) -> ParameterizedMap {
    exact_proxy_map(&plant(), controller(), tol).with_t_max(1.0)
}

/// Central-difference Jacobian at the origin.
pub fn jacobian_at_origin(m: &ParameterizedMap, t: f64, h: f64) -> Result<[[f64; 2]; 2], CliError> {
    let mut j = [[0.0; 2]; 2];
    for c in 0..2 {
        let mut e = [0.0; 2];
        e[c] = h;
        let p = m.step(t, 0, &e)?;
        e[c] = -h;
        let q = m.step(t, 0, &e)?;
        for r in 0..2 {
            j[r][c] = (p[r] - q[r]) / (2.0 * h);
        }
    }
    Ok(j)
}

struct Sample {
    t: f64,
    x0: [f64; 2],
    b: f64,
    exact_min_ratio: f64,
    exact_final: Vec<f64>,
}

pub fn run(params: &Value, ctx: &RunContext) -> Result<Outcome, CliError> {
    let p: Params = parse_params(params)?;
    let periods = p.period.map_or(p.eigen_periods.clone(), |t| vec![t]);
    let [lo, hi] = p.period_range;
    if !(0.0 < lo && lo < hi && hi < 1.0) || periods.iter().any(|t| !(*t > 0.0 && *t < 1.0)) || !(p.fd_step > 0.0) {
        return Err(CliError::Config("periods must lie in (0, 1)".into()));
    }
    let euler_steps = horizon_index(p.euler_horizon_s, lo)? as u64;
    ctx.charge(p.trajectories as u64 * (euler_steps + p.exact_steps as u64), p.budget_steps)?;

    let euler = euler_loop();
    let exact = exact_loop(p.proxy_tol);

    let mut eig_table = Table::new(
        "eigenvalues",
        &["T", "euler_1", "euler_2", "sqrt_1_minus_T", "euler_error", "exact_modulus_1", "exact_modulus_2", "unit_gap"],
    );
    let mut eig_json = Vec::new();
    let mut eig_ok = true;
    for &t in &periods {
        let je = jacobian_at_origin(&euler, t, p.fd_step)?;
        let jx = jacobian_at_origin(&exact, t, p.fd_step)?;
        let mut le: Vec<f64> = eig2(je).iter().map(|(re, _)| *re).collect();
        le.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let expected = (1.0 - t).sqrt();
        let err = (le[0] + expected).abs().max((le[1] - expected).abs());
        let moduli: Vec<f64> = eig2(jx).iter().map(|(re, im)| re.hypot(*im)).collect();
        let gap = moduli.iter().map(|m| (m - 1.0).abs()).fold(f64::INFINITY, f64::min);
        eig_ok &= err <= 1e-10 && gap <= 1e-6;
        eig_table.push(vec![t, le[0], le[1], expected, err, moduli[0], moduli[1], gap]);
        eig_json.push(json!({
            "T": t, "euler": le, "euler_error": err, "exact_moduli": moduli, "unit_gap": gap,
            "euler_matrix": je, "exact_matrix": jx,
        }));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(mix(&[ctx.seed, 1]));
    let draws: Vec<(f64, [f64; 2])> = (0..p.trajectories)
        .map(|_| {
            let t = rng.gen_range(lo..hi);
            let mut x0 = [0.0; 2];
            while norm(&x0) < 1e-3 {
                x0 = [rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)];
            }
            (t, x0)
        })
        .collect();
    let samples: Vec<Sample> = draws
        .par_iter()
        .map(|&(t, x0)| -> Result<Sample, CliError> {
            let n0 = norm(&x0);
            let steps = horizon_index(p.euler_horizon_s, t)?;
            let tr = simulate(&euler, t, 0, &x0, steps)?;
            let b = tr
                .norms
                .iter()
                .enumerate()
                .map(|(k, n)| n / (n0 * (-p.decay_rate * k as f64 * t).exp()))
                .fold(0.0, f64::max);
            let tx = simulate(&exact, t, 0, &x0, p.exact_steps)?;
            let exact_min_ratio = tx.norms.iter().fold(f64::INFINITY, |m, n| m.min(n / n0));
            Ok(Sample { t, x0, b, exact_min_ratio, exact_final: tx.last().to_vec() })
        })
        .collect::<Result<_, _>>()?;

    let mut ens = Table::new("ensemble", &["T", "x1_0", "x2_0", "euler_b", "exact_min_ratio", "exact_x1_final", "exact_x2_final"]);
    for s in &samples {
        ens.push(vec![s.t, s.x0[0], s.x0[1], s.b, s.exact_min_ratio, s.exact_final[0], s.exact_final[1]]);
    }
    let b = samples.iter().map(|s| s.b).fold(0.0, f64::max);
    let nonconverging = samples.iter().filter(|s| s.exact_min_ratio >= p.exact_threshold).count();
    let fraction = if samples.is_empty() { 0.0 } else { nonconverging as f64 / samples.len() as f64 };
    let b_ok = b.is_finite() && b <= p.b_max;
    let exact_ok = fraction >= p.min_nonconverging_fraction;

    let mut tables = vec![eig_table, ens];
    if let Some(&(t, x0)) = draws.first() {
        let steps = horizon_index(p.euler_horizon_s, t)?;
        tables.push(Table::from_trajectory("euler_trajectory", &simulate(&euler, t, 0, &x0, steps)?, &["x1", "x2"]));
        tables.push(Table::from_trajectory("exact_trajectory", &simulate(&exact, t, 0, &x0, p.exact_steps)?, &["x1", "x2"]));
    }
    let status = Status::check(eig_ok && b_ok && exact_ok);
    Ok(Outcome {
        status,
        metrics: json!({
            "eigenvalues": eig_json,
            "eigenvalues_ok": eig_ok,
            "euler_envelope": { "b": b, "b_max": p.b_max, "decay_rate": p.decay_rate, "ok": b_ok },
            "exact_nonconvergence": {
                "threshold": p.exact_threshold,
                "steps": p.exact_steps,
                "nonconverging": nonconverging,
                "trajectories": samples.len(),
                "fraction": fraction,
                "min_fraction": p.min_nonconverging_fraction,
                "ok": exact_ok,
            },
        }),
        tables,
    })
}
