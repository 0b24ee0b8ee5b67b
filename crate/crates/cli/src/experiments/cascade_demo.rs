//! Cascade results on the tracking loop: audit each hypothesis, then check
//! the conclusion on trajectories.
//!
//! Hypotheses: the interconnection bound with an explicit constant, UGES of
//! the zero-input x-subsystem (Lyapunov chain), UGES of the θ-subsystem, the
//! growth assumption with the certificate `W = ρ ∘ U`, summability of `μ`
//! along θ-trajectories, and the integrated bound on `W`. Conclusion: a KL
//! envelope fitted on trajectories started at `k₀ = 0` holds for other start
//! indices.

use dtcascade::cascade::simulate_cascade;
use dtcascade::numerics::{fit_kl_envelope, horizon_index, EnvelopeFit};
use dtcascade::stability::{
    build_ugb_certificate, check_summability, falsify_spuas, CascadeGrid, SpuasForm, Tally, TrajectoryGrid,
};
use dtcascade::system::simulate;
use dtcascade::unicycle::{
    assumption2_candidates, audit_lyapunov_chain, closed_loop_euler_cascade, growth_bound, interconnection,
    interconnection_constant, zero_input_part, ChainContext, ChainGrid, ControllerGains, ReferenceSignal,
};
use dtcascade::vecops::norm;
use dtcascade::{BoxDomain, CascadeSystem, ClassK, KlBound, StabilityVerdict, Witness};
use rayon::prelude::*;
use serde::Deserialize;
use serde_json::{json, Value};

use super::{linspace, one_period, validated_gains, validated_refs};
use crate::{parse_params, CliError, Outcome, RunContext, Status, Table};

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub refs: ReferenceSignal,
    pub gains: ControllerGains,
    #[serde(rename = "T")]
    pub period: f64,
    pub t_star: f64,
    #[serde(rename = "L")]
    pub horizon: f64,
    /// Periods of the interconnection audit.
    pub periods: Vec<f64>,
    pub x_radius: f64,
    pub interconnection_samples: usize,
    /// θ samples of the interconnection audit lie in `[−r, r]`.
    pub theta_radius: f64,
    pub theta_points: usize,
    pub chain_per_axis: usize,
    pub certificate_per_axis: usize,
    /// θ samples of the certificate audit lie in `[−r, r]`.
    pub certificate_theta_radius: f64,
    pub certificate_theta_points: usize,
    /// Largest argument of the `ρ` closed-form comparison.
    pub rho_check_max: f64,
    pub trajectory_horizon_s: f64,
    /// Initial states of the full-cascade trajectories.
    pub trajectory_samples: usize,
    pub budget_steps: u64,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            refs: validated_refs(),
            gains: validated_gains(),
            period: 0.01,
            t_star: 0.02,
            horizon: std::f64::consts::PI,
            periods: vec![0.005, 0.01, 0.02],
            x_radius: 5.0,
            interconnection_samples: 256,
            theta_radius: std::f64::consts::PI,
            theta_points: 21,
            chain_per_axis: 41,
            certificate_per_axis: 21,
            certificate_theta_radius: 1.0,
            certificate_theta_points: 11,
            rho_check_max: 100.0,
            trajectory_horizon_s: 30.0,
            trajectory_samples: 128,
            budget_steps: 50_000_000,
        }
    }
}

/// The same loop with the interconnection term divided by `T`.
pub fn unscaled_interconnection_cascade(refs: &ReferenceSignal, gains: &ControllerGains) -> CascadeSystem {
    let (r, g) = (refs.clone(), gains.clone());
    let a1 = gains.a1;
    CascadeSystem::new(
        2,
        1,
        1.0 / gains.a1.max(gains.a2),
        move |t, k, x, z| {
            let f1 = zero_input_part(t, k, x, &r, &g)?;
            let gt = interconnection(t, k, x, z, &r, &g);
            Ok(vec![f1[0] + gt[0] / t, f1[1] + gt[1] / t])
        },
        move |t, _, z| Ok(vec![(1.0 - t * a1) * z[0]]),
    )
}

/// `ρ` for `φ(s) = s`: `s` below one, `1 + ln s` above.
pub fn rho_identity_closed_form(s: f64) -> f64 {
    if s <= 1.0 {
        s
    } else {
        1.0 + s.ln()
    }
}

fn points_1d(r: f64, n: usize) -> Vec<Vec<f64>> {
    linspace(-r, r, n).into_iter().map(|v| vec![v]).collect()
}

pub fn run(params: &Value, ctx: &RunContext) -> Result<Outcome, CliError> {
    let p: Params = parse_params(params)?;
    if p.periods.is_empty() || p.trajectory_samples == 0 {
        return Err(CliError::Config("need periods and trajectory_samples > 0".into()));
    }
    p.gains.validate(p.period)?;
    let t = p.period;
    let steps = horizon_index(p.trajectory_horizon_s, t)?;
    ctx.charge(p.trajectory_samples as u64 * 6 * steps as u64, p.budget_steps)?;
    let sys = closed_loop_euler_cascade(&p.refs, &p.gains);
    let period_steps = p.refs.period_steps(t);
    let w_m = p.refs.w_m(t, period_steps);

    // interconnection bound
    let t_hi = p.periods.iter().cloned().fold(0.0, f64::max);
    let t_lo = p.periods.iter().cloned().fold(f64::INFINITY, f64::min);
    let c = interconnection_constant(&p.refs, &p.gains);
    let gamma1 = growth_bound(&p.refs, &p.gains, t_hi, p.refs.w_m(t_lo, p.refs.period_steps(t_lo)).max(w_m));
    let gamma2 = ClassK::affine(c, c);
    let gamma3 = ClassK::identity();
    let xs = BoxDomain::cube(2, p.x_radius).samples(p.interconnection_samples);
    let zs = points_1d(p.theta_radius, p.theta_points);
    let ks = one_period(t_lo);
    let a1 = dtcascade::cascade::check_interconnection_bound(&sys, &gamma1, &gamma2, &gamma3, &xs, &zs, &ks, &p.periods)?;
    let unscaled = unscaled_interconnection_cascade(&p.refs, &p.gains);
    let a1_bad = dtcascade::cascade::check_interconnection_bound(&unscaled, &gamma1, &gamma2, &gamma3, &xs, &zs, &ks, &p.periods)?;

    // zero-input x-subsystem
    let chain_grid = ChainGrid::square(p.x_radius, p.chain_per_axis, t);
    let chain = audit_lyapunov_chain(&p.refs, &p.gains, t, p.t_star, p.horizon, &chain_grid)?;
    let chain_verdict = chain.overall();
    let constants = chain.constants.clone();

    // θ-subsystem: |θ(k)| ≤ |θ₀|e^{−a₁kT}
    let z_grid = TrajectoryGrid {
        points: zs.clone(),
        k0_set: vec![0, period_steps / 2],
        t_list: vec![t],
        horizon: steps,
    };
    let z_beta = KlBound::exp(1.0, p.gains.a1);
    let z_verdict = falsify_spuas(&sys.z_subsystem(), &z_beta, p.theta_radius + 1.0, 0.0, &z_grid, SpuasForm::Max)?;

    // growth assumption and certificate
    let k_max = one_period(t).len() - 1;
    let cctx = ChainContext::new(&p.refs, &p.gains, t, k_max);
    let cx = BoxDomain::cube(2, p.x_radius).grid(p.certificate_per_axis);
    let cz = points_1d(p.certificate_theta_radius, p.certificate_theta_points);
    let a2 = assumption2_candidates(&cctx, &sys, &constants, &cx, &cz, k_max)?;
    let eps = constants.eps_small.value;
    let cgrid = CascadeGrid { x_points: cx, z_points: cz.clone(), k_set: (0..=k_max).collect(), t_list: vec![t] };
    let ugb = build_ugb_certificate(|_, k, x| cctx.u(k, x, eps), &sys, &a2, &cgrid)?;
    let rho = &ugb.certificate.rho;
    let rho_grid: Vec<f64> = (0..=4000).map(|i| p.rho_check_max * i as f64 / 4000.0).collect();
    let rho_err = if a2.phi == ClassK::identity() {
        Some(rho_grid.iter().map(|s| (rho.eval(*s) - rho_identity_closed_form(*s)).abs()).fold(0.0, f64::max))
    } else {
        None
    };
    let mut rho_table = Table::new("rho", &["s", "rho", "q"]);
    for s in rho_grid.iter().step_by(40) {
        rho_table.push(vec![*s, rho.eval(*s), rho.q(*s)]);
    }

    // summability of μ along θ-trajectories, with the linear ρ̄ = 1.01·μ(1)/a₁
    let z_trajs: Vec<_> = zs
        .iter()
        .filter(|z| norm(z) > 0.0)
        .map(|z| simulate(&sys.z_subsystem(), t, 0, z, steps))
        .collect::<Result<_, _>>()?;
    let mu = ugb.certificate.mu.clone();
    let rho_lin = ClassK::linear(1.01 * mu.eval(1.0) / p.gains.a1);
    let summ = check_summability(&z_trajs, &mu, &rho_lin);

    // trajectories of the full cascade
    let box3 = BoxDomain::new(vec![-p.x_radius, -p.x_radius, -p.certificate_theta_radius], vec![p.x_radius, p.x_radius, p.certificate_theta_radius])?;
    let eval_pts = box3.samples(p.trajectory_samples);
    let a1c = &a2.alpha1;
    let a2c = &a2.alpha2;
    // W(k) ≤ ρ(α̃₂(|x₀|) + c) + T Σ μ(|θ|), with W bounded below through α̃₁
    let iiss_parts: Vec<Tally> = eval_pts
        .par_iter()
        .map(|xi| -> Result<Tally, CliError> {
            let (xs, zt) = simulate_cascade(&sys, t, 0, &xi[..2], &xi[2..], steps)?;
            let mut tally = Tally::default();
            let b0 = rho.eval(a2c.eval(xs.norms[0]) + a2.c);
            let mut acc = 0.0;
            for (k, n) in xs.norms.iter().enumerate() {
                if k > 0 {
                    acc += t * mu.eval(zt.norms[k - 1]);
                }
                let m = rho.eval(a1c.eval(*n));
                let b = b0 + acc;
                tally.record(m, b, || Witness { period: t, k0: 0, state: xi.clone(), k, measured: m, bound: b });
            }
            Ok(tally)
        })
        .collect::<Result<_, _>>()?;
    let mut iiss = Tally::default();
    for part in iiss_parts {
        iiss.merge(part);
    }
    let iiss = iiss.into_verdict();

    let hypotheses = StabilityVerdict::all(&[
        &a1.growth,
        &a1.interconnection,
        &chain_verdict,
        &z_verdict,
        &ugb.hypotheses(),
        &ugb.w_increment,
    ]);

    // conclusion: fit β on trajectories started at k₀ = 0, falsify with other start indices
    let fit_trajs: Vec<_> = eval_pts.par_iter().map(|xi| simulate(&sys, t, 0, xi, steps)).collect::<Result<_, _>>()?;
    let fit = fit_kl_envelope(&fit_trajs, 0.0)?;
    let delta = eval_pts.iter().map(|x| norm(x)).fold(0.0, f64::max);
    let conclusion = match fit.bound() {
        Some(beta) => {
            let k0_set = vec![0, 1, period_steps / 2, period_steps - 1];
            let grid = TrajectoryGrid { points: eval_pts.clone(), k0_set, t_list: vec![t], horizon: steps };
            Some(falsify_spuas(&sys, &beta, delta, 0.0, &grid, SpuasForm::Max)?)
        }
        None => None,
    };
    let conclusion_ok = conclusion.as_ref().is_some_and(|v| v.passed());
    let cross_check = !hypotheses.passed() || conclusion_ok;

    let example = simulate(&sys, t, 0, &eval_pts[eval_pts.len() - 1], steps)?;
    let traj_table = Table::from_trajectory("cascade_trajectory", &example, &["x_e", "y_e", "theta_e"]);

    let rho_ok = rho_err.is_none_or(|e| e <= 1e-8);
    let status = Status::from_verdict(&hypotheses)
        .and(Status::check(a1_bad.interconnection.is_falsified()))
        .and(Status::check(rho_ok))
        .and(Status::from_verdict(&iiss))
        .and(Status::from_verdict(&summ))
        .and(Status::check(conclusion_ok));
    Ok(Outcome {
        status,
        metrics: json!({
            "interconnection": {
                "c": c,
                "gamma1": gamma1,
                "gamma2": gamma2,
                "gamma3": gamma3,
                "growth": a1.growth,
                "bound": a1.interconnection,
                "without_period_factor": a1_bad.interconnection,
            },
            "zero_input_chain": { "constants": constants, "verdict": chain_verdict },
            "theta_subsystem": { "beta": z_beta, "verdict": z_verdict },
            "certificate": {
                "assumption": a2,
                "mu": mu,
                "sandwich": ugb.sandwich,
                "cross_term": ugb.cross_term,
                "zero_input_decrease": ugb.zero_input_decrease,
                "w_increment": ugb.w_increment,
                "cases": ugb.cases,
                "rho_closed_form_error": rho_err,
            },
            "summability": { "rho": rho_lin, "verdict": summ },
            "integrated_bound": iiss,
            "hypotheses": hypotheses,
            "conclusion": {
                "fit": match &fit { EnvelopeFit::Fitted { m, lambda } => json!({"m": m, "lambda": lambda}), other => serde_json::to_value(other)? },
                "delta": delta,
                "verdict": conclusion,
            },
            "cross_check": cross_check,
        }),
        tables: vec![rho_table, traj_table],
    })
}
