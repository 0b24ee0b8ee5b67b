//! One-step gap between approximate models and the exact-model proxy as a
//! function of `T`, plus the growth constant of the Euler model.

use dtcascade::discretize::{
    consistency_order_on_box, euler_map, exact_proxy_map, lipschitz_growth_estimate, modified_euler_map,
    ConsistencyReport, EXACT_PROXY_TOL,
};
use dtcascade::unicycle::{error_dynamics_field, tracking_controller, ControllerGains, Correction, ReferenceSignal, Signal, TrackingErrorState};
use dtcascade::{BoxDomain, InputLaw, VectorField};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::{parse_params, CliError, Outcome, RunContext, Status, Table};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Plant {
    /// Tracking-error dynamics in closed loop with the controller.
    Unicycle,
    /// `ẋ₁ = x₂, ẋ₂ = u` with a constant input.
    DoubleIntegrator,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub plant: Plant,
    pub refs: ReferenceSignal,
    pub gains: ControllerGains,
    /// Held input of the double integrator.
    pub input: f64,
    /// Half-width of the state box.
    pub radius: f64,
    pub samples: usize,
    pub periods: Vec<f64>,
    /// Times at which the time-varying maps are compared; `k = ⌊t/T⌋`.
    pub times: Vec<f64>,
    pub proxy_tol: f64,
    pub lipschitz_pairs: usize,
    pub euler_slope: [f64; 2],
    pub modified_euler_min_slope: f64,
}

impl Default for Params {
    fn default() -> Self {
        let pi = std::f64::consts::PI;
        Self {
            plant: Plant::Unicycle,
            refs: ReferenceSignal {
                vr: Signal::Constant { value: 1.0 },
                wr: Signal::Sine { amplitude: 1.0, frequency: 1.0, phase: 0.0 },
            },
            gains: ControllerGains { a1: 1.0, a2: 1.0, alpha_y: 0.1, correction: Correction::None },
            input: 1.0,
            radius: 1.0,
            samples: 256,
            periods: vec![1e-3, 2e-3, 5e-3, 1e-2, 2e-2, 5e-2, 1e-1],
            times: vec![0.0, 0.5 * pi, pi, 1.5 * pi],
            proxy_tol: EXACT_PROXY_TOL,
            lipschitz_pairs: 128,
            euler_slope: [1.85, 2.15],
            modified_euler_min_slope: 1.9,
        }
    }
}

fn model(p: &Params) -> (VectorField, InputLaw, usize) {
    match p.plant {
        Plant::Unicycle => {
            let (refs, gains) = (p.refs.clone(), p.gains.clone());
            let law = InputLaw::feedback(move |t, k, x| {
                let c = tracking_controller(t, k, &TrackingErrorState::from_slice(x), &refs, &gains)?;
                Ok(vec![c.v, c.omega])
            });
            (error_dynamics_field(&p.refs), law, 3)
        }
        Plant::DoubleIntegrator => {
            (VectorField::new(2, 1, |_, x, u| vec![x[1], u[0]]), InputLaw::Held(vec![p.input]), 2)
        }
    }
}

fn table(name: &str, r: &ConsistencyReport) -> Table {
    let mut t = Table::new(name, &["T", "max_error", "error_over_T"]);
    for row in r.csv_rows() {
        t.push(row.to_vec());
    }
    t
}

pub fn run(params: &Value, _ctx: &RunContext) -> Result<Outcome, CliError> {
    let p: Params = parse_params(params)?;
    if p.periods.len() < 2 || p.samples == 0 || p.times.is_empty() || !(p.radius > 0.0) {
        return Err(CliError::Config("need at least two periods, a nonempty sample and time set, and a positive radius".into()));
    }
    let (f, law, dim) = model(&p);
    let exact = exact_proxy_map(&f, law.clone(), p.proxy_tol);
    let euler = euler_map(&f, law.clone());
    let modified = modified_euler_map(&f, law);
    let domain = BoxDomain::cube(dim, p.radius);
    // the k-set depends on T, so each period is swept separately and merged
    let sweep = |m: &dtcascade::ParameterizedMap| -> Result<ConsistencyReport, CliError> {
        let mut ts = Vec::new();
        let mut errs = Vec::new();
        let mut periods = p.periods.clone();
        periods.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for &t in &periods {
            let ks: Vec<usize> = p.times.iter().map(|s| (s / t).floor() as usize).collect();
            let r = consistency_order_on_box(&exact, m, &domain, p.samples, &ks, &[t])?;
            ts.push(t);
            errs.push(r.max_errors[0]);
        }
        let slope = dtcascade::discretize::loglog_slope(&ts, &errs);
        Ok(ConsistencyReport { t_samples: ts, max_errors: errs, slope, k_est: None })
    };
    let re = sweep(&euler)?;
    let rm = sweep(&modified)?;
    let ks0: Vec<usize> = p.times.iter().map(|s| (s / p.periods[0]).floor() as usize).collect();
    let lip = lipschitz_growth_estimate(&euler, &domain, &p.periods, &ks0, p.lipschitz_pairs)?;
    let euler_ok = re.slope.is_some_and(|s| s >= p.euler_slope[0] && s <= p.euler_slope[1]);
    let modified_ok = rm.slope.is_some_and(|s| s >= p.modified_euler_min_slope);
    Ok(Outcome {
        status: Status::check(euler_ok && modified_ok),
        metrics: json!({
            "plant": p.plant,
            "euler": { "slope": re.slope, "ok": euler_ok, "periods": re.t_samples, "max_errors": re.max_errors },
            "modified_euler": { "slope": rm.slope, "ok": modified_ok, "periods": rm.t_samples, "max_errors": rm.max_errors },
            "euler_lipschitz": lip,
        }),
        tables: vec![table("consistency_euler", &re), table("consistency_modified_euler", &rm)],
    })
}
