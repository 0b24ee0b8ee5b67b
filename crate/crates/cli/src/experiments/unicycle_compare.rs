//! Tracking controller variants on a common initial error.

use dtcascade::discretize::EXACT_PROXY_TOL;
use dtcascade::numerics::horizon_index;
use dtcascade::unicycle::{
    run_comparison_experiment, ComparisonConfig, ControllerGains, Correction, PlantModel, ReferenceSignal, Signal,
};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::{parse_params, CliError, Outcome, RunContext, Status, Table};

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub refs: ReferenceSignal,
    pub gains: ControllerGains,
    #[serde(rename = "T")]
    pub period: f64,
    pub horizon_s: f64,
    pub initial_error: [f64; 3],
    pub plant: PlantModel,
    pub variants: Vec<Correction>,
    pub proxy_tol: f64,
    /// Norm of `(x_e, y_e, θ_e)` every variant must settle below.
    pub convergence_tol: f64,
    pub budget_steps: u64,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            refs: ReferenceSignal {
                vr: Signal::Constant { value: 1.0 },
                wr: Signal::Sine { amplitude: 20.0, frequency: 1.0, phase: 0.0 },
            },
            gains: ControllerGains { a1: 10.0, a2: 70.0, alpha_y: 2.0 - 0.01, correction: Correction::Full },
            period: 0.01,
            horizon_s: 10.0,
            initial_error: [1.0, 1.0, 0.5],
            plant: PlantModel::Euler,
            variants: vec![Correction::None, Correction::Scaled { factor: 0.5 }, Correction::Full],
            proxy_tol: EXACT_PROXY_TOL,
            convergence_tol: 0.01,
            budget_steps: 10_000_000,
        }
    }
}

pub fn run(params: &Value, ctx: &RunContext) -> Result<Outcome, CliError> {
    let p: Params = parse_params(params)?;
    if p.variants.is_empty() {
        return Err(CliError::Config("no controller variants given".into()));
    }
    if !(p.period > 0.0 && p.horizon_s > 0.0) {
        return Err(CliError::Config("T and horizon_s must be positive".into()));
    }
    let steps = horizon_index(p.horizon_s, p.period)? as u64;
    ctx.charge(steps * p.variants.len() as u64, p.budget_steps)?;
    let cfg = ComparisonConfig {
        refs: p.refs.clone(),
        gains: p.gains.clone(),
        period: p.period,
        horizon_s: p.horizon_s,
        initial_error: p.initial_error,
        plant: p.plant,
        variants: p.variants.clone(),
        proxy_tol: p.proxy_tol,
    };
    let runs = run_comparison_experiment(&cfg)?;
    let mut tables = Vec::new();
    let mut all_converged = true;
    for r in &runs {
        let mut t = Table::new(format!("unicycle_{}", r.metrics.variant), &["k", "t", "x_e", "y_e", "theta_e", "v", "omega", "vartheta"]);
        for row in &r.rows {
            t.push(row.to_vec());
        }
        tables.push(t);
        all_converged &= r.metrics.diverged_at.is_none() && r.metrics.final_norm < p.convergence_tol && r.metrics.converged_step.is_some();
    }
    let ise = |c: Correction| runs.iter().zip(&p.variants).find(|(_, v)| **v == c).map(|(r, _)| r.metrics.ise);
    let ordering = match (ise(Correction::Full), ise(Correction::None)) {
        (Some(full), Some(none)) => Some(full < none),
        _ => None,
    };
    let status = Status::check(all_converged && ordering.unwrap_or(true));
    let metrics: Vec<_> = runs.iter().map(|r| &r.metrics).collect();
    Ok(Outcome {
        status,
        metrics: json!({
            "plant": p.plant,
            "T": p.period,
            "steps": steps,
            "variants": metrics,
            "all_converged": all_converged,
            "ise_full_below_none": ordering,
        }),
        tables,
    })
}
