//! The Lyapunov chain `V → W → U` of the tracking loop on a state grid.

use dtcascade::unicycle::{audit_lyapunov_chain, case_study_constants, ChainGrid, ControllerGains, ReferenceSignal};
use serde::Deserialize;
use serde_json::{json, Value};

use super::{validated_gains, validated_refs};
use crate::{parse_params, CliError, Outcome, RunContext, Status, Table};

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub refs: ReferenceSignal,
    pub gains: ControllerGains,
    #[serde(rename = "T")]
    pub period: f64,
    /// Upper end `T*` of the admissible periods in the constants.
    pub t_star: f64,
    /// Window length of the excitation condition.
    #[serde(rename = "L")]
    pub horizon: f64,
    pub radius: f64,
    pub per_axis: usize,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            refs: validated_refs(),
            gains: validated_gains(),
            period: 0.01,
            t_star: 0.02,
            horizon: std::f64::consts::PI,
            radius: 5.0,
            per_axis: 41,
        }
    }
}

pub fn run(params: &Value, _ctx: &RunContext) -> Result<Outcome, CliError> {
    let p: Params = parse_params(params)?;
    if p.per_axis < 2 || !(p.radius > 0.0) || !(p.t_star >= p.period) {
        return Err(CliError::Config("need per_axis ≥ 2, radius > 0 and T* ≥ T".into()));
    }
    let grid = ChainGrid::square(p.radius, p.per_axis, p.period);
    let constants = case_study_constants(&p.refs, &p.gains, p.period, p.t_star, p.horizon, &grid)?;
    let mut ctable = Table::new("constants", &["c1", "c2", "alpha_x", "k1", "c3", "c4", "alpha_y_tilde", "k2", "eps_small", "c3_tilde", "t_tilde"]);
    let c = &constants;
    ctable.push(vec![
        c.c1.value, c.c2.value, c.alpha_x.value, c.k1.value, c.c3.value, c.c4.value, c.alpha_y_tilde.value, c.k2.value,
        c.eps_small.value, c.c3_tilde.value, c.t_tilde.value,
    ]);
    if let Some(name) = constants.first_invalid() {
        return Ok(Outcome {
            status: Status::Falsified,
            metrics: json!({ "constants": constants, "invalid_constant": name, "chain": null }),
            tables: vec![ctable],
        });
    }
    let rep = audit_lyapunov_chain(&p.refs, &p.gains, p.period, p.t_star, p.horizon, &grid)?;
    let mut vt = Table::new("chain", &["inequality", "checked", "violations", "worst_slack", "worst_ratio"]);
    let mut parts = serde_json::Map::new();
    for (i, (name, v)) in rep.parts().iter().enumerate() {
        vt.push(vec![i as f64, v.checked as f64, v.violations as f64, v.worst_slack, v.worst_ratio]);
        parts.insert(name.to_string(), serde_json::to_value(v)?);
    }
    let overall = rep.overall();
    Ok(Outcome {
        status: Status::from_verdict(&overall),
        metrics: json!({
            "constants": rep.constants,
            "period_below_t_tilde": rep.constants.period_below_t_tilde,
            "grid": { "radius": p.radius, "per_axis": p.per_axis, "k_max": grid.k_max },
            "inequalities": rep.parts().iter().map(|(n, _)| *n).collect::<Vec<_>>(),
            "chain": parts,
            "violations": overall.violations,
        }),
        tables: vec![ctable, vt],
    })
}
