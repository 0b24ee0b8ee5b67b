//! Persistency of excitation: `T Σ_{k=j}^{j+ℓ} ω_r(k)² ≥ μ` for every window.

use dtcascade::unicycle::{check_pe, Signal};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::{parse_params, CliError, Outcome, RunContext, Status, Table};

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub wr: Signal,
    #[serde(rename = "L")]
    pub horizon: f64,
    pub mu: f64,
    pub periods: Vec<f64>,
    /// Last window start; defaults to one period of `ω_r`.
    pub j_max: Option<usize>,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            wr: Signal::Sine { amplitude: 20.0, frequency: 1.0, phase: 0.0 },
            horizon: std::f64::consts::PI,
            mu: 600.0,
            periods: vec![0.01],
            j_max: None,
        }
    }
}

pub fn run(params: &Value, _ctx: &RunContext) -> Result<Outcome, CliError> {
    let p: Params = parse_params(params)?;
    if p.periods.is_empty() {
        return Err(CliError::Config("no sampling periods given".into()));
    }
    let rep = check_pe(&p.wr, p.horizon, p.mu, &p.periods, p.j_max)?;
    let mut t = Table::new("pe_windows", &["T", "j", "window_sum"]);
    for w in &rep.windows {
        for (j, s) in w.sums.iter().enumerate() {
            t.push(vec![w.period, j as f64, *s]);
        }
    }
    let inf: Vec<_> = rep.windows.iter().map(|w| json!({ "T": w.period, "ell": w.ell, "infimum": w.infimum() })).collect();
    Ok(Outcome {
        status: Status::from_verdict(&rep.verdict),
        metrics: json!({ "mu": p.mu, "L": p.horizon, "verdict": rep.verdict, "windows": inf }),
        tables: vec![t],
    })
}
