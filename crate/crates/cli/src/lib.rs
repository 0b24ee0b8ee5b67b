//! Named, reproducible experiments on top of `dtcascade`.
//!
//! Each experiment reads a JSON parameter blob, runs on a dedicated rayon
//! pool, and writes `metrics.json` plus CSV and `.dat` tables into an output
//! directory. Outputs depend only on the parameters and the seed.

pub mod error;
pub mod experiments;
pub mod report;

use std::path::PathBuf;

use serde_json::Value;

pub use error::CliError;
pub use report::{config_hash, emit_report, Outcome, Report, Status, Table};

/// Everything needed to run one experiment.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub name: String,
    pub params: Value,
    pub out_dir: PathBuf,
    pub seed: u64,
    /// Worker threads; `None` uses rayon's default.
    pub parallelism: Option<usize>,
}

/// Per-run state handed to experiments.
#[derive(Clone, Debug)]
pub struct RunContext {
    pub seed: u64,
}

impl RunContext {
    /// Fails when an experiment would simulate more than `budget` steps.
    pub fn charge(&self, needed: u64, budget: u64) -> Result<(), CliError> {
        if needed > budget {
            Err(CliError::Budget { needed, budget })
        } else {
            Ok(())
        }
    }
}

pub type Runner = fn(&Value, &RunContext) -> Result<Outcome, CliError>;

/// Registered experiments: name, one-line description, entry point.
pub fn registry() -> &'static [(&'static str, &'static str, Runner)] {
    use experiments::*;
    &[
        ("example1", "double integrator: Euler vs exact closed-loop eigenvalues and trajectories", example1::run),
        ("unicycle-compare", "tracking controller with and without the correction term", unicycle_compare::run),
        ("consistency-sweep", "one-step error order of Euler and modified Euler against the exact model", consistency_sweep::run),
        ("lyapunov-audit", "Lyapunov chain V, W, U of the tracking closed loop on a state grid", lyapunov_audit::run),
        ("pe-check", "persistency of excitation of a reference angular velocity", pe_check::run),
        ("cascade-theorem-demo", "cascade hypotheses, then the stability conclusion, on the tracking loop", cascade_demo::run),
    ]
}

pub fn find_experiment(name: &str) -> Result<Runner, CliError> {
    registry()
        .iter()
        .find(|(n, _, _)| *n == name)
        .map(|(_, _, r)| *r)
        .ok_or_else(|| CliError::UnknownExperiment(name.to_string()))
}

/// Runs the named experiment and writes its report.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let runner = find_experiment(&cfg.name)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.parallelism {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))?;
    let ctx = RunContext { seed: cfg.seed };
    let outcome = pool.install(|| runner(&cfg.params, &ctx))?;
    let hash = config_hash(&cfg.name, &cfg.params);
    emit_report(&cfg.out_dir, &cfg.name, &hash, cfg.seed, &outcome)
}

/// Parses experiment parameters, treating `null` as an empty object so every
/// field falls back to its default.
pub fn parse_params<T: serde::de::DeserializeOwned>(params: &Value) -> Result<T, CliError> {
    let v = if params.is_null() { Value::Object(Default::default()) } else { params.clone() };
    serde_json::from_value(v).map_err(|e| CliError::Config(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn run(name: &str, params: Value, dir: &std::path::Path) -> Result<Report, CliError> {
        run_experiment(&ExperimentConfig {
            name: name.into(),
            params,
            out_dir: dir.to_path_buf(),
            seed: 3,
            parallelism: Some(1),
        })
    }

    #[test]
    fn registry_names_are_unique() {
        let names: Vec<_> = registry().iter().map(|r| r.0).collect();
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), names.len());
        assert!(matches!(find_experiment("missing"), Err(CliError::UnknownExperiment(_))));
    }

    #[test]
    fn example1_single_period() {
        let dir = tempfile::tempdir().unwrap();
        let r = run("example1", json!({"T": 0.19, "trajectories": 4, "exact_steps": 200}), dir.path()).unwrap();
        let e = &r.metrics["eigenvalues"][0];
        assert!((e["euler"][0].as_f64().unwrap() + 0.9).abs() < 1e-10);
        assert!((e["euler"][1].as_f64().unwrap() - 0.9).abs() < 1e-10);
        assert!(e["unit_gap"].as_f64().unwrap() < 1e-6);
    }

    #[test]
    fn zero_signal_is_not_exciting() {
        let dir = tempfile::tempdir().unwrap();
        let r = run("pe-check", json!({"wr": {"kind": "zero"}}), dir.path()).unwrap();
        assert_eq!(r.status, Status::Falsified);
        assert!(r.metrics["verdict"]["witness"].is_object());
    }

    #[test]
    fn unicycle_sweep_has_second_order_slope() {
        let dir = tempfile::tempdir().unwrap();
        let r = run("consistency-sweep", json!({"plant": "unicycle", "samples": 64}), dir.path()).unwrap();
        let s = r.metrics["euler"]["slope"].as_f64().unwrap();
        assert!((1.9..=2.1).contains(&s), "{s}");
    }

    #[test]
    fn double_integrator_error_is_half_t_squared() {
        let dir = tempfile::tempdir().unwrap();
        let r = run("consistency-sweep", json!({"plant": "double-integrator", "samples": 16, "input": 1.0}), dir.path()).unwrap();
        let ts = r.metrics["euler"]["periods"].as_array().unwrap();
        let es = r.metrics["euler"]["max_errors"].as_array().unwrap();
        for (t, e) in ts.iter().zip(es) {
            let (t, e) = (t.as_f64().unwrap(), e.as_f64().unwrap());
            assert!((e - 0.5 * t * t).abs() <= 1e-9 * (1.0 + e), "T={t}: {e}");
        }
    }

    #[test]
    fn comparison_writes_one_table_per_variant() {
        let dir = tempfile::tempdir().unwrap();
        let r = run("unicycle-compare", json!({"horizon_s": 1.0}), dir.path()).unwrap();
        let csvs: Vec<_> = r.files.iter().filter(|f| f.ends_with(".csv")).collect();
        assert_eq!(csvs.len(), 3);
        assert_eq!(r.metrics["variants"].as_array().unwrap().len(), 3);
        assert!(dir.path().join("metrics.json").exists());
        let text = std::fs::read_to_string(dir.path().join("unicycle_none.csv")).unwrap();
        assert!(text.starts_with(&format!("# config_hash={} seed=3\nk,t,x_e,y_e,theta_e,v,omega,vartheta\n", r.config_hash)));
    }

    #[test]
    fn zero_initial_error_stays_at_zero() {
        let dir = tempfile::tempdir().unwrap();
        let r = run("unicycle-compare", json!({"horizon_s": 2.0, "initial_error": [0.0, 0.0, 0.0]}), dir.path()).unwrap();
        let v = r.metrics["variants"].as_array().unwrap();
        for m in v {
            assert_eq!(m["ise"], 0.0);
            assert_eq!(m["energy"], v[0]["energy"]);
            assert_eq!(m["final_norm"], 0.0);
        }
    }

    #[test]
    fn theta_halves_every_seven_steps() {
        let dir = tempfile::tempdir().unwrap();
        run("unicycle-compare", json!({"horizon_s": 0.5}), dir.path()).unwrap();
        for v in ["none", "scaled-0.5", "full"] {
            let (_, rows) = report::read_table_csv(&dir.path().join(format!("unicycle_{v}.csv"))).unwrap();
            let first_half = rows.iter().position(|r| r[4] <= 0.25).unwrap();
            assert_eq!(first_half, 7, "{v}");
        }
    }

    #[test]
    fn demo_gains_fail_the_chain_preconditions() {
        let dir = tempfile::tempdir().unwrap();
        let params = json!({
            "refs": {"vr": {"kind": "constant", "value": 1.0}, "wr": {"kind": "sine", "amplitude": 20.0, "frequency": 1.0}},
            "gains": {"a1": 10.0, "a2": 70.0, "alpha_y": 1.99},
            "per_axis": 5,
        });
        let r = run("lyapunov-audit", params, dir.path()).unwrap();
        assert_eq!(r.status, Status::Falsified);
        assert_eq!(r.metrics["invalid_constant"], "c1");
    }

    #[test]
    fn malformed_params_are_config_errors() {
        let dir = tempfile::tempdir().unwrap();
        let e = run("lyapunov-audit", json!({"per_axis": "many"}), dir.path()).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        let e = run("example1", json!({"unknown_field": 1}), dir.path()).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn budget_is_enforced() {
        let dir = tempfile::tempdir().unwrap();
        let e = run("example1", json!({"budget_steps": 100}), dir.path()).unwrap_err();
        assert!(matches!(e, CliError::Budget { .. }));
        assert_eq!(e.exit_code(), 3);
    }
}
