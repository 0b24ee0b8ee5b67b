//! Acceptance suite: runs every criterion at its stated tolerance and prints
//! one PASS/FAIL line each. Exits nonzero if any criterion fails.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use dtcascade::cascade::CascadeSystem;
use dtcascade::vecops::dist;
use dtcascade_cli::experiments::cascade_demo::{rho_identity_closed_form, unscaled_interconnection_cascade};
use dtcascade_cli::experiments::{validated_gains, validated_refs};
use dtcascade_cli::report::read_table_csv;
use dtcascade_cli::{run_experiment, ExperimentConfig, Report};
use serde_json::{json, Value};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

struct Runner {
    root: tempfile::TempDir,
}

impl Runner {
    fn dir(&self, name: &str) -> PathBuf {
        self.root.path().join(name)
    }

    fn run(&self, experiment: &str, params: Value, out: &str, jobs: usize) -> (Report, Duration) {
        let start = Instant::now();
        let r = run_experiment(&ExperimentConfig {
            name: experiment.into(),
            params,
            out_dir: self.dir(out),
            seed: 2024,
            parallelism: Some(jobs),
        })
        .unwrap_or_else(|e| panic!("{experiment}: {e}"));
        (r, start.elapsed())
    }
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap_or(f64::NAN)
}

fn table(dir: &Path, name: &str) -> (Vec<String>, Vec<Vec<f64>>) {
    read_table_csv(&dir.join(format!("{name}.csv"))).unwrap()
}

fn col(cols: &[String], name: &str) -> usize {
    cols.iter().position(|c| c == name).unwrap()
}

/// `A = [[1 − T/2, 0], [−1, −1]]`, the exact closed loop of the double integrator.
fn exact_power(t: f64, x0: [f64; 2], n: usize) -> [f64; 2] {
    let mut x = x0;
    for _ in 0..n {
        x = [(1.0 - 0.5 * t) * x[0], -x[0] - x[1]];
    }
    x
}

fn criterion_1(r: &Runner) -> Outcome {
    let (rep, dt) = r.run("example1", Value::Null, "c1", 1);
    let dir = r.dir("c1");
    let (cols, rows) = table(&dir, "eigenvalues");
    let mut eig_err = 0.0f64;
    let mut gap = 0.0f64;
    let mut periods = Vec::new();
    for row in &rows {
        let t = row[col(&cols, "T")];
        periods.push(t);
        let s = (1.0 - t).sqrt();
        eig_err = eig_err.max((row[col(&cols, "euler_1")] + s).abs()).max((row[col(&cols, "euler_2")] - s).abs());
        let m = [row[col(&cols, "exact_modulus_1")], row[col(&cols, "exact_modulus_2")]];
        gap = gap.max(m.iter().map(|m| (m - 1.0).abs()).fold(f64::INFINITY, f64::min));
    }
    let periods_ok = periods == [0.01, 0.1, 0.19, 0.3];

    let b = f(&rep.metrics["euler_envelope"]["b"]);
    let (cols, rows) = table(&dir, "ensemble");
    let n = rows.len();
    let mut oracle_dev = 0.0f64;
    let mut above = 0;
    let mut t_range = (f64::INFINITY, 0.0f64);
    for row in &rows {
        let t = row[col(&cols, "T")];
        t_range = (t_range.0.min(t), t_range.1.max(t));
        let x0 = [row[col(&cols, "x1_0")], row[col(&cols, "x2_0")]];
        let n0 = x0[0].hypot(x0[1]);
        let want = exact_power(t, x0, 10_000);
        let got = [row[col(&cols, "exact_x1_final")], row[col(&cols, "exact_x2_final")]];
        oracle_dev = oracle_dev.max(dist(&want, &got) / n0);
        // min over k of |A^k x0| / |x0|
        let mut x = x0;
        let mut min_ratio = 1.0f64;
        for _ in 0..10_000 {
            x = [(1.0 - 0.5 * t) * x[0], -x[0] - x[1]];
            min_ratio = min_ratio.min(x[0].hypot(x[1]) / n0);
        }
        if min_ratio >= 0.1 {
            above += 1;
        }
    }
    let fraction = f(&rep.metrics["exact_nonconvergence"]["fraction"]);
    let pass = periods_ok
        && eig_err <= 1e-10
        && gap <= 1e-6
        && b.is_finite()
        && n == 100
        && t_range.0 > 0.0
        && t_range.1 < 0.5
        && oracle_dev <= 1e-5
        && fraction >= 0.5
        && above as f64 / n as f64 == fraction
        && dt < Duration::from_secs(10);
    outcome(
        pass,
        format!(
            "Euler eigenvalue error {eig_err:.1e}, exact unit-circle gap {gap:.1e}, b = {b:.4} over {n} trajectories, \
             exact loop above 10% of |x0| for {above}/{n} (closed-form deviation {oracle_dev:.1e}), {:.2} s",
            dt.as_secs_f64()
        ),
    )
}

fn criterion_2(r: &Runner) -> Outcome {
    let (rep, dt) = r.run("unicycle-compare", Value::Null, "c2", 1);
    let v = rep.metrics["variants"].as_array().unwrap();
    let mut parts = Vec::new();
    let mut converged = true;
    let mut ise = std::collections::BTreeMap::new();
    for m in v {
        let name = m["variant"].as_str().unwrap().to_string();
        let fin = f(&m["final_norm"]);
        let ok = m["converged_step"].is_u64() && fin < 1e-2;
        converged &= ok;
        ise.insert(name.clone(), f(&m["ise"]));
        let i = f(&m["ise"]);
        let i = if i.abs() < 1e6 { format!("{i:.4}") } else { format!("{i:.3e}") };
        parts.push(format!("{name}: ISE {i}, final {fin:.1e}"));
    }
    let ordering = ise["full"] < ise["none"];
    let pass = v.len() == 3 && converged && ordering && dt < Duration::from_secs(5);
    outcome(
        pass,
        format!(
            "{}; all below 1e-2: {converged}; ISE(full) < ISE(none): {ordering}, {:.2} s",
            parts.join("; "),
            dt.as_secs_f64()
        ),
    )
}

fn criterion_3(r: &Runner) -> Outcome {
    r.run("unicycle-compare", json!({"horizon_s": 20.0}), "c3", 1);
    let dir = r.dir("c3");
    let (t, a1, th0) = (0.01, 10.0, 0.5);
    let mut worst = 0.0f64;
    let mut lengths = Vec::new();
    for v in ["none", "scaled-0.5", "full"] {
        let (cols, rows) = table(&dir, &format!("unicycle_{v}"));
        lengths.push(rows.len());
        for row in &rows {
            let k = row[col(&cols, "k")] as i32;
            worst = worst.max((row[col(&cols, "theta_e")] - (1.0f64 - t * a1).powi(k) * th0).abs());
        }
    }
    let pass = worst <= 1e-12 && lengths.iter().all(|&l| l == 2001);
    outcome(pass, format!("max |θ(k) − (1 − Ta1)^k θ(0)| = {worst:.1e} over {:?} rows", lengths))
}

fn criterion_4(r: &Runner) -> Outcome {
    let (rep, dt) = r.run("pe-check", json!({"mu": 600.0}), "c4", 1);
    let (zero, dz) = r.run("pe-check", json!({"wr": {"kind": "zero"}, "mu": 600.0}), "c4z", 1);
    // direct windowed summation over every start in one period
    let (t, l) = (0.01f64, std::f64::consts::PI);
    let ell = (l / t).floor() as usize;
    let starts = (2.0 * std::f64::consts::PI / t).ceil() as usize;
    let oracle = (0..=starts)
        .map(|j| t * (j..=j + ell).map(|k| (20.0 * (k as f64 * t).sin()).powi(2)).sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    let reported = f(&rep.metrics["windows"][0]["infimum"]);
    let pass = rep.metrics["verdict"]["kind"] == "pass"
        && zero.metrics["verdict"]["kind"] == "falsified"
        && (reported - oracle).abs() <= 1e-9 * oracle
        && oracle >= 600.0
        && dt + dz < Duration::from_secs(1);
    outcome(
        pass,
        format!(
            "window infimum {reported:.3} (direct sum {oracle:.3}, continuum 200π = {:.1}), zero signal {}, {:.3} s",
            200.0 * std::f64::consts::PI,
            zero.metrics["verdict"]["kind"].as_str().unwrap(),
            (dt + dz).as_secs_f64()
        ),
    )
}

fn criterion_5(r: &Runner) -> Outcome {
    let (rep, dt) = r.run("lyapunov-audit", Value::Null, "c5", 1);
    let c = &rep.metrics["constants"];
    // closed-form constants from the gains and references
    let (ay, ts, a2, wm) = (0.1, 0.02, 1.0, 0.5);
    let c1 = 1.0 - 0.5 * (ay + ts) * wm;
    let e = ay + ts;
    let ax = a2 - e * wm * wm - 0.5 * e * e * wm * wm * (1.0 + a2) * (1.0 + a2);
    let consts_ok = (f(&c["c1"]["value"]) - c1).abs() < 1e-12
        && (f(&c["alpha_x"]["value"]) - ax).abs() < 1e-12
        && (f(&c["w_m"]) - wm).abs() < 1e-12
        && (f(&c["c3"]["value"]) - 2.0 * wm * wm).abs() < 1e-12;
    let chain = &rep.metrics["chain"];
    let mut parts = Vec::new();
    let mut total = 0;
    let mut all_checked = true;
    for name in ["v_sandwich", "v_decrease", "w_sandwich", "w_decrease", "u_sandwich", "u_decrease"] {
        let v = chain[name]["violations"].as_u64().unwrap();
        total += v;
        all_checked &= chain[name]["checked"].as_u64().unwrap() > 0;
        parts.push(format!("{name} {v}"));
    }
    let grid_ok = rep.metrics["grid"]["per_axis"] == 41 && rep.metrics["grid"]["k_max"] == 629;
    let pass = consts_ok && grid_ok && all_checked && total == 0 && rep.metrics["chain"].is_object() && dt < Duration::from_secs(30);
    outcome(
        pass,
        format!(
            "violations: {}; α_x = {:.4}, K1 = {:.4}, K2 = {:.4}, c̃3 = {:.2e}; 41×41 grid, k ≤ 629, {:.2} s",
            parts.join(", "),
            f(&c["alpha_x"]["value"]),
            f(&c["k1"]["value"]),
            f(&c["k2"]["value"]),
            f(&c["c3_tilde"]["value"]),
            dt.as_secs_f64()
        ),
    )
}

fn slope(rows: &[Vec<f64>]) -> f64 {
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r[0].ln(), r[1].ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

fn criterion_6(r: &Runner) -> Outcome {
    let (_, dt) = r.run("consistency-sweep", Value::Null, "c6", 1);
    let dir = r.dir("c6");
    let (_, re) = table(&dir, "consistency_euler");
    let (_, rm) = table(&dir, "consistency_modified_euler");
    let (se, sm) = (slope(&re), slope(&rm));
    let span = re.first().unwrap()[0] / re.last().unwrap()[0];
    let pass = (se - 2.0).abs() <= 0.15 && sm >= 1.9 && span >= 100.0 && dt < Duration::from_secs(30);
    outcome(pass, format!("Euler slope {se:.4}, modified Euler slope {sm:.4} over T ∈ [1e-3, 1e-1], {:.2} s", dt.as_secs_f64()))
}

fn replay_interconnection(sys: &CascadeSystem, w: &Value) -> f64 {
    let state: Vec<f64> = w["state"].as_array().unwrap().iter().map(f).collect();
    let (t, k) = (f(&w["period"]), w["k"].as_u64().unwrap() as usize);
    let a = sys.f(t, k, &state[..2], &state[2..]).unwrap();
    let b = sys.f(t, k, &state[..2], &[0.0]).unwrap();
    dist(&a, &b)
}

fn criterion_7_8(r: &Runner) -> (Outcome, Outcome) {
    let (rep, dt) = r.run("cascade-theorem-demo", Value::Null, "c78", 1);
    let m = &rep.metrics;
    let i = &m["interconnection"];
    let c = f(&i["c"]);
    let bad = &i["without_period_factor"];
    let w = &bad["witness"];
    let replay = if w.is_object() {
        (replay_interconnection(&unscaled_interconnection_cascade(&validated_refs(), &validated_gains()), w) - f(&w["measured"])).abs()
    } else {
        f64::INFINITY
    };
    let c7 = outcome(
        i["bound"]["kind"] == "pass" && i["growth"]["kind"] == "pass" && bad["kind"] == "falsified" && replay <= 1e-12 && c == 1.0,
        format!(
            "γ2(s) = c(s + 1), γ3(s) = s with c = {c}: {} ({} samples); without the T factor: {} ({} violations, witness replays to {replay:.1e})",
            i["bound"]["kind"].as_str().unwrap(),
            i["bound"]["checked"],
            bad["kind"].as_str().unwrap(),
            bad["violations"],
        ),
    );

    let cert = &m["certificate"];
    let (cols, rows) = table(&r.dir("c78"), "rho");
    let rho_err = rows
        .iter()
        .map(|row| (row[col(&cols, "rho")] - rho_identity_closed_form(row[col(&cols, "s")])).abs())
        .fold(0.0, f64::max);
    let reported_err = f(&cert["rho_closed_form_error"]);
    let wv = &cert["w_increment"];
    let cases = &cert["cases"];
    let cross = m["cross_check"].as_bool().unwrap();
    let c8 = outcome(
        rho_err <= 1e-8 && reported_err <= 1e-8 && wv["kind"] == "pass" && wv["violations"] == 0 && cases["large"].as_u64().unwrap() > 0,
        format!(
            "ρ vs closed form: {rho_err:.1e} on table, {reported_err:.1e} on 4001 points; ΔW ≤ Tμ(|z|): {} violations of {} \
             (cases decreasing/small/large {}/{}/{}); hypotheses {}, fitted-β conclusion {}, cross-check {cross}; {:.1} s",
            wv["violations"],
            wv["checked"],
            cases["decreasing"],
            cases["small"],
            cases["large"],
            m["hypotheses"]["kind"].as_str().unwrap(),
            m["conclusion"]["verdict"]["kind"].as_str().unwrap_or("none"),
            dt.as_secs_f64()
        ),
    );
    (c7, c8)
}

fn files_of(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

fn criterion_9(r: &Runner) -> Outcome {
    let small_demo = json!({
        "periods": [0.01], "interconnection_samples": 32, "chain_per_axis": 11,
        "certificate_per_axis": 7, "trajectory_samples": 16, "trajectory_horizon_s": 10.0,
    });
    let cases = [
        ("example1", json!({"trajectories": 20, "exact_steps": 2000})),
        ("unicycle-compare", Value::Null),
        ("consistency-sweep", json!({"samples": 64})),
        ("lyapunov-audit", json!({"per_axis": 21})),
        ("pe-check", Value::Null),
        ("cascade-theorem-demo", small_demo),
    ];
    let mut identical = 0;
    let mut files = 0;
    let mut bad = Vec::new();
    for (name, params) in cases {
        r.run(name, params.clone(), &format!("c9-{name}-a"), 1);
        r.run(name, params, &format!("c9-{name}-b"), 2);
        let a = files_of(&r.dir(&format!("c9-{name}-a")));
        let b = files_of(&r.dir(&format!("c9-{name}-b")));
        files += a.len();
        if a == b && !a.is_empty() {
            identical += 1;
        } else {
            bad.push(name);
        }
    }
    outcome(
        bad.is_empty(),
        format!("{identical}/6 experiments byte-identical across reruns with 1 and 2 workers ({files} files){}", if bad.is_empty() { String::new() } else { format!("; differing: {bad:?}") }),
    )
}

fn main() {
    let runner = Runner { root: tempfile::tempdir().unwrap() };
    let start = Instant::now();
    let (c7, c8) = criterion_7_8(&runner);
    let results = [
        ("Example 1 reproduction", criterion_1(&runner)),
        ("unicycle comparison", criterion_2(&runner)),
        ("θ-subsystem exactness", criterion_3(&runner)),
        ("PE audit", criterion_4(&runner)),
        ("Lyapunov chain, validated regime", criterion_5(&runner)),
        ("consistency orders", criterion_6(&runner)),
        ("interconnection audit", c7),
        ("ρ construction and W increment", c8),
        ("determinism", criterion_9(&runner)),
    ];
    let mut failed = Vec::new();
    for (i, (name, o)) in results.iter().enumerate() {
        println!("criterion {} {} {name}: {}", i + 1, if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed.push(i + 1);
        }
    }
    println!(
        "acceptance: {}/{} criteria passed in {:.1} s",
        results.len() - failed.len(),
        results.len(),
        start.elapsed().as_secs_f64()
    );
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
