//! Output files: `metrics.json`, one CSV and one gnuplot `.dat` per table.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    Falsified,
    Inconclusive,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Pass | Status::Inconclusive => 0,
            Status::Falsified => 1,
        }
    }

    pub fn from_verdict(v: &dtcascade::StabilityVerdict) -> Self {
        match v.kind {
            dtcascade::VerdictKind::Pass => Status::Pass,
            dtcascade::VerdictKind::Falsified => Status::Falsified,
            dtcascade::VerdictKind::Inconclusive => Status::Inconclusive,
        }
    }

    /// Falsified dominates inconclusive, which dominates pass.
    pub fn and(self, other: Status) -> Status {
        match (self, other) {
            (Status::Falsified, _) | (_, Status::Falsified) => Status::Falsified,
            (Status::Inconclusive, _) | (_, Status::Inconclusive) => Status::Inconclusive,
            _ => Status::Pass,
        }
    }

    pub fn check(ok: bool) -> Status {
        if ok {
            Status::Pass
        } else {
            Status::Falsified
        }
    }
}

/// A numeric table written as `<name>.csv` and `<name>.dat`.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        Self { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn from_trajectory(name: impl Into<String>, tr: &dtcascade::Trajectory, names: &[&str]) -> Self {
        let mut cols = vec!["k", "t"];
        cols.extend_from_slice(names);
        cols.push("norm");
        let mut t = Table::new(name, &cols);
        for r in tr.rows() {
            t.push(r);
        }
        t
    }
}

/// What an experiment returns before anything is written.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub status: Status,
    pub metrics: Value,
    pub tables: Vec<Table>,
}

/// `sha256` of the canonical JSON of `{experiment, params}`. Object keys are
/// sorted, so the digest does not depend on key order in the config file.
pub fn config_hash(experiment: &str, params: &Value) -> String {
    let canonical = serde_json::json!({ "experiment": experiment, "params": params });
    hex::encode(Sha256::digest(serde_json::to_string(&canonical).expect("JSON values serialize").as_bytes()))
}

fn fmt(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v}")
    }
}

fn header(hash: &str, seed: u64) -> String {
    format!("# config_hash={hash} seed={seed}\n")
}

pub fn table_csv(t: &Table, hash: &str, seed: u64) -> Result<String, CliError> {
    let mut w = csv::WriterBuilder::new().from_writer(header(hash, seed).into_bytes());
    let err = |e: csv::Error| CliError::io(format!("{}.csv", t.name), std::io::Error::other(e));
    w.write_record(&t.columns).map_err(err)?;
    for r in &t.rows {
        w.write_record(r.iter().map(|v| fmt(*v))).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::io(format!("{}.csv", t.name), std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
}

pub fn table_dat(t: &Table, hash: &str, seed: u64) -> String {
    let mut s = header(hash, seed);
    s.push_str(&format!("# {}\n", t.columns.join(" ")));
    for r in &t.rows {
        s.push_str(&r.iter().map(|v| fmt(*v)).collect::<Vec<_>>().join(" "));
        s.push('\n');
    }
    s
}

/// Summary of an emitted report.
#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub experiment: String,
    pub config_hash: String,
    pub seed: u64,
    pub status: Status,
    pub metrics: Value,
    pub files: Vec<String>,
}

/// Writes every table plus `metrics.json` into `out_dir` and returns the
/// report that was serialized.
pub fn emit_report(
    out_dir: &Path,
    experiment: &str,
    hash: &str,
    seed: u64,
    outcome: &Outcome,
) -> Result<Report, CliError> {
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let mut files = Vec::new();
    let write = |name: String, body: String| -> Result<String, CliError> {
        let path: PathBuf = out_dir.join(&name);
        fs::write(&path, body).map_err(|e| CliError::io(&path, e))?;
        Ok(name)
    };
    for t in &outcome.tables {
        files.push(write(format!("{}.csv", t.name), table_csv(t, hash, seed)?)?);
        files.push(write(format!("{}.dat", t.name), table_dat(t, hash, seed))?);
    }
    let report = Report {
        experiment: experiment.to_string(),
        config_hash: hash.to_string(),
        seed,
        status: outcome.status,
        metrics: outcome.metrics.clone(),
        files,
    };
    let mut body = serde_json::to_string_pretty(&report).expect("report serializes");
    body.push('\n');
    write("metrics.json".into(), body)?;
    Ok(report)
}

/// Reads a CSV written by [`table_csv`] back into a header and numeric rows.
pub fn read_table_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), CliError> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| CliError::io(path, std::io::Error::other(e)))?;
    let cols = r.headers().map_err(|e| CliError::io(path, std::io::Error::other(e)))?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| CliError::io(path, std::io::Error::other(e)))?;
        let row = rec
            .iter()
            .map(|f| match f {
                "nan" => Ok(f64::NAN),
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                _ => f.parse::<f64>(),
            })
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|e| CliError::io(path, std::io::Error::other(e)))?;
        rows.push(row);
    }
    Ok((cols, rows))
}
