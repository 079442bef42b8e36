//! Byte-stable CSV and JSON writers.
//!
//! Numbers carry 12 significant digits, columns have a fixed order, and
//! lines end in LF, so identical results give identical files.

use std::fs;
use std::path::{Path, PathBuf};

use qreduce::experiment::{EnsembleResult, SweepPoint, TrajectoryRecord};
use qreduce::hilbert::CurrentSign;
use qreduce::stats::{DensityEstimate, FitResult};
use serde_json::{json, Map, Value};

use crate::CliError;

pub const TRAJECTORY_COLUMNS: [&str; 10] = [
    "t",
    "re_a",
    "im_a",
    "var_a",
    "re_da2",
    "im_da2",
    "sx",
    "cov_sx_field",
    "norm_drift",
    "trunc_top5",
];
pub const PATHS_COLUMNS: [&str; 3] = ["path_index", "stopping_time", "outcome"];
pub const SWEEP_COLUMNS: [&str; 6] = ["g", "n_paths", "n_reduced", "mean_tau", "std_tau", "stderr_tau"];
pub const KDE_COLUMNS: [&str; 2] = ["x", "density"];

/// `%.12g`-style formatting.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// A JSON number rounded to the same 12 significant digits as the CSVs.
fn num(x: f64) -> Value {
    if x.is_finite() {
        json!(fmt_num(x).parse::<f64>().expect("formatted number parses"))
    } else {
        Value::Null
    }
}

fn opt_num(x: Option<f64>) -> Value {
    x.map_or(Value::Null, num)
}

fn outcome_str(o: Option<CurrentSign>) -> &'static str {
    match o {
        Some(CurrentSign::Plus) => "1",
        Some(CurrentSign::Minus) => "-1",
        None => "",
    }
}

fn csv(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn trajectory_csv(record: &TrajectoryRecord) -> String {
    csv(
        &TRAJECTORY_COLUMNS,
        record.samples.iter().map(|s| {
            let o = &s.observables;
            [
                s.t,
                o.a_mean.re,
                o.a_mean.im,
                o.var_a,
                o.delta_a_sq.re,
                o.delta_a_sq.im,
                o.sx_mean,
                o.cov_current_field,
                s.norm_drift,
                s.trunc_top5,
            ]
            .iter()
            .map(|&x| fmt_num(x))
            .collect()
        }),
    )
}

pub fn paths_csv(result: &EnsembleResult) -> String {
    csv(
        &PATHS_COLUMNS,
        result.paths.iter().map(|p| {
            vec![
                p.path_index.to_string(),
                p.stopping_time.map_or(String::new(), fmt_num),
                outcome_str(p.outcome).to_string(),
            ]
        }),
    )
}

pub fn kde_csv(kde: &DensityEstimate) -> String {
    csv(
        &KDE_COLUMNS,
        kde.grid
            .iter()
            .zip(&kde.density)
            .map(|(&x, &d)| vec![fmt_num(x), fmt_num(d)]),
    )
}

pub fn sweep_csv(points: &[SweepPoint]) -> String {
    csv(
        &SWEEP_COLUMNS,
        points.iter().map(|p| {
            let r = &p.result;
            vec![
                fmt_num(p.g),
                r.n_paths().to_string(),
                r.n_reduced().to_string(),
                r.mean_tau.map_or(String::new(), fmt_num),
                r.std_tau.map_or(String::new(), fmt_num),
                r.stderr_tau.map_or(String::new(), fmt_num),
            ]
        }),
    )
}

pub fn summary_json(
    result: &EnsembleResult,
    median_tau: Option<f64>,
    kde: Option<&DensityEstimate>,
    extra: Map<String, Value>,
) -> String {
    let mut obj = Map::new();
    obj.insert("n_paths".into(), json!(result.n_paths()));
    obj.insert("n_plus".into(), json!(result.n_plus));
    obj.insert("n_minus".into(), json!(result.n_minus));
    obj.insert("n_unreduced".into(), json!(result.n_unreduced));
    obj.insert("mean_tau".into(), opt_num(result.mean_tau));
    obj.insert("std_tau".into(), opt_num(result.std_tau));
    obj.insert("stderr_tau".into(), opt_num(result.stderr_tau));
    obj.insert("median_tau".into(), opt_num(median_tau));
    obj.insert("kde_bandwidth".into(), opt_num(kde.map(|k| k.bandwidth)));
    obj.extend(extra);
    pretty(Value::Object(obj))
}

pub fn fit_json(fit: Option<&FitResult>, points: &[SweepPoint], note: Option<String>) -> String {
    let pts: Vec<Value> = points
        .iter()
        .map(|p| {
            json!({
                "g": num(p.g),
                "mean_tau": opt_num(p.result.mean_tau),
                "t_max": num(p.t_max),
                "n_max": p.n_max,
            })
        })
        .collect();
    let mut obj = Map::new();
    obj.insert("k".into(), opt_num(fit.map(|f| f.k)));
    obj.insert("exponent".into(), opt_num(fit.map(|f| f.exponent)));
    obj.insert(
        "k_fixed_exponent".into(),
        opt_num(fit.map(|f| f.k_fixed_exponent)),
    );
    obj.insert("residual".into(), opt_num(fit.map(|f| f.residual)));
    obj.insert("points".into(), Value::Array(pts));
    if let Some(note) = note {
        obj.insert("note".into(), json!(note));
    }
    pretty(Value::Object(obj))
}

/// One entry of `report.json`.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub metric: f64,
    pub bound: f64,
    pub pass: bool,
}

pub fn report_json(checks: &[CheckOutcome]) -> String {
    let list: Vec<Value> = checks
        .iter()
        .map(|c| json!({ "name": c.name, "metric": num(c.metric), "bound": num(c.bound), "pass": c.pass }))
        .collect();
    pretty(json!({ "all_pass": checks.iter().all(|c| c.pass), "checks": list }))
}

fn pretty(v: Value) -> String {
    let mut s = serde_json::to_string_pretty(&v).expect("JSON values serialize");
    s.push('\n');
    s
}

/// Writes each `(file name, contents)` pair into `dir`, creating it first.
pub fn write_outputs(dir: &Path, files: &[(&str, String)]) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    files
        .iter()
        .map(|(name, contents)| {
            let path = dir.join(name);
            fs::write(&path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            Ok(path)
        })
        .collect()
}
