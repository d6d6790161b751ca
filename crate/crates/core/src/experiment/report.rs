//! Report rows and their CSV / JSON files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ExperimentError;

/// Column order of `report.csv`.
pub const REPORT_CSV_HEADER: &str = "method,gap_mean,gap_std,time_s,accuracy";

/// One method's result. Gaps are percentages, `gap_std` is the standard
/// deviation over seeds (0 for a single seed), `time_s` the mean
/// per-instance time and `accuracy` the share of instances whose chosen
/// solvers include a row-best one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportRow {
    pub method: String,
    pub gap_mean: f64,
    pub gap_std: f64,
    pub time_s: Option<f64>,
    pub accuracy: Option<f64>,
}

/// Writes `<stem>.csv` and `<stem>.json` in `dir`.
pub fn emit_report(dir: &Path, stem: &str, rows: &[ReportRow]) -> Result<(PathBuf, PathBuf), ExperimentError> {
    if rows.is_empty() {
        return Err(ExperimentError::Contract("a report needs at least one row".into()));
    }
    fs::create_dir_all(dir).map_err(|e| ExperimentError::io(dir, e))?;
    let csv_path = dir.join(format!("{stem}.csv"));
    let json_path = dir.join(format!("{stem}.json"));
    fs::write(&csv_path, report_csv(rows)?).map_err(|e| ExperimentError::io(&csv_path, e))?;
    let mut json = serde_json::to_vec_pretty(rows).expect("rows serialize");
    json.push(b'\n');
    fs::write(&json_path, json).map_err(|e| ExperimentError::io(&json_path, e))?;
    Ok((csv_path, json_path))
}

pub fn report_csv(rows: &[ReportRow]) -> Result<Vec<u8>, ExperimentError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(REPORT_CSV_HEADER.split(','))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| ExperimentError::Contract(e.to_string()))
}

pub fn read_report_json(path: &Path) -> Result<Vec<ReportRow>, ExperimentError> {
    let text = fs::read_to_string(path).map_err(|e| ExperimentError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))
}

pub fn read_report_csv(path: &Path) -> Result<Vec<ReportRow>, ExperimentError> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(ExperimentError::from)).collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation; 0 for fewer than two values.
pub fn sample_std(v: &[f64]) -> f64 {
    if v.len() < 2 || v.iter().all(|&x| x == v[0]) {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Mean and standard deviation over per-seed reports. Every report must list
/// the same methods in the same order.
pub fn aggregate(per_seed: &[Vec<ReportRow>]) -> Result<Vec<ReportRow>, ExperimentError> {
    let first = per_seed.first().ok_or_else(|| ExperimentError::Contract("nothing to aggregate".into()))?;
    for rows in per_seed {
        if rows.len() != first.len() || rows.iter().zip(first).any(|(a, b)| a.method != b.method) {
            return Err(ExperimentError::Contract("per-seed reports list different methods".into()));
        }
    }
    let opt_mean = |vals: Vec<Option<f64>>| -> Option<f64> {
        let v: Option<Vec<f64>> = vals.into_iter().collect();
        v.map(|v| mean(&v))
    };
    Ok((0..first.len())
        .map(|i| {
            let gaps: Vec<f64> = per_seed.iter().map(|r| r[i].gap_mean).collect();
            ReportRow {
                method: first[i].method.clone(),
                gap_mean: mean(&gaps),
                gap_std: sample_std(&gaps),
                time_s: opt_mean(per_seed.iter().map(|r| r[i].time_s).collect()),
                accuracy: opt_mean(per_seed.iter().map(|r| r[i].accuracy).collect()),
            }
        })
        .collect())
}
