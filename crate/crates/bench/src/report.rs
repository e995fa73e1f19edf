//! CSV reports: per-pair rows, a one-line summary, and ECDFs of both errors.

use std::fs;
use std::path::Path;

use crate::error::{BenchError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PairResult {
    pub pair_id: String,
    /// meters
    pub e_trans: f64,
    /// radians
    pub e_rot: f64,
    /// seconds
    pub wall_time: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Registration error message, if the run failed. The metrics then
    /// describe the initial guess.
    pub failure: Option<String>,
}

pub const PAIRS_FILE: &str = "pairs.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const ECDF_TRANS_FILE: &str = "ecdf_trans.csv";
pub const ECDF_ROT_FILE: &str = "ecdf_rot.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct ReportOptions {
    pub algorithm: String,
    /// When false the time columns are left empty so reruns are byte-identical.
    pub include_timing: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub pairs: usize,
    pub mean_e_trans: f64,
    pub mean_e_rot: f64,
    pub mean_time: f64,
    pub converged_fraction: f64,
}

pub fn summarize(results: &[PairResult]) -> Summary {
    let n = results.len().max(1) as f64;
    let mean = |f: fn(&PairResult) -> f64| results.iter().map(f).sum::<f64>() / n;
    Summary {
        pairs: results.len(),
        mean_e_trans: mean(|r| r.e_trans),
        mean_e_rot: mean(|r| r.e_rot),
        mean_time: mean(|r| r.wall_time),
        converged_fraction: results.iter().filter(|r| r.converged).count() as f64 / n,
    }
}

/// Sorted values paired with cumulative probability `i / N`.
pub fn ecdf(values: &[f64]) -> Vec<(f64, f64)> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.into_iter()
        .enumerate()
        .map(|(i, x)| (x, (i + 1) as f64 / n))
        .collect()
}

fn num(x: f64) -> String {
    format!("{x}")
}

pub fn emit_report(results: &[PairResult], out_dir: impl AsRef<Path>, opts: &ReportOptions) -> Result<Summary> {
    let out = out_dir.as_ref();
    fs::create_dir_all(out).map_err(|e| BenchError::io(out, e))?;
    let time = |t: f64| if opts.include_timing { num(t) } else { String::new() };

    let mut w = csv::Writer::from_path(out.join(PAIRS_FILE))?;
    w.write_record(["pair_id", "e_trans_m", "e_rot_rad", "e_rot_deg", "time_s", "iterations", "converged", "failure"])?;
    for r in results {
        w.write_record([
            r.pair_id.clone(),
            num(r.e_trans),
            num(r.e_rot),
            num(r.e_rot.to_degrees()),
            time(r.wall_time),
            r.iterations.to_string(),
            r.converged.to_string(),
            r.failure.clone().unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| BenchError::io(out.join(PAIRS_FILE), e))?;

    let summary = summarize(results);
    let mut w = csv::Writer::from_path(out.join(SUMMARY_FILE))?;
    w.write_record([
        "algorithm",
        "pairs",
        "mean_e_trans_m",
        "mean_e_rot_deg",
        "mean_e_rot_rad",
        "mean_time_s",
        "converged_fraction",
    ])?;
    w.write_record([
        opts.algorithm.clone(),
        summary.pairs.to_string(),
        num(summary.mean_e_trans),
        num(summary.mean_e_rot.to_degrees()),
        num(summary.mean_e_rot),
        time(summary.mean_time),
        num(summary.converged_fraction),
    ])?;
    w.flush().map_err(|e| BenchError::io(out.join(SUMMARY_FILE), e))?;

    let trans: Vec<f64> = results.iter().map(|r| r.e_trans).collect();
    write_ecdf(&out.join(ECDF_TRANS_FILE), "e_trans_m", &trans)?;
    let rot: Vec<f64> = results.iter().map(|r| r.e_rot.to_degrees()).collect();
    write_ecdf(&out.join(ECDF_ROT_FILE), "e_rot_deg", &rot)?;
    Ok(summary)
}

fn write_ecdf(path: &Path, column: &str, values: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([column, "probability"])?;
    for (x, p) in ecdf(values) {
        w.write_record([num(x), num(p)])?;
    }
    w.flush().map_err(|e| BenchError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ecdf_definition() {
        let e = ecdf(&[3.0, 1.0, 2.0]);
        assert_eq!(e, vec![(1.0, 1.0 / 3.0), (2.0, 2.0 / 3.0), (3.0, 1.0)]);
        assert!(ecdf(&[]).is_empty());
    }

    #[test]
    fn summary_means() {
        let r = |t: f64, c| PairResult {
            pair_id: "p".into(),
            e_trans: t,
            e_rot: t / 10.0,
            wall_time: 1.0,
            iterations: 3,
            converged: c,
            failure: None,
        };
        let s = summarize(&[r(1.0, true), r(3.0, false)]);
        assert_eq!(s.mean_e_trans, 2.0);
        assert_eq!(s.mean_e_rot, 0.2);
        assert_eq!(s.converged_fraction, 0.5);
    }
}
