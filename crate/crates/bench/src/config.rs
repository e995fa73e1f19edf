//! Flat `key = value` text files for solver settings and experiment specs.
//!
//! Blank lines and `#` comments are ignored. Solver keys mirror the
//! [`SolverConfig`] fields:
//!
//! ```text
//! sigma0 = auto            # or a positive number
//! sigma_decay = 0.97
//! sigma_floor_ratio = 0.05
//! max_iterations = 100
//! translation_tol = 1e-6
//! rotation_tol = 1e-6
//! k_neighbors = 20
//! eps_plane = 1e-3
//! gate = adaptive          # or a radius in meters, or inf
//! pinv_tolerance = 1e-8
//! ```

use std::fs;
use std::path::Path;
use std::str::FromStr;

use cobigicp::correspond::GateMode;
use cobigicp::solver::{SigmaInit, SolverConfig};

use crate::error::{BenchError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

pub fn parse_entries(path: &Path, text: &str) -> Result<Vec<Entry>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| BenchError::parse(path, i + 1, format!("expected key = value, got {line:?}")))?;
        let key = k.trim().to_ascii_lowercase();
        if key.is_empty() {
            return Err(BenchError::parse(path, i + 1, "empty key"));
        }
        out.push(Entry {
            line: i + 1,
            key,
            value: v.trim().to_string(),
        });
    }
    Ok(out)
}

pub(crate) fn parse_value<T: FromStr>(path: &Path, e: &Entry) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    e.value
        .parse::<T>()
        .map_err(|err| BenchError::parse(path, e.line, format!("{} = {:?}: {err}", e.key, e.value)))
}

/// Applies one solver key. Returns `Ok(false)` when the key is not a solver key.
pub fn apply_solver_entry(cfg: &mut SolverConfig, path: &Path, e: &Entry) -> Result<bool> {
    match e.key.as_str() {
        "sigma0" => {
            cfg.sigma0 = if e.value.eq_ignore_ascii_case("auto") {
                SigmaInit::Auto
            } else {
                SigmaInit::Fixed(parse_value(path, e)?)
            }
        }
        "sigma_decay" => cfg.sigma_decay = parse_value(path, e)?,
        "sigma_floor_ratio" => cfg.sigma_floor_ratio = parse_value(path, e)?,
        "max_iterations" => cfg.max_iterations = parse_value(path, e)?,
        "translation_tol" => cfg.translation_tol = parse_value(path, e)?,
        "rotation_tol" => cfg.rotation_tol = parse_value(path, e)?,
        "k_neighbors" => cfg.k_neighbors = parse_value(path, e)?,
        "eps_plane" => cfg.eps_plane = parse_value(path, e)?,
        "gate" | "gate_mode" | "eps_gate" => {
            cfg.gate = if e.value.eq_ignore_ascii_case("adaptive") {
                GateMode::Adaptive
            } else {
                GateMode::Fixed(parse_value(path, e)?)
            }
        }
        "pinv_tolerance" => cfg.pinv_tolerance = parse_value(path, e)?,
        _ => return Ok(false),
    }
    Ok(true)
}

pub fn parse_solver_config(path: &Path, text: &str) -> Result<SolverConfig> {
    let mut cfg = SolverConfig::default();
    for e in parse_entries(path, text)? {
        if !apply_solver_entry(&mut cfg, path, &e)? {
            return Err(BenchError::parse(path, e.line, format!("unknown key {:?}", e.key)));
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_solver_config(path: impl AsRef<Path>) -> Result<SolverConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
    parse_solver_config(path, &text)
}

/// Serializes a config in the same format [`parse_solver_config`] reads.
pub fn format_solver_config(cfg: &SolverConfig) -> String {
    let sigma0 = match cfg.sigma0 {
        SigmaInit::Auto => "auto".to_string(),
        SigmaInit::Fixed(s) => s.to_string(),
    };
    let gate = match cfg.gate {
        GateMode::Adaptive => "adaptive".to_string(),
        GateMode::Fixed(g) => g.to_string(),
    };
    format!(
        "sigma0 = {sigma0}\nsigma_decay = {}\nsigma_floor_ratio = {}\nmax_iterations = {}\n\
         translation_tol = {}\nrotation_tol = {}\nk_neighbors = {}\neps_plane = {}\ngate = {gate}\n\
         pinv_tolerance = {}\n",
        cfg.sigma_decay,
        cfg.sigma_floor_ratio,
        cfg.max_iterations,
        cfg.translation_tol,
        cfg.rotation_tol,
        cfg.k_neighbors,
        cfg.eps_plane,
        cfg.pinv_tolerance,
    )
}
