//! Result files. CSV headers and JSON keys are part of the versioned output
//! schema; bump [`SCHEMA_VERSION`] when either changes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ResolvedConfig;
use super::validate::ValidationReport;
use super::CliError;
use crate::experiments::{RateFit, RateReport};
use crate::fem::FemOperators;
use crate::stepper::{NormRecord, TrajectoryState};

pub const SCHEMA_VERSION: u32 = 1;
pub const TRAJECTORY_HEADER: &str = "n,t,norm_V,norm_U";
pub const FINAL_STATE_HEADER: &str = "i,x,V,U";
pub const PATH_HEADER: &str = "n,t,i,x,V,U";
pub const ERRORS_HEADER: &str = "resolution,h_or_k,strong_error,stderr";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub n_cells: usize,
    pub steps: usize,
    pub t_final: f64,
    pub final_norm_v: f64,
    pub final_norm_u: f64,
    pub max_norm_v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ResultBody {
    Trajectory(TrajectorySummary),
    Rate(RateReport),
    Validation(ValidationReport),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultEnvelope {
    pub schema_version: u32,
    pub artifact_version: String,
    pub command: String,
    pub config: ResolvedConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing_seconds: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    pub result: ResultBody,
}

/// Contents of `rate.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFile {
    pub schema_version: u32,
    pub kind: crate::experiments::StudyKind,
    pub component: crate::experiments::Component,
    pub slope: f64,
    pub intercept: f64,
    pub residual: f64,
    pub slope_stderr: f64,
    pub samples: usize,
    pub reference: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    pub config: ResolvedConfig,
}

impl RateFile {
    pub fn new(report: &RateReport, config: &ResolvedConfig, notes: Vec<String>) -> Self {
        let RateFit { slope, intercept, residual } = report.fit;
        Self {
            schema_version: SCHEMA_VERSION,
            kind: report.kind,
            component: report.component,
            slope,
            intercept,
            residual,
            slope_stderr: report.slope_stderr,
            samples: report.samples,
            reference: report.reference,
            notes,
            config: config.clone(),
        }
    }
}

pub fn trajectory_csv(history: &[NormRecord]) -> String {
    let mut s = String::from(TRAJECTORY_HEADER);
    s.push('\n');
    for r in history {
        let _ = writeln!(s, "{},{},{:e},{:e}", r.n, r.t, r.norm_v, r.norm_u);
    }
    s
}

pub fn final_state_csv(ops: &FemOperators, state: &TrajectoryState) -> String {
    let mut s = String::from(FINAL_STATE_HEADER);
    s.push('\n');
    for (i, x) in ops.mesh().nodes().iter().enumerate() {
        let _ = writeln!(s, "{},{},{:e},{:e}", i + 1, x, state.v.coeffs[i], state.u.coeffs[i]);
    }
    s
}

pub fn path_csv(ops: &FemOperators, path: &[TrajectoryState], k: f64) -> String {
    let mut s = String::from(PATH_HEADER);
    s.push('\n');
    let nodes = ops.mesh().nodes();
    for st in path {
        for (i, x) in nodes.iter().enumerate() {
            let _ = writeln!(s, "{},{},{},{},{:e},{:e}", st.n, st.n as f64 * k, i + 1, x, st.v.coeffs[i], st.u.coeffs[i]);
        }
    }
    s
}

pub fn errors_csv(report: &RateReport) -> String {
    let mut s = String::from(ERRORS_HEADER);
    s.push('\n');
    for e in &report.errors {
        let _ = writeln!(s, "{},{:e},{:e},{:e}", e.resolution, e.step, e.error, e.stderr);
    }
    s
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(format!("serialize: {e}")))?;
    s.push('\n');
    Ok(s)
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}
