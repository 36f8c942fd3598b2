//! Command implementations behind the `sbbm` binary.

pub mod config;
pub mod output;
pub mod validate;

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use thiserror::Error;

use crate::experiments::{run_study, Component, StudyKind, StudyPlan};
use crate::fem::{assemble, Mesh1D};
use crate::noise::{BrownianTable, NoiseModel};
use crate::stepper::{run_trajectory, Drift, InitialDatum, NoiseDriver, SchemeConfig};
use config::{Command, ResolvedConfig, RunConfig};
use output::{ResultBody, ResultEnvelope, SCHEMA_VERSION};
use validate::{ValidateHooks, ValidateParams, ValidationReport};

/// Environment variable overriding the output directory.
pub const OUT_DIR_ENV: &str = "SBBM_OUT_DIR";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("validation failed: {0}")]
    ValidationFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::ValidationFailed(_) => 1,
            Self::Config(_) => 2,
            Self::Numerical(_) => 3,
            Self::Io(_) => 4,
        }
    }
}

impl From<crate::Error> for CliError {
    fn from(e: crate::Error) -> Self {
        match e {
            crate::Error::Numerical(m) => Self::Numerical(m),
            other => Self::Config(other.to_string()),
        }
    }
}

/// Execution settings that do not affect results and are not echoed.
#[derive(Debug, Clone)]
pub struct Execution {
    pub out_dir: PathBuf,
    /// 0 = all cores.
    pub workers: usize,
}

/// Output directory: explicit flag, then environment, then config, then `out`.
pub fn output_dir(flag: Option<PathBuf>, cfg: &RunConfig) -> PathBuf {
    if let Some(p) = flag {
        return p;
    }
    if let Some(p) = std::env::var_os(OUT_DIR_ENV) {
        return PathBuf::from(p);
    }
    match cfg.get("output.dir") {
        Some(config::ConfigValue::Str(s)) => PathBuf::from(s),
        _ => PathBuf::from("out"),
    }
}

pub fn parse_drift(name: &str) -> Result<Drift, CliError> {
    Drift::from_name(name).ok_or_else(|| CliError::Config(format!("unknown drift `{name}` (zero, identity, sin, tanh)")))
}

/// `zero`, `bump` (`x(1-x)`), or a sine list `j:amp,j:amp`.
pub fn parse_initial(spec: &str) -> Result<InitialDatum, CliError> {
    match spec.trim() {
        "zero" => Ok(InitialDatum::Zero),
        "bump" => Ok(InitialDatum::Function(Arc::new(|x| x * (1.0 - x)))),
        list => {
            let modes = list
                .split(',')
                .map(|item| {
                    let (j, a) = item
                        .split_once(':')
                        .ok_or_else(|| CliError::Config(format!("bad initial mode `{item}`, expected j:amp")))?;
                    let j: usize = j.trim().parse().map_err(|_| CliError::Config(format!("bad mode index `{j}`")))?;
                    let a: f64 = a.trim().parse().map_err(|_| CliError::Config(format!("bad amplitude `{a}`")))?;
                    if j == 0 || !a.is_finite() {
                        return Err(CliError::Config(format!("bad initial mode `{item}`")));
                    }
                    Ok((j, a))
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(InitialDatum::Sines(modes))
        }
    }
}

fn envelope(cmd: Command, cfg: &ResolvedConfig, started: Instant, notes: Vec<String>, result: ResultBody) -> Result<ResultEnvelope, CliError> {
    let timing_seconds = cfg.boolean("output.timing")?.then(|| started.elapsed().as_secs_f64());
    Ok(ResultEnvelope {
        schema_version: SCHEMA_VERSION,
        artifact_version: env!("CARGO_PKG_VERSION").to_string(),
        command: cmd.name().to_string(),
        config: cfg.clone(),
        timing_seconds,
        notes,
        result,
    })
}

pub fn cmd_simulate(cfg: &ResolvedConfig, exec: &Execution) -> Result<ResultEnvelope, CliError> {
    let started = Instant::now();
    let n_cells = cfg.usize("scheme.n_cells")?;
    let steps = cfg.usize("scheme.N")?;
    let t_final = cfg.float("scheme.T")?;
    let scheme = SchemeConfig::new(t_final, steps, parse_drift(cfg.string("scheme.f")?)?, parse_initial(cfg.string("scheme.v0")?)?)?;
    let ops = assemble(Mesh1D::new(n_cells)?)?;
    let modes = match cfg.usize("noise.J")? {
        0 => n_cells - 1,
        j => j,
    };
    let s = cfg.float("noise.s")?;
    let model = if cfg.boolean("noise.enabled")? { NoiseModel::new(s, modes)? } else { NoiseModel::disabled(s, modes)? };
    let table = BrownianTable::new(cfg.uint("noise.seed")?, 0, modes, steps.max(1), t_final)?;
    let keep_path = cfg.boolean("output.full_path")?;
    let tr = run_trajectory(&ops, &scheme, NoiseDriver::Table { table: &table, model: &model }, keep_path)?;

    output::write_file(&exec.out_dir, "trajectory.csv", &output::trajectory_csv(&tr.history))?;
    output::write_file(&exec.out_dir, "final_state.csv", &output::final_state_csv(&ops, &tr.final_state))?;
    if let Some(path) = &tr.path {
        output::write_file(&exec.out_dir, "path.csv", &output::path_csv(&ops, path, t_final / steps.max(1) as f64))?;
    }
    let last = tr.history.last().expect("history has the initial record");
    let summary = output::TrajectorySummary {
        n_cells,
        steps,
        t_final,
        final_norm_v: last.norm_v,
        final_norm_u: last.norm_u,
        max_norm_v: tr.history.iter().map(|r| r.norm_v).fold(0.0, f64::max),
    };
    let env = envelope(Command::Simulate, cfg, started, Vec::new(), ResultBody::Trajectory(summary))?;
    output::write_file(&exec.out_dir, "result.json", &output::to_json(&env)?)?;
    Ok(env)
}

/// Builds the study plan for `convergence-space` / `convergence-time`.
pub fn study_plan(cfg: &ResolvedConfig, kind: StudyKind) -> Result<StudyPlan, CliError> {
    let component = cfg.string("study.component")?;
    Ok(StudyPlan {
        kind,
        resolutions: cfg.list("study.ladder")?,
        reference: cfg.usize("study.reference")?,
        fixed: match kind {
            StudyKind::Spatial => cfg.usize("scheme.N")?,
            StudyKind::Temporal => cfg.usize("scheme.n_cells")?,
        },
        t_final: cfg.float("scheme.T")?,
        beta: cfg.float("study.beta")?,
        s: cfg.float("noise.s")?,
        modes: match cfg.usize("noise.J")? {
            0 => None,
            j => Some(j),
        },
        noise_enabled: cfg.boolean("noise.enabled")?,
        samples: cfg.usize("study.samples")?,
        seed: cfg.uint("noise.seed")?,
        drift: parse_drift(cfg.string("scheme.f")?)?,
        v0: parse_initial(cfg.string("scheme.v0")?)?,
        coupled: cfg.boolean("study.coupled")?,
        component: Component::from_name(component)
            .ok_or_else(|| CliError::Config(format!("study.component must be u or v, got `{component}`")))?,
    })
}

pub fn cmd_convergence(cfg: &ResolvedConfig, kind: StudyKind, exec: &Execution) -> Result<ResultEnvelope, CliError> {
    let started = Instant::now();
    let plan = study_plan(cfg, kind)?;
    let report = run_study(&plan, exec.workers)?;
    let mut notes = Vec::new();
    if kind == StudyKind::Spatial {
        notes.push("spatial ladder is a configurable choice; default 8..128 cells".to_string());
    }
    if !plan.coupled {
        notes.push("noise coupling disabled: resolutions use independent paths".to_string());
    }
    output::write_file(&exec.out_dir, "errors.csv", &output::errors_csv(&report))?;
    let rate = output::RateFile::new(&report, cfg, notes.clone());
    output::write_file(&exec.out_dir, "rate.json", &output::to_json(&rate)?)?;
    let cmd = match kind {
        StudyKind::Spatial => Command::ConvergenceSpace,
        StudyKind::Temporal => Command::ConvergenceTime,
    };
    let env = envelope(cmd, cfg, started, notes, ResultBody::Rate(report))?;
    output::write_file(&exec.out_dir, "result.json", &output::to_json(&env)?)?;
    Ok(env)
}

pub fn validate_params(cfg: &ResolvedConfig, workers: usize) -> Result<ValidateParams, CliError> {
    Ok(ValidateParams {
        beta: cfg.float("study.beta")?,
        s: cfg.float("noise.s")?,
        modes: match cfg.usize("noise.J")? {
            0 => 63,
            j => j,
        },
        seed: cfg.uint("noise.seed")?,
        samples: cfg.usize("study.samples")?.max(2),
        steps: cfg.usize("scheme.N")?.max(1),
        workers,
    })
}

/// Runs the oracle suite; writes `validate.json` and `result.json`.
pub fn cmd_validate(cfg: &ResolvedConfig, exec: &Execution, hooks: &ValidateHooks) -> Result<(ResultEnvelope, ValidationReport), CliError> {
    let started = Instant::now();
    let params = validate_params(cfg, exec.workers)?;
    let report = validate::run_checks(&params, hooks)?;
    output::write_file(&exec.out_dir, "validate.json", &output::to_json(&report)?)?;
    let env = envelope(Command::Validate, cfg, started, Vec::new(), ResultBody::Validation(report.clone()))?;
    output::write_file(&exec.out_dir, "result.json", &output::to_json(&env)?)?;
    Ok((env, report))
}

/// Loads a config file (if any) and applies `--set` overrides.
pub fn load_config(path: Option<&Path>, sets: &[String]) -> Result<RunConfig, CliError> {
    let mut cfg = match path {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    for s in sets {
        cfg.set(s)?;
    }
    Ok(cfg)
}
