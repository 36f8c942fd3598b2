//! Oracle checks run by `sbbm validate`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fem::{assemble, FemOperators, Mesh1D, SymTridiag};
use crate::noise::{wiener_norm_check, BrownianTable, NoiseModel};
use crate::spectral::{check_admissibility, discrete_ou_variance, eigenvalue, make_basis, ou_moments};
use crate::stepper::{run_trajectory, Drift, InitialDatum, NoiseDriver, SchemeConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub threshold: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub checks: Vec<Check>,
}

#[derive(Debug, Clone)]
pub struct ValidateParams {
    pub beta: f64,
    pub s: f64,
    /// Noise modes for the isometry check.
    pub modes: usize,
    pub seed: u64,
    pub samples: usize,
    /// Steps of the deterministic and OU checks.
    pub steps: usize,
    pub workers: usize,
}

/// Fault injection for exercising the checks themselves.
#[derive(Debug, Clone, Default)]
pub struct ValidateHooks {
    /// Multiplies the first mass-matrix diagonal entry.
    pub mass_diag_scale: Option<f64>,
}

pub const MATRIX_SIZES: [usize; 4] = [2, 4, 64, 1024];
pub const MATRIX_TOL: f64 = 1e-14;
const OU_MESH: usize = 64;
const OU_MODES: usize = 16;
const OU_T: f64 = 0.25;
const DET_MESH: usize = 64;
const DET_T: f64 = 0.05;

fn operators(n: usize, hooks: &ValidateHooks) -> Result<FemOperators> {
    let ops = assemble(Mesh1D::new(n)?)?;
    match hooks.mass_diag_scale {
        None => Ok(ops),
        Some(scale) => {
            let mut mass: SymTridiag = ops.mass().clone();
            mass.diag[0] *= scale;
            FemOperators::from_matrices(ops.mesh(), mass, ops.stiffness().clone())
        }
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

pub fn check_matrices(hooks: &ValidateHooks) -> Result<Check> {
    let mut worst: f64 = 0.0;
    for n in MATRIX_SIZES {
        let ops = operators(n, hooks)?;
        let nf = n as f64;
        let (md, mo, kd, ko) = (2.0 / (3.0 * nf), 1.0 / (6.0 * nf), 2.0 * nf, -nf);
        for &d in &ops.mass().diag {
            worst = worst.max(rel(d, md));
        }
        for &o in &ops.mass().off {
            worst = worst.max(rel(o, mo));
        }
        for &d in &ops.stiffness().diag {
            worst = worst.max(rel(d, kd));
        }
        for &o in &ops.stiffness().off {
            worst = worst.max(rel(o, ko));
        }
    }
    Ok(Check {
        name: "matrix_entries".into(),
        passed: worst <= MATRIX_TOL,
        measured: worst,
        threshold: MATRIX_TOL,
        detail: format!("max relative deviation from 2h/3, h/6, 2/h, -1/h over n_cells {MATRIX_SIZES:?}"),
    })
}

fn check_factorizations() -> Result<Check> {
    let mut failures = 0usize;
    for n in [2, 64, 1024] {
        let ops = assemble(Mesh1D::new(n)?)?;
        failures += ops.stiffness().cholesky().is_err() as usize;
        for k in [1e-8, 1e-2, 1.0, 1e4] {
            failures += ops.implicit_factor(k).is_err() as usize;
        }
    }
    Ok(Check {
        name: "spd_factorizations".into(),
        passed: failures == 0,
        measured: failures as f64,
        threshold: 0.0,
        detail: "Cholesky of M, K, M+K and M+kK".into(),
    })
}

fn check_admissible(beta: f64, s: f64) -> Check {
    let rep = check_admissibility(beta, s, 10_000);
    let relation = if rep.admissible { "<" } else { ">=" };
    Check {
        name: "admissibility".into(),
        passed: rep.admissible,
        measured: beta,
        threshold: rep.bound,
        detail: format!("beta = {beta} {relation} s + 1 - d/2 = {}", rep.bound),
    }
}

fn check_isometry(p: &ValidateParams) -> Result<Check> {
    let model = NoiseModel::new(p.s, p.modes)?;
    let st = wiener_norm_check(&model, 1.0, p.samples, p.seed)?;
    let dev = (st.mean - st.expected).abs() / st.stderr;
    Ok(Check {
        name: "ito_isometry".into(),
        passed: dev <= 3.0,
        measured: dev,
        threshold: 3.0,
        detail: format!("E|W(1)|^2 = {} vs Tr_J(Q) = {} (standard errors)", st.mean, st.expected),
    })
}

/// Per-mode variance of the zero-drift scheme against the closed-form
/// discrete recursion (within 3 SE) and the continuous OU variance (within
/// 3 SE plus the discretization bias).
pub fn check_ou_variance(p: &ValidateParams) -> Result<Check> {
    let ops = assemble(Mesh1D::new(OU_MESH)?)?;
    let model = NoiseModel::new(p.s, OU_MODES)?;
    let cfg = SchemeConfig::new(OU_T, p.steps, Drift::Zero, InitialDatum::Zero)?;
    let pool = crate::experiments::build_pool(p.workers)?;
    let squares: Vec<Vec<f64>> = pool.install(|| {
        (0..p.samples as u64)
            .into_par_iter()
            .map(|i| {
                let table = BrownianTable::new(p.seed, i, OU_MODES, p.steps, OU_T)?.with_salt(1);
                let tr = run_trajectory(&ops, &cfg, NoiseDriver::Table { table: &table, model: &model }, false)?;
                (1..=OU_MODES).map(|j| Ok(ops.modal_coefficient(&tr.final_state.v, j)?.powi(2))).collect()
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let basis = make_basis(OU_MODES)?;
    let cont = ou_moments(&basis, &model, &[0.0; OU_MODES], OU_T)?;
    let n = p.samples as f64;
    let mut worst: f64 = 0.0;
    let mut passed = true;
    for j in 1..=OU_MODES {
        let col: Vec<f64> = squares.iter().map(|s| s[j - 1]).collect();
        let mean = col.iter().sum::<f64>() / n;
        let se = (col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
        let disc = discrete_ou_variance(OU_MESH, j, model.gamma_of(j), cfg.k(), p.steps);
        let bias = (disc - cont[j - 1].var).abs();
        let z = (mean - disc).abs() / se;
        worst = worst.max(z);
        passed &= z <= 3.0 && (mean - cont[j - 1].var).abs() <= 3.0 * se + bias;
    }
    Ok(Check {
        name: "ou_variance".into(),
        passed,
        measured: worst,
        threshold: 3.0,
        detail: format!("modes 1..={OU_MODES}, T = {OU_T}, max deviation in standard errors from the discrete recursion"),
    })
}

/// Relative L2 error of `U` against `e^{at} sin(2πx)/(1+4π²)` and the
/// leading-order bound `2 (λ t (2πh)²/12 + a² t k / 2)`.
pub fn deterministic_error(n_cells: usize, steps: usize, t_final: f64) -> Result<(f64, f64)> {
    let ops = assemble(Mesh1D::new(n_cells)?)?;
    let cfg = SchemeConfig::new(t_final, steps, Drift::Identity, InitialDatum::Sines(vec![(2, 1.0)]))?;
    let tr = run_trajectory(&ops, &cfg, NoiseDriver::Off, false)?;
    let lam = eigenvalue(2);
    let a = -lam + 1.0 / (1.0 + lam);
    let amp = (a * t_final).exp() / (1.0 + lam);
    let err = ops.l2_error_against(&tr.final_state.u, |x| amp * (2.0 * PI * x).sin(), 5)?;
    let rel_err = err / (amp / 2f64.sqrt());
    let h = ops.mesh().h();
    let bound = 2.0 * (lam * t_final * (2.0 * PI * h).powi(2) / 12.0 + a * a * t_final * cfg.k() / 2.0);
    Ok((rel_err, bound))
}

fn check_deterministic(p: &ValidateParams) -> Result<Check> {
    let (err, bound) = deterministic_error(DET_MESH, p.steps, DET_T)?;
    Ok(Check {
        name: "deterministic_exact".into(),
        passed: err <= bound,
        measured: err,
        threshold: bound,
        detail: format!("relative L2 error of U at T = {DET_T}, n_cells = {DET_MESH}, N = {}", p.steps),
    })
}

fn check_refinement(seed: u64) -> Result<Check> {
    let model = NoiseModel::new(0.5005, 9)?;
    let table = BrownianTable::new(seed, 0, 9, 64, 1.0)?;
    let mut mismatches = 0usize;
    for ratio in [2usize, 4, 8] {
        for n in 1..=(64 / ratio) {
            let coarse = table.sample_increment(&model, n, ratio as f64 / 64.0)?;
            let mut sum = vec![0.0; 9];
            let mut fine = vec![0.0; 9];
            for m in (n - 1) * ratio..n * ratio {
                table.fine_increments(m, &mut fine)?;
                sum.iter_mut().zip(&fine).for_each(|(s, f)| *s += f);
            }
            model.scale_increments(&mut sum);
            mismatches += (coarse != sum) as usize;
        }
    }
    Ok(Check {
        name: "brownian_refinement".into(),
        passed: mismatches == 0,
        measured: mismatches as f64,
        threshold: 0.0,
        detail: "coarse increments equal sums of fine increments bit for bit".into(),
    })
}

pub fn run_checks(p: &ValidateParams, hooks: &ValidateHooks) -> Result<ValidationReport> {
    let checks = vec![
        check_matrices(hooks)?,
        check_factorizations()?,
        check_admissible(p.beta, p.s),
        check_isometry(p)?,
        check_ou_variance(p)?,
        check_deterministic(p)?,
        check_refinement(p.seed)?,
    ];
    Ok(ValidationReport { passed: checks.iter().all(|c| c.passed), checks })
}
