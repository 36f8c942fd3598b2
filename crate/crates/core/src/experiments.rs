//! Monte Carlo strong-error studies.
//!
//! A study runs a ladder of resolutions and one reference resolution on the
//! same Brownian paths. Per sample, all resolutions advance in lockstep over
//! the fine time grid: each fine step's increments are read once and summed
//! into every resolution's pending coarse increment. The strong error at the
//! final time is `sqrt(E‖X_r - X_ref‖²)`, measured on the reference mesh, and
//! the rate is the least-squares slope of `log2 error` against `log2 h` (or
//! `log2 k`).
//!
//! Samples are distributed over a worker pool and reduced in ascending sample
//! order, so results do not depend on the number of workers.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{assemble, prolong, FemFunction, FemOperators, Mesh1D};
use crate::noise::{mean_and_stderr, noise_load_vector, BrownianTable, FineStream, NoiseModel};
use crate::spectral::check_admissibility;
use crate::stepper::{init, Drift, InitialDatum, SchemeConfig, Stepper, TrajectoryState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StudyKind {
    Spatial,
    Temporal,
}

/// Which variable the strong error is measured on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    /// The recovered solution `Uⁿ`.
    U,
    /// The parabolic variable `Vⁿ`.
    V,
}

impl Component {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "u" => Some(Self::U),
            "v" => Some(Self::V),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StudyPlan {
    pub kind: StudyKind,
    /// Mesh cell counts (spatial) or step counts (temporal).
    pub resolutions: Vec<usize>,
    /// Reference cell count (spatial) or step count (temporal).
    pub reference: usize,
    /// Step count for spatial studies, cell count for temporal studies.
    pub fixed: usize,
    pub t_final: f64,
    pub beta: f64,
    pub s: f64,
    /// Noise truncation; `None` means the interior-node count of the finest mesh.
    pub modes: Option<usize>,
    pub noise_enabled: bool,
    pub samples: usize,
    pub seed: u64,
    pub drift: Drift,
    pub v0: InitialDatum,
    /// `false` gives every resolution its own independent noise (diagnostic).
    pub coupled: bool,
    pub component: Component,
}

impl StudyPlan {
    /// Spatial rate experiment: β = 1, s = 1/2 + 0.0005, k = 0.01, reference 1024 cells.
    pub fn spatial_protocol() -> Self {
        Self {
            kind: StudyKind::Spatial,
            resolutions: vec![8, 16, 32, 64, 128],
            reference: 1024,
            fixed: 100,
            t_final: 1.0,
            beta: 1.0,
            s: 0.5005,
            modes: None,
            noise_enabled: true,
            samples: 1000,
            seed: 20250101,
            drift: Drift::Identity,
            v0: InitialDatum::Sines(vec![(2, 1.0)]),
            coupled: true,
            component: Component::U,
        }
    }

    /// Temporal rate experiment: β = 0.5, s = 0.0005, h = 2⁻⁶, k_ref = 2⁻¹⁶.
    pub fn temporal_protocol() -> Self {
        Self {
            kind: StudyKind::Temporal,
            resolutions: (6..=12).map(|e| 1usize << e).collect(),
            reference: 1 << 16,
            fixed: 64,
            t_final: 1.0,
            beta: 0.5,
            s: 0.0005,
            modes: None,
            noise_enabled: true,
            samples: 100,
            seed: 20250102,
            drift: Drift::Identity,
            v0: InitialDatum::Sines(vec![(2, 1.0)]),
            coupled: true,
            component: Component::U,
        }
    }

    fn finest_cells(&self) -> usize {
        match self.kind {
            StudyKind::Spatial => self.reference,
            StudyKind::Temporal => self.fixed,
        }
    }

    pub fn noise_modes(&self) -> usize {
        self.modes.unwrap_or(self.finest_cells() - 1)
    }

    /// Mesh width or time step of resolution `r`.
    pub fn step_size(&self, r: usize) -> f64 {
        match self.kind {
            StudyKind::Spatial => 1.0 / r as f64,
            StudyKind::Temporal => self.t_final / r as f64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolutions.is_empty() {
            return Err(Error::InvalidInput("empty resolution ladder".into()));
        }
        if self.samples == 0 {
            return Err(Error::InvalidInput("study needs at least one sample".into()));
        }
        if self.t_final <= 0.0 || !self.t_final.is_finite() {
            return Err(Error::InvalidInput(format!("final time must be positive, got {}", self.t_final)));
        }
        if self.fixed == 0 || (self.kind == StudyKind::Temporal && self.fixed < 2) {
            return Err(Error::InvalidInput(format!("invalid fixed parameter {}", self.fixed)));
        }
        if self.kind == StudyKind::Spatial && self.resolutions.iter().any(|&r| r < 2) {
            return Err(Error::InvalidInput("meshes need at least 2 cells".into()));
        }
        for &r in &self.resolutions {
            if r == 0 || r >= self.reference || !self.reference.is_multiple_of(r) || !(self.reference / r).is_power_of_two() {
                return Err(Error::NotNested { fine: self.reference, coarse: r });
            }
        }
        if self.noise_modes() == 0 {
            return Err(Error::InvalidInput("noise needs at least one mode".into()));
        }
        if self.noise_enabled {
            let rep = check_admissibility(self.beta, self.s, 1);
            if !rep.admissible {
                return Err(Error::Inadmissible { beta: self.beta, bound: rep.bound });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolutionError {
    pub resolution: usize,
    /// `h` or `k`.
    pub step: f64,
    pub error: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// Largest absolute residual of the log2 fit.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub kind: StudyKind,
    pub component: Component,
    pub reference: usize,
    pub samples: usize,
    pub errors: Vec<ResolutionError>,
    pub fit: RateFit,
    /// Standard error of the slope propagated from the per-point standard errors.
    pub slope_stderr: f64,
}

/// Ordinary least squares of `log2 error` on `log2 step`.
pub fn fit_rate(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 2 {
        return Err(Error::InvalidInput("rate fit needs at least 2 points".into()));
    }
    if let Some(&(s, e)) = points.iter().find(|(s, e)| e.is_nan() || s.is_nan() || *e <= 0.0 || *s <= 0.0) {
        return Err(Error::InvalidInput(format!("rate fit needs positive steps and errors, got ({s}, {e})")));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.log2()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.log2()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidInput("rate fit needs at least two distinct steps".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).abs()).fold(0.0, f64::max);
    Ok(RateFit { slope, intercept, residual })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McError {
    pub error: f64,
    pub stderr: f64,
}

/// Root mean square of `‖a - b‖` over paired states on a common mesh, with a
/// delta-method standard error (zero for a single sample).
pub fn mc_error(pairs: &[(FemFunction, FemFunction)], ops: &FemOperators) -> Result<McError> {
    let squares = pairs
        .iter()
        .map(|(a, b)| {
            if a.mesh != b.mesh {
                return Err(Error::MeshMismatch { expected: b.coeffs.len(), found: a.coeffs.len() });
            }
            let d = FemFunction::new(a.mesh, a.coeffs.iter().zip(&b.coeffs).map(|(x, y)| x - y).collect())?;
            Ok(ops.l2_norm(&d)?.powi(2))
        })
        .collect::<Result<Vec<_>>>()?;
    mc_error_from_squares(&squares)
}

pub fn mc_error_from_squares(squares: &[f64]) -> Result<McError> {
    if squares.is_empty() {
        return Err(Error::InvalidInput("no samples".into()));
    }
    let (mean, se) = mean_and_stderr(squares);
    let error = mean.sqrt();
    let stderr = if error > 0.0 { se / (2.0 * error) } else { 0.0 };
    Ok(McError { error, stderr })
}

struct Lane<'a> {
    ops: &'a FemOperators,
    ratio: usize,
    source: usize,
    stepper: Stepper<'a>,
    state: TrajectoryState,
    acc: Vec<f64>,
}

/// Runs one sample; returns `(‖ΔU‖², ‖ΔV‖²)` per ladder entry.
fn run_sample(
    plan: &StudyPlan,
    lane_ops: &[&FemOperators],
    ref_ops: &FemOperators,
    model: &NoiseModel,
    n_fine: usize,
    sample: u64,
) -> Result<Vec<(f64, f64)>> {
    let modes = model.modes();
    let n_lanes = plan.resolutions.len() + 1;
    let cfg = |steps: usize| SchemeConfig::new(plan.t_final, steps, plan.drift.clone(), plan.v0.clone());

    let mut lanes = Vec::with_capacity(n_lanes);
    for idx in 0..n_lanes {
        let (ops, steps) = match plan.kind {
            StudyKind::Spatial => (if idx == 0 { ref_ops } else { lane_ops[idx - 1] }, plan.fixed),
            StudyKind::Temporal => (ref_ops, if idx == 0 { plan.reference } else { plan.resolutions[idx - 1] }),
        };
        let c = cfg(steps)?;
        lanes.push(Lane {
            ops,
            ratio: n_fine / steps,
            source: if plan.coupled { 0 } else { idx },
            stepper: Stepper::new(ops, c.k(), plan.drift.clone())?,
            state: init(ops, &c)?,
            acc: vec![0.0; modes],
        });
    }

    let n_streams = if plan.coupled { 1 } else { n_lanes };
    let mut streams: Vec<FineStream> = (0..n_streams)
        .map(|i| Ok(BrownianTable::new(plan.seed, sample, modes, n_fine, plan.t_final)?.with_salt(i as u64).stream()))
        .collect::<Result<_>>()?;
    let mut fine = vec![vec![0.0; modes]; n_streams];

    for m in 0..n_fine {
        if model.enabled() {
            for (s, buf) in streams.iter_mut().zip(fine.iter_mut()) {
                s.next_into(buf);
            }
        }
        for lane in lanes.iter_mut() {
            if model.enabled() {
                for (a, f) in lane.acc.iter_mut().zip(&fine[lane.source]) {
                    *a += f;
                }
            }
            if (m + 1) % lane.ratio != 0 {
                continue;
            }
            if model.enabled() {
                model.scale_increments(&mut lane.acc);
                let load = noise_load_vector(lane.ops, model, &lane.acc)?;
                lane.stepper.advance(&mut lane.state, Some(&load))?;
                lane.acc.iter_mut().for_each(|x| *x = 0.0);
            } else {
                lane.stepper.advance(&mut lane.state, None)?;
            }
        }
    }

    let ref_mesh = ref_ops.mesh();
    let reference = &lanes[0].state;
    let dist = |a: &FemFunction, b: &FemFunction| -> Result<f64> {
        let p = prolong(ref_mesh, a)?;
        let d = FemFunction::new(ref_mesh, p.coeffs.iter().zip(&b.coeffs).map(|(x, y)| x - y).collect())?;
        Ok(ref_ops.l2_norm(&d)?.powi(2))
    };
    lanes[1..]
        .iter()
        .map(|l| Ok((dist(&l.state.u, &reference.u)?, dist(&l.state.v, &reference.v)?)))
        .collect()
}

pub(crate) fn build_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot build worker pool: {e}")))
}

/// Runs the study and returns the rate reports for `U` and `V`, in that order.
/// `workers = 0` uses all available cores.
pub fn run_study_both(plan: &StudyPlan, workers: usize) -> Result<(RateReport, RateReport)> {
    plan.validate()?;
    let modes = plan.noise_modes();
    let model = if plan.noise_enabled { NoiseModel::new(plan.s, modes)? } else { NoiseModel::disabled(plan.s, modes)? };

    let (ref_ops, lane_ops): (FemOperators, Vec<FemOperators>) = match plan.kind {
        StudyKind::Spatial => (
            assemble(Mesh1D::new(plan.reference)?)?,
            plan.resolutions.iter().map(|&r| assemble(Mesh1D::new(r)?)).collect::<Result<_>>()?,
        ),
        StudyKind::Temporal => (assemble(Mesh1D::new(plan.fixed)?)?, Vec::new()),
    };
    let lane_refs: Vec<&FemOperators> = lane_ops.iter().collect();
    let n_fine = match plan.kind {
        StudyKind::Spatial => plan.fixed,
        StudyKind::Temporal => plan.reference,
    };

    let pool = build_pool(workers)?;
    let per_sample: Vec<Vec<(f64, f64)>> = pool.install(|| {
        (0..plan.samples as u64)
            .into_par_iter()
            .map(|i| run_sample(plan, &lane_refs, &ref_ops, &model, n_fine, i))
            .collect::<Result<Vec<_>>>()
    })?;

    let report = |component: Component| -> Result<RateReport> {
        let errors = plan
            .resolutions
            .iter()
            .enumerate()
            .map(|(idx, &r)| {
                let squares: Vec<f64> = per_sample
                    .iter()
                    .map(|s| match component {
                        Component::U => s[idx].0,
                        Component::V => s[idx].1,
                    })
                    .collect();
                let e = mc_error_from_squares(&squares)?;
                Ok(ResolutionError { resolution: r, step: plan.step_size(r), error: e.error, stderr: e.stderr })
            })
            .collect::<Result<Vec<_>>>()?;
        let points: Vec<(f64, f64)> = errors.iter().map(|e| (e.step, e.error)).collect();
        let fit = fit_rate(&points)?;
        Ok(RateReport {
            kind: plan.kind,
            component,
            reference: plan.reference,
            samples: plan.samples,
            slope_stderr: slope_stderr(&errors),
            errors,
            fit,
        })
    };
    Ok((report(Component::U)?, report(Component::V)?))
}

/// Runs the study and reports the component selected in the plan.
pub fn run_study(plan: &StudyPlan, workers: usize) -> Result<RateReport> {
    let (u, v) = run_study_both(plan, workers)?;
    Ok(match plan.component {
        Component::U => u,
        Component::V => v,
    })
}

pub fn run_spatial_study(plan: &StudyPlan, workers: usize) -> Result<RateReport> {
    if plan.kind != StudyKind::Spatial {
        return Err(Error::InvalidInput("plan is not a spatial study".into()));
    }
    run_study(plan, workers)
}

pub fn run_temporal_study(plan: &StudyPlan, workers: usize) -> Result<RateReport> {
    if plan.kind != StudyKind::Temporal {
        return Err(Error::InvalidInput("plan is not a temporal study".into()));
    }
    run_study(plan, workers)
}

fn slope_stderr(errors: &[ResolutionError]) -> f64 {
    let xs: Vec<f64> = errors.iter().map(|e| e.step.log2()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    xs.iter()
        .zip(errors)
        .map(|(x, e)| {
            let w = (x - mx) / sxx;
            let sigma = if e.error > 0.0 { e.stderr / (e.error * std::f64::consts::LN_2) } else { 0.0 };
            (w * sigma).powi(2)
        })
        .sum::<f64>()
        .sqrt()
}

/// Empirical `E‖Vⁿ‖²` and `E‖Uⁿ‖²` for `n = 0..=N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanSquareHistory {
    pub v: Vec<f64>,
    pub u: Vec<f64>,
}

impl MeanSquareHistory {
    pub fn max_v(&self) -> f64 {
        self.v.iter().copied().fold(0.0, f64::max)
    }
}

/// Mean-square norms along trajectories of the fully discrete scheme.
pub fn mean_square_history(
    ops: &FemOperators,
    cfg: &SchemeConfig,
    model: &NoiseModel,
    samples: usize,
    seed: u64,
    workers: usize,
) -> Result<MeanSquareHistory> {
    use crate::stepper::{run_trajectory, NoiseDriver};
    if samples == 0 {
        return Err(Error::InvalidInput("need at least one sample".into()));
    }
    let pool = build_pool(workers)?;
    let runs: Vec<Vec<(f64, f64)>> = pool.install(|| {
        (0..samples as u64)
            .into_par_iter()
            .map(|i| {
                let table = BrownianTable::new(seed, i, model.modes(), cfg.steps.max(1), cfg.t_final)?;
                let tr = run_trajectory(ops, cfg, NoiseDriver::Table { table: &table, model }, false)?;
                Ok(tr.history.iter().map(|r| (r.norm_v * r.norm_v, r.norm_u * r.norm_u)).collect())
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let len = cfg.steps + 1;
    let mut v = vec![0.0; len];
    let mut u = vec![0.0; len];
    for run in &runs {
        for (n, (a, b)) in run.iter().enumerate() {
            v[n] += a;
            u[n] += b;
        }
    }
    let s = samples as f64;
    v.iter_mut().chain(u.iter_mut()).for_each(|x| *x /= s);
    Ok(MeanSquareHistory { v, u })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_laws() {
        let lin: Vec<(f64, f64)> = [0.5, 0.25, 0.125, 0.0625].iter().map(|&h| (h, 3.0 * h)).collect();
        let f = fit_rate(&lin).unwrap();
        assert!((f.slope - 1.0).abs() < 1e-12);
        assert!((f.intercept - 3f64.log2()).abs() < 1e-12);
        let quad: Vec<(f64, f64)> = [0.5, 0.25, 0.125].iter().map(|&h| (h, 0.7 * h * h)).collect();
        assert!((fit_rate(&quad).unwrap().slope - 2.0).abs() < 1e-12);
    }

    #[test]
    fn perturbed_point_moves_slope_little() {
        // log2(1.1) = 0.1375; OLS weight of the end point is 1/2 per unit of log2 h
        let pts = [(0.5, 0.5), (0.25, 0.25 * 1.1), (0.125, 0.125)];
        let f = fit_rate(&pts).unwrap();
        assert!((f.slope - 1.0).abs() < 0.15, "{}", f.slope);
        let pts = [(0.5, 0.5 * 1.1), (0.25, 0.25), (0.125, 0.125)];
        let f = fit_rate(&pts).unwrap();
        assert!((f.slope - 1.0).abs() < 0.15, "{}", f.slope);
        assert!((f.slope - (1.0 + 1.1f64.log2() / 2.0)).abs() < 1e-12);
    }

    #[test]
    fn fit_rejects_bad_input() {
        assert!(fit_rate(&[(0.5, 1.0)]).is_err());
        assert!(fit_rate(&[(0.5, 1.0), (0.25, 0.0)]).is_err());
        assert!(fit_rate(&[(0.5, 1.0), (0.25, -1.0)]).is_err());
        assert!(fit_rate(&[(0.5, 1.0), (0.5, 2.0)]).is_err());
    }

    #[test]
    fn mc_error_cases() {
        let ops = assemble(Mesh1D::new(16).unwrap()).unwrap();
        let a = ops.l2_project_sines(&[(1, 1.0)]).unwrap();
        let z = mc_error(&[(a.clone(), a.clone())], &ops).unwrap();
        assert_eq!(z.error, 0.0);
        assert!(mc_error(&[], &ops).is_err());

        // d = hat at node 5: ‖d‖ = sqrt(2h/3)
        let hat = FemFunction::hat(ops.mesh(), 5);
        let b = FemFunction::new(ops.mesh(), a.coeffs.iter().zip(&hat.coeffs).map(|(x, y)| x + y).collect()).unwrap();
        let one = mc_error(&[(b.clone(), a.clone())], &ops).unwrap();
        assert!((one.error - (2.0 / 48.0f64).sqrt()).abs() < 1e-15);
        assert_eq!(one.stderr, 0.0);
        let many = mc_error(&vec![(b, a); 4], &ops).unwrap();
        assert!((many.error - (2.0 / 48.0f64).sqrt()).abs() < 1e-15);
        assert_eq!(many.stderr, 0.0);
    }

    #[test]
    fn plan_validation() {
        let mut p = StudyPlan::spatial_protocol();
        assert!(p.validate().is_ok());
        p.resolutions = vec![8, 24];
        assert!(matches!(p.validate(), Err(Error::NotNested { .. })));
        p.resolutions = vec![8, 1024];
        assert!(p.validate().is_err());
        let mut p = StudyPlan::spatial_protocol();
        p.s = 0.5;
        assert!(matches!(p.validate(), Err(Error::Inadmissible { .. })));
        p.noise_enabled = false;
        assert!(p.validate().is_ok());
        let mut p = StudyPlan::temporal_protocol();
        assert!(p.validate().is_ok());
        assert_eq!(p.noise_modes(), 63);
        p.resolutions.push(3);
        assert!(p.validate().is_err());
    }

    #[test]
    fn study_kind_is_checked() {
        let mut p = StudyPlan::temporal_protocol();
        p.samples = 1;
        assert!(run_spatial_study(&p, 1).is_err());
    }

    #[test]
    fn deterministic_spatial_single_sample_is_reproducible() {
        let mut p = StudyPlan::spatial_protocol();
        p.noise_enabled = false;
        p.samples = 1;
        p.reference = 256;
        p.resolutions = vec![8, 16, 32];
        p.fixed = 20;
        p.t_final = 0.1;
        p.drift = Drift::Zero;
        p.v0 = InitialDatum::Sines(vec![(1, 1.0)]);
        let a = run_spatial_study(&p, 1).unwrap();
        let b = run_spatial_study(&p, 3).unwrap();
        assert_eq!(a, b);
        assert!((1.8..=2.2).contains(&a.fit.slope), "{}", a.fit.slope);
    }
}
