//! Fully discrete semi-implicit scheme.
//!
//! One step solves
//!
//! ```text
//! (M + kK) Vⁿ = M Vⁿ⁻¹ + k M f(Uⁿ⁻¹) + bⁿ,     (M + K) Uⁿ = M Vⁿ
//! ```
//!
//! where `bⁿ` is the load vector of the noise increment over `[t_{n-1}, t_n]`.
//! Diffusion is implicit, the drift `f` explicit and applied at the nodes.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::{FemFunction, FemOperators, TridiagCholesky};
use crate::noise::{noise_load_vector, BrownianTable, NoiseModel};

/// Drift `f` of the parabolic equation, applied pointwise.
#[derive(Clone)]
pub enum Drift {
    Zero,
    Identity,
    /// `f(u) = sin u`
    Sine,
    /// `f(u) = tanh u`
    Tanh,
    Custom { name: String, lipschitz: f64, f: Arc<dyn Fn(f64) -> f64 + Send + Sync> },
}

impl fmt::Debug for Drift {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Drift {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "zero" => Some(Self::Zero),
            "identity" => Some(Self::Identity),
            "sin" => Some(Self::Sine),
            "tanh" => Some(Self::Tanh),
            _ => None,
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Self::Zero => "zero",
            Self::Identity => "identity",
            Self::Sine => "sin",
            Self::Tanh => "tanh",
            Self::Custom { name, .. } => name,
        }
    }

    /// Global Lipschitz constant `K_f`.
    pub fn lipschitz(&self) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Identity | Self::Sine | Self::Tanh => 1.0,
            Self::Custom { lipschitz, .. } => *lipschitz,
        }
    }

    pub fn apply(&self, u: f64) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Identity => u,
            Self::Sine => u.sin(),
            Self::Tanh => u.tanh(),
            Self::Custom { f, .. } => f(u),
        }
    }
}

/// Initial datum `v₀ = u₀ - Δu₀`.
#[derive(Clone)]
pub enum InitialDatum {
    Zero,
    /// `Σ amp · sin(jπx)` as `(j, amp)` pairs.
    Sines(Vec<(usize, f64)>),
    Function(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for InitialDatum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Zero => f.write_str("Zero"),
            Self::Sines(m) => f.debug_tuple("Sines").field(m).finish(),
            Self::Function(_) => f.write_str("Function(..)"),
        }
    }
}

impl InitialDatum {
    pub fn project(&self, ops: &FemOperators) -> Result<FemFunction> {
        match self {
            Self::Zero => Ok(FemFunction::zeros(ops.mesh())),
            Self::Sines(modes) => ops.l2_project_sines(modes),
            Self::Function(g) => ops.l2_project(|x| g(x)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SchemeConfig {
    pub t_final: f64,
    pub steps: usize,
    pub drift: Drift,
    pub v0: InitialDatum,
}

impl SchemeConfig {
    pub fn new(t_final: f64, steps: usize, drift: Drift, v0: InitialDatum) -> Result<Self> {
        if t_final <= 0.0 || !t_final.is_finite() {
            return Err(Error::InvalidInput(format!("final time must be positive, got {t_final}")));
        }
        Ok(Self { t_final, steps, drift, v0 })
    }

    /// Time step `T/N`; infinite when `N = 0`.
    pub fn k(&self) -> f64 {
        self.t_final / self.steps as f64
    }
}

/// `(Vⁿ, Uⁿ)` at step `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryState {
    pub n: usize,
    pub v: FemFunction,
    pub u: FemFunction,
}

/// `V⁰ = P_h v₀`, `U⁰ = (P_h + A_h)⁻¹ V⁰`.
pub fn init(ops: &FemOperators, cfg: &SchemeConfig) -> Result<TrajectoryState> {
    let v = cfg.v0.project(ops)?;
    let u = ops.elliptic_recover(&v)?;
    Ok(TrajectoryState { n: 0, v, u })
}

/// Reusable stepper holding the `M + kK` factorization and scratch space.
pub struct Stepper<'a> {
    ops: &'a FemOperators,
    drift: Drift,
    k: f64,
    implicit: TridiagCholesky,
    rhs: Vec<f64>,
    scratch: Vec<f64>,
}

impl<'a> Stepper<'a> {
    pub fn new(ops: &'a FemOperators, k: f64, drift: Drift) -> Result<Self> {
        let implicit = ops.implicit_factor(k)?;
        let n = ops.mesh().interior_nodes();
        Ok(Self { ops, drift, k, implicit, rhs: vec![0.0; n], scratch: vec![0.0; n] })
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    /// Advances `state` by one step. `noise_load` is `bⁿ`, or `None` for no noise.
    pub fn advance(&mut self, state: &mut TrajectoryState, noise_load: Option<&[f64]>) -> Result<()> {
        let n = self.rhs.len();
        if state.v.coeffs.len() != n || state.v.mesh != self.ops.mesh() {
            return Err(Error::MeshMismatch { expected: n, found: state.v.coeffs.len() });
        }
        let mass = self.ops.mass();

        // scratch <- V + k f(U)
        for i in 0..n {
            let fu = self.drift.apply(state.u.coeffs[i]);
            if !fu.is_finite() {
                return Err(Error::Numerical(format!("drift produced {fu} at node {}", i + 1)));
            }
            self.scratch[i] = state.v.coeffs[i] + self.k * fu;
        }
        mass.mul_into(&self.scratch, &mut self.rhs);
        if let Some(b) = noise_load {
            if b.len() != n {
                return Err(Error::MeshMismatch { expected: n, found: b.len() });
            }
            for (r, bi) in self.rhs.iter_mut().zip(b) {
                *r += bi;
            }
        }
        self.implicit.solve_in_place(&mut self.rhs);
        std::mem::swap(&mut state.v.coeffs, &mut self.rhs);

        mass.mul_into(&state.v.coeffs, &mut state.u.coeffs);
        self.ops.elliptic_factor().solve_in_place(&mut state.u.coeffs);
        state.n += 1;
        Ok(())
    }
}

/// One step from `state`. Builds the implicit factorization on every call;
/// use [`Stepper`] for repeated steps.
pub fn step(ops: &FemOperators, cfg: &SchemeConfig, state: &TrajectoryState, noise_load: Option<&[f64]>) -> Result<TrajectoryState> {
    let mut stepper = Stepper::new(ops, cfg.k(), cfg.drift.clone())?;
    let mut next = state.clone();
    stepper.advance(&mut next, noise_load)?;
    Ok(next)
}

/// Source of noise for a trajectory.
#[derive(Debug, Clone, Copy)]
pub enum NoiseDriver<'a> {
    Off,
    /// Increments read from `table`, whose fine step must divide `k`.
    Table { table: &'a BrownianTable, model: &'a NoiseModel },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormRecord {
    pub n: usize,
    pub t: f64,
    pub norm_v: f64,
    pub norm_u: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub final_state: TrajectoryState,
    pub history: Vec<NormRecord>,
    /// All states `0..=N`, only when requested.
    pub path: Option<Vec<TrajectoryState>>,
}

/// Runs `cfg.steps` steps from `V⁰ = P_h v₀`, recording `‖Vⁿ‖` and `‖Uⁿ‖`.
pub fn run_trajectory(ops: &FemOperators, cfg: &SchemeConfig, noise: NoiseDriver<'_>, keep_path: bool) -> Result<Trajectory> {
    let mut state = init(ops, cfg)?;
    let record = |s: &TrajectoryState, t: f64| -> Result<NormRecord> {
        let (norm_v, norm_u) = (ops.l2_norm(&s.v)?, ops.l2_norm(&s.u)?);
        if !(norm_v.is_finite() && norm_u.is_finite()) {
            return Err(Error::Numerical(format!("non-finite norm at step {}", s.n)));
        }
        Ok(NormRecord { n: s.n, t, norm_v, norm_u })
    };
    let mut history = vec![record(&state, 0.0)?];
    let mut path = keep_path.then(|| vec![state.clone()]);
    if cfg.steps == 0 {
        return Ok(Trajectory { final_state: state, history, path });
    }

    let k = cfg.k();
    let mut stepper = Stepper::new(ops, k, cfg.drift.clone())?;
    let mut feed = match noise {
        NoiseDriver::Off => None,
        NoiseDriver::Table { table, model } => {
            if model.modes() != table.modes {
                return Err(Error::InvalidInput("noise model and Brownian table disagree on mode count".into()));
            }
            let ratio = table.ratio_for(k)?;
            if ratio * cfg.steps > table.n_fine {
                return Err(Error::StepOutOfRange { index: cfg.steps, len: table.n_fine / ratio });
            }
            model.enabled().then(|| CoarseFeed::new(table, model, ratio))
        }
    };

    for n in 1..=cfg.steps {
        match feed.as_mut() {
            Some(feed) => {
                let model = feed.model;
                let load = noise_load_vector(ops, model, feed.next_increment())?;
                stepper.advance(&mut state, Some(&load))?;
            }
            None => stepper.advance(&mut state, None)?,
        }
        history.push(record(&state, n as f64 * k)?);
        if let Some(p) = path.as_mut() {
            p.push(state.clone());
        }
    }
    Ok(Trajectory { final_state: state, history, path })
}

/// Sums fine Brownian increments into coarse `ΔW` vectors, in order.
pub(crate) struct CoarseFeed<'a> {
    stream: crate::noise::FineStream,
    model: &'a NoiseModel,
    ratio: usize,
    fine: Vec<f64>,
    acc: Vec<f64>,
}

impl<'a> CoarseFeed<'a> {
    pub(crate) fn new(table: &BrownianTable, model: &'a NoiseModel, ratio: usize) -> Self {
        Self { stream: table.stream(), model, ratio, fine: vec![0.0; table.modes], acc: vec![0.0; table.modes] }
    }

    fn next_increment(&mut self) -> &[f64] {
        self.acc.iter_mut().for_each(|x| *x = 0.0);
        for _ in 0..self.ratio {
            self.stream.next_into(&mut self.fine);
            for (a, f) in self.acc.iter_mut().zip(&self.fine) {
                *a += f;
            }
        }
        self.model.scale_increments(&mut self.acc);
        &self.acc
    }
}
