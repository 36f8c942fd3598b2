//! Truncated Q-Wiener process `W(t) = Σ_{j≤J} γ_j^{1/2} β_j(t) e_j` with
//! `Q = A^{-s}`, i.e. `γ_j = λ_j^{-s}`.
//!
//! Brownian paths come from a counter-based generator: the standard normal
//! driving mode `j` on fine step `m` of sample `i` is a pure function of
//! `(seed, salt, i, m, j)`. Every resolution of a convergence study reads the
//! same fine-grid increments and sums them to its own step, so all
//! resolutions see the same realization.
//!
//! Stream layout: ChaCha8 keyed by `splitmix64(seed ^ salt)`, stream id = sample
//! index. Fine step `m` occupies `ceil(J/2)` pairs of 64-bit words starting at
//! word position `4 m ceil(J/2)`. Each pair `(a, b)` maps to two normals by
//! Box–Muller with `u1 = ((a >> 11) + 1) 2^-53`, `u2 = (b >> 11) 2^-53`,
//! `z0 = r cos(2πu2)`, `z1 = r sin(2πu2)`, `r = sqrt(-2 ln u1)`, evaluated
//! with `libm` so results do not depend on the platform math library.

use std::f64::consts::{PI, SQRT_2};

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::FemOperators;
use crate::spectral::eigenvalue;

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    s: f64,
    gamma: Vec<f64>,
    sqrt_gamma: Vec<f64>,
    enabled: bool,
}

impl NoiseModel {
    pub fn new(s: f64, modes: usize) -> Result<Self> {
        if s < 0.0 || !s.is_finite() {
            return Err(Error::InvalidInput(format!("noise exponent s must be finite and >= 0, got {s}")));
        }
        if modes == 0 {
            return Err(Error::InvalidInput("noise needs at least one mode".into()));
        }
        let gamma: Vec<f64> = (1..=modes).map(|j| eigenvalue(j).powf(-s)).collect();
        let sqrt_gamma = gamma.iter().map(|g| g.sqrt()).collect();
        Ok(Self { s, gamma, sqrt_gamma, enabled: true })
    }

    /// Same parameters, but every increment is zero. Runs through the same
    /// code paths as the stochastic model.
    pub fn disabled(s: f64, modes: usize) -> Result<Self> {
        Ok(Self { enabled: false, ..Self::new(s, modes)? })
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn modes(&self) -> usize {
        self.gamma.len()
    }

    pub fn enabled(&self) -> bool {
        self.enabled
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    /// `γ_j` for 1-based `j`.
    pub fn gamma_of(&self, j: usize) -> f64 {
        self.gamma[j - 1]
    }

    /// Truncated trace `Σ_{j≤J} γ_j`.
    pub fn trace(&self) -> f64 {
        self.gamma.iter().sum()
    }

    /// Scales raw Brownian increments by `γ_j^{1/2}` in place.
    pub fn scale_increments(&self, raw: &mut [f64]) {
        if !self.enabled {
            raw.iter_mut().for_each(|x| *x = 0.0);
            return;
        }
        for (x, g) in raw.iter_mut().zip(&self.sqrt_gamma) {
            *x *= g;
        }
    }
}

/// Fine-grid Brownian increments for one Monte Carlo sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrownianTable {
    pub seed: u64,
    pub salt: u64,
    pub sample: u64,
    pub modes: usize,
    pub n_fine: usize,
    pub t_final: f64,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn box_muller(a: u64, b: u64) -> (f64, f64) {
    const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
    let u1 = ((a >> 11) + 1) as f64 * SCALE;
    let u2 = (b >> 11) as f64 * SCALE;
    let r = libm::sqrt(-2.0 * libm::log(u1));
    let theta = 2.0 * PI * u2;
    (r * libm::cos(theta), r * libm::sin(theta))
}

impl BrownianTable {
    pub fn new(seed: u64, sample: u64, modes: usize, n_fine: usize, t_final: f64) -> Result<Self> {
        if modes == 0 || n_fine == 0 || t_final < 0.0 || !t_final.is_finite() {
            return Err(Error::InvalidInput(format!(
                "Brownian table needs modes >= 1, n_fine >= 1, T >= 0 (got {modes}, {n_fine}, {t_final})"
            )));
        }
        Ok(Self { seed, salt: 0, sample, modes, n_fine, t_final })
    }

    /// Independent family of paths for the same seed; `salt = 0` is the default family.
    pub fn with_salt(mut self, salt: u64) -> Self {
        self.salt = salt;
        self
    }

    pub fn k_fine(&self) -> f64 {
        self.t_final / self.n_fine as f64
    }

    fn pairs_per_step(&self) -> usize {
        self.modes.div_ceil(2)
    }

    fn rng(&self) -> ChaCha8Rng {
        let mut state = self.seed ^ self.salt.wrapping_mul(0xD605_BBB5_8C8A_BBCD);
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.sample);
        rng
    }

    /// Sequential reader over fine steps, starting at step 0.
    pub fn stream(&self) -> FineStream {
        FineStream { rng: self.rng(), modes: self.modes, sqrt_k: self.k_fine().sqrt(), remaining: self.n_fine }
    }

    /// Raw increments `β_j(t_{m+1}) - β_j(t_m)` on fine step `m` (0-based), by seeking.
    pub fn fine_increments(&self, m: usize, out: &mut [f64]) -> Result<()> {
        if m >= self.n_fine {
            return Err(Error::StepOutOfRange { index: m, len: self.n_fine });
        }
        let mut rng = self.rng();
        rng.set_word_pos(4 * (m as u128) * self.pairs_per_step() as u128);
        let mut s = FineStream { rng, modes: self.modes, sqrt_k: self.k_fine().sqrt(), remaining: 1 };
        s.next_into(out);
        Ok(())
    }

    /// Number of fine steps per coarse step `k`, if `k` is aligned.
    pub fn ratio_for(&self, k: f64) -> Result<usize> {
        let r = k / self.k_fine();
        let ratio = r.round();
        if ratio.is_nan() || ratio < 1.0 || (r - ratio).abs() > 1e-9 * ratio || !self.n_fine.is_multiple_of(ratio as usize) {
            return Err(Error::UnalignedStep { step: k, ratio: r });
        }
        Ok(ratio as usize)
    }

    /// Raw Brownian increment over coarse step `n` (1-based) made of `ratio`
    /// fine steps, summed left to right.
    pub fn coarse_raw(&self, n: usize, ratio: usize, out: &mut [f64]) -> Result<()> {
        if n == 0 || n * ratio > self.n_fine {
            return Err(Error::StepOutOfRange { index: n, len: self.n_fine / ratio.max(1) });
        }
        let mut rng = self.rng();
        rng.set_word_pos(4 * ((n - 1) * ratio) as u128 * self.pairs_per_step() as u128);
        let mut s = FineStream { rng, modes: self.modes, sqrt_k: self.k_fine().sqrt(), remaining: ratio };
        let mut buf = vec![0.0; self.modes];
        out.iter_mut().for_each(|x| *x = 0.0);
        while s.next_into(&mut buf) {
            for (o, b) in out.iter_mut().zip(&buf) {
                *o += b;
            }
        }
        Ok(())
    }

    /// `ΔW_j = γ_j^{1/2} (β_j(t_n) - β_j(t_{n-1}))` over coarse step `n ≥ 1` of length `k`.
    pub fn sample_increment(&self, model: &NoiseModel, n: usize, k: f64) -> Result<Vec<f64>> {
        if model.modes() != self.modes {
            return Err(Error::InvalidInput(format!(
                "noise model has {} modes, table has {}",
                model.modes(),
                self.modes
            )));
        }
        let ratio = self.ratio_for(k)?;
        let mut out = vec![0.0; self.modes];
        self.coarse_raw(n, ratio, &mut out)?;
        model.scale_increments(&mut out);
        Ok(out)
    }
}

/// Sequential fine-step reader; see the module docs for the layout.
pub struct FineStream {
    rng: ChaCha8Rng,
    modes: usize,
    sqrt_k: f64,
    remaining: usize,
}

impl FineStream {
    /// Writes the next fine step's raw increments; returns `false` when exhausted.
    pub fn next_into(&mut self, out: &mut [f64]) -> bool {
        if self.remaining == 0 {
            return false;
        }
        self.remaining -= 1;
        debug_assert_eq!(out.len(), self.modes);
        let mut j = 0;
        while j < self.modes {
            let a = self.rng.next_u64();
            let b = self.rng.next_u64();
            let (z0, z1) = box_muller(a, b);
            out[j] = self.sqrt_k * z0;
            if j + 1 < self.modes {
                out[j + 1] = self.sqrt_k * z1;
            }
            j += 2;
        }
        true
    }
}

/// Right-hand side `b_i = Σ_j ΔW_j ∫ e_j φ_i` of `P_h ΔW`.
///
/// Mode `j` contributes `√2 · 4/(h (jπ)²) · sin²(jπh/2) · sin(jπ x_i)`. Since
/// `sin(jπ x_i)` is `2n`-periodic and odd in `j`, modes beyond the mesh fold
/// onto `1..n-1` and the sum becomes one sine synthesis.
pub fn noise_load_vector(ops: &FemOperators, model: &NoiseModel, increment: &[f64]) -> Result<Vec<f64>> {
    if increment.len() != model.modes() {
        return Err(Error::InvalidInput(format!(
            "increment has {} modes, noise model has {}",
            increment.len(),
            model.modes()
        )));
    }
    let mesh = ops.mesh();
    let n = mesh.n_cells();
    let h = mesh.h();
    let mut folded = vec![0.0; n - 1];
    for (idx, dw) in increment.iter().enumerate() {
        let j = idx + 1;
        let r = j % (2 * n);
        if r == 0 || r == n || *dw == 0.0 {
            continue;
        }
        let w = j as f64 * PI;
        let weight = dw * SQRT_2 * 4.0 / (h * w * w) * (0.5 * w * h).sin().powi(2);
        if r < n {
            folded[r - 1] += weight;
        } else {
            folded[2 * n - r - 1] -= weight;
        }
    }
    let mut out = vec![0.0; n - 1];
    ops.sine().synthesize(&folded, &mut out);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WienerNormStat {
    pub mean: f64,
    pub stderr: f64,
    pub expected: f64,
    pub samples: usize,
}

/// Empirical `E‖W(T)‖²` over `samples` paths; expected value `T · Σ γ_j`.
pub fn wiener_norm_check(model: &NoiseModel, t_final: f64, samples: usize, seed: u64) -> Result<WienerNormStat> {
    if samples == 0 {
        return Err(Error::InvalidInput("need at least one sample".into()));
    }
    let mut vals = Vec::with_capacity(samples);
    let mut w = vec![0.0; model.modes()];
    for i in 0..samples {
        let table = BrownianTable::new(seed, i as u64, model.modes(), 1, t_final)?;
        table.stream().next_into(&mut w);
        model.scale_increments(&mut w);
        vals.push(w.iter().map(|x| x * x).sum::<f64>());
    }
    let (mean, stderr) = mean_and_stderr(&vals);
    let expected = if model.enabled() { t_final * model.trace() } else { 0.0 };
    Ok(WienerNormStat { mean, stderr, expected, samples })
}

/// Sample mean and standard error of the mean (0 for a single value).
pub(crate) fn mean_and_stderr(vals: &[f64]) -> (f64, f64) {
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    if vals.len() < 2 {
        return (mean, 0.0);
    }
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
