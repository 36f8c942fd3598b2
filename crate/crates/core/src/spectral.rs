//! Eigenbasis of `A = -Δ` on (0, 1) with Dirichlet conditions, and the
//! closed-form solutions used to validate the finite element scheme.
//!
//! `λ_j = (jπ)²`, `e_j(x) = √2 sin(jπx)`. In this basis the elliptic transform
//! `(I + A)⁻¹` is division by `1 + λ_j`, and for the identity drift each mode
//! of `v` obeys the scalar linear ODE `v_j' = a_j v_j` with
//! `a_j = -λ_j + 1/(1 + λ_j)`.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::NoiseModel;

/// Dimension of the physical domain.
pub const DIM: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBasis {
    modes: usize,
    lambda: Vec<f64>,
}

pub fn make_basis(modes: usize) -> Result<SpectralBasis> {
    if modes == 0 {
        return Err(Error::InvalidInput("spectral basis needs at least one mode".into()));
    }
    let lambda = (1..=modes).map(eigenvalue).collect();
    Ok(SpectralBasis { modes, lambda })
}

/// `(jπ)²` for 1-based `j`.
pub fn eigenvalue(j: usize) -> f64 {
    let w = j as f64 * PI;
    w * w
}

/// `√2 sin(jπx)`.
pub fn eigenfunction(j: usize, x: f64) -> f64 {
    SQRT_2 * (j as f64 * PI * x).sin()
}

impl SpectralBasis {
    pub fn modes(&self) -> usize {
        self.modes
    }

    /// Eigenvalues, index 0 holds `λ_1`.
    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn eval(&self, j: usize, x: f64) -> f64 {
        assert!(j >= 1 && j <= self.modes);
        eigenfunction(j, x)
    }

    /// Modal decay rate `a_j = -λ_j + 1/(1 + λ_j)` of the identity-drift problem.
    pub fn linear_rate(&self, j: usize) -> f64 {
        let l = self.lambda[j - 1];
        -l + 1.0 / (1.0 + l)
    }

    /// Normalized coefficients of `Σ amp · sin(jπx)`.
    pub fn coeffs_from_sines(&self, sines: &[(usize, f64)]) -> Result<Vec<f64>> {
        let mut c = vec![0.0; self.modes];
        for &(j, amp) in sines {
            if j == 0 || j > self.modes {
                return Err(Error::InvalidInput(format!("mode {j} outside 1..={}", self.modes)));
            }
            c[j - 1] += amp / SQRT_2;
        }
        Ok(c)
    }
}

/// Spectral representation of a function at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalState {
    pub coeffs: Vec<f64>,
    pub t: f64,
}

impl ModalState {
    /// L2 norm by Parseval.
    pub fn l2_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().enumerate().map(|(i, c)| c * eigenfunction(i + 1, x)).sum()
    }

    /// Applies `(I + A)⁻¹`.
    pub fn elliptic_recover(&self) -> ModalState {
        ModalState {
            coeffs: self.coeffs.iter().enumerate().map(|(i, c)| c / (1.0 + eigenvalue(i + 1))).collect(),
            t: self.t,
        }
    }

    /// Applies `I + A`.
    pub fn elliptic_apply(&self) -> ModalState {
        ModalState {
            coeffs: self.coeffs.iter().enumerate().map(|(i, c)| c * (1.0 + eigenvalue(i + 1))).collect(),
            t: self.t,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub beta: f64,
    pub s: f64,
    pub d: f64,
    /// `s + 1 - d/2`; admissible iff `beta` is strictly below it.
    pub bound: f64,
    /// Truncated `Σ_{j≤J} λ_j^{β-s-1}`.
    pub hs_norm_sq: f64,
    pub modes: usize,
    pub admissible: bool,
}

/// Evaluates `β < s + 1 - d/2`, the condition for
/// `‖A^{(β-1)/2} Q^{1/2}‖_HS < ∞` when `Q = A^{-s}`.
///
/// The boolean comes from the exponent inequality; the truncated sum is
/// reported for information only.
pub fn check_admissibility(beta: f64, s: f64, modes: usize) -> AdmissibilityReport {
    let bound = s + 1.0 - DIM / 2.0;
    let exponent = beta - s - 1.0;
    let hs_norm_sq = (1..=modes.max(1)).map(|j| eigenvalue(j).powf(exponent)).sum();
    AdmissibilityReport { beta, s, d: DIM, bound, hs_norm_sq, modes, admissible: beta < bound }
}

/// Exact solution of the noise-free identity-drift problem in modal form.
pub fn exact_linear_deterministic(basis: &SpectralBasis, v0: &[f64], t: f64) -> Result<ModalState> {
    if v0.len() != basis.modes() {
        return Err(Error::InvalidInput(format!(
            "initial datum has {} modes, basis has {}",
            v0.len(),
            basis.modes()
        )));
    }
    let coeffs = v0.iter().enumerate().map(|(i, c)| (basis.linear_rate(i + 1) * t).exp() * c).collect();
    Ok(ModalState { coeffs, t })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuMoments {
    pub mean: f64,
    pub var: f64,
}

/// Per-mode mean and variance of `dv + Av dt = dW` (zero drift):
/// `mean = e^{-λt} v_j(0)`, `var = γ_j (1 - e^{-2λt}) / (2λ)`.
pub fn ou_moments(basis: &SpectralBasis, noise: &NoiseModel, v0: &[f64], t: f64) -> Result<Vec<OuMoments>> {
    if v0.len() != basis.modes() {
        return Err(Error::InvalidInput("initial datum length differs from basis".into()));
    }
    Ok(basis
        .lambda()
        .iter()
        .zip(v0)
        .enumerate()
        .map(|(i, (&l, &c))| {
            let g = noise.gamma_of(i + 1);
            OuMoments { mean: (-l * t).exp() * c, var: g * (-(-2.0 * l * t).exp_m1()) / (2.0 * l) }
        })
        .collect())
}

/// Generalized eigenvalue of `(K, M)` on a uniform mesh of `n_cells` cells:
/// `λ_{j,h} = 6/h² · (1 - cos jπh) / (2 + cos jπh)`, eigenvector `sin(jπ x_i)`.
pub fn discrete_eigenvalue(n_cells: usize, j: usize) -> f64 {
    let h = 1.0 / n_cells as f64;
    let c = (j as f64 * PI * h).cos();
    6.0 / (h * h) * (1.0 - c) / (2.0 + c)
}

/// Variance of `∫ V_h^N e_j` for the fully discrete scheme with zero drift,
/// zero initial datum, `N` steps of size `k` and `γ_j` noise in mode `j`.
///
/// Valid for `j < n_cells` and noise truncated below `n_cells`: the nodal
/// sine vectors diagonalize `M` and `K` simultaneously, so mode `j` evolves by
/// `X_n = r (X_{n-1} + c ΔW_j)` with `r = 1/(1 + kλ_{j,h})`.
pub fn discrete_ou_variance(n_cells: usize, j: usize, gamma: f64, k: f64, steps: usize) -> f64 {
    let n = n_cells as f64;
    let h = 1.0 / n;
    let w = j as f64 * PI;
    let theta = w * h;
    // ∫ φ_i e_j = hat_weight · sin(jπ x_i)
    let hat_weight = SQRT_2 * 4.0 / (h * w * w) * (0.5 * theta).sin().powi(2);
    let mass_eig = h / 3.0 * (2.0 + theta.cos());
    let c = hat_weight / mass_eig;
    let r2 = (1.0 / (1.0 + k * discrete_eigenvalue(n_cells, j))).powi(2);
    let geometric = if r2 == 1.0 { steps as f64 } else { r2 * (1.0 - r2.powi(steps as i32)) / (1.0 - r2) };
    // Σ_i sin²(jπ x_i) = n/2
    let projection = hat_weight * n / 2.0;
    projection * projection * c * c * gamma * k * geometric
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_eigenvalues() {
        assert!(make_basis(0).is_err());
        let b = make_basis(2).unwrap();
        assert!((b.lambda()[0] - 9.869604401089358).abs() < 1e-12);
        assert!((b.lambda()[1] - 39.47841760435743).abs() < 1e-12);
        assert!((b.eval(1, 0.5) - SQRT_2).abs() < 1e-15);
        let b = make_basis(50).unwrap();
        assert!(b.lambda().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn eigenfunctions_have_unit_norm() {
        let (x, w) = crate::fem::gauss_legendre(80);
        for j in [1, 2, 7, 15] {
            let n: f64 = x.iter().zip(&w).map(|(x, w)| 0.5 * w * eigenfunction(j, 0.5 * (x + 1.0)).powi(2)).sum();
            assert!((n - 1.0).abs() < 1e-12, "j={j} {n}");
        }
    }

    #[test]
    fn admissibility_cases() {
        assert!(check_admissibility(1.0, 0.5005, 100).admissible);
        assert!(check_admissibility(0.5, 0.0005, 100).admissible);
        let edge = check_admissibility(1.0, 0.5, 100);
        assert!(!edge.admissible);
        assert_eq!(edge.bound, 1.0);
    }

    #[test]
    fn mode_two_decay_rate() {
        let b = make_basis(2).unwrap();
        let l = 4.0 * PI * PI;
        assert!((b.linear_rate(2) - (-l + 1.0 / (1.0 + l))).abs() < 1e-13);
        assert!((b.linear_rate(2) + 39.4537).abs() < 1e-4);
    }

    #[test]
    fn deterministic_solution_values() {
        let b = make_basis(2).unwrap();
        let v0 = b.coeffs_from_sines(&[(2, 1.0)]).unwrap();
        assert_eq!(exact_linear_deterministic(&b, &v0, 0.0).unwrap().coeffs, v0);
        let s = exact_linear_deterministic(&b, &v0, 0.05).unwrap();
        let expected = (0.05 * b.linear_rate(2)).exp() / SQRT_2;
        assert!((s.l2_norm() - expected).abs() < 1e-15);
        assert!((s.l2_norm() - 0.0983).abs() < 5e-4);
        assert!(exact_linear_deterministic(&b, &[1.0], 0.1).is_err());
    }

    #[test]
    fn deterministic_norm_non_increasing() {
        let b = make_basis(6).unwrap();
        let v0 = vec![0.3, -1.0, 0.2, 0.0, 2.0, 0.1];
        let mut prev = f64::INFINITY;
        for i in 0..20 {
            let n = exact_linear_deterministic(&b, &v0, i as f64 * 0.01).unwrap().l2_norm();
            assert!(n <= prev);
            prev = n;
        }
        assert!((1..=6).all(|j| b.linear_rate(j) < 0.0));
    }

    #[test]
    fn parseval_against_quadrature() {
        let s = ModalState { coeffs: vec![0.5, -0.25, 0.0, 1.5], t: 0.0 };
        let (x, w) = crate::fem::gauss_legendre(32);
        let q: f64 = x.iter().zip(&w).map(|(x, w)| 0.5 * w * s.eval(0.5 * (x + 1.0)).powi(2)).sum();
        assert!((q.sqrt() - s.l2_norm()).abs() < 1e-12);
    }

    #[test]
    fn elliptic_roundtrip_is_identity() {
        let s = ModalState { coeffs: vec![0.5, -0.25, 3.0], t: 0.0 };
        let r = s.elliptic_recover().elliptic_apply();
        for (a, b) in r.coeffs.iter().zip(&s.coeffs) {
            assert!((a - b).abs() < 1e-14 * b.abs().max(1.0));
        }
    }

    #[test]
    fn discrete_eigenvalue_limits() {
        // approaches (jπ)² from above at O(h²)
        for j in 1..=3 {
            let e16 = discrete_eigenvalue(16, j) - eigenvalue(j);
            let e32 = discrete_eigenvalue(32, j) - eigenvalue(j);
            assert!(e16 > 0.0 && e32 > 0.0);
            assert!((e16 / e32 - 4.0).abs() < 0.1);
        }
    }

    #[test]
    fn discrete_ou_variance_tends_to_continuous() {
        let (g, t) = (0.8, 1.0);
        let cont = g * (1.0 - (-2.0 * eigenvalue(2) * t).exp()) / (2.0 * eigenvalue(2));
        let coarse = discrete_ou_variance(64, 2, g, 1e-3, 1000);
        let fine = discrete_ou_variance(512, 2, g, 1e-5, 100_000);
        assert!((fine / cont - 1.0).abs() < (coarse / cont - 1.0).abs());
        assert!((fine / cont - 1.0).abs() < 2e-3);
    }

    #[test]
    fn ou_moment_limits() {
        let b = make_basis(3).unwrap();
        let noise = NoiseModel::new(1.0, 3).unwrap();
        let at0 = ou_moments(&b, &noise, &[1.0, 0.0, 0.0], 0.0).unwrap();
        assert!(at0.iter().all(|m| m.var == 0.0));
        assert_eq!(at0[0].mean, 1.0);
        let late = ou_moments(&b, &noise, &[0.0; 3], 50.0).unwrap();
        for (j, m) in late.iter().enumerate() {
            let l = eigenvalue(j + 1);
            assert!((m.var - noise.gamma_of(j + 1) / (2.0 * l)).abs() < 1e-15);
        }
    }
}
