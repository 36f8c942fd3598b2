//! Piecewise-linear finite elements on a uniform partition of (0, 1) with
//! homogeneous Dirichlet conditions.
//!
//! Functions in the discrete space are stored by their values at the
//! interior nodes `x_i = i h`, `i = 1..n_cells-1`. The mass matrix `M` and
//! stiffness matrix `K` realize the L2 projection and the discrete Laplacian:
//! a function with coefficients `c` has `A_h c = M⁻¹ K c`.

mod quadrature;
mod sine;
mod tridiag;

use std::f64::consts::PI;

pub use quadrature::gauss_legendre;
pub use sine::SineSynthesis;
pub use tridiag::{SymTridiag, TridiagCholesky};

use crate::error::{Error, Result};

/// Uniform mesh of (0, 1) with `n_cells` cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Mesh1D {
    n_cells: usize,
}

impl Mesh1D {
    pub fn new(n_cells: usize) -> Result<Self> {
        if n_cells < 2 {
            return Err(Error::InvalidInput(format!(
                "mesh needs at least 2 cells for an interior node, got {n_cells}"
            )));
        }
        Ok(Self { n_cells })
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n_cells as f64
    }

    pub fn interior_nodes(&self) -> usize {
        self.n_cells - 1
    }

    /// Coordinate of node `i` (0 and `n_cells` are the boundary).
    pub fn node(&self, i: usize) -> f64 {
        i as f64 / self.n_cells as f64
    }

    /// Interior node coordinates in increasing order.
    pub fn nodes(&self) -> Vec<f64> {
        (1..self.n_cells).map(|i| self.node(i)).collect()
    }
}

/// Element of the finite element space, by nodal values at interior nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct FemFunction {
    pub mesh: Mesh1D,
    pub coeffs: Vec<f64>,
}

impl FemFunction {
    pub fn new(mesh: Mesh1D, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != mesh.interior_nodes() {
            return Err(Error::MeshMismatch { expected: mesh.interior_nodes(), found: coeffs.len() });
        }
        Ok(Self { mesh, coeffs })
    }

    pub fn zeros(mesh: Mesh1D) -> Self {
        Self { mesh, coeffs: vec![0.0; mesh.interior_nodes()] }
    }

    /// Unit hat function at interior node `m` (1-based node index).
    pub fn hat(mesh: Mesh1D, m: usize) -> Self {
        assert!(m >= 1 && m < mesh.n_cells());
        let mut f = Self::zeros(mesh);
        f.coeffs[m - 1] = 1.0;
        f
    }

    /// Nodal value including the boundary zeros; `i` ranges over `0..=n_cells`.
    fn node_value(&self, i: usize) -> f64 {
        if i == 0 || i == self.mesh.n_cells() {
            0.0
        } else {
            self.coeffs[i - 1]
        }
    }

    /// Evaluates the piecewise-linear reconstruction at `x ∈ [0, 1]`.
    pub fn value_at(&self, x: f64) -> f64 {
        let n = self.mesh.n_cells();
        let t = (x * n as f64).clamp(0.0, n as f64);
        let cell = (t.floor() as usize).min(n - 1);
        let r = t - cell as f64;
        (1.0 - r) * self.node_value(cell) + r * self.node_value(cell + 1)
    }
}

/// Assembled mass and stiffness matrices plus cached factorizations.
#[derive(Debug, Clone)]
pub struct FemOperators {
    mesh: Mesh1D,
    mass: SymTridiag,
    stiffness: SymTridiag,
    mass_factor: TridiagCholesky,
    elliptic_factor: TridiagCholesky,
    sine: SineSynthesis,
}

/// Builds `M` and `K` for hat functions on a uniform mesh.
pub fn assemble(mesh: Mesh1D) -> Result<FemOperators> {
    let n = mesh.interior_nodes();
    let h = mesh.h();
    let mass = SymTridiag::new(vec![2.0 * h / 3.0; n], vec![h / 6.0; n - 1])?;
    let stiffness = SymTridiag::new(vec![2.0 / h; n], vec![-1.0 / h; n - 1])?;
    FemOperators::from_matrices(mesh, mass, stiffness)
}

impl FemOperators {
    /// Wraps externally supplied matrices. Used by [`assemble`] and by
    /// fault-injection checks that need a perturbed operator.
    pub fn from_matrices(mesh: Mesh1D, mass: SymTridiag, stiffness: SymTridiag) -> Result<Self> {
        let n = mesh.interior_nodes();
        if mass.len() != n || stiffness.len() != n {
            return Err(Error::MeshMismatch { expected: n, found: mass.len().min(stiffness.len()) });
        }
        let mass_factor = mass.cholesky()?;
        let elliptic_factor = mass.combine(1.0, &stiffness, 1.0).cholesky()?;
        Ok(Self { mesh, mass, stiffness, mass_factor, elliptic_factor, sine: SineSynthesis::new(mesh.n_cells()) })
    }

    pub fn mesh(&self) -> Mesh1D {
        self.mesh
    }

    pub fn mass(&self) -> &SymTridiag {
        &self.mass
    }

    pub fn stiffness(&self) -> &SymTridiag {
        &self.stiffness
    }

    pub fn mass_factor(&self) -> &TridiagCholesky {
        &self.mass_factor
    }

    pub fn elliptic_factor(&self) -> &TridiagCholesky {
        &self.elliptic_factor
    }

    pub(crate) fn sine(&self) -> &SineSynthesis {
        &self.sine
    }

    /// Factorization of `M + k K`, the implicit operator of one time step.
    pub fn implicit_factor(&self, k: f64) -> Result<TridiagCholesky> {
        if k <= 0.0 || !k.is_finite() {
            return Err(Error::InvalidInput(format!("time step must be positive, got {k}")));
        }
        self.mass.combine(1.0, &self.stiffness, k).cholesky()
    }

    fn check(&self, f: &FemFunction) -> Result<()> {
        if f.mesh != self.mesh || f.coeffs.len() != self.mesh.interior_nodes() {
            return Err(Error::MeshMismatch {
                expected: self.mesh.interior_nodes(),
                found: f.coeffs.len(),
            });
        }
        Ok(())
    }

    /// Load vector `∫ g φ_i` by 3-point Gauss quadrature on every cell.
    pub fn load_vector<G: Fn(f64) -> f64>(&self, g: G) -> Result<Vec<f64>> {
        let n = self.mesh.n_cells();
        let h = self.mesh.h();
        let (qx, qw) = gauss_legendre(3);
        let mut load = vec![0.0; n - 1];
        for cell in 0..n {
            let left = self.mesh.node(cell);
            for (xi, wi) in qx.iter().zip(&qw) {
                let r = 0.5 * (xi + 1.0);
                let x = left + r * h;
                let gx = g(x);
                if !gx.is_finite() {
                    return Err(Error::InvalidInput(format!("non-finite integrand value {gx} at x = {x}")));
                }
                let w = 0.5 * h * wi * gx;
                // on this cell φ_cell falls from 1 to 0 and φ_{cell+1} rises
                if cell >= 1 {
                    load[cell - 1] += w * (1.0 - r);
                }
                if cell + 1 < n {
                    load[cell] += w * r;
                }
            }
        }
        Ok(load)
    }

    /// L2 projection of a general function onto the discrete space.
    pub fn l2_project<G: Fn(f64) -> f64>(&self, g: G) -> Result<FemFunction> {
        let mut c = self.load_vector(g)?;
        self.mass_factor.solve_in_place(&mut c);
        FemFunction::new(self.mesh, c)
    }

    /// L2 projection of `Σ amp · sin(jπx)` using exact hat integrals.
    pub fn l2_project_sines(&self, modes: &[(usize, f64)]) -> Result<FemFunction> {
        let mut c = vec![0.0; self.mesh.interior_nodes()];
        for &(j, amp) in modes {
            if j == 0 || !amp.is_finite() {
                return Err(Error::InvalidInput(format!("bad sine mode ({j}, {amp})")));
            }
            for (ci, hat) in c.iter_mut().zip(sine_hat_integrals(self.mesh, j)) {
                *ci += amp * hat;
            }
        }
        self.mass_factor.solve_in_place(&mut c);
        FemFunction::new(self.mesh, c)
    }

    /// Solves `(M + K) u = M v`, the discrete form of `u = (P_h + A_h)⁻¹ v`.
    pub fn elliptic_recover(&self, v: &FemFunction) -> Result<FemFunction> {
        self.check(v)?;
        let mut u = self.mass.mul(&v.coeffs);
        self.elliptic_factor.solve_in_place(&mut u);
        FemFunction::new(self.mesh, u)
    }

    /// Exact L2(0,1) norm of the piecewise-linear reconstruction, `sqrt(cᵀ M c)`.
    pub fn l2_norm(&self, f: &FemFunction) -> Result<f64> {
        self.check(f)?;
        Ok(self.mass.quad_form(&f.coeffs).max(0.0).sqrt())
    }

    /// `∫ f e_j dx` with `e_j = √2 sin(jπx)`, exact for the piecewise-linear `f`.
    pub fn modal_coefficient(&self, f: &FemFunction, j: usize) -> Result<f64> {
        self.check(f)?;
        Ok(std::f64::consts::SQRT_2
            * sine_hat_integrals(self.mesh, j).iter().zip(&f.coeffs).map(|(a, c)| a * c).sum::<f64>())
    }

    /// L2 distance between a discrete function and a smooth one, by
    /// `points`-point Gauss quadrature per cell.
    pub fn l2_error_against<G: Fn(f64) -> f64>(&self, f: &FemFunction, g: G, points: usize) -> Result<f64> {
        self.check(f)?;
        let n = self.mesh.n_cells();
        let h = self.mesh.h();
        let (qx, qw) = gauss_legendre(points);
        let mut acc = 0.0;
        for cell in 0..n {
            let a = f.node_value(cell);
            let b = f.node_value(cell + 1);
            for (xi, wi) in qx.iter().zip(&qw) {
                let r = 0.5 * (xi + 1.0);
                let d = (1.0 - r) * a + r * b - g(self.mesh.node(cell) + r * h);
                acc += 0.5 * h * wi * d * d;
            }
        }
        Ok(acc.sqrt())
    }
}

/// `∫ φ_i(x) sin(jπx) dx = 4 / (h (jπ)²) · sin(jπ x_i) · sin²(jπh/2)` for every interior node.
pub fn sine_hat_integrals(mesh: Mesh1D, j: usize) -> Vec<f64> {
    let h = mesh.h();
    let w = j as f64 * PI;
    let factor = 4.0 / (h * w * w) * (0.5 * w * h).sin().powi(2);
    (1..mesh.n_cells()).map(|i| factor * (w * mesh.node(i)).sin()).collect()
}

/// Nodal values of a coarse discrete function on a nested finer mesh.
pub fn prolong(fine: Mesh1D, coarse: &FemFunction) -> Result<FemFunction> {
    let nc = coarse.mesh.n_cells();
    let nf = fine.n_cells();
    if !nf.is_multiple_of(nc) {
        return Err(Error::NotNested { fine: nf, coarse: nc });
    }
    let ratio = nf / nc;
    let coeffs = (1..nf)
        .map(|i| {
            let cell = i / ratio;
            let r = (i % ratio) as f64 / ratio as f64;
            if r == 0.0 {
                coarse.node_value(cell)
            } else {
                (1.0 - r) * coarse.node_value(cell) + r * coarse.node_value(cell + 1)
            }
        })
        .collect();
    FemFunction::new(fine, coeffs)
}
