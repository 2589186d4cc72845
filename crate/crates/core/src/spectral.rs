//! Neumann-Laplacian eigenbasis on the unit interval.
//!
//! Mode `k` is `e_0 = 1` and `e_k(x) = sqrt(2) cos(k pi x)` for `k >= 1`, with
//! eigenvalue `(k pi)^2` of `A = -d^2/dx^2` under homogeneous Neumann boundary
//! conditions. Fields live on the uniform grid `x_j = j / M`, `j = 0..=M`, and
//! all inner products use the composite trapezoid rule on that grid. For the
//! cosine family this rule is exactly orthonormal as long as `j + k < 2M`,
//! which the `M >= 4 n` sizing guard guarantees.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{Vec3, VectorField};

/// Oversampling factor between grid intervals and retained modes.
pub const ALIASING_FACTOR: usize = 4;

/// Eigenvalue of mode `k` of the Neumann Laplacian on `(0, 1)`.
#[inline]
pub fn eigenvalue(k: usize) -> f64 {
    let kp = k as f64 * PI;
    kp * kp
}

#[derive(Debug, Clone)]
pub struct Basis {
    n_modes: usize,
    grid_points: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    eigenvalues: Vec<f64>,
    // row-major, one row of length M+1 per mode
    modes: Vec<f64>,
    weighted_modes: Vec<f64>,
    derivatives: Vec<f64>,
}

impl Basis {
    /// Builds the first `n_modes` eigenpairs sampled on `grid_points + 1` nodes.
    pub fn new(n_modes: usize, grid_points: usize) -> Result<Self> {
        if n_modes == 0 {
            return Err(Error::Config("n_modes must be at least 1".into()));
        }
        let required = ALIASING_FACTOR * n_modes;
        if grid_points < required {
            return Err(Error::Sizing {
                n_modes,
                grid_points,
                required,
            });
        }

        let m = grid_points;
        let len = m + 1;
        let h = 1.0 / m as f64;
        let nodes: Vec<f64> = (0..len).map(|j| j as f64 * h).collect();
        let mut weights = vec![h; len];
        weights[0] = 0.5 * h;
        weights[m] = 0.5 * h;

        let mut modes = Vec::with_capacity(n_modes * len);
        let mut derivatives = Vec::with_capacity(n_modes * len);
        for k in 0..n_modes {
            if k == 0 {
                modes.extend(std::iter::repeat_n(1.0, len));
                derivatives.extend(std::iter::repeat_n(0.0, len));
                continue;
            }
            let kp = k as f64 * PI;
            for j in 0..len {
                // exact rational argument keeps the boundary nodes symmetric
                let arg = kp * (j as f64) / m as f64;
                modes.push(SQRT_2 * arg.cos());
                derivatives.push(if j == 0 || j == m {
                    0.0
                } else {
                    -SQRT_2 * kp * arg.sin()
                });
            }
        }
        let weighted_modes = modes
            .chunks_exact(len)
            .flat_map(|row| row.iter().zip(&weights).map(|(e, w)| e * w))
            .collect();

        Ok(Basis {
            n_modes,
            grid_points,
            nodes,
            weights,
            eigenvalues: (0..n_modes).map(eigenvalue).collect(),
            modes,
            weighted_modes,
            derivatives,
        })
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    /// Number of grid intervals `M`; the grid has `M + 1` nodes.
    pub fn grid_points(&self) -> usize {
        self.grid_points
    }

    pub fn n_nodes(&self) -> usize {
        self.grid_points + 1
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Trapezoid weights on the grid nodes.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Largest retained eigenvalue, `((n - 1) pi)^2`.
    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues[self.n_modes - 1]
    }

    /// Mode `k` sampled on the grid.
    pub fn mode(&self, k: usize) -> &[f64] {
        let len = self.n_nodes();
        &self.modes[k * len..(k + 1) * len]
    }

    /// Derivative of mode `k` sampled on the grid.
    pub fn mode_derivative(&self, k: usize) -> &[f64] {
        let len = self.n_nodes();
        &self.derivatives[k * len..(k + 1) * len]
    }

    /// Trapezoid inner product of two scalar grid functions.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).zip(&self.weights).map(|((x, y), w)| w * x * y).sum()
    }

    /// Trapezoid integral of a scalar grid function.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        f.iter().zip(&self.weights).map(|(x, w)| w * x).sum()
    }

    fn check_grid(&self, v: &VectorField) -> Result<()> {
        if v.len() != self.n_nodes() {
            return Err(Error::GridMismatch {
                expected: self.n_nodes(),
                actual: v.len(),
            });
        }
        Ok(())
    }

    fn check_modes(&self, state: &GalerkinState) -> Result<()> {
        if state.n_modes() > self.n_modes {
            return Err(Error::ModeMismatch {
                state: state.n_modes(),
                basis: self.n_modes,
            });
        }
        Ok(())
    }

    /// Orthogonal projection `P_n` onto the span of the retained modes.
    pub fn project(&self, v: &VectorField) -> Result<GalerkinState> {
        self.check_grid(v)?;
        Ok(self.project_values(v.values()))
    }

    /// Unchecked projection of raw grid values; `values.len()` must equal `M + 1`.
    pub(crate) fn project_values(&self, values: &[Vec3]) -> GalerkinState {
        debug_assert_eq!(values.len(), self.n_nodes());
        let len = self.n_nodes();
        let coeffs = self
            .weighted_modes
            .chunks_exact(len)
            .map(|row| {
                let mut c = [0.0; 3];
                for (w, v) in row.iter().zip(values) {
                    c[0] += w * v[0];
                    c[1] += w * v[1];
                    c[2] += w * v[2];
                }
                c
            })
            .collect();
        GalerkinState { coeffs }
    }

    /// Evaluates `sum_k c_k e_k(x_j)` on the grid.
    pub fn synthesize(&self, state: &GalerkinState) -> Result<VectorField> {
        self.check_modes(state)?;
        Ok(VectorField::from_values(self.expand(&state.coeffs, &self.modes)))
    }

    /// Evaluates `sum_k c_k e_k'(x_j)` on the grid.
    pub fn spatial_derivative(&self, state: &GalerkinState) -> Result<VectorField> {
        self.check_modes(state)?;
        Ok(VectorField::from_values(self.expand(&state.coeffs, &self.derivatives)))
    }

    /// Unchecked synthesis; `state` must have this basis' mode count.
    pub(crate) fn expand_values(&self, state: &GalerkinState) -> Vec<Vec3> {
        debug_assert_eq!(state.n_modes(), self.n_modes());
        self.expand(&state.coeffs, &self.modes)
    }

    fn expand(&self, coeffs: &[Vec3], table: &[f64]) -> Vec<Vec3> {
        let len = self.n_nodes();
        let mut out = vec![[0.0; 3]; len];
        for (c, row) in coeffs.iter().zip(table.chunks_exact(len)) {
            if c[0] == 0.0 && c[1] == 0.0 && c[2] == 0.0 {
                continue;
            }
            for (o, e) in out.iter_mut().zip(row) {
                o[0] += c[0] * e;
                o[1] += c[1] * e;
                o[2] += c[2] * e;
            }
        }
        out
    }

    /// Zero-pads or truncates a state to this basis' mode count.
    pub fn resize(&self, state: &GalerkinState) -> GalerkinState {
        let mut coeffs = state.coeffs.clone();
        coeffs.resize(self.n_modes, [0.0; 3]);
        GalerkinState { coeffs }
    }
}

/// Coefficients of a field in the span of `e_0..e_{n-1}`, one `R^3` triple per mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GalerkinState {
    pub coeffs: Vec<Vec3>,
}

impl GalerkinState {
    pub fn zeros(n_modes: usize) -> Self {
        GalerkinState {
            coeffs: vec![[0.0; 3]; n_modes],
        }
    }

    pub fn from_coeffs(coeffs: Vec<Vec3>) -> Self {
        GalerkinState { coeffs }
    }

    pub fn n_modes(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().flatten().all(|x| x.is_finite())
    }

    /// `L^2` inner product, exact through quadrature orthonormality.
    pub fn dot(&self, other: &GalerkinState) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a[0] * b[0] + a[1] * b[1] + a[2] * b[2])
            .sum()
    }

    pub fn l2_norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_norm_sq().sqrt()
    }

    /// `|grad m|_{L^2}^2 = sum_k lambda_k |c_k|^2`.
    pub fn gradient_norm_sq(&self) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| eigenvalue(k) * (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]))
            .sum()
    }

    /// `|m|_{H^1}^2 = |m|_{L^2}^2 + |grad m|_{L^2}^2`.
    pub fn h1_norm_sq(&self) -> f64 {
        self.l2_norm_sq() + self.gradient_norm_sq()
    }

    /// Largest coefficient magnitude; used as the blow-up sentinel.
    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().flatten().fold(0.0_f64, |acc, x| acc.max(x.abs()))
    }

    /// Multiplies mode `k` by `-lambda_k`, i.e. applies `Delta = -A`.
    pub fn laplacian(&self) -> GalerkinState {
        self.map_modes(|k, c| {
            let l = -eigenvalue(k);
            [l * c[0], l * c[1], l * c[2]]
        })
    }

    /// Applies `A_1 = I + A`, i.e. multiplies mode `k` by `1 + lambda_k`.
    pub fn apply_a1(&self) -> GalerkinState {
        self.map_modes(|k, c| {
            let l = 1.0 + eigenvalue(k);
            [l * c[0], l * c[1], l * c[2]]
        })
    }

    fn map_modes(&self, f: impl Fn(usize, &Vec3) -> Vec3) -> GalerkinState {
        GalerkinState {
            coeffs: self.coeffs.iter().enumerate().map(|(k, c)| f(k, c)).collect(),
        }
    }

    pub fn scaled(&self, s: f64) -> GalerkinState {
        self.map_modes(|_, c| [s * c[0], s * c[1], s * c[2]])
    }

    /// `self += s * other`
    pub fn axpy(&mut self, s: f64, other: &GalerkinState) {
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            a[0] += s * b[0];
            a[1] += s * b[1];
            a[2] += s * b[2];
        }
    }

    /// Euclidean distance of the coefficient vectors after zero-padding the shorter one.
    pub fn distance(&self, other: &GalerkinState) -> f64 {
        let n = self.n_modes().max(other.n_modes());
        let zero = [0.0; 3];
        (0..n)
            .map(|k| {
                let a = self.coeffs.get(k).unwrap_or(&zero);
                let b = other.coeffs.get(k).unwrap_or(&zero);
                (0..3).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>()
            })
            .sum::<f64>()
            .sqrt()
    }
}
