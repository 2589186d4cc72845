//! Grid-sampled `R^3` fields and the norms used by the energy estimates.
//!
//! Every integral is a composite trapezoid sum on the shared uniform grid.
//! Gradients come from one of two places: [`state_norms`] and
//! [`exchange_energy`] differentiate Galerkin coefficients exactly through the
//! basis derivative table, [`norms`] projects a raw field onto the supplied
//! basis first and differentiates spectrally, and [`norms_fd`] uses centered
//! finite differences on the raw samples.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{Basis, GalerkinState};

pub type Vec3 = [f64; 3];

#[inline]
pub fn cross3(a: &Vec3, b: &Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn dot3(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn norm3(a: &Vec3) -> f64 {
    dot3(a, a).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorField {
    values: Vec<Vec3>,
}

impl VectorField {
    /// Validating constructor: rejects empty input and non-finite entries.
    pub fn new(values: Vec<Vec3>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::Config("a field needs at least two grid nodes".into()));
        }
        if !values.iter().flatten().all(|x| x.is_finite()) {
            return Err(Error::Config("field contains non-finite values".into()));
        }
        Ok(VectorField { values })
    }

    pub fn from_values(values: Vec<Vec3>) -> Self {
        VectorField { values }
    }

    pub fn constant(n_nodes: usize, v: Vec3) -> Self {
        VectorField {
            values: vec![v; n_nodes],
        }
    }

    pub fn zeros(n_nodes: usize) -> Self {
        Self::constant(n_nodes, [0.0; 3])
    }

    /// Samples `f` on the nodes of `basis`.
    pub fn from_fn(basis: &Basis, f: impl Fn(f64) -> Vec3) -> Self {
        VectorField {
            values: basis.nodes().iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn values(&self) -> &[Vec3] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Vec3] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Vec3> {
        self.values
    }

    /// Number of nodes, `M + 1`.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Number of grid intervals `M`.
    pub fn grid_size(&self) -> usize {
        self.values.len().saturating_sub(1)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().flatten().all(|x| x.is_finite())
    }

    pub fn scaled(&self, s: f64) -> VectorField {
        self.map(|v| [s * v[0], s * v[1], s * v[2]])
    }

    pub fn map(&self, f: impl Fn(&Vec3) -> Vec3) -> VectorField {
        VectorField {
            values: self.values.iter().map(f).collect(),
        }
    }

    /// Pointwise `self + s * other`.
    pub fn add_scaled(&self, s: f64, other: &VectorField) -> Result<VectorField> {
        same_grid(self, other)?;
        Ok(self.zip_with(other, |a, b| [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]]))
    }

    pub(crate) fn zip_with(&self, other: &VectorField, f: impl Fn(&Vec3, &Vec3) -> Vec3) -> Self {
        VectorField {
            values: self.values.iter().zip(&other.values).map(|(a, b)| f(a, b)).collect(),
        }
    }

    /// Pointwise Euclidean norms.
    pub fn magnitudes(&self) -> Vec<f64> {
        self.values.iter().map(norm3).collect()
    }

    /// `max_j |v(x_j)|`
    pub fn linf(&self) -> f64 {
        self.values.iter().map(norm3).fold(0.0, f64::max)
    }

    /// Pointwise `v / |v|`; zero vectors are left untouched.
    pub fn normalized(&self) -> VectorField {
        self.map(|v| {
            let r = norm3(v);
            if r > 0.0 {
                [v[0] / r, v[1] / r, v[2] / r]
            } else {
                *v
            }
        })
    }
}

pub(crate) fn same_grid(a: &VectorField, b: &VectorField) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::GridMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(())
}

/// Pointwise `a(x_j) x b(x_j)`.
pub fn cross(a: &VectorField, b: &VectorField) -> Result<VectorField> {
    same_grid(a, b)?;
    Ok(a.zip_with(b, cross3))
}

/// Pointwise `<a(x_j), b(x_j)>`.
pub fn dot(a: &VectorField, b: &VectorField) -> Result<Vec<f64>> {
    same_grid(a, b)?;
    Ok(a.values.iter().zip(&b.values).map(|(x, y)| dot3(x, y)).collect())
}

/// Trapezoid `L^2` inner product of two fields.
pub fn inner(a: &VectorField, b: &VectorField, basis: &Basis) -> Result<f64> {
    same_grid(a, b)?;
    check_basis_grid(a, basis)?;
    Ok(basis.integrate(&dot(a, b)?))
}

fn check_basis_grid(v: &VectorField, basis: &Basis) -> Result<()> {
    if v.len() != basis.n_nodes() {
        return Err(Error::GridMismatch {
            expected: basis.n_nodes(),
            actual: v.len(),
        });
    }
    Ok(())
}

/// Trapezoid `L^2` norm. Panics if `v` is not on the basis grid.
pub fn l2_norm(v: &VectorField, basis: &Basis) -> f64 {
    assert_eq!(v.len(), basis.n_nodes(), "field is not on the basis grid");
    let sq: Vec<f64> = v.values.iter().map(|x| dot3(x, x)).collect();
    basis.integrate(&sq).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Norms {
    pub l2: f64,
    pub h1: f64,
    pub linf: f64,
    pub l4_of_gradient: f64,
}

fn assemble_norms(v: &VectorField, grad: &VectorField, basis: &Basis) -> Norms {
    let l2 = l2_norm(v, basis);
    let g2: Vec<f64> = grad.values.iter().map(|g| dot3(g, g)).collect();
    let g4: Vec<f64> = g2.iter().map(|x| x * x).collect();
    let grad_sq = basis.integrate(&g2);
    Norms {
        l2,
        h1: (l2 * l2 + grad_sq).sqrt(),
        linf: v.linf(),
        l4_of_gradient: basis.integrate(&g4).powf(0.25),
    }
}

/// Norms of a raw field, with the gradient taken spectrally from `P_n v`.
///
/// `l2` and `linf` use the raw samples; `h1` and `l4_of_gradient` are only as
/// good as the projection onto `basis`.
pub fn norms(v: &VectorField, basis: &Basis) -> Result<Norms> {
    check_basis_grid(v, basis)?;
    let grad = basis.spatial_derivative(&basis.project(v)?)?;
    Ok(assemble_norms(v, &grad, basis))
}

/// Norms of a raw field with a second-order centered finite-difference gradient
/// (one-sided second-order stencils at the two boundary nodes).
pub fn norms_fd(v: &VectorField, basis: &Basis) -> Result<Norms> {
    check_basis_grid(v, basis)?;
    let grad = finite_difference_gradient(v);
    Ok(assemble_norms(v, &grad, basis))
}

/// Norms of a Galerkin state with the exact spectral gradient.
pub fn state_norms(state: &GalerkinState, basis: &Basis) -> Result<Norms> {
    let v = basis.synthesize(state)?;
    let grad = basis.spatial_derivative(state)?;
    Ok(assemble_norms(&v, &grad, basis))
}

pub fn finite_difference_gradient(v: &VectorField) -> VectorField {
    let m = v.grid_size();
    let h = 1.0 / m as f64;
    let x = &v.values;
    let mut out = vec![[0.0; 3]; m + 1];
    for c in 0..3 {
        if m >= 2 {
            out[0][c] = (-3.0 * x[0][c] + 4.0 * x[1][c] - x[2][c]) / (2.0 * h);
            out[m][c] = (3.0 * x[m][c] - 4.0 * x[m - 1][c] + x[m - 2][c]) / (2.0 * h);
        } else {
            out[0][c] = (x[1][c] - x[0][c]) / h;
            out[1][c] = out[0][c];
        }
        for j in 1..m {
            out[j][c] = (x[j + 1][c] - x[j - 1][c]) / (2.0 * h);
        }
    }
    VectorField::from_values(out)
}

/// Exchange energy `1/2 |d_x m|_{L^2}^2` with unit exchange constant.
pub fn exchange_energy(m: &GalerkinState, basis: &Basis) -> Result<f64> {
    let grad = basis.spatial_derivative(m)?;
    let g2: Vec<f64> = grad.values.iter().map(|g| dot3(g, g)).collect();
    Ok(0.5 * basis.integrate(&g2))
}

/// `max_j | |m(x_j)| - 1 |`
pub fn sphere_deviation(m: &VectorField) -> f64 {
    m.values.iter().map(|v| (norm3(v) - 1.0).abs()).fold(0.0, f64::max)
}

/// `max_j | |a x b|^2 + <a,b>^2 - |a|^2 |b|^2 |`, the Lagrange identity in `R^3`.
pub fn lagrange_identity_residual(a: &VectorField, b: &VectorField) -> Result<f64> {
    same_grid(a, b)?;
    Ok(a.values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| {
            let c = cross3(x, y);
            let d = dot3(x, y);
            (dot3(&c, &c) + d * d - dot3(x, x) * dot3(y, y)).abs()
        })
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn winding(basis: &Basis, a: f64) -> VectorField {
        VectorField::from_fn(basis, |x| {
            let f = a * (PI * x).cos();
            [f.cos(), f.sin(), 0.0]
        })
    }

    fn arb_field(len: usize) -> impl Strategy<Value = VectorField> {
        prop::collection::vec(prop::array::uniform3(-10.0f64..10.0), len).prop_map(VectorField::from_values)
    }

    #[test]
    fn cross_examples() {
        let a = VectorField::constant(5, [1.0, 0.0, 0.0]);
        let b = VectorField::constant(5, [0.0, 1.0, 0.0]);
        assert!(cross(&a, &b).unwrap().values().iter().all(|v| *v == [0.0, 0.0, 1.0]));
        assert!(cross(&a, &a).unwrap().values().iter().all(|v| *v == [0.0; 3]));
        assert!(cross(&a, &VectorField::zeros(6)).is_err());
    }

    #[test]
    fn constructor_rejects_non_finite() {
        assert!(VectorField::new(vec![[0.0, f64::NAN, 0.0]; 3]).is_err());
        assert!(VectorField::new(vec![[0.0, 1.0, 0.0]; 3]).is_ok());
    }

    #[test]
    fn norms_examples() {
        let b = Basis::new(64, 256).unwrap();
        let n = norms(&winding(&b, 1.0), &b).unwrap();
        assert!((n.l2 - 1.0).abs() <= 1e-12);
        let grad_sq = n.h1 * n.h1 - n.l2 * n.l2;
        assert!((grad_sq - PI * PI / 2.0).abs() <= 1e-6, "{grad_sq}");

        let z = norms(&VectorField::zeros(257), &b).unwrap();
        assert_eq!((z.l2, z.h1, z.linf, z.l4_of_gradient), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn finite_difference_norms_converge_at_second_order() {
        let mut errs = Vec::new();
        for m in [64, 128, 256] {
            let b = Basis::new(1, m).unwrap();
            let n = norms_fd(&winding(&b, 1.0), &b).unwrap();
            errs.push((n.h1 * n.h1 - 1.0 - PI * PI / 2.0).abs());
        }
        assert!(errs[2] < 1e-3);
        let order = (errs[1] / errs[2]).log2();
        assert!(order > 1.8, "{errs:?}");
    }

    #[test]
    fn l4_of_gradient_closed_form() {
        // |d_x v|^4 = pi^4 sin^4(pi x), integral 3 pi^4 / 8
        let b = Basis::new(64, 256).unwrap();
        let n = norms(&winding(&b, 1.0), &b).unwrap();
        assert!((n.l4_of_gradient.powi(4) - 3.0 * PI.powi(4) / 8.0).abs() < 1e-6);
    }

    #[test]
    fn exchange_energy_examples() {
        let b = Basis::new(32, 128).unwrap();
        let c = GalerkinState::from_coeffs(vec![[0.3, 0.4, 0.5]]);
        assert_eq!(exchange_energy(&c, &b).unwrap(), 0.0);

        let m = b.project(&winding(&b, 1.0)).unwrap();
        let e = exchange_energy(&m, &b).unwrap();
        assert!((e - PI * PI / 4.0).abs() <= 1e-6, "{e}");

        let e2 = exchange_energy(&m.scaled(2.0), &b).unwrap();
        assert!((e2 - 4.0 * e).abs() < 1e-12);
        // quadrature and coefficient routes agree
        assert!((2.0 * e - m.gradient_norm_sq()).abs() < 1e-10);
    }

    #[test]
    fn sphere_deviation_examples() {
        let v = VectorField::constant(9, [0.0, 0.0, 1.0]);
        assert_eq!(sphere_deviation(&v), 0.0);
        assert!((sphere_deviation(&v.scaled(1.5)) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn lagrange_examples() {
        let a = VectorField::constant(4, [1.0, 0.0, 0.0]);
        let b = VectorField::constant(4, [0.0, 1.0, 0.0]);
        assert!(lagrange_identity_residual(&a, &b).unwrap() < 1e-15);
        assert!(lagrange_identity_residual(&a, &a).unwrap() < 1e-15);
    }

    proptest! {
        #[test]
        fn cross_is_antisymmetric_and_orthogonal(a in arb_field(9), b in arb_field(9)) {
            let ab = cross(&a, &b).unwrap();
            let ba = cross(&b, &a).unwrap();
            for (x, y) in ab.values().iter().zip(ba.values()) {
                prop_assert_eq!(*x, [-y[0], -y[1], -y[2]]);
            }
            for (c, (x, y)) in ab.values().iter().zip(a.values().iter().zip(b.values())) {
                let scale = 1.0 + dot3(x, x) * norm3(y);
                prop_assert!(dot3(c, x).abs() <= 1e-13 * scale);
            }
        }

        #[test]
        fn lagrange_identity_holds(a in prop::collection::vec(prop::array::uniform3(-1.0f64..1.0), 17),
                                   b in prop::collection::vec(prop::array::uniform3(-1.0f64..1.0), 17)) {
            // brute-force component expansion of the R^3 identity
            for (x, y) in a.iter().zip(&b) {
                let c = cross3(x, y);
                let lhs = c[0]*c[0] + c[1]*c[1] + c[2]*c[2] + (x[0]*y[0] + x[1]*y[1] + x[2]*y[2]).powi(2);
                let rhs = (x[0]*x[0] + x[1]*x[1] + x[2]*x[2]) * (y[0]*y[0] + y[1]*y[1] + y[2]*y[2]);
                prop_assert!((lhs - rhs).abs() <= 1e-12);
            }
            let r = lagrange_identity_residual(&VectorField::from_values(a), &VectorField::from_values(b)).unwrap();
            prop_assert!(r <= 1e-12);
        }

        #[test]
        fn norms_are_homogeneous(v in arb_field(33), t in -5.0f64..5.0) {
            let b = Basis::new(8, 32).unwrap();
            let n = norms(&v, &b).unwrap();
            let nt = norms(&v.scaled(t), &b).unwrap();
            prop_assert!((nt.l2 - t.abs() * n.l2).abs() <= 1e-12 * (1.0 + n.l2 * t.abs()));
            prop_assert!((nt.linf - t.abs() * n.linf).abs() <= 1e-12 * (1.0 + n.linf * t.abs()));
        }
    }
}
