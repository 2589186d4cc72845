//! Right-hand side of the Galerkin system.
//!
//! With `G(m) = m x h - alpha m x (m x h)` the truncated Ito system in `H_n` reads
//!
//! ```text
//! dm = [ P(m x Lm) - alpha P(m x (m x Lm)) + P(m x u) - alpha psi P(m x (m x u))
//!        + 1/2 psi^2 DG_n(m)(G_n(m)) ] dt + psi G_n(m) dW
//! ```
//!
//! where `L` is the Neumann Laplacian, `P = P_n` and `G_n = P_n G`. Products are
//! formed pointwise on the grid and projected back (pseudo-spectral), the
//! Laplacian is applied to coefficients.

use std::cell::OnceCell;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fields::{cross3, dot3, same_grid, Vec3, VectorField};
use crate::spectral::{Basis, GalerkinState};

#[derive(Debug, Clone)]
pub struct LlgParams {
    pub alpha: f64,
    h: VectorField,
    h_linf: f64,
    pub cutoff_enabled: bool,
    basis: Arc<Basis>,
}

impl LlgParams {
    pub fn new(alpha: f64, h: VectorField, cutoff_enabled: bool, basis: Arc<Basis>) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be positive, got {alpha}")));
        }
        Self::new_unchecked_alpha(alpha, h, cutoff_enabled, basis)
    }

    /// Like [`LlgParams::new`] but accepts `alpha = 0`, which the algebraic
    /// checks on `G` and `DG` use to isolate the gyromagnetic part.
    pub fn new_unchecked_alpha(alpha: f64, h: VectorField, cutoff_enabled: bool, basis: Arc<Basis>) -> Result<Self> {
        if !alpha.is_finite() || alpha < 0.0 {
            return Err(Error::Config(format!(
                "alpha must be finite and non-negative, got {alpha}"
            )));
        }
        if h.len() != basis.n_nodes() {
            return Err(Error::GridMismatch {
                expected: basis.n_nodes(),
                actual: h.len(),
            });
        }
        if !h.is_finite() {
            return Err(Error::Config("noise direction h is not finite".into()));
        }
        let h_linf = h.linf();
        Ok(LlgParams {
            alpha,
            h,
            h_linf,
            cutoff_enabled,
            basis,
        })
    }

    /// Constant noise direction `h`.
    pub fn with_constant_h(alpha: f64, h: Vec3, cutoff_enabled: bool, basis: Arc<Basis>) -> Result<Self> {
        let field = VectorField::constant(basis.n_nodes(), h);
        Self::new(alpha, field, cutoff_enabled, basis)
    }

    pub fn h(&self) -> &VectorField {
        &self.h
    }

    pub fn h_linf(&self) -> f64 {
        self.h_linf
    }

    pub fn basis(&self) -> &Arc<Basis> {
        &self.basis
    }
}

#[inline]
fn g_point(v: &Vec3, k: &Vec3, alpha: f64) -> Vec3 {
    let vk = cross3(v, k);
    let vvk = cross3(v, &vk);
    [vk[0] - alpha * vvk[0], vk[1] - alpha * vvk[1], vk[2] - alpha * vvk[2]]
}

#[inline]
fn dg_point(v: &Vec3, w: &Vec3, h: &Vec3, alpha: f64) -> Vec3 {
    let wh = cross3(w, h);
    let a = cross3(v, &wh);
    let b = cross3(w, &cross3(v, h));
    [
        wh[0] - alpha * (a[0] + b[0]),
        wh[1] - alpha * (a[1] + b[1]),
        wh[2] - alpha * (a[2] + b[2]),
    ]
}

/// `G(v) k = v x k - alpha v x (v x k)`, pointwise.
pub fn g_apply(v: &VectorField, k: &VectorField, params: &LlgParams) -> Result<VectorField> {
    same_grid(v, k)?;
    Ok(v.zip_with(k, |a, b| g_point(a, b, params.alpha)))
}

/// Frechet derivative `DG(v)(w) h = w x h - alpha [v x (w x h) + w x (v x h)]` with `h` from `params`.
pub fn dg_apply(v: &VectorField, w: &VectorField, params: &LlgParams) -> Result<VectorField> {
    same_grid(v, w)?;
    same_grid(v, &params.h)?;
    let alpha = params.alpha;
    Ok(VectorField::from_values(
        v.values()
            .iter()
            .zip(w.values())
            .zip(params.h.values())
            .map(|((v, w), h)| dg_point(v, w, h, alpha))
            .collect(),
    ))
}

/// `C^1` plateau function: 1 on `[0, |h|_inf + 1]`, 0 beyond `|h|_inf + 2`,
/// joined by a quintic smoothstep.
pub fn psi0(x: f64, h_linf: f64) -> f64 {
    let s = (x.abs() - (h_linf + 1.0)).clamp(0.0, 1.0);
    1.0 - s * s * s * (s * (6.0 * s - 15.0) + 10.0)
}

fn pointwise(a: &[Vec3], b: &[Vec3], f: impl Fn(&Vec3, &Vec3) -> Vec3) -> Vec<Vec3> {
    a.iter().zip(b).map(|(x, y)| f(x, y)).collect()
}

fn linf(values: &[Vec3]) -> f64 {
    values.iter().map(|v| dot3(v, v).sqrt()).fold(0.0, f64::max)
}

/// Grid quantities shared by every coefficient of the system at one state.
struct Evaluation<'a> {
    params: &'a LlgParams,
    m: Vec<Vec3>,
    m_cross_h: Vec<Vec3>,
    // synthesised P_n(m x h) and P_n(m x (m x h)), built on first use
    projected: OnceCell<(Vec<Vec3>, Vec<Vec3>)>,
    proj_mh_coeffs: GalerkinState,
    proj_mmh_coeffs: GalerkinState,
    psi: f64,
}

impl<'a> Evaluation<'a> {
    fn new(state: &GalerkinState, params: &'a LlgParams) -> Result<Self> {
        let basis = &params.basis;
        if state.n_modes() != basis.n_modes() {
            return Err(Error::ModeMismatch {
                state: state.n_modes(),
                basis: basis.n_modes(),
            });
        }
        let m = basis.synthesize(state)?.into_values();
        let h = params.h.values();
        let m_cross_h = pointwise(&m, h, cross3);
        let mmh = pointwise(&m, &m_cross_h, cross3);
        let proj_mh_coeffs = basis.project_values(&m_cross_h);
        let proj_mmh_coeffs = basis.project_values(&mmh);
        let mut ev = Evaluation {
            params,
            m,
            m_cross_h,
            projected: OnceCell::new(),
            proj_mh_coeffs,
            proj_mmh_coeffs,
            psi: 1.0,
        };
        if params.cutoff_enabled {
            let (a, b) = ev.projected();
            ev.psi = psi0(linf(&ev.m), params.h_linf) * psi0(linf(a), params.h_linf) * psi0(linf(b), params.h_linf);
        }
        Ok(ev)
    }

    fn projected(&self) -> (&[Vec3], &[Vec3]) {
        let (a, b) = self.projected.get_or_init(|| {
            let basis = &self.params.basis;
            (
                basis.expand_values(&self.proj_mh_coeffs),
                basis.expand_values(&self.proj_mmh_coeffs),
            )
        });
        (a, b)
    }

    /// `G_n(m) = P(m x h) - alpha P(m x (m x h))`, without the cut-off.
    fn noise(&self) -> GalerkinState {
        let mut g = self.proj_mh_coeffs.clone();
        g.axpy(-self.params.alpha, &self.proj_mmh_coeffs);
        g
    }

    /// The six projected terms of `DG_n(m)(G_n(m))`, without the cut-off.
    fn correction_terms(&self) -> [GalerkinState; 6] {
        let basis = &self.params.basis;
        let alpha = self.params.alpha;
        let h = self.params.h.values();
        let (a, b) = self.projected();
        let (m, mh) = (&self.m, &self.m_cross_h);
        let a_h = pointwise(a, h, cross3);
        let b_h = pointwise(b, h, cross3);
        let t1 = basis.project_values(&a_h);
        let t2 = basis.project_values(&b_h).scaled(-alpha);
        let t3 = basis.project_values(&pointwise(a, mh, cross3)).scaled(-alpha);
        let t4 = basis.project_values(&pointwise(m, &a_h, cross3)).scaled(-alpha);
        let t5 = basis.project_values(&pointwise(b, mh, cross3)).scaled(alpha * alpha);
        let t6 = basis.project_values(&pointwise(m, &b_h, cross3)).scaled(alpha * alpha);
        [t1, t2, t3, t4, t5, t6]
    }

    fn correction(&self) -> GalerkinState {
        let mut sum = GalerkinState::zeros(self.params.basis.n_modes());
        for t in self.correction_terms() {
            sum.axpy(1.0, &t);
        }
        sum.scaled(self.psi * self.psi)
    }

    fn correction_composed(&self) -> GalerkinState {
        let alpha = self.params.alpha;
        let (a, b) = self.projected();
        let g: Vec<Vec3> = pointwise(a, b, |a, b| {
            [a[0] - alpha * b[0], a[1] - alpha * b[1], a[2] - alpha * b[2]]
        });
        let dg: Vec<Vec3> = self
            .m
            .iter()
            .zip(&g)
            .zip(self.params.h.values())
            .map(|((m, g), h)| dg_point(m, g, h, alpha))
            .collect();
        self.params.basis.project_values(&dg).scaled(self.psi * self.psi)
    }

    /// Pointwise integrands of the four cross-product drift terms.
    fn drift_integrands(&self, state: &GalerkinState, u: Option<&VectorField>) -> Result<[Vec<Vec3>; 4]> {
        let basis = &self.params.basis;
        let alpha = self.params.alpha;
        let lap = basis.synthesize(&state.laplacian())?.into_values();
        let m_lap = pointwise(&self.m, &lap, cross3);
        let mm_lap = pointwise(&self.m, &m_lap, cross3);
        let (m_u, mm_u) = match u {
            Some(u) => {
                if u.len() != basis.n_nodes() {
                    return Err(Error::GridMismatch {
                        expected: basis.n_nodes(),
                        actual: u.len(),
                    });
                }
                let m_u = pointwise(&self.m, u.values(), cross3);
                let mm_u = pointwise(&self.m, &m_u, cross3);
                (m_u, mm_u)
            }
            None => {
                let z = vec![[0.0; 3]; basis.n_nodes()];
                (z.clone(), z)
            }
        };
        let scale =
            |v: Vec<Vec3>, s: f64| -> Vec<Vec3> { v.into_iter().map(|x| [s * x[0], s * x[1], s * x[2]]).collect() };
        Ok([m_lap, scale(mm_lap, -alpha), m_u, scale(mm_u, -alpha * self.psi)])
    }

    /// Stratonovich drift: the Ito drift without the correction term.
    fn drift_stratonovich(&self, state: &GalerkinState, u: Option<&VectorField>) -> Result<GalerkinState> {
        let [t1, t2, t3, t4] = self.drift_integrands(state, u)?;
        let sum: Vec<Vec3> = (0..t1.len())
            .map(|j| {
                let mut s = [0.0; 3];
                for t in [&t1, &t2, &t3, &t4] {
                    s[0] += t[j][0];
                    s[1] += t[j][1];
                    s[2] += t[j][2];
                }
                s
            })
            .collect();
        Ok(self.params.basis.project_values(&sum))
    }
}

/// Drift and diffusion of the Galerkin SDE evaluated at one state.
#[derive(Debug, Clone)]
pub struct Coefficients {
    /// Drift without the Ito correction.
    pub drift_stratonovich: GalerkinState,
    /// `psi^2 DG_n(m)(G_n(m))`, without the factor 1/2.
    pub correction: GalerkinState,
    /// `psi G_n(m)`
    pub diffusion: GalerkinState,
    pub psi: f64,
}

impl Coefficients {
    pub fn drift_ito(&self) -> GalerkinState {
        let mut d = self.drift_stratonovich.clone();
        d.axpy(0.5, &self.correction);
        d
    }
}

/// Evaluates every coefficient at `state`. `include_correction = false` skips
/// the six correction projections and leaves `correction` zero.
pub fn coefficients(
    state: &GalerkinState,
    u: Option<&VectorField>,
    params: &LlgParams,
    include_correction: bool,
) -> Result<Coefficients> {
    let ev = Evaluation::new(state, params)?;
    let drift_stratonovich = ev.drift_stratonovich(state, u)?;
    let correction = if include_correction {
        ev.correction()
    } else {
        GalerkinState::zeros(state.n_modes())
    };
    Ok(Coefficients {
        drift_stratonovich,
        correction,
        diffusion: ev.noise().scaled(ev.psi),
        psi: ev.psi,
    })
}

/// Cut-off `psi_n(v)` from the three `L^inf` arguments; 1 when the cut-off is disabled.
pub fn psi_cutoff(v: &VectorField, params: &LlgParams) -> Result<f64> {
    let basis = &params.basis;
    same_grid(v, &params.h)?;
    let h = params.h.values();
    let vh = pointwise(v.values(), h, cross3);
    let vvh = pointwise(v.values(), &vh, cross3);
    let a = basis.synthesize(&basis.project_values(&vh))?;
    let b = basis.synthesize(&basis.project_values(&vvh))?;
    let hl = params.h_linf;
    Ok(psi0(v.linf(), hl) * psi0(a.linf(), hl) * psi0(b.linf(), hl))
}

/// Projected noise coefficient `G_n(m)` (no cut-off).
pub fn noise_coefficient(state: &GalerkinState, params: &LlgParams) -> Result<GalerkinState> {
    Ok(Evaluation::new(state, params)?.noise())
}

/// `psi^2 DG_n(m)(G_n(m))` by the expanded six-term formula, without the leading 1/2.
pub fn correction(state: &GalerkinState, params: &LlgParams) -> Result<GalerkinState> {
    Ok(Evaluation::new(state, params)?.correction())
}

/// The six projected terms of the expansion, without the cut-off factor.
pub fn correction_terms(state: &GalerkinState, params: &LlgParams) -> Result<[GalerkinState; 6]> {
    Ok(Evaluation::new(state, params)?.correction_terms())
}

/// `psi^2 P_n[ DG(m)(G_n(m)) ]` assembled through [`dg_apply`]'s pointwise formula.
pub fn correction_composed(state: &GalerkinState, params: &LlgParams) -> Result<GalerkinState> {
    Ok(Evaluation::new(state, params)?.correction_composed())
}

/// The four projected cross-product drift terms, in order
/// `P(m x Lm)`, `-alpha P(m x (m x Lm))`, `P(m x u)`, `-alpha psi P(m x (m x u))`.
pub fn drift_terms(state: &GalerkinState, u: Option<&VectorField>, params: &LlgParams) -> Result<[GalerkinState; 4]> {
    let ev = Evaluation::new(state, params)?;
    let terms = ev.drift_integrands(state, u)?;
    Ok(terms.map(|t| params.basis.project_values(&t)))
}

/// Full Ito drift of the truncated Galerkin system.
pub fn drift_ito(state: &GalerkinState, u: Option<&VectorField>, params: &LlgParams) -> Result<GalerkinState> {
    Ok(coefficients(state, u, params, true)?.drift_ito())
}

/// `L^2` norm of `m x (m x Lm) + Lm + |grad m|^2 m` on the grid. Vanishes for
/// smooth sphere-valued `m` up to truncation error.
pub fn triple_product_residual(state: &GalerkinState, basis: &Basis) -> Result<f64> {
    let m = basis.synthesize(state)?;
    let lap = basis.synthesize(&state.laplacian())?;
    let grad = basis.spatial_derivative(state)?;
    let r: Vec<f64> = m
        .values()
        .iter()
        .zip(lap.values())
        .zip(grad.values())
        .map(|((m, l), g)| {
            let t = cross3(m, &cross3(m, l));
            let g2 = dot3(g, g);
            let r = [
                t[0] + l[0] + g2 * m[0],
                t[1] + l[1] + g2 * m[1],
                t[2] + l[2] + g2 * m[2],
            ];
            dot3(&r, &r)
        })
        .collect();
    Ok(basis.integrate(&r).sqrt())
}
