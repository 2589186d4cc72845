//! Controls, the Monte-Carlo cost and its derivative-free minimisation.
//!
//! A control is `u(t, x) = sum_{j,k} c_{jk} phi_j(t) e_k(x)` with `phi_j` the
//! indicator of the `j`-th of `J_t` equal time windows and `e_k` the first
//! `J_x` cosine modes. Because both families are orthonormal the effort is
//! `int_0^T |u|_{L^2}^2 dt = (T / J_t) sum |c_{jk}|^2`.
//!
//! The cost of a control is
//! `J = E[ int_0^T |m - mbar|_{H^1}^2 dt + int_0^T |u|_{L^2}^2 dt + |m(T) - mbar|_{L^2}^2 ]`
//! with a constant sphere-valued target `mbar`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{norm3, Vec3, VectorField};
use crate::integrators::{ensemble_path, integrate_observed, with_worker_pool, ControlSource, SimConfig};
use crate::spectral::{eigenvalue, Basis, GalerkinState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlParam {
    /// `J_t`
    pub n_windows: usize,
    /// `J_x`
    pub n_space: usize,
    /// Horizon `T` the windows partition.
    pub horizon: f64,
    /// Admissibility radius `K` on `int_0^T |u|^2 dt`.
    pub radius: f64,
    /// Row-major `J_t x J_x`.
    pub coeffs: Vec<Vec3>,
}

impl ControlParam {
    pub fn zeros(n_windows: usize, n_space: usize, horizon: f64, radius: f64) -> Result<Self> {
        let p = ControlParam {
            n_windows,
            n_space,
            horizon,
            radius,
            coeffs: vec![[0.0; 3]; n_windows * n_space],
        };
        p.validate()?;
        Ok(p)
    }

    /// `J_t = 4`, `J_x = 2`, `K = 10`.
    pub fn default_for(horizon: f64) -> Self {
        ControlParam::zeros(4, 2, horizon, 10.0).expect("default control shape is valid")
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_windows == 0 || self.n_space == 0 {
            return Err(Error::Config("control needs J_t >= 1 and J_x >= 1".into()));
        }
        if self.coeffs.len() != self.n_windows * self.n_space {
            return Err(Error::Config(format!(
                "control has {} coefficients, expected J_t * J_x = {}",
                self.coeffs.len(),
                self.n_windows * self.n_space
            )));
        }
        if self.horizon.is_nan() || self.horizon <= 0.0 || self.radius.is_nan() || self.radius <= 0.0 {
            return Err(Error::Config("control horizon and radius must be positive".into()));
        }
        if !self.coeffs.iter().flatten().all(|x| x.is_finite()) {
            return Err(Error::Config("control coefficients must be finite".into()));
        }
        Ok(())
    }

    pub fn coeff(&self, window: usize, mode: usize) -> Vec3 {
        self.coeffs[window * self.n_space + mode]
    }

    pub fn coeff_mut(&mut self, window: usize, mode: usize) -> &mut Vec3 {
        &mut self.coeffs[window * self.n_space + mode]
    }

    /// Closed-form `int_0^T |u(t)|_{L^2}^2 dt`.
    pub fn effort(&self) -> f64 {
        let window = self.horizon / self.n_windows as f64;
        window
            * self
                .coeffs
                .iter()
                .map(|c| c[0] * c[0] + c[1] * c[1] + c[2] * c[2])
                .sum::<f64>()
    }

    pub fn scaled(&self, s: f64) -> ControlParam {
        ControlParam {
            coeffs: self.coeffs.iter().map(|c| [s * c[0], s * c[1], s * c[2]]).collect(),
            ..self.clone()
        }
    }
}

/// Radial projection onto `{ int |u|^2 dt <= K }`.
pub fn admissibility_project(p: &ControlParam) -> ControlParam {
    let e = p.effort();
    // relative slack keeps the projection idempotent under rounding
    if e <= p.radius * (1.0 + 1e-12) {
        p.clone()
    } else {
        p.scaled((p.radius / e).sqrt())
    }
}

/// Grid samples of a realised control, one field per time window.
#[derive(Debug, Clone)]
pub struct ControlField {
    horizon: f64,
    windows: Vec<Option<VectorField>>,
}

impl ControlField {
    pub fn n_windows(&self) -> usize {
        self.windows.len()
    }

    pub fn window_index(&self, t: f64) -> usize {
        let j = (t / self.horizon * self.windows.len() as f64 + 1e-9).floor();
        (j.max(0.0) as usize).min(self.windows.len() - 1)
    }

    pub fn window(&self, j: usize) -> Option<&VectorField> {
        self.windows[j].as_ref()
    }

    /// Left-endpoint sum `sum_i dt |u(t_i)|_{L^2}^2`, the effort the integrator
    /// actually applies on a uniform grid of `n_steps` steps.
    pub fn applied_effort(&self, basis: &Basis, n_steps: usize, dt: f64) -> f64 {
        (0..n_steps)
            .map(|i| match self.slice(i as f64 * dt) {
                Some(u) => dt * crate::fields::l2_norm(u, basis).powi(2),
                None => 0.0,
            })
            .sum()
    }
}

impl ControlSource for ControlField {
    fn slice(&self, t: f64) -> Option<&VectorField> {
        self.windows[self.window_index(t)].as_ref()
    }
}

/// Samples `u(t, .)` on the basis grid for each time window.
pub fn realize_control(p: &ControlParam, basis: &Basis) -> Result<ControlField> {
    p.validate()?;
    if p.n_space > basis.n_modes() {
        return Err(Error::ModeMismatch {
            state: p.n_space,
            basis: basis.n_modes(),
        });
    }
    let windows = (0..p.n_windows)
        .map(|j| {
            let coeffs: Vec<Vec3> = (0..p.n_space).map(|k| p.coeff(j, k)).collect();
            if coeffs.iter().flatten().all(|x| *x == 0.0) {
                return Ok(None);
            }
            basis.synthesize(&GalerkinState::from_coeffs(coeffs)).map(Some)
        })
        .collect::<Result<_>>()?;
    Ok(ControlField {
        horizon: p.horizon,
        windows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostSpec {
    /// Constant target `mbar`; must be a unit vector.
    pub target: Vec3,
}

impl Default for CostSpec {
    fn default() -> Self {
        CostSpec {
            target: [0.0, 0.0, 1.0],
        }
    }
}

impl CostSpec {
    pub fn validate(&self) -> Result<()> {
        if (norm3(&self.target) - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "cost target {:?} is not a unit vector",
                self.target
            )));
        }
        Ok(())
    }

    /// `mbar` in Galerkin coefficients: a constant lives entirely in mode 0.
    pub fn target_state(&self, n_modes: usize) -> GalerkinState {
        let mut s = GalerkinState::zeros(n_modes);
        s.coeffs[0] = self.target;
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub j: f64,
    /// `E int |m - mbar|_{H^1}^2 dt`
    pub tracking: f64,
    /// `int |u|_{L^2}^2 dt` as applied by the integrator.
    pub control: f64,
    /// `E |m(T) - mbar|_{L^2}^2`
    pub terminal: f64,
    /// Standard error of the per-path cost.
    pub std_error: f64,
    pub n_paths: usize,
    pub n_failed: usize,
    pub seed: u64,
    pub per_path: Vec<Option<f64>>,
}

fn h1_distance_sq(a: &GalerkinState, b: &GalerkinState) -> f64 {
    a.coeffs
        .iter()
        .zip(&b.coeffs)
        .enumerate()
        .map(|(k, (x, y))| {
            let d = [x[0] - y[0], x[1] - y[1], x[2] - y[2]];
            (1.0 + eigenvalue(k)) * (d[0] * d[0] + d[1] * d[1] + d[2] * d[2])
        })
        .sum()
}

/// Tracking and terminal cost of one path.
fn path_cost(
    sim: &SimConfig,
    control: &ControlField,
    target: &GalerkinState,
    path: &crate::integrators::WienerPath,
) -> Result<(f64, f64)> {
    let mut tracking = 0.0;
    let mut last: Option<(f64, f64)> = None;
    let final_state = integrate_observed(sim, control, path, |_, t, s| {
        let d = h1_distance_sq(s, target);
        if let Some((t0, d0)) = last {
            tracking += 0.5 * (t - t0) * (d0 + d);
        }
        last = Some((t, d));
    })?;
    Ok((tracking, final_state.distance(target).powi(2)))
}

/// Monte-Carlo estimate of `J` over `n_paths` seeded paths. Paths that blow up
/// are excluded from the average and counted in `n_failed`.
pub fn evaluate_cost(
    p: &ControlParam,
    cost: &CostSpec,
    sim: &SimConfig,
    n_paths: usize,
    master_seed: u64,
) -> Result<CostReport> {
    cost.validate()?;
    if n_paths < 1 {
        return Err(Error::Config("n_paths must be >= 1".into()));
    }
    if (p.horizon - sim.t_final).abs() > 1e-12 * sim.t_final.max(1.0) {
        return Err(Error::Config(format!(
            "control horizon {} differs from t_final {}",
            p.horizon, sim.t_final
        )));
    }
    let basis = sim.basis();
    let control = realize_control(p, basis)?;
    let target = cost.target_state(basis.n_modes());
    let effort = control.applied_effort(basis, sim.n_steps(), sim.dt);

    let per_path: Vec<Option<(f64, f64)>> = with_worker_pool(|| {
        (0..n_paths)
            .into_par_iter()
            .map(|i| {
                let path = ensemble_path(sim, master_seed, i)?;
                match path_cost(sim, &control, &target, &path) {
                    Ok(v) => Ok(Some(v)),
                    Err(Error::BlowUp { step, .. }) => {
                        log::warn!("cost path {i} blew up at step {step}");
                        Ok(None)
                    }
                    Err(e) => Err(e),
                }
            })
            .collect::<Result<_>>()
    })?;

    let ok: Vec<(f64, f64)> = per_path.iter().flatten().copied().collect();
    if ok.is_empty() {
        return Err(Error::AllPathsFailed { n_paths });
    }
    let n = ok.len() as f64;
    let tracking = ok.iter().map(|v| v.0).sum::<f64>() / n;
    let terminal = ok.iter().map(|v| v.1).sum::<f64>() / n;
    let j = tracking + effort + terminal;
    let var = if ok.len() > 1 {
        ok.iter().map(|v| (v.0 + v.1 + effort - j).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(CostReport {
        j,
        tracking,
        control: effort,
        terminal,
        std_error: (var / n).sqrt(),
        n_paths,
        n_failed: n_paths - ok.len(),
        seed: master_seed,
        per_path: per_path.iter().map(|v| v.map(|(a, b)| a + b + effort)).collect(),
    })
}

/// Which coefficients the optimiser moves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ControlFamily {
    /// All `3 J_t J_x` coefficients.
    Full,
    /// One scalar per `(window, mode)` along a fixed direction.
    Direction { direction: Vec3 },
}

impl ControlFamily {
    pub fn dimension(&self, p: &ControlParam) -> usize {
        match self {
            ControlFamily::Full => 3 * p.coeffs.len(),
            ControlFamily::Direction { .. } => p.coeffs.len(),
        }
    }

    fn unit(direction: &Vec3) -> Vec3 {
        let r = norm3(direction);
        [direction[0] / r, direction[1] / r, direction[2] / r]
    }

    pub fn encode(&self, p: &ControlParam) -> Vec<f64> {
        match self {
            ControlFamily::Full => p.coeffs.iter().flatten().copied().collect(),
            ControlFamily::Direction { direction } => {
                let d = Self::unit(direction);
                p.coeffs.iter().map(|c| crate::fields::dot3(c, &d)).collect()
            }
        }
    }

    pub fn decode(&self, template: &ControlParam, theta: &[f64]) -> ControlParam {
        let coeffs = match self {
            ControlFamily::Full => theta.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
            ControlFamily::Direction { direction } => {
                let d = Self::unit(direction);
                theta.iter().map(|s| [s * d[0], s * d[1], s * d[2]]).collect()
            }
        };
        ControlParam {
            coeffs,
            ..template.clone()
        }
    }

    fn validate(&self) -> Result<()> {
        if let ControlFamily::Direction { direction } = self {
            if norm3(direction).is_nan() || norm3(direction) == 0.0 {
                return Err(Error::Config("control family direction must be non-zero".into()));
            }
        }
        Ok(())
    }
}

/// SPSA settings. Gains follow `a_k = a / (k + 1 + A)^0.602`,
/// `c_k = c / (k + 1)^0.101`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptConfig {
    pub iterations: usize,
    /// Step gain; `None` calibrates it so the first step has length `initial_step`.
    pub a: Option<f64>,
    pub initial_step: f64,
    pub c: f64,
    pub big_a: f64,
    pub alpha_exponent: f64,
    pub gamma_exponent: f64,
    /// Reuse the same Wiener paths for every cost evaluation.
    pub common_random_numbers: bool,
    /// Only accept iterates that do not increase `J`.
    pub greedy: bool,
    pub n_paths: usize,
    /// Seed of the perturbation directions.
    pub seed: u64,
    pub family: ControlFamily,
    pub n_windows: usize,
    pub n_space: usize,
    pub radius: f64,
}

impl Default for OptConfig {
    fn default() -> Self {
        OptConfig {
            iterations: 40,
            a: None,
            initial_step: 1.0,
            c: 0.2,
            big_a: 4.0,
            alpha_exponent: 0.602,
            gamma_exponent: 0.101,
            common_random_numbers: true,
            greedy: true,
            n_paths: 16,
            seed: 0,
            family: ControlFamily::Full,
            n_windows: 4,
            n_space: 2,
            radius: 10.0,
        }
    }
}

impl OptConfig {
    pub fn initial_control(&self, horizon: f64) -> Result<ControlParam> {
        ControlParam::zeros(self.n_windows, self.n_space, horizon, self.radius)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    /// Cost of the current (accepted) iterate after this iteration.
    pub j: f64,
    /// Cost of the candidate proposed at this iteration.
    pub candidate_j: Option<f64>,
    pub a_k: f64,
    pub c_k: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptResult {
    pub best: ControlParam,
    pub best_report: CostReport,
    pub initial_report: CostReport,
    pub trace: Vec<TraceRow>,
}

impl OptResult {
    pub fn trace_csv(&self) -> String {
        let mut s = String::from("iteration,j,candidate_j,a_k,c_k,accepted\n");
        for r in &self.trace {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.iteration,
                r.j,
                r.candidate_j.map(|v| v.to_string()).unwrap_or_default(),
                r.a_k,
                r.c_k,
                r.accepted as u8
            ));
        }
        s
    }
}

/// Simultaneous-perturbation stochastic approximation over `opt.family`.
///
/// Every iterate is admissibility-projected. With common random numbers each
/// evaluation reuses the paths of `master_seed`, so `J` is a deterministic
/// function of the parameters and greedy acceptance makes the accepted
/// sequence non-increasing. Returns the best parameters seen.
pub fn optimize_spsa(
    p0: &ControlParam,
    cost: &CostSpec,
    sim: &SimConfig,
    opt: &OptConfig,
    master_seed: u64,
) -> Result<OptResult> {
    opt.family.validate()?;
    let family = &opt.family;
    let p0 = admissibility_project(p0);
    let initial_report = evaluate_cost(&p0, cost, sim, opt.n_paths, master_seed)?;

    let eval_seed = |k: usize, probe: u64| -> u64 {
        if opt.common_random_numbers {
            master_seed
        } else {
            crate::integrators::path_seed(master_seed, ((k as u64 + 1) << 2) | probe)
        }
    };
    let project = |theta: &[f64]| -> Vec<f64> { family.encode(&admissibility_project(&family.decode(&p0, theta))) };
    let eval = |theta: &[f64], seed: u64| -> Result<Option<CostReport>> {
        match evaluate_cost(&family.decode(&p0, theta), cost, sim, opt.n_paths, seed) {
            Ok(r) => Ok(Some(r)),
            Err(Error::AllPathsFailed { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    };

    let dim = family.dimension(&p0);
    let mut rng = ChaCha8Rng::seed_from_u64(opt.seed);
    let mut theta = family.encode(&p0);
    let mut current_j = initial_report.j;
    let mut best = (p0.clone(), initial_report.clone());
    let mut trace = Vec::with_capacity(opt.iterations);
    let mut perturb_scale = 1.0;
    let gain_at = |a: f64, k: usize| a / (k as f64 + 1.0 + opt.big_a).powf(opt.alpha_exponent);
    let mut a = opt.a;

    for k in 0..opt.iterations {
        let c_k = perturb_scale * opt.c / (k as f64 + 1.0).powf(opt.gamma_exponent);
        let delta: Vec<f64> = (0..dim)
            .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
            .collect();
        let plus: Vec<f64> = theta.iter().zip(&delta).map(|(t, d)| t + c_k * d).collect();
        let minus: Vec<f64> = theta.iter().zip(&delta).map(|(t, d)| t - c_k * d).collect();
        let seed = eval_seed(k, 0);
        let (jp, jm) = match (eval(&plus, seed)?, eval(&minus, seed)?) {
            (Some(p), Some(m)) => (p.j, m.j),
            _ => {
                perturb_scale *= 0.5;
                trace.push(TraceRow {
                    iteration: k + 1,
                    j: current_j,
                    candidate_j: None,
                    a_k: a.map(|a| gain_at(a, k)).unwrap_or(0.0),
                    c_k,
                    accepted: false,
                });
                continue;
            }
        };
        let grad: Vec<f64> = delta.iter().map(|d| (jp - jm) / (2.0 * c_k * d)).collect();
        let gain = *a.get_or_insert_with(|| {
            let g = grad.iter().map(|x| x * x).sum::<f64>().sqrt();
            if g > 0.0 {
                opt.initial_step * (1.0 + opt.big_a).powf(opt.alpha_exponent) / g
            } else {
                opt.initial_step
            }
        });
        let a_k = gain_at(gain, k);
        let cand: Vec<f64> = theta.iter().zip(&grad).map(|(t, g)| t - a_k * g).collect();
        let cand = project(&cand);
        let cand_report = eval(&cand, eval_seed(k, 1))?;
        let cand_j = cand_report.as_ref().map(|r| r.j);
        let accepted = match cand_j {
            Some(j) => !opt.greedy || j <= current_j,
            None => {
                perturb_scale *= 0.5;
                false
            }
        };
        if accepted {
            theta = cand;
            current_j = cand_j.expect("accepted candidates have a cost");
            let report = cand_report.expect("accepted candidates have a cost");
            if report.j < best.1.j {
                best = (family.decode(&p0, &theta), report);
            }
        }
        trace.push(TraceRow {
            iteration: k + 1,
            j: current_j,
            candidate_j: cand_j,
            a_k,
            c_k,
            accepted,
        });
    }

    Ok(OptResult {
        best: best.0,
        best_report: best.1,
        initial_report,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{InitialPreset, NoiseSpec, RunConfig};
    use crate::integrators::NoControl;
    use proptest::prelude::*;

    fn sim(cfg: RunConfig) -> SimConfig {
        cfg.sim_config().unwrap()
    }

    fn quick() -> RunConfig {
        RunConfig {
            n_modes: 4,
            t_final: 0.2,
            dt: 2e-3,
            ..RunConfig::default()
        }
    }

    #[test]
    fn zero_control_realises_to_nothing() {
        let b = Basis::new(4, 16).unwrap();
        let p = ControlParam::default_for(1.0);
        let u = realize_control(&p, &b).unwrap();
        for t in [0.0, 0.3, 0.99] {
            assert!(u.slice(t).is_none());
        }
    }

    #[test]
    fn single_coefficient_is_one_window() {
        let b = Basis::new(4, 16).unwrap();
        let mut p = ControlParam::default_for(1.0);
        *p.coeff_mut(0, 0) = [1.0, 0.0, 0.0];
        let u = realize_control(&p, &b).unwrap();
        let s = u.slice(0.1).unwrap();
        assert!(s.values().iter().all(|v| *v == [1.0, 0.0, 0.0]));
        assert!(u.slice(0.25).is_none());
        assert!(u.slice(0.9).is_none());
        assert_eq!(u.window_index(0.2499), 0);
        assert_eq!(u.window_index(0.25), 1);
        assert_eq!(u.window_index(1.0), 3);
    }

    #[test]
    fn realisation_rejects_too_many_modes() {
        let b = Basis::new(2, 8).unwrap();
        let p = ControlParam::zeros(1, 3, 1.0, 1.0).unwrap();
        assert!(realize_control(&p, &b).is_err());
    }

    #[test]
    fn quadrature_effort_matches_closed_form() {
        let b = Basis::new(4, 32).unwrap();
        let mut p = ControlParam::default_for(1.0);
        *p.coeff_mut(0, 0) = [1.0, -2.0, 0.5];
        *p.coeff_mut(1, 1) = [0.0, 0.3, 0.0];
        *p.coeff_mut(3, 1) = [0.7, 0.0, -0.1];
        let hand = 0.25 * ((1.0 + 4.0 + 0.25) + 0.09 + (0.49 + 0.01));
        assert!((p.effort() - hand).abs() < 1e-14);
        let u = realize_control(&p, &b).unwrap();
        let quad = u.applied_effort(&b, 400, 1.0 / 400.0);
        assert!((quad - hand).abs() < 1e-10, "{quad} {hand}");
    }

    #[test]
    fn admissibility_examples() {
        let p = ControlParam::default_for(1.0);
        assert_eq!(admissibility_project(&p), p);

        let mut q = ControlParam::default_for(1.0);
        // effort = 0.25 * 160 = 40 = 4 K
        *q.coeff_mut(2, 0) = [0.0, 0.0, 160f64.sqrt()];
        assert!((q.effort() - 40.0).abs() < 1e-12);
        let r = admissibility_project(&q);
        assert!((r.effort() - 10.0).abs() < 1e-10);
        assert!((r.coeff(2, 0)[2] - 0.5 * q.coeff(2, 0)[2]).abs() < 1e-12);
        assert_eq!(admissibility_project(&r), r);
    }

    proptest! {
        #[test]
        fn projection_never_increases_effort(c in prop::collection::vec(prop::array::uniform3(-20.0f64..20.0), 8)) {
            let p = ControlParam { coeffs: c, ..ControlParam::default_for(0.5) };
            let q = admissibility_project(&p);
            prop_assert!(q.effort() <= p.effort() + 1e-12);
            prop_assert!(q.effort() <= p.radius * (1.0 + 1e-12));
            prop_assert_eq!(admissibility_project(&q).coeffs, q.coeffs.clone());
        }

        #[test]
        fn effort_is_quadratic(c in prop::collection::vec(prop::array::uniform3(-3.0f64..3.0), 8), t in -4.0f64..4.0) {
            let p = ControlParam { coeffs: c, ..ControlParam::default_for(1.0) };
            prop_assert!((p.scaled(t).effort() - t * t * p.effort()).abs() <= 1e-10 * (1.0 + p.effort() * t * t));
        }
    }

    #[test]
    fn cost_vanishes_at_rest_on_target() {
        let s = sim(RunConfig {
            m0: InitialPreset::ConstantUp,
            h: NoiseSpec::Constant { value: [0.0; 3] },
            ..quick()
        });
        let r = evaluate_cost(&ControlParam::default_for(0.2), &CostSpec::default(), &s, 3, 1).unwrap();
        assert_eq!(r.j, 0.0);
        assert_eq!(r.n_failed, 0);
    }

    #[test]
    fn zero_control_has_zero_effort_term() {
        let s = sim(quick());
        let r = evaluate_cost(&ControlParam::default_for(0.2), &CostSpec::default(), &s, 4, 7).unwrap();
        assert_eq!(r.control, 0.0);
        assert!(r.tracking > 0.0 && r.terminal > 0.0);
        assert_eq!(r.j, r.tracking + r.control + r.terminal);
    }

    #[test]
    fn cost_is_additive_and_deterministic() {
        let s = sim(quick());
        let mut p = ControlParam::default_for(0.2);
        *p.coeff_mut(1, 0) = [0.0, 1.5, 0.0];
        let a = evaluate_cost(&p, &CostSpec::default(), &s, 4, 3).unwrap();
        let b = evaluate_cost(&p, &CostSpec::default(), &s, 4, 3).unwrap();
        assert_eq!(a, b);
        assert!((a.j - (a.tracking + a.control + a.terminal)).abs() <= 1e-12);
        assert!((a.control - p.effort()).abs() < 1e-10);
    }

    #[test]
    fn cost_rejects_wrong_horizon_and_target() {
        let s = sim(quick());
        assert!(evaluate_cost(&ControlParam::default_for(0.3), &CostSpec::default(), &s, 1, 0).is_err());
        let bad = CostSpec {
            target: [0.0, 0.0, 2.0],
        };
        assert!(evaluate_cost(&ControlParam::default_for(0.2), &bad, &s, 1, 0).is_err());
    }

    #[test]
    fn zero_iterations_pass_through() {
        let s = sim(quick());
        let p0 = ControlParam::default_for(0.2);
        let opt = OptConfig {
            iterations: 0,
            n_paths: 2,
            ..OptConfig::default()
        };
        let r = optimize_spsa(&p0, &CostSpec::default(), &s, &opt, 5).unwrap();
        assert_eq!(r.best, p0);
        assert!(r.trace.is_empty());
        assert_eq!(r.best_report, r.initial_report);
    }

    #[test]
    fn greedy_spsa_is_monotone_and_admissible() {
        let s = sim(quick());
        let p0 = ControlParam::default_for(0.2);
        let opt = OptConfig {
            iterations: 8,
            n_paths: 2,
            radius: 1.0,
            ..OptConfig::default()
        };
        let p0 = ControlParam {
            radius: opt.radius,
            ..p0
        };
        let r = optimize_spsa(&p0, &CostSpec::default(), &s, &opt, 5).unwrap();
        let mut prev = r.initial_report.j;
        for row in &r.trace {
            assert!(row.j <= prev);
            prev = row.j;
        }
        assert!(r.best.effort() <= r.best.radius * (1.0 + 1e-12));
        assert!(r.best_report.j <= r.initial_report.j);
    }

    #[test]
    fn path_blow_up_is_excluded() {
        // explicit Euler far past its stability limit
        let s = sim(RunConfig {
            n_modes: 8,
            dt: 0.02,
            t_final: 0.4,
            scheme: crate::integrators::Scheme::Ito,
            m0: InitialPreset::Winding { a: 3.0 },
            ..RunConfig::default()
        });
        let e = evaluate_cost(&ControlParam::default_for(0.4), &CostSpec::default(), &s, 2, 0);
        assert!(matches!(e, Err(Error::AllPathsFailed { n_paths: 2 })), "{e:?}");
        // and the plain integrator agrees
        let path = crate::integrators::ensemble_path(&s, 0, 0).unwrap();
        assert!(crate::integrators::integrate(&s, &NoControl, &path).is_err());
    }

    #[test]
    fn direction_family_round_trips() {
        let f = ControlFamily::Direction {
            direction: [0.0, 2.0, 0.0],
        };
        let p = ControlParam::zeros(2, 1, 0.5, 10.0).unwrap();
        let q = f.decode(&p, &[1.5, -0.5]);
        assert_eq!(q.coeffs, vec![[0.0, 1.5, 0.0], [0.0, -0.5, 0.0]]);
        assert_eq!(f.encode(&q), vec![1.5, -0.5]);
        assert_eq!(f.dimension(&p), 2);
        assert_eq!(ControlFamily::Full.dimension(&p), 6);
    }
}
