//! Wiener paths and time stepping for the Galerkin SDE.
//!
//! Two explicit schemes are provided. [`step_ito`] is Euler-Maruyama on the Ito
//! form, carrying the correction `1/2 psi^2 DG_n(G_n)` in the drift.
//! [`step_heun_stratonovich`] integrates the Stratonovich form directly with a
//! predictor-corrector that averages both drift and diffusion, so the
//! correction is omitted. Both are explicit, so `dt * lambda_{n-1}` has to stay
//! moderate; [`SimConfig::new`] warns past 1.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{PathAccumulator, PathStats};
use crate::dynamics::{coefficients, LlgParams};
use crate::error::{Error, Result};
use crate::fields::VectorField;
use crate::spectral::{Basis, GalerkinState};

/// Coefficient magnitude treated as a blown-up solution.
pub const BLOW_UP_THRESHOLD: f64 = 1e6;

/// Environment variable capping the worker count of ensemble runs.
pub const THREADS_ENV: &str = "LLG_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Ito,
    #[default]
    Heun,
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ito" => Ok(Scheme::Ito),
            "heun" => Ok(Scheme::Heun),
            other => Err(Error::Config(format!("unknown scheme {other:?}, expected ito or heun"))),
        }
    }
}

/// SplitMix64 finaliser.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of path `index` in an ensemble: `splitmix64(master ^ splitmix64(index))`.
pub fn path_seed(master_seed: u64, index: u64) -> u64 {
    splitmix64(master_seed ^ splitmix64(index))
}

/// Number of uniform steps of size `dt` covering `[0, t_final]`.
pub fn step_count(t_final: f64, dt: f64) -> Result<usize> {
    let n = (t_final / dt).round();
    if (n * dt - t_final).abs() > 1e-9 * t_final.max(dt) {
        return Err(Error::Config(format!(
            "t_final = {t_final} is not an integer multiple of dt = {dt}"
        )));
    }
    Ok(n as usize)
}

/// Increments of a scalar Brownian motion on a uniform time grid.
///
/// Increments are `sqrt(dt) * Z` with `Z` standard normal drawn from a
/// `ChaCha8Rng` seeded with `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WienerPath {
    pub dt: f64,
    pub increments: Vec<f64>,
    pub seed: u64,
}

pub fn generate_wiener(seed: u64, n_steps: usize, dt: f64) -> Result<WienerPath> {
    if n_steps < 1 || dt.is_nan() || dt <= 0.0 {
        return Err(Error::Config(format!(
            "Wiener path needs n_steps >= 1 and dt > 0, got {n_steps} and {dt}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sd = dt.sqrt();
    let increments = (0..n_steps)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            sd * z
        })
        .collect();
    Ok(WienerPath { dt, increments, seed })
}

impl WienerPath {
    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.increments.len() as f64
    }

    /// Sums blocks of `factor` consecutive increments: the same Brownian path
    /// seen on a grid `factor` times coarser.
    pub fn coarsen(&self, factor: usize) -> Result<WienerPath> {
        if factor == 0 || !self.increments.len().is_multiple_of(factor) {
            return Err(Error::PathRefinement(format!(
                "cannot coarsen {} increments by {factor}",
                self.increments.len()
            )));
        }
        Ok(WienerPath {
            dt: self.dt * factor as f64,
            increments: self.increments.chunks_exact(factor).map(|c| c.iter().sum()).collect(),
            seed: self.seed,
        })
    }
}

/// Control slice `u(t, .)` seen by the integrator at the left end of each step.
pub trait ControlSource: Sync {
    fn slice(&self, t: f64) -> Option<&VectorField>;
}

/// The zero control.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoControl;

impl ControlSource for NoControl {
    fn slice(&self, _t: f64) -> Option<&VectorField> {
        None
    }
}

fn finite_or_blow_up(next: GalerkinState, prev: &GalerkinState) -> Result<GalerkinState> {
    if next.is_finite() && next.max_abs() <= BLOW_UP_THRESHOLD {
        Ok(next)
    } else {
        Err(Error::BlowUp {
            step: 0,
            time: 0.0,
            last_finite: Box::new(prev.clone()),
        })
    }
}

/// One Euler-Maruyama step of the Ito system:
/// `m + (a(m) + 1/2 psi^2 DG_n(G_n)) dt + psi G_n(m) dW`.
pub fn step_ito(
    state: &GalerkinState,
    u: Option<&VectorField>,
    dw: f64,
    dt: f64,
    params: &LlgParams,
) -> Result<GalerkinState> {
    let c = coefficients(state, u, params, true)?;
    let mut next = state.clone();
    next.axpy(dt, &c.drift_ito());
    next.axpy(dw, &c.diffusion);
    finite_or_blow_up(next, state)
}

/// One stochastic Heun step of the Stratonovich system.
pub fn step_heun_stratonovich(
    state: &GalerkinState,
    u: Option<&VectorField>,
    dw: f64,
    dt: f64,
    params: &LlgParams,
) -> Result<GalerkinState> {
    let c0 = coefficients(state, u, params, false)?;
    let mut pred = state.clone();
    pred.axpy(dt, &c0.drift_stratonovich);
    pred.axpy(dw, &c0.diffusion);
    let pred = finite_or_blow_up(pred, state)?;
    let c1 = coefficients(&pred, u, params, false)?;
    let mut next = state.clone();
    next.axpy(0.5 * dt, &c0.drift_stratonovich);
    next.axpy(0.5 * dt, &c1.drift_stratonovich);
    next.axpy(0.5 * dw, &c0.diffusion);
    next.axpy(0.5 * dw, &c1.diffusion);
    finite_or_blow_up(next, state)
}

/// Everything needed to integrate one path.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub params: LlgParams,
    pub m0: GalerkinState,
    pub t_final: f64,
    pub dt: f64,
    pub scheme: Scheme,
    pub renormalize: bool,
    pub save_stride: usize,
    n_steps: usize,
}

impl SimConfig {
    pub fn new(
        params: LlgParams,
        m0: GalerkinState,
        t_final: f64,
        dt: f64,
        scheme: Scheme,
        renormalize: bool,
        save_stride: usize,
    ) -> Result<Self> {
        if dt.is_nan() || dt <= 0.0 || t_final < 0.0 {
            return Err(Error::Config(format!(
                "need dt > 0 and t_final >= 0, got {dt} and {t_final}"
            )));
        }
        if m0.n_modes() != params.basis().n_modes() {
            return Err(Error::ModeMismatch {
                state: m0.n_modes(),
                basis: params.basis().n_modes(),
            });
        }
        let n_steps = if t_final == 0.0 { 0 } else { step_count(t_final, dt)? };
        let stiffness = dt * params.basis().max_eigenvalue();
        if stiffness > 1.0 {
            log::warn!(
                "dt * lambda_max = {stiffness:.3} > 1: explicit stepping with {} modes may be unstable",
                params.basis().n_modes()
            );
        }
        Ok(SimConfig {
            params,
            m0,
            t_final,
            dt,
            scheme,
            renormalize,
            save_stride: save_stride.max(1),
            n_steps,
        })
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn basis(&self) -> &Basis {
        self.params.basis()
    }

    /// `dt * lambda_{n-1}`, the explicit-stepping stiffness number.
    pub fn stiffness(&self) -> f64 {
        self.dt * self.basis().max_eigenvalue()
    }

    pub fn with_scheme(&self, scheme: Scheme) -> SimConfig {
        SimConfig { scheme, ..self.clone() }
    }

    pub fn meta(&self, seed: u64) -> TrajectoryMeta {
        TrajectoryMeta {
            n_modes: self.basis().n_modes(),
            grid_points: self.basis().grid_points(),
            alpha: self.params.alpha,
            t_final: self.t_final,
            dt: self.dt,
            scheme: self.scheme,
            renormalize: self.renormalize,
            cutoff: self.params.cutoff_enabled,
            seed,
        }
    }

    fn check_path(&self, path: &WienerPath) -> Result<()> {
        if self.n_steps > 0 && (path.len() != self.n_steps || (path.dt - self.dt).abs() > 1e-12 * self.dt) {
            return Err(Error::Config(format!(
                "Wiener path has {} increments of {} but the run needs {} of {}",
                path.len(),
                path.dt,
                self.n_steps,
                self.dt
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub n_modes: usize,
    pub grid_points: usize,
    pub alpha: f64,
    pub t_final: f64,
    pub dt: f64,
    pub scheme: Scheme,
    pub renormalize: bool,
    pub cutoff: bool,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<GalerkinState>,
    pub path: WienerPath,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    pub fn final_state(&self) -> &GalerkinState {
        self.states.last().expect("trajectory holds the initial state")
    }
}

/// Steps `config` along `path`, calling `observer(step, t, state)` for the
/// initial state and after every step. Returns the final state.
pub fn integrate_observed(
    config: &SimConfig,
    control: &dyn ControlSource,
    path: &WienerPath,
    mut observer: impl FnMut(usize, f64, &GalerkinState),
) -> Result<GalerkinState> {
    config.check_path(path)?;
    let params = &config.params;
    let basis = config.basis();
    let mut state = config.m0.clone();
    observer(0, 0.0, &state);
    for i in 0..config.n_steps {
        let t = i as f64 * config.dt;
        let u = control.slice(t);
        let dw = path.increments[i];
        let stepped = match config.scheme {
            Scheme::Ito => step_ito(&state, u, dw, config.dt, params),
            Scheme::Heun => step_heun_stratonovich(&state, u, dw, config.dt, params),
        };
        let mut next = stepped.map_err(|e| match e {
            Error::BlowUp { last_finite, .. } => Error::BlowUp {
                step: i + 1,
                time: t + config.dt,
                last_finite,
            },
            other => other,
        })?;
        if config.renormalize {
            next = basis.project(&basis.synthesize(&next)?.normalized())?;
        }
        state = next;
        let t_next = if i + 1 == config.n_steps {
            config.t_final
        } else {
            (i + 1) as f64 * config.dt
        };
        observer(i + 1, t_next, &state);
    }
    Ok(state)
}

/// Integrates one path, keeping every `save_stride`-th state and the final one.
pub fn integrate(config: &SimConfig, control: &dyn ControlSource, path: &WienerPath) -> Result<Trajectory> {
    let mut times = Vec::new();
    let mut states = Vec::new();
    let stride = config.save_stride;
    let last = config.n_steps;
    integrate_observed(config, control, path, |i, t, s| {
        if i % stride == 0 || i == last {
            times.push(t);
            states.push(s.clone());
        }
    })?;
    Ok(Trajectory {
        times,
        states,
        path: path.clone(),
        meta: config.meta(path.seed),
    })
}

/// Wiener path for ensemble member `index`.
pub fn ensemble_path(config: &SimConfig, master_seed: u64, index: usize) -> Result<WienerPath> {
    generate_wiener(path_seed(master_seed, index as u64), config.n_steps.max(1), config.dt)
}

/// Runs `f` on a rayon pool capped by `LLG_THREADS` when that is set.
pub fn with_worker_pool<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    let threads = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0);
    match threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        },
        None => f(),
    }
}

/// Outcome of one ensemble member.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathOutcome {
    pub index: usize,
    pub seed: u64,
    pub stats: Option<PathStats>,
    /// Step at which the path blew up.
    pub failed_at: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub n_paths: usize,
    pub n_failed: usize,
    pub master_seed: u64,
    pub mean_sup_h1: f64,
    pub mean_sup_h1_sq: f64,
    pub mean_m_cross_laplacian_integral: f64,
    pub mean_sphere_deviation: f64,
    pub mean_gradient_l4_integral: f64,
    pub mean_a1_integral: f64,
    pub mean_l2_drift: f64,
    pub paths: Vec<PathOutcome>,
}

/// Integrates one path and reduces it to per-path diagnostics.
pub fn path_stats(config: &SimConfig, control: &dyn ControlSource, path: &WienerPath) -> Result<PathStats> {
    let mut acc = PathAccumulator::new(config.basis());
    let mut err = None;
    let res = integrate_observed(config, control, path, |_, t, s| {
        if err.is_none() {
            if let Err(e) = acc.push(t, s) {
                err = Some(e);
            }
        }
    });
    res?;
    if let Some(e) = err {
        return Err(e);
    }
    Ok(acc.finish())
}

/// Monte-Carlo ensemble over `n_paths` seeded paths. Paths run in parallel and
/// are reduced in index order, so results do not depend on the worker count.
pub fn monte_carlo(
    config: &SimConfig,
    control: &dyn ControlSource,
    n_paths: usize,
    master_seed: u64,
) -> Result<EnsembleStats> {
    if n_paths < 1 {
        return Err(Error::Config("n_paths must be >= 1".into()));
    }
    let outcomes: Vec<Result<PathOutcome>> = with_worker_pool(|| {
        (0..n_paths)
            .into_par_iter()
            .map(|index| {
                let path = ensemble_path(config, master_seed, index)?;
                let seed = path.seed;
                match path_stats(config, control, &path) {
                    Ok(stats) => Ok(PathOutcome {
                        index,
                        seed,
                        stats: Some(stats),
                        failed_at: None,
                    }),
                    Err(Error::BlowUp { step, .. }) => {
                        log::warn!("path {index} (seed {seed}) blew up at step {step}");
                        Ok(PathOutcome {
                            index,
                            seed,
                            stats: None,
                            failed_at: Some(step),
                        })
                    }
                    Err(e) => Err(e),
                }
            })
            .collect()
    });
    let paths = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(EnsembleStats::reduce(paths, master_seed))
}

impl EnsembleStats {
    pub fn reduce(paths: Vec<PathOutcome>, master_seed: u64) -> Self {
        let ok: Vec<&PathStats> = paths.iter().filter_map(|p| p.stats.as_ref()).collect();
        let mean = |f: &dyn Fn(&PathStats) -> f64| -> f64 {
            if ok.is_empty() {
                f64::NAN
            } else {
                ok.iter().map(|s| f(s)).sum::<f64>() / ok.len() as f64
            }
        };
        EnsembleStats {
            n_paths: paths.len(),
            n_failed: paths.len() - ok.len(),
            master_seed,
            mean_sup_h1: mean(&|s| s.sup_h1_sq.sqrt()),
            mean_sup_h1_sq: mean(&|s| s.sup_h1_sq),
            mean_m_cross_laplacian_integral: mean(&|s| s.m_cross_laplacian_integral),
            mean_sphere_deviation: mean(&|s| s.max_sphere_deviation),
            mean_gradient_l4_integral: mean(&|s| s.gradient_l4_integral),
            mean_a1_integral: mean(&|s| s.a1_integral),
            mean_l2_drift: mean(&|s| s.l2_drift),
            paths,
        }
    }
}
