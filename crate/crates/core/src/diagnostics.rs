//! Invariant reports over trajectories and self-convergence sweeps.
//!
//! Gradients here are spectral (exact derivatives of the Galerkin
//! coefficients); integrals in space are trapezoid sums on the basis grid and
//! integrals in time are trapezoid sums over the stored time points.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::dynamics::triple_product_residual;
use crate::error::{Error, Result};
use crate::fields::{cross3, dot3, sphere_deviation};
use crate::integrators::{
    generate_wiener, integrate_observed, path_seed, step_count, NoControl, Scheme, SimConfig, Trajectory, WienerPath,
};
use crate::spectral::{Basis, GalerkinState};

/// Pointwise-in-time scalars of one Galerkin state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateMetrics {
    pub l2_sq: f64,
    pub h1_sq: f64,
    pub energy: f64,
    pub sphere_deviation: f64,
    /// `|m x Lm|_{L^2}^2`
    pub m_cross_laplacian_sq: f64,
    /// `|grad m|_{L^4}^4`
    pub gradient_l4_4: f64,
    /// `|A_1 m|_{L^2}^2`
    pub a1_sq: f64,
}

impl StateMetrics {
    pub fn of(state: &GalerkinState, basis: &Basis) -> Result<Self> {
        let m = basis.synthesize(state)?;
        let lap = basis.synthesize(&state.laplacian())?;
        let grad = basis.spatial_derivative(state)?;
        let mut cross_sq = Vec::with_capacity(m.len());
        let mut g4 = Vec::with_capacity(m.len());
        for ((mv, lv), gv) in m.values().iter().zip(lap.values()).zip(grad.values()) {
            let c = cross3(mv, lv);
            cross_sq.push(dot3(&c, &c));
            let g2 = dot3(gv, gv);
            g4.push(g2 * g2);
        }
        let grad_sq = state.gradient_norm_sq();
        Ok(StateMetrics {
            l2_sq: state.l2_norm_sq(),
            h1_sq: state.l2_norm_sq() + grad_sq,
            energy: 0.5 * grad_sq,
            sphere_deviation: sphere_deviation(&m),
            m_cross_laplacian_sq: basis.integrate(&cross_sq),
            gradient_l4_4: basis.integrate(&g4),
            a1_sq: state.apply_a1().l2_norm_sq(),
        })
    }
}

/// Per-path summary accumulated on the fly by ensemble runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathStats {
    pub sup_h1_sq: f64,
    pub m_cross_laplacian_integral: f64,
    pub max_sphere_deviation: f64,
    pub gradient_l4_integral: f64,
    pub a1_integral: f64,
    pub l2_drift: f64,
    pub final_energy: f64,
}

/// Streams states of one path into [`PathStats`].
pub struct PathAccumulator<'a> {
    basis: &'a Basis,
    last: Option<(f64, StateMetrics)>,
    initial_l2_sq: f64,
    stats: PathStats,
}

impl<'a> PathAccumulator<'a> {
    pub fn new(basis: &'a Basis) -> Self {
        PathAccumulator {
            basis,
            last: None,
            initial_l2_sq: 0.0,
            stats: PathStats {
                sup_h1_sq: 0.0,
                m_cross_laplacian_integral: 0.0,
                max_sphere_deviation: 0.0,
                gradient_l4_integral: 0.0,
                a1_integral: 0.0,
                l2_drift: 0.0,
                final_energy: 0.0,
            },
        }
    }

    pub fn push(&mut self, t: f64, state: &GalerkinState) -> Result<()> {
        let m = StateMetrics::of(state, self.basis)?;
        let s = &mut self.stats;
        match self.last {
            None => self.initial_l2_sq = m.l2_sq,
            Some((t0, prev)) => {
                let w = 0.5 * (t - t0);
                s.m_cross_laplacian_integral += w * (prev.m_cross_laplacian_sq + m.m_cross_laplacian_sq);
                s.gradient_l4_integral += w * (prev.gradient_l4_4 + m.gradient_l4_4);
                s.a1_integral += w * (prev.a1_sq + m.a1_sq);
            }
        }
        s.sup_h1_sq = s.sup_h1_sq.max(m.h1_sq);
        s.max_sphere_deviation = s.max_sphere_deviation.max(m.sphere_deviation);
        s.l2_drift = s.l2_drift.max((m.l2_sq - self.initial_l2_sq).abs());
        s.final_energy = m.energy;
        self.last = Some((t, m));
        Ok(())
    }

    pub fn finish(self) -> PathStats {
        self.stats
    }
}

/// Pass/fail limits for [`check_trajectory`]. The defaults are the values the
/// acceptance suite is pinned to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    /// `max_t | |m(t)|^2 - |m(0)|^2 |`
    pub l2_drift: f64,
    /// time-max of `max_x | |m| - 1 |`
    pub sphere_deviation: f64,
    /// time-max of the triple-product residual
    pub identity_residual: f64,
    /// `sup_t |m(t)|_{H^1}^2`
    pub h1_sup_sq: f64,
    /// each of the two maximal-regularity integrals
    pub regularity: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            l2_drift: 1e-2,
            sphere_deviation: 0.1,
            identity_residual: 1.0,
            h1_sup_sq: 1e3,
            regularity: 1e6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl Check {
    fn at_most(name: &str, value: f64, threshold: f64) -> Check {
        Check {
            name: name.into(),
            value,
            threshold,
            pass: value.is_finite() && value <= threshold,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regularity {
    /// `int_0^T |grad m|_{L^4}^4 dt`
    pub gradient_l4_integral: f64,
    /// `int_0^T |A_1 m|_{L^2}^2 dt`
    pub a1_integral: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantReport {
    pub times: Vec<f64>,
    pub l2_drift: f64,
    pub sphere_deviation: f64,
    pub energy_series: Vec<f64>,
    pub initial_energy: f64,
    pub h1_sup_sq: f64,
    pub regularity: Regularity,
    pub identity_residual: Vec<f64>,
    pub thresholds: Thresholds,
    pub checks: Vec<Check>,
    pub all_pass: bool,
}

impl InvariantReport {
    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn trapezoid(times: &[f64], values: &[f64]) -> f64 {
    times
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum()
}

/// Evaluates every invariant of a stored trajectory. Threshold breaches are
/// reported in `checks`, never raised.
pub fn check_trajectory(traj: &Trajectory, basis: &Basis, thresholds: &Thresholds) -> Result<InvariantReport> {
    let metrics = traj
        .states
        .iter()
        .map(|s| StateMetrics::of(s, basis))
        .collect::<Result<Vec<_>>>()?;
    let residuals = traj
        .states
        .iter()
        .map(|s| triple_product_residual(s, basis))
        .collect::<Result<Vec<_>>>()?;
    let l2_0 = metrics.first().map(|m| m.l2_sq).unwrap_or(0.0);
    let l2_drift = metrics.iter().map(|m| (m.l2_sq - l2_0).abs()).fold(0.0, f64::max);
    let sphere = metrics.iter().map(|m| m.sphere_deviation).fold(0.0, f64::max);
    let h1_sup_sq = metrics.iter().map(|m| m.h1_sq).fold(0.0, f64::max);
    let energy_series: Vec<f64> = metrics.iter().map(|m| m.energy).collect();
    let g4: Vec<f64> = metrics.iter().map(|m| m.gradient_l4_4).collect();
    let a1: Vec<f64> = metrics.iter().map(|m| m.a1_sq).collect();
    let regularity = Regularity {
        gradient_l4_integral: trapezoid(&traj.times, &g4),
        a1_integral: trapezoid(&traj.times, &a1),
    };
    let max_residual = residuals.iter().copied().fold(0.0, f64::max);
    let finite = traj.states.iter().all(|s| s.is_finite());

    let checks = vec![
        Check {
            name: "finite".into(),
            value: if finite { 0.0 } else { 1.0 },
            threshold: 0.0,
            pass: finite,
        },
        Check::at_most("l2_drift", l2_drift, thresholds.l2_drift),
        Check::at_most("sphere_deviation", sphere, thresholds.sphere_deviation),
        Check::at_most("identity_residual", max_residual, thresholds.identity_residual),
        Check::at_most("h1_sup_sq", h1_sup_sq, thresholds.h1_sup_sq),
        Check::at_most(
            "gradient_l4_integral",
            regularity.gradient_l4_integral,
            thresholds.regularity,
        ),
        Check::at_most("a1_integral", regularity.a1_integral, thresholds.regularity),
    ];
    let all_pass = checks.iter().all(|c| c.pass);
    Ok(InvariantReport {
        times: traj.times.clone(),
        l2_drift,
        sphere_deviation: sphere,
        initial_energy: energy_series.first().copied().unwrap_or(0.0),
        energy_series,
        h1_sup_sq,
        regularity,
        identity_residual: residuals,
        thresholds: *thresholds,
        checks,
        all_pass,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Dt,
    NModes,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMetric {
    /// `max_t` coefficient distance to the finest run.
    ReferenceDistance,
    /// `max_t | |m(t)|^2 - |m(0)|^2 |`
    L2Drift,
    /// time-max sphere deviation
    SphereDeviation,
    /// `max_t |m_heun(t) - m_ito(t)|_{L^2}` on the same path
    SchemeGap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub error: f64,
    /// Log-ratio order against the previous row; positive when the error
    /// shrinks as `dt` decreases or as `n_modes` grows.
    pub est_order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub axis: SweepAxis,
    pub metric: SweepMetric,
    /// Value of the run used as reference, for [`SweepMetric::ReferenceDistance`].
    pub reference: Option<f64>,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn errors(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.error).collect()
    }

    /// Least-squares slope of `log(error)` against `log(value)`, sign-adjusted
    /// like [`SweepRow::est_order`].
    pub fn fitted_order(&self) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .rows
            .iter()
            .filter(|r| r.error > 0.0 && r.error.is_finite())
            .map(|r| (r.value.ln(), r.error.ln()))
            .collect();
        if pts.len() < 2 {
            return None;
        }
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let slope = sxy / sxx;
        Some(match self.axis {
            SweepAxis::Dt => slope,
            SweepAxis::NModes => -slope,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("value,error,est_order\n");
        for r in &self.rows {
            let order = r.est_order.map(|o| o.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{}\n", r.value, r.error, order));
        }
        out
    }
}

fn log_order(axis: SweepAxis, prev: &SweepRow, cur: &SweepRow) -> Option<f64> {
    if !(prev.error > 0.0 && cur.error > 0.0) || prev.value == cur.value {
        return None;
    }
    let o = (cur.error / prev.error).ln() / (cur.value / prev.value).ln();
    Some(match axis {
        SweepAxis::Dt => o,
        SweepAxis::NModes => -o,
    })
}

fn fill_orders(axis: SweepAxis, rows: &mut [SweepRow]) {
    for i in 1..rows.len() {
        let o = log_order(axis, &rows[i - 1], &rows[i]);
        rows[i].est_order = o;
    }
}

/// One run of a sweep: its Wiener path and the config to integrate.
struct SweepRun {
    value: f64,
    config: SimConfig,
    path: WienerPath,
    /// Steps of the finest run per step of this one.
    stride: usize,
}

fn sweep_runs(config: &RunConfig, axis: SweepAxis, values: &[f64], seed: u64) -> Result<Vec<SweepRun>> {
    if values.len() < 2 {
        return Err(Error::Config("a sweep needs at least two values".into()));
    }
    if values.iter().any(|v| !v.is_finite() || *v <= 0.0) {
        return Err(Error::Config("sweep values must be positive".into()));
    }
    match axis {
        SweepAxis::Dt => {
            let finest = values.iter().copied().fold(f64::INFINITY, f64::min);
            let n_fine = step_count(config.t_final, finest)?;
            let fine = generate_wiener(seed, n_fine, finest)?;
            values
                .iter()
                .map(|&dt| {
                    let ratio = dt / finest;
                    let factor = ratio.round() as usize;
                    if factor == 0 || (ratio - factor as f64).abs() > 1e-9 * ratio {
                        return Err(Error::PathRefinement(format!(
                            "dt = {dt} is not an integer multiple of the finest dt = {finest}"
                        )));
                    }
                    let path = fine.coarsen(factor)?;
                    let cfg = RunConfig {
                        dt: finest * factor as f64,
                        ..config.clone()
                    };
                    Ok(SweepRun {
                        value: dt,
                        config: cfg.sim_config()?,
                        path,
                        stride: factor,
                    })
                })
                .collect()
        }
        SweepAxis::NModes => {
            let dt = config.sweep.n_sweep_dt.unwrap_or(config.dt);
            let path = generate_wiener(seed, step_count(config.t_final, dt)?, dt)?;
            values
                .iter()
                .map(|&n| {
                    if n.fract() != 0.0 {
                        return Err(Error::Config(format!("n_modes sweep value {n} is not an integer")));
                    }
                    let n = n as usize;
                    let cfg = RunConfig {
                        n_modes: n,
                        grid_points: Some(crate::spectral::ALIASING_FACTOR * n),
                        dt,
                        ..config.clone()
                    };
                    Ok(SweepRun {
                        value: n as f64,
                        config: cfg.sim_config()?,
                        path: path.clone(),
                        stride: 1,
                    })
                })
                .collect()
        }
    }
}

fn run_states(cfg: &SimConfig, path: &WienerPath) -> Result<Vec<GalerkinState>> {
    let mut states = Vec::with_capacity(cfg.n_steps() + 1);
    integrate_observed(cfg, &NoControl, path, |_, _, s| states.push(s.clone()))?;
    Ok(states)
}

fn run_metric(run: &SweepRun, metric: SweepMetric) -> Result<f64> {
    let cfg = &run.config;
    match metric {
        SweepMetric::L2Drift | SweepMetric::SphereDeviation => {
            let basis = cfg.basis();
            let mut l2_0 = None;
            let mut worst: f64 = 0.0;
            let mut err = None;
            integrate_observed(cfg, &NoControl, &run.path, |_, _, s| {
                let v = match metric {
                    SweepMetric::L2Drift => {
                        let l2 = s.l2_norm_sq();
                        (l2 - *l2_0.get_or_insert(l2)).abs()
                    }
                    _ => match basis.synthesize(s) {
                        Ok(f) => sphere_deviation(&f),
                        Err(e) => {
                            err.get_or_insert(e);
                            0.0
                        }
                    },
                };
                worst = worst.max(v);
            })?;
            if let Some(e) = err {
                return Err(e);
            }
            Ok(worst)
        }
        SweepMetric::SchemeGap => {
            let heun = run_states(&cfg.with_scheme(Scheme::Heun), &run.path)?;
            let ito = run_states(&cfg.with_scheme(Scheme::Ito), &run.path)?;
            Ok(heun.iter().zip(&ito).map(|(a, b)| a.distance(b)).fold(0.0, f64::max))
        }
        SweepMetric::ReferenceDistance => unreachable!("handled by the caller"),
    }
}

/// Self-convergence study along `axis`.
///
/// All runs share one Wiener path: for a `dt` sweep the path is drawn at the
/// finest step and summed in blocks for the coarser ones, for an `n_modes`
/// sweep every run uses the same path at `config.sweep.n_sweep_dt` with
/// `M = 4 n`. The path seed is `path_seed(config.master_seed, 0)`.
pub fn convergence_sweep(
    config: &RunConfig,
    axis: SweepAxis,
    values: &[f64],
    metric: SweepMetric,
) -> Result<SweepTable> {
    let seed = path_seed(config.master_seed, 0);
    let runs = sweep_runs(config, axis, values, seed)?;

    if metric != SweepMetric::ReferenceDistance {
        let errors: Vec<f64> = runs.par_iter().map(|r| run_metric(r, metric)).collect::<Result<_>>()?;
        let mut rows: Vec<SweepRow> = runs
            .iter()
            .zip(errors)
            .map(|(r, e)| SweepRow {
                value: r.value,
                error: e,
                est_order: None,
            })
            .collect();
        fill_orders(axis, &mut rows);
        return Ok(SweepTable {
            axis,
            metric,
            reference: None,
            rows,
        });
    }

    // finest: smallest dt or largest n, first occurrence
    let ref_idx = (0..runs.len())
        .reduce(|best, i| {
            let better = match axis {
                SweepAxis::Dt => runs[i].value < runs[best].value,
                SweepAxis::NModes => runs[i].value > runs[best].value,
            };
            if better {
                i
            } else {
                best
            }
        })
        .expect("at least two runs");
    let states: Vec<Vec<GalerkinState>> = runs
        .par_iter()
        .map(|r| run_states(&r.config, &r.path))
        .collect::<Result<_>>()?;
    let reference = &states[ref_idx];
    let ref_stride = runs[ref_idx].stride;
    let mut rows: Vec<SweepRow> = runs
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != ref_idx)
        .map(|(i, r)| {
            let step = r.stride / ref_stride;
            let error = states[i]
                .iter()
                .enumerate()
                .map(|(j, s)| s.distance(&reference[j * step]))
                .fold(0.0, f64::max);
            SweepRow {
                value: r.value,
                error,
                est_order: None,
            }
        })
        .collect();
    fill_orders(axis, &mut rows);
    Ok(SweepTable {
        axis,
        metric,
        reference: Some(runs[ref_idx].value),
        rows,
    })
}
