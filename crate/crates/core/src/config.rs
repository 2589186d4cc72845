//! Run configuration: a single JSON document shared by the CLI and the C API.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::control::{ControlParam, CostSpec, OptConfig};
use crate::dynamics::LlgParams;
use crate::error::{Error, Result};
use crate::fields::{Vec3, VectorField};
use crate::integrators::{Scheme, SimConfig};
use crate::spectral::{Basis, GalerkinState, ALIASING_FACTOR};

/// Initial magnetisation presets. Both are exactly sphere-valued.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "kebab-case")]
pub enum InitialPreset {
    /// `m0 = (0, 0, 1)`
    ConstantUp,
    /// `m0 = (cos f, sin f, 0)` with `f = a cos(pi x)`
    Winding { a: f64 },
}

impl Default for InitialPreset {
    fn default() -> Self {
        InitialPreset::Winding { a: PI / 2.0 }
    }
}

impl InitialPreset {
    /// Galerkin coefficients of the preset. Constants are placed in mode 0
    /// exactly; other presets are projected from their grid samples.
    pub fn state(&self, basis: &Basis) -> Result<GalerkinState> {
        match self {
            InitialPreset::ConstantUp => {
                let mut s = GalerkinState::zeros(basis.n_modes());
                s.coeffs[0] = [0.0, 0.0, 1.0];
                Ok(s)
            }
            _ => basis.project(&self.sample(basis)),
        }
    }

    pub fn sample(&self, basis: &Basis) -> VectorField {
        match *self {
            InitialPreset::ConstantUp => VectorField::constant(basis.n_nodes(), [0.0, 0.0, 1.0]),
            InitialPreset::Winding { a } => VectorField::from_fn(basis, |x| {
                let f = a * (PI * x).cos();
                [f.cos(), f.sin(), 0.0]
            }),
        }
    }
}

/// Noise direction `h`, constant in time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NoiseSpec {
    Constant {
        value: Vec3,
    },
    /// `h(x) = direction * e_mode(x)`
    Mode {
        mode: usize,
        direction: Vec3,
    },
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec::Constant { value: [0.0, 0.0, 1.0] }
    }
}

impl NoiseSpec {
    pub fn sample(&self, basis: &Basis) -> VectorField {
        match *self {
            NoiseSpec::Constant { value } => VectorField::constant(basis.n_nodes(), value),
            NoiseSpec::Mode { mode, direction } => VectorField::from_fn(basis, |x| {
                let e = if mode == 0 {
                    1.0
                } else {
                    std::f64::consts::SQRT_2 * (mode as f64 * PI * x).cos()
                };
                [e * direction[0], e * direction[1], e * direction[2]]
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub dt_values: Vec<f64>,
    pub n_values: Vec<usize>,
    /// Time step used for the `n_modes` sweep; falls back to the run's `dt`.
    pub n_sweep_dt: Option<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            dt_values: vec![4e-3, 2e-3, 1e-3, 5e-4],
            n_values: vec![4, 8, 16, 32],
            n_sweep_dt: Some(5e-5),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub n_modes: usize,
    /// Grid intervals `M`; defaults to `4 * n_modes`.
    pub grid_points: Option<usize>,
    pub t_final: f64,
    pub dt: f64,
    pub alpha: f64,
    pub h: NoiseSpec,
    pub m0: InitialPreset,
    pub scheme: Scheme,
    pub renormalize: bool,
    pub cutoff: bool,
    pub n_paths: usize,
    pub master_seed: u64,
    pub output_dir: String,
    pub save_stride: usize,
    pub control: Option<ControlParam>,
    pub cost: CostSpec,
    pub optimizer: OptConfig,
    pub sweep: SweepConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            n_modes: 8,
            grid_points: None,
            t_final: 1.0,
            dt: 1e-3,
            alpha: 0.1,
            h: NoiseSpec::default(),
            m0: InitialPreset::default(),
            scheme: Scheme::Heun,
            renormalize: false,
            cutoff: false,
            n_paths: 1,
            master_seed: 0,
            output_dir: "out".into(),
            save_stride: 1,
            control: None,
            cost: CostSpec::default(),
            optimizer: OptConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn grid(&self) -> usize {
        self.grid_points.unwrap_or(ALIASING_FACTOR * self.n_modes)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_modes < 1 {
            return bad("n_modes must be >= 1".into());
        }
        if self.grid() < ALIASING_FACTOR * self.n_modes {
            return bad(format!(
                "grid_points must be >= 4 * n_modes = {}, got {}",
                ALIASING_FACTOR * self.n_modes,
                self.grid()
            ));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be > 0, got {}", self.dt));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return bad(format!("t_final must be > 0, got {}", self.t_final));
        }
        crate::integrators::step_count(self.t_final, self.dt)?;
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be > 0, got {}", self.alpha));
        }
        if self.n_paths < 1 {
            return bad("n_paths must be >= 1".into());
        }
        if self.save_stride < 1 {
            return bad("save_stride must be >= 1".into());
        }
        if let InitialPreset::Winding { a } = self.m0 {
            if !a.is_finite() {
                return bad("winding amplitude must be finite".into());
            }
        }
        Ok(())
    }

    pub fn basis(&self) -> Result<Arc<Basis>> {
        Ok(Arc::new(Basis::new(self.n_modes, self.grid())?))
    }

    pub fn params(&self, basis: Arc<Basis>) -> Result<LlgParams> {
        let h = self.h.sample(&basis);
        LlgParams::new(self.alpha, h, self.cutoff, basis)
    }

    /// Validates and assembles the simulation description.
    pub fn sim_config(&self) -> Result<SimConfig> {
        self.validate()?;
        let basis = self.basis()?;
        let m0 = self.m0.state(&basis)?;
        SimConfig::new(
            self.params(basis)?,
            m0,
            self.t_final,
            self.dt,
            self.scheme,
            self.renormalize,
            self.save_stride,
        )
    }
}
