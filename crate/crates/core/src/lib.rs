//! Spectral-Galerkin simulation of the one-dimensional stochastic
//! Landau-Lifshitz-Gilbert equation with a controlled effective field.
//!
//! The crate is organised bottom-up:
//!
//! * [`spectral`]: Neumann-Laplacian cosine basis on `(0, 1)`, projection and synthesis.
//! * [`fields`]: grid-sampled `R^3` fields, pointwise vector algebra and norms.
//! * [`dynamics`]: noise operator `G`, its derivative, the Ito correction and the drift.
//! * [`integrators`]: seeded Wiener paths, Euler-Maruyama and Stratonovich Heun stepping,
//!   trajectories and Monte-Carlo ensembles.
//! * [`diagnostics`]: invariant reports and convergence sweeps.
//! * [`control`]: control parameterisation, cost evaluation and SPSA search.
//! * [`config`]: JSON run configuration shared by the CLI and the C API.

pub mod config;
pub mod control;
pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod fields;
pub mod integrators;
pub mod output;
pub mod spectral;

pub use error::{Error, Result};
pub use fields::{Vec3, VectorField};
pub use spectral::{Basis, GalerkinState};
