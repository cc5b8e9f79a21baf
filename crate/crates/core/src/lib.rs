//! Fourier spectral solver for the periodic cubic fractional nonlinear
//! Schrödinger equation
//!
//! ```text
//! i u_t - (-∂xx)^s u + |u|²u = 0,   x ∈ (-L, L),   0 < s <= 1,
//! ```
//!
//! discretized by collocation in space and by Yoshida compositions of the
//! implicit midpoint rule in time.

pub mod error;
pub mod spectral;
pub mod model;
pub mod integrators;
pub mod reference;
pub mod config;
pub mod harness;
pub mod io;

pub use config::{InitialCondition, RunConfig};
pub use error::{FnlsError, Result};
pub use harness::{
    convergence_study, error_growth_study, invariant_drift_study, wave_tracking, ConvergenceRow,
    DriftReport, Experiment, GrowthPoint, GrowthSeries, Reference, TrackRecord,
};
pub use integrators::{
    evolve, imr_stage_solve, step, CompositionScheme, EvolveOutcome, InvariantRecorder, Observer,
    SnapshotRecorder, SolverParams, StageSolver, StepReport,
};
pub use model::{hamiltonian, mass, momentum, InvariantRecord, ModelParams};
pub use reference::{nls_soliton, petviashvili_profile, residual_operator, ProfileResult, SolitonParams};
pub use spectral::{Coefficients, Field, SpectralGrid};
pub use num_complex::Complex64;
