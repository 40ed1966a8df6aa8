//! Modified Ermakov–Pinney solvers and Lewis–Riesenfeld invariants for an
//! oscillator with time-dependent mass driven by a uniform electric field.
//!
//! Units are dimensionless with ℏ = 1.

// `!(x > 0.0)` is used on purpose so that NaN is rejected with the bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod csv;
pub mod ep_solver;
pub mod error;
pub mod interp;
pub mod invariant;
pub mod ode;
pub mod profiles;
pub mod stencil;
pub mod tdse;

pub use ep_solver::{
    integrate_complex_split, integrate_ft_variant, integrate_modified_ep, pinney_closed_form,
    ComplexSplitTrajectory, PinneySolution, SigmaTrajectory, TrajectoryMeta,
};
pub use error::{Error, Result};
pub use invariant::{
    coefficients_from_sigma, electric_field, integrate_coefficient_system, CoefficientTrajectory,
    Coefficients, ExponentialScenario, Field,
};
pub use profiles::{MassProfile, ScenarioConfig, SolverKind, TauFunction, TimeGrid};
pub use tdse::{EvolutionSettings, OperatorMatrix, SpatialGrid, WaveState};
