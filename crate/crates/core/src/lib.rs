//! Adaptive transport networks at three levels of description: weighted
//! graphs with Kirchhoff flow, a monokinetic field model on a grid, and a
//! pressureless minimizing-movement scheme in the Fisher–Rao geometry.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::manual_is_multiple_of)]

pub mod adaptation;
pub mod error;
pub mod flux;
pub mod graph;
pub mod kirchhoff;
pub mod linalg;
pub mod meso;
pub mod mms;

pub use error::{Error, Result};
pub use graph::{cycle_basis, detect_flux_loops, Cycle, CycleBasis, Edge, EdgeState, Network, ValidationReport, Violation};
pub use kirchhoff::{fluxes_from_pressures, pressures_from_tree_flux, solve_kirchhoff, Gauge, PressureVector};
pub use adaptation::{energy_discrete, simulate_adaptation, step_adaptation, AdaptationParams, Integrator, Trajectory};
pub use flux::{
    energy_relaxed, f_gamma, minimize_f, optimal_c_given_q, shortest_path_check, verify_tree_theorem, FluxEnergyMode,
    FluxProblem, FluxSolution, Method, Optimality,
};
pub use meso::{DirectionalField, Grid};
pub use mms::{MeasurePair, MmsParams};
