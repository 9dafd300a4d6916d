//! Radial finite-volume solver and blow-up diagnostics for a quasilinear
//! chemotaxis system with May–Nowak type infection kinetics:
//!
//! ```text
//! u_t = ∇·(D(u)∇u) − χ∇·(u∇v) − u − uw + φ(x,t)
//! κ v_t = Δv − v + uw
//! w_t = Δw − w + v
//! ```
//!
//! on a ball with zero-flux boundary conditions, restricted to radially symmetric data.
//! Every routine is generic over [`Real`] (`f32`, `f64`); the `*64` aliases fix `f64`.

pub mod analysis;
pub mod grid;
pub mod linalg;
pub mod model;
pub mod scalar;
pub mod solver;

pub use grid::{Field, GridError, RadialGrid, Spacing};
pub use model::{
    boundedness_threshold, build_initial_data, regime, Coupling, DiffusionLaw, InitialData, InitialSpec, ModelError,
    ModelParams, ProfileKind, Regime, WProfileKind,
};
pub use scalar::Real;
pub use solver::{
    run, Cadence, CancelToken, RunOutcome, RunReport, RunSettings, Sample, Solver, SolverError, SolverOptions, Source,
    State, StepControl,
};

pub type Grid64 = RadialGrid<f64>;
pub type Field64 = Field<f64>;
pub type State64 = State<f64>;
pub type Params64 = ModelParams<f64>;
pub type Solver64 = Solver<f64>;
pub type Report64 = RunReport<f64>;
