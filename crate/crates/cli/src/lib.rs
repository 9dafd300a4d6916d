//! Configuration, single runs, parameter sweeps and verification suites for the
//! `mnchemo` radial solver.

pub mod config;
pub mod oracle;
pub mod output;
pub mod pipeline;
pub mod sweep;
pub mod verify;

pub use config::RunConfig;
pub use pipeline::{simulate, simulate_calibrated, Simulation};
