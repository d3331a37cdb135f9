//! Test families, ε sweeps and the built-in self test.

pub mod config;
pub mod convergence;
pub mod generate;
pub mod selftest;

pub use config::{ExperimentConfig, Scenario};
pub use convergence::{nominal_triple, run_convergence, ConvergenceReport, ConvergenceRow};
pub use generate::{
    example_grid, generate_example_sequence, generate_laminate, mollifier_weights, LaminateSpec, ResolutionRule,
};
pub use selftest::{run_selftest, SelftestCase};
