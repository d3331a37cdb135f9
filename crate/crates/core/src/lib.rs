//! Numerical tools for singularly perturbed two-well elastic energies.
//!
//! The crate evaluates and minimises the penalised energy `E_{ε,η}` on uniform grids,
//! solves the one-dimensional optimal-profile problem, decomposes deformations into a
//! global rotation and a phase indicator, builds slab partitions with translations and
//! rescaled displacements, and evaluates the sharp-interface limiting energy.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

pub mod density;
pub mod energy;
pub mod error;
pub mod gamma;
pub mod grid;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod minimize;
pub mod partition;
pub mod profile;
pub mod rigidity;
pub mod taylor;
pub mod textfmt;

pub use density::{
    density_eval, density_hessian_at_well, distance_to_well, q_lin, Density, DensityVariant, HessianForm,
    TwoWellDensity, WellLabel,
};
pub use energy::{energy_eval, energy_gradient, eta_bar, EnergyBreakdown, EnergyParams};
pub use error::{Error, Result};
pub use gamma::{
    check_admissible, gamma_gap, limiting_energy, triple_distance, AdmissibilityReport, Band, GammaEnergyReport,
    Interface, InterfaceKind, LimitingTriple,
};
pub use grid::{GridField, GridGeometry};
pub use linalg::SqMat;
pub use minimize::{minimize, MinimizeOptions};
pub use partition::{
    build_partition, coarsen_partition, component_translations, jump_height_extract, p_exponent, rescaled_displacement,
    slice_area_function, CaccioppoliPartition, Component, ComponentClass, RescaledDisplacement,
};
pub use profile::{
    analytic_k, build_double_profile, double_profile_energy, reduced_density_eval, solve_single_profile,
    DoubleProfileSpec, ProfileSolution, ReducedDensity,
};
pub use rigidity::{
    decompose_phases, fit_rotation, nearest_phase, phase_boundary_measures, PhaseDecomposition, PhaseField,
};
pub use taylor::{taylor_bounds_check, TaylorReport};
