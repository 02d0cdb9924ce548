//! Discrete multi-parameter potential theory on weighted dyadic poly-trees.
//!
//! The crate works on finite truncations of `T^d`, the product of `d` binary
//! trees, whose distinguished boundary is modelled by the grid of leaf cells.
//! It provides the Hardy operator and its adjoints, potentials and energies,
//! capacities with equilibrium measures and duality certificates, the
//! boundary pushdown of measures, and checkers for the trace conditions of the
//! multilinear Hardy inequality.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod capacity;
pub mod error;
pub mod measures;
pub mod phi;
pub mod polytree;
pub mod potential;
pub mod selftest;
mod sweep;
pub mod trace;
pub mod weights;

pub use capacity::{
    kkt_check, product_capacity, solve_capacity, EquilibriumResult, KktReport, SolverOptions,
    TargetSet,
};
pub use error::{Error, Result};
pub use measures::{lebesgue_box_mass, lebesgue_cell_mass, md_measure, Measure, MeasureGen};
pub use phi::TestFunctionPhi;
pub use polytree::{
    boundary_shadow, rect_family, AxisVertex, BoundaryCell, FamilySpec, Point, RectangularSet,
    TreeSpec, Vertex,
};
pub use potential::{
    apply_i, apply_i_star, apply_i_star_mu, energy, maximal_function, potential, Field, Mode,
    Operators,
};
pub use trace::{
    charge_energy_report, counterexample_search, hardy_norm, maximal_constant_estimate,
    single_box_test, ConditionReport, HardyNorm, SearchConfig,
};
pub use weights::Weight;

/// Engine version reported by the CLI.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
