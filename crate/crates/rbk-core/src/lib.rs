//! Deterministic solver and verification harness for the continuous
//! Redner–Ben-Avraham–Kahng (RBK) coagulation equation, in which a collision
//! of clusters of sizes `x` and `y` produces a single cluster of size
//! `|x - y|` and equal sizes annihilate:
//!
//! ```text
//! ∂f/∂τ (s) = ∫ K(s + p, p) f(s + p) f(p) dp - ∫ K(s, p) f(s) f(p) dp
//! ```
//!
//! The solver integrates the cutoff system on a node grid closed under the
//! collision arithmetic, so the discrete weak identity, mass dissipation and
//! number balance hold exactly in space and can be checked to integrator
//! order in time. Alongside the solver:
//!
//! - [`kernel`] — product-form rate kernels, truncation, admissibility
//!   hypotheses and the box/coupling bounds they induce;
//! - [`grid`] — size grids, density states, moments and the concentration
//!   gauge used by the uniform-integrability check;
//! - [`residual`] — weak-form and per-node integrated-form residuals;
//! - [`invariants`] — the bound battery (mass monotonicity, number identity,
//!   interaction moments, tail, uniform integrability, equicontinuity) with
//!   every constant derived from the run, plus corruption helpers for
//!   negative controls;
//! - [`convergence`] — truncation sweeps with weak distances and resolution
//!   self-convergence orders;
//! - [`mc`] — an exact stochastic particle oracle with a grid-matched mode
//!   whose ensemble mean follows the discrete system, for cross-validation;
//! - [`config`] / [`report`] — the TOML run configuration and the CSV/JSON
//!   emitters behind the `rbk` command-line tool.

// `!(x > 0.0)` rejects NaN where `x <= 0.0` would let it through; index
// loops over parallel arrays stay as index loops.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod convergence;
pub mod error;
pub mod grid;
pub mod invariants;
pub mod kernel;
pub mod mc;
pub mod report;
pub mod residual;
pub mod solver;

pub use error::{RbkError, Result};
pub use grid::{init_density, moments, ui_functional, DensityState, InitialFamily, MomentReport, SizeGrid};
pub use kernel::{
    kernel_bounds, subquadratic_modulus, truncate, validate_admissibility, AdmissibilityReport,
    KernelBounds, KernelFamily, KernelSpec, KernelTable, TruncatedKernel,
};
pub use residual::{mild_residual, weak_residual, TestFunction};
pub use solver::{rhs, run, step, PositivityPolicy, Scheme, Snapshot, SolverConfig, Trajectory};
