//! Security-constrained optimal power flow with a learned feasibility surrogate.
//!
//! The pipeline in this crate labels operating points of a power grid against
//! static (N-1) and dynamic (small-signal) security criteria, trains a ReLU
//! classifier on those labels, reformulates the trained network exactly as
//! mixed-integer linear constraints, and solves an iteratively linearized
//! dispatch problem subject to the classifier's feasibility prediction.
//!
//! Module map:
//!
//! - [`grid`] — case files, validation, admittance matrices, contingencies
//! - [`pf`] — Newton-Raphson AC power flow, branch flows, losses, gradients
//! - [`eig`] — dense nonsymmetric eigenvalue solver (Hessenberg + QR)
//! - [`smallsignal`] — classical-model linearization and damping ratios
//! - [`oracle`] — ground-truth feasibility checks with per-criterion reasons
//! - [`dataset`] — labeled-sample generation, balancing, CSV persistence
//! - [`mlp`] — ReLU classifier training with gradual weight pruning
//! - [`milp`] — generic LP/MILP model container and LP-format export
//! - [`encode`] — interval activation bounds and the exact MILP encoding
//! - [`simplex`] — bounded-variable revised simplex
//! - [`branch_bound`] — branch-and-bound over the encoding's binaries
//! - [`opf`] — loss-linearization dispatch loop, baseline OPF, epsilon sweep
//! - [`report`] — sweep report artifacts (CSV, markdown table, SVG figure)

pub mod branch_bound;
pub mod cases;
pub mod dataset;
pub mod eig;
pub mod encode;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod milp;
pub mod mlp;
pub mod opf;
pub mod oracle;
pub mod pf;
pub mod report;
pub mod simplex;
pub mod smallsignal;

pub use error::{Error, Result};
pub use grid::{AdmittanceMatrix, Bus, BusKind, Generator, GridCase, Line};




pub use pf::{LossLinearization, OperatingPoint, PowerFlowState};
