//! Numerical workbench for the fractional Schrödinger equation with the
//! nonlocal Neumann condition
//!
//! ```text
//! ε^{2s}(−Δ)ˢu + u = f(u)  in Ω,        𝒩ₛu = 0  in ℝᴺ∖Ω.
//! ```
//!
//! Modules follow the pipeline: [`mesh`] builds Ω and its exterior collar,
//! [`nonlocal`] assembles the kernel weights and the operators derived from
//! them, [`problem`] defines the nonlinearity and the energy `I_ε`,
//! [`testfn`] carries the tent function and its closed-form constants,
//! [`mountain_pass`] computes and certifies a mountain-pass critical point,
//! [`moser`] runs the truncation and L^q-ladder machinery, and
//! [`experiments`] wires everything into reproducible runs.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod mesh;
pub mod moser;
pub mod mountain_pass;
pub mod nonlocal;
pub mod par;
pub mod problem;
pub mod sobolev;
pub mod testfn;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use grid::GridFunction;
pub use mesh::{build_box_mesh, build_disk_mesh, build_interval_mesh, DomainMesh, DomainShape};
pub use nonlocal::{assemble, assemble_with, AssemblyOptions, FormOperator};
pub use par::Exec;
pub use problem::{NonlinearitySpec, ProblemSpec};
