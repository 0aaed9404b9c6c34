//! Solvers and diagnostics for self-dual Chern–Simons vortices on the flat torus and the plane.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
mod fft;
mod krylov;
pub mod monotone_solver;
pub mod newton_solver;
mod ode;
pub mod perturbative;
pub mod radial_planar;
pub mod report;
pub mod special;
pub mod torus_field;
pub mod vortex_background;

pub use krylov::{KrylovMethod, KrylovStats};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[cfg(doctest)]
#[doc = include_str!("../../../README.md")]
mod readme {}

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/torus.md")]
    mod torus {}
    #[doc = include_str!("../../../book/src/solvers.md")]
    mod solvers {}
    #[doc = include_str!("../../../book/src/planar.md")]
    mod planar {}
    #[doc = include_str!("../../../book/src/perturbative.md")]
    mod perturbative {}
    #[doc = include_str!("../../../book/src/diagnostics.md")]
    mod diagnostics {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
