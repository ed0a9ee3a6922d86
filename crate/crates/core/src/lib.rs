//! Multi-bump positive solutions of `−Δu + a(x)u = u^p` on `ℝ^N`, computed by
//! constrained minimisation over bump configurations on a truncated box.
//!
//! The crate is organised bottom-up:
//!
//! * [`field`] and [`spectral`]: grids, fields, finite differences, quadrature
//!   and a fast Dirichlet Helmholtz solver.
//! * [`potential`]: potential families and checks of their decay hypotheses.
//! * [`groundstate`]: the radial ground state of the limit problem.
//! * [`energy`]: the energy functional, the submerged/emerging splitting and
//!   weak gradients.
//! * [`constraints`]: local Nehari and barycenter constraints.
//! * [`solver`]: minimisation over the constraint set and multipliers.
//! * [`minimax`]: the max-min search over bump configurations.
//! * [`diagnostics`]: structural and asymptotic checks on results.

pub mod constraints;
pub mod diagnostics;
pub mod energy;
pub mod error;
pub mod field;
pub mod groundstate;
pub mod io;
mod linalg;
pub mod minimax;
pub mod point;
pub mod potential;
pub mod solver;
pub mod spectral;

pub use error::{Error, Result};
pub use field::{Field, Grid};
pub use groundstate::{GroundState, Threshold};
pub use point::Point;
pub use potential::Potential;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/discretization.md")]
    mod discretization {}
    #[doc = include_str!("../../../book/src/ground_state.md")]
    mod ground_state {}
    #[doc = include_str!("../../../book/src/energy.md")]
    mod energy {}
    #[doc = include_str!("../../../book/src/constraints.md")]
    mod constraints {}
    #[doc = include_str!("../../../book/src/minimization.md")]
    mod minimization {}
    #[doc = include_str!("../../../book/src/minimax.md")]
    mod minimax {}
    #[doc = include_str!("../../../book/src/diagnostics.md")]
    mod diagnostics {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
