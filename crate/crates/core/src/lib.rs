//! Nash equilibria of graphon games and of the finite network games that
//! approximate them.
//!
//! The crate discretizes the agent space (0, 1] on uniform grids and provides
//!
//! * graphon representations, cell-average quadrature, iterated kernels and
//!   the Neumann-series resolvent ([`graphon`], [`resolvent`]);
//! * network and graphon game records, the step embeddings between them and
//!   regret-based ε-Nash certification ([`games`]);
//! * the plateau linear-quadratic game with its closed-form equilibrium
//!   family ([`lq`]);
//! * damped best-response iteration for general quasi-concave utilities
//!   ([`solver`]);
//! * convergence experiments relating equilibria of converging network
//!   games to equilibria of the limit graphon game ([`lab`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod games;
pub mod graphon;
pub mod grid;
pub mod io;
pub mod lab;
pub mod lq;
pub mod optimize;
pub mod resolvent;
pub mod solver;
pub mod utility;

pub use error::{Error, Result};
pub use games::{GraphonGame, NetworkGame, RegretReport};
pub use graphon::{Graphon, StepGraphon};
pub use grid::{GridSpec, StepProfile};
pub use resolvent::ResolventKernel;
