//! Discounted tabular MDPs solved as a saddle-point problem.
//!
//! The value and occupancy linear programs are joined by a Lagrangian whose
//! equilibrium is the optimal (value, occupancy) pair. The [`solver`] runs
//! stochastic mirror descent on that game using a generative model, and the
//! [`saddle`] module exposes the identities the reduction relies on as
//! checkable functions, backed by the exact solvers in [`mdp`].

pub mod bench;
pub mod error;
pub mod features;
pub mod io;
pub mod linalg;
pub mod mdp;
pub mod rng;
pub mod saddle;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};
pub use mdp::{Policy, TabularMdp, TransitionSample, Violation};
pub use rng::RandomStream;
pub use saddle::{ExactOracle, PrimalDualPoint};
