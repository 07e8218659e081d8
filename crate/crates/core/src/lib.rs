//! Monte Carlo machinery for Lévy sheets, the complex random fields built
//! from them, and weak-approximation experiments for the one-dimensional
//! stochastic heat equation.
//!
//! The crate is organized around the pipeline
//! [`levy_char`] → [`sheet_sim`] → [`field_approx`] → [`stat_harness`] /
//! [`spde_solver`]: driver exponents, exact sheet sampling on grids, the
//! oscillatory field quadrature, and the statistical verification and SPDE
//! layers on top. All randomness flows through seeded counter-based streams,
//! so every result is bit-reproducible for a fixed seed regardless of thread
//! count.

pub mod field_approx;
pub mod levy_char;
pub mod sheet_sim;
pub mod spde_solver;
pub mod stat_harness;

pub use levy_char::{ExponentModel, JumpAtom, ThetaConfig};
pub use sheet_sim::{GridSpec, RngStream, SheetPath};
