//! Certified randomness for device-independent (DI) and semi-device-independent
//! (SDI) protocols.
//!
//! The crate is organised bottom-up:
//!
//! - [`scenario`]: Bell and prepare-and-measure scenarios and probability tables.
//! - [`functionals`]: Bell functionals, dimension witnesses, the conversion between
//!   them, the random-access-code families and exact classical bounds.
//! - [`npa`]: moment-matrix relaxations of the quantum set.
//! - [`sdp`]: the semidefinite programs built on those relaxations, a dense
//!   primal-dual interior-point solver, SDPA export and the min-entropy bounds.
//! - [`qubit`]: explicit qubit strategies and a heuristic local optimizer.
//! - [`protocols`]: Monte-Carlo simulation of the operational protocols.

pub mod error;
pub mod functionals;
pub mod npa;
pub mod protocols;
pub mod qubit;
pub mod scenario;
pub mod sdp;

pub use error::{Error, Result};
pub use functionals::{BellFunctional, DimensionWitness, InputFactorization};
pub use scenario::{Behavior, PmBehavior, PmScenario, Scenario};
