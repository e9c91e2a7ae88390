//! Contextuality-by-Default analysis of systems of binary random variables.
//!
//! The degree of contextuality of a system is `min V - 1`, where `V` is the
//! total variation of a signed joint distribution over all measured cells
//! whose row marginals reproduce the bunches and whose column marginals
//! reproduce the multimaximal couplings of the connections. Filling empty
//! cells with deterministic variables ([`augment`]) leaves it unchanged.

pub mod augment;
pub mod catalog;
pub mod cli;
pub mod coupling;
pub mod error;
pub mod lp;
pub mod system;

pub use error::{Error, Result};
