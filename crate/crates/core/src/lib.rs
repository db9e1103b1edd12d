//! Penalization solver for obstacle problems of stochastic integro-PDEs driven by a
//! symmetric jump-diffusion, with Monte Carlo checks of the probabilistic representation.
//!
//! The crate is organized bottom-up:
//!
//! - [`levy`] samples the process `X = W + jumps` and tests its law;
//! - [`ipde`] discretizes the generator and the Dirichlet form and runs the penalized backward sweep;
//! - [`semigroup`] exponentiates the discrete generator and builds resolvents and potentials;
//! - [`bdsde`] evaluates solution fields along sampled paths;
//! - [`obstacle`] drives the penalization limit and checks the limiting measure;
//! - [`cli`] wires everything into reproducible experiment runs.

pub mod bdsde;
pub mod cli;
pub mod error;
pub mod fixtures;
pub mod ipde;
pub mod levy;
pub mod obstacle;
pub mod rng;
pub mod semigroup;
pub mod stats;

pub use error::{Error, Result};
