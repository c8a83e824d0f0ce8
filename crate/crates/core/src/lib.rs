//! Hamiltonian Monte Carlo with delayed-rejection retries.
//!
//! When a Hamiltonian proposal is rejected, the delayed-rejection sampler
//! retries from the same state with the step size divided by an integer
//! factor `a` and the number of leapfrog steps multiplied by `a`, so the
//! integration time stays fixed. Each retry is accepted with a probability
//! that keeps the chain reversible with respect to the target; computing it
//! requires the density at "ghost" points that the reverse move would have
//! proposed. Retries can optionally be made at random with probability
//! `1 - alpha` of the rejected stage.
//!
//! The crate is organised as
//! - [`model`]: benchmark targets with analytic gradients and evaluation counters,
//! - [`phase_space`]: leapfrog integration and the stage proposal maps,
//! - [`sampler`]: the HMC and delayed-rejection transitions and chain driver,
//! - [`adaptation`]: dual-averaging step size and diagonal mass warmup,
//! - [`diagnostics`]: effective sample size, cost per effective draw, KS tests and bootstrap,
//! - [`harness`]: configuration-driven experiment grids and artifact output.

pub mod adaptation;
pub mod dataset;
pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod math;
pub mod model;
pub mod phase_space;
pub mod rng;
pub mod sampler;

pub use error::{Error, Result};
pub use model::{Density, Moment, TargetModel};
pub use phase_space::{MassMatrix, PhasePoint, ProposalMapSpec};
pub use sampler::{run_chain, ChainResult, DrConfig, Method, RetryRule};
