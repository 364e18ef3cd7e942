//! Exact solver, sampler and numerical checks for a directed polymer pinned
//! by a diluted potential on a line (transverse dimension 1 or 2), and for a
//! two-dimensional Gaussian interface with diluted δ-pinning.
//!
//! The crate is organised by subsystem:
//!
//! * [`walk`]: the lazy reference walk and its exact return probabilities.
//! * [`environment`]: dilution fields ω, contact sites, coarse-grained cells.
//! * [`solver`]: renewal dynamic program for the partition function.
//! * [`sampler`]: exact polymer path sampling (contact set, then bridges).
//! * [`psi`]: the gap-product sums Ψ and Ψ_per and their minimisation.
//! * [`gff`]: the δ-pinned Gaussian interface (Gibbs sampler, determinants).
//! * [`oracle`]: brute-force reference values used by the test suites.
//! * [`cli`]: the `pinning` command-line front end.

pub mod cli;
pub mod environment;
pub mod error;
pub mod gff;
pub mod oracle;
pub mod psi;
pub mod rng;
pub mod sampler;
pub mod solver;
pub mod walk;

pub use environment::{CellAnalysis, ContactSites, Environment, Geometry};
pub use error::{Error, Result};
pub use solver::{PinningInstance, PinningSolution};
pub use walk::{Dimension, ReturnProbTable, WalkKernel};
