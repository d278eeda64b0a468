//! Metropolized Hamiltonian Monte Carlo with the leapfrog integrator.
//!
//! The crate covers target densities, the integrator and its Jacobians, the
//! Metropolis kernel, theory-driven tuning, proposal-overlap analysis, tensor norms and
//! Monte Carlo checks of moment bounds.

pub mod concentration;
pub mod diagnostics;
pub mod error;
pub mod kernel;
pub mod leapfrog;
pub mod linalg;
pub mod overlap;
pub mod rng;
pub mod stats;
pub mod target;
pub mod tensor;
pub mod tuning;

pub use concentration::{MomentReport, StationarySampler};
pub use error::{HmcError, Result};
pub use kernel::{hmc_transition, run_chain, ChainTrace, HmcConfig};
pub use leapfrog::{forward_map, leapfrog_step, PhaseState, Trajectory};
pub use target::{Target, TargetConfig};
pub use tensor::{Tensor3, TensorNormReport};
pub use tuning::{TheoryParams, TunedParams};
