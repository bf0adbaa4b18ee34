//! Tension-reduction model of quantum-like measurements.
//!
//! A particle sits at a point `x` of the (N-1)-simplex. A breakable membrane
//! stretched over the simplex tears at a random point `lambda` drawn from a
//! density `rho`, and the particle collapses to the vertex whose region
//! `A_i` contains `lambda`. With the uniform density the outcome
//! probabilities are exactly `x_i`, the Born rule.
//!
//! Modules:
//! - [`simplex`]: barycentric states, region classification, coordinate maps
//! - [`quantum`]: pure states and the Born rule
//! - [`density`]: uniform, cellular, truncated and Dirac densities
//! - [`universal`]: exact averages over all cellular masks
//! - [`montecarlo`]: reproducible transition-probability estimators
//! - [`robustness`]: controlled measurements and their sensitivity to the state

pub mod density;
pub mod error;
pub mod montecarlo;
pub mod quantum;
pub mod report;
pub mod rng;
pub mod robustness;
pub mod simplex;
pub mod stats;
pub mod universal;

pub use density::{CellularMask, ControlRegion, Density};
pub use error::{Error, Result};

pub use montecarlo::TransitionEstimate;
pub use quantum::QuantumState;
pub use simplex::{BarycentricState, RegionLabel};
pub use universal::ExactProbability;

