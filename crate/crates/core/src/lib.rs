//! Bias of the Good-Turing missing-mass estimator on stationary rank-2 Markov
//! chains, computed three ways: exactly (through the 2x2 no-visit transfer
//! matrix of each state), by upper bound (spectral gap plus occupancy tail
//! bounds), and by seeded Monte Carlo simulation.

pub mod bounds;
pub mod chains;
pub mod error;
pub mod exact_bias;
pub mod fit;
pub mod simulate;
pub mod spectral_params;

pub use error::{Error, Result};
