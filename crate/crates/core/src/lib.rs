//! Fluid-antenna ISAC toolkit.
//!
//! A base station with `N` movable antennas serves one single-antenna user
//! terminal while illuminating `K` sensing targets. The crate jointly designs
//! the transmit covariance (convex, solved here by an interior-point method
//! with Gaussian-randomization rank-one recovery) and the antenna positions
//! (a DDPG agent acting on an MDP over positions), alternating between the two
//! in a block coordinate descent loop. A fixed-position array serves as the
//! baseline.

pub mod bcd;
pub mod beamforming;
pub mod channel;
pub mod ddpg;
pub mod environment;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod nn;

pub use error::{Error, Result};
