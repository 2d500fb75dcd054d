//! Functional-unit discovery in dense motion trajectories.
//!
//! Trajectories become rescaled magnitude/direction features, which are
//! factorized by graph-regularized sparse NMF. The weighting map is then
//! partitioned by a normalized cut. Consensus clustering picks the number
//! of units. Synthetic generators and a phase-based demons tracker supply
//! data with known ground truth.

pub mod bench;
pub mod cluster;
pub mod error;
pub mod factorize;
pub mod features;
pub mod graph;
pub mod labels;
pub mod method;
pub mod pipeline;
pub mod rng;
pub mod select;
pub mod synth;
pub mod tensor;
pub mod tracking;

pub use error::{Error, Result};
