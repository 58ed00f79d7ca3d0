//! OFDM PAPR reduction laboratory.
//!
//! - [`signal`]: constellation mapping, arbitrary-length inverse DFT, PAPR.
//! - [`mcsa`]: randomized pilot-sign search and its exhaustive oracle.
//! - [`dataset`] and [`io`]: seeded corpora with a strict train/test split.
//! - [`neural`]: a one-hidden-layer perceptron that learns the search labels.
//! - [`evaluation`]: CCDF curves, method comparison and complexity counts.

pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod mcsa;
pub mod neural;
pub mod seed;
pub mod signal;

pub use error::{Error, Result};
