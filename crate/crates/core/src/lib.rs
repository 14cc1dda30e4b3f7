//! Behavioural learning engine.
//!
//! Trains small differentiable classifiers on mixtures of i.i.d. data and
//! behavioural test-suite data (MFT / INV / DIR cases) with test-type-specific
//! losses, evaluates them on controlled held-out partitions of the suite
//! (functionality, functionality class, test type) and aggregates the results
//! into pass rates, harmonic-mean generalisation scores and significance tests.

pub mod alignment;
pub mod batching;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod losses;
pub mod model;
pub mod partition;
pub mod rng;
pub mod suite;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
