pub mod bounds;
pub mod cli;
pub mod corr;
pub mod error;
pub mod experiment;
pub mod gaussint;
pub mod polytope;
pub mod rng;
pub mod stats;
pub mod stein;
pub mod suite;

pub use error::{Error, Result};
