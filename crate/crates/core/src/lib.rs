//! PDE discovery from data: a neural surrogate supplies derivatives through
//! truncated Taylor series, and a genetic algorithm searches over encoded
//! equation genomes scored by an L0-penalized least-squares fitness.

pub mod error;
pub mod experiment;
pub mod ga;
pub mod genome;
pub mod regression;
pub mod series;
pub mod solvers;
pub mod surrogate;
pub mod system;

pub use error::{Error, Result};
