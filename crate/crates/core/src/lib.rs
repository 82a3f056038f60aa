//! Exact simulation and closed-form analysis of the critical partner model, an
//! SIS epidemic in which infection only passes between partners and
//! partnerships form and dissolve at random.

pub mod analytics;
mod engine;
pub mod error;
pub mod experiments;
pub mod io;
pub mod model;
pub mod rng;
pub mod sde;
pub mod simulator;
pub mod stats;

pub use error::{Error, Result};
