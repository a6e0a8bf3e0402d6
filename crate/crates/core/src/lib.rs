//! Difference-in-differences with interval-valued outcomes.

pub mod cli;
pub mod error;
pub mod estimators;
pub mod inference;
pub mod interval;
pub mod numeric;
pub mod panel;
pub mod schema;
pub mod simulation;
pub mod synthetic;

pub use error::{Error, Result};
