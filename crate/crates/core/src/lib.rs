//! Simulation and design-checking toolkit for advanced regulatory control:
//! PI controllers with tracking anti-windup, MIN/MAX/MID selectors and
//! split-parallel pairs, two plant models, SIMC tuning, a fixed-step
//! closed-loop simulator and a rule checker for control structures.

pub mod barn;
pub mod control;
pub mod error;
pub mod separator;
pub mod sim;
pub mod topology;
pub mod tuning;

pub use error::{Error, Result};
