//! Controller blocks and the graph that wires them onto manipulated
//! variables.

mod graph;
mod pi;
mod selector;

pub use graph::{ChainStage, ControlGraph, GraphBuilder, MvChain, Scan, Winner};
pub use pi::{PiController, Saturation};
pub use selector::{select, SelectorKind, SelectorNode, Source};

use crate::error::{Error, Result};

/// Two controllers on the same CV with setpoints `SPL` and `SPH = SPL + Δ`,
/// each acting on its own MV. Switching happens through saturation and
/// feedback rather than a split-range table.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitParallelPair {
    low: PiController,
    high: PiController,
    delta: f64,
}

impl SplitParallelPair {
    /// Overwrites the setpoint of `high` with `low.setpoint() + delta`.
    pub fn new(low: PiController, mut high: PiController, delta: f64) -> Result<Self> {
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "split-parallel setpoint separation must be positive, got {delta}"
            )));
        }
        high.set_setpoint(low.setpoint() + delta);
        Ok(Self { low, high, delta })
    }

    pub fn low(&self) -> &PiController {
        &self.low
    }

    pub fn high(&self) -> &PiController {
        &self.high
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Controller entries for [`ControlGraph::from_chains`]. Both read
    /// `measurement`; the two MVs must differ.
    pub fn into_entries(
        self,
        measurement: &str,
        mv_low: &str,
        mv_high: &str,
    ) -> Result<[(PiController, String, String); 2]> {
        if mv_low == mv_high {
            return Err(Error::Graph(format!(
                "split-parallel pair `{}`/`{}` must drive different MVs, both use `{mv_low}`",
                self.low.name(),
                self.high.name()
            )));
        }
        Ok([
            (self.low, measurement.to_string(), mv_low.to_string()),
            (self.high, measurement.to_string(), mv_high.to_string()),
        ])
    }
}
