use serde::Serialize;

use crate::error::{Error, Result};

/// Levels of the outdoor-temperature staircase used for the barn: down to
/// −40 °C, up to 15 °C and back to nominal.
pub const COW_STAIRCASE: [f64; 18] = [
    0.0, -2.5, -5.0, -10.0, -20.0, -30.0, -40.0, -30.0, -20.0, -10.0, -5.0, 0.0, 5.0, 10.0, 15.0,
    10.0, 5.0, 0.0,
];

pub const DEFAULT_SEGMENT: f64 = 4000.0;

/// Piecewise-constant signal: `values[0]` before `breakpoints[0]`,
/// `values[i]` on `[breakpoints[i-1], breakpoints[i])`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Profile {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl Profile {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if values.len() != breakpoints.len() + 1 {
            return Err(Error::InvalidParameter(format!(
                "profile needs one more value than breakpoints, got {} values and {} breakpoints",
                values.len(),
                breakpoints.len()
            )));
        }
        if breakpoints.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("profile contains non-finite numbers".into()));
        }
        if breakpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter(
                "profile breakpoints must be strictly increasing".into(),
            ));
        }
        Ok(Self { breakpoints, values })
    }

    pub fn constant(value: f64) -> Self {
        Self {
            breakpoints: Vec::new(),
            values: vec![value],
        }
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value_at(&self, t: f64) -> f64 {
        let i = self.breakpoints.partition_point(|&b| b <= t);
        self.values[i]
    }
}

/// One level per `segment` seconds, starting at t = 0.
pub fn staircase_profile(levels: &[f64], segment: f64) -> Result<Profile> {
    if levels.is_empty() {
        return Err(Error::InvalidParameter("staircase needs at least one level".into()));
    }
    if !(segment > 0.0) || !segment.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "staircase segment must be positive, got {segment}"
        )));
    }
    let breakpoints = (1..levels.len()).map(|i| i as f64 * segment).collect();
    Profile::new(breakpoints, levels.to_vec())
}
