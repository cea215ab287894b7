//! PI controller with tracking (back-calculation) anti-windup.
//!
//! Each scan is split in two phases. [`PiController::propose`] computes the
//! candidate output from the current measurement without touching the
//! integral state. Once the selector network has decided which value goes to
//! the valve, [`PiController::commit`] integrates the error and pulls the
//! integral towards the selected value with time constant `tau_t`. A
//! controller that loses a selector therefore keeps its candidate close to
//! the value actually applied and can take over without a bump.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which output limit clipped the last proposal, if any.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Saturation {
    Low,
    High,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiController {
    name: String,
    kc: f64,
    tau_i: f64,
    tau_t: f64,
    setpoint: f64,
    u_min: f64,
    u_max: f64,
    integral: f64,
    tracking: bool,
    last_candidate: f64,
    pending: bool,
}

impl PiController {
    /// New controller with `tau_t = tau_i`, limits `[0, 100]` % and zero
    /// integral state.
    pub fn new(name: impl Into<String>, kc: f64, tau_i: f64, setpoint: f64) -> Result<Self> {
        let name = name.into();
        if !kc.is_finite() || !setpoint.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "controller `{name}`: kc and setpoint must be finite"
            )));
        }
        if !(tau_i > 0.0) || !tau_i.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "controller `{name}`: tau_i must be positive, got {tau_i}"
            )));
        }
        Ok(Self {
            name,
            kc,
            tau_i,
            tau_t: tau_i,
            setpoint,
            u_min: 0.0,
            u_max: 100.0,
            integral: 0.0,
            tracking: true,
            last_candidate: 0.0,
            pending: false,
        })
    }

    pub fn with_tracking_time(mut self, tau_t: f64) -> Result<Self> {
        if !(tau_t > 0.0) || !tau_t.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "controller `{}`: tau_t must be positive, got {tau_t}",
                self.name
            )));
        }
        self.tau_t = tau_t;
        Ok(self)
    }

    pub fn with_limits(mut self, u_min: f64, u_max: f64) -> Result<Self> {
        if !(u_min < u_max) || !u_min.is_finite() || !u_max.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "controller `{}`: need u_min < u_max, got [{u_min}, {u_max}]",
                self.name
            )));
        }
        self.u_min = u_min;
        self.u_max = u_max;
        Ok(self)
    }

    pub fn with_integral(mut self, integral: f64) -> Self {
        self.integral = integral;
        self
    }

    /// Disables the tracking term. Only useful to demonstrate windup.
    pub fn without_tracking(mut self) -> Self {
        self.tracking = false;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kc(&self) -> f64 {
        self.kc
    }

    pub fn tau_i(&self) -> f64 {
        self.tau_i
    }

    pub fn tau_t(&self) -> f64 {
        self.tau_t
    }

    pub fn setpoint(&self) -> f64 {
        self.setpoint
    }

    pub fn set_setpoint(&mut self, setpoint: f64) {
        self.setpoint = setpoint;
    }

    pub fn limits(&self) -> (f64, f64) {
        (self.u_min, self.u_max)
    }

    pub fn integral(&self) -> f64 {
        self.integral
    }

    pub fn tracking(&self) -> bool {
        self.tracking
    }

    /// Unclamped output of the most recent proposal.
    pub fn last_candidate(&self) -> f64 {
        self.last_candidate
    }

    /// Clipping applied to the most recent proposal.
    pub fn saturation(&self) -> Option<Saturation> {
        if self.last_candidate < self.u_min {
            Some(Saturation::Low)
        } else if self.last_candidate > self.u_max {
            Some(Saturation::High)
        } else {
            None
        }
    }

    /// Sets the integral to the value it holds at a steady state where the
    /// applied output is `u` and the measurement is `y`. For a selected
    /// controller (`y == setpoint`) this is simply `u`.
    pub fn initialize_steady(&mut self, u: f64, y: f64) {
        let e = self.setpoint - y;
        self.integral = if self.tracking {
            u - self.kc * e + self.kc * e * self.tau_t / self.tau_i
        } else {
            u - self.kc * e
        };
        self.pending = false;
    }

    /// Candidate output `clamp(kc·(setpoint − y) + integral)`.
    pub fn propose(&mut self, y: f64) -> Result<f64> {
        if !y.is_finite() {
            return Err(Error::NonFiniteMeasurement {
                controller: self.name.clone(),
                value: y,
            });
        }
        let candidate = self.kc * (self.setpoint - y) + self.integral;
        self.last_candidate = candidate;
        self.pending = true;
        Ok(candidate.clamp(self.u_min, self.u_max))
    }

    /// Forward-Euler update of the integral given the value that was
    /// actually applied downstream of the selectors.
    pub fn commit(&mut self, u_selected: f64, y: f64, dt: f64) -> Result<()> {
        if !self.pending {
            return Err(Error::CommitWithoutPropose {
                controller: self.name.clone(),
            });
        }
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "controller `{}`: dt must be positive, got {dt}",
                self.name
            )));
        }
        if !u_selected.is_finite() {
            return Err(Error::NonFiniteMeasurement {
                controller: self.name.clone(),
                value: u_selected,
            });
        }
        let e = self.setpoint - y;
        let mut delta = self.kc / self.tau_i * e * dt;
        if self.tracking {
            delta += (u_selected - self.last_candidate) * dt / self.tau_t;
        }
        self.integral += delta;
        self.pending = false;
        Ok(())
    }
}
