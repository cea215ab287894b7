//! Linearization of the barn model and SIMC PI tuning.

use serde::Serialize;

use crate::barn::{barn_steady_state, fan_flow, BarnParams};
use crate::error::{Error, Result};

/// Gains and time constants of the barn at one operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearizedPoint {
    pub u1: f64,
    pub u2: f64,
    pub t_out: f64,
    /// Airflow, m³/s.
    pub q: f64,
    pub c_ppm: f64,
    pub t: f64,
    /// CO2 time constant V/q, s.
    pub tau_c: f64,
    /// Thermal time constant, s.
    pub tau_t: f64,
    /// ppm per % fan.
    pub k_c_u1: f64,
    /// °C per % fan.
    pub k_t_u1: f64,
    /// °C per % heater.
    pub k_t_u2: f64,
}

impl LinearizedPoint {
    /// Initial slope k/τ of the fan → CO2 response.
    pub fn kprime_c_u1(&self) -> f64 {
        self.k_c_u1 / self.tau_c
    }

    pub fn kprime_t_u1(&self) -> f64 {
        self.k_t_u1 / self.tau_t
    }

    pub fn kprime_t_u2(&self) -> f64 {
        self.k_t_u2 / self.tau_t
    }
}

pub fn linearize_barn(u1: f64, u2: f64, t_out: f64, params: &BarnParams) -> Result<LinearizedPoint> {
    params.validate()?;
    let (c_ppm, t) = barn_steady_state(u1, u2, t_out, params)?;
    let q = fan_flow(u1, params)?;
    let rc = params.rho * params.cp;
    let span = params.q_max - params.q_min;
    let denom = rc * q + params.ua;
    Ok(LinearizedPoint {
        u1,
        u2,
        t_out,
        q,
        c_ppm,
        t,
        tau_c: params.volume / q,
        tau_t: rc * params.volume / denom,
        k_c_u1: -params.n_cows * params.g_co2 * span / (q * q) * 1e6 / 100.0,
        k_t_u1: -(t - t_out) * rc / denom * span / 100.0,
        k_t_u2: (params.q_heat_max / 100.0) / denom,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimcTuning {
    pub kc: f64,
    pub tau_i: f64,
    pub tau_c_choice: f64,
    pub scaling_factor: f64,
}

impl SimcTuning {
    /// Detuned by `factor`: gain divided, integral time multiplied.
    pub fn scaled(self, factor: f64) -> Self {
        Self {
            kc: self.kc / factor,
            tau_i: self.tau_i * factor,
            scaling_factor: self.scaling_factor * factor,
            ..self
        }
    }
}

/// SIMC PI rule without time delay: `Kc = 1/(k'·τc)`, `τI = min(τ, 4τc)`.
pub fn simc_pi(kprime: f64, tau: f64, tau_c: f64) -> Result<SimcTuning> {
    if kprime == 0.0 || !kprime.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "SIMC needs a non-zero initial slope, got {kprime}"
        )));
    }
    if !(tau > 0.0) || !(tau_c > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "SIMC needs positive time constants, got tau = {tau}, tau_c = {tau_c}"
        )));
    }
    Ok(SimcTuning {
        kc: 1.0 / (kprime * tau_c),
        tau_i: tau.min(4.0 * tau_c),
        tau_c_choice: tau_c,
        scaling_factor: 1.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TuningRow {
    pub name: &'static str,
    pub mv: &'static str,
    /// Measurement channel, `T` or `c`.
    pub channel: &'static str,
    pub kc: f64,
    pub tau_i: f64,
    pub setpoint: f64,
    pub unit: &'static str,
}

/// PI tunings of the six barn controllers.
///
/// The nominal loops use τ = τc = 350 s with the SIMC gains rounded up
/// (−8.3 → −10 for temperature, −0.095 → −0.1 for CO2, 22.2 → 22 for the
/// heater). CC1 is detuned by 5 and TC2 by `tc2_factor` (3 in the reference
/// simulation), with the TC2 gain rounded to two decimals.
pub fn tuning_table(tc2_factor: f64) -> Vec<TuningRow> {
    const TAU: f64 = 350.0;
    let tc2_kc = (-10.0 / tc2_factor * 100.0).round() / 100.0;
    vec![
        TuningRow {
            name: "TC1",
            mv: "u1",
            channel: "T",
            kc: -10.0,
            tau_i: TAU,
            setpoint: 20.0,
            unit: "°C",
        },
        TuningRow {
            name: "TC3",
            mv: "u1",
            channel: "T",
            kc: -10.0,
            tau_i: TAU,
            setpoint: 5.0,
            unit: "°C",
        },
        TuningRow {
            name: "TC2",
            mv: "u1",
            channel: "T",
            kc: tc2_kc,
            tau_i: TAU * tc2_factor,
            setpoint: 0.0,
            unit: "°C",
        },
        TuningRow {
            name: "CC2",
            mv: "u1",
            channel: "c",
            kc: -0.1,
            tau_i: TAU,
            setpoint: 1000.0,
            unit: "ppm",
        },
        TuningRow {
            name: "CC1",
            mv: "u1",
            channel: "c",
            // CC2 detuned by 5
            kc: -0.02,
            tau_i: TAU * 5.0,
            setpoint: 3000.0,
            unit: "ppm",
        },
        TuningRow {
            name: "TC",
            mv: "u2",
            channel: "T",
            kc: 22.0,
            tau_i: TAU,
            setpoint: 4.0,
            unit: "°C",
        },
    ]
}
