//! Surrogate gas-liquid separator: well with linear inflow resistance,
//! choke valve, vessel with gas and liquid holdup, compressor on the gas
//! outlet and a valve on the liquid outlet.
//!
//! Well pressure is quasi-static. Valve and compressor openings are in %.

use serde::{Deserialize, Serialize};

use crate::control::{ControlGraph, SplitParallelPair};
use crate::error::{Error, Result};
use crate::sim::{Plant, RunResult};
use crate::topology::{graph_from_flowsheet, parse_flowsheet, FlowsheetSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeparatorParams {
    /// Static reservoir pressure, bar.
    pub p_res: f64,
    /// Inflow resistance, bar per unit feed.
    pub r_well: f64,
    pub cv_choke: f64,
    /// Fraction of the feed leaving as gas.
    pub gas_fraction: f64,
    /// Pressure rise per unit gas imbalance, bar/s.
    pub v_gas: f64,
    /// Level rise per unit liquid imbalance, %/s.
    pub area: f64,
    /// Compressor flow at 100 % speed and `p_sp`.
    pub k_comp: f64,
    pub cv_liq: f64,
    /// Pressure downstream of the liquid valve, bar.
    pub p_down: f64,
    pub p_min_well: f64,
    /// Nominal separator pressure SPL, bar.
    pub p_sp: f64,
    /// Split-parallel setpoint gap, SPH = SPL + delta.
    pub delta: f64,
    /// Operator choke setpoint z_s, %.
    pub z_s: f64,
    pub level_sp: f64,
}

impl Default for SeparatorParams {
    fn default() -> Self {
        Self {
            p_res: 200.0,
            r_well: 10.0,
            cv_choke: 0.32,
            gas_fraction: 0.5,
            v_gas: 0.5,
            area: 0.5,
            k_comp: 1.6,
            cv_liq: 0.26,
            p_down: 10.0,
            p_min_well: 170.0,
            p_sp: 70.0,
            delta: 1.0,
            z_s: 60.0,
            level_sp: 50.0,
        }
    }
}

impl SeparatorParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("p_res", self.p_res),
            ("r_well", self.r_well),
            ("cv_choke", self.cv_choke),
            ("gas_fraction", self.gas_fraction),
            ("v_gas", self.v_gas),
            ("area", self.area),
            ("k_comp", self.k_comp),
            ("cv_liq", self.cv_liq),
            ("p_down", self.p_down),
            ("p_min_well", self.p_min_well),
            ("p_sp", self.p_sp),
            ("delta", self.delta),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "separator parameter `{name}` must be positive, got {v}"
                )));
            }
        }
        if self.gas_fraction >= 1.0 {
            return Err(Error::InvalidParameter("gas_fraction must be below 1".into()));
        }
        if !(self.p_res > self.p_min_well && self.p_min_well > self.p_sp && self.p_sp > self.p_down) {
            return Err(Error::InvalidParameter(
                "separator pressures must satisfy p_res > p_min_well > p_sp > p_down".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeparatorState {
    /// Vessel pressure, bar.
    pub p_sep: f64,
    /// Liquid level, %.
    pub level: f64,
}

pub fn well_pressure(feed: f64, p: &SeparatorParams) -> f64 {
    p.p_res - p.r_well * feed
}

/// Feed through the choke with the well pressure solved consistently:
/// `F = a·sqrt(p_res − r·F − p_sep)`, `a = cv·z/100`. Zero under reverse
/// pressure.
pub fn feed_flow(z_choke: f64, p_sep: f64, p: &SeparatorParams) -> f64 {
    let a = p.cv_choke * z_choke.max(0.0) / 100.0;
    let head = p.p_res - p_sep;
    if a <= 0.0 || head <= 0.0 {
        return 0.0;
    }
    let a2 = a * a;
    let b = a2 * p.r_well;
    // stable root of F² + bF − a²·head = 0
    2.0 * a2 * head / (b + (b * b + 4.0 * a2 * head).sqrt())
}

pub fn compressor_flow(speed: f64, p_sep: f64, p: &SeparatorParams) -> f64 {
    p.k_comp * speed / 100.0 * (p_sep.max(0.0) / p.p_sp).sqrt()
}

pub fn liquid_flow(z_liq: f64, p_sep: f64, p: &SeparatorParams) -> f64 {
    p.cv_liq * z_liq / 100.0 * (p_sep - p.p_down).max(0.0).sqrt()
}

/// `(dp_sep/dt, dlevel/dt)`.
pub fn separator_derivatives(
    s: &SeparatorState,
    z_choke: f64,
    speed: f64,
    z_liq: f64,
    p: &SeparatorParams,
) -> Result<(f64, f64)> {
    for (name, v) in [("z_choke", z_choke), ("speed", speed), ("z_liq", z_liq)] {
        if !(0.0..=100.0).contains(&v) {
            return Err(Error::OutOfRange {
                name,
                value: v,
                min: 0.0,
                max: 100.0,
            });
        }
    }
    let f = feed_flow(z_choke, s.p_sep, p);
    let dp = p.v_gas * (p.gas_fraction * f - compressor_flow(speed, s.p_sep, p));
    let dl = p.area * ((1.0 - p.gas_fraction) * f - liquid_flow(z_liq, s.p_sep, p));
    Ok((dp, dl))
}

/// Compressor speed and liquid valve opening that balance the vessel at
/// the given choke opening and pressure.
pub fn commission(z_choke: f64, p_sep: f64, p: &SeparatorParams) -> Result<(f64, f64)> {
    let f = feed_flow(z_choke, p_sep, p);
    let speed = 100.0 * p.gas_fraction * f / (p.k_comp * (p_sep / p.p_sp).sqrt());
    let z_liq = 100.0 * (1.0 - p.gas_fraction) * f / (p.cv_liq * (p_sep - p.p_down).sqrt());
    for (name, v) in [("speed", speed), ("z_liq", z_liq)] {
        if !(0.0..=100.0).contains(&v) || !v.is_finite() {
            return Err(Error::OutOfRange {
                name,
                value: v,
                min: 0.0,
                max: 100.0,
            });
        }
    }
    Ok((speed, z_liq))
}

/// States `[p_sep, level]`, MVs `[choke, compressor, liq_valve]`,
/// disturbances `[gas_fraction, p_res]`, outputs
/// `[p_sep, level, p_well, feed, gas_out, liquid_out]`.
#[derive(Debug, Clone)]
pub struct SeparatorPlant {
    pub params: SeparatorParams,
}

impl SeparatorPlant {
    pub fn new(params: SeparatorParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { params })
    }

    fn with_disturbances(&self, d: &[f64]) -> SeparatorParams {
        SeparatorParams {
            gas_fraction: d[0],
            p_res: d[1],
            ..self.params
        }
    }
}

impl Plant for SeparatorPlant {
    fn name(&self) -> &'static str {
        "separator"
    }

    fn state_names(&self) -> &'static [&'static str] {
        &["p_sep", "level"]
    }

    fn input_names(&self) -> &'static [&'static str] {
        &["choke", "compressor", "liq_valve"]
    }

    fn disturbance_names(&self) -> &'static [&'static str] {
        &["gas_fraction", "p_res"]
    }

    fn default_disturbances(&self) -> Vec<f64> {
        vec![self.params.gas_fraction, self.params.p_res]
    }

    fn output_names(&self) -> &'static [&'static str] {
        &["p_sep", "level", "p_well", "feed", "gas_out", "liquid_out"]
    }

    fn derivatives(&self, x: &[f64], u: &[f64], d: &[f64], dx: &mut [f64]) -> Result<()> {
        let p = self.with_disturbances(d);
        let s = SeparatorState {
            p_sep: x[0],
            level: x[1],
        };
        let (dp, dl) = separator_derivatives(&s, u[0], u[1], u[2], &p)?;
        dx[0] = dp;
        // level holds at the walls
        dx[1] = if (x[1] <= 0.0 && dl < 0.0) || (x[1] >= 100.0 && dl > 0.0) {
            0.0
        } else {
            dl
        };
        Ok(())
    }

    fn outputs(&self, x: &[f64], u: &[f64], d: &[f64], y: &mut [f64]) {
        let p = self.with_disturbances(d);
        let f = feed_flow(u[0], x[0], &p);
        y[0] = x[0];
        y[1] = x[1];
        y[2] = well_pressure(f, &p);
        y[3] = f;
        y[4] = compressor_flow(u[1], x[0], &p);
        y[5] = liquid_flow(u[2], x[0], &p);
    }

    fn project(&self, x: &mut [f64]) {
        x[0] = x[0].max(0.0);
        x[1] = x[1].clamp(0.0, 100.0);
    }

    fn state_from_outputs(&self, y: &[f64]) -> Vec<f64> {
        vec![y[0], y[1]]
    }

    fn commissioned(&self, d: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let p = self.with_disturbances(d);
        let (speed, z_liq) = commission(p.z_s, p.p_sp, &p)?;
        Ok((vec![p.p_sp, p.level_sp], vec![p.z_s, speed, z_liq]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeparatorScheme {
    /// TPM at the feed; pressure on the compressor, level on the liquid valve.
    Fig1,
    /// Adds the minimum well-pressure override on the choke.
    Fig2,
    /// Bidirectional inventory control with split-parallel pressure loops.
    Fig3,
}

impl SeparatorScheme {
    pub fn flowsheet_text(self) -> &'static str {
        match self {
            SeparatorScheme::Fig1 => include_str!("../../../flowsheets/fig1.toml"),
            SeparatorScheme::Fig2 => include_str!("../../../flowsheets/fig2.toml"),
            SeparatorScheme::Fig3 => include_str!("../../../flowsheets/fig3.toml"),
        }
    }

    pub fn flowsheet(self) -> Result<FlowsheetSpec> {
        parse_flowsheet(self.flowsheet_text())
    }
}

impl std::str::FromStr for SeparatorScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fig1" => Ok(SeparatorScheme::Fig1),
            "fig2" => Ok(SeparatorScheme::Fig2),
            "fig3" => Ok(SeparatorScheme::Fig3),
            _ => Err(Error::InvalidParameter(format!("unknown separator scheme `{s}`"))),
        }
    }
}

/// Control graph of a scheme with setpoints and z_s taken from `params`.
pub fn build_scheme(scheme: SeparatorScheme, params: &SeparatorParams) -> Result<(FlowsheetSpec, ControlGraph)> {
    params.validate()?;
    let spec = scheme.flowsheet()?;
    let mut graph = graph_from_flowsheet(&spec)?;
    graph.set_constant("z_s", params.z_s)?;
    if let Some(lc) = graph.controller_mut("LC") {
        lc.set_setpoint(params.level_sp);
    }
    if let Some(pc1) = graph.controller_mut("PC1") {
        pc1.set_setpoint(params.p_min_well);
    }
    if let Some(pc) = graph.controller_mut("PC") {
        pc.set_setpoint(params.p_sp);
    }
    if let (Some(a), Some(b)) = (graph.controller("PC_A"), graph.controller("PC_B")) {
        let mut low = a.clone();
        low.set_setpoint(params.p_sp);
        let pair = SplitParallelPair::new(low, b.clone(), params.delta)?;
        let (spl, sph) = (pair.low().setpoint(), pair.high().setpoint());
        graph.controller_mut("PC_A").expect("present").set_setpoint(spl);
        graph.controller_mut("PC_B").expect("present").set_setpoint(sph);
    }
    Ok((spec, graph))
}

pub fn build_fig1(params: &SeparatorParams) -> Result<(FlowsheetSpec, ControlGraph)> {
    build_scheme(SeparatorScheme::Fig1, params)
}

pub fn build_fig2(params: &SeparatorParams) -> Result<(FlowsheetSpec, ControlGraph)> {
    build_scheme(SeparatorScheme::Fig2, params)
}

pub fn build_fig3(params: &SeparatorParams) -> Result<(FlowsheetSpec, ControlGraph)> {
    build_scheme(SeparatorScheme::Fig3, params)
}

/// Time spans `[start, end)` where `pred` holds on consecutive rows.
fn spans(run: &RunResult, pred: impl Fn(usize) -> bool) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut open: Option<f64> = None;
    for k in 0..run.len() {
        match (pred(k), open) {
            (true, None) => open = Some(run.time[k]),
            (false, Some(t0)) => {
                out.push((t0, run.time[k]));
                open = None;
            }
            _ => {}
        }
    }
    if let Some(t0) = open {
        out.push((t0, *run.time.last().expect("non-empty")));
    }
    out
}

/// Intervals of a bidirectional run where neither split-parallel pressure
/// controller is selected and `p_sep` lies strictly between SPL and SPH.
pub fn drifting_intervals(run: &RunResult, spl: f64, sph: f64) -> Vec<(f64, f64)> {
    let (Some(comp), Some(choke), Some(p)) = (
        run.winner_trace("compressor"),
        run.winner_trace("choke"),
        run.channel("p_sep"),
    ) else {
        return Vec::new();
    };
    spans(run, |k| {
        !comp[k].starts_with("PC_A") && !choke[k].starts_with("PC_B") && p[k] > spl && p[k] < sph
    })
}

/// Intervals where both split-parallel controllers are selected at once.
pub fn overlap_intervals(run: &RunResult) -> Vec<(f64, f64)> {
    let (Some(comp), Some(choke)) = (run.winner_trace("compressor"), run.winner_trace("choke")) else {
        return Vec::new();
    };
    spans(run, |k| comp[k] == "PC_A" && choke[k] == "PC_B")
}
