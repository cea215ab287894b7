//! Well-mixed barn model: CO2 balance, energy balance and fan map, plus the
//! closed-form steady state and the active-constraint steady-state solver.
//!
//! CO2 is carried as a volume fraction internally and reported in ppm.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::control::{ChainStage, ControlGraph, MvChain, PiController, Saturation, SelectorKind};
use crate::error::{Error, Result};
use crate::sim::Plant;
use crate::tuning::{tuning_table, TuningRow};

const PPM: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BarnParams {
    /// Air volume, m³.
    pub volume: f64,
    pub n_cows: f64,
    /// CO2 generation per cow, m³/s.
    pub g_co2: f64,
    /// Metabolic heat per cow, W.
    pub q_cow: f64,
    /// Fan airflow at 100 % and 0 %, m³/s.
    pub q_max: f64,
    pub q_min: f64,
    /// Heater rating at 100 %, W.
    pub q_heat_max: f64,
    /// Heat-loss coefficient, W/K.
    pub ua: f64,
    /// Outdoor CO2, ppm.
    pub c_out_ppm: f64,
    /// Air density, kg/m³.
    pub rho: f64,
    /// Air heat capacity, J/(kg·K).
    pub cp: f64,
}

impl Default for BarnParams {
    fn default() -> Self {
        Self {
            volume: 3000.0,
            n_cows: 80.0,
            g_co2: 5e-5,
            q_cow: 1000.0,
            q_max: 15.0,
            q_min: 0.1,
            q_heat_max: 50_000.0,
            ua: 2000.0,
            c_out_ppm: 420.0,
            rho: 1.2,
            cp: 1005.0,
        }
    }
}

impl BarnParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("volume", self.volume),
            ("g_co2", self.g_co2),
            ("q_cow", self.q_cow),
            ("q_max", self.q_max),
            ("q_min", self.q_min),
            ("q_heat_max", self.q_heat_max),
            ("ua", self.ua),
            ("c_out_ppm", self.c_out_ppm),
            ("rho", self.rho),
            ("cp", self.cp),
        ];
        for (name, v) in fields {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "barn parameter `{name}` must be positive, got {v}"
                )));
            }
        }
        // occupancy is a disturbance and may be zero
        if !(self.n_cows >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "barn parameter `n_cows` must be non-negative, got {}",
                self.n_cows
            )));
        }
        if !(self.q_min < self.q_max) {
            return Err(Error::InvalidParameter("barn needs q_min < q_max".into()));
        }
        Ok(())
    }

    fn rho_cp(&self) -> f64 {
        self.rho * self.cp
    }

    fn c_out(&self) -> f64 {
        self.c_out_ppm / PPM
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarnState {
    /// CO2 volume fraction.
    pub c: f64,
    /// Indoor temperature, °C.
    pub t: f64,
}

impl BarnState {
    pub fn from_ppm(c_ppm: f64, t: f64) -> Self {
        Self { c: c_ppm / PPM, t }
    }

    pub fn c_ppm(&self) -> f64 {
        self.c * PPM
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarnInputs {
    /// Fan speed, %.
    pub u1: f64,
    /// Heater, %.
    pub u2: f64,
    /// Outdoor temperature, °C.
    pub t_out: f64,
    pub n_cows_override: Option<f64>,
}

impl BarnInputs {
    pub fn new(u1: f64, u2: f64, t_out: f64) -> Self {
        Self {
            u1,
            u2,
            t_out,
            n_cows_override: None,
        }
    }
}

fn check_percent(name: &'static str, v: f64) -> Result<()> {
    if (0.0..=100.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            name,
            value: v,
            min: 0.0,
            max: 100.0,
        })
    }
}

/// Airflow through the barn for fan speed `u1` (%), m³/s.
pub fn fan_flow(u1: f64, params: &BarnParams) -> Result<f64> {
    check_percent("u1", u1)?;
    Ok(params.q_min + (params.q_max - params.q_min) * u1 / 100.0)
}

/// Inverse of [`fan_flow`] without range checks.
pub fn fan_speed_for_flow(q: f64, params: &BarnParams) -> f64 {
    (q - params.q_min) / (params.q_max - params.q_min) * 100.0
}

/// `(dc/dt, dT/dt)` in 1/s and K/s.
pub fn barn_derivatives(state: &BarnState, inputs: &BarnInputs, params: &BarnParams) -> Result<(f64, f64)> {
    check_percent("u2", inputs.u2)?;
    let q = fan_flow(inputs.u1, params)?;
    let n = inputs.n_cows_override.unwrap_or(params.n_cows);
    let dc = (n * params.g_co2 + q * (params.c_out() - state.c)) / params.volume;
    let rc = params.rho_cp();
    let heat = n * params.q_cow + params.q_heat_max * inputs.u2 / 100.0;
    let dt = (heat - (rc * q + params.ua) * (state.t - inputs.t_out)) / (rc * params.volume);
    Ok((dc, dt))
}

/// Closed-form steady state `(c ppm, T °C)` for fixed inputs.
pub fn barn_steady_state(u1: f64, u2: f64, t_out: f64, params: &BarnParams) -> Result<(f64, f64)> {
    check_percent("u2", u2)?;
    let q = fan_flow(u1, params)?;
    Ok(steady_from_flow(q, u2, t_out, params.n_cows, params))
}

fn steady_from_flow(q: f64, u2: f64, t_out: f64, n_cows: f64, p: &BarnParams) -> (f64, f64) {
    let c = p.c_out_ppm + PPM * n_cows * p.g_co2 / q;
    let t = t_out + (n_cows * p.q_cow + p.q_heat_max * u2 / 100.0) / (p.rho_cp() * q + p.ua);
    (c, t)
}

/// Controllers and selector chains acting on the barn. Measurement channels
/// are `c` (ppm) and `T` (°C); MVs are `u1` (fan) and `u2` (heater).
#[derive(Debug, Clone, PartialEq)]
pub struct BarnStructure {
    pub name: String,
    pub controllers: Vec<(PiController, String, String)>,
    pub chains: Vec<MvChain>,
}

fn row_controller(rows: &[TuningRow], name: &str) -> PiController {
    let row = rows
        .iter()
        .find(|r| r.name == name)
        .expect("tuning table has every barn controller");
    PiController::new(row.name, row.kc, row.tau_i, row.setpoint).expect("tabulated tunings are valid")
}

impl BarnStructure {
    fn assemble(name: &str, fan: &[(SelectorKind, &str)], heater: bool) -> Self {
        let rows = tuning_table(3.0);
        let mut controllers = Vec::new();
        let mut stages = Vec::new();
        for &(kind, ctrl) in fan {
            let row = rows.iter().find(|r| r.name == ctrl).expect("known controller");
            controllers.push((row_controller(&rows, ctrl), row.channel.to_string(), "u1".to_string()));
            stages.push(ChainStage::new(kind, &[ctrl]));
        }
        let mut chains = vec![MvChain {
            mv: "u1".into(),
            desired: Some(50.0),
            desired_name: Some("u0".into()),
            stages,
        }];
        if heater {
            controllers.push((row_controller(&rows, "TC"), "T".into(), "u2".into()));
        } else {
            chains.push(MvChain {
                mv: "u2".into(),
                desired: Some(0.0),
                desired_name: Some("u2.off".into()),
                stages: Vec::new(),
            });
        }
        Self {
            name: name.to_string(),
            controllers,
            chains,
        }
    }

    /// Temperature band with the fan only: MAX(u0, TC1) then MIN(TC3).
    pub fn cow2a() -> Self {
        use SelectorKind::*;
        Self::assemble("cow2a", &[(Max, "TC1"), (Min, "TC3")], false)
    }

    /// Adds the CO2 controller in a final MAX-selector.
    pub fn cow2() -> Self {
        use SelectorKind::*;
        Self::assemble("cow2", &[(Max, "TC1"), (Min, "TC3"), (Max, "CC2")], false)
    }

    /// COW2 plus the split-parallel heater loop at 4 °C.
    pub fn cow3a() -> Self {
        use SelectorKind::*;
        Self::assemble("cow3a", &[(Max, "TC1"), (Min, "TC3"), (Max, "CC2")], true)
    }

    /// Final structure with the 0 °C and 3000 ppm overrides.
    pub fn cow3() -> Self {
        use SelectorKind::*;
        Self::assemble(
            "cow3",
            &[(Max, "TC1"), (Min, "TC3"), (Max, "CC2"), (Min, "TC2"), (Max, "CC1")],
            true,
        )
    }

    pub fn graph(&self) -> Result<ControlGraph> {
        ControlGraph::from_chains(self.controllers.clone(), &self.chains)
    }

    fn candidates(&self, with_fan_limits: bool) -> Vec<ActiveConstraint> {
        let mut out = Vec::new();
        for mv in ["u1", "u2"] {
            match self.chains.iter().find(|c| c.mv == mv) {
                Some(chain) => {
                    if let Some(v) = chain.desired {
                        out.push(ActiveConstraint::Desired {
                            mv: mv.to_string(),
                            value: v,
                            label: chain.desired_label(),
                        });
                    }
                    if with_fan_limits && !chain.stages.is_empty() {
                        out.push(ActiveConstraint::limit(mv, false));
                        out.push(ActiveConstraint::limit(mv, true));
                    }
                }
                None => {
                    out.push(ActiveConstraint::limit(mv, false));
                    out.push(ActiveConstraint::limit(mv, true));
                }
            }
        }
        for (ctrl, channel, mv) in &self.controllers {
            out.push(ActiveConstraint::Setpoint {
                controller: ctrl.name().to_string(),
                channel: channel.clone(),
                mv: mv.clone(),
                value: ctrl.setpoint(),
            });
        }
        out
    }
}

/// One element of an active pair.
#[derive(Debug, Clone, PartialEq)]
pub enum ActiveConstraint {
    /// MV held at its desired input, the constant named `label`.
    Desired { mv: String, value: f64, label: String },
    /// MV held at a limit (0 or 100 %).
    Limit { mv: String, high: bool },
    /// Controller holding its CV at setpoint.
    Setpoint {
        controller: String,
        channel: String,
        mv: String,
        value: f64,
    },
}

impl ActiveConstraint {
    fn limit(mv: &str, high: bool) -> Self {
        ActiveConstraint::Limit {
            mv: mv.to_string(),
            high,
        }
    }

    pub fn mv(&self) -> &str {
        match self {
            ActiveConstraint::Desired { mv, .. }
            | ActiveConstraint::Limit { mv, .. }
            | ActiveConstraint::Setpoint { mv, .. } => mv,
        }
    }

    /// Source name expected to win the selector network when this
    /// constraint is active. `None` for limits, which any saturated source
    /// can hold.
    pub fn controller(&self) -> Option<&str> {
        match self {
            ActiveConstraint::Setpoint { controller, .. } => Some(controller),
            _ => None,
        }
    }
}

fn fmt_num(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v}")
    }
}

impl fmt::Display for ActiveConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActiveConstraint::Desired { mv, value, .. } => write!(f, "{mv}={}", fmt_num(*value)),
            ActiveConstraint::Limit { mv, high } => {
                write!(f, "{mv}={}", if *high { "100" } else { "0" })
            }
            ActiveConstraint::Setpoint { channel, value, .. } => {
                write!(f, "{channel}={}", fmt_num(*value))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyStateSolution {
    pub t_out: f64,
    pub c_ppm: f64,
    pub t: f64,
    pub u1: f64,
    pub u2: f64,
    pub active: [ActiveConstraint; 2],
    /// Controllers pushed past their setpoint by a saturated fan.
    pub bound_violations: Vec<String>,
}

impl SteadyStateSolution {
    pub fn active_pair_label(&self) -> String {
        format!("{{{}, {}}}", self.active[0], self.active[1])
    }
}

enum Pin {
    Flow(f64),
    Heater(f64),
    Temp(f64),
}

fn pin_of(c: &ActiveConstraint, p: &BarnParams, n_cows: f64) -> Option<Pin> {
    let pct = |mv: &str, v: f64| -> Option<Pin> {
        match mv {
            "u1" => Some(Pin::Flow(p.q_min + (p.q_max - p.q_min) * v / 100.0)),
            "u2" => Some(Pin::Heater(v)),
            _ => None,
        }
    };
    match c {
        ActiveConstraint::Desired { mv, value, .. } => pct(mv, *value),
        ActiveConstraint::Limit { mv, high } => pct(mv, if *high { 100.0 } else { 0.0 }),
        ActiveConstraint::Setpoint { channel, value, .. } => match channel.as_str() {
            "c" => {
                let excess = (*value - p.c_out_ppm) / PPM;
                (excess > 0.0).then(|| Pin::Flow(n_cows * p.g_co2 / excess))
            }
            "T" => Some(Pin::Temp(*value)),
            _ => None,
        },
    }
}

/// Solves the two balances with both constraints of a pair active.
/// Returns `(q, u2)` or `None` when the pair does not determine a point.
fn solve_pair(a: &Pin, b: &Pin, t_out: f64, n_cows: f64, p: &BarnParams) -> Option<(f64, f64)> {
    let rc = p.rho_cp();
    let heat = |u2: f64| n_cows * p.q_cow + p.q_heat_max * u2 / 100.0;
    let (q, u2) = match (a, b) {
        (Pin::Flow(q), Pin::Heater(u2)) | (Pin::Heater(u2), Pin::Flow(q)) => (*q, *u2),
        (Pin::Flow(q), Pin::Temp(t)) | (Pin::Temp(t), Pin::Flow(q)) => {
            let u2 = ((t - t_out) * (rc * q + p.ua) - n_cows * p.q_cow) * 100.0 / p.q_heat_max;
            (*q, u2)
        }
        (Pin::Heater(u2), Pin::Temp(t)) | (Pin::Temp(t), Pin::Heater(u2)) => {
            let dt = t - t_out;
            if dt.abs() < 1e-12 {
                return None;
            }
            ((heat(*u2) / dt - p.ua) / rc, *u2)
        }
        _ => return None,
    };
    if !(q > 0.0) || !q.is_finite() || !u2.is_finite() {
        return None;
    }
    Some((q, u2))
}

fn winner_matches(c: &ActiveConstraint, winner: &crate::control::Winner) -> bool {
    match c {
        ActiveConstraint::Desired { label, .. } => winner.source == *label,
        ActiveConstraint::Limit { high, .. } => {
            winner.saturation == Some(if *high { Saturation::High } else { Saturation::Low })
        }
        ActiveConstraint::Setpoint { controller, .. } => {
            winner.source == *controller && winner.saturation.is_none()
        }
    }
}

fn search(
    t_out: f64,
    params: &BarnParams,
    structure: &BarnStructure,
    with_fan_limits: bool,
) -> Result<Option<SteadyStateSolution>> {
    params.validate()?;
    let n_cows = params.n_cows;
    let cands = structure.candidates(with_fan_limits);
    let template = structure.graph()?;
    const EPS: f64 = 1e-9;

    for i in 0..cands.len() {
        for j in (i + 1)..cands.len() {
            let (a, b) = (&cands[i], &cands[j]);
            if a.mv() == b.mv() {
                continue;
            }
            let (Some(pa), Some(pb)) = (pin_of(a, params, n_cows), pin_of(b, params, n_cows)) else {
                continue;
            };
            let Some((q, u2)) = solve_pair(&pa, &pb, t_out, n_cows, params) else {
                continue;
            };
            let u1 = fan_speed_for_flow(q, params);
            if !(-EPS..=100.0 + EPS).contains(&u1) || !(-EPS..=100.0 + EPS).contains(&u2) {
                continue;
            }
            let (u1, u2) = (u1.clamp(0.0, 100.0), u2.clamp(0.0, 100.0));
            let (c_ppm, t) = steady_from_flow(q, u2, t_out, n_cows, params);

            let mut graph = template.clone();
            let measure = |ch: &str| match ch {
                "c" => Some(c_ppm),
                "T" => Some(t),
                _ => None,
            };
            let idx = |g: &ControlGraph, mv: &str| g.mv_index(mv);
            let (Some(i1), Some(i2)) = (idx(&graph, "u1"), idx(&graph, "u2")) else {
                return Err(Error::Graph("barn structure must drive u1 and u2".into()));
            };
            let mut mv = vec![0.0; 2];
            mv[i1] = u1;
            mv[i2] = u2;
            graph.initialize_steady(&mv, measure)?;
            let scan = graph.propose(measure)?;
            if (scan.mv_values[i1] - u1).abs() > 1e-6 || (scan.mv_values[i2] - u2).abs() > 1e-6 {
                continue;
            }
            let (fan_c, heat_c) = if a.mv() == "u1" { (a, b) } else { (b, a) };
            if !winner_matches(fan_c, &scan.winners[i1]) || !winner_matches(heat_c, &scan.winners[i2]) {
                continue;
            }
            let mut bound_violations = Vec::new();
            for c in [fan_c, heat_c] {
                if let ActiveConstraint::Limit { mv, high } = c {
                    let w = &scan.winners[if mv == "u1" { i1 } else { i2 }];
                    let from_chain = structure
                        .chains
                        .iter()
                        .any(|ch| ch.mv == *mv && !ch.stages.is_empty());
                    if from_chain {
                        if let Some(ctrl) = graph.controller(&w.source) {
                            let ch = graph.measurement_of(&w.source).unwrap_or("?");
                            let y = if ch == "c" { c_ppm } else { t };
                            bound_violations.push(format!(
                                "{}: {ch} = {y:.2} beyond setpoint {} with {mv} at {}%",
                                ctrl.name(),
                                fmt_num(ctrl.setpoint()),
                                if *high { 100 } else { 0 }
                            ));
                        }
                    }
                }
            }

            return Ok(Some(SteadyStateSolution {
                t_out,
                c_ppm,
                t,
                u1,
                u2,
                active: [fan_c.clone(), heat_c.clone()],
                bound_violations,
            }));
        }
    }
    Ok(None)
}

/// Enumerates candidate active pairs (desired inputs, MV limits of directly
/// driven MVs and every controller setpoint), solves each pair in closed
/// form, and returns the first whose steady state is reproduced by the
/// selector network with every other controller deselected.
pub fn solve_active_set(t_out: f64, params: &BarnParams, structure: &BarnStructure) -> Result<SteadyStateSolution> {
    search(t_out, params, structure, false)?.ok_or(Error::Infeasible { t_out })
}

/// Like [`solve_active_set`], but also lets the fan sit at 0 or 100 %. Used
/// to report operating points outside the modelled range, where a CV bound
/// can no longer be held.
pub fn solve_bound_limited(t_out: f64, params: &BarnParams, structure: &BarnStructure) -> Result<SteadyStateSolution> {
    if let Some(sol) = search(t_out, params, structure, false)? {
        return Ok(sol);
    }
    search(t_out, params, structure, true)?.ok_or(Error::Infeasible { t_out })
}

/// The barn as a simulation plant. States `[c fraction, T]`, MVs
/// `[u1, u2]`, disturbances `[t_out, n_cows]`, outputs `[c ppm, T]`.
#[derive(Debug, Clone)]
pub struct BarnPlant {
    pub params: BarnParams,
    pub structure: BarnStructure,
}

impl BarnPlant {
    pub fn new(params: BarnParams) -> Self {
        Self {
            params,
            structure: BarnStructure::cow3(),
        }
    }
}

impl Plant for BarnPlant {
    fn name(&self) -> &'static str {
        "barn"
    }

    fn state_names(&self) -> &'static [&'static str] {
        &["c_frac", "T_state"]
    }

    fn input_names(&self) -> &'static [&'static str] {
        &["u1", "u2"]
    }

    fn disturbance_names(&self) -> &'static [&'static str] {
        &["t_out", "n_cows"]
    }

    fn default_disturbances(&self) -> Vec<f64> {
        vec![0.0, self.params.n_cows]
    }

    fn output_names(&self) -> &'static [&'static str] {
        &["c", "T"]
    }

    fn derivatives(&self, x: &[f64], u: &[f64], d: &[f64], dx: &mut [f64]) -> Result<()> {
        let state = BarnState { c: x[0], t: x[1] };
        let inputs = BarnInputs {
            u1: u[0],
            u2: u[1],
            t_out: d[0],
            n_cows_override: Some(d[1]),
        };
        let (dc, dt) = barn_derivatives(&state, &inputs, &self.params)?;
        dx[0] = dc;
        dx[1] = dt;
        Ok(())
    }

    fn outputs(&self, x: &[f64], _u: &[f64], _d: &[f64], y: &mut [f64]) {
        y[0] = x[0] * PPM;
        y[1] = x[1];
    }

    fn state_from_outputs(&self, y: &[f64]) -> Vec<f64> {
        vec![y[0] / PPM, y[1]]
    }

    fn commissioned(&self, d: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut params = self.params;
        params.n_cows = d[1];
        let sol = solve_active_set(d[0], &params, &self.structure)?;
        Ok((vec![sol.c_ppm / PPM, sol.t], vec![sol.u1, sol.u2]))
    }
}
