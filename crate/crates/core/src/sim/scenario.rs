//! Scenario files: plant, controllers, selector chains, disturbances and
//! measurement delays in one TOML document.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::barn::{BarnParams, BarnPlant, BarnStructure};
use crate::control::{ControlGraph, MvChain, PiController};
use crate::error::{Error, Result};
use crate::separator::{build_scheme, SeparatorParams, SeparatorPlant, SeparatorScheme};
use crate::sim::{
    staircase_profile, DisturbanceInput, Initial, Integrator, Plant, Profile, RunResult, SimOptions,
    Simulation, Target, COW_STAIRCASE, DEFAULT_SEGMENT,
};

fn one() -> f64 {
    1.0
}

fn ten() -> f64 {
    10.0
}

fn thousand() -> f64 {
    1000.0
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlantModel {
    Barn,
    Separator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialMode {
    #[default]
    SteadyState,
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    #[serde(default)]
    pub mode: InitialMode,
    #[serde(default)]
    pub outputs: BTreeMap<String, f64>,
    #[serde(default)]
    pub mvs: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantConfig {
    pub model: PlantModel,
    /// Built-in control structure: `cow2a`, `cow2`, `cow3a`, `cow3` for the
    /// barn, `fig1`, `fig2`, `fig3` for the separator.
    #[serde(default)]
    pub structure: Option<String>,
    #[serde(default)]
    pub params: toml::Table,
    #[serde(default)]
    pub initial: InitialConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    pub name: String,
    pub measurement: String,
    pub mv: String,
    pub kc: f64,
    pub tau_i: f64,
    pub setpoint: f64,
    #[serde(default)]
    pub tau_t: Option<f64>,
    #[serde(default)]
    pub u_min: Option<f64>,
    #[serde(default)]
    pub u_max: Option<f64>,
    #[serde(default = "yes")]
    pub tracking: bool,
}

impl ControllerConfig {
    fn build(&self) -> Result<PiController> {
        let mut c = PiController::new(self.name.clone(), self.kc, self.tau_i, self.setpoint)?;
        if let Some(tt) = self.tau_t {
            c = c.with_tracking_time(tt)?;
        }
        if self.u_min.is_some() || self.u_max.is_some() {
            c = c.with_limits(self.u_min.unwrap_or(0.0), self.u_max.unwrap_or(100.0))?;
        }
        if !self.tracking {
            c = c.without_tracking();
        }
        Ok(c)
    }
}

/// A piecewise-constant signal, given as one of: `value`;
/// `breakpoints` + `values`; `levels` + `segment`; `preset = "cow_staircase"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceConfig {
    pub variable: String,
    #[serde(default)]
    pub value: Option<f64>,
    #[serde(default)]
    pub breakpoints: Option<Vec<f64>>,
    #[serde(default)]
    pub values: Option<Vec<f64>>,
    #[serde(default)]
    pub levels: Option<Vec<f64>>,
    #[serde(default)]
    pub segment: Option<f64>,
    #[serde(default)]
    pub preset: Option<String>,
}

impl DisturbanceConfig {
    fn profile(&self) -> Result<Profile> {
        let bad = |m: &str| Error::InvalidParameter(format!("disturbance `{}`: {m}", self.variable));
        match (&self.value, &self.breakpoints, &self.values, &self.levels, &self.preset) {
            (Some(v), None, None, None, None) => Ok(Profile::constant(*v)),
            (None, Some(b), Some(v), None, None) => Profile::new(b.clone(), v.clone()),
            (None, None, None, Some(l), None) => {
                staircase_profile(l, self.segment.unwrap_or(DEFAULT_SEGMENT))
            }
            (None, None, None, None, Some(p)) if p == "cow_staircase" => {
                staircase_profile(&COW_STAIRCASE, self.segment.unwrap_or(DEFAULT_SEGMENT))
            }
            (None, None, None, None, Some(p)) => Err(bad(&format!("unknown preset `{p}`"))),
            _ => Err(bad(
                "give exactly one of `value`, `breakpoints`+`values`, `levels` or `preset`",
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default = "one")]
    pub dt: f64,
    pub t_end: f64,
    #[serde(default)]
    pub integrator: Integrator,
    #[serde(default = "ten")]
    pub log_interval: f64,
    #[serde(default = "thousand")]
    pub stats_window: f64,
    /// CSV channels; defaults to outputs, MVs and disturbances.
    #[serde(default)]
    pub outputs: Option<Vec<String>>,
    pub plant: PlantConfig,
    #[serde(default, rename = "controller")]
    pub controllers: Vec<ControllerConfig>,
    #[serde(default, rename = "mv")]
    pub chains: Vec<MvChain>,
    #[serde(default, rename = "disturbance")]
    pub disturbances: Vec<DisturbanceConfig>,
    /// Transport delay per measured output, seconds.
    #[serde(default)]
    pub delays: BTreeMap<String, f64>,
}

/// A parsed scenario together with the file it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub path: String,
    pub config: ScenarioConfig,
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rfind('\n').map_or(before.len(), |p| before.len() - p - 1) + 1;
    (line, col)
}

impl Scenario {
    pub fn parse(text: &str, path: impl Into<String>) -> Result<Self> {
        let path = path.into();
        let config: ScenarioConfig = toml::from_str(text).map_err(|e| {
            let at = e
                .span()
                .map(|s| {
                    let (l, c) = line_col(text, s.start);
                    format!("line {l}, column {c}: ")
                })
                .unwrap_or_default();
            Error::Scenario {
                path: path.clone(),
                message: format!("{at}{}", e.message()),
            }
        })?;
        let s = Self { path, config };
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let p = path.as_ref();
        let text = std::fs::read_to_string(p).map_err(|e| Error::Scenario {
            path: p.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text, p.display().to_string())
    }

    /// Replaces `dt` and/or `t_end` and re-validates.
    pub fn with_overrides(mut self, dt: Option<f64>, t_end: Option<f64>) -> Result<Self> {
        if let Some(dt) = dt {
            self.config.dt = dt;
        }
        if let Some(t_end) = t_end {
            self.config.t_end = t_end;
        }
        self.validate()?;
        Ok(self)
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::Scenario {
            path: self.path.clone(),
            message: message.into(),
        }
    }

    fn wrap(&self, field: &str, e: Error) -> Error {
        self.err(format!("{field}: {e}"))
    }

    fn validate(&self) -> Result<()> {
        let c = &self.config;
        if !(c.dt > 0.0) || !c.dt.is_finite() {
            return Err(self.err(format!("dt: must be positive, got {}", c.dt)));
        }
        crate::sim::steps_in(c.t_end, c.dt, "t_end").map_err(|e| self.wrap("t_end", e))?;
        crate::sim::steps_in(c.log_interval, c.dt, "log_interval")
            .map_err(|e| self.wrap("log_interval", e))?;
        if !(c.stats_window > 0.0) {
            return Err(self.err("stats_window: must be positive"));
        }
        for (ch, d) in &c.delays {
            crate::sim::steps_in(*d, c.dt, &format!("delay on `{ch}`"))
                .map_err(|e| self.wrap("delays", e))?;
        }
        for d in &c.disturbances {
            d.profile().map_err(|e| self.wrap("disturbance", e))?;
        }
        if c.plant.structure.is_some() && (!c.controllers.is_empty() || !c.chains.is_empty()) {
            return Err(self.err(
                "plant.structure: a built-in structure excludes [[controller]] and [[mv]] entries",
            ));
        }
        Ok(())
    }

    fn barn_params(&self) -> Result<BarnParams> {
        let p: BarnParams = toml::Value::Table(self.config.plant.params.clone())
            .try_into()
            .map_err(|e: toml::de::Error| self.err(format!("plant.params: {}", e.message())))?;
        p.validate().map_err(|e| self.wrap("plant.params", e))?;
        Ok(p)
    }

    fn separator_params(&self) -> Result<SeparatorParams> {
        let p: SeparatorParams = toml::Value::Table(self.config.plant.params.clone())
            .try_into()
            .map_err(|e: toml::de::Error| self.err(format!("plant.params: {}", e.message())))?;
        p.validate().map_err(|e| self.wrap("plant.params", e))?;
        Ok(p)
    }

    fn explicit_controllers(&self) -> Result<Vec<(PiController, String, String)>> {
        self.config
            .controllers
            .iter()
            .map(|c| {
                let ctrl = c
                    .build()
                    .map_err(|e| self.wrap(&format!("controller `{}`", c.name), e))?;
                Ok((ctrl, c.measurement.clone(), c.mv.clone()))
            })
            .collect()
    }

    /// Plant and control graph, before initialization.
    pub fn plant_and_graph(&self) -> Result<(Box<dyn Plant>, ControlGraph)> {
        let cfg = &self.config.plant;
        match cfg.model {
            PlantModel::Barn => {
                let params = self.barn_params()?;
                let structure = match cfg.structure.as_deref() {
                    Some("cow2a") => BarnStructure::cow2a(),
                    Some("cow2") => BarnStructure::cow2(),
                    Some("cow3a") => BarnStructure::cow3a(),
                    Some("cow3") => BarnStructure::cow3(),
                    Some(other) => {
                        return Err(self.err(format!("plant.structure: unknown barn structure `{other}`")))
                    }
                    None => BarnStructure {
                        name: self.config.name.clone(),
                        controllers: self.explicit_controllers()?,
                        chains: self.config.chains.clone(),
                    },
                };
                let graph = structure.graph().map_err(|e| self.wrap("controllers", e))?;
                Ok((Box::new(BarnPlant { params, structure }), graph))
            }
            PlantModel::Separator => {
                let params = self.separator_params()?;
                let plant = SeparatorPlant::new(params).map_err(|e| self.wrap("plant.params", e))?;
                let graph = match cfg.structure.as_deref() {
                    Some(s) => {
                        let scheme: SeparatorScheme =
                            s.parse().map_err(|e| self.wrap("plant.structure", e))?;
                        build_scheme(scheme, &params)
                            .map_err(|e| self.wrap("plant.structure", e))?
                            .1
                    }
                    None => ControlGraph::from_chains(self.explicit_controllers()?, &self.config.chains)
                        .map_err(|e| self.wrap("controllers", e))?,
                };
                Ok((Box::new(plant), graph))
            }
        }
    }

    pub fn build(&self) -> Result<Simulation> {
        let (plant, graph) = self.plant_and_graph()?;
        let mut inputs = Vec::new();
        for d in &self.config.disturbances {
            let target = match plant.disturbance_names().iter().position(|n| *n == d.variable) {
                Some(i) => Target::Plant(i),
                None if graph.constant(&d.variable).is_some() => Target::Constant(d.variable.clone()),
                None => {
                    return Err(self.err(format!(
                        "disturbance: `{}` is neither a plant disturbance ({}) nor a graph constant",
                        d.variable,
                        plant.disturbance_names().join(", ")
                    )))
                }
            };
            inputs.push(DisturbanceInput {
                name: d.variable.clone(),
                target,
                profile: d.profile()?,
            });
        }
        let init = &self.config.plant.initial;
        let initial = match init.mode {
            InitialMode::SteadyState => Initial::SteadyState,
            InitialMode::Explicit => {
                let pick = |names: &[&str], map: &BTreeMap<String, f64>, what: &str| {
                    names
                        .iter()
                        .map(|n| {
                            map.get(*n)
                                .copied()
                                .ok_or_else(|| self.err(format!("plant.initial.{what}: missing `{n}`")))
                        })
                        .collect::<Result<Vec<f64>>>()
                };
                Initial::Explicit {
                    outputs: pick(plant.output_names(), &init.outputs, "outputs")?,
                    mvs: pick(plant.input_names(), &init.mvs, "mvs")?,
                }
            }
        };
        let options = SimOptions {
            dt: self.config.dt,
            integrator: self.config.integrator,
            delays: self.config.delays.iter().map(|(k, v)| (k.clone(), *v)).collect(),
            initial,
        };
        Simulation::new(plant, graph, inputs, options).map_err(|e| self.wrap("build", e))
    }

    pub fn run(&self) -> Result<RunResult> {
        let mut r = self.build()?.run(self.config.t_end)?;
        r.segments = r.segment_stats(self.config.stats_window);
        Ok(r)
    }

    /// Channels written to the trajectory CSV.
    pub fn csv_channels(&self, result: &RunResult) -> Vec<String> {
        self.config
            .outputs
            .clone()
            .unwrap_or_else(|| result.default_channels.clone())
    }
}
