//! Wiring of PI controllers, desired-input constants and selectors onto
//! manipulated variables, evaluated once per scan.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::pi::{PiController, Saturation};
use super::selector::{SelectorKind, SelectorNode, Source};
use crate::error::{Error, Result};

/// One selector in a chain. The previous stage's output (or the desired
/// input, for the first stage) is prepended to `inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainStage {
    pub kind: SelectorKind,
    pub inputs: Vec<String>,
}

impl ChainStage {
    pub fn new(kind: SelectorKind, inputs: &[&str]) -> Self {
        Self {
            kind,
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// Sequential selector chain ending on one MV, the usual way override
/// structures are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MvChain {
    pub mv: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub desired: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub desired_name: Option<String>,
    pub stages: Vec<ChainStage>,
}

impl MvChain {
    pub fn desired_label(&self) -> String {
        self.desired_name
            .clone()
            .unwrap_or_else(|| format!("{}.u0", self.mv))
    }

    /// Names of every loop feeding this chain, in chain order.
    pub fn loop_inputs(&self) -> impl Iterator<Item = &str> {
        self.stages
            .iter()
            .flat_map(|s| s.inputs.iter().map(String::as_str))
    }
}

/// The source that ultimately won the selector network for one MV.
#[derive(Debug, Clone, PartialEq)]
pub struct Winner {
    pub source: String,
    pub saturation: Option<Saturation>,
}

impl fmt::Display for Winner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.saturation {
            None => f.write_str(&self.source),
            Some(Saturation::High) => write!(f, "{}@max", self.source),
            Some(Saturation::Low) => write!(f, "{}@min", self.source),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scan {
    pub mv_values: Vec<f64>,
    pub winners: Vec<Winner>,
}

#[derive(Debug, Clone, PartialEq)]
struct BoundController {
    ctrl: PiController,
    measurement: String,
    mv: usize,
    last_y: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct MvBinding {
    name: String,
    driver: Source,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlGraph {
    controllers: Vec<BoundController>,
    constants: Vec<(String, f64)>,
    selectors: Vec<SelectorNode>,
    mvs: Vec<MvBinding>,
}

#[derive(Debug, Default, Clone)]
pub struct GraphBuilder {
    controllers: Vec<(PiController, String)>,
    constants: Vec<(String, f64)>,
    selectors: Vec<(String, SelectorKind, Vec<String>)>,
    mvs: Vec<(String, String)>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn controller(&mut self, ctrl: PiController, measurement: impl Into<String>) -> &mut Self {
        self.controllers.push((ctrl, measurement.into()));
        self
    }

    pub fn constant(&mut self, name: impl Into<String>, value: f64) -> &mut Self {
        self.constants.push((name.into(), value));
        self
    }

    pub fn selector(&mut self, label: impl Into<String>, kind: SelectorKind, inputs: &[&str]) -> &mut Self {
        self.selectors.push((
            label.into(),
            kind,
            inputs.iter().map(|s| s.to_string()).collect(),
        ));
        self
    }

    /// Binds an MV to the named controller, constant or selector.
    pub fn mv(&mut self, name: impl Into<String>, driver: impl Into<String>) -> &mut Self {
        self.mvs.push((name.into(), driver.into()));
        self
    }

    /// Expands a chain into selectors `<mv>.s0`, `<mv>.s1`, ... and binds
    /// the MV to the last one. A chain without stages must name its single
    /// driver as the desired label (a constant) and is rejected otherwise.
    pub fn chain(&mut self, chain: &MvChain) -> Result<&mut Self> {
        let mut prev: Option<String> = None;
        if let Some(u0) = chain.desired {
            let label = chain.desired_label();
            self.constant(label.clone(), u0);
            prev = Some(label);
        }
        if chain.stages.is_empty() {
            let Some(driver) = prev else {
                return Err(Error::Graph(format!(
                    "chain for `{}` has no stages and no desired input",
                    chain.mv
                )));
            };
            self.mv(chain.mv.clone(), driver);
            return Ok(self);
        }
        for (i, stage) in chain.stages.iter().enumerate() {
            let label = format!("{}.s{}", chain.mv, i);
            let mut inputs: Vec<String> = prev.take().into_iter().collect();
            inputs.extend(stage.inputs.iter().cloned());
            self.selectors.push((label.clone(), stage.kind, inputs));
            prev = Some(label);
        }
        self.mv(chain.mv.clone(), prev.expect("at least one stage"));
        Ok(self)
    }

    pub fn build(self) -> Result<ControlGraph> {
        let mut names: HashMap<String, Source> = HashMap::new();
        let mut insert = |name: &str, src: Source| -> Result<()> {
            if names.insert(name.to_string(), src).is_some() {
                return Err(Error::Graph(format!("duplicate name `{name}`")));
            }
            Ok(())
        };
        for (i, (c, _)) in self.controllers.iter().enumerate() {
            insert(c.name(), Source::Controller(i))?;
        }
        for (i, (n, v)) in self.constants.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::Graph(format!("constant `{n}` is not finite")));
            }
            insert(n, Source::Constant(i))?;
        }
        for (i, (label, _, _)) in self.selectors.iter().enumerate() {
            insert(label, Source::Selector(i))?;
        }

        let resolve = |name: &str, owner: &str| -> Result<Source> {
            names
                .get(name)
                .copied()
                .ok_or_else(|| Error::Graph(format!("`{owner}` references unknown source `{name}`")))
        };

        // consumers: who reads each controller / selector output
        #[derive(Clone, Copy, PartialEq)]
        enum Consumer {
            Selector(usize),
            Mv(usize),
        }
        let mut ctrl_consumers: Vec<Vec<Consumer>> = vec![Vec::new(); self.controllers.len()];
        let mut sel_consumers: Vec<Vec<Consumer>> = vec![Vec::new(); self.selectors.len()];

        let mut raw_selectors = Vec::with_capacity(self.selectors.len());
        for (i, (label, kind, inputs)) in self.selectors.iter().enumerate() {
            let mut srcs = Vec::with_capacity(inputs.len());
            for name in inputs {
                let src = resolve(name, label)?;
                match src {
                    Source::Controller(c) => ctrl_consumers[c].push(Consumer::Selector(i)),
                    Source::Selector(s) => sel_consumers[s].push(Consumer::Selector(i)),
                    Source::Constant(_) => {}
                }
                srcs.push(src);
            }
            raw_selectors.push(SelectorNode::new(label.clone(), *kind, srcs)?);
        }

        let mut mvs = Vec::with_capacity(self.mvs.len());
        let mut seen_mv = HashMap::new();
        for (i, (mv, driver)) in self.mvs.iter().enumerate() {
            if seen_mv.insert(mv.clone(), i).is_some() {
                return Err(Error::Graph(format!("MV `{mv}` has more than one driver")));
            }
            let src = resolve(driver, mv)?;
            match src {
                Source::Controller(c) => ctrl_consumers[c].push(Consumer::Mv(i)),
                Source::Selector(s) => sel_consumers[s].push(Consumer::Mv(i)),
                Source::Constant(_) => {}
            }
            mvs.push(MvBinding {
                name: mv.clone(),
                driver: src,
            });
        }

        for (i, cons) in ctrl_consumers.iter().enumerate() {
            if cons.len() != 1 {
                return Err(Error::Graph(format!(
                    "controller `{}` must feed exactly one selector or MV, feeds {}",
                    self.controllers[i].0.name(),
                    cons.len()
                )));
            }
        }
        for (i, cons) in sel_consumers.iter().enumerate() {
            if cons.len() != 1 {
                return Err(Error::Graph(format!(
                    "selector `{}` must feed exactly one selector or MV, feeds {}",
                    self.selectors[i].0,
                    cons.len()
                )));
            }
        }

        // Kahn's algorithm over selector -> selector edges
        let n = raw_selectors.len();
        let mut indegree = vec![0usize; n];
        for (i, node) in raw_selectors.iter().enumerate() {
            indegree[i] = node
                .inputs
                .iter()
                .filter(|s| matches!(s, Source::Selector(_)))
                .count();
        }
        let mut order = Vec::with_capacity(n);
        let mut ready: Vec<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        ready.reverse();
        while let Some(i) = ready.pop() {
            order.push(i);
            for cons in &sel_consumers[i] {
                if let Consumer::Selector(j) = *cons {
                    indegree[j] -= 1;
                    if indegree[j] == 0 {
                        ready.push(j);
                    }
                }
            }
        }
        if order.len() != n {
            return Err(Error::Graph("cycle among selector nodes".into()));
        }
        let mut new_index = vec![0usize; n];
        for (pos, &old) in order.iter().enumerate() {
            new_index[old] = pos;
        }
        let remap = |s: Source| match s {
            Source::Selector(i) => Source::Selector(new_index[i]),
            other => other,
        };
        let selectors: Vec<SelectorNode> = order
            .iter()
            .map(|&old| {
                let mut node = raw_selectors[old].clone();
                node.inputs = node.inputs.into_iter().map(remap).collect();
                node
            })
            .collect();
        for mv in &mut mvs {
            mv.driver = remap(mv.driver);
        }

        // follow each controller downstream to its MV
        let mut controllers = Vec::with_capacity(self.controllers.len());
        for (i, (ctrl, measurement)) in self.controllers.into_iter().enumerate() {
            let mut cons = ctrl_consumers[i][0];
            let mv = loop {
                match cons {
                    Consumer::Mv(m) => break m,
                    Consumer::Selector(s) => cons = sel_consumers[s][0],
                }
            };
            controllers.push(BoundController {
                ctrl,
                measurement,
                mv,
                last_y: f64::NAN,
            });
        }

        Ok(ControlGraph {
            controllers,
            constants: self.constants,
            selectors,
            mvs,
        })
    }
}

impl ControlGraph {
    pub fn builder() -> GraphBuilder {
        GraphBuilder::new()
    }

    /// Builds a graph from per-MV chains. `controllers` pairs each PI
    /// controller with its measurement channel and the MV it acts on;
    /// controllers whose MV has no chain drive it directly.
    pub fn from_chains(
        controllers: Vec<(PiController, String, String)>,
        chains: &[MvChain],
    ) -> Result<Self> {
        let mut b = GraphBuilder::new();
        let mut direct: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (ctrl, meas, mv) in controllers {
            let in_chain = chains.iter().any(|c| c.mv == mv);
            if !in_chain {
                direct.entry(mv.clone()).or_default().push(ctrl.name().to_string());
            } else if !chains
                .iter()
                .filter(|c| c.mv == mv)
                .any(|c| c.loop_inputs().any(|n| n == ctrl.name()))
            {
                return Err(Error::Graph(format!(
                    "controller `{}` acts on `{mv}` but is not an input of its selector chain",
                    ctrl.name()
                )));
            }
            b.controller(ctrl, meas);
        }
        for chain in chains {
            b.chain(chain)?;
        }
        for (mv, ctrls) in direct {
            if ctrls.len() != 1 {
                return Err(Error::Graph(format!(
                    "MV `{mv}` is driven by {} controllers without a selector",
                    ctrls.len()
                )));
            }
            b.mv(mv, ctrls[0].clone());
        }
        b.build()
    }

    pub fn mv_names(&self) -> impl Iterator<Item = &str> {
        self.mvs.iter().map(|m| m.name.as_str())
    }

    pub fn mv_index(&self, name: &str) -> Option<usize> {
        self.mvs.iter().position(|m| m.name == name)
    }

    pub fn controllers(&self) -> impl Iterator<Item = &PiController> {
        self.controllers.iter().map(|b| &b.ctrl)
    }

    pub fn controller(&self, name: &str) -> Option<&PiController> {
        self.controllers
            .iter()
            .find(|b| b.ctrl.name() == name)
            .map(|b| &b.ctrl)
    }

    pub fn controller_mut(&mut self, name: &str) -> Option<&mut PiController> {
        self.controllers
            .iter_mut()
            .find(|b| b.ctrl.name() == name)
            .map(|b| &mut b.ctrl)
    }

    /// Measurement channel read by the named controller.
    pub fn measurement_of(&self, controller: &str) -> Option<&str> {
        self.controllers
            .iter()
            .find(|b| b.ctrl.name() == controller)
            .map(|b| b.measurement.as_str())
    }

    /// MV ultimately driven by the named controller.
    pub fn mv_of(&self, controller: &str) -> Option<&str> {
        self.controllers
            .iter()
            .find(|b| b.ctrl.name() == controller)
            .map(|b| self.mvs[b.mv].name.as_str())
    }

    pub fn measurement_channels(&self) -> impl Iterator<Item = &str> {
        self.controllers.iter().map(|b| b.measurement.as_str())
    }

    pub fn selectors(&self) -> &[SelectorNode] {
        &self.selectors
    }

    pub fn constant(&self, name: &str) -> Option<f64> {
        self.constants.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    pub fn constant_names(&self) -> impl Iterator<Item = &str> {
        self.constants.iter().map(|(n, _)| n.as_str())
    }

    pub fn set_constant(&mut self, name: &str, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::Graph(format!("constant `{name}` set to non-finite value")));
        }
        match self.constants.iter_mut().find(|(n, _)| n == name) {
            Some(slot) => {
                slot.1 = value;
                Ok(())
            }
            None => Err(Error::Graph(format!("unknown constant `{name}`"))),
        }
    }

    /// Puts every controller at the integral value it holds in a steady
    /// state where the MVs take `mv_values` (indexed like [`Self::mv_names`]).
    pub fn initialize_steady(
        &mut self,
        mv_values: &[f64],
        mut measure: impl FnMut(&str) -> Option<f64>,
    ) -> Result<()> {
        if mv_values.len() != self.mvs.len() {
            return Err(Error::Graph(format!(
                "expected {} MV values, got {}",
                self.mvs.len(),
                mv_values.len()
            )));
        }
        for b in &mut self.controllers {
            let y = measure(&b.measurement).ok_or_else(|| {
                Error::Graph(format!("unresolved measurement `{}`", b.measurement))
            })?;
            b.ctrl.initialize_steady(mv_values[b.mv], y);
        }
        Ok(())
    }

    /// Propose phase plus selector evaluation, without committing.
    pub fn propose(&mut self, mut measure: impl FnMut(&str) -> Option<f64>) -> Result<Scan> {
        let mut ctrl_out = Vec::with_capacity(self.controllers.len());
        for b in &mut self.controllers {
            let y = measure(&b.measurement).ok_or_else(|| {
                Error::Graph(format!(
                    "controller `{}`: unresolved measurement `{}`",
                    b.ctrl.name(),
                    b.measurement
                ))
            })?;
            b.last_y = y;
            ctrl_out.push(b.ctrl.propose(y)?);
        }

        let mut sel_out: Vec<(f64, Source)> = Vec::with_capacity(self.selectors.len());
        let mut buf = Vec::new();
        for node in &self.selectors {
            buf.clear();
            for src in &node.inputs {
                buf.push(self.value_of(*src, &ctrl_out, &sel_out));
            }
            let (value, idx) = node.select(&buf)?;
            let leaf = match node.inputs[idx] {
                Source::Selector(s) => sel_out[s].1,
                other => other,
            };
            sel_out.push((value, leaf));
        }

        let mut mv_values = Vec::with_capacity(self.mvs.len());
        let mut winners = Vec::with_capacity(self.mvs.len());
        for mv in &self.mvs {
            mv_values.push(self.value_of(mv.driver, &ctrl_out, &sel_out));
            let leaf = match mv.driver {
                Source::Selector(s) => sel_out[s].1,
                other => other,
            };
            winners.push(self.winner(leaf));
        }
        Ok(Scan { mv_values, winners })
    }

    /// One synchronous scan: propose, select, then commit every controller
    /// with the final value of the MV it feeds.
    pub fn evaluate(&mut self, measure: impl FnMut(&str) -> Option<f64>, dt: f64) -> Result<Scan> {
        let scan = self.propose(measure)?;
        for b in &mut self.controllers {
            b.ctrl.commit(scan.mv_values[b.mv], b.last_y, dt)?;
        }
        Ok(scan)
    }

    fn value_of(&self, src: Source, ctrl_out: &[f64], sel_out: &[(f64, Source)]) -> f64 {
        match src {
            Source::Controller(i) => ctrl_out[i],
            Source::Constant(i) => self.constants[i].1,
            Source::Selector(i) => sel_out[i].0,
        }
    }

    fn winner(&self, leaf: Source) -> Winner {
        match leaf {
            Source::Controller(i) => Winner {
                source: self.controllers[i].ctrl.name().to_string(),
                saturation: self.controllers[i].ctrl.saturation(),
            },
            Source::Constant(i) => Winner {
                source: self.constants[i].0.clone(),
                saturation: None,
            },
            Source::Selector(_) => unreachable!("leaf is never a selector"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pi(name: &str, kc: f64, sp: f64) -> PiController {
        PiController::new(name, kc, 350.0, sp).unwrap()
    }

    #[test]
    fn single_controller_drives_mv_directly() {
        let mut b = GraphBuilder::new();
        b.controller(pi("TC", 22.0, 4.0).with_integral(10.0), "T").mv("u2", "TC");
        let mut g = b.build().unwrap();
        let scan = g.evaluate(|_| Some(3.0), 1.0).unwrap();
        assert_eq!(scan.mv_values, vec![32.0]);
        assert_eq!(scan.winners[0].to_string(), "TC");
    }

    #[test]
    fn clamped_winner_is_flagged() {
        let mut b = GraphBuilder::new();
        b.controller(pi("TC", 22.0, 4.0), "T").mv("u2", "TC");
        let mut g = b.build().unwrap();
        let scan = g.evaluate(|_| Some(7.2), 1.0).unwrap();
        assert_eq!(scan.mv_values, vec![0.0]);
        assert_eq!(scan.winners[0].to_string(), "TC@min");
    }

    #[test]
    fn duplicate_and_dangling_names() {
        let mut b = GraphBuilder::new();
        b.controller(pi("A", 1.0, 0.0), "y").constant("A", 1.0).mv("u", "A");
        assert!(b.build().is_err());

        let mut b = GraphBuilder::new();
        b.controller(pi("A", 1.0, 0.0), "y").mv("u", "B");
        assert!(matches!(b.build(), Err(Error::Graph(_))));
    }

    #[test]
    fn detects_selector_cycle() {
        let mut b = GraphBuilder::new();
        b.controller(pi("A", 1.0, 0.0), "y")
            .controller(pi("B", 1.0, 0.0), "y")
            .selector("s1", SelectorKind::Min, &["A", "s2"])
            .selector("s2", SelectorKind::Max, &["B", "s1"])
            .mv("u", "s1");
        let err = b.build().unwrap_err();
        assert!(err.to_string().contains("feeds") || err.to_string().contains("cycle"));

        let mut b = GraphBuilder::new();
        b.controller(pi("A", 1.0, 0.0), "y")
            .controller(pi("B", 1.0, 0.0), "y")
            .selector("s1", SelectorKind::Min, &["A", "s2"])
            .selector("s2", SelectorKind::Max, &["B", "s1"]);
        assert!(b.build().unwrap_err().to_string().contains("cycle"));
    }

    #[test]
    fn controller_must_feed_exactly_once() {
        let mut b = GraphBuilder::new();
        b.controller(pi("A", 1.0, 0.0), "y")
            .constant("c", 1.0)
            .selector("s", SelectorKind::Min, &["A", "c"])
            .mv("u", "s")
            .mv("v", "A");
        assert!(b.build().is_err());

        let mut b = GraphBuilder::new();
        b.controller(pi("A", 1.0, 0.0), "y").constant("c", 1.0).mv("u", "c");
        assert!(b.build().is_err());
    }

    #[test]
    fn selectors_declared_out_of_order_are_sorted() {
        let mut b = GraphBuilder::new();
        b.controller(pi("A", -1.0, 0.0).with_integral(30.0), "y")
            .controller(pi("B", -1.0, 0.0).with_integral(70.0), "y")
            .constant("u0", 50.0)
            .selector("last", SelectorKind::Min, &["first", "B"])
            .selector("first", SelectorKind::Max, &["u0", "A"])
            .mv("u", "last");
        let mut g = b.build().unwrap();
        let scan = g.evaluate(|_| Some(0.0), 1.0).unwrap();
        assert_eq!(scan.mv_values, vec![50.0]);
        assert_eq!(scan.winners[0].source, "u0");
        assert_eq!(g.mv_of("A"), Some("u"));
    }

    #[test]
    fn unresolved_measurement_is_an_error() {
        let mut b = GraphBuilder::new();
        b.controller(pi("A", 1.0, 0.0), "missing").mv("u", "A");
        let mut g = b.build().unwrap();
        assert!(g.evaluate(|_| None, 1.0).is_err());
    }

    #[test]
    fn chain_expansion() {
        let chain = MvChain {
            mv: "u1".into(),
            desired: Some(50.0),
            desired_name: None,
            stages: vec![
                ChainStage::new(SelectorKind::Min, &["TC3"]),
                ChainStage::new(SelectorKind::Max, &["CC2"]),
            ],
        };
        let g = ControlGraph::from_chains(
            vec![
                (pi("TC3", -10.0, 5.0), "T".into(), "u1".into()),
                (pi("CC2", -0.1, 1000.0), "c".into(), "u1".into()),
            ],
            &[chain],
        )
        .unwrap();
        assert_eq!(g.selectors().len(), 2);
        assert_eq!(g.constant("u1.u0"), Some(50.0));
        assert_eq!(g.mv_of("CC2"), Some("u1"));
    }

    #[test]
    fn controller_outside_chain_is_rejected() {
        let chain = MvChain {
            mv: "u1".into(),
            desired: Some(50.0),
            desired_name: None,
            stages: vec![ChainStage::new(SelectorKind::Min, &["TC3"])],
        };
        let err = ControlGraph::from_chains(
            vec![
                (pi("TC3", -10.0, 5.0), "T".into(), "u1".into()),
                (pi("CC2", -0.1, 1000.0), "c".into(), "u1".into()),
            ],
            &[chain],
        )
        .unwrap_err();
        assert!(err.to_string().contains("CC2"));
    }

    #[test]
    fn graph_is_send() {
        fn assert_send<T: Send>() {}
        assert_send::<ControlGraph>();
    }
}
