//! Declarative flowsheet / control-structure description and its TOML
//! reader and writer.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::control::{MvChain, SelectorKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitKind {
    Source,
    Sink,
    Vessel,
    Splitter,
    Junction,
}

impl UnitKind {
    pub fn is_boundary(self) -> bool {
        matches!(self, UnitKind::Source | UnitKind::Sink)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Unit {
    pub name: String,
    pub kind: UnitKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Gas,
    Liquid,
    #[default]
    Mixed,
}

impl Phase {
    fn is_default(&self) -> bool {
        *self == Phase::Mixed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stream {
    pub name: String,
    pub from: String,
    pub to: String,
    /// Valve, compressor or fan that sets the flow, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub element: Option<String>,
    #[serde(default, skip_serializing_if = "Phase::is_default")]
    pub phase: Phase,
}

fn yes() -> bool {
    true
}

fn is_true(b: &bool) -> bool {
    *b
}

fn is_false(b: &bool) -> bool {
    !*b
}

/// Extra MV declarations: MVs that are not stream elements (a heater) or
/// elements whose properties differ from the defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MvDecl {
    pub name: String,
    /// Physical 0/100 % limits acting as built-in MAX/MIN selectors.
    #[serde(default = "yes", skip_serializing_if = "is_true")]
    pub builtin_limits: bool,
    /// Declared but outside the drawn flowsheet.
    #[serde(default, skip_serializing_if = "is_false")]
    pub external: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InventoryKind {
    Level,
    Pressure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inventory {
    pub unit: String,
    pub kind: InventoryKind,
    pub loops: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CvKind {
    Level,
    Pressure,
    Flow,
    Temperature,
    Composition,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bound {
    Upper,
    Lower,
}

/// Sign of the steady-state gain from MV to CV.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GainSign {
    Positive,
    Negative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopDecl {
    pub name: String,
    pub cv: CvKind,
    /// Unit (or stream, for flow loops) where the CV is measured.
    pub at: String,
    pub mv: String,
    pub gain: GainSign,
    /// Set when the loop guards a constraint rather than a plain setpoint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<Bound>,
    /// Larger is more important. Only compared within one selector chain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub priority: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub setpoint: Option<f64>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub radiation_exempt: bool,
    /// Plant output read by the controller, for simulation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measurement: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_i: Option<f64>,
}

/// Throughput manipulator declaration.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Tpm {
    #[default]
    None,
    /// Selector-driven: the TPM moves to whichever MIN-selector with an
    /// external setpoint is limiting.
    Auto,
    Mv(String),
}

impl fmt::Display for Tpm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tpm::None => f.write_str("none"),
            Tpm::Auto => f.write_str("auto"),
            Tpm::Mv(m) => f.write_str(m),
        }
    }
}

impl Serialize for Tpm {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Tpm {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(match s.as_str() {
            "none" | "" => Tpm::None,
            "auto" => Tpm::Auto,
            _ => Tpm::Mv(s),
        })
    }
}

impl Tpm {
    fn is_none(&self) -> bool {
        *self == Tpm::None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowsheetSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Tpm::is_none")]
    pub tpm: Tpm,
    #[serde(default)]
    pub units: Vec<Unit>,
    #[serde(default)]
    pub streams: Vec<Stream>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mvs: Vec<MvDecl>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inventories: Vec<Inventory>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub loops: Vec<LoopDecl>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub selectors: Vec<MvChain>,
}

/// 1-based line and column of a byte offset.
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let offset = offset.min(text.len());
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let col = before.rfind('\n').map_or(offset, |p| offset - p - 1) + 1;
    (line, col)
}

/// Points a semantic diagnostic at the first quoted occurrence of `name`.
fn locate(text: &str, name: &str, message: String) -> Error {
    let needle = format!("\"{name}\"");
    let (line, column) = text
        .find(&needle)
        .map(|off| line_col(text, off))
        .unwrap_or((1, 1));
    Error::Parse {
        line,
        column,
        message,
    }
}

pub fn parse_flowsheet(text: &str) -> Result<FlowsheetSpec> {
    let spec: FlowsheetSpec = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map(|s| line_col(text, s.start)).unwrap_or((1, 1));
        Error::Parse {
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    spec.validate().map_err(|(name, msg)| match name {
        Some(n) => locate(text, &n, msg),
        None => Error::Parse {
            line: 1,
            column: 1,
            message: msg,
        },
    })?;
    Ok(spec)
}

pub fn to_toml_string(spec: &FlowsheetSpec) -> Result<String> {
    toml::to_string(spec).map_err(|e| Error::Flowsheet(e.to_string()))
}

type Invalid = (Option<String>, String);

fn invalid(name: &str, msg: String) -> Invalid {
    (Some(name.to_string()), msg)
}

impl FlowsheetSpec {
    pub fn unit(&self, name: &str) -> Option<&Unit> {
        self.units.iter().find(|u| u.name == name)
    }

    pub fn stream(&self, name: &str) -> Option<&Stream> {
        self.streams.iter().find(|s| s.name == name)
    }

    pub fn loop_decl(&self, name: &str) -> Option<&LoopDecl> {
        self.loops.iter().find(|l| l.name == name)
    }

    /// Stream on which the named MV sits.
    pub fn stream_of_mv(&self, mv: &str) -> Option<&Stream> {
        self.streams.iter().find(|s| s.element.as_deref() == Some(mv))
    }

    pub fn chain_for(&self, mv: &str) -> Option<&MvChain> {
        self.selectors.iter().find(|c| c.mv == mv)
    }

    pub fn mv_decl(&self, mv: &str) -> Option<&MvDecl> {
        self.mvs.iter().find(|m| m.name == mv)
    }

    pub fn builtin_limits(&self, mv: &str) -> bool {
        self.mv_decl(mv).map_or(true, |m| m.builtin_limits)
    }

    /// Stream elements plus declared MVs, in declaration order.
    pub fn mv_names(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.streams
            .iter()
            .filter_map(|s| s.element.as_deref())
            .chain(self.mvs.iter().map(|m| m.name.as_str()))
            .filter(|n| seen.insert(*n))
            .collect()
    }

    pub fn count_units(&self, kind: UnitKind) -> usize {
        self.units.iter().filter(|u| u.kind == kind).count()
    }

    /// Number of selector stages of the given kind across all chains.
    pub fn count_selectors(&self, kind: SelectorKind) -> usize {
        self.selectors
            .iter()
            .flat_map(|c| c.stages.iter())
            .filter(|s| s.kind == kind)
            .count()
    }

    fn validate(&self) -> std::result::Result<(), Invalid> {
        if self.units.is_empty() {
            return Err((None, "no units".into()));
        }
        let mut names: HashSet<String> = HashSet::new();
        let mut claim = |n: &str, what: &str| -> std::result::Result<(), Invalid> {
            if n.is_empty() {
                return Err((None, format!("empty {what} name")));
            }
            if !names.insert(n.to_string()) {
                return Err(invalid(n, format!("duplicate name `{n}`")));
            }
            Ok(())
        };
        for u in &self.units {
            claim(&u.name, "unit")?;
        }
        for s in &self.streams {
            claim(&s.name, "stream")?;
        }
        for l in &self.loops {
            claim(&l.name, "loop")?;
        }
        let mut elements = HashSet::new();
        for s in &self.streams {
            if let Some(e) = &s.element {
                if !elements.insert(e.as_str()) {
                    return Err(invalid(e, format!("element `{e}` sits on more than one stream")));
                }
                claim(e, "element")?;
            }
        }
        let mut decls = HashSet::new();
        for m in &self.mvs {
            if !decls.insert(m.name.as_str()) {
                return Err(invalid(&m.name, format!("duplicate MV declaration `{}`", m.name)));
            }
            if !elements.contains(m.name.as_str()) {
                claim(&m.name, "MV")?;
            }
        }
        let mvs: HashSet<&str> = elements.union(&decls).copied().collect();

        let unit_names: HashSet<&str> = self.units.iter().map(|u| u.name.as_str()).collect();
        let stream_names: HashSet<&str> = self.streams.iter().map(|s| s.name.as_str()).collect();
        for s in &self.streams {
            for end in [&s.from, &s.to] {
                if !unit_names.contains(end.as_str()) {
                    return Err(invalid(
                        end,
                        format!("stream `{}` references unknown unit `{end}`", s.name),
                    ));
                }
            }
            if s.from == s.to {
                return Err(invalid(&s.name, format!("stream `{}` loops onto its own unit", s.name)));
            }
        }

        let loop_names: HashSet<&str> = self.loops.iter().map(|l| l.name.as_str()).collect();
        for l in &self.loops {
            if !mvs.contains(l.mv.as_str()) {
                return Err(invalid(&l.mv, format!("loop `{}` manipulates unknown MV `{}`", l.name, l.mv)));
            }
            let ok = match l.cv {
                CvKind::Flow => stream_names.contains(l.at.as_str()),
                _ => unit_names.contains(l.at.as_str()),
            };
            if !ok {
                return Err(invalid(&l.at, format!("loop `{}` measures at unknown location `{}`", l.name, l.at)));
            }
        }

        for inv in &self.inventories {
            if !unit_names.contains(inv.unit.as_str()) {
                return Err(invalid(&inv.unit, format!("inventory on unknown unit `{}`", inv.unit)));
            }
            for l in &inv.loops {
                if !loop_names.contains(l.as_str()) {
                    return Err(invalid(l, format!("inventory on `{}` references unknown loop `{l}`", inv.unit)));
                }
            }
        }

        let mut chained = HashSet::new();
        for c in &self.selectors {
            if !mvs.contains(c.mv.as_str()) {
                return Err(invalid(&c.mv, format!("selector chain for unknown MV `{}`", c.mv)));
            }
            if !chained.insert(c.mv.as_str()) {
                return Err(invalid(&c.mv, format!("MV `{}` has more than one selector chain", c.mv)));
            }
            if c.stages.is_empty() && c.desired.is_none() {
                return Err(invalid(&c.mv, format!("chain for `{}` is empty", c.mv)));
            }
            for (i, st) in c.stages.iter().enumerate() {
                for input in &st.inputs {
                    if !loop_names.contains(input.as_str()) {
                        return Err(invalid(input, format!("selector on `{}` references unknown loop `{input}`", c.mv)));
                    }
                }
                let extra = if i == 0 { usize::from(c.desired.is_some()) } else { 1 };
                let n = st.inputs.len() + extra;
                let ok = match st.kind {
                    SelectorKind::Mid => n == 3,
                    _ => n >= 2,
                };
                if !ok {
                    return Err(invalid(&c.mv, format!("{} selector {i} on `{}` has {n} inputs", st.kind, c.mv)));
                }
            }
        }

        if let Tpm::Mv(m) = &self.tpm {
            if !mvs.contains(m.as_str()) {
                return Err(invalid(m, format!("TPM `{m}` is not a known MV")));
            }
        }

        // undirected connectivity over units
        let index: HashMap<&str, usize> = self
            .units
            .iter()
            .enumerate()
            .map(|(i, u)| (u.name.as_str(), i))
            .collect();
        let mut adj = vec![Vec::new(); self.units.len()];
        for s in &self.streams {
            let (a, b) = (index[s.from.as_str()], index[s.to.as_str()]);
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut seen = BTreeSet::from([0usize]);
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            for &j in &adj[i] {
                if seen.insert(j) {
                    stack.push(j);
                }
            }
        }
        if seen.len() != self.units.len() {
            let lost = self
                .units
                .iter()
                .enumerate()
                .find(|(i, _)| !seen.contains(i))
                .map(|(_, u)| u.name.clone())
                .unwrap_or_default();
            return Err(invalid(&lost, format!("flowsheet is not connected: `{lost}` is unreachable")));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"
name = "small"
tpm = "v1"

[[units]]
name = "src"
kind = "source"

[[units]]
name = "dst"
kind = "sink"

[[streams]]
name = "s1"
from = "src"
to = "dst"
element = "v1"
"#;

    #[test]
    fn parses_minimal_spec() {
        let spec = parse_flowsheet(SMALL).unwrap();
        assert_eq!(spec.tpm, Tpm::Mv("v1".into()));
        assert_eq!(spec.streams[0].phase, Phase::Mixed);
        assert_eq!(spec.mv_names(), vec!["v1"]);
    }

    #[test]
    fn empty_units_rejected() {
        let err = parse_flowsheet("name = \"x\"\n").unwrap_err();
        assert!(err.to_string().contains("no units"));
    }

    #[test]
    fn syntax_error_has_position() {
        let err = parse_flowsheet("name = \"x\"\n[[units]\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_and_dangling_names() {
        let dup = SMALL.replace("name = \"dst\"", "name = \"src\"");
        let err = parse_flowsheet(&dup).unwrap_err();
        assert!(err.to_string().contains("duplicate"));

        let dangling = SMALL.replace("to = \"dst\"", "to = \"nowhere\"");
        match parse_flowsheet(&dangling).unwrap_err() {
            Error::Parse { line, message, .. } => {
                assert!(message.contains("nowhere"));
                assert!(line > 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_field_rejected() {
        let text = SMALL.replace("kind = \"sink\"", "kind = \"sink\"\ncolour = \"red\"");
        assert!(parse_flowsheet(&text).is_err());
    }

    #[test]
    fn disconnected_rejected() {
        let text = format!("{SMALL}\n[[units]]\nname = \"island\"\nkind = \"vessel\"\n");
        assert!(parse_flowsheet(&text).unwrap_err().to_string().contains("island"));
    }

    #[test]
    fn round_trip() {
        let spec = parse_flowsheet(SMALL).unwrap();
        let again = parse_flowsheet(&to_toml_string(&spec).unwrap()).unwrap();
        assert_eq!(spec, again);
    }
}
