//! Consistency rules C1–C4 (C3 is the radiation rule) and selector rules
//! S1–S3.

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use serde::Serialize;

use super::flowsheet::{Bound, CvKind, FlowsheetSpec, GainSign, LoopDecl, Phase, Stream, Tpm};
use crate::control::SelectorKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum RuleId {
    C1,
    C2,
    C3,
    C4,
    S1,
    S2,
    S3,
}

impl RuleId {
    pub const ALL: [RuleId; 7] = [
        RuleId::C1,
        RuleId::C2,
        RuleId::C3,
        RuleId::C4,
        RuleId::S1,
        RuleId::S2,
        RuleId::S3,
    ];
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Ordered so that the worst finding is the maximum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Pass,
    Warning,
    Violation,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Pass => "pass",
            Severity::Warning => "warning",
            Severity::Violation => "violation",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RuleReport {
    pub rule: RuleId,
    pub severity: Severity,
    pub locus: Vec<String>,
    pub message: String,
}

impl fmt::Display for RuleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {:<9} {}", self.rule, self.severity, self.message)?;
        if !self.locus.is_empty() {
            write!(f, " [{}]", self.locus.join(", "))?;
        }
        Ok(())
    }
}

/// Accumulates findings for one rule and folds them into a single report.
struct Findings {
    rule: RuleId,
    severity: Severity,
    locus: BTreeSet<String>,
    messages: Vec<String>,
}

impl Findings {
    fn new(rule: RuleId) -> Self {
        Self {
            rule,
            severity: Severity::Pass,
            locus: BTreeSet::new(),
            messages: Vec::new(),
        }
    }

    fn add<S: AsRef<str>>(&mut self, severity: Severity, locus: &[S], message: String) {
        self.severity = self.severity.max(severity);
        self.locus.extend(locus.iter().map(|s| s.as_ref().to_string()));
        self.messages.push(message);
    }

    fn note(&mut self, message: String) {
        self.messages.push(message);
    }

    fn finish(self, pass_message: &str) -> RuleReport {
        let message = if self.messages.is_empty() {
            pass_message.to_string()
        } else {
            self.messages.join("; ")
        };
        RuleReport {
            rule: self.rule,
            severity: self.severity,
            locus: self.locus.into_iter().collect(),
            message,
        }
    }
}

/// Directed stream graph, optionally restricted to some phases.
struct Flow<'a> {
    streams: Vec<&'a Stream>,
}

impl<'a> Flow<'a> {
    fn all(spec: &'a FlowsheetSpec) -> Self {
        Self {
            streams: spec.streams.iter().collect(),
        }
    }

    fn phases(spec: &'a FlowsheetSpec, keep: &[Phase]) -> Self {
        Self {
            streams: spec.streams.iter().filter(|s| keep.contains(&s.phase)).collect(),
        }
    }

    fn contains(&self, stream: &Stream) -> bool {
        self.streams.iter().any(|s| s.name == stream.name)
    }

    /// Units reachable from `unit` along stream direction, `unit` included.
    fn reach(&self, unit: &str) -> HashSet<String> {
        let mut seen = HashSet::from([unit.to_string()]);
        let mut stack = vec![unit.to_string()];
        while let Some(u) = stack.pop() {
            for s in &self.streams {
                if s.from == u && seen.insert(s.to.clone()) {
                    stack.push(s.to.clone());
                }
            }
        }
        seen
    }

    fn reaches(&self, from: &str, to: &str) -> bool {
        self.reach(from).contains(to)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Upstream,
    Downstream,
}

/// Position of `unit` relative to the TPM stream. Units not connected to
/// the TPM in the given graph behave as if downstream of it.
fn side_of(flow: &Flow, unit: &str, tpm: &Stream) -> Side {
    if !flow.contains(tpm) {
        return Side::Downstream;
    }
    if flow.reaches(&tpm.to, unit) {
        Side::Downstream
    } else if flow.reaches(unit, &tpm.from) {
        Side::Upstream
    } else {
        Side::Downstream
    }
}

fn radiates(unit: &str, mv_stream: Option<&Stream>, side: Side) -> bool {
    match (mv_stream, side) {
        (Some(s), Side::Downstream) => s.from == unit,
        (Some(s), Side::Upstream) => s.to == unit,
        (None, _) => false,
    }
}

/// True when `tpm` lies strictly between `unit` and the stream `mv`
/// manipulated by one of its inventory loops.
fn crosses(flow: &Flow, unit: &str, mv: &Stream, tpm: &Stream) -> bool {
    if mv.name == tpm.name || mv.from == unit || mv.to == unit {
        return false;
    }
    if flow.reaches(unit, &mv.from) {
        flow.reaches(unit, &tpm.from) && flow.reaches(&tpm.to, &mv.from)
    } else if flow.reaches(&mv.to, unit) {
        flow.reaches(&mv.to, &tpm.from) && flow.reaches(&tpm.to, unit)
    } else {
        false
    }
}

fn on_same_path(flow: &Flow, a: &Stream, b: &Stream) -> bool {
    a.name == b.name || flow.reaches(&a.to, &b.from) || flow.reaches(&b.to, &a.from)
}

/// MVs able to act as TPM under selector-driven relocation: those whose
/// chain opens with a MIN-selector carrying an external desired input.
pub fn tpm_candidates(spec: &FlowsheetSpec) -> Vec<String> {
    match &spec.tpm {
        Tpm::None => Vec::new(),
        Tpm::Mv(m) => vec![m.clone()],
        Tpm::Auto => spec
            .selectors
            .iter()
            .filter(|c| {
                c.desired.is_some()
                    && c.stages.first().is_some_and(|s| s.kind == SelectorKind::Min)
            })
            .map(|c| c.mv.clone())
            .collect(),
    }
}

/// Selector needed for a constraint: MAX when the constraint is satisfied
/// by a large input, MIN otherwise.
pub fn infer_selector_kind(bound: Bound, gain: GainSign) -> SelectorKind {
    match (bound, gain) {
        (Bound::Upper, GainSign::Negative) | (Bound::Lower, GainSign::Positive) => SelectorKind::Max,
        _ => SelectorKind::Min,
    }
}

/// One controller setting the same flow twice.
pub fn check_c1(spec: &FlowsheetSpec) -> RuleReport {
    let mut f = Findings::new(RuleId::C1);
    for s in &spec.streams {
        let setters: Vec<&LoopDecl> = spec
            .loops
            .iter()
            .filter(|l| {
                s.element.as_deref() == Some(l.mv.as_str()) || (l.cv == CvKind::Flow && l.at == s.name)
            })
            .collect();
        if setters.len() < 2 {
            continue;
        }
        let chained = s.element.as_deref().and_then(|e| spec.chain_for(e).map(|c| (e, c)));
        let resolved = chained.is_some_and(|(e, chain)| {
            setters
                .iter()
                .all(|l| l.mv == e && chain.loop_inputs().any(|i| i == l.name))
        });
        if !resolved {
            let names: Vec<&str> = setters.iter().map(|l| l.name.as_str()).collect();
            f.add(
                Severity::Violation,
                &[&[s.name.as_str()][..], &names].concat(),
                format!("stream `{}` has its flow set by {} without a selector", s.name, names.join(" and ")),
            );
        }
    }
    f.finish("every flow is set at most once")
}

/// Boundary pressure control makes the manipulated MV an implicit TPM.
pub fn check_c2(spec: &FlowsheetSpec) -> RuleReport {
    let mut f = Findings::new(RuleId::C2);
    let flow = Flow::all(spec);
    let candidates = tpm_candidates(spec);
    for l in &spec.loops {
        let boundary = l.cv == CvKind::Pressure && spec.unit(&l.at).is_some_and(|u| u.kind.is_boundary());
        if !boundary {
            continue;
        }
        let implicit = &l.mv;
        if candidates.iter().any(|c| c == implicit) {
            f.note(format!("{} at `{}` makes `{implicit}` a TPM candidate; TPM remains at {implicit}", l.name, l.at));
            continue;
        }
        let implicit_stream = spec.stream_of_mv(implicit);
        let clash: Vec<&String> = candidates
            .iter()
            .filter(|c| match (implicit_stream, spec.stream_of_mv(c)) {
                (Some(a), Some(b)) => on_same_path(&flow, a, b),
                _ => false,
            })
            .collect();
        if clash.is_empty() {
            f.note(format!("{} at `{}` makes `{implicit}` an implicit TPM candidate", l.name, l.at));
        } else {
            let mut locus = vec![l.name.clone(), implicit.clone()];
            locus.extend(clash.iter().map(|c| c.to_string()));
            f.add(
                Severity::Violation,
                &locus,
                format!(
                    "{} at boundary `{}` sets the throughput through `{implicit}`, conflicting with TPM {} on the same path",
                    l.name,
                    l.at,
                    clash.iter().map(|c| format!("`{c}`")).collect::<Vec<_>>().join(", ")
                ),
            );
        }
    }
    f.finish("no boundary pressure loops")
}

fn phase_flow(spec: &FlowsheetSpec, kind: super::flowsheet::InventoryKind) -> Flow<'_> {
    match kind {
        super::flowsheet::InventoryKind::Pressure => Flow::phases(spec, &[Phase::Gas, Phase::Mixed]),
        super::flowsheet::InventoryKind::Level => Flow::phases(spec, &[Phase::Liquid, Phase::Mixed]),
    }
}

/// Radiation rule: inventory loops act in the flow direction downstream of
/// the TPM and against it upstream.
pub fn check_radiation(spec: &FlowsheetSpec) -> RuleReport {
    let mut f = Findings::new(RuleId::C3);
    let all = Flow::all(spec);
    let tpm_streams: Vec<(String, &Stream)> = tpm_candidates(spec)
        .into_iter()
        .filter_map(|m| spec.stream_of_mv(&m).map(|s| (m, s)))
        .collect();
    if tpm_streams.is_empty() {
        return f.finish("no TPM on a stream; radiation not applicable");
    }
    let auto = spec.tpm == Tpm::Auto;
    for inv in &spec.inventories {
        let flow = phase_flow(spec, inv.kind);
        let loops: Vec<&LoopDecl> = inv.loops.iter().filter_map(|n| spec.loop_decl(n)).collect();
        for (tpm, ts) in &tpm_streams {
            let side = side_of(&flow, &inv.unit, ts);
            let usable: Vec<&LoopDecl> = loops
                .iter()
                .copied()
                .filter(|l| !spec.stream_of_mv(&l.mv).is_some_and(|s| crosses(&all, &inv.unit, s, ts)))
                .collect();
            let good = |l: &&LoopDecl| radiates(&inv.unit, spec.stream_of_mv(&l.mv), side);
            let dir = match side {
                Side::Downstream => "in the flow direction",
                Side::Upstream => "against the flow direction",
            };
            if auto {
                if !usable.is_empty() && !usable.iter().any(good) {
                    let exempt = usable.iter().all(|l| l.radiation_exempt);
                    let names: Vec<&str> = usable.iter().map(|l| l.name.as_str()).collect();
                    f.add(
                        if exempt { Severity::Warning } else { Severity::Violation },
                        &names,
                        format!(
                            "{:?} inventory of `{}` has no loop acting {dir} when the TPM is at `{tpm}`",
                            inv.kind, inv.unit
                        ),
                    );
                }
            } else {
                for l in usable.iter().filter(|l| !good(l)) {
                    f.add(
                        if l.radiation_exempt { Severity::Warning } else { Severity::Violation },
                        &[l.name.as_str()],
                        format!(
                            "{} must manipulate a stream {dir} of `{}` (TPM at `{tpm}`), but uses `{}`",
                            l.name, inv.unit, l.mv
                        ),
                    );
                }
            }
        }
    }
    f.finish("inventory loops radiate around the TPM")
}

/// No inventory loop may reach across the TPM.
pub fn check_c4(spec: &FlowsheetSpec) -> RuleReport {
    let mut f = Findings::new(RuleId::C4);
    let all = Flow::all(spec);
    let tpm_streams: Vec<(String, &Stream)> = tpm_candidates(spec)
        .into_iter()
        .filter_map(|m| spec.stream_of_mv(&m).map(|s| (m, s)))
        .collect();
    for inv in &spec.inventories {
        for l in inv.loops.iter().filter_map(|n| spec.loop_decl(n)) {
            let Some(ms) = spec.stream_of_mv(&l.mv) else {
                continue;
            };
            for (tpm, ts) in &tpm_streams {
                if crosses(&all, &inv.unit, ms, ts) {
                    f.add(
                        Severity::Violation,
                        &[l.name.as_str(), tpm.as_str()],
                        format!("{} controls `{}` through `{}` across the TPM `{tpm}`", l.name, inv.unit, l.mv),
                    );
                }
            }
        }
    }
    f.finish("no inventory loop crosses the TPM")
}

/// Selector kind must follow from the constraint direction and gain sign.
pub fn check_s1(spec: &FlowsheetSpec) -> RuleReport {
    let mut f = Findings::new(RuleId::S1);
    for chain in &spec.selectors {
        for (i, stage) in chain.stages.iter().enumerate() {
            if stage.kind == SelectorKind::Mid {
                continue;
            }
            for name in &stage.inputs {
                let Some(l) = spec.loop_decl(name) else { continue };
                let Some(bound) = l.bound else { continue };
                let want = infer_selector_kind(bound, l.gain);
                if want != stage.kind {
                    f.add(
                        Severity::Violation,
                        &[chain.mv.as_str(), name.as_str()],
                        format!(
                            "{name} ({:?} bound, {:?} gain) needs a {want}-selector but sits in {} stage {i} of `{}`",
                            bound, l.gain, stage.kind, chain.mv
                        ),
                    );
                }
            }
        }
    }
    f.finish("selector kinds match constraint directions")
}

/// In chains mixing MIN and MAX, more important constraints come later.
pub fn check_s2(spec: &FlowsheetSpec) -> RuleReport {
    let mut f = Findings::new(RuleId::S2);
    for chain in &spec.selectors {
        let kinds: HashSet<SelectorKind> = chain.stages.iter().map(|s| s.kind).collect();
        if !(kinds.contains(&SelectorKind::Min) && kinds.contains(&SelectorKind::Max)) {
            continue;
        }
        let mut prev: Option<(u32, &str)> = None;
        for stage in &chain.stages {
            let best = stage
                .inputs
                .iter()
                .filter_map(|n| spec.loop_decl(n).and_then(|l| l.priority.map(|p| (p, n.as_str()))))
                .max_by_key(|(p, _)| *p);
            let Some((p, name)) = best else { continue };
            if let Some((pp, pname)) = prev {
                if p < pp {
                    f.add(
                        Severity::Violation,
                        &[chain.mv.as_str(), pname, name],
                        format!(
                            "on `{}`, {pname} (priority {pp}) precedes {name} (priority {p}); the higher priority must be nearer the end",
                            chain.mv
                        ),
                    );
                }
            }
            if prev.is_none_or(|(pp, _)| p >= pp) {
                prev = Some((p, name));
            }
        }
    }
    f.finish("selector chains end with their highest-priority constraint")
}

/// The first selector carries a desired input, unless a built-in MV limit
/// stands in for it.
pub fn check_s3(spec: &FlowsheetSpec) -> RuleReport {
    let mut f = Findings::new(RuleId::S3);
    for chain in &spec.selectors {
        if chain.stages.is_empty() || chain.desired.is_some() {
            continue;
        }
        if spec.builtin_limits(&chain.mv) {
            f.add(
                Severity::Warning,
                &[chain.mv.as_str()],
                format!(
                    "first selector on `{}` has no desired input; the built-in {} % limit acts as one",
                    chain.mv,
                    if chain.stages[0].kind == SelectorKind::Max { 0 } else { 100 }
                ),
            );
        } else {
            f.add(
                Severity::Violation,
                &[chain.mv.as_str()],
                format!("first selector on `{}` has no desired input and the MV has no built-in limit", chain.mv),
            );
        }
    }
    f.finish("first selectors carry a desired input")
}

/// All seven rules, in order.
pub fn check_all(spec: &FlowsheetSpec) -> Vec<RuleReport> {
    vec![
        check_c1(spec),
        check_c2(spec),
        check_radiation(spec),
        check_c4(spec),
        check_s1(spec),
        check_s2(spec),
        check_s3(spec),
    ]
}

pub fn has_violations(reports: &[RuleReport]) -> bool {
    reports.iter().any(|r| r.severity == Severity::Violation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::parse_flowsheet;

    #[test]
    fn selector_kind_inference() {
        use GainSign::*;
        assert_eq!(infer_selector_kind(Bound::Upper, Negative), SelectorKind::Max);
        assert_eq!(infer_selector_kind(Bound::Lower, Negative), SelectorKind::Min);
        assert_eq!(infer_selector_kind(Bound::Lower, Positive), SelectorKind::Max);
        assert_eq!(infer_selector_kind(Bound::Upper, Positive), SelectorKind::Min);
    }

    const LINE: &str = r#"
name = "line"
tpm = "v_in"

[[units]]
name = "src"
kind = "source"

[[units]]
name = "tank"
kind = "vessel"

[[units]]
name = "dst"
kind = "sink"

[[streams]]
name = "in"
from = "src"
to = "tank"
element = "v_in"
phase = "liquid"

[[streams]]
name = "out"
from = "tank"
to = "dst"
element = "v_out"
phase = "liquid"

[[inventories]]
unit = "tank"
kind = "level"
loops = ["LC"]

[[loops]]
name = "LC"
cv = "level"
at = "tank"
mv = "v_out"
gain = "negative"
"#;

    fn severities(text: &str) -> Vec<Severity> {
        check_all(&parse_flowsheet(text).unwrap()).iter().map(|r| r.severity).collect()
    }

    #[test]
    fn line_radiates_downstream() {
        assert!(severities(LINE).iter().all(|s| *s == Severity::Pass));
    }

    #[test]
    fn moving_tpm_downstream_flips_radiation() {
        let text = LINE.replace("tpm = \"v_in\"", "tpm = \"v_out\"");
        let reports = check_all(&parse_flowsheet(&text).unwrap());
        assert_eq!(reports[2].severity, Severity::Violation);
        assert_eq!(reports[2].locus, vec!["LC".to_string()]);

        let exempt = text.replace("gain = \"negative\"", "gain = \"negative\"\nradiation_exempt = true");
        assert_eq!(severities(&exempt)[2], Severity::Warning);
    }

    #[test]
    fn single_stream_flow_controller_passes() {
        let text = r#"
name = "fc"
tpm = "v"

[[units]]
name = "a"
kind = "source"

[[units]]
name = "b"
kind = "sink"

[[streams]]
name = "s"
from = "a"
to = "b"
element = "v"

[[loops]]
name = "FC"
cv = "flow"
at = "s"
mv = "v"
gain = "positive"
"#;
        assert!(severities(text).iter().all(|s| *s == Severity::Pass));
    }

    #[test]
    fn every_rule_reported_once() {
        let reports = check_all(&parse_flowsheet(LINE).unwrap());
        let ids: Vec<RuleId> = reports.iter().map(|r| r.rule).collect();
        assert_eq!(ids, RuleId::ALL.to_vec());
    }

    #[test]
    fn missing_desired_input_with_builtin_limit_warns() {
        let text = format!(
            "{LINE}\n[[loops]]\nname = \"LH\"\ncv = \"level\"\nat = \"tank\"\nmv = \"v_in\"\ngain = \"positive\"\nbound = \"upper\"\n\n\
             [[loops]]\nname = \"LL\"\ncv = \"level\"\nat = \"tank\"\nmv = \"v_in\"\ngain = \"positive\"\nbound = \"upper\"\n\n\
             [[selectors]]\nmv = \"v_in\"\n[[selectors.stages]]\nkind = \"MIN\"\ninputs = [\"LH\", \"LL\"]\n"
        );
        let reports = check_all(&parse_flowsheet(&text).unwrap());
        assert_eq!(reports[6].severity, Severity::Warning);
        assert!(reports[6].message.contains("built-in 100 %"));
    }
}
