//! Flowsheet descriptions and the control-structure rule checker.

mod rules;
mod flowsheet;

pub use rules::{
    check_all, check_c1, check_c2, check_c4, check_radiation, check_s1, check_s2, check_s3,
    has_violations, infer_selector_kind, tpm_candidates, RuleId, RuleReport, Severity,
};
pub use flowsheet::{
    parse_flowsheet, to_toml_string, Bound, CvKind, FlowsheetSpec, GainSign, Inventory,
    InventoryKind, LoopDecl, MvDecl, Phase, Stream, Tpm, Unit, UnitKind,
};

use crate::control::{ControlGraph, PiController};
use crate::error::{Error, Result};

/// Builds the control graph described by a flowsheet. Every loop needs
/// `measurement`, `kc`, `tau_i` and `setpoint`; loops outside any selector
/// chain drive their MV directly.
pub fn graph_from_flowsheet(spec: &FlowsheetSpec) -> Result<ControlGraph> {
    let mut controllers = Vec::with_capacity(spec.loops.len());
    for l in &spec.loops {
        let missing = |what: &str| Error::Flowsheet(format!("loop `{}` has no {what}", l.name));
        let ctrl = PiController::new(
            l.name.clone(),
            l.kc.ok_or_else(|| missing("kc"))?,
            l.tau_i.ok_or_else(|| missing("tau_i"))?,
            l.setpoint.ok_or_else(|| missing("setpoint"))?,
        )?;
        let meas = l.measurement.clone().ok_or_else(|| missing("measurement"))?;
        controllers.push((ctrl, meas, l.mv.clone()));
    }
    ControlGraph::from_chains(controllers, &spec.selectors)
}
