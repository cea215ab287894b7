use std::path::PathBuf;

use arc_core::control::SelectorKind;
use arc_core::topology::{
    check_all, graph_from_flowsheet, parse_flowsheet, to_toml_string, tpm_candidates, FlowsheetSpec,
    RuleId, Severity, Tpm, UnitKind,
};
use proptest::prelude::*;

const REFERENCE: [&str; 8] = ["fig1", "fig2", "fig3", "fig4", "cow2a", "cow2", "cow3a", "cow3"];

const MUTATIONS: [(&str, RuleId); 7] = [
    ("c1_double_flow", RuleId::C1),
    ("c2_boundary_pressure", RuleId::C2),
    ("c3_radiation", RuleId::C3),
    ("c4_crossing", RuleId::C4),
    ("s1_wrong_kind", RuleId::S1),
    ("s2_priority_order", RuleId::S2),
    ("s3_no_desired", RuleId::S3),
];

fn dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../flowsheets")
}

fn load(rel: &str) -> FlowsheetSpec {
    let text = std::fs::read_to_string(dir().join(rel)).unwrap();
    parse_flowsheet(&text).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

#[test]
fn reference_fixtures_have_no_violations() {
    for name in REFERENCE {
        let spec = load(&format!("{name}.toml"));
        for r in check_all(&spec) {
            assert_ne!(r.severity, Severity::Violation, "{name}: {r}");
        }
    }
}

#[test]
fn each_mutation_fails_exactly_its_rule() {
    for (name, rule) in MUTATIONS {
        let spec = load(&format!("mutations/{name}.toml"));
        let failing: Vec<RuleId> = check_all(&spec)
            .into_iter()
            .filter(|r| r.severity == Severity::Violation)
            .map(|r| r.rule)
            .collect();
        assert_eq!(failing, vec![rule], "{name}");
    }
}

#[test]
fn fig1_shape() {
    let spec = load("fig1.toml");
    assert_eq!(spec.count_units(UnitKind::Vessel), 1);
    assert_eq!(spec.inventories.len(), 2);
    assert_eq!(spec.tpm, Tpm::Mv("choke".into()));
}

#[test]
fn fig4_shape() {
    let spec = load("fig4.toml");
    assert_eq!(spec.count_units(UnitKind::Vessel), 2);
    assert_eq!(spec.count_selectors(SelectorKind::Min), 5);
    assert_eq!(tpm_candidates(&spec).len(), 5);
    assert!(spec.mv_decl("downstream_valve").unwrap().external);
}

#[test]
fn fig3_tpm_candidates() {
    let spec = load("fig3.toml");
    assert_eq!(tpm_candidates(&spec), vec!["choke".to_string(), "compressor".to_string()]);
}

#[test]
fn fig2_keeps_tpm_at_feed() {
    let r = &check_all(&load("fig2.toml"))[1];
    assert_eq!(r.severity, Severity::Pass);
    assert!(r.message.contains("TPM remains at choke"), "{}", r.message);
}

#[test]
fn c1_mutation_names_both_loops() {
    let r = &check_all(&load("mutations/c1_double_flow.toml"))[0];
    assert!(r.locus.contains(&"PC".to_string()) && r.locus.contains(&"FC".to_string()));
}

#[test]
fn radiation_mutation_flags_pressure_loop() {
    let r = &check_all(&load("mutations/c3_radiation.toml"))[2];
    assert_eq!(r.locus, vec!["PC".to_string()]);
}

#[test]
fn fixture_graphs_match_built_in_barn_structures() {
    use arc_core::barn::BarnStructure;
    for (name, s) in [
        ("cow2a", BarnStructure::cow2a()),
        ("cow2", BarnStructure::cow2()),
        ("cow3a", BarnStructure::cow3a()),
        ("cow3", BarnStructure::cow3()),
    ] {
        let spec = load(&format!("{name}.toml"));
        assert_eq!(spec.selectors, s.chains, "{name}");
        let from_file = graph_from_flowsheet(&spec).unwrap();
        let built = s.graph().unwrap();
        for c in built.controllers() {
            let f = from_file.controller(c.name()).unwrap();
            assert_eq!((f.kc(), f.tau_i(), f.setpoint()), (c.kc(), c.tau_i(), c.setpoint()), "{name}");
        }
        assert_eq!(from_file.controllers().count(), built.controllers().count());
    }
}

#[test]
fn fixtures_round_trip() {
    let mut files: Vec<String> = REFERENCE.iter().map(|n| format!("{n}.toml")).collect();
    files.extend(MUTATIONS.iter().map(|(n, _)| format!("mutations/{n}.toml")));
    for f in files {
        let spec = load(&f);
        let again = parse_flowsheet(&to_toml_string(&spec).unwrap()).unwrap();
        assert_eq!(spec, again, "{f}");
    }
}

fn chain_spec(n: usize, phases: Vec<u8>, elements: Vec<bool>) -> String {
    let mut s = String::from("name = \"gen\"\n");
    for i in 0..=n {
        let kind = if i == 0 {
            "source"
        } else if i == n {
            "sink"
        } else {
            "vessel"
        };
        s += &format!("\n[[units]]\nname = \"u{i}\"\nkind = \"{kind}\"\n");
    }
    for i in 0..n {
        let phase = ["gas", "liquid", "mixed"][phases[i] as usize % 3];
        s += &format!("\n[[streams]]\nname = \"s{i}\"\nfrom = \"u{i}\"\nto = \"u{}\"\nphase = \"{phase}\"\n", i + 1);
        if elements[i] {
            s += &format!("element = \"v{i}\"\n");
        }
    }
    s
}

proptest! {
    #[test]
    fn generated_specs_round_trip(
        n in 1usize..6,
        phases in prop::collection::vec(0u8..3, 6),
        elements in prop::collection::vec(any::<bool>(), 6),
    ) {
        let text = chain_spec(n, phases, elements);
        let spec = parse_flowsheet(&text).unwrap();
        let again = parse_flowsheet(&to_toml_string(&spec).unwrap()).unwrap();
        prop_assert_eq!(spec, again);
    }
}
