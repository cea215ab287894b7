mod common;

use arc_core::barn::{BarnParams, BarnPlant};
use arc_core::sim::{Initial, Scenario, SimOptions, Simulation};
use arc_core::topology::graph_from_flowsheet;

use common::{barn_step, last, scenario};

#[test]
fn runs_are_deterministic() {
    let sc = barn_step(-20.0, 3000.0, 1.0, "euler");
    let a = sc.run().unwrap();
    let b = sc.run().unwrap();
    assert_eq!(a.data, b.data);
    assert_eq!(a.events, b.events);
}

#[test]
fn halving_dt_changes_little() {
    for integrator in ["euler", "rk4"] {
        let coarse = barn_step(-5.0, 6000.0, 1.0, integrator).run().unwrap();
        let fine = barn_step(-5.0, 6000.0, 0.5, integrator).run().unwrap();
        for ch in ["c", "T", "u1", "u2"] {
            let (a, b) = (last(&coarse, ch), last(&fine, ch));
            assert!(
                (a - b).abs() <= 1e-3 * b.abs().max(1.0),
                "{integrator} {ch}: {a} vs {b}"
            );
        }
    }
}

#[test]
fn euler_and_rk4_agree() {
    let e = barn_step(-10.0, 6000.0, 1.0, "euler").run().unwrap();
    let r = barn_step(-10.0, 6000.0, 1.0, "rk4").run().unwrap();
    for ch in ["c", "T"] {
        let (a, b) = (last(&e, ch), last(&r, ch));
        assert!((a - b).abs() <= 1e-3 * b.abs().max(1.0), "{ch}: {a} vs {b}");
    }
}

#[test]
fn co2_rises_by_source_over_one_step_from_clean_air() {
    let text = std::fs::read_to_string(common::repo().join("flowsheets/cow3.toml")).unwrap();
    let graph = graph_from_flowsheet(&arc_core::topology::parse_flowsheet(&text).unwrap()).unwrap();
    let options = SimOptions {
        initial: Initial::Explicit {
            outputs: vec![420.0, 0.0],
            mvs: vec![50.0, 0.0],
        },
        ..SimOptions::default()
    };
    let plant = BarnPlant::new(BarnParams::default());
    let mut sim = Simulation::new(Box::new(plant), graph, Vec::new(), options).unwrap();
    sim.step().unwrap();
    let c = sim.state()[0] * 1e6;
    // N·g/V with clean air inside, whatever the fan does.
    assert!((c - (420.0 + 100.0 * 4e-5 / 3000.0 * 1e6)).abs() < 1e-9, "c = {c}");
}

#[test]
fn empty_barn_relaxes_to_outdoor_co2() {
    let text = r#"
name = "empty"
t_end = 250000.0
[plant]
model = "barn"
structure = "cow3"
[[disturbance]]
variable = "n_cows"
breakpoints = [1.0]
values = [100.0, 0.0]
"#;
    let run = Scenario::parse(text, "empty.toml").unwrap().run().unwrap();
    let c = run.channel("c").unwrap();
    assert!(c.windows(2).skip(2).all(|w| w[1] <= w[0] + 1e-9));
    assert!((last(&run, "c") - 420.0).abs() < 0.5, "c = {}", last(&run, "c"));
}

#[test]
fn staircase_switches_are_bumpless() {
    let run = scenario("cow_staircase").run().unwrap();
    for mv in ["u1", "u2"] {
        let u = run.channel(mv).unwrap();
        for e in run.events_for(mv).filter(|e| e.t > 0.0) {
            let k = run.time.partition_point(|&t| t < e.t);
            let jump = (u[k] - u[k - 1]).abs();
            assert!(jump < 1.0, "{mv} jumps {jump} when {} takes over at {}", e.winner, e.t);
        }
    }
}

#[test]
fn closed_loop_integrals_stay_bounded() {
    let sc = scenario("cow_staircase");
    let mut sim = sc.build().unwrap();
    let mut worst = 0.0f64;
    for _ in 0..72000 {
        sim.step().unwrap();
        for ctrl in sim.graph().controllers() {
            let (lo, hi) = ctrl.limits();
            // Errors on the barn stay within 3000 ppm for CO2 and 60 °C for temperature.
            let e_max = if ctrl.setpoint() >= 1000.0 { 3000.0 } else { 60.0 };
            let bound = hi.max(-lo) + ctrl.kc().abs() * e_max;
            worst = worst.max(ctrl.integral().abs() / bound);
        }
    }
    assert!(worst <= 1.0, "integral reached {worst} of its bound");
}

#[test]
fn controllers_see_the_step_only_after_the_delay() {
    let run = scenario("cow_staircase_delay180").run().unwrap();
    let u1 = run.channel("u1").unwrap();
    let at = |t: f64| u1[run.time.partition_point(|&x| x < t)];
    assert!((at(8180.0) - at(7999.0)).abs() < 1e-3);
    assert!((at(8250.0) - at(7999.0)).abs() > 0.1);
}
