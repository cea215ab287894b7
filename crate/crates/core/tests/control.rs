use arc_core::barn::{solve_active_set, BarnParams, BarnStructure};
use arc_core::control::{ControlGraph, PiController};
use proptest::prelude::*;

fn controller(kc: f64, tau_i: f64, tracking: bool) -> PiController {
    let c = PiController::new("X", kc, tau_i, 0.0).unwrap();
    if tracking {
        c
    } else {
        c.without_tracking()
    }
}

/// Runs a deselected controller against measurement errors `errors`
/// (cycled) with the applied value `u_sel`, returning the largest |integral|.
fn deselected_peak(mut c: PiController, errors: &[f64], u_sel: f64, steps: usize) -> f64 {
    let mut peak = 0.0f64;
    for k in 0..steps {
        let y = -errors[k % errors.len()];
        c.propose(y).unwrap();
        c.commit(u_sel, y, 1.0).unwrap();
        peak = peak.max(c.integral().abs());
    }
    peak
}

fn barn_graph(structure: &BarnStructure, t_out: f64) -> (ControlGraph, f64, f64, f64, f64) {
    let sol = solve_active_set(t_out, &BarnParams::default(), structure).unwrap();
    let mut g = structure.graph().unwrap();
    let meas = |ch: &str| match ch {
        "c" => Some(sol.c_ppm),
        "T" => Some(sol.t),
        _ => None,
    };
    let mvs: Vec<f64> = g
        .mv_names()
        .map(|m| if m == "u1" { sol.u1 } else { sol.u2 })
        .collect();
    g.initialize_steady(&mvs, meas).unwrap();
    (g, sol.c_ppm, sol.t, sol.u1, sol.u2)
}

#[test]
fn nominal_chain_holds_desired_fan_speed() {
    let (mut g, c, t, _, _) = barn_graph(&BarnStructure::cow2(), 0.0);
    let scan = g
        .evaluate(|ch| if ch == "c" { Some(c) } else { Some(t) }, 1.0)
        .unwrap();
    let i = g.mv_index("u1").unwrap();
    assert!((scan.mv_values[i] - 50.0).abs() < 1e-9);
    assert_eq!(scan.winners[i].to_string(), "u0");
}

#[test]
fn coldest_point_is_held_by_co2_limit() {
    let (mut g, c, t, u1, _) = barn_graph(&BarnStructure::cow3(), -40.0);
    let scan = g
        .evaluate(|ch| if ch == "c" { Some(c) } else { Some(t) }, 1.0)
        .unwrap();
    let i = g.mv_index("u1").unwrap();
    assert!((scan.mv_values[i] - u1).abs() < 1e-6 && (u1 - 9.7).abs() < 0.05);
    assert_eq!(scan.winners[i].to_string(), "CC1");
}

proptest! {
    #[test]
    fn propose_follows_the_law_and_keeps_the_integral(
        kc in -50.0f64..50.0, integral in -200.0f64..200.0, y in -100.0f64..100.0,
    ) {
        let mut c = controller(kc, 100.0, true).with_integral(integral);
        let u = c.propose(y).unwrap();
        prop_assert_eq!(c.integral(), integral);
        prop_assert_eq!(c.last_candidate(), kc * (0.0 - y) + integral);
        prop_assert_eq!(u, c.last_candidate().clamp(0.0, 100.0));
    }

    #[test]
    fn tracking_keeps_the_integral_bounded(
        kc in prop::sample::select(vec![-10.0f64, -3.33, -0.1, 5.0, 22.0]),
        tau_i in 10.0f64..2000.0,
        errors in prop::collection::vec(-30.0f64..30.0, 1..20),
        u_sel in 0.0f64..100.0,
    ) {
        let e_max = errors.iter().fold(0.0f64, |m, e| m.max(e.abs()));
        let peak = deselected_peak(controller(kc, tau_i, true), &errors, u_sel, 5000);
        prop_assert!(peak <= 100.0 + kc.abs() * e_max + 1e-9, "peak {peak}");
    }

    #[test]
    fn without_tracking_a_persistent_error_winds_up(
        kc in prop::sample::select(vec![-10.0f64, -3.33, 5.0, 22.0]),
        tau_i in 10.0f64..2000.0,
        e in 1.0f64..30.0,
    ) {
        // The integral grows linearly, so it passes any bound given time.
        let steps = 10000;
        let peak = deselected_peak(controller(kc, tau_i, false), &[e], 50.0, steps);
        let ramp = kc.abs() * e * steps as f64 / tau_i;
        prop_assert!((peak - ramp).abs() <= 1e-9 * ramp, "peak {peak} vs {ramp}");
    }

    #[test]
    fn deselected_candidate_converges_geometrically(
        tau_t in 10.0f64..1000.0, start in 0.0f64..100.0, u_sel in 0.0f64..100.0,
    ) {
        let mut c = controller(-10.0, 350.0, true)
            .with_tracking_time(tau_t)
            .unwrap()
            .with_integral(start);
        let mut gap = start - u_sel;
        for _ in 0..50 {
            c.propose(0.0).unwrap();
            c.commit(u_sel, 0.0, 1.0).unwrap();
            gap *= 1.0 - 1.0 / tau_t;
            prop_assert!((c.integral() - u_sel - gap).abs() < 1e-9);
        }
    }
}
