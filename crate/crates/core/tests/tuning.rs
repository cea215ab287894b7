use arc_core::barn::{solve_active_set, BarnParams, BarnStructure};
use arc_core::tuning::{linearize_barn, simc_pi};
use proptest::prelude::*;

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

#[test]
fn cold_point_scales_co2_time_constant_and_slope_by_about_five() {
    let p = BarnParams::default();
    let nominal = linearize_barn(50.0, 0.0, 0.0, &p).unwrap();
    let cold = solve_active_set(-40.0, &p, &BarnStructure::cow3()).unwrap();
    let lp = linearize_barn(cold.u1, cold.u2, -40.0, &p).unwrap();
    assert!((lp.q - 1.55).abs() < 0.01, "q = {}", lp.q);
    let tau_ratio = lp.tau_c / nominal.tau_c;
    let slope_ratio = lp.kprime_c_u1() / nominal.kprime_c_u1();
    assert!((4.0..=6.0).contains(&tau_ratio), "tau ratio {tau_ratio}");
    assert!((4.0..=6.0).contains(&slope_ratio), "slope ratio {slope_ratio}");
    // The steady-state gain scales with q⁻², the square of the time constant.
    assert!(rel(lp.k_c_u1 / nominal.k_c_u1, tau_ratio * tau_ratio) < 1e-12);
}

#[test]
fn finite_differences_match_at_sampled_points() {
    let p = BarnParams::default();
    let h = 1e-2;
    for &(u1, u2, t_out) in &[(50.0, 1.0, 0.0), (45.6, 25.7, -5.0), (24.4, 99.0, -20.0), (77.2, 1.0, 15.0), (10.0, 50.0, -35.0)] {
        let lp = linearize_barn(u1, u2, t_out, &p).unwrap();
        let ss = |a: f64, b: f64| arc_core::barn::barn_steady_state(a, b, t_out, &p).unwrap();
        let fd_c = (ss(u1 + h, u2).0 - ss(u1 - h, u2).0) / (2.0 * h);
        let fd_t = (ss(u1 + h, u2).1 - ss(u1 - h, u2).1) / (2.0 * h);
        let fd_h = (ss(u1, u2 + h).1 - ss(u1, u2 - h).1) / (2.0 * h);
        assert!(rel(lp.k_c_u1, fd_c) < 1e-4, "{u1} {u2} {t_out}: {} vs {fd_c}", lp.k_c_u1);
        assert!(rel(lp.k_t_u1, fd_t) < 1e-4, "{u1} {u2} {t_out}: {} vs {fd_t}", lp.k_t_u1);
        assert!(rel(lp.k_t_u2, fd_h) < 1e-4, "{u1} {u2} {t_out}: {} vs {fd_h}", lp.k_t_u2);
    }
}

proptest! {
    #[test]
    fn heater_slope_is_independent_of_operating_point(
        u1 in 0.0f64..100.0, u2 in 0.0f64..100.0, t_out in -40.0f64..20.0,
    ) {
        let p = BarnParams::default();
        let here = linearize_barn(u1, u2, t_out, &p).unwrap().kprime_t_u2();
        let nominal = linearize_barn(50.0, 0.0, 0.0, &p).unwrap().kprime_t_u2();
        prop_assert!(rel(here, nominal) < 1e-9);
    }

    #[test]
    fn gain_signs(u1 in 0.0f64..100.0, u2 in 0.0f64..100.0, t_out in -40.0f64..20.0) {
        let lp = linearize_barn(u1, u2, t_out, &BarnParams::default()).unwrap();
        prop_assert!(lp.tau_c > 0.0 && lp.tau_t > 0.0);
        prop_assert!(lp.k_t_u2 > 0.0);
        prop_assert!(lp.k_c_u1 < 0.0);
        if lp.t > t_out {
            prop_assert!(lp.k_t_u1 < 0.0);
        }
    }

    #[test]
    fn simc_integral_time_is_capped(kprime in -1.0f64..1.0, tau in 1.0f64..5000.0, tau_c in 1.0f64..2000.0) {
        prop_assume!(kprime.abs() > 1e-9);
        let t = simc_pi(kprime, tau, tau_c).unwrap();
        prop_assert_eq!(t.tau_i, tau.min(4.0 * tau_c));
        prop_assert!(rel(t.kc * kprime * tau_c, 1.0) < 1e-12);
    }
}
