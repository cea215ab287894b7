mod common;

use arc_core::barn::{barn_steady_state, solve_active_set, BarnParams, BarnStructure};
use proptest::prelude::*;

use common::{within, OPERATING_POINTS};

#[test]
fn solver_reproduces_every_operating_point() {
    let p = BarnParams::default();
    for &(t_out, t, c, u1, u2, pair) in &OPERATING_POINTS {
        let s = solve_active_set(t_out, &p, &BarnStructure::cow3()).unwrap();
        assert!(within([s.t, s.c_ppm, s.u1, s.u2], [t, c, u1, u2]), "T_out={t_out}: {s:?}");
        assert_eq!(s.active_pair_label(), pair, "T_out={t_out}");
    }
}

#[test]
fn heaterless_structures_match_where_heat_is_not_needed() {
    let p = BarnParams::default();
    for name in ["cow2a", "cow2"] {
        let s = match name {
            "cow2a" => BarnStructure::cow2a(),
            _ => BarnStructure::cow2(),
        };
        for &(t_out, t, c, u1, u2, pair) in OPERATING_POINTS.iter().filter(|r| r.4 == 0.0) {
            let sol = solve_active_set(t_out, &p, &s).unwrap();
            assert!(within([sol.t, sol.c_ppm, sol.u1, sol.u2], [t, c, u1, u2]), "{name} {t_out}");
            assert_eq!(sol.active_pair_label(), pair);
        }
    }
}

#[test]
fn more_cows_need_more_air() {
    let s = BarnStructure::cow3();
    let crowded = BarnParams {
        n_cows: 130.0,
        ..BarnParams::default()
    };
    let base = solve_active_set(-5.0, &BarnParams::default(), &s).unwrap();
    let sol = solve_active_set(-5.0, &crowded, &s).unwrap();
    assert_eq!(sol.active_pair_label(), base.active_pair_label());
    assert!(sol.u1 > base.u1);
}

proptest! {
    #[test]
    fn monotone_steady_state(u1 in 0.0f64..99.0, u2 in 0.0f64..99.0, t_out in -40.0f64..20.0, step in 0.1f64..1.0) {
        let p = BarnParams::default();
        let (c0, t0) = barn_steady_state(u1, u2, t_out, &p).unwrap();
        let (c1, t1) = barn_steady_state(u1 + step, u2, t_out, &p).unwrap();
        let (_, t2) = barn_steady_state(u1, u2 + step, t_out, &p).unwrap();
        prop_assert!(c1 < c0);
        prop_assert!(c0 >= p.c_out_ppm);
        if t0 > t_out {
            prop_assert!(t1 < t0);
        }
        prop_assert!(t2 > t0);
    }

    #[test]
    fn solver_output_is_within_actuator_range(t_out in -40.0f64..15.0) {
        let s = solve_active_set(t_out, &BarnParams::default(), &BarnStructure::cow3()).unwrap();
        prop_assert!((0.0..=100.0).contains(&s.u1) && (0.0..=100.0).contains(&s.u2));
        prop_assert!(s.c_ppm <= 3000.0 + 1e-6);
    }
}
