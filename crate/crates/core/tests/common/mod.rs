#![allow(dead_code)]

use std::path::PathBuf;

use arc_core::sim::{RunResult, Scenario};

/// Published barn operating points:
/// `(T_out, T, c, u1, u2, active pair)`.
pub const OPERATING_POINTS: [(f64, f64, f64, f64, f64, &str); 10] = [
    (15.0, 20.0, 765.0, 77.2, 0.0, "{T=20, u2=0}"),
    (10.0, 17.2, 950.0, 50.0, 0.0, "{u1=50, u2=0}"),
    (5.0, 12.2, 950.0, 50.0, 0.0, "{u1=50, u2=0}"),
    (0.0, 7.2, 950.0, 50.0, 0.0, "{u1=50, u2=0}"),
    (-2.5, 5.0, 977.0, 47.6, 0.0, "{T=5, u2=0}"),
    (-5.0, 4.0, 1000.0, 45.6, 25.7, "{c=1000, T=4}"),
    (-10.0, 2.6, 1000.0, 45.6, 100.0, "{c=1000, u2=100}"),
    (-20.0, 0.0, 1492.0, 24.4, 100.0, "{T=0, u2=100}"),
    (-30.0, 0.0, 2487.0, 12.3, 100.0, "{T=0, u2=100}"),
    (-40.0, -6.4, 3000.0, 9.7, 100.0, "{c=3000, u2=100}"),
];

/// Steady-state tolerances on T, c, u1, u2.
pub const TOL: [f64; 4] = [0.1, 5.0, 0.5, 1.0];

pub fn repo() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn scenario(name: &str) -> Scenario {
    Scenario::load(repo().join("scenarios").join(format!("{name}.toml"))).unwrap()
}

/// Barn under cow3 starting at the nominal steady state, with `T_out`
/// stepped to `t_out` after one second.
pub fn barn_step(t_out: f64, t_end: f64, dt: f64, integrator: &str) -> Scenario {
    let text = format!(
        r#"
name = "step"
dt = {dt}
t_end = {t_end}
integrator = "{integrator}"
log_interval = {dt}

[plant]
model = "barn"
structure = "cow3"

[[disturbance]]
variable = "t_out"
breakpoints = [1.0]
values = [0.0, {t_out}]
"#
    );
    Scenario::parse(&text, "step.toml").unwrap()
}

pub fn last(run: &RunResult, ch: &str) -> f64 {
    *run.channel(ch).unwrap().last().unwrap()
}

pub fn within(got: [f64; 4], want: [f64; 4]) -> bool {
    got.iter().zip(want).zip(TOL).all(|((g, w), tol)| (g - w).abs() <= tol)
}
