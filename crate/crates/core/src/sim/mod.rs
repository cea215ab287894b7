//! Fixed-step closed-loop simulation of a plant and a control graph.

mod delay;
mod engine;
mod plant;
mod profile;
mod scenario;

pub use delay::DelayLine;
pub use engine::{
    steps_in, DisturbanceInput, Event, Initial, Integrator, RunResult, SegmentStats, SimOptions,
    Simulation, Target, WindowStats,
};
pub use plant::Plant;
pub use profile::{staircase_profile, Profile, COW_STAIRCASE, DEFAULT_SEGMENT};
pub use scenario::{
    ControllerConfig, DisturbanceConfig, InitialConfig, InitialMode, PlantConfig, PlantModel,
    Scenario, ScenarioConfig,
};
