use crate::error::Result;

/// A continuous-time plant driven by held MV values.
///
/// States, MVs (`u`), disturbances (`d`) and measured outputs (`y`) are
/// plain slices indexed like the corresponding `*_names` lists.
pub trait Plant: Send + Sync {
    fn name(&self) -> &'static str;
    fn state_names(&self) -> &'static [&'static str];
    fn input_names(&self) -> &'static [&'static str];
    fn disturbance_names(&self) -> &'static [&'static str];
    fn default_disturbances(&self) -> Vec<f64>;
    fn output_names(&self) -> &'static [&'static str];

    fn derivatives(&self, x: &[f64], u: &[f64], d: &[f64], dx: &mut [f64]) -> Result<()>;

    fn outputs(&self, x: &[f64], u: &[f64], d: &[f64], y: &mut [f64]);

    /// Maps a state back into its physical domain after an integration
    /// step (a liquid level pinned to [0, 100], say).
    fn project(&self, _x: &mut [f64]) {}

    /// State whose outputs are `y`. Used for explicit initial conditions.
    fn state_from_outputs(&self, y: &[f64]) -> Vec<f64>;

    /// Steady state `(x, u)` of the plant under its reference control
    /// structure at disturbances `d`.
    fn commissioned(&self, d: &[f64]) -> Result<(Vec<f64>, Vec<f64>)>;
}
