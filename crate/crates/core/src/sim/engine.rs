//! Fixed-step closed-loop simulation.
//!
//! Scan order per step: disturbances at `t` → delayed measurements →
//! graph scan → MVs applied → plant integrated over `dt` with inputs held.

use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::control::{ControlGraph, Scan};
use crate::error::{Error, Result};
use crate::sim::{DelayLine, Plant, Profile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    #[default]
    Euler,
    Rk4,
}

/// Where a disturbance profile is applied.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    /// Index into the plant's disturbance vector.
    Plant(usize),
    /// Named constant of the control graph (an operator setpoint such as `z_s`).
    Constant(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceInput {
    pub name: String,
    pub target: Target,
    pub profile: Profile,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Initial {
    /// The plant's commissioned steady state at the initial disturbances.
    SteadyState,
    /// Outputs and MVs given explicitly, in plant order.
    Explicit { outputs: Vec<f64>, mvs: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    pub dt: f64,
    pub integrator: Integrator,
    /// Transport delay per plant output, seconds.
    pub delays: Vec<(String, f64)>,
    pub initial: Initial,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            dt: 1.0,
            integrator: Integrator::Euler,
            delays: Vec::new(),
            initial: Initial::SteadyState,
        }
    }
}

/// Whole number of `dt` steps in `span`, or an error naming `what`.
pub fn steps_in(span: f64, dt: f64, what: &str) -> Result<usize> {
    if !(span >= 0.0) || !span.is_finite() {
        return Err(Error::InvalidParameter(format!("{what} must be non-negative, got {span}")));
    }
    let n = (span / dt).round();
    if (n * dt - span).abs() > 1e-9 * span.max(1.0) {
        return Err(Error::InvalidParameter(format!(
            "{what} = {span} s is not a multiple of dt = {dt} s"
        )));
    }
    Ok(n as usize)
}

pub struct Simulation {
    plant: Box<dyn Plant>,
    graph: ControlGraph,
    integrator: Integrator,
    dt: f64,
    x: Vec<f64>,
    u: Vec<f64>,
    d: Vec<f64>,
    mv_slot: Vec<usize>,
    inputs: Vec<DisturbanceInput>,
    delays: Vec<DelayLine>,
    y: Vec<f64>,
    y_meas: Vec<f64>,
    k: usize,
}

impl std::fmt::Debug for Simulation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Simulation")
            .field("plant", &self.plant.name())
            .field("t", &self.time())
            .field("x", &self.x)
            .field("u", &self.u)
            .finish()
    }
}

impl Simulation {
    pub fn new(
        plant: Box<dyn Plant>,
        mut graph: ControlGraph,
        inputs: Vec<DisturbanceInput>,
        options: SimOptions,
    ) -> Result<Self> {
        let dt = options.dt;
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        let input_names = plant.input_names();
        let output_names = plant.output_names();

        let mut mv_slot = Vec::new();
        for mv in graph.mv_names() {
            let slot = input_names.iter().position(|n| *n == mv).ok_or_else(|| {
                Error::Graph(format!("MV `{mv}` is not an input of the {} plant", plant.name()))
            })?;
            mv_slot.push(slot);
        }
        for name in input_names {
            if !graph.mv_names().any(|m| m == *name) {
                return Err(Error::Graph(format!("plant input `{name}` is not driven by the control graph")));
            }
        }
        for ch in graph.measurement_channels() {
            if !output_names.contains(&ch) {
                return Err(Error::Graph(format!("measurement `{ch}` is not a plant output")));
            }
        }
        for input in &inputs {
            match &input.target {
                Target::Plant(i) if *i >= plant.disturbance_names().len() => {
                    return Err(Error::InvalidParameter(format!("disturbance `{}` has no plant slot", input.name)));
                }
                Target::Constant(c) if graph.constant(c).is_none() => {
                    return Err(Error::Graph(format!("disturbance targets unknown constant `{c}`")));
                }
                _ => {}
            }
        }

        let mut d = plant.default_disturbances();
        for input in &inputs {
            let v = input.profile.value_at(0.0);
            match &input.target {
                Target::Plant(i) => d[*i] = v,
                Target::Constant(c) => graph.set_constant(c, v)?,
            }
        }

        let (x, u) = match &options.initial {
            Initial::SteadyState => plant.commissioned(&d)?,
            Initial::Explicit { outputs, mvs } => {
                if outputs.len() != output_names.len() || mvs.len() != input_names.len() {
                    return Err(Error::InvalidParameter(format!(
                        "initial condition needs {} outputs and {} MVs",
                        output_names.len(),
                        input_names.len()
                    )));
                }
                (plant.state_from_outputs(outputs), mvs.clone())
            }
        };
        let mut y = vec![0.0; output_names.len()];
        plant.outputs(&x, &u, &d, &mut y);

        let mv_values: Vec<f64> = mv_slot.iter().map(|&s| u[s]).collect();
        graph.initialize_steady(&mv_values, |ch| {
            output_names.iter().position(|n| *n == ch).map(|i| y[i])
        })?;

        let mut delays = Vec::with_capacity(output_names.len());
        for (i, name) in output_names.iter().enumerate() {
            let secs = options
                .delays
                .iter()
                .filter(|(n, _)| n == name)
                .map(|(_, s)| *s)
                .next_back()
                .unwrap_or(0.0);
            let n = steps_in(secs, dt, &format!("delay on `{name}`"))?;
            delays.push(DelayLine::new(n, y[i]));
        }
        for (n, _) in &options.delays {
            if !output_names.contains(&n.as_str()) {
                return Err(Error::InvalidParameter(format!("delay on unknown output `{n}`")));
            }
        }

        Ok(Self {
            y_meas: y.clone(),
            plant,
            graph,
            integrator: options.integrator,
            dt,
            x,
            u,
            d,
            mv_slot,
            inputs,
            delays,
            y,
            k: 0,
        })
    }

    pub fn time(&self) -> f64 {
        self.k as f64 * self.dt
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn state(&self) -> &[f64] {
        &self.x
    }

    pub fn mvs(&self) -> &[f64] {
        &self.u
    }

    pub fn plant(&self) -> &dyn Plant {
        self.plant.as_ref()
    }

    pub fn graph(&self) -> &ControlGraph {
        &self.graph
    }

    pub fn graph_mut(&mut self) -> &mut ControlGraph {
        &mut self.graph
    }

    fn apply_disturbances(&mut self, t: f64) -> Result<()> {
        for input in &self.inputs {
            let v = input.profile.value_at(t);
            match &input.target {
                Target::Plant(i) => self.d[*i] = v,
                Target::Constant(c) => self.graph.set_constant(c, v)?,
            }
        }
        Ok(())
    }

    fn measure(&mut self) {
        self.plant.outputs(&self.x, &self.u, &self.d, &mut self.y);
        for (i, line) in self.delays.iter_mut().enumerate() {
            self.y_meas[i] = line.push(self.y[i]);
        }
    }

    /// One scan plus one integration step. Returns the scan with the MV
    /// values applied over `[t, t + dt)`.
    pub fn step(&mut self) -> Result<Scan> {
        let t = self.time();
        self.apply_disturbances(t)?;
        self.measure();
        let names = self.plant.output_names();
        let y_meas = &self.y_meas;
        let scan = self
            .graph
            .evaluate(|ch| names.iter().position(|n| *n == ch).map(|i| y_meas[i]), self.dt)?;
        for (i, &slot) in self.mv_slot.iter().enumerate() {
            self.u[slot] = scan.mv_values[i];
        }
        self.integrate(t)?;
        self.k += 1;
        Ok(scan)
    }

    fn integrate(&mut self, t: f64) -> Result<()> {
        let n = self.x.len();
        let dt = self.dt;
        let f = |x: &[f64], dx: &mut [f64]| self.plant.derivatives(x, &self.u, &self.d, dx);
        let mut next = self.x.clone();
        match self.integrator {
            Integrator::Euler => {
                let mut k1 = vec![0.0; n];
                f(&self.x, &mut k1)?;
                for i in 0..n {
                    next[i] += dt * k1[i];
                }
            }
            Integrator::Rk4 => {
                let (mut k1, mut k2, mut k3, mut k4) =
                    (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
                let mut tmp = vec![0.0; n];
                f(&self.x, &mut k1)?;
                for i in 0..n {
                    tmp[i] = self.x[i] + 0.5 * dt * k1[i];
                }
                f(&tmp, &mut k2)?;
                for i in 0..n {
                    tmp[i] = self.x[i] + 0.5 * dt * k2[i];
                }
                f(&tmp, &mut k3)?;
                for i in 0..n {
                    tmp[i] = self.x[i] + dt * k3[i];
                }
                f(&tmp, &mut k4)?;
                for i in 0..n {
                    next[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
            }
        }
        self.plant.project(&mut next);
        if let Some(i) = next.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState {
                t: t + dt,
                what: self.plant.state_names()[i].to_string(),
            });
        }
        self.x = next;
        Ok(())
    }

    /// Runs to `t_end` and collects the trajectory. Rows are logged at every
    /// step `t_k` (outputs of `x_k`, MVs applied from `t_k`) plus a final
    /// row at `t_end`.
    pub fn run(mut self, t_end: f64) -> Result<RunResult> {
        let steps = steps_in(t_end, self.dt, "t_end")?;
        let mut log = Recorder::new(&self);
        for _ in 0..steps {
            let t = self.time();
            let scan = self.step()?;
            log.row(&self, t, &scan);
        }
        let t = self.time();
        self.apply_disturbances(t)?;
        let names = self.plant.output_names();
        let scan = match log.last_scan.take() {
            Some(s) => s,
            None => {
                self.measure();
                let y_meas = &self.y_meas;
                self.graph
                    .propose(|ch| names.iter().position(|n| *n == ch).map(|i| y_meas[i]))?
            }
        };
        log.row(&self, t, &scan);
        Ok(log.finish(&self))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Event {
    pub t: f64,
    pub mv: String,
    pub winner: String,
}

/// Final-window statistics of one channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WindowStats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// Peak-to-peak of the residual after removing the least-squares line,
    /// so a monotone approach to steady state counts as zero.
    pub oscillation: f64,
}

impl WindowStats {
    pub fn ptp(&self) -> f64 {
        self.max - self.min
    }
}

/// One constant-disturbance segment of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegmentStats {
    pub start: f64,
    pub end: f64,
    /// Channel values at the last logged row of the segment.
    pub terminal: Vec<f64>,
    /// Statistics over the final window of the segment.
    pub window: Vec<WindowStats>,
    /// Statistics over the window before that, when the segment is long enough.
    pub previous_window: Option<Vec<WindowStats>>,
    /// Winner per MV at the end of the segment.
    pub winners: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub dt: f64,
    pub time: Vec<f64>,
    pub channels: Vec<String>,
    pub data: Vec<Vec<f64>>,
    /// Channels written to CSV by default.
    pub default_channels: Vec<String>,
    pub mv_names: Vec<String>,
    winner_labels: Vec<String>,
    winner_trace: Vec<Vec<u32>>,
    pub events: Vec<Event>,
    pub breakpoints: Vec<f64>,
    pub segments: Vec<SegmentStats>,
}

struct Recorder {
    channels: Vec<String>,
    default_channels: Vec<String>,
    const_names: Vec<String>,
    ctrl_names: Vec<String>,
    time: Vec<f64>,
    data: Vec<Vec<f64>>,
    mv_names: Vec<String>,
    labels: Vec<String>,
    label_ix: HashMap<String, u32>,
    trace: Vec<Vec<u32>>,
    events: Vec<Event>,
    last_scan: Option<Scan>,
    y: Vec<f64>,
}

impl Recorder {
    fn new(sim: &Simulation) -> Self {
        let p = sim.plant.as_ref();
        let mut channels: Vec<String> = Vec::new();
        channels.extend(p.output_names().iter().map(|s| s.to_string()));
        channels.extend(p.input_names().iter().map(|s| s.to_string()));
        channels.extend(p.disturbance_names().iter().map(|s| s.to_string()));
        let const_names: Vec<String> = sim
            .inputs
            .iter()
            .filter_map(|i| match &i.target {
                Target::Constant(c) => Some(c.clone()),
                Target::Plant(_) => None,
            })
            .collect();
        channels.extend(const_names.iter().cloned());
        let default_channels = channels.clone();
        let ctrl_names: Vec<String> = sim.graph.controllers().map(|c| c.name().to_string()).collect();
        channels.extend(ctrl_names.iter().map(|n| format!("cand.{n}")));
        let mv_names: Vec<String> = sim.graph.mv_names().map(str::to_string).collect();
        Self {
            data: vec![Vec::new(); channels.len()],
            trace: vec![Vec::new(); mv_names.len()],
            channels,
            default_channels,
            const_names,
            ctrl_names,
            time: Vec::new(),
            mv_names,
            labels: Vec::new(),
            label_ix: HashMap::new(),
            events: Vec::new(),
            last_scan: None,
            y: vec![0.0; p.output_names().len()],
        }
    }

    fn row(&mut self, sim: &Simulation, t: f64, scan: &Scan) {
        let p = sim.plant.as_ref();
        p.outputs(&sim.x, &sim.u, &sim.d, &mut self.y);
        self.time.push(t);
        let mut col = 0;
        for v in self.y.iter().chain(&sim.u).chain(&sim.d) {
            self.data[col].push(*v);
            col += 1;
        }
        for c in &self.const_names {
            self.data[col].push(sim.graph.constant(c).unwrap_or(f64::NAN));
            col += 1;
        }
        for n in &self.ctrl_names {
            let v = sim.graph.controller(n).map_or(f64::NAN, |c| {
                let (lo, hi) = c.limits();
                c.last_candidate().clamp(lo, hi)
            });
            self.data[col].push(v);
            col += 1;
        }
        for (i, w) in scan.winners.iter().enumerate() {
            let label = w.to_string();
            let next = self.labels.len() as u32;
            let ix = *self.label_ix.entry(label.clone()).or_insert_with(|| {
                self.labels.push(label.clone());
                next
            });
            let changed = self.trace[i].last() != Some(&ix);
            self.trace[i].push(ix);
            if changed {
                self.events.push(Event {
                    t,
                    mv: self.mv_names[i].clone(),
                    winner: label,
                });
            }
        }
        self.last_scan = Some(scan.clone());
    }

    fn finish(self, sim: &Simulation) -> RunResult {
        let t_end = self.time.last().copied().unwrap_or(0.0);
        let mut breakpoints: Vec<f64> = sim
            .inputs
            .iter()
            .flat_map(|i| i.profile.breakpoints().iter().copied())
            .filter(|&b| b > 0.0 && b < t_end)
            .collect();
        breakpoints.sort_by(f64::total_cmp);
        breakpoints.dedup();
        let mut r = RunResult {
            dt: sim.dt,
            time: self.time,
            channels: self.channels,
            data: self.data,
            default_channels: self.default_channels,
            mv_names: self.mv_names,
            winner_labels: self.labels,
            winner_trace: self.trace,
            events: self.events,
            breakpoints,
            segments: Vec::new(),
        };
        r.segments = r.segment_stats(1000.0);
        r
    }
}

impl RunResult {
    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    pub fn channel(&self, name: &str) -> Option<&[f64]> {
        self.channels
            .iter()
            .position(|c| c == name)
            .map(|i| self.data[i].as_slice())
    }

    /// Winner label of `mv` at row `k`.
    pub fn winner_at(&self, mv: &str, k: usize) -> Option<&str> {
        let i = self.mv_names.iter().position(|m| m == mv)?;
        let ix = *self.winner_trace[i].get(k)?;
        Some(self.winner_labels[ix as usize].as_str())
    }

    pub fn winner_trace(&self, mv: &str) -> Option<Vec<&str>> {
        let i = self.mv_names.iter().position(|m| m == mv)?;
        Some(
            self.winner_trace[i]
                .iter()
                .map(|&ix| self.winner_labels[ix as usize].as_str())
                .collect(),
        )
    }

    pub fn events_for<'a>(&'a self, mv: &'a str) -> impl Iterator<Item = &'a Event> + 'a {
        self.events.iter().filter(move |e| e.mv == mv)
    }

    /// Statistics of `channel` over rows with `t0 <= t <= t1`.
    pub fn window(&self, channel: &str, t0: f64, t1: f64) -> Option<WindowStats> {
        let data = self.channel(channel)?;
        let lo = self.time.partition_point(|&t| t < t0);
        let hi = self.time.partition_point(|&t| t <= t1);
        window_of(&self.time[lo..hi], &data[lo..hi])
    }

    /// Recomputes per-segment statistics with the given window length.
    pub fn segment_stats(&self, window: f64) -> Vec<SegmentStats> {
        let Some(&t_end) = self.time.last() else {
            return Vec::new();
        };
        let mut edges = vec![0.0];
        edges.extend(self.breakpoints.iter().copied());
        edges.push(t_end);
        let mut out = Vec::new();
        for w in edges.windows(2) {
            let (start, end) = (w[0], w[1]);
            let last = end == t_end;
            let hi = if last {
                self.time.len()
            } else {
                self.time.partition_point(|&t| t < end)
            };
            let lo = self.time.partition_point(|&t| t < start);
            if hi <= lo {
                continue;
            }
            let t_last = self.time[hi - 1];
            let lo_w = self.time.partition_point(|&t| t <= t_last - window).max(lo);
            let stats_of = |a: usize, b: usize| -> Vec<WindowStats> {
                self.data
                    .iter()
                    .map(|ch| window_of(&self.time[a..b], &ch[a..b]).expect("non-empty window"))
                    .collect()
            };
            let previous_window = (t_last - 2.0 * window >= start).then(|| {
                let lo_p = self.time.partition_point(|&t| t <= t_last - 2.0 * window);
                stats_of(lo_p, lo_w)
            });
            out.push(SegmentStats {
                start,
                end,
                terminal: self.data.iter().map(|ch| ch[hi - 1]).collect(),
                window: stats_of(lo_w, hi),
                previous_window,
                winners: (0..self.mv_names.len())
                    .map(|i| self.winner_labels[self.winner_trace[i][hi - 1] as usize].clone())
                    .collect(),
            });
        }
        out
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channels.iter().position(|c| c == name)
    }

    /// Writes `t,<channels>` every `log_interval` seconds.
    pub fn write_csv<W: Write>(&self, w: W, channels: &[String], log_interval: f64) -> Result<()> {
        let idx: Vec<usize> = channels
            .iter()
            .map(|c| {
                self.channel_index(c)
                    .ok_or_else(|| Error::InvalidParameter(format!("unknown output channel `{c}`")))
            })
            .collect::<Result<_>>()?;
        let stride = steps_in(log_interval, self.dt, "log_interval")?.max(1);
        let mut wr = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::InvalidParameter(format!("CSV write failed: {e}"));
        let mut header = vec!["t".to_string()];
        header.extend(channels.iter().cloned());
        wr.write_record(&header).map_err(io)?;
        for k in (0..self.time.len()).step_by(stride) {
            let mut rec = vec![self.time[k].to_string()];
            rec.extend(idx.iter().map(|&i| self.data[i][k].to_string()));
            wr.write_record(&rec).map_err(io)?;
        }
        wr.flush()
            .map_err(|e| Error::InvalidParameter(format!("CSV write failed: {e}")))?;
        Ok(())
    }

    /// Writes one row per segment: bounds, terminal value of each channel in
    /// `channels` and the winner per MV.
    pub fn write_segments_csv<W: Write>(&self, w: W, channels: &[String]) -> Result<()> {
        let idx: Vec<usize> = channels
            .iter()
            .map(|c| {
                self.channel_index(c)
                    .ok_or_else(|| Error::InvalidParameter(format!("unknown output channel `{c}`")))
            })
            .collect::<Result<_>>()?;
        let mut wr = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::InvalidParameter(format!("CSV write failed: {e}"));
        let mut header = vec!["start".to_string(), "end".to_string()];
        header.extend(channels.iter().cloned());
        header.extend(self.mv_names.iter().map(|m| format!("winner.{m}")));
        wr.write_record(&header).map_err(io)?;
        for seg in &self.segments {
            let mut rec = vec![seg.start.to_string(), seg.end.to_string()];
            rec.extend(idx.iter().map(|&i| seg.terminal[i].to_string()));
            rec.extend(seg.winners.iter().cloned());
            wr.write_record(&rec).map_err(io)?;
        }
        wr.flush()
            .map_err(|e| Error::InvalidParameter(format!("CSV write failed: {e}")))?;
        Ok(())
    }

    /// Writes the winner-change log as `t,mv,winner`.
    pub fn write_events_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::InvalidParameter(format!("CSV write failed: {e}"));
        wr.write_record(["t", "mv", "winner"]).map_err(io)?;
        for e in &self.events {
            wr.write_record([e.t.to_string(), e.mv.clone(), e.winner.clone()])
                .map_err(io)?;
        }
        wr.flush()
            .map_err(|e| Error::InvalidParameter(format!("CSV write failed: {e}")))?;
        Ok(())
    }
}

fn window_of(ts: &[f64], xs: &[f64]) -> Option<WindowStats> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
    for &x in xs {
        min = min.min(x);
        max = max.max(x);
    }
    let mean = xs.iter().sum::<f64>() / n;
    let t_mean = ts.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (&t, &x) in ts.iter().zip(xs) {
        sxy += (t - t_mean) * (x - mean);
        sxx += (t - t_mean) * (t - t_mean);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let (mut rmin, mut rmax) = (f64::INFINITY, f64::NEG_INFINITY);
    for (&t, &x) in ts.iter().zip(xs) {
        let r = x - mean - slope * (t - t_mean);
        rmin = rmin.min(r);
        rmax = rmax.max(r);
    }
    Some(WindowStats {
        mean,
        min,
        max,
        oscillation: rmax - rmin,
    })
}
