//! `arcsim`: simulation, steady-state sweeps, tuning, linearization and
//! topology checks for the barn and separator case studies.
//!
//! Exit codes: 0 success, 1 rule or tolerance failure, 2 usage or I/O error.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use arc_core::barn::{solve_bound_limited, BarnParams, BarnStructure, SteadyStateSolution};
use arc_core::sim::{RunResult, Scenario};
use arc_core::topology::{check_all, has_violations, parse_flowsheet, RuleReport};
use arc_core::tuning::{linearize_barn, tuning_table, LinearizedPoint};
use arc_core::Error;
use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

/// Rows of the published operating-point table, in °C.
const TABLE_T_OUT: [f64; 10] = [15.0, 10.0, 5.0, 0.0, -2.5, -5.0, -10.0, -20.0, -30.0, -40.0];

/// Tolerances on T, c, u1, u2 when comparing a simulation to the solver.
const TOL: [f64; 4] = [0.1, 5.0, 0.5, 1.0];

#[derive(Parser, Debug)]
#[command(name = "arcsim", version, about = "Advanced regulatory control simulator")]
struct Cli {
    /// Integration step in seconds (overrides scenario files).
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// Simulation horizon in seconds (overrides scenario files).
    #[arg(long, global = true)]
    t_end: Option<f64>,
    /// Output directory for files written by `simulate`.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads for independent runs (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Format of what is printed on stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run scenario files and write their CSV outputs.
    Simulate {
        /// Scenario files (the `.toml` extension may be omitted).
        #[arg(required = true)]
        scenarios: Vec<PathBuf>,
    },
    /// Active-constraint steady states of the barn.
    SteadyState {
        /// Outdoor temperatures in °C (default: the ten table rows).
        #[arg(allow_negative_numbers = true)]
        t_out: Vec<f64>,
        /// Control structure: cow2a, cow2, cow3a or cow3.
        #[arg(long, default_value = "cow3")]
        structure: String,
        /// Cross-check every row against a closed-loop run (default 40000 s).
        #[arg(long)]
        simulate: bool,
    },
    /// PI tunings of the six barn controllers.
    Tune {
        /// Detuning factor for TC2.
        #[arg(long, default_value_t = 3.0)]
        tc2_factor: f64,
    },
    /// Gains and time constants of the barn at an operating point.
    Linearize {
        /// Fan speed, %.
        #[arg(long, default_value_t = 50.0)]
        u1: f64,
        /// Heater power, %.
        #[arg(long, default_value_t = 0.0)]
        u2: f64,
        /// Outdoor temperature, °C.
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        t_out: f64,
        /// Linearize at the cow3 steady state for this outdoor temperature
        /// instead of at `--u1/--u2/--t-out`.
        #[arg(long, allow_negative_numbers = true)]
        steady: Option<f64>,
    },
    /// Check flowsheet files against the inventory and selector rules.
    CheckTopology {
        /// Flowsheet TOML files.
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
}

/// Failure carrying its exit code.
#[derive(Debug)]
struct Fail {
    code: u8,
    message: String,
}

impl Fail {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    fn check(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Scenario { .. } | Error::Parse { .. } | Error::Flowsheet(_) | Error::InvalidParameter(_) => 2,
            _ => 1,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = Result<T, Fail>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::Simulate { scenarios } => simulate(&cli, scenarios),
        Command::SteadyState {
            t_out,
            structure,
            simulate,
        } => steady_state(&cli, t_out, structure, *simulate),
        Command::Tune { tc2_factor } => tune(&cli, *tc2_factor),
        Command::Linearize { u1, u2, t_out, steady } => linearize(&cli, *u1, *u2, *t_out, *steady),
        Command::CheckTopology { files } => check_topology(&cli, files),
    };
    match result {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn to_csv<S: AsRef<str>>(header: &[S], rows: &[Vec<String>]) -> String {
    let mut wr = csv::Writer::from_writer(Vec::new());
    wr.write_record(header.iter().map(AsRef::as_ref)).expect("in-memory write");
    for r in rows {
        wr.write_record(r).expect("in-memory write");
    }
    String::from_utf8(wr.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

/// Renders rows as CSV, JSON (array of objects) or an aligned text table.
fn table(format: Format, header: &[&str], rows: &[Vec<String>]) -> String {
    match format {
        Format::Csv => to_csv(header, rows),
        Format::Json => {
            let items: Vec<serde_json::Value> = rows
                .iter()
                .map(|r| {
                    let obj = header
                        .iter()
                        .zip(r)
                        .map(|(h, v)| {
                            let val = v
                                .parse::<f64>()
                                .ok()
                                .and_then(serde_json::Number::from_f64)
                                .map_or_else(|| serde_json::Value::String(v.clone()), serde_json::Value::Number);
                            (h.to_string(), val)
                        })
                        .collect();
                    serde_json::Value::Object(obj)
                })
                .collect();
            serde_json::to_string_pretty(&items).expect("serializable") + "\n"
        }
        Format::Text => {
            let widths: Vec<usize> = (0..header.len())
                .map(|i| {
                    rows.iter()
                        .map(|r| r[i].chars().count())
                        .chain([header[i].chars().count()])
                        .max()
                        .unwrap_or(0)
                })
                .collect();
            let line = |cells: Vec<&str>| {
                let mut s = String::new();
                for (i, c) in cells.iter().enumerate() {
                    let pad = " ".repeat(widths[i] - c.chars().count());
                    if i > 0 {
                        s.push_str("  ");
                    }
                    // numbers right-aligned, text left-aligned
                    if c.parse::<f64>().is_ok() {
                        s.push_str(&pad);
                        s.push_str(c);
                    } else {
                        s.push_str(c);
                        s.push_str(&pad);
                    }
                }
                s.trim_end().to_string() + "\n"
            };
            let mut s = line(header.to_vec());
            for r in rows {
                s.push_str(&line(r.iter().map(String::as_str).collect()));
            }
            s
        }
    }
}

fn resolve_scenario(path: &Path) -> PathBuf {
    if !path.exists() && path.extension().is_none() {
        let with_ext = path.with_extension("toml");
        if with_ext.exists() {
            return with_ext;
        }
    }
    path.to_path_buf()
}

fn simulate(cli: &Cli, scenarios: &[PathBuf]) -> CliResult<String> {
    let loaded: Vec<Scenario> = scenarios
        .iter()
        .map(|p| {
            let path = resolve_scenario(p);
            if !path.exists() {
                return Err(Fail::usage(format!("scenario file `{}` not found", p.display())));
            }
            Ok(Scenario::load(&path)?.with_overrides(cli.dt, cli.t_end)?)
        })
        .collect::<CliResult<_>>()?;
    fs::create_dir_all(&cli.out)
        .map_err(|e| Fail::usage(format!("cannot create `{}`: {e}", cli.out.display())))?;
    let runs: Vec<(Scenario, RunResult)> = loaded
        .into_par_iter()
        .map(|sc| {
            let run = sc.run()?;
            Ok((sc, run))
        })
        .collect::<CliResult<_>>()?;
    let mut out = String::new();
    for (sc, run) in &runs {
        let written = write_run(&cli.out, sc, run)?;
        if cli.format == Format::Text {
            for w in &written {
                writeln!(out, "wrote {}", w.display()).expect("string write");
            }
        }
        out.push_str(&summary(cli.format, sc, run));
    }
    Ok(out)
}

fn create(path: &Path) -> CliResult<fs::File> {
    fs::File::create(path).map_err(|e| Fail::usage(format!("cannot write `{}`: {e}", path.display())))
}

fn write_run(dir: &Path, sc: &Scenario, run: &RunResult) -> CliResult<Vec<PathBuf>> {
    let name = &sc.config.name;
    let channels = sc.csv_channels(run);
    let traj = dir.join(format!("{name}.csv"));
    run.write_csv(create(&traj)?, &channels, sc.config.log_interval)?;
    let events = dir.join(format!("{name}_events.csv"));
    run.write_events_csv(create(&events)?)?;
    let segments = dir.join(format!("{name}_segments.csv"));
    run.write_segments_csv(create(&segments)?, &channels)?;
    Ok(vec![traj, events, segments])
}

fn num(v: f64, digits: usize) -> String {
    let s = format!("{v:.digits$}");
    match s.strip_prefix('-') {
        Some(rest) if rest.chars().all(|c| c == '0' || c == '.') => rest.to_string(),
        _ => s,
    }
}

/// Per-segment terminal values and the winner on every MV.
fn summary(format: Format, sc: &Scenario, run: &RunResult) -> String {
    let channels = sc.csv_channels(run);
    let mut header: Vec<String> = vec!["scenario".into(), "start".into(), "end".into()];
    header.extend(channels.iter().cloned());
    header.extend(run.mv_names.iter().map(|m| format!("winner.{m}")));
    let rows: Vec<Vec<String>> = run
        .segments
        .iter()
        .map(|seg| {
            let mut r = vec![sc.config.name.clone(), num(seg.start, 1), num(seg.end, 1)];
            r.extend(
                channels
                    .iter()
                    .map(|c| num(seg.terminal[run.channel_index(c).expect("csv channel")], 3)),
            );
            r.extend(seg.winners.iter().cloned());
            r
        })
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    table(format, &header, &rows)
}

fn structure_by_name(name: &str) -> CliResult<BarnStructure> {
    Ok(match name {
        "cow2a" => BarnStructure::cow2a(),
        "cow2" => BarnStructure::cow2(),
        "cow3a" => BarnStructure::cow3a(),
        "cow3" => BarnStructure::cow3(),
        other => return Err(Fail::usage(format!("unknown barn structure `{other}`"))),
    })
}

/// Closed-loop barn run starting at the nominal steady state with `T_out`
/// stepped to `t_out` after one step.
fn barn_step_run(structure: &str, t_out: f64, dt: f64, t_end: f64) -> CliResult<RunResult> {
    let text = format!(
        "name = \"steady\"\ndt = {dt:?}\nt_end = {t_end:?}\nlog_interval = {dt:?}\nstats_window = {t_end:?}\n\
         [plant]\nmodel = \"barn\"\nstructure = \"{structure}\"\n\
         [[disturbance]]\nvariable = \"t_out\"\nbreakpoints = [{dt:?}]\nvalues = [0.0, {t_out:?}]\n"
    );
    Ok(Scenario::parse(&text, "steady-state")?.run()?)
}

fn steady_state(cli: &Cli, t_out: &[f64], structure: &str, sim: bool) -> CliResult<String> {
    let s = structure_by_name(structure)?;
    let params = BarnParams::default();
    let points: Vec<f64> = if t_out.is_empty() {
        TABLE_T_OUT.to_vec()
    } else {
        t_out.to_vec()
    };
    let solutions: Vec<SteadyStateSolution> = points
        .iter()
        .map(|&t| solve_bound_limited(t, &params, &s))
        .collect::<Result<_, _>>()?;
    let mut header = vec!["t_out", "T", "c", "u1", "u2", "active", "note"];
    let mut rows: Vec<Vec<String>> = solutions
        .iter()
        .map(|sol| {
            vec![
                num(sol.t_out, 1),
                num(sol.t, 2),
                num(sol.c_ppm, 1),
                num(sol.u1, 2),
                num(sol.u2, 2),
                sol.active_pair_label(),
                if sol.bound_violations.is_empty() {
                    String::new()
                } else {
                    format!("bound-limited: {}", sol.bound_violations.join("; "))
                },
            ]
        })
        .collect();
    let mut mismatches = Vec::new();
    if sim {
        let dt = cli.dt.unwrap_or(1.0);
        let t_end = cli.t_end.unwrap_or(40000.0);
        let runs: Vec<RunResult> = points
            .par_iter()
            .map(|&t| barn_step_run(structure, t, dt, t_end))
            .collect::<CliResult<_>>()?;
        header.extend(["sim_T", "sim_c", "sim_u1", "sim_u2", "agree"]);
        for ((row, sol), run) in rows.iter_mut().zip(&solutions).zip(&runs) {
            let got = ["T", "c", "u1", "u2"].map(|ch| *run.channel(ch).expect("barn channel").last().expect("rows"));
            let want = [sol.t, sol.c_ppm, sol.u1, sol.u2];
            let agree = got.iter().zip(want).zip(TOL).all(|((g, w), tol)| (g - w).abs() <= tol);
            if !agree {
                mismatches.push(sol.t_out);
            }
            row.extend([num(got[0], 2), num(got[1], 1), num(got[2], 2), num(got[3], 2)]);
            row.push(if agree { "yes" } else { "no" }.into());
        }
    }
    let out = table(cli.format, &header, &rows);
    if mismatches.is_empty() {
        Ok(out)
    } else {
        print!("{out}");
        Err(Fail::check(format!(
            "closed-loop runs disagree with the solver at T_out = {mismatches:?}"
        )))
    }
}

fn tune(cli: &Cli, tc2_factor: f64) -> CliResult<String> {
    if !(tc2_factor > 0.0) || !tc2_factor.is_finite() {
        return Err(Fail::usage(format!("--tc2-factor must be positive, got {tc2_factor}")));
    }
    let rows: Vec<Vec<String>> = tuning_table(tc2_factor)
        .iter()
        .map(|r| {
            vec![
                r.name.to_string(),
                r.mv.to_string(),
                r.channel.to_string(),
                format!("{}", r.kc),
                format!("{}", r.tau_i),
                format!("{}", r.setpoint),
                r.unit.to_string(),
            ]
        })
        .collect();
    Ok(table(
        cli.format,
        &["controller", "mv", "measurement", "kc", "tau_i", "setpoint", "unit"],
        &rows,
    ))
}

fn linearize(cli: &Cli, u1: f64, u2: f64, t_out: f64, steady: Option<f64>) -> CliResult<String> {
    let params = BarnParams::default();
    let lp: LinearizedPoint = match steady {
        Some(t) => {
            let sol = solve_bound_limited(t, &params, &BarnStructure::cow3())?;
            linearize_barn(sol.u1, sol.u2, t, &params)?
        }
        None => linearize_barn(u1, u2, t_out, &params)?,
    };
    let rows: Vec<Vec<String>> = [
        ("u1", lp.u1, "%"),
        ("u2", lp.u2, "%"),
        ("t_out", lp.t_out, "°C"),
        ("q", lp.q, "m3/s"),
        ("c", lp.c_ppm, "ppm"),
        ("T", lp.t, "°C"),
        ("tau_c", lp.tau_c, "s"),
        ("tau_T", lp.tau_t, "s"),
        ("k_c_u1", lp.k_c_u1, "ppm/%"),
        ("k_T_u1", lp.k_t_u1, "°C/%"),
        ("k_T_u2", lp.k_t_u2, "°C/%"),
        ("kprime_c_u1", lp.kprime_c_u1(), "ppm/%/s"),
        ("kprime_T_u1", lp.kprime_t_u1(), "°C/%/s"),
        ("kprime_T_u2", lp.kprime_t_u2(), "°C/%/s"),
    ]
    .iter()
    .map(|(k, v, u)| vec![k.to_string(), format!("{v:.6}"), u.to_string()])
    .collect();
    Ok(table(cli.format, &["quantity", "value", "unit"], &rows))
}

fn check_topology(cli: &Cli, files: &[PathBuf]) -> CliResult<String> {
    let mut all: Vec<(String, Vec<RuleReport>)> = Vec::new();
    for f in files {
        let text = fs::read_to_string(f).map_err(|e| Fail::usage(format!("`{}`: {e}", f.display())))?;
        let spec = parse_flowsheet(&text).map_err(|e| Fail::usage(format!("`{}`: {e}", f.display())))?;
        all.push((f.display().to_string(), check_all(&spec)));
    }
    let out = match cli.format {
        Format::Json => {
            let items: Vec<serde_json::Value> = all
                .iter()
                .map(|(file, reports)| serde_json::json!({ "file": file, "reports": reports }))
                .collect();
            serde_json::to_string_pretty(&items).expect("serializable") + "\n"
        }
        Format::Csv => {
            let rows: Vec<Vec<String>> = all
                .iter()
                .flat_map(|(file, reports)| {
                    reports.iter().map(move |r| {
                        vec![
                            file.clone(),
                            r.rule.to_string(),
                            r.severity.to_string(),
                            r.locus.join(";"),
                            r.message.clone(),
                        ]
                    })
                })
                .collect();
            to_csv(&["file", "rule", "severity", "locus", "message"], &rows)
        }
        Format::Text => {
            let mut s = String::new();
            for (file, reports) in &all {
                writeln!(s, "{file}").expect("string write");
                for r in reports {
                    writeln!(s, "  {r}").expect("string write");
                }
            }
            s
        }
    };
    let failing: Vec<&str> = all
        .iter()
        .filter(|(_, r)| has_violations(r))
        .map(|(f, _)| f.as_str())
        .collect();
    if failing.is_empty() {
        Ok(out)
    } else {
        print!("{out}");
        Err(Fail::check(format!("rule violations in {}", failing.join(", "))))
    }
}
