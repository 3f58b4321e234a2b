//! Batch front end behind the `ecoand` binary.
//!
//! Every mode writes `report.json` and one trajectory CSV per solved method
//! into the output directory. Reports carry no timings or paths, and every
//! number is rounded to 12 significant digits, so identical inputs give
//! identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::kinematics::sample_profile;
use crate::oracle::{self, ComparisonReport, GridSpec, OracleError};
use crate::scenario::{Scenario, ScenarioError, Weights};
use crate::solver::{self, CostBreakdown, SolveError, Solution, SolverOptions, StructuralReport};
use crate::traffic::{self, PrecedingInfo, SafetyParams, SafetyViolation, TrafficError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

pub const DEFAULT_CSV_DT: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Joint optimum over all intersections.
    Solve,
    /// Per-intersection chain.
    Baseline,
    /// Both, with the improvement of the joint plan.
    Compare,
    /// Joint optimum checked against the grid DP.
    Oracle,
    /// Rewrite for a preceding vehicle, then solve.
    Adjust,
}

#[derive(Debug, Clone, Parser)]
#[command(name = "ecoand", version, about = "Stop-free speed planning through signalized intersections")]
pub struct Args {
    #[arg(value_enum)]
    pub mode: Mode,
    /// Scenario JSON file.
    #[arg(long)]
    pub scenario: PathBuf,
    /// Preceding-vehicle JSON file (adjust mode).
    #[arg(long)]
    pub preceding: Option<PathBuf>,
    /// Multistart seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// DP time step (s), oracle mode
    #[arg(long)]
    pub grid_dt: Option<f64>,
    /// DP speed step (m/s), oracle mode
    #[arg(long)]
    pub grid_dv: Option<f64>,
    /// Maximum number of window plans tried
    #[arg(long)]
    pub plans_cap: Option<usize>,
    /// Trajectory CSV sampling step (s).
    #[arg(long, default_value_t = DEFAULT_CSV_DT)]
    pub csv_dt: f64,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Traffic(#[from] TrafficError),
    #[error("{0}")]
    Usage(String),
    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Scenario(ScenarioError::Io(_)) | CliError::Io(_) => EXIT_OTHER,
            CliError::Scenario(_) | CliError::Usage(_) => EXIT_VALIDATION,
            CliError::Solve(e) => match e {
                SolveError::Validation(_) | SolveError::Scenario(_) => EXIT_VALIDATION,
                SolveError::Infeasible(_) => EXIT_INFEASIBLE,
                SolveError::NumericalFailure(_) => EXIT_NUMERICAL,
                SolveError::Build(_) => EXIT_OTHER,
            },
            CliError::Oracle(e) => match e {
                OracleError::Validation(_) | OracleError::Scenario(_) | OracleError::Grid(_) => EXIT_VALIDATION,
                OracleError::Infeasible(_) => EXIT_INFEASIBLE,
            },
            CliError::Traffic(e) => match e {
                TrafficError::EmptyWindow { .. } => EXIT_INFEASIBLE,
                TrafficError::Io(_) => EXIT_OTHER,
                _ => EXIT_VALIDATION,
            },
        }
    }
}

/// One solved method.
#[derive(Debug, Clone, Serialize)]
pub struct MethodReport {
    pub method: String,
    pub costs: CostBreakdown,
    pub crossing_times: Vec<f64>,
    pub window_plan: Vec<u32>,
    pub certified: bool,
    pub max_violation: f64,
    pub structure: StructuralReport,
    pub trajectory_csv: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub grid: GridSpec,
    pub cost: f64,
    pub crossing_times: Vec<f64>,
    pub position_quantum: f64,
    pub comparison: ComparisonReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrafficReport {
    pub safety: SafetyParams,
    pub violations: Vec<SafetyViolation>,
    /// Adjusted minus unobstructed first crossing time.
    pub first_crossing_delta: Option<f64>,
    pub unobstructed_crossing_times: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub mode: Mode,
    /// SHA-256 of the scenario in canonical JSON form.
    pub scenario_digest: String,
    pub seed: u64,
    pub weights: Weights,
    pub methods: Vec<MethodReport>,
    /// `(J_seq − J_joint)/J_seq` in percent, when both are present.
    pub improvement_percent: Option<f64>,
    pub oracle: Option<OracleReport>,
    pub traffic: Option<TrafficReport>,
    pub notes: Vec<String>,
}

/// Hex SHA-256 of the canonical scenario JSON.
pub fn scenario_digest(sc: &Scenario) -> String {
    let hash = Sha256::digest(sc.to_json_string().as_bytes());
    hash.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// `x` rounded to `digits` significant digits.
pub fn round_sig(x: f64, digits: usize) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", digits.saturating_sub(1), x).parse().unwrap_or(x)
}

fn round_value(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let r = round_sig(n.as_f64().expect("f64"), 12);
            if let Some(m) = serde_json::Number::from_f64(r) {
                *n = m;
            }
        }
        Value::Array(a) => a.iter_mut().for_each(round_value),
        Value::Object(o) => o.values_mut().for_each(round_value),
        _ => {}
    }
}

/// Pretty JSON with every float at 12 significant digits.
pub fn report_json(report: &RunReport) -> String {
    let mut v = serde_json::to_value(report).expect("report serializes");
    round_value(&mut v);
    let mut s = serde_json::to_string_pretty(&v).expect("value serializes");
    s.push('\n');
    s
}

/// `t,x,v,u` rows every `dt` up to the final crossing.
pub fn trajectory_csv(sol: &Solution, sc: &Scenario, dt: f64) -> String {
    let mut s = String::from("t,x,v,u\n");
    for p in sample_profile(&sol.profile, sc.initial, dt) {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            round_sig(p.t, 12),
            round_sig(p.x, 12),
            round_sig(p.v, 12),
            round_sig(p.u, 12)
        );
    }
    s
}

fn method_report(name: &str, sol: &Solution, sc: &Scenario, csv: &str) -> MethodReport {
    MethodReport {
        method: name.into(),
        costs: sol.costs.clone(),
        crossing_times: sol.crossing_times.clone(),
        window_plan: sol.plan.k.clone(),
        certified: sol.residuals.certified,
        max_violation: sol.residuals.max_violation,
        structure: solver::verify_solution(sol, sc),
        trajectory_csv: csv.into(),
    }
}

struct Output<'a> {
    dir: &'a Path,
    csv_dt: f64,
}

impl Output<'_> {
    fn method(&self, name: &str, sol: &Solution, sc: &Scenario) -> Result<MethodReport, CliError> {
        let file = format!("{name}_trajectory.csv");
        fs::write(self.dir.join(&file), trajectory_csv(sol, sc, self.csv_dt))?;
        Ok(method_report(name, sol, sc, &file))
    }
}

fn solver_options(args: &Args, sc: &Scenario) -> SolverOptions {
    let mut o = SolverOptions {
        seed: args.seed,
        jerk_limit: sc.options.jerk_limit,
        initial_accel: sc.options.initial_accel,
        ..SolverOptions::default()
    };
    if let Some(cap) = args.plans_cap {
        o.plans_cap = cap;
    }
    o
}

/// Runs one mode and writes its files; the report is also returned.
pub fn run(args: &Args) -> Result<RunReport, CliError> {
    if !(args.csv_dt > 0.0) {
        return Err(CliError::Usage(format!("--csv-dt must be positive, got {}", args.csv_dt)));
    }
    let sc = Scenario::from_json_file(&args.scenario)?;
    let opts = solver_options(args, &sc);
    let weights = {
        crate::scenario::validate(&sc).map_err(SolveError::Validation)?;
        sc.resolved_weights()?
    };
    fs::create_dir_all(&args.out)?;
    let out = Output {
        dir: &args.out,
        csv_dt: args.csv_dt,
    };
    let mut report = RunReport {
        mode: args.mode,
        scenario_digest: scenario_digest(&sc),
        seed: args.seed,
        weights,
        methods: Vec::new(),
        improvement_percent: None,
        oracle: None,
        traffic: None,
        notes: Vec::new(),
    };
    match args.mode {
        Mode::Solve => {
            let sol = solver::solve_best(&sc, &opts)?;
            report.methods.push(out.method("joint", &sol, &sc)?);
        }
        Mode::Baseline => {
            let sol = solver::solve_sequential(&sc, &opts)?;
            report.methods.push(out.method("sequential", &sol, &sc)?);
        }
        Mode::Compare => {
            let joint = solver::solve_best(&sc, &opts)?;
            report.methods.push(out.method("joint", &joint, &sc)?);
            match solver::solve_sequential(&sc, &opts) {
                Ok(seq) => {
                    report.methods.push(out.method("sequential", &seq, &sc)?);
                    report.improvement_percent = Some(100.0 * (seq.costs.j - joint.costs.j) / seq.costs.j);
                }
                Err(e) => report.notes.push(format!("sequential: {e}")),
            }
        }
        Mode::Oracle => {
            let mut grid = GridSpec::default();
            if let Some(dt) = args.grid_dt {
                grid.dt = dt;
            }
            if let Some(dv) = args.grid_dv {
                grid.dv = dv;
            }
            let sol = solver::solve_best(&sc, &opts)?;
            report.methods.push(out.method("joint", &sol, &sc)?);
            let osol = oracle::dp_solve(&sc, &grid)?;
            report.oracle = Some(OracleReport {
                grid,
                cost: osol.cost,
                crossing_times: osol.crossing_times.clone(),
                position_quantum: osol.position_quantum,
                comparison: oracle::compare(&sol, &osol),
            });
        }
        Mode::Adjust => {
            let path = args
                .preceding
                .as_ref()
                .ok_or_else(|| CliError::Usage("adjust mode needs --preceding".into()))?;
            let lead = PrecedingInfo::from_json_file(path)?;
            let sp = SafetyParams::from_scenario(&sc);
            let adjusted = traffic::adjust_scenario(&sc, &lead, &sp)?;
            let sol = solver::solve_best(&adjusted, &opts)?;
            report.methods.push(out.method("adjusted", &sol, &adjusted)?);
            let ego = sample_profile(&sol.profile, adjusted.initial, args.csv_dt);
            let violations = traffic::check_safety(&ego, &lead, &sp, args.csv_dt);
            let free = match solver::solve_best(&sc, &opts) {
                Ok(f) => Some(f.crossing_times),
                Err(e) => {
                    report.notes.push(format!("unobstructed: {e}"));
                    None
                }
            };
            report.traffic = Some(TrafficReport {
                safety: sp,
                violations,
                first_crossing_delta: free.as_ref().map(|f| sol.crossing_times[0] - f[0]),
                unobstructed_crossing_times: free,
            });
        }
    }
    fs::write(args.out.join("report.json"), report_json(&report))?;
    Ok(report)
}

/// One line per method: per-segment costs, total, and improvement.
pub fn summary(report: &RunReport) -> String {
    let mut s = String::new();
    for m in &report.methods {
        let parts: Vec<String> = m.costs.per_segment.iter().map(|c| format!("{:.4}", c.j)).collect();
        let _ = writeln!(
            s,
            "{:<10} J_i [{}]  J {:.4}  t {:?}",
            m.method,
            parts.join(", "),
            m.costs.j,
            m.crossing_times.iter().map(|t| round_sig(*t, 6)).collect::<Vec<_>>()
        );
    }
    if let Some(p) = report.improvement_percent {
        let _ = writeln!(s, "improvement {p:.2}%");
    }
    if let Some(o) = &report.oracle {
        let c = &o.comparison;
        let _ = writeln!(
            s,
            "oracle J {:.4}  sandwich {} (allowance {:.4})",
            o.cost,
            if c.sandwich_holds { "holds" } else { "FAILS" },
            c.allowance
        );
    }
    if let Some(t) = &report.traffic {
        let _ = writeln!(s, "safety violations {}", t.violations.len());
    }
    for n in &report.notes {
        let _ = writeln!(s, "note: {n}");
    }
    s
}

/// Parses arguments, runs, prints, and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    match run(&args) {
        Ok(report) => {
            print!("{}", summary(&report));
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_keeps_twelve_digits() {
        assert_eq!(round_sig(0.1731126959123456, 12), 0.173112695912);
        assert_eq!(round_sig(-40.00000000000001, 12), -40.0);
        assert_eq!(round_sig(0.0, 12), 0.0);
    }

    #[test]
    fn digest_ignores_file_formatting() {
        let sc = Scenario::reference_two_light_corridor();
        let again = Scenario::from_json_str(&sc.to_json_string()).unwrap();
        assert_eq!(scenario_digest(&sc), scenario_digest(&again));
        assert_eq!(scenario_digest(&sc).len(), 64);
    }

    #[test]
    fn exit_codes_follow_error_kind() {
        assert_eq!(
            CliError::Solve(SolveError::Infeasible("x".into())).exit_code(),
            EXIT_INFEASIBLE
        );
        assert_eq!(
            CliError::Solve(SolveError::NumericalFailure("x".into())).exit_code(),
            EXIT_NUMERICAL
        );
        assert_eq!(CliError::Solve(SolveError::Validation(vec![])).exit_code(), EXIT_VALIDATION);
    }
}
