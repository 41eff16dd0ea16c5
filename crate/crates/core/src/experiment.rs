//! Controller × extension × internal-disturbance matrix, its reports, and the
//! solver-versus-oracle check.

use std::fmt;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use crate::analytical::AnalyticalPlanner;
use crate::disturbance::DisturbanceSpec;
use crate::domain::{validate, FuelCoefficients, Limits, ScenarioConfig, Trajectory, VehicleState};
use crate::error::{Error, Result};
use crate::executor::{benchmark_episode, run_episode, write_log, EpisodeRecord};
use crate::metrics::{concat_plan_prefixes, evaluate, utility};
use crate::optimal::{self, OptimalPlanner, TrajectoryProblem};
use crate::oracle::{
    dp_min_fuel, exhaustive_min_fuel, quantization_slack, DpGrid, ENUMERATION_GUARD,
};
use crate::planner::Planner;
use crate::stopgo::StopGoPlanner;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ControllerKind {
    StopGo,
    Analytical,
    Optimal,
}

impl ControllerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ControllerKind::StopGo => "stopgo",
            ControllerKind::Analytical => "analytical",
            ControllerKind::Optimal => "optimal",
        }
    }

    pub fn planner(self) -> Box<dyn Planner> {
        match self {
            ControllerKind::StopGo => Box::new(StopGoPlanner),
            ControllerKind::Analytical => Box::new(AnalyticalPlanner::default()),
            ControllerKind::Optimal => Box::new(OptimalPlanner::default()),
        }
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "stopgo" => Ok(ControllerKind::StopGo),
            "analytical" => Ok(ControllerKind::Analytical),
            "optimal" => Ok(ControllerKind::Optimal),
            other => Err(Error::Parse(format!("unknown controller '{other}'"))),
        }
    }
}

/// A named internal disturbance setting.
#[derive(Debug, Clone, PartialEq)]
pub struct InternalLevel {
    pub name: String,
    pub spec: DisturbanceSpec,
}

impl InternalLevel {
    pub fn new(name: &str, spec: DisturbanceSpec) -> Self {
        InternalLevel {
            name: name.to_string(),
            spec,
        }
    }
}

/// Named presets: `none`, `low`, `medium`, `high`.
pub fn level_preset(name: &str) -> Option<InternalLevel> {
    let spec = match name {
        "none" => DisturbanceSpec::none(),
        "low" => DisturbanceSpec {
            actuator_tau: 0.2,
            command_delay_steps: 0,
            accel_noise_sigma: 0.05,
            measurement_noise_sigma_v: 0.02,
        },
        "medium" => DisturbanceSpec {
            actuator_tau: 0.5,
            command_delay_steps: 1,
            accel_noise_sigma: 0.1,
            measurement_noise_sigma_v: 0.05,
        },
        "high" => DisturbanceSpec {
            actuator_tau: 0.8,
            command_delay_steps: 2,
            accel_noise_sigma: 0.2,
            measurement_noise_sigma_v: 0.1,
        },
        _ => return None,
    };
    Some(InternalLevel::new(name, spec))
}

/// The three disturbed presets used by the default matrix.
pub fn default_levels() -> Vec<InternalLevel> {
    ["low", "medium", "high"]
        .iter()
        .filter_map(|n| level_preset(n))
        .collect()
}

#[derive(Debug, Clone)]
pub struct ExperimentMatrix {
    pub controllers: Vec<ControllerKind>,
    pub extensions_s: Vec<f64>,
    pub internal_levels: Vec<InternalLevel>,
    pub repetitions: u32,
    pub base_config: ScenarioConfig,
    pub output_dir: PathBuf,
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
}

impl ExperimentMatrix {
    /// Eco controllers × {0, 2, 4, 6} s × low/medium/high × 5 repetitions.
    pub fn default_with(base_config: ScenarioConfig, output_dir: PathBuf) -> Self {
        ExperimentMatrix {
            controllers: vec![ControllerKind::Analytical, ControllerKind::Optimal],
            extensions_s: vec![0.0, 2.0, 4.0, 6.0],
            internal_levels: default_levels(),
            repetitions: 5,
            base_config,
            output_dir,
            workers: None,
        }
    }

    pub fn check(&self) -> Result<()> {
        let bad = |field, reason: &str| {
            Err(Error::InvalidConfig {
                field,
                reason: reason.into(),
            })
        };
        if self.controllers.is_empty() {
            return bad("controllers", "at least one controller required");
        }
        if self.extensions_s.is_empty() {
            return bad("extensions", "at least one extension required");
        }
        if self
            .extensions_s
            .iter()
            .any(|e| !(e.is_finite() && *e >= 0.0))
        {
            return bad("extensions", "extensions must be finite and >= 0");
        }
        if self.internal_levels.is_empty() {
            return bad("levels", "at least one internal level required");
        }
        if self.repetitions < 1 {
            return bad("repetitions", "must be >= 1");
        }
        validate(self.base_config.clone()).map(|_| ())
    }

    fn cell_config(
        &self,
        extension: f64,
        level: &InternalLevel,
        repetition: u32,
    ) -> ScenarioConfig {
        let mut cfg = self.base_config.clone();
        cfg.signal.extension_s = extension;
        cfg.disturbance = level.spec;
        cfg.seed = self.base_config.seed + repetition as u64;
        cfg
    }
}

/// One line of results.csv. The first seven columns are the scored
/// quantities; the rest identify the run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRow {
    pub scenario: String,
    pub method: String,
    #[serde(rename = "U_J")]
    pub u_j: f64,
    #[serde(rename = "U_JB")]
    pub u_jb: f64,
    #[serde(rename = "U_Jstar")]
    pub u_jstar: f64,
    #[serde(rename = "RMSE_m")]
    pub rmse_m: f64,
    pub indicator: f64,
    pub label: String,
    pub extension_s: f64,
    pub level: String,
    pub seed: u64,
    pub pass_time_s: f64,
    pub energy_l: f64,
    pub status: String,
}

impl RunRow {
    pub fn ok(&self) -> bool {
        self.status == "ok"
    }
}

/// Everything a matrix run produced. Rows are sorted; `records[i]` belongs
/// to `rows[i]` (benchmark rows carry no record).
pub struct MatrixOutcome {
    pub rows: Vec<RunRow>,
    pub records: Vec<Option<EpisodeRecord>>,
}

impl MatrixOutcome {
    pub fn all_ok(&self) -> bool {
        self.rows.iter().all(RunRow::ok)
    }

    /// Eco rows only.
    pub fn data_rows(&self) -> impl Iterator<Item = &RunRow> {
        self.rows.iter().filter(|r| r.method != "benchmark")
    }
}

fn scenario_name(extension: f64, level: &str) -> String {
    format!("ext{extension}s_{level}")
}

fn label(extension: f64) -> &'static str {
    if extension == 0.0 {
        "R"
    } else {
        "G"
    }
}

#[derive(Debug, Clone)]
struct Cell {
    controller: ControllerKind,
    ext_idx: usize,
    level_idx: usize,
    repetition: u32,
}

fn run_cell(m: &ExperimentMatrix, cell: &Cell) -> (RunRow, Option<EpisodeRecord>) {
    let extension = m.extensions_s[cell.ext_idx];
    let level = &m.internal_levels[cell.level_idx];
    let cfg = m.cell_config(extension, level, cell.repetition);
    let mut row = RunRow {
        scenario: scenario_name(extension, &level.name),
        method: cell.controller.to_string(),
        u_j: f64::NAN,
        u_jb: f64::NAN,
        u_jstar: f64::NAN,
        rmse_m: f64::NAN,
        indicator: f64::NAN,
        label: label(extension).to_string(),
        extension_s: extension,
        level: level.name.clone(),
        seed: cfg.seed,
        pass_time_s: f64::NAN,
        energy_l: f64::NAN,
        status: "ok".into(),
    };
    let mut planner = cell.controller.planner();
    let record = match run_episode(&cfg, planner.as_mut()) {
        Ok(r) => r,
        Err(e) => {
            warn!("{} {} seed {}: {e}", row.method, row.scenario, row.seed);
            row.status = format!("failed: {e}");
            return (row, None);
        }
    };
    let scored =
        concat_plan_prefixes(&record.plan_segments, cfg.replan_interval).and_then(|concat| {
            evaluate(
                &record.executed,
                &concat,
                &record.benchmark,
                record.pass_time,
                &cfg.weights,
                &cfg.fuel,
                cfg.pass_position(),
            )
        });
    match scored {
        Ok(rep) => {
            row.u_j = rep.u_executed;
            row.u_jb = rep.u_benchmark;
            row.u_jstar = rep.u_planned_concat;
            row.rmse_m = rep.rmse_m;
            row.indicator = rep.indicator;
            row.pass_time_s = rep.pass_time_s;
            row.energy_l = rep.energy_l;
        }
        Err(e) => {
            row.status = format!("failed: {e}");
            row.pass_time_s = record.pass_time;
        }
    }
    (row, Some(record))
}

fn benchmark_row(m: &ExperimentMatrix, extension: f64) -> RunRow {
    let mut cfg = m.base_config.clone();
    cfg.signal.extension_s = extension;
    let mut row = RunRow {
        scenario: scenario_name(extension, "benchmark"),
        method: "benchmark".into(),
        u_j: f64::NAN,
        u_jb: f64::NAN,
        u_jstar: f64::NAN,
        rmse_m: 0.0,
        indicator: f64::NAN,
        label: label(extension).to_string(),
        extension_s: extension,
        level: "none".into(),
        seed: cfg.seed,
        pass_time_s: f64::NAN,
        energy_l: f64::NAN,
        status: "ok".into(),
    };
    match benchmark_episode(&cfg) {
        Ok(traj) => {
            let u = utility(&traj, &cfg.weights, &cfg.fuel, cfg.pass_position());
            row.u_j = u;
            row.u_jb = u;
            row.pass_time_s = pass_time(&traj, cfg.pass_position());
            row.energy_l = crate::metrics::energy(&traj, &cfg.fuel);
        }
        Err(e) => row.status = format!("failed: {e}"),
    }
    row
}

fn pass_time(traj: &Trajectory, pass_x: f64) -> f64 {
    traj.states
        .iter()
        .find(|s| s.x >= pass_x)
        .map_or(f64::NAN, |s| s.t)
}

/// Runs every cell. Cells execute concurrently; the output order is fixed
/// (controller, extension, level, repetition), with one benchmark row per
/// extension first.
pub fn run_matrix(matrix: &ExperimentMatrix) -> Result<MatrixOutcome> {
    matrix.check()?;
    let mut cells = Vec::new();
    for &controller in &matrix.controllers {
        for ext_idx in 0..matrix.extensions_s.len() {
            for level_idx in 0..matrix.internal_levels.len() {
                for repetition in 0..matrix.repetitions {
                    cells.push(Cell {
                        controller,
                        ext_idx,
                        level_idx,
                        repetition,
                    });
                }
            }
        }
    }
    info!("running {} episodes", cells.len());
    let work = || -> Vec<(RunRow, Option<EpisodeRecord>)> {
        cells.par_iter().map(|c| run_cell(matrix, c)).collect()
    };
    let results = match matrix.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::InvalidConfig {
                field: "workers",
                reason: e.to_string(),
            })?
            .install(work),
        None => work(),
    };
    let mut rows = Vec::with_capacity(results.len() + matrix.extensions_s.len());
    let mut records = Vec::with_capacity(rows.capacity());
    for &e in &matrix.extensions_s {
        rows.push(benchmark_row(matrix, e));
        records.push(None);
    }
    for (row, rec) in results {
        rows.push(row);
        records.push(rec);
    }
    Ok(MatrixOutcome { rows, records })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub method: String,
    pub extension_s: f64,
    pub level: String,
    pub label: String,
    pub runs: usize,
    pub failed: usize,
    pub indicator_mean: f64,
    pub indicator_std: f64,
    #[serde(rename = "RMSE_mean")]
    pub rmse_mean: f64,
    #[serde(rename = "RMSE_std")]
    pub rmse_std: f64,
    #[serde(rename = "U_J_mean")]
    pub u_j_mean: f64,
    #[serde(rename = "U_JB_mean")]
    pub u_jb_mean: f64,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Per-cell means and sample standard deviations over repetitions, one row
/// per (method, extension, level) in first-seen order.
pub fn summarize(rows: &[RunRow]) -> Vec<SummaryRow> {
    let mut keys: Vec<(String, f64, String)> = Vec::new();
    for r in rows.iter().filter(|r| r.method != "benchmark") {
        let key = (r.method.clone(), r.extension_s, r.level.clone());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(method, extension_s, level)| {
            let cell: Vec<&RunRow> = rows
                .iter()
                .filter(|r| r.method == method && r.extension_s == extension_s && r.level == level)
                .collect();
            let ok: Vec<&&RunRow> = cell.iter().filter(|r| r.ok()).collect();
            let pick = |f: fn(&RunRow) -> f64| ok.iter().map(|r| f(r)).collect::<Vec<_>>();
            let (indicator_mean, indicator_std) = mean_std(&pick(|r| r.indicator));
            let (rmse_mean, rmse_std) = mean_std(&pick(|r| r.rmse_m));
            SummaryRow {
                label: label(extension_s).to_string(),
                runs: cell.len(),
                failed: cell.len() - ok.len(),
                indicator_mean,
                indicator_std,
                rmse_mean,
                rmse_std,
                u_j_mean: mean_std(&pick(|r| r.u_j)).0,
                u_jb_mean: mean_std(&pick(|r| r.u_jb)).0,
                method,
                extension_s,
                level,
            }
        })
        .collect()
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `results.csv`, `summary.csv` and `logs/<run>.jsonl` under `dir`.
pub fn emit_report(outcome: &MatrixOutcome, dir: &Path) -> Result<()> {
    if outcome.rows.is_empty() {
        return Err(Error::EmptyReport);
    }
    let logs = dir.join("logs");
    fs::create_dir_all(&logs)?;
    write_csv(&dir.join("results.csv"), &outcome.rows)?;
    write_csv(&dir.join("summary.csv"), &summarize(&outcome.rows))?;
    for (row, rec) in outcome.rows.iter().zip(&outcome.records) {
        if let Some(rec) = rec {
            let name = format!("{}_{}_seed{}.jsonl", row.method, row.scenario, row.seed);
            write_log(rec, BufWriter::new(File::create(logs.join(name))?))?;
        }
    }
    Ok(())
}

/// One solver-versus-oracle comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleComparison {
    pub n_steps: usize,
    pub solver_objective: f64,
    pub dp_objective: f64,
    /// `None` when the instance is beyond the enumeration guard.
    pub exhaustive_objective: Option<f64>,
    pub slack: f64,
    pub solver_converged: bool,
}

impl OracleComparison {
    pub fn solver_within_bound(&self) -> bool {
        self.solver_converged && self.solver_objective <= self.dp_objective * 1.05 + self.slack
    }

    pub fn oracles_agree(&self) -> bool {
        self.exhaustive_objective
            .is_none_or(|e| e == self.dp_objective)
    }
}

/// Five toy instances of `steps` steps with dt = 1 s on a 0.25 m × 0.25 m/s
/// lattice. Each goal is the endpoint of a lattice acceleration pattern that
/// starts with `a = 0`, so both the lattice and the solver can reach it.
pub fn oracle_instances(steps: usize) -> Vec<(TrajectoryProblem, DpGrid)> {
    let last = steps.saturating_sub(1);
    let patterns: [(f64, Vec<(usize, f64)>); 5] = [
        (5.0, vec![]),
        (5.0, vec![(1, -1.5), (last, 1.5)]),
        (4.0, vec![(1, 1.5)]),
        (6.0, vec![(1, -1.5), (2, -1.5)]),
        (3.0, vec![(1, 1.5), (steps / 2, 1.5)]),
    ];
    patterns
        .into_iter()
        .map(|(v0, kicks)| {
            let mut accels = vec![0.0; steps];
            for (k, a) in kicks {
                if let Some(slot) = accels.get_mut(k).filter(|_| k > 0) {
                    *slot += a;
                }
            }
            let (mut x, mut v) = (0.0, v0);
            for a in &accels {
                (x, v) = (x + v + 0.5 * a, v + a);
            }
            let state = VehicleState::new(0.0, 0.0, v0, 0.0);
            let limits = Limits {
                j_min: -100.0,
                j_max: 100.0,
                ..Limits::default()
            };
            let problem = optimal::build(
                &state,
                steps as f64,
                v,
                x,
                &limits,
                &FuelCoefficients::default(),
                1.0,
            )
            .expect("toy instances have at least two steps");
            let grid = DpGrid::covering(&problem, 0.25, 0.25, vec![-3.0, -1.5, 0.0, 1.5, 3.0]);
            (problem, grid)
        })
        .collect()
}

pub fn oracle_check(steps: usize) -> Result<Vec<OracleComparison>> {
    oracle_instances(steps)
        .into_iter()
        .map(|(problem, grid)| {
            let (_, report) = optimal::solve(&problem, None)?;
            let (dp, _) = dp_min_fuel(&problem, &grid)?;
            let sequences = (grid.accel_options.len() as f64).powi(problem.n_steps as i32);
            let exhaustive = if sequences <= ENUMERATION_GUARD as f64 {
                Some(exhaustive_min_fuel(&problem, &grid)?.0)
            } else {
                None
            };
            Ok(OracleComparison {
                n_steps: problem.n_steps,
                solver_objective: report.objective,
                dp_objective: dp,
                exhaustive_objective: exhaustive,
                slack: quantization_slack(&problem, &grid),
                solver_converged: report.converged,
            })
        })
        .collect()
}
