//! The `simulate`, `optimize` and `optimize-budget` pipelines.
//!
//! Each command writes into `out_dir`:
//!
//! - `path_<k>.csv`: one row per grid point. Columns `t,S,I,C,A,E`, plus
//!   `u,p1..p5,q1..q5` for the optimizing commands.
//! - `ensemble.csv`: `t` followed by `mean_<col>,var_<col>` for every other
//!   per-path column.
//! - `run.json`: run summary, versioned by `schema_version`.
//!
//! Floats are written with 17 significant digits so reruns with the same
//! configuration and seed produce byte-identical CSV files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::budget::{self, BudgetKind, MultiplierResult};
use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::forward::{StateTrajectory, TimeGrid};
use crate::model::{CostWeights, ModelParams, StateVector};
use crate::montecarlo::{ensemble, make_paths, simulate_paths, sweep_paths, EnsembleStats};
use crate::sweep::{SweepConfig, SweepResult};

pub const SCHEMA_VERSION: u32 = 1;

pub const STATE_COLUMNS: [&str; 5] = ["S", "I", "C", "A", "E"];
pub const CONTROL_COLUMNS: [&str; 11] =
    ["u", "p1", "p2", "p3", "p4", "p5", "q1", "q2", "q3", "q4", "q5"];

/// Exit status for runs that finished but left a sweep unconverged.
pub const EXIT_NOT_CONVERGED: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    Optimize,
    OptimizeBudget,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub command: Command,
    pub master_seed: u64,
    pub n_paths: usize,
    pub t_end: f64,
    pub n_steps: usize,
    pub dt: f64,
    pub params: ModelParams,
    pub weights: CostWeights,
    pub x0: StateVector,
    pub integrity: Integrity,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixed_control: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget: Option<BudgetSummary>,
    pub files: Vec<String>,
}

impl RunSummary {
    /// 0 on success, [`EXIT_NOT_CONVERGED`] if any sweep stopped at `max_iters`.
    pub fn exit_code(&self) -> i32 {
        match &self.sweep {
            Some(s) if !s.all_converged => EXIT_NOT_CONVERGED,
            _ => 0,
        }
    }
}

/// Positivity and population-bound diagnostics of the forward paths.
#[derive(Debug, Clone, Serialize)]
pub struct Integrity {
    pub clamp_events: Vec<usize>,
    /// Clamped coordinate-steps over all coordinate-steps.
    pub clamp_fraction: f64,
    pub all_nonnegative: bool,
    pub max_total: Vec<f64>,
    /// `max(N(0), Λ/μ)`.
    pub population_bound: f64,
    /// Every path stays within 5% of `population_bound`.
    pub population_bound_ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PathSweep {
    pub iterations: usize,
    pub final_residual: f64,
    pub converged: bool,
    pub performance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub config: SweepConfig,
    pub paths: Vec<PathSweep>,
    pub all_converged: bool,
    /// Monte Carlo estimate of the performance functional.
    pub mean_performance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BudgetSummary {
    pub kind: BudgetKind,
    pub cap: f64,
    pub cost_rate: f64,
    #[serde(flatten)]
    pub result: MultiplierResult,
}

fn integrity(trajs: &[&StateTrajectory], params: &ModelParams, x0: &StateVector, grid: &TimeGrid) -> Integrity {
    let clamp_events: Vec<usize> = trajs.iter().map(|t| t.clamp_events).collect();
    let coordinate_steps = (trajs.len() * grid.n_steps * 5) as f64;
    let max_total: Vec<f64> = trajs.iter().map(|t| t.max_total()).collect();
    let population_bound = if params.mu > 0.0 {
        x0.total().max(params.lambda_recruit / params.mu)
    } else {
        f64::INFINITY
    };
    Integrity {
        clamp_fraction: clamp_events.iter().sum::<usize>() as f64 / coordinate_steps,
        clamp_events,
        all_nonnegative: trajs.iter().all(|t| t.states.iter().all(StateVector::is_nonnegative)),
        population_bound_ok: max_total.iter().all(|&m| m <= 1.05 * population_bound),
        max_total,
        population_bound,
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn write_rows(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<f64>>) -> Result<()> {
    let mut out = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(out, "{}", header.join(",")).map_err(io)?;
    for row in rows {
        let line: Vec<String> = row.into_iter().map(fmt).collect();
        writeln!(out, "{}", line.join(",")).map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Per-grid-point rows without the leading time column.
fn simulate_series(traj: &StateTrajectory) -> Vec<f64> {
    traj.states.iter().flat_map(|x| x.to_array()).collect()
}

fn sweep_series(r: &SweepResult) -> Vec<f64> {
    let mut out = Vec::with_capacity(r.xtraj.states.len() * 16);
    for ((x, &u), a) in r.xtraj.states.iter().zip(r.control.values()).zip(&r.adjtraj.states) {
        out.extend(x.to_array());
        out.push(u);
        out.extend(a.p);
        out.extend(a.q);
    }
    out
}

fn columns(with_control: bool) -> Vec<&'static str> {
    let mut cols: Vec<&str> = STATE_COLUMNS.to_vec();
    if with_control {
        cols.extend(CONTROL_COLUMNS);
    }
    cols
}

/// Writes `path_<k>.csv` for every series and `ensemble.csv`; returns file names.
fn write_outputs(
    out_dir: &Path,
    grid: &TimeGrid,
    cols: &[&str],
    series: &[Vec<f64>],
    stats: &EnsembleStats,
) -> Result<Vec<String>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let width = cols.len();
    let mut header = vec!["t".to_string()];
    header.extend(cols.iter().map(|c| c.to_string()));
    let mut files = Vec::new();
    for (k, s) in series.iter().enumerate() {
        let name = format!("path_{k}.csv");
        let rows = grid.times().zip(s.chunks(width)).map(|(t, row)| {
            let mut r = Vec::with_capacity(width + 1);
            r.push(t);
            r.extend_from_slice(row);
            r
        });
        write_rows(&out_dir.join(&name), &header, rows)?;
        files.push(name);
    }

    let mut header = vec!["t".to_string()];
    for c in cols {
        header.push(format!("mean_{c}"));
        header.push(format!("var_{c}"));
    }
    let rows = grid.times().enumerate().map(|(k, t)| {
        let mut r = Vec::with_capacity(2 * width + 1);
        r.push(t);
        for j in 0..width {
            r.push(stats.mean[k * width + j]);
            r.push(stats.variance[k * width + j]);
        }
        r
    });
    write_rows(&out_dir.join("ensemble.csv"), &header, rows)?;
    files.push("ensemble.csv".to_string());
    files.push("run.json".to_string());
    Ok(files)
}

fn write_summary(out_dir: &Path, summary: &RunSummary) -> Result<PathBuf> {
    let path = out_dir.join("run.json");
    let mut out = create(&path)?;
    serde_json::to_writer_pretty(&mut out, summary)?;
    writeln!(out).and_then(|_| out.flush()).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn base_summary(cfg: &ScenarioConfig, command: Command, grid: &TimeGrid, integrity: Integrity) -> RunSummary {
    RunSummary {
        schema_version: SCHEMA_VERSION,
        command,
        master_seed: cfg.seed,
        n_paths: cfg.n_paths,
        t_end: grid.t_end,
        n_steps: grid.n_steps,
        dt: grid.dt(),
        params: cfg.params(),
        weights: cfg.weights(),
        x0: cfg.x0,
        integrity,
        fixed_control: None,
        sweep: None,
        budget: None,
        files: Vec::new(),
    }
}

fn sweep_summary(cfg: &SweepConfig, sweeps: &[SweepResult]) -> SweepSummary {
    let paths: Vec<PathSweep> = sweeps
        .iter()
        .map(|r| PathSweep {
            iterations: r.iterations,
            final_residual: r.final_residual,
            converged: r.converged,
            performance: r.cost,
        })
        .collect();
    SweepSummary {
        config: *cfg,
        all_converged: paths.iter().all(|p| p.converged),
        mean_performance: paths.iter().map(|p| p.performance).sum::<f64>() / paths.len() as f64,
        paths,
    }
}

/// Forward simulation under the fixed control `cfg.control` and baseline `psi`.
pub fn cmd_simulate(cfg: &ScenarioConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let params = cfg.params();
    let paths = make_paths(cfg.seed, cfg.n_paths, &grid)?;
    let trajs = simulate_paths(&cfg.fixed_control()?, &paths, &cfg.x0, &grid, &params)?;

    let series: Vec<Vec<f64>> = trajs.iter().map(simulate_series).collect();
    let stats = ensemble(&series, cfg.seed)?;
    let files = write_outputs(&cfg.out_dir, &grid, &columns(false), &series, &stats)?;

    let refs: Vec<&StateTrajectory> = trajs.iter().collect();
    let mut summary = base_summary(cfg, Command::Simulate, &grid, integrity(&refs, &params, &cfg.x0, &grid));
    summary.fixed_control = Some(cfg.control);
    summary.files = files;
    write_summary(&cfg.out_dir, &summary)?;
    Ok(summary)
}

fn finish_sweeps(
    cfg: &ScenarioConfig,
    command: Command,
    grid: &TimeGrid,
    sweeps: &[SweepResult],
    budget: Option<BudgetSummary>,
) -> Result<RunSummary> {
    let params = cfg.params();
    let series: Vec<Vec<f64>> = sweeps.iter().map(sweep_series).collect();
    let stats = ensemble(&series, cfg.seed)?;
    let files = write_outputs(&cfg.out_dir, grid, &columns(true), &series, &stats)?;
    let refs: Vec<&StateTrajectory> = sweeps.iter().map(|r| &r.xtraj).collect();
    let mut summary = base_summary(cfg, command, grid, integrity(&refs, &params, &cfg.x0, grid));
    summary.sweep = Some(sweep_summary(&cfg.sweep, sweeps));
    summary.budget = budget;
    summary.files = files;
    write_summary(&cfg.out_dir, &summary)?;
    Ok(summary)
}

/// Unconstrained forward–backward sweep on every path.
pub fn cmd_optimize(cfg: &ScenarioConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let paths = make_paths(cfg.seed, cfg.n_paths, &grid)?;
    let cost = vec![cfg.budget_cost; grid.n_points()];
    let sweeps = sweep_paths(
        &cfg.x0,
        &grid,
        &cfg.params(),
        &cfg.weights(),
        &paths,
        &cfg.sweep,
        0.0,
        &cost,
    )?;
    finish_sweeps(cfg, Command::Optimize, &grid, &sweeps, None)
}

/// Budget-constrained sweep; `budget_kind` must be `type1` or `type2`.
pub fn cmd_optimize_budget(cfg: &ScenarioConfig) -> Result<RunSummary> {
    cfg.validate()?;
    if cfg.budget_kind == BudgetKind::None {
        return Err(Error::config("budget_kind", "optimize-budget needs type1 or type2"));
    }
    let grid = cfg.grid()?;
    let spec = cfg.budget()?;
    let paths = make_paths(cfg.seed, cfg.n_paths, &grid)?;
    let outcome = budget::solve(
        &cfg.x0,
        &grid,
        &cfg.params(),
        &cfg.weights(),
        &paths,
        &cfg.sweep,
        &spec,
    )?;
    let summary = BudgetSummary {
        kind: spec.kind,
        cap: spec.cap,
        cost_rate: cfg.budget_cost,
        result: outcome.multipliers,
    };
    finish_sweeps(cfg, Command::OptimizeBudget, &grid, &outcome.sweeps, Some(summary))
}

pub fn run(command: Command, cfg: &ScenarioConfig) -> Result<RunSummary> {
    match command {
        Command::Simulate => cmd_simulate(cfg),
        Command::Optimize => cmd_optimize(cfg),
        Command::OptimizeBudget => cmd_optimize_budget(cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(dir: &Path) -> ScenarioConfig {
        ScenarioConfig {
            n_steps: 500,
            t_end: 5.0,
            n_paths: 3,
            out_dir: dir.to_path_buf(),
            ..Default::default()
        }
    }

    #[test]
    fn simulate_writes_expected_files() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small(dir.path());
        let s = cmd_simulate(&cfg).unwrap();
        assert_eq!(s.files, vec!["path_0.csv", "path_1.csv", "path_2.csv", "ensemble.csv", "run.json"]);
        let body = std::fs::read_to_string(dir.path().join("path_1.csv")).unwrap();
        let mut lines = body.lines();
        assert_eq!(lines.next(), Some("t,S,I,C,A,E"));
        assert_eq!(lines.count(), 501);
        let ens = std::fs::read_to_string(dir.path().join("ensemble.csv")).unwrap();
        assert!(ens.starts_with("t,mean_S,var_S,mean_I,var_I,"));
        let json: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("run.json")).unwrap()).unwrap();
        assert_eq!(json["schema_version"], 1);
        assert_eq!(json["command"], "simulate");
        assert_eq!(s.exit_code(), 0);
    }

    #[test]
    fn optimize_columns() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small(dir.path());
        let s = cmd_optimize(&cfg).unwrap();
        let body = std::fs::read_to_string(dir.path().join("path_0.csv")).unwrap();
        assert_eq!(
            body.lines().next(),
            Some("t,S,I,C,A,E,u,p1,p2,p3,p4,p5,q1,q2,q3,q4,q5")
        );
        assert!(s.sweep.unwrap().all_converged);
    }

    #[test]
    fn float_format_has_17_significant_digits() {
        assert_eq!(fmt(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt(25.0), "2.5000000000000000e1");
        assert_eq!("1.0000000000000001e-1".parse::<f64>().unwrap(), 0.1);
    }

    #[test]
    fn budget_command_requires_kind() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small(dir.path());
        assert!(matches!(cmd_optimize_budget(&cfg), Err(Error::Config { .. })));
    }

    #[test]
    fn unconverged_run_maps_to_exit_three() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(dir.path());
        cfg.sweep.max_iters = 2;
        let s = cmd_optimize(&cfg).unwrap();
        assert_eq!(s.exit_code(), EXIT_NOT_CONVERGED);
        assert!(dir.path().join("run.json").exists());
    }
}
