//! Budget-constrained control via Lagrange multipliers.
//!
//! The treatment budget of a path is `∫ S(t) u(t) c(t) dt`. A Type I cap bounds
//! its expectation and is enforced by one deterministic multiplier shared by
//! all paths; a Type II cap bounds it on every path and is enforced by one
//! multiplier per path. In both cases the multiplier is found by bracketing
//! and bisection on the budget of the λ-penalised converged sweep, with the
//! Brownian paths frozen across evaluations.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::forward::{BrownianPath, ControlPath, StateTrajectory, TimeGrid};
use crate::model::{CostWeights, ModelParams, StateVector};
use crate::montecarlo::sweep_paths;
use crate::sweep::{integrate, run_sweep, SweepConfig, SweepResult};

const MAX_DOUBLINGS: usize = 60;
const MAX_BISECTIONS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BudgetKind {
    None,
    #[serde(rename = "type1")]
    TypeI,
    #[serde(rename = "type2")]
    TypeII,
}

impl std::str::FromStr for BudgetKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(BudgetKind::None),
            "type1" | "typei" | "i" => Ok(BudgetKind::TypeI),
            "type2" | "typeii" | "ii" => Ok(BudgetKind::TypeII),
            other => Err(format!("unknown budget kind `{other}` (none, type1, type2)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BudgetSpec {
    pub kind: BudgetKind,
    /// Cost rate `c(t_k)` per treated individual-year at every grid point.
    pub cost: Vec<f64>,
    pub cap: f64,
    pub tol_rel: f64,
    /// First upper bracket tried for the multiplier.
    pub lambda_max0: f64,
}

impl BudgetSpec {
    pub fn constant_cost(kind: BudgetKind, cost_rate: f64, cap: f64, grid: &TimeGrid) -> Self {
        Self {
            kind,
            cost: vec![cost_rate; grid.n_points()],
            cap,
            tol_rel: 0.01,
            lambda_max0: 1.0,
        }
    }

    pub fn validate(&self, grid: &TimeGrid) -> Result<()> {
        if !(self.cap >= 0.0 && self.cap.is_finite()) {
            return Err(Error::config("budget_cap", format!("must be finite and >= 0, got {}", self.cap)));
        }
        if self.cost.len() != grid.n_points() {
            return Err(Error::Shape {
                what: "budget cost samples",
                expected: grid.n_points(),
                got: self.cost.len(),
            });
        }
        if let Some(bad) = self.cost.iter().find(|c| !(**c >= 0.0 && c.is_finite())) {
            return Err(Error::config("budget_cost", format!("must be finite and >= 0, got {bad}")));
        }
        if !(self.tol_rel > 0.0 && self.tol_rel.is_finite()) {
            return Err(Error::config("budget_tol", format!("must be > 0, got {}", self.tol_rel)));
        }
        if !(self.lambda_max0 > 0.0 && self.lambda_max0.is_finite()) {
            return Err(Error::config("lambda_max0", format!("must be > 0, got {}", self.lambda_max0)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Multiplier {
    Deterministic(f64),
    PerPath(Vec<f64>),
}

impl Multiplier {
    pub fn for_path(&self, k: usize) -> f64 {
        match self {
            Multiplier::Deterministic(l) => *l,
            Multiplier::PerPath(v) => v[k],
        }
    }

    pub fn values(&self) -> Vec<f64> {
        match self {
            Multiplier::Deterministic(l) => vec![*l],
            Multiplier::PerPath(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MultiplierResult {
    pub multiplier: Multiplier,
    /// Whether the cap binds: aggregate for Type I, per path for Type II.
    pub binding: Vec<bool>,
    /// Budget realised on each path.
    pub path_budgets: Vec<f64>,
    pub expected_budget: f64,
    /// `|budget − cap| / cap` where the multiplier is positive, positive
    /// excess over the cap otherwise; one entry per multiplier.
    pub residual: Vec<f64>,
    /// Raw complementary-slackness products `λ · (budget − cap)`.
    pub slackness: Vec<f64>,
    /// Number of budget evaluations (each a full sweep over the paths involved).
    pub evaluations: usize,
}

#[derive(Debug, Clone)]
pub struct BudgetOutcome {
    pub multipliers: MultiplierResult,
    pub sweeps: Vec<SweepResult>,
}

/// Treatment budget `∫ S u c dt` of one path (trapezoidal).
pub fn budget_functional(xtraj: &StateTrajectory, u: &ControlPath, cost: &[f64], grid: &TimeGrid) -> f64 {
    let integrand: Vec<f64> = xtraj
        .states
        .iter()
        .zip(u.values())
        .zip(cost)
        .map(|((x, &uk), &c)| x.s * uk * c)
        .collect();
    integrate(&integrand, grid)
}

/// Outcome of a scalar multiplier search.
#[derive(Debug, Clone)]
pub struct MultiplierSearch<T> {
    pub lambda: f64,
    pub budget: f64,
    pub binding: bool,
    pub evaluations: usize,
    pub payload: T,
}

/// Finds `λ ≥ 0` with `g(λ) ≤ cap` and, when the cap binds,
/// `|g(λ) − cap| ≤ tol_rel · cap`. `g` returns the budget at `λ` together with
/// whatever the caller wants to keep for the accepted multiplier.
///
/// Returns `λ = 0` if the unpenalised budget already fits. Otherwise doubles
/// the upper bracket from `lambda_max0` until it is feasible and bisects,
/// returning the feasible end of the bracket if the tolerance is not met
/// within the step budget.
pub fn search_multiplier<T, G>(mut g: G, cap: f64, tol_rel: f64, lambda_max0: f64) -> Result<MultiplierSearch<T>>
where
    G: FnMut(f64) -> Result<(f64, T)>,
{
    let mut evaluations = 1;
    let (g0, payload0) = g(0.0)?;
    if g0 <= cap {
        return Ok(MultiplierSearch {
            lambda: 0.0,
            budget: g0,
            binding: false,
            evaluations,
            payload: payload0,
        });
    }
    let within = |v: f64| (v - cap).abs() <= tol_rel * cap;
    // Budgets this close are treated as equal when checking monotonicity.
    let slack = 0.1 * tol_rel * cap.max(f64::MIN_POSITIVE);

    let (mut lo, mut g_lo) = (0.0, g0);
    let mut hi = lambda_max0;
    let mut doublings = 0;
    let (mut g_hi, mut best) = loop {
        let (v, payload) = g(hi)?;
        evaluations += 1;
        if v > g_lo + slack {
            return Err(Error::NonMonotoneBudget {
                lambda_lo: lo,
                budget_lo: g_lo,
                lambda_hi: hi,
                budget_hi: v,
            });
        }
        if v <= cap {
            break (v, payload);
        }
        doublings += 1;
        if doublings >= MAX_DOUBLINGS {
            return Err(Error::InfeasibleBudget {
                cap,
                budget: v,
                lambda: hi,
                doublings,
            });
        }
        lo = hi;
        g_lo = v;
        hi *= 2.0;
    };

    let mut lambda = hi;
    if !within(g_hi) {
        for _ in 0..MAX_BISECTIONS {
            let mid = 0.5 * (lo + hi);
            let (v, payload) = g(mid)?;
            evaluations += 1;
            if v > g_lo + slack || v + slack < g_hi {
                return Err(Error::NonMonotoneBudget {
                    lambda_lo: lo,
                    budget_lo: g_lo,
                    lambda_hi: hi,
                    budget_hi: g_hi,
                });
            }
            if within(v) {
                lambda = mid;
                g_hi = v;
                best = payload;
                break;
            }
            if v > cap {
                lo = mid;
                g_lo = v;
            } else {
                hi = mid;
                g_hi = v;
                lambda = mid;
                best = payload;
            }
        }
    }
    Ok(MultiplierSearch {
        lambda,
        budget: g_hi,
        binding: true,
        evaluations,
        payload: best,
    })
}

/// Complementary-slackness residual: `|budget − cap| / cap` for a positive
/// multiplier, relative excess over the cap for a zero one.
pub fn relative_residual(lambda: f64, budget: f64, cap: f64) -> f64 {
    let gap = if lambda > 0.0 {
        (budget - cap).abs()
    } else {
        (budget - cap).max(0.0)
    };
    if gap == 0.0 {
        0.0
    } else {
        gap / cap.max(f64::MIN_POSITIVE)
    }
}

fn path_budgets(sweeps: &[SweepResult], cost: &[f64], grid: &TimeGrid) -> Vec<f64> {
    sweeps
        .iter()
        .map(|r| budget_functional(&r.xtraj, &r.control, cost, grid))
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Expected-budget constraint with one deterministic multiplier.
#[allow(clippy::too_many_arguments)]
pub fn solve_type1(
    x0: &StateVector,
    grid: &TimeGrid,
    params: &ModelParams,
    weights: &CostWeights,
    paths: &[BrownianPath],
    cfg: &SweepConfig,
    spec: &BudgetSpec,
) -> Result<BudgetOutcome> {
    spec.validate(grid)?;
    if paths.is_empty() {
        return Err(Error::config("n_paths", "must be >= 1"));
    }
    let search = search_multiplier(
        |lambda| {
            let sweeps = sweep_paths(x0, grid, params, weights, paths, cfg, lambda, &spec.cost)?;
            let budgets = path_budgets(&sweeps, &spec.cost, grid);
            Ok((mean(&budgets), (sweeps, budgets)))
        },
        spec.cap,
        spec.tol_rel,
        spec.lambda_max0,
    )?;
    let (sweeps, budgets) = search.payload;
    let lambda = search.lambda;
    Ok(BudgetOutcome {
        multipliers: MultiplierResult {
            multiplier: Multiplier::Deterministic(lambda),
            binding: vec![search.binding],
            expected_budget: search.budget,
            path_budgets: budgets,
            residual: vec![relative_residual(lambda, search.budget, spec.cap)],
            slackness: vec![lambda * (search.budget - spec.cap)],
            evaluations: search.evaluations,
        },
        sweeps,
    })
}

/// Pathwise budget constraint with one multiplier per Brownian path.
#[allow(clippy::too_many_arguments)]
pub fn solve_type2(
    x0: &StateVector,
    grid: &TimeGrid,
    params: &ModelParams,
    weights: &CostWeights,
    paths: &[BrownianPath],
    cfg: &SweepConfig,
    spec: &BudgetSpec,
) -> Result<BudgetOutcome> {
    spec.validate(grid)?;
    if paths.is_empty() {
        return Err(Error::config("n_paths", "must be >= 1"));
    }
    let searches = paths
        .par_iter()
        .map(|w| {
            search_multiplier(
                |lambda| {
                    let r = run_sweep(x0, grid, params, weights, w, cfg, lambda, &spec.cost)?;
                    Ok((budget_functional(&r.xtraj, &r.control, &spec.cost, grid), r))
                },
                spec.cap,
                spec.tol_rel,
                spec.lambda_max0,
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let lambdas: Vec<f64> = searches.iter().map(|s| s.lambda).collect();
    let budgets: Vec<f64> = searches.iter().map(|s| s.budget).collect();
    let multipliers = MultiplierResult {
        binding: searches.iter().map(|s| s.binding).collect(),
        expected_budget: mean(&budgets),
        residual: searches
            .iter()
            .map(|s| relative_residual(s.lambda, s.budget, spec.cap))
            .collect(),
        slackness: searches
            .iter()
            .map(|s| s.lambda * (s.budget - spec.cap))
            .collect(),
        evaluations: searches.iter().map(|s| s.evaluations).sum(),
        multiplier: Multiplier::PerPath(lambdas),
        path_budgets: budgets,
    };
    Ok(BudgetOutcome {
        multipliers,
        sweeps: searches.into_iter().map(|s| s.payload).collect(),
    })
}

/// Dispatches on `spec.kind`; `None` runs the unconstrained sweep per path.
#[allow(clippy::too_many_arguments)]
pub fn solve(
    x0: &StateVector,
    grid: &TimeGrid,
    params: &ModelParams,
    weights: &CostWeights,
    paths: &[BrownianPath],
    cfg: &SweepConfig,
    spec: &BudgetSpec,
) -> Result<BudgetOutcome> {
    match spec.kind {
        BudgetKind::TypeI => solve_type1(x0, grid, params, weights, paths, cfg, spec),
        BudgetKind::TypeII => solve_type2(x0, grid, params, weights, paths, cfg, spec),
        BudgetKind::None => {
            let sweeps = sweep_paths(x0, grid, params, weights, paths, cfg, 0.0, &spec.cost)?;
            let budgets = path_budgets(&sweeps, &spec.cost, grid);
            Ok(BudgetOutcome {
                multipliers: MultiplierResult {
                    multiplier: Multiplier::Deterministic(0.0),
                    binding: vec![false],
                    expected_budget: mean(&budgets),
                    path_budgets: budgets,
                    residual: vec![0.0],
                    slackness: vec![0.0],
                    evaluations: 1,
                },
                sweeps,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budget_functional_examples() {
        let grid = TimeGrid::new(2.0, 40).unwrap();
        let x = StateTrajectory {
            states: vec![StateVector::new(100.0, 5.0, 0.0, 0.0, 0.0); grid.n_points()],
            clamp_events: 0,
        };
        let ones = vec![1.0; grid.n_points()];
        let zeros = vec![0.0; grid.n_points()];
        let half = ControlPath::constant(0.5, &grid).unwrap();
        let none = ControlPath::constant(0.0, &grid).unwrap();
        assert_eq!(budget_functional(&x, &none, &ones, &grid), 0.0);
        assert!((budget_functional(&x, &half, &ones, &grid) - 100.0).abs() < 1e-9);
        assert_eq!(budget_functional(&x, &half, &zeros, &grid), 0.0);
    }

    // g(λ) = 10 / (1 + λ): strictly decreasing, g(0) = 10.
    fn hyperbola(lambda: f64) -> Result<(f64, ())> {
        Ok((10.0 / (1.0 + lambda), ()))
    }

    #[test]
    fn search_slack_returns_zero() {
        let s = search_multiplier(hyperbola, 12.0, 0.01, 1.0).unwrap();
        assert_eq!(s.lambda, 0.0);
        assert!(!s.binding);
        assert_eq!(s.evaluations, 1);
    }

    #[test]
    fn search_binding_hits_cap() {
        // exact root at λ = 3
        let s = search_multiplier(hyperbola, 2.5, 0.01, 0.5).unwrap();
        assert!(s.binding);
        assert!((s.budget - 2.5).abs() <= 0.025);
        assert!(s.budget <= 2.5 * 1.01);
        assert!((s.lambda - 3.0).abs() < 0.2);
    }

    #[test]
    fn search_reports_infeasible_cap() {
        let floor = |lambda: f64| Ok((1.0 + 10.0 / (1.0 + lambda), ()));
        assert!(matches!(
            search_multiplier(floor, 0.5, 0.01, 1.0),
            Err(Error::InfeasibleBudget { .. })
        ));
    }

    #[test]
    fn search_detects_non_monotone_budget() {
        let bump = |lambda: f64| Ok((if lambda > 0.0 { 20.0 } else { 10.0 }, ()));
        assert!(matches!(
            search_multiplier(bump, 5.0, 0.01, 1.0),
            Err(Error::NonMonotoneBudget { .. })
        ));
    }

    #[test]
    fn search_zero_cap_accepts_exact_zero() {
        let step = |lambda: f64| Ok((if lambda >= 4.0 { 0.0 } else { 3.0 }, ()));
        let s = search_multiplier(step, 0.0, 0.01, 1.0).unwrap();
        assert_eq!(s.budget, 0.0);
        assert_eq!(s.lambda, 4.0);
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("type1".parse::<BudgetKind>().unwrap(), BudgetKind::TypeI);
        assert_eq!("TypeII".parse::<BudgetKind>().unwrap(), BudgetKind::TypeII);
        assert_eq!("none".parse::<BudgetKind>().unwrap(), BudgetKind::None);
        assert!("type3".parse::<BudgetKind>().is_err());
    }

    #[test]
    fn residual_definition() {
        assert_eq!(relative_residual(0.0, 5.0, 10.0), 0.0);
        assert!((relative_residual(0.0, 11.0, 10.0) - 0.1).abs() < 1e-12);
        assert!((relative_residual(2.0, 9.9, 10.0) - 0.01).abs() < 1e-12);
        assert_eq!(relative_residual(2.0, 0.0, 0.0), 0.0);
    }
}
