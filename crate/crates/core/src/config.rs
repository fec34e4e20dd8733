//! Scenario files: one `key = value` pair per line, `#` starts a comment.
//!
//! Every key is optional and defaults to the baseline scenario: N = 10 200,
//! S(0) = 10 000, I(0) = 200, T = 25 years with 25 000 steps, w₁ = 20 and
//! w₂ = 0.3 · N. Transmission and noise are given unscaled
//! (`beta_tilde`, `sigma_tilde`) and divided by `n_ref` on load. Unknown or
//! repeated keys are rejected.
//!
//! ```text
//! # N = 30 000 variant
//! n_ref = 30000
//! sigma_tilde = 0.6
//! n_steps = 5000
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::budget::{BudgetKind, BudgetSpec};
use crate::error::{Error, Result};
use crate::forward::{ControlPath, TimeGrid};
use crate::model::{CostWeights, ModelParams, StateVector, DEFAULT_MU};
use crate::sweep::SweepConfig;

/// Every key accepted in a scenario file.
pub const KEYS: &[&str] = &[
    "n_ref",
    "beta_tilde",
    "sigma_tilde",
    "eta_c",
    "eta_a",
    "mu",
    "lambda_recruit",
    "psi",
    "theta",
    "phi",
    "rho",
    "omega",
    "alpha",
    "d",
    "s0",
    "i0",
    "c0",
    "a0",
    "e0",
    "t_end",
    "n_steps",
    "w1",
    "w2",
    "control",
    "relax_old",
    "relax_new",
    "tol_rel",
    "max_iters",
    "u_init",
    "budget_kind",
    "budget_cap",
    "budget_cost",
    "budget_tol",
    "lambda_max0",
    "seed",
    "n_paths",
    "out_dir",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub n_ref: f64,
    pub beta_tilde: f64,
    pub sigma_tilde: f64,
    pub eta_c: f64,
    pub eta_a: f64,
    pub mu: f64,
    /// Recruitment rate; `n_ref · mu` when absent.
    pub lambda_recruit: Option<f64>,
    pub psi: f64,
    pub theta: f64,
    pub phi: f64,
    pub rho: f64,
    pub omega: f64,
    pub alpha: f64,
    pub d: f64,
    pub x0: StateVector,
    pub t_end: f64,
    pub n_steps: usize,
    pub w1: f64,
    /// Control cost weight; `0.3 · n_ref` when absent.
    pub w2: Option<f64>,
    /// Fixed control level used by `simulate`.
    pub control: f64,
    pub sweep: SweepConfig,
    pub budget_kind: BudgetKind,
    pub budget_cap: Option<f64>,
    pub budget_cost: f64,
    pub budget_tol: f64,
    pub lambda_max0: f64,
    pub seed: u64,
    pub n_paths: usize,
    pub out_dir: PathBuf,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_ref: 10_200.0,
            beta_tilde: 0.752,
            sigma_tilde: 0.2,
            eta_c: 0.04,
            eta_a: 1.35,
            mu: DEFAULT_MU,
            lambda_recruit: None,
            psi: 0.0,
            theta: 0.001,
            phi: 1.0,
            rho: 0.1,
            omega: 0.09,
            alpha: 0.33,
            d: 1.0,
            x0: StateVector::new(10_000.0, 200.0, 0.0, 0.0, 0.0),
            t_end: 25.0,
            n_steps: 25_000,
            w1: 20.0,
            w2: None,
            control: 0.0,
            sweep: SweepConfig::default(),
            budget_kind: BudgetKind::None,
            budget_cap: None,
            budget_cost: 1.0,
            budget_tol: 0.01,
            lambda_max0: 1.0,
            seed: 42,
            n_paths: 10,
            out_dir: PathBuf::from("out"),
        }
    }
}

struct Entries {
    path: PathBuf,
    values: BTreeMap<String, (String, usize)>,
}

impl Entries {
    fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let syntax = |reason: String| Error::ConfigSyntax {
                path: path.to_path_buf(),
                line: line_no,
                reason,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| syntax(format!("expected `key = value`, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(syntax(format!("unknown key `{key}`")));
            }
            if value.is_empty() {
                return Err(syntax(format!("missing value for `{key}`")));
            }
            if values.insert(key.to_string(), (value.to_string(), line_no)).is_some() {
                return Err(syntax(format!("duplicate key `{key}`")));
            }
        }
        Ok(Self {
            path: path.to_path_buf(),
            values,
        })
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.values.get(key) {
            None => Ok(None),
            Some((raw, line)) => raw.parse::<T>().map(Some).map_err(|e| Error::ConfigSyntax {
                path: self.path.clone(),
                line: *line,
                reason: format!("bad value `{raw}` for `{key}`: {e}"),
            }),
        }
    }

    fn set<T: FromStr>(&self, key: &str, slot: &mut T) -> Result<()>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(v) = self.get(key)? {
            *slot = v;
        }
        Ok(())
    }
}

impl ScenarioConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Parses and validates scenario text; `origin` labels syntax errors.
    pub fn parse(text: &str, origin: impl AsRef<Path>) -> Result<Self> {
        let e = Entries::parse(text, origin.as_ref())?;
        let mut c = Self::default();
        e.set("n_ref", &mut c.n_ref)?;
        e.set("beta_tilde", &mut c.beta_tilde)?;
        e.set("sigma_tilde", &mut c.sigma_tilde)?;
        e.set("eta_c", &mut c.eta_c)?;
        e.set("eta_a", &mut c.eta_a)?;
        e.set("mu", &mut c.mu)?;
        c.lambda_recruit = e.get("lambda_recruit")?;
        e.set("psi", &mut c.psi)?;
        e.set("theta", &mut c.theta)?;
        e.set("phi", &mut c.phi)?;
        e.set("rho", &mut c.rho)?;
        e.set("omega", &mut c.omega)?;
        e.set("alpha", &mut c.alpha)?;
        e.set("d", &mut c.d)?;
        e.set("s0", &mut c.x0.s)?;
        e.set("i0", &mut c.x0.i)?;
        e.set("c0", &mut c.x0.c)?;
        e.set("a0", &mut c.x0.a)?;
        e.set("e0", &mut c.x0.e)?;
        e.set("t_end", &mut c.t_end)?;
        e.set("n_steps", &mut c.n_steps)?;
        e.set("w1", &mut c.w1)?;
        c.w2 = e.get("w2")?;
        e.set("control", &mut c.control)?;

        let relax_old: Option<f64> = e.get("relax_old")?;
        let relax_new: Option<f64> = e.get("relax_new")?;
        match (relax_old, relax_new) {
            (Some(a), Some(b)) => (c.sweep.lambda1, c.sweep.lambda2) = (a, b),
            (Some(a), None) => (c.sweep.lambda1, c.sweep.lambda2) = (a, 1.0 - a),
            (None, Some(b)) => (c.sweep.lambda1, c.sweep.lambda2) = (1.0 - b, b),
            (None, None) => {}
        }
        e.set("tol_rel", &mut c.sweep.tol_rel)?;
        e.set("max_iters", &mut c.sweep.max_iters)?;
        e.set("u_init", &mut c.sweep.u_init)?;

        e.set("budget_kind", &mut c.budget_kind)?;
        c.budget_cap = e.get("budget_cap")?;
        e.set("budget_cost", &mut c.budget_cost)?;
        e.set("budget_tol", &mut c.budget_tol)?;
        e.set("lambda_max0", &mut c.lambda_max0)?;
        e.set("seed", &mut c.seed)?;
        e.set("n_paths", &mut c.n_paths)?;
        e.set("out_dir", &mut c.out_dir)?;
        c.validate()?;
        Ok(c)
    }

    pub fn params(&self) -> ModelParams {
        ModelParams {
            lambda_recruit: self.lambda_recruit.unwrap_or(self.n_ref * self.mu),
            beta: self.beta_tilde / self.n_ref,
            eta_c: self.eta_c,
            eta_a: self.eta_a,
            mu: self.mu,
            psi: self.psi,
            theta: self.theta,
            phi: self.phi,
            rho: self.rho,
            omega: self.omega,
            alpha: self.alpha,
            d: self.d,
            sigma: self.sigma_tilde / self.n_ref,
            n_ref: self.n_ref,
        }
    }

    pub fn weights(&self) -> CostWeights {
        CostWeights {
            w1: self.w1,
            w2: self.w2.unwrap_or(0.3 * self.n_ref),
        }
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.t_end, self.n_steps)
    }

    pub fn fixed_control(&self) -> Result<ControlPath> {
        ControlPath::constant(self.control, &self.grid()?)
    }

    pub fn budget(&self) -> Result<BudgetSpec> {
        let grid = self.grid()?;
        let cap = match (self.budget_kind, self.budget_cap) {
            (BudgetKind::None, cap) => cap.unwrap_or(f64::INFINITY),
            (_, Some(cap)) => cap,
            (_, None) => return Err(Error::config("budget_cap", "required when budget_kind is type1 or type2")),
        };
        Ok(BudgetSpec {
            kind: self.budget_kind,
            cost: vec![self.budget_cost; grid.n_points()],
            cap,
            tol_rel: self.budget_tol,
            lambda_max0: self.lambda_max0,
        })
    }

    /// Checks every derived object; called after parsing and after overrides.
    pub fn validate(&self) -> Result<()> {
        let grid = self.grid()?;
        self.params().validate()?;
        self.weights().validate()?;
        for (name, v) in [
            ("s0", self.x0.s),
            ("i0", self.x0.i),
            ("c0", self.x0.c),
            ("a0", self.x0.a),
            ("e0", self.x0.e),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(name, format!("must be finite and >= 0, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.control) {
            return Err(Error::config("control", format!("must lie in [0, 1], got {}", self.control)));
        }
        self.sweep.validate()?;
        if self.n_paths == 0 {
            return Err(Error::config("n_paths", "must be >= 1"));
        }
        let budget = self.budget()?;
        if budget.kind != BudgetKind::None {
            budget.validate(&grid)?;
        } else if !(self.budget_cost >= 0.0 && self.budget_cost.is_finite()) {
            return Err(Error::config("budget_cost", "must be finite and >= 0"));
        }
        Ok(())
    }
}
