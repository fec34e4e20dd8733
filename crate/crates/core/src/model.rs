//! Parameters, state and the pure algebra shared by the forward and backward
//! passes of the five-compartment S/I/C/A/E model.
//!
//! Transmission `beta` and noise `sigma` are stored already divided by the
//! reference population `n_ref`, so the drift reads `beta * F * S` with
//! `F = I + eta_c C + eta_a A`.

use std::ops::{Add, Index, Mul, Sub};

use serde::Serialize;

use crate::error::{Error, Result};

/// Default natural death rate, 1/year (average life span of 69.54 years).
pub const DEFAULT_MU: f64 = 1.0 / 69.54;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelParams {
    /// Recruitment rate Λ, individuals/year.
    pub lambda_recruit: f64,
    /// Scaled transmission rate, 1/(individual·year).
    pub beta: f64,
    pub eta_c: f64,
    pub eta_a: f64,
    pub mu: f64,
    /// Baseline (constant) PrEP transfer rate.
    pub psi: f64,
    /// PrEP default rate, E → S.
    pub theta: f64,
    /// Treatment rate, I → C.
    pub phi: f64,
    /// Default rate, I → A.
    pub rho: f64,
    /// Chronic default rate, C → I.
    pub omega: f64,
    /// AIDS treatment rate, A → I.
    pub alpha: f64,
    /// AIDS-induced death rate.
    pub d: f64,
    /// Scaled force-of-infection noise, 1/(individual·√year).
    pub sigma: f64,
    /// Reference population used to scale `beta` and `sigma`.
    pub n_ref: f64,
}

impl ModelParams {
    /// Baseline parameter set with `beta = 0.752 / n_ref`,
    /// `sigma = 0.2 / n_ref` and `Λ = n_ref · μ`, no baseline PrEP.
    pub fn baseline(n_ref: f64) -> Self {
        Self {
            lambda_recruit: n_ref * DEFAULT_MU,
            beta: 0.752 / n_ref,
            eta_c: 0.04,
            eta_a: 1.35,
            mu: DEFAULT_MU,
            psi: 0.0,
            theta: 0.001,
            phi: 1.0,
            rho: 0.1,
            omega: 0.09,
            alpha: 0.33,
            d: 1.0,
            sigma: 0.2 / n_ref,
            n_ref,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let rates = [
            ("lambda_recruit", self.lambda_recruit),
            ("beta", self.beta),
            ("eta_c", self.eta_c),
            ("eta_a", self.eta_a),
            ("mu", self.mu),
            ("psi", self.psi),
            ("theta", self.theta),
            ("phi", self.phi),
            ("rho", self.rho),
            ("omega", self.omega),
            ("alpha", self.alpha),
            ("d", self.d),
            ("sigma", self.sigma),
        ];
        for (name, v) in rates {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::config(name, format!("must be finite and >= 0, got {v}")));
            }
        }
        if !self.n_ref.is_finite() || self.n_ref <= 0.0 {
            return Err(Error::config(
                "n_ref",
                format!("must be finite and > 0, got {}", self.n_ref),
            ));
        }
        Ok(())
    }

    pub fn xi1(&self) -> f64 {
        self.alpha + self.mu + self.d
    }

    pub fn xi2(&self) -> f64 {
        self.omega + self.mu
    }

    pub fn xi3(&self) -> f64 {
        self.rho + self.phi + self.mu
    }

    pub fn xi4(&self) -> f64 {
        self.mu + self.theta
    }
}

/// Aggregated outflow rates `(ξ₁, ξ₂, ξ₃, ξ₄)` of the A, C, I and E classes.
pub fn derived_rates(params: &ModelParams) -> (f64, f64, f64, f64) {
    (params.xi1(), params.xi2(), params.xi3(), params.xi4())
}

/// One point in compartment space, in individuals.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StateVector {
    pub s: f64,
    pub i: f64,
    pub c: f64,
    pub a: f64,
    pub e: f64,
}

impl StateVector {
    pub const ZERO: StateVector = StateVector {
        s: 0.0,
        i: 0.0,
        c: 0.0,
        a: 0.0,
        e: 0.0,
    };

    pub fn new(s: f64, i: f64, c: f64, a: f64, e: f64) -> Self {
        Self { s, i, c, a, e }
    }

    pub fn total(&self) -> f64 {
        self.s + self.i + self.c + self.a + self.e
    }

    pub fn to_array(self) -> [f64; 5] {
        [self.s, self.i, self.c, self.a, self.e]
    }

    pub fn from_array(v: [f64; 5]) -> Self {
        Self::new(v[0], v[1], v[2], v[3], v[4])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    pub fn is_nonnegative(&self) -> bool {
        self.to_array().iter().all(|&v| v >= 0.0)
    }
}

impl From<[f64; 5]> for StateVector {
    fn from(v: [f64; 5]) -> Self {
        Self::from_array(v)
    }
}

impl Index<usize> for StateVector {
    type Output = f64;

    fn index(&self, k: usize) -> &f64 {
        match k {
            0 => &self.s,
            1 => &self.i,
            2 => &self.c,
            3 => &self.a,
            4 => &self.e,
            _ => panic!("compartment index {k} out of range"),
        }
    }
}

impl Add for StateVector {
    type Output = StateVector;

    fn add(self, o: StateVector) -> StateVector {
        StateVector::new(self.s + o.s, self.i + o.i, self.c + o.c, self.a + o.a, self.e + o.e)
    }
}

impl Sub for StateVector {
    type Output = StateVector;

    fn sub(self, o: StateVector) -> StateVector {
        StateVector::new(self.s - o.s, self.i - o.i, self.c - o.c, self.a - o.a, self.e - o.e)
    }
}

impl Mul<f64> for StateVector {
    type Output = StateVector;

    fn mul(self, k: f64) -> StateVector {
        StateVector::new(self.s * k, self.i * k, self.c * k, self.a * k, self.e * k)
    }
}

/// Weights of the running cost `w1 · I + w2 · u²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostWeights {
    pub w1: f64,
    pub w2: f64,
}

impl CostWeights {
    pub fn new(w1: f64, w2: f64) -> Result<Self> {
        let w = Self { w1, w2 };
        w.validate()?;
        Ok(w)
    }

    /// `w1 = 20`, `w2 = 0.3 · n_ref`.
    pub fn baseline(n_ref: f64) -> Self {
        Self {
            w1: 20.0,
            w2: 0.3 * n_ref,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.w1.is_finite() || self.w1 < 0.0 {
            return Err(Error::config("w1", format!("must be finite and >= 0, got {}", self.w1)));
        }
        if !self.w2.is_finite() || self.w2 <= 0.0 {
            return Err(Error::config("w2", format!("must be finite and > 0, got {}", self.w2)));
        }
        Ok(())
    }
}

/// Infectious pressure `I + η_C C + η_A A`, before the `β`/`σ` factors.
pub fn force_of_infection(x: &StateVector, params: &ModelParams) -> f64 {
    x.i + params.eta_c * x.c + params.eta_a * x.a
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_rates() -> ModelParams {
        ModelParams {
            lambda_recruit: 0.0,
            beta: 0.0,
            eta_c: 0.0,
            eta_a: 0.0,
            mu: 0.0,
            psi: 0.0,
            theta: 0.0,
            phi: 0.0,
            rho: 0.0,
            omega: 0.0,
            alpha: 0.0,
            d: 0.0,
            sigma: 0.0,
            n_ref: 1.0,
        }
    }

    #[test]
    fn derived_rates_match_defining_sums() {
        let p = ModelParams::baseline(10_200.0);
        let (xi1, xi2, xi3, xi4) = derived_rates(&p);
        // α + μ + d and ρ + φ + μ with μ = 1/69.54
        assert!((xi1 - 1.344_380_213).abs() < 1e-7);
        assert!((xi3 - 1.114_380_213).abs() < 1e-7);
        assert_eq!(xi1, p.alpha + p.mu + p.d);
        assert_eq!(xi2, p.omega + p.mu);
        assert_eq!(xi3, p.rho + p.phi + p.mu);
        assert_eq!(xi4, p.mu + p.theta);
    }

    #[test]
    fn derived_rates_zero_case() {
        assert_eq!(derived_rates(&zero_rates()), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn derived_rates_bitwise_repeatable() {
        let p = ModelParams::baseline(30_000.0);
        let a = derived_rates(&p);
        let b = derived_rates(&p);
        assert_eq!(a.0.to_bits(), b.0.to_bits());
        assert_eq!(a.3.to_bits(), b.3.to_bits());
    }

    #[test]
    fn force_of_infection_examples() {
        let p = ModelParams::baseline(10_200.0);
        let none = StateVector::new(5_000.0, 0.0, 0.0, 0.0, 7.0);
        assert_eq!(force_of_infection(&none, &p), 0.0);
        let initial = StateVector::new(10_000.0, 200.0, 0.0, 0.0, 0.0);
        assert_eq!(force_of_infection(&initial, &p), 200.0);
        let mixed = StateVector::new(0.0, 10.0, 100.0, 10.0, 0.0);
        assert!((force_of_infection(&mixed, &p) - 27.5).abs() < 1e-12);
    }

    #[test]
    fn validation_rejects_negative_rate_and_bad_weights() {
        let mut p = ModelParams::baseline(10_200.0);
        p.rho = -0.1;
        match p.validate() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "rho"),
            other => panic!("unexpected {other:?}"),
        }
        let mut p = ModelParams::baseline(10_200.0);
        p.n_ref = 0.0;
        assert!(p.validate().is_err());
        assert!(CostWeights::new(20.0, 0.0).is_err());
        assert!(CostWeights::new(-1.0, 1.0).is_err());
        assert!(CostWeights::new(0.0, 1.0).is_ok());
    }

    #[test]
    fn baseline_weights() {
        let w = CostWeights::baseline(10_200.0);
        assert_eq!(w.w1, 20.0);
        assert!((w.w2 - 3_060.0).abs() < 1e-9);
    }
}
