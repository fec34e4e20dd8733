//! Path sets, batch execution and ensemble statistics.
//!
//! Path `k` of a run draws its increments from ChaCha8 stream `k` keyed by the
//! master seed, so every path is reproducible on its own and independent of
//! how the work is scheduled. Batch functions run paths on the rayon pool
//! and return results in path order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::forward::{euler_maruyama_step, simulate, BrownianPath, ControlPath, StateTrajectory, TimeGrid};
use crate::model::{CostWeights, ModelParams, StateVector};
use crate::sweep::{run_sweep, SweepConfig, SweepResult};

pub fn make_paths(master_seed: u64, n_paths: usize, grid: &TimeGrid) -> Result<Vec<BrownianPath>> {
    if n_paths == 0 {
        return Err(Error::config("n_paths", "must be >= 1"));
    }
    Ok((0..n_paths as u64)
        .into_par_iter()
        .map(|k| BrownianPath::generate(master_seed, k, grid))
        .collect())
}

pub fn simulate_paths(
    u: &ControlPath,
    paths: &[BrownianPath],
    x0: &StateVector,
    grid: &TimeGrid,
    p: &ModelParams,
) -> Result<Vec<StateTrajectory>> {
    paths.par_iter().map(|w| simulate(u, w, x0, grid, p)).collect()
}

#[allow(clippy::too_many_arguments)]
pub fn sweep_paths(
    x0: &StateVector,
    grid: &TimeGrid,
    params: &ModelParams,
    weights: &CostWeights,
    paths: &[BrownianPath],
    cfg: &SweepConfig,
    lambda_mult: f64,
    cost: &[f64],
) -> Result<Vec<SweepResult>> {
    paths
        .par_iter()
        .map(|w| run_sweep(x0, grid, params, weights, w, cfg, lambda_mult, cost))
        .collect()
}

/// Running pointwise mean and sum of squared deviations (Welford), mergeable
/// with Chan's pairwise update.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleAccumulator {
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl EnsembleAccumulator {
    pub fn new(width: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; width],
            m2: vec![0.0; width],
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn push(&mut self, sample: &[f64]) -> Result<()> {
        if sample.len() != self.mean.len() {
            return Err(Error::Shape {
                what: "ensemble sample",
                expected: self.mean.len(),
                got: sample.len(),
            });
        }
        self.count += 1;
        let n = self.count as f64;
        for ((m, m2), &x) in self.mean.iter_mut().zip(&mut self.m2).zip(sample) {
            let delta = x - *m;
            *m += delta / n;
            *m2 += delta * (x - *m);
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &EnsembleAccumulator) -> Result<()> {
        if other.mean.len() != self.mean.len() {
            return Err(Error::Shape {
                what: "ensemble accumulator",
                expected: self.mean.len(),
                got: other.mean.len(),
            });
        }
        if other.count == 0 {
            return Ok(());
        }
        if self.count == 0 {
            *self = other.clone();
            return Ok(());
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        for k in 0..self.mean.len() {
            let delta = other.mean[k] - self.mean[k];
            self.mean[k] += delta * nb / n;
            self.m2[k] += other.m2[k] + delta * delta * na * nb / n;
        }
        self.count += other.count;
        Ok(())
    }

    pub fn finish(self, master_seed: u64) -> EnsembleStats {
        let variance = if self.count > 1 {
            let denom = (self.count - 1) as f64;
            self.m2.iter().map(|m2| (m2 / denom).max(0.0)).collect()
        } else {
            vec![0.0; self.mean.len()]
        };
        EnsembleStats {
            n_paths: self.count,
            master_seed,
            variance_defined: self.count > 1,
            mean: self.mean,
            variance,
        }
    }
}

/// Pointwise ensemble mean and unbiased variance of flattened per-path series.
///
/// With a single path the variance is reported as zero and
/// `variance_defined` is false.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleStats {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub n_paths: usize,
    pub master_seed: u64,
    pub variance_defined: bool,
}

pub fn ensemble<S: AsRef<[f64]>>(series: &[S], master_seed: u64) -> Result<EnsembleStats> {
    let first = series
        .first()
        .ok_or_else(|| Error::config("n_paths", "ensemble needs at least one path"))?;
    let mut acc = EnsembleAccumulator::new(first.as_ref().len());
    for s in series {
        acc.push(s.as_ref())?;
    }
    Ok(acc.finish(master_seed))
}

/// Linear test SDE `dX = a X dt + b X dB` with exact solution
/// `X(T) = X₀ exp((a − b²/2) T + b B(T))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeometricOracle {
    pub a: f64,
    pub b: f64,
    pub x0: f64,
    pub t_end: f64,
}

impl GeometricOracle {
    pub fn exact(&self, b_terminal: f64) -> f64 {
        self.x0 * ((self.a - 0.5 * self.b * self.b) * self.t_end + self.b * b_terminal).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub dts: Vec<f64>,
    /// Mean absolute terminal error at each step size.
    pub errors: Vec<f64>,
    /// Least-squares slope of `log error` against `log dt`.
    pub order: f64,
}

fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Estimates the strong order of the Euler–Maruyama stepper on `oracle`.
///
/// Each path draws increments on the finest grid `T / 2^finest` and sums them
/// in blocks for the coarser grids, so every level sees the same Brownian
/// path. `levels` are exponents: level `j` uses `dt = T / 2^j`.
pub fn convergence_order(
    oracle: &GeometricOracle,
    levels: std::ops::RangeInclusive<u32>,
    n_paths: usize,
    master_seed: u64,
) -> Result<ConvergenceReport> {
    if n_paths == 0 {
        return Err(Error::config("n_paths", "must be >= 1"));
    }
    let levels: Vec<u32> = levels.collect();
    let finest = *levels
        .iter()
        .max()
        .ok_or_else(|| Error::config("levels", "need at least two step sizes"))?;
    if levels.len() < 2 {
        return Err(Error::config("levels", "need at least two step sizes"));
    }
    let n_fine = 1usize << finest;
    let dt_fine = oracle.t_end / n_fine as f64;

    let per_path: Vec<Vec<f64>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
            rng.set_stream(k);
            let dw: Vec<f64> = (0..n_fine)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z * dt_fine.sqrt()
                })
                .collect();
            let exact = oracle.exact(dw.iter().sum());
            levels
                .iter()
                .map(|&level| {
                    let block = 1usize << (finest - level);
                    let dt = oracle.t_end / (1usize << level) as f64;
                    let x = dw.chunks(block).fold([oracle.x0], |x, chunk| {
                        let inc: f64 = chunk.iter().sum();
                        euler_maruyama_step(&x, &[oracle.a * x[0]], &[oracle.b * x[0]], dt, inc)
                    });
                    (x[0] - exact).abs()
                })
                .collect()
        })
        .collect();

    let errors: Vec<f64> = (0..levels.len())
        .map(|j| per_path.iter().map(|e| e[j]).sum::<f64>() / n_paths as f64)
        .collect();
    let dts: Vec<f64> = levels
        .iter()
        .map(|&level| oracle.t_end / (1usize << level) as f64)
        .collect();
    let log_dt: Vec<f64> = dts.iter().map(|d| d.ln()).collect();
    let log_err: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    Ok(ConvergenceReport {
        order: least_squares_slope(&log_dt, &log_err),
        dts,
        errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn make_paths_is_reproducible_and_distinct() {
        let grid = TimeGrid::new(1.0, 200).unwrap();
        let a = make_paths(9, 4, &grid).unwrap();
        let b = make_paths(9, 4, &grid).unwrap();
        assert_eq!(a, b);
        for i in 0..4 {
            for j in (i + 1)..4 {
                assert_ne!(a[i].increments, a[j].increments);
            }
        }
        assert!(make_paths(9, 0, &grid).is_err());
    }

    #[test]
    fn increments_have_gaussian_moments() {
        let grid = TimeGrid::new(25.0, 25_000).unwrap();
        let dt = grid.dt();
        let w = &make_paths(2024, 1, &grid).unwrap()[0];
        let n = w.len() as f64;
        let mean = w.increments.iter().sum::<f64>() / n;
        let var = w.increments.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        // standard errors: sqrt(dt/n) for the mean, dt·sqrt(2/(n−1)) for the variance
        assert!(mean.abs() < 5.0 * (dt / n).sqrt());
        assert!((var - dt).abs() < 5.0 * dt * (2.0 / (n - 1.0)).sqrt());
    }

    #[test]
    fn single_path_stats() {
        let s = ensemble(&[vec![1.0, 2.0, 3.0]], 5).unwrap();
        assert_eq!(s.mean, vec![1.0, 2.0, 3.0]);
        assert_eq!(s.variance, vec![0.0; 3]);
        assert!(!s.variance_defined);
        assert_eq!(s.master_seed, 5);
    }

    #[test]
    fn two_constant_paths() {
        let (a, b) = (3.0, 7.5);
        let s = ensemble(&[vec![a; 4], vec![b; 4]], 0).unwrap();
        for k in 0..4 {
            assert!((s.mean[k] - (a + b) / 2.0).abs() < 1e-12);
            assert!((s.variance[k] - (a - b) * (a - b) / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ensemble_rejects_ragged_input() {
        assert!(ensemble(&[vec![1.0, 2.0], vec![1.0]], 0).is_err());
        assert!(ensemble::<Vec<f64>>(&[], 0).is_err());
    }

    #[test]
    fn deterministic_oracle_is_first_order() {
        let oracle = GeometricOracle {
            a: 0.05,
            b: 0.0,
            x0: 1.0,
            t_end: 1.0,
        };
        let r = convergence_order(&oracle, 5..=10, 4, 1).unwrap();
        assert!(r.order >= 0.9, "order {}", r.order);
    }
}
