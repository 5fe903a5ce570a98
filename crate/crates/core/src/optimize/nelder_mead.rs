//! Nelder-Mead simplex minimization.
//!
//! Classical coefficients (reflection 1, expansion 2, contraction 0.5,
//! shrink 0.5) with the update order and termination test of the common
//! scientific-Python implementation: stop once every vertex lies within
//! `xatol` of the best one (max-norm) and every value within `fatol`.

use super::OptimizeError;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Nelder-Mead settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    /// Parameter tolerance.
    pub xatol: f64,
    /// Objective tolerance.
    pub fatol: f64,
    pub max_iter: usize,
    /// Initial simplex step is `max(step_floor, step_rel * |x0_i|)`.
    pub step_floor: f64,
    pub step_rel: f64,
    /// Random restarts for brute-force searches.
    pub restarts: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig { xatol: 1e-2, fatol: 1e-10, max_iter: 1000, step_floor: 0.1, step_rel: 0.05, restarts: 0 }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), OptimizeError> {
        if !(self.xatol > 0.0 && self.fatol > 0.0) {
            return Err(OptimizeError::InvalidConfig("tolerances must be positive".into()));
        }
        if self.max_iter < 1 {
            return Err(OptimizeError::InvalidConfig("max_iter must be >= 1".into()));
        }
        if !(self.step_floor > 0.0 && self.step_rel >= 0.0) {
            return Err(OptimizeError::InvalidConfig("initial simplex steps must be positive".into()));
        }
        Ok(())
    }
}

/// One objective evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub params: Vec<f64>,
    pub value: f64,
}

/// Outcome of a minimization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub best_params: Vec<f64>,
    pub best_value: f64,
    /// Completed simplex updates.
    pub iterations: usize,
    /// Distinct objective evaluations.
    pub evaluations: usize,
    pub converged: bool,
    /// Best value after each completed iteration.
    pub trace: Vec<f64>,
    pub log: Vec<Evaluation>,
    /// PRNG seed of a randomized start, if any.
    pub seed: Option<u64>,
}

struct Counted<'a, F> {
    f: &'a mut F,
    cache: HashMap<Vec<u64>, f64>,
    log: Vec<Evaluation>,
}

impl<F: FnMut(&[f64]) -> f64> Counted<'_, F> {
    fn call(&mut self, x: &[f64]) -> Result<f64, OptimizeError> {
        let key: Vec<u64> = x.iter().map(|v| v.to_bits()).collect();
        if let Some(&v) = self.cache.get(&key) {
            return Ok(v);
        }
        let v = (self.f)(x);
        if v.is_nan() {
            return Err(OptimizeError::NanObjective(x.to_vec()));
        }
        self.cache.insert(key, v);
        self.log.push(Evaluation { params: x.to_vec(), value: v });
        Ok(v)
    }
}

fn sort_simplex(sim: &mut Vec<Vec<f64>>, fsim: &mut Vec<f64>) {
    let mut order: Vec<usize> = (0..fsim.len()).collect();
    order.sort_by(|&a, &b| fsim[a].total_cmp(&fsim[b]));
    *sim = order.iter().map(|&i| sim[i].clone()).collect();
    *fsim = order.iter().map(|&i| fsim[i]).collect();
}

/// Minimize `objective` from `x0`.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    mut objective: F,
    x0: &[f64],
    cfg: &OptimizerConfig,
) -> Result<OptimizationResult, OptimizeError> {
    cfg.validate()?;
    let n = x0.len();
    if n == 0 {
        return Err(OptimizeError::InvalidConfig("empty parameter vector".into()));
    }
    let mut f = Counted { f: &mut objective, cache: HashMap::new(), log: Vec::new() };
    let mut sim: Vec<Vec<f64>> = vec![x0.to_vec()];
    for k in 0..n {
        let mut y = x0.to_vec();
        y[k] += cfg.step_floor.max(cfg.step_rel * x0[k].abs());
        sim.push(y);
    }
    let mut fsim = Vec::with_capacity(n + 1);
    for x in &sim {
        fsim.push(f.call(x)?);
    }
    if !fsim[0].is_finite() {
        return Err(OptimizeError::NonFiniteStart(fsim[0]));
    }
    sort_simplex(&mut sim, &mut fsim);

    let lin = |a: f64, x: &[f64], b: f64, y: &[f64]| -> Vec<f64> {
        x.iter().zip(y).map(|(x, y)| a * x + b * y).collect()
    };
    let mut iterations = 0;
    let mut converged = false;
    let mut trace = Vec::new();
    while iterations < cfg.max_iter {
        let xspread = sim[1..]
            .iter()
            .flat_map(|v| v.iter().zip(&sim[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0_f64, f64::max);
        let fspread = fsim[1..].iter().map(|v| (fsim[0] - v).abs()).fold(0.0_f64, f64::max);
        if xspread <= cfg.xatol && fspread <= cfg.fatol {
            converged = true;
            break;
        }
        let mut xbar = vec![0.0; n];
        for v in &sim[..n] {
            for (b, x) in xbar.iter_mut().zip(v) {
                *b += x;
            }
        }
        for b in &mut xbar {
            *b /= n as f64;
        }
        let worst = sim[n].clone();
        let xr = lin(2.0, &xbar, -1.0, &worst);
        let fxr = f.call(&xr)?;
        let mut shrink = false;
        if fxr < fsim[0] {
            let xe = lin(3.0, &xbar, -2.0, &worst);
            let fxe = f.call(&xe)?;
            if fxe < fxr {
                sim[n] = xe;
                fsim[n] = fxe;
            } else {
                sim[n] = xr;
                fsim[n] = fxr;
            }
        } else if fxr < fsim[n - 1] {
            sim[n] = xr;
            fsim[n] = fxr;
        } else if fxr < fsim[n] {
            let xc = lin(1.5, &xbar, -0.5, &worst);
            let fxc = f.call(&xc)?;
            if fxc <= fxr {
                sim[n] = xc;
                fsim[n] = fxc;
            } else {
                shrink = true;
            }
        } else {
            let xcc = lin(0.5, &xbar, 0.5, &worst);
            let fxcc = f.call(&xcc)?;
            if fxcc < fsim[n] {
                sim[n] = xcc;
                fsim[n] = fxcc;
            } else {
                shrink = true;
            }
        }
        if shrink {
            for j in 1..=n {
                let best = sim[0].clone();
                sim[j] = best.iter().zip(&sim[j]).map(|(b, x)| b + 0.5 * (x - b)).collect();
                fsim[j] = f.call(&sim[j])?;
            }
        }
        iterations += 1;
        sort_simplex(&mut sim, &mut fsim);
        trace.push(fsim[0]);
    }
    let evaluations = f.log.len();
    Ok(OptimizationResult {
        best_params: sim[0].clone(),
        best_value: fsim[0],
        iterations,
        evaluations,
        converged,
        trace,
        log: f.log,
        seed: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosen(x: &[f64]) -> f64 {
        100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2)
    }

    #[test]
    fn convex_quadratic() {
        let r = nelder_mead(|x| x.iter().map(|v| (v - 1.0).powi(2)).sum(), &[0.0; 3], &OptimizerConfig::default()).unwrap();
        assert!(r.converged);
        for v in &r.best_params {
            assert!((v - 1.0).abs() < 1e-2);
        }
    }

    #[test]
    fn rosenbrock_reference_path() {
        // Reference values from an independent simplex implementation with
        // the same initial simplex, coefficients and tolerances.
        let r = nelder_mead(rosen, &[-1.2, 1.0], &OptimizerConfig::default()).unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations + 1, 100);
        assert_eq!(r.evaluations, 181);
        assert!((r.best_value - 1.408_701_499_834_476_2e-10).abs() < 1e-20);
        assert!((r.best_params[0] - 1.000_011_55).abs() < 1e-8);
        assert!((r.best_params[1] - 1.000_022_83).abs() < 1e-8);
        let first = r.trace.iter().position(|&f| f < 1e-6).unwrap() + 1;
        assert_eq!(first, 83);
    }

    #[test]
    fn deterministic() {
        let a = nelder_mead(rosen, &[-1.2, 1.0], &OptimizerConfig::default()).unwrap();
        let b = nelder_mead(rosen, &[-1.2, 1.0], &OptimizerConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn nan_aborts_with_vector() {
        let r = nelder_mead(|x| if x[0] > 0.05 { f64::NAN } else { x[0] * x[0] }, &[0.0], &OptimizerConfig::default());
        match r {
            Err(OptimizeError::NanObjective(v)) => assert!(v[0] > 0.05),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn infinite_values_keep_simplex_alive() {
        let r = nelder_mead(
            |x| if x[0] > 2.0 { f64::INFINITY } else { (x[0] - 1.5).powi(2) },
            &[0.0],
            &OptimizerConfig::default(),
        )
        .unwrap();
        assert!((r.best_params[0] - 1.5).abs() < 1e-2);
    }

    #[test]
    fn best_value_bounds_log() {
        let r = nelder_mead(rosen, &[0.5, -0.3], &OptimizerConfig::default()).unwrap();
        assert!(r.log.iter().all(|e| e.value >= r.best_value));
    }
}
