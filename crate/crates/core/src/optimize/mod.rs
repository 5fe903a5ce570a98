//! Work minimization over protocol ansaetze.

pub mod nelder_mead;

pub use nelder_mead::{nelder_mead, Evaluation, OptimizationResult, OptimizerConfig};

use crate::bath::{expand_correlation, BathError, SpectralDensity};
use crate::dynamics::{DynamicsError, Simulation, SolverConfig};
use crate::protocol::{grid_steps, height_reference, imp3_initial_guess, Imp3Params, Protocol, ProtocolError, Shape};
use crate::system::TwoLevelModel;
use crate::thermo::{evaluate_work, free_energy_difference, DeltaFCache, DeltaFRoute, ThermoError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizeError {
    #[error("invalid optimizer configuration: {0}")]
    InvalidConfig(String),
    #[error("objective returned NaN at {0:?}")]
    NanObjective(Vec<f64>),
    #[error("objective is not finite at the starting point ({0})")]
    NonFiniteStart(f64),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Thermo(#[from] ThermoError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Bath(#[from] BathError),
}

/// Protocol families that can be optimized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnsatzKind {
    Linear,
    Imp3,
    Poly3,
    /// Piecewise-linear with every node free.
    BruteForce,
}

impl AnsatzKind {
    pub fn name(&self) -> &'static str {
        match self {
            AnsatzKind::Linear => "linear",
            AnsatzKind::Imp3 => "imp3",
            AnsatzKind::Poly3 => "poly3",
            AnsatzKind::BruteForce => "brute_force",
        }
    }
}

impl std::str::FromStr for AnsatzKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "linear" => Ok(AnsatzKind::Linear),
            "imp3" => Ok(AnsatzKind::Imp3),
            "poly3" => Ok(AnsatzKind::Poly3),
            "brute_force" | "bf" | "piecewise_linear" => Ok(AnsatzKind::BruteForce),
            other => Err(format!("unknown ansatz '{other}'")),
        }
    }
}

/// An optimized protocol with its work and the optimizer record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolOptimum {
    pub protocol: Protocol,
    pub work: f64,
    pub result: OptimizationResult,
}

/// Work of `protocol`, or `+inf` (logged) if propagation fails.
fn objective_value(sim: &Simulation, protocol: Result<Protocol, ProtocolError>, params: &[f64]) -> f64 {
    match protocol.map_err(ThermoError::from).and_then(|p| evaluate_work(sim, &p)) {
        Ok(w) => w,
        Err(e) => {
            log::warn!("evaluation failed at {params:?}: {e}");
            f64::INFINITY
        }
    }
}

/// IMP3 in normalized coordinates `(h', slope, intercept)`.
///
/// `h = h' * reference` where the reference `(intercept0 - lambda_i)/delta`
/// is fixed at the initial guess; a degenerate reference falls back to raw `h`.
pub fn optimize_imp3(
    sim: &Simulation,
    tau: f64,
    delta: f64,
    cfg: &OptimizerConfig,
) -> Result<ProtocolOptimum, OptimizeError> {
    let guess = imp3_initial_guess(&sim.model, &sim.spectral, sim.beta, tau, delta)?;
    optimize_imp3_from(sim, tau, delta, guess, cfg).map(|(opt, _)| opt)
}

/// IMP3 optimization from an explicit starting point; also returns the
/// work at the start.
pub fn optimize_imp3_from(
    sim: &Simulation,
    tau: f64,
    delta: f64,
    start: Imp3Params,
    cfg: &OptimizerConfig,
) -> Result<(ProtocolOptimum, f64), OptimizeError> {
    let window = sim.window(tau)?;
    Protocol::imp3(window, start, delta)?;
    let reference = height_reference(start.intercept, sim.model.lambda_i, delta).unwrap_or(1.0);
    let build = |x: &[f64]| Imp3Params { h: x[0] * reference, slope: x[1], intercept: x[2] };
    let x0 = [start.h / reference, start.slope, start.intercept];
    let start_work = objective_value(sim, Protocol::imp3(window, start, delta), &x0);
    let result = nelder_mead(|x| objective_value(sim, Protocol::imp3(window, build(x), delta), x), &x0, cfg)?;
    let protocol = Protocol::imp3(window, build(&result.best_params), delta)?;
    Ok((ProtocolOptimum { protocol, work: result.best_value, result }, start_work))
}

/// POLY3 in normalized coordinates `b = (a1 tau^4, a2 tau^3, a3 tau^2)`,
/// starting from the linear protocol.
pub fn optimize_poly3(sim: &Simulation, tau: f64, cfg: &OptimizerConfig) -> Result<ProtocolOptimum, OptimizeError> {
    let window = sim.window(tau)?;
    let build = |x: &[f64]| Protocol::poly3(window, x[0] / tau.powi(4), x[1] / tau.powi(3), x[2] / tau.powi(2));
    let result = nelder_mead(|x| objective_value(sim, Ok(build(x)), x), &[0.0; 3], cfg)?;
    let protocol = build(&result.best_params);
    Ok(ProtocolOptimum { protocol, work: result.best_value, result })
}

/// Piecewise-linear protocol with node spacing `delta`, every node free,
/// seeded from `seed` sampled at the nodes.
pub fn optimize_brute_force(
    sim: &Simulation,
    seed: &Protocol,
    delta: f64,
    cfg: &OptimizerConfig,
) -> Result<ProtocolOptimum, OptimizeError> {
    let start = seed.to_piecewise_linear(delta)?;
    let values = match &start.shape {
        Shape::PiecewiseLinear { values, .. } => values.clone(),
        _ => unreachable!("to_piecewise_linear returns a piecewise-linear protocol"),
    };
    brute_force_from(sim, start.window, delta, &values, cfg)
}

fn brute_force_from(
    sim: &Simulation,
    window: crate::protocol::Window,
    delta: f64,
    values: &[f64],
    cfg: &OptimizerConfig,
) -> Result<ProtocolOptimum, OptimizeError> {
    let build = |x: &[f64]| Protocol::piecewise_linear(window, delta, x.to_vec());
    let result = nelder_mead(|x| objective_value(sim, build(x), x), values, cfg)?;
    let protocol = build(&result.best_params)?;
    Ok(ProtocolOptimum { protocol, work: result.best_value, result })
}

/// Brute-force searches from uniformly random nodes in `[-10, 10]`.
///
/// Restart `r` draws from a ChaCha8 stream seeded with `seed + r`.
pub fn brute_force_random_restarts(
    sim: &Simulation,
    tau: f64,
    delta: f64,
    cfg: &OptimizerConfig,
    seed: u64,
    count: usize,
) -> Result<Vec<ProtocolOptimum>, OptimizeError> {
    let window = sim.window(tau)?;
    let nodes = grid_steps(tau, delta)? + 1;
    (0..count)
        .map(|r| {
            let s = seed.wrapping_add(r as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let values: Vec<f64> = (0..nodes).map(|_| rng.random_range(-10.0..=10.0)).collect();
            let mut opt = brute_force_from(sim, window, delta, &values, cfg)?;
            opt.result.seed = Some(s);
            Ok(opt)
        })
        .collect()
}

/// Optimize one ansatz. Brute force is seeded from the IMP3 optimum.
pub fn optimize_protocol(
    kind: AnsatzKind,
    sim: &Simulation,
    tau: f64,
    delta: f64,
    cfg: &OptimizerConfig,
) -> Result<ProtocolOptimum, OptimizeError> {
    match kind {
        AnsatzKind::Linear => {
            let protocol = Protocol::linear(sim.window(tau)?);
            let work = evaluate_work(sim, &protocol)?;
            let result = OptimizationResult {
                best_params: Vec::new(),
                best_value: work,
                iterations: 0,
                evaluations: 1,
                converged: true,
                trace: Vec::new(),
                log: vec![Evaluation { params: Vec::new(), value: work }],
                seed: None,
            };
            Ok(ProtocolOptimum { protocol, work, result })
        }
        AnsatzKind::Imp3 => optimize_imp3(sim, tau, delta, cfg),
        AnsatzKind::Poly3 => optimize_poly3(sim, tau, cfg),
        AnsatzKind::BruteForce => {
            let imp3 = optimize_imp3(sim, tau, delta, &OptimizerConfig { max_iter: 1000, ..*cfg })?;
            optimize_brute_force(sim, &imp3.protocol, delta, cfg)
        }
    }
}

/// One bath parameter set and the durations to optimize at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyCell {
    pub model: TwoLevelModel,
    pub spectral: SpectralDensity,
    pub beta: f64,
    pub taus: Vec<f64>,
    pub solver: SolverConfig,
    pub fit_tol: f64,
    pub k_max: usize,
    pub delta: f64,
}

/// One line of a survey table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyRow {
    pub beta: f64,
    pub gamma: f64,
    pub xi: f64,
    pub tau: f64,
    pub ansatz: String,
    pub work: f64,
    pub delta_f: f64,
    pub excess: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub descriptor: String,
    /// Full optimum, absent when the cell failed.
    pub protocol: Option<Protocol>,
    pub error: Option<String>,
}

fn drude_params(j: &SpectralDensity) -> (f64, f64) {
    match *j {
        SpectralDensity::Drude { gamma, xi } | SpectralDensity::OhmicPlusDrude { gamma, xi, .. } => (gamma, xi),
        SpectralDensity::Ohmic { .. } => (f64::NAN, f64::NAN),
    }
}

fn run_cell(
    cell: &SurveyCell,
    kinds: &[AnsatzKind],
    cfg: &OptimizerConfig,
    route: DeltaFRoute,
    cache: Option<&DeltaFCache>,
) -> Vec<SurveyRow> {
    let (gamma, xi) = drude_params(&cell.spectral);
    let failed_row = |tau: f64, kind: &str, e: String| SurveyRow {
        beta: cell.beta,
        gamma,
        xi,
        tau,
        ansatz: kind.to_string(),
        work: f64::NAN,
        delta_f: f64::NAN,
        excess: f64::NAN,
        iterations: 0,
        evaluations: 0,
        converged: false,
        descriptor: String::new(),
        protocol: None,
        error: Some(e),
    };
    let setup = (|| -> Result<(Simulation, f64), OptimizeError> {
        let expansion = expand_correlation(&cell.spectral, cell.beta, cell.fit_tol, cell.k_max)?;
        let sim = Simulation::new(cell.model, cell.spectral, cell.beta, expansion, cell.solver)?;
        let df = free_energy_difference(&sim, route, cache)?;
        Ok((sim, df))
    })();
    let (sim, df) = match setup {
        Ok(v) => v,
        Err(e) => {
            return cell
                .taus
                .iter()
                .flat_map(|&tau| kinds.iter().map(move |k| (tau, *k)))
                .map(|(tau, k)| failed_row(tau, k.name(), e.to_string()))
                .collect()
        }
    };
    let mut rows = Vec::new();
    for &tau in &cell.taus {
        for kind in kinds {
            match optimize_protocol(*kind, &sim, tau, cell.delta, cfg) {
                Ok(opt) => rows.push(SurveyRow {
                    beta: cell.beta,
                    gamma,
                    xi,
                    tau,
                    ansatz: kind.name().to_string(),
                    work: opt.work,
                    delta_f: df,
                    excess: opt.work - df,
                    iterations: opt.result.iterations,
                    evaluations: opt.result.evaluations,
                    converged: opt.result.converged,
                    descriptor: opt.protocol.descriptor(),
                    protocol: Some(opt.protocol),
                    error: None,
                }),
                Err(e) => rows.push(failed_row(tau, kind.name(), e.to_string())),
            }
        }
    }
    rows
}

/// Optimize every ansatz in `kinds` at every duration of every cell.
///
/// Cells run on up to `workers` threads; failures are recorded per row and
/// the sweep continues. Rows come back in cell order regardless of scheduling.
pub fn survey(
    cells: &[SurveyCell],
    kinds: &[AnsatzKind],
    cfg: &OptimizerConfig,
    route: DeltaFRoute,
    cache: Option<&DeltaFCache>,
    workers: usize,
) -> Vec<SurveyRow> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Vec<SurveyRow>>>> = Mutex::new(vec![None; cells.len()]);
    std::thread::scope(|scope| {
        for _ in 0..workers.clamp(1, cells.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= cells.len() {
                    break;
                }
                let rows = run_cell(&cells[i], kinds, cfg, route, cache);
                slots.lock().expect("survey slots")[i] = Some(rows);
            });
        }
    });
    slots.into_inner().expect("survey slots").into_iter().flatten().flatten().collect()
}
