//! Work, free-energy difference and the second-law check.

use crate::dynamics::{DynamicsError, Method, Simulation, Trajectory};
use crate::op2;
use crate::protocol::{Protocol, ProtocolError};
use crate::quad;
use crate::system::TwoLevelModel;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ThermoError {
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("Simpson integration needs an even number of intervals, got {0}")]
    OddIntervals(usize),
    #[error("free-energy cache: {0}")]
    Cache(String),
}

fn energy_flux(traj: &Trajectory, model: &TwoLevelModel) -> Result<(f64, Vec<f64>, f64), ThermoError> {
    let n = traj.states.len();
    if n < 2 {
        return Err(ThermoError::OddIntervals(0));
    }
    let h = traj.window.tau / (n - 1) as f64;
    let boundary = op2::trace_product(&model.hamiltonian(traj.window.lambda_f), &traj.states[n - 1]).re
        - op2::trace_product(&model.hamiltonian(traj.window.lambda_i), &traj.states[0]).re;
    let flux = traj
        .lambdas
        .iter()
        .zip(&traj.derivatives)
        .map(|(&l, d)| op2::trace_product(&model.hamiltonian(l), d).re)
        .collect();
    Ok((boundary, flux, h))
}

/// `W = tr[H(lambda_f) rho(tau)] - tr[H(lambda_i) rho(0)] - int_0^tau tr[H(lambda(t)) d rho/dt] dt`
/// with composite Simpson on the trajectory grid.
pub fn work(traj: &Trajectory, model: &TwoLevelModel) -> Result<f64, ThermoError> {
    let intervals = traj.states.len().saturating_sub(1);
    if intervals == 0 || intervals % 2 == 1 {
        return Err(ThermoError::OddIntervals(intervals));
    }
    let (boundary, flux, h) = energy_flux(traj, model)?;
    Ok(boundary - quad::simpson(&flux, h))
}

/// Same as [`work`] with the trapezoid rule, for cross-checks.
pub fn work_trapezoid(traj: &Trajectory, model: &TwoLevelModel) -> Result<f64, ThermoError> {
    let (boundary, flux, h) = energy_flux(traj, model)?;
    let integral: f64 = flux.windows(2).map(|w| 0.5 * h * (w[0] + w[1])).sum();
    Ok(boundary - integral)
}

/// Propagate from equilibrium and return the work.
pub fn evaluate_work(sim: &Simulation, protocol: &Protocol) -> Result<f64, ThermoError> {
    let traj = sim.run(protocol)?;
    work(&traj, &sim.model)
}

/// Work with its free-energy reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkReport {
    pub work: f64,
    pub delta_f: f64,
    pub excess: f64,
    pub method: Method,
    pub protocol: String,
    pub dt: f64,
    pub depth: usize,
    pub terms: usize,
}

impl WorkReport {
    pub fn new(sim: &Simulation, protocol: &Protocol, work: f64, delta_f: f64) -> Self {
        WorkReport {
            work,
            delta_f,
            excess: work - delta_f,
            method: sim.solver.method,
            protocol: protocol.descriptor(),
            dt: sim.solver.dt,
            depth: sim.solver.depth,
            terms: sim.expansion.len(),
        }
    }
}

/// Outcome of [`second_law_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecondLaw {
    pub pass: bool,
    /// `W - dF`.
    pub margin: f64,
}

/// Absolute tolerance for second-law assertions.
pub const SECOND_LAW_TOL: f64 = 1e-6;

/// Passes iff `W >= dF - tol`.
pub fn second_law_check(report: &WorkReport, tol: f64) -> SecondLaw {
    let margin = report.work - report.delta_f;
    SecondLaw { pass: margin >= -tol, margin }
}

/// Free-energy difference of the uncoupled system.
pub fn delta_f_uncoupled(model: &TwoLevelModel, beta: f64) -> f64 {
    model.free_energy(model.lambda_f, beta) - model.free_energy(model.lambda_i, beta)
}

/// How to obtain the free-energy difference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "route", rename_all = "snake_case")]
pub enum DeltaFRoute {
    /// Work of a linear protocol of duration `tau` (quasistatic for large `tau`).
    Quasistatic { tau: f64 },
    /// `int <dH/dlambda>_eq dlambda` with `nodes` Gauss-Legendre nodes over
    /// stationary states at fixed control.
    Integration { nodes: usize },
}

impl DeltaFRoute {
    /// Quasistatic duration: `2e4` for driven, `2e3` for tunable systems.
    pub fn default_quasistatic(model: &TwoLevelModel) -> Self {
        match model.kind {
            crate::system::SystemKind::Driven => DeltaFRoute::Quasistatic { tau: 2e4 },
            crate::system::SystemKind::Tunable => DeltaFRoute::Quasistatic { tau: 2e3 },
        }
    }
}

impl Default for DeltaFRoute {
    fn default() -> Self {
        DeltaFRoute::Integration { nodes: 16 }
    }
}

/// Thermodynamic integration of `<dH/dlambda>` over stationary states.
fn integrate_equilibria(sim: &Simulation, nodes: usize) -> Result<f64, ThermoError> {
    let (li, lf) = (sim.model.lambda_i, sim.model.lambda_f);
    if li == lf {
        return Ok(0.0);
    }
    let (x, w) = quad::gauss_legendre(nodes.max(1));
    let dh = sim.model.control_operator();
    let mut total = 0.0;
    for (xi, wi) in x.iter().zip(&w) {
        let lambda = 0.5 * (li + lf) + 0.5 * (lf - li) * xi;
        let state = sim.equilibrium_at(lambda)?;
        total += wi * op2::trace_product(&dh, &state[0]).re;
    }
    Ok(0.5 * (lf - li) * total)
}

/// Free-energy difference along `route`, memoized in `cache` when given.
pub fn free_energy_difference(
    sim: &Simulation,
    route: DeltaFRoute,
    cache: Option<&DeltaFCache>,
) -> Result<f64, ThermoError> {
    let key = cache_key(sim, route);
    if let Some(c) = cache {
        if let Some(v) = c.get(&key) {
            return Ok(v);
        }
    }
    let value = match route {
        DeltaFRoute::Quasistatic { tau } => {
            let p = Protocol::linear(sim.window(tau)?);
            evaluate_work(sim, &p)?
        }
        DeltaFRoute::Integration { nodes } => integrate_equilibria(sim, nodes)?,
    };
    if let Some(c) = cache {
        c.put(&key, value)?;
    }
    Ok(value)
}

#[derive(Serialize)]
struct KeyMaterial<'a> {
    model: &'a TwoLevelModel,
    spectral: &'a crate::bath::SpectralDensity,
    beta: f64,
    method: Method,
    dt: f64,
    depth: usize,
    terms: usize,
    eta: f64,
    fit_error: f64,
    route: DeltaFRoute,
}

/// Content hash identifying a free-energy computation.
pub fn cache_key(sim: &Simulation, route: DeltaFRoute) -> String {
    let material = KeyMaterial {
        model: &sim.model,
        spectral: &sim.spectral,
        beta: sim.beta,
        method: sim.solver.method,
        dt: sim.solver.dt,
        depth: if sim.solver.method == Method::Heom { sim.solver.depth } else { 0 },
        terms: sim.expansion.len(),
        eta: sim.expansion.eta,
        fit_error: sim.expansion.fit_error,
        route,
    };
    let json = serde_json::to_string(&material).expect("key material serializes");
    hex::encode(Sha256::digest(json.as_bytes()))
}

#[derive(Serialize, Deserialize)]
struct CacheEntry {
    schema_version: u32,
    delta_f: f64,
}

/// In-memory memo of free-energy differences, optionally persisted as one
/// JSON file per key. Writes go through a temporary file and a rename.
#[derive(Debug, Default)]
pub struct DeltaFCache {
    dir: Option<PathBuf>,
    mem: Mutex<HashMap<String, f64>>,
}

impl DeltaFCache {
    pub fn in_memory() -> Self {
        DeltaFCache::default()
    }

    pub fn on_disk(dir: impl Into<PathBuf>) -> Result<Self, ThermoError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| ThermoError::Cache(format!("{}: {e}", dir.display())))?;
        Ok(DeltaFCache { dir: Some(dir), mem: Mutex::new(HashMap::new()) })
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{key}.json")))
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        if let Some(v) = self.mem.lock().expect("cache lock").get(key) {
            return Some(*v);
        }
        let path = self.path(key)?;
        let text = std::fs::read_to_string(path).ok()?;
        let entry: CacheEntry = serde_json::from_str(&text).ok()?;
        self.mem.lock().expect("cache lock").insert(key.to_string(), entry.delta_f);
        Some(entry.delta_f)
    }

    pub fn put(&self, key: &str, value: f64) -> Result<(), ThermoError> {
        self.mem.lock().expect("cache lock").insert(key.to_string(), value);
        if let Some(path) = self.path(key) {
            let text = serde_json::to_string(&CacheEntry { schema_version: 1, delta_f: value })
                .map_err(|e| ThermoError::Cache(e.to_string()))?;
            write_atomic(&path, text.as_bytes()).map_err(|e| ThermoError::Cache(format!("{}: {e}", path.display())))?;
        }
        Ok(())
    }
}

/// Write `bytes` to `path` through a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}
