//! Propagators for the reduced state under a time-dependent protocol.
//!
//! Three generators share one fixed-step RK4 driver:
//! - [`heom::Heom`], hierarchical equations of motion (numerically exact),
//! - [`tcl2::Tcl2`], second-order time-convolutionless equation with
//!   auxiliary memory operators,
//! - [`agksl::Agksl`], adiabatic Lindblad equation in the instantaneous
//!   eigenframe.
//!
//! Every solver state is a flat slice of 2x2 blocks whose first block is the
//! reduced density matrix.

pub mod agksl;
pub mod heom;
pub mod rk4;
mod steady;
pub mod tcl2;

use crate::bath::{ExponentialExpansion, SpectralDensity};
use crate::op2::{self, Op2};
use crate::protocol::{grid_steps, Protocol, ProtocolError, Window};
use crate::system::{SystemError, TwoLevelModel};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::OnceLock;
use thiserror::Error;

pub use agksl::Agksl;
pub use heom::{Heom, HierarchyIndex, HierarchyState};
pub use rk4::Rk4;
pub use tcl2::{Tcl2, Tcl2State};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("propagation diverged at step {step} (t = {time})")]
    Divergence { step: usize, time: f64 },
    #[error("equilibration did not converge within t = {t_max}: last change {last_change:e}")]
    EquilibrationFailure { t_max: f64, last_change: f64 },
    #[error("steady-state solve failed: {0}")]
    SingularSteadyState(String),
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
}

/// Which equation of motion to integrate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Heom,
    Tcl2,
    Agksl,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Heom => "heom",
            Method::Tcl2 => "tcl2",
            Method::Agksl => "agksl",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "heom" => Ok(Method::Heom),
            "tcl2" => Ok(Method::Tcl2),
            "agksl" | "a-gksl" => Ok(Method::Agksl),
            other => Err(format!("unknown method '{other}' (expected heom, tcl2 or agksl)")),
        }
    }
}

/// Integration settings shared by all methods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub method: Method,
    /// RK4 time step.
    pub dt: f64,
    /// Hierarchy depth; ignored by TCL2 and A-GKSL.
    pub depth: usize,
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(DynamicsError::InvalidConfig(format!("dt must be > 0, got {}", self.dt)));
        }
        Ok(())
    }

    /// Default depth: 6 for strong coupling, 4 otherwise.
    pub fn default_depth(spectral: &SpectralDensity) -> usize {
        match spectral {
            SpectralDensity::Drude { xi, .. } if *xi > 0.5 => 6,
            _ => 4,
        }
    }

    /// Default step: `2e-4` for the tunable system with a slow bath, else `1e-3`.
    pub fn default_dt(model: &TwoLevelModel, spectral: &SpectralDensity) -> f64 {
        match (model.kind, spectral) {
            (crate::system::SystemKind::Tunable, SpectralDensity::Drude { gamma, .. }) if *gamma <= 0.2 => 2e-4,
            _ => 1e-3,
        }
    }
}

/// Time-local equation of motion `d state / dt = G(lambda) state`.
pub trait Generator: Send + Sync {
    fn method(&self) -> Method;

    /// Number of 2x2 blocks in the solver state.
    fn state_len(&self) -> usize;

    /// Writes the time derivative of `state` at control value `lambda`.
    fn rhs(&self, lambda: f64, state: &[Op2], out: &mut [Op2]) -> Result<(), DynamicsError>;

    /// Rough upper bound on the generator's spectral radius.
    fn rate_bound(&self, lambda: f64) -> f64;

    /// Stationary state at fixed `lambda` by a direct linear solve, when affordable.
    fn steady_state(&self, lambda: f64) -> Option<Result<Vec<Op2>, DynamicsError>>;

    /// Solver state for a factorized initial condition.
    fn load(&self, rho: &Op2) -> Vec<Op2> {
        let mut v = vec![op2::zero(); self.state_len()];
        v[0] = *rho;
        v
    }
}

/// Running extrema of the physical invariants along a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub max_trace_error: f64,
    pub max_hermiticity_error: f64,
    pub min_eigenvalue: f64,
}

impl Diagnostics {
    fn new() -> Self {
        Diagnostics { max_trace_error: 0.0, max_hermiticity_error: 0.0, min_eigenvalue: f64::INFINITY }
    }

    fn record(&mut self, rho: &Op2) {
        self.max_trace_error = self.max_trace_error.max((op2::trace(rho) - 1.0).norm());
        self.max_hermiticity_error = self.max_hermiticity_error.max(op2::hermiticity_error(rho));
        self.min_eigenvalue = self.min_eigenvalue.min(op2::hermitian_eigenvalues(rho)[0]);
    }
}

/// Reduced-state samples on the uniform grid `t_n = n tau / N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub method: Method,
    pub dt: f64,
    pub depth: usize,
    /// Number of bath expansion terms.
    pub terms: usize,
    pub window: Window,
    pub times: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub states: Vec<Op2>,
    /// Generator-evaluated time derivatives of the reduced state.
    pub derivatives: Vec<Op2>,
    pub diagnostics: Diagnostics,
}

/// Divergence threshold on the reduced-state entries.
const BLOWUP: f64 = 1e3;

/// Integrate from `init` under `protocol` with fixed step `dt`.
pub fn propagate(
    generator: &dyn Generator,
    init: &[Op2],
    protocol: &Protocol,
    dt: f64,
) -> Result<Trajectory, DynamicsError> {
    protocol.validate()?;
    let tau = protocol.window.tau;
    let n = grid_steps(tau, dt)?;
    if let Some(width) = protocol.width() {
        grid_steps(width, dt)?;
    }
    if init.len() != generator.state_len() {
        return Err(DynamicsError::InvalidConfig(format!(
            "initial state has {} blocks, generator expects {}",
            init.len(),
            generator.state_len()
        )));
    }
    let time = |k: usize| tau * k as f64 / n as f64;
    let mut rk = Rk4::new(generator.state_len());
    let mut state = init.to_vec();
    let mut traj = Trajectory {
        method: generator.method(),
        dt,
        depth: 0,
        terms: 0,
        window: protocol.window,
        times: Vec::with_capacity(n + 1),
        lambdas: Vec::with_capacity(n + 1),
        states: Vec::with_capacity(n + 1),
        derivatives: Vec::with_capacity(n + 1),
        diagnostics: Diagnostics::new(),
    };
    let mut warned = false;
    for k in 0..=n {
        let t = time(k);
        let lam = protocol.evaluate(t);
        generator.rhs(lam, &state, rk.slope_mut())?;
        traj.times.push(t);
        traj.lambdas.push(lam);
        traj.states.push(state[0]);
        traj.derivatives.push(rk.slope()[0]);
        traj.diagnostics.record(&state[0]);
        if traj.diagnostics.min_eigenvalue < -1e-10 && !warned {
            log::warn!("{} state lost positivity at t = {t}", generator.method());
            warned = true;
        }
        if k == n {
            break;
        }
        let t1 = time(k + 1);
        let lm = protocol.evaluate(0.5 * (t + t1));
        let l1 = protocol.evaluate(t1);
        rk.step_with_slope(generator, &mut state, t1 - t, lm, l1)?;
        if !op2::is_finite(&state[0]) || op2::max_abs(&state[0]) > BLOWUP {
            return Err(DynamicsError::Divergence { step: k + 1, time: t1 });
        }
    }
    Ok(traj)
}

/// Result of [`equilibrate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub state: Vec<Op2>,
    /// Simulated relaxation time spent (0 when solved directly).
    pub relax_time: f64,
}

/// Stationarity threshold on the reduced state over one unit of time.
pub const STATIONARY_TOL: f64 = 1e-12;

/// Maximum relaxation time: longer for slow baths.
pub fn default_t_max(spectral: &SpectralDensity) -> f64 {
    match spectral {
        SpectralDensity::Drude { gamma, .. } if *gamma <= 0.2 => 1e4,
        _ => 1e3,
    }
}

/// Largest deviation of the reduced state from its starting value over one
/// unit of time at fixed `lambda`.
fn drift_over_unit_time(
    generator: &dyn Generator,
    state: &mut [Op2],
    lambda: f64,
    dt: f64,
    rk: &mut Rk4,
) -> Result<f64, DynamicsError> {
    let steps = (1.0 / dt).round().max(1.0) as usize;
    let h = 1.0 / steps as f64;
    let start = state[0];
    let mut drift = 0.0_f64;
    for k in 0..steps {
        rk.step(generator, state, h, lambda, lambda, lambda)?;
        if !op2::is_finite(&state[0]) || op2::max_abs(&state[0]) > BLOWUP {
            return Err(DynamicsError::Divergence { step: k + 1, time: h * (k + 1) as f64 });
        }
        drift = drift.max(op2::max_abs(&(state[0] - start)));
    }
    Ok(drift)
}

/// Equilibrate at fixed `lambda` from the factorized Gibbs state.
///
/// Tries a direct stationary solve first and falls back to relaxation.
/// Either way the result must stay within [`STATIONARY_TOL`] over one unit
/// of time at the process step `dt`.
pub fn equilibrate(
    generator: &dyn Generator,
    model: &TwoLevelModel,
    lambda: f64,
    beta: f64,
    dt: f64,
    t_max: f64,
) -> Result<Equilibrium, DynamicsError> {
    let init = generator.load(&model.gibbs_state(lambda, beta));
    let mut probe = vec![op2::zero(); init.len()];
    generator.rhs(lambda, &init, &mut probe)?;
    if probe.iter().all(|b| op2::max_abs(b) <= 1e-15) {
        return Ok(Equilibrium { state: init, relax_time: 0.0 });
    }
    let mut rk = Rk4::new(generator.state_len());
    if let Some(direct) = generator.steady_state(lambda) {
        match direct {
            Ok(state) => {
                let mut check = state.clone();
                let drift = drift_over_unit_time(generator, &mut check, lambda, dt, &mut rk)?;
                if drift < STATIONARY_TOL {
                    return Ok(Equilibrium { state, relax_time: 0.0 });
                }
                log::debug!("direct steady state drifts by {drift:e}; relaxing instead");
            }
            Err(e) => log::debug!("direct steady state failed ({e}); relaxing instead"),
        }
    }
    let stable = 2.0 / generator.rate_bound(lambda).max(1e-12);
    let dt_relax = 1.0 / (1.0 / stable.min(0.05)).ceil();
    let mut state = init;
    let mut elapsed = 0.0;
    let mut last = f64::INFINITY;
    while elapsed < t_max {
        last = drift_over_unit_time(generator, &mut state, lambda, dt_relax, &mut rk)?;
        elapsed += 1.0;
        if last < STATIONARY_TOL {
            let mut check = state.clone();
            if drift_over_unit_time(generator, &mut check, lambda, dt, &mut rk)? < STATIONARY_TOL {
                return Ok(Equilibrium { state, relax_time: elapsed });
            }
        }
    }
    Err(DynamicsError::EquilibrationFailure { t_max, last_change: last })
}

/// Build the generator for a method.
pub fn build_generator(
    model: &TwoLevelModel,
    spectral: &SpectralDensity,
    beta: f64,
    expansion: &ExponentialExpansion,
    solver: &SolverConfig,
) -> Result<Box<dyn Generator>, DynamicsError> {
    solver.validate()?;
    model.validate()?;
    Ok(match solver.method {
        Method::Heom => Box::new(Heom::new(model, expansion, solver.depth)),
        Method::Tcl2 => Box::new(Tcl2::new(model, expansion)),
        Method::Agksl => Box::new(Agksl::new(model, spectral, beta, expansion)),
    })
}

/// A model, bath and solver bundled with a cached equilibrium state.
pub struct Simulation {
    pub model: TwoLevelModel,
    pub spectral: SpectralDensity,
    pub beta: f64,
    pub expansion: ExponentialExpansion,
    pub solver: SolverConfig,
    /// Relaxation time limit for equilibration.
    pub t_max: f64,
    generator: Box<dyn Generator>,
    equilibrium: OnceLock<Result<Vec<Op2>, DynamicsError>>,
}

impl fmt::Debug for Simulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Simulation")
            .field("model", &self.model)
            .field("spectral", &self.spectral)
            .field("beta", &self.beta)
            .field("terms", &self.expansion.len())
            .field("solver", &self.solver)
            .finish()
    }
}

impl Simulation {
    pub fn new(
        model: TwoLevelModel,
        spectral: SpectralDensity,
        beta: f64,
        expansion: ExponentialExpansion,
        solver: SolverConfig,
    ) -> Result<Self, DynamicsError> {
        let generator = build_generator(&model, &spectral, beta, &expansion, &solver)?;
        Ok(Simulation {
            model,
            spectral,
            beta,
            expansion,
            solver,
            t_max: default_t_max(&spectral),
            generator,
            equilibrium: OnceLock::new(),
        })
    }

    /// Same physics with a different solver configuration.
    pub fn with_solver(&self, solver: SolverConfig) -> Result<Self, DynamicsError> {
        Simulation::new(self.model, self.spectral, self.beta, self.expansion.clone(), solver)
    }

    pub fn generator(&self) -> &dyn Generator {
        self.generator.as_ref()
    }

    /// Equilibrated solver state at `lambda_i`, computed once.
    pub fn initial_state(&self) -> Result<&[Op2], DynamicsError> {
        self.equilibrium
            .get_or_init(|| {
                equilibrate(
                    self.generator(),
                    &self.model,
                    self.model.lambda_i,
                    self.beta,
                    self.solver.dt,
                    self.t_max,
                )
                .map(|e| e.state)
            })
            .as_ref()
            .map(|v| v.as_slice())
            .map_err(Clone::clone)
    }

    /// Equilibrated solver state at an arbitrary control value (not cached).
    pub fn equilibrium_at(&self, lambda: f64) -> Result<Vec<Op2>, DynamicsError> {
        equilibrate(self.generator(), &self.model, lambda, self.beta, self.solver.dt, self.t_max).map(|e| e.state)
    }

    /// Propagate the equilibrated state under `protocol`.
    pub fn run(&self, protocol: &Protocol) -> Result<Trajectory, DynamicsError> {
        let init = self.initial_state()?;
        let mut traj = propagate(self.generator(), init, protocol, self.solver.dt)?;
        traj.depth = if self.solver.method == Method::Heom { self.solver.depth } else { 0 };
        traj.terms = self.expansion.len();
        Ok(traj)
    }

    /// Window spanning the model's endpoints.
    pub fn window(&self, tau: f64) -> Result<Window, DynamicsError> {
        Ok(Window::for_model(&self.model, tau)?)
    }
}
