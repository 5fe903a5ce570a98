//! TOML run configuration.
//!
//! Every section is optional and falls back to defaults; unknown keys are
//! rejected. Times are in units of the level spacing (`epsilon = hbar = 1`).

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use workmin::bath::SpectralDensity;
use workmin::brownian::{Regime, TrapModel};
use workmin::dynamics::{Method, SolverConfig};
use workmin::optimize::{AnsatzKind, OptimizerConfig};
use workmin::protocol::{imp3_initial_guess, Imp3Params, Protocol, Window};
use workmin::system::{SystemKind, TwoLevelModel};
use workmin::thermo::DeltaFRoute;

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemConfig,
    pub bath: BathConfig,
    pub protocol: ProtocolConfig,
    pub solver: SolverSection,
    pub optimizer: OptimizerConfig,
    pub delta_f: DeltaFSection,
    pub sweep: SweepConfig,
    pub trap: TrapConfig,
    pub output: OutputConfig,
    /// Seed for randomized brute-force restarts.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub kind: SystemKind,
    /// Level spacing.
    pub epsilon: f64,
    /// Defaults: 0 (driven) or 1 (tunable).
    pub lambda_i: Option<f64>,
    /// Defaults: 1 (driven) or 2 (tunable).
    pub lambda_f: Option<f64>,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig { kind: SystemKind::Driven, epsilon: 1.0, lambda_i: None, lambda_f: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BathKind {
    Drude,
    Ohmic,
    OhmicPlusDrude,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BathConfig {
    pub kind: BathKind,
    /// Drude cutoff.
    pub gamma: f64,
    /// Drude coupling strength.
    pub xi: f64,
    /// Ohmic friction.
    pub zeta: f64,
    /// Inverse temperature.
    pub beta: f64,
    /// Relative tolerance of the exponential fit of the correlation function.
    pub fit_tol: f64,
    /// Largest number of Matsubara terms tried by the fit.
    pub k_max: usize,
}

impl Default for BathConfig {
    fn default() -> Self {
        BathConfig { kind: BathKind::Drude, gamma: 1.0, xi: 1.0, zeta: 1.0, beta: 1.0, fit_tol: 1e-3, k_max: 64 }
    }
}

impl BathConfig {
    pub fn spectral(&self, epsilon: f64) -> Result<SpectralDensity, CliError> {
        Ok(match self.kind {
            BathKind::Drude => SpectralDensity::drude(self.gamma, self.xi)?,
            BathKind::Ohmic => SpectralDensity::ohmic(self.zeta, epsilon)?,
            BathKind::OhmicPlusDrude => SpectralDensity::ohmic_plus_drude(self.zeta, self.gamma, self.xi, epsilon)?,
        })
    }
}

/// Protocol family, shared by `simulate` (fixed shapes) and `optimize` (ansaetze).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    Constant,
    Linear,
    Imp3,
    Poly3,
    PiecewiseLinear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    pub kind: ProtocolKind,
    /// Duration of the control window.
    pub tau: f64,
    /// Impulse width for IMP3 and node spacing for piecewise-linear protocols.
    pub delta: f64,
    /// IMP3 parameters; missing values come from the physics-informed guess.
    pub h: Option<f64>,
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    /// POLY3 coefficients.
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    /// Piecewise-linear node values.
    pub values: Vec<f64>,
    /// Constant control value.
    pub lambda: Option<f64>,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            kind: ProtocolKind::Imp3,
            tau: 0.5,
            delta: 1e-2,
            h: None,
            slope: None,
            intercept: None,
            a1: 0.0,
            a2: 0.0,
            a3: 0.0,
            values: Vec::new(),
            lambda: None,
        }
    }
}

impl ProtocolConfig {
    pub fn ansatz(&self) -> AnsatzKind {
        match self.kind {
            ProtocolKind::Constant | ProtocolKind::Linear => AnsatzKind::Linear,
            ProtocolKind::Imp3 => AnsatzKind::Imp3,
            ProtocolKind::Poly3 => AnsatzKind::Poly3,
            ProtocolKind::PiecewiseLinear => AnsatzKind::BruteForce,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub method: Method,
    /// RK4 step; default 1e-3 (2e-4 for the tunable system at gamma <= 0.2).
    pub dt: Option<f64>,
    /// Hierarchy depth; default 6 for xi > 0.5, else 4.
    pub depth: Option<usize>,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection { method: Method::Heom, dt: None, depth: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouteKind {
    Integration,
    Quasistatic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeltaFSection {
    pub route: RouteKind,
    /// Gauss-Legendre nodes for thermodynamic integration.
    pub nodes: usize,
    /// Duration of the quasistatic linear protocol; default 2e4 (driven) or 2e3 (tunable).
    pub tau: Option<f64>,
    /// Directory of the persistent free-energy cache.
    pub cache_dir: Option<PathBuf>,
}

impl Default for DeltaFSection {
    fn default() -> Self {
        DeltaFSection { route: RouteKind::Integration, nodes: 16, tau: None, cache_dir: None }
    }
}

impl DeltaFSection {
    pub fn route(&self, model: &TwoLevelModel) -> DeltaFRoute {
        match self.route {
            RouteKind::Integration => DeltaFRoute::Integration { nodes: self.nodes },
            RouteKind::Quasistatic => match self.tau {
                Some(tau) => DeltaFRoute::Quasistatic { tau },
                None => DeltaFRoute::default_quasistatic(model),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub betas: Vec<f64>,
    pub gammas: Vec<f64>,
    pub xis: Vec<f64>,
    pub taus: Vec<f64>,
    pub kinds: Vec<AnsatzKind>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            betas: vec![0.2, 1.0, 5.0],
            gammas: vec![0.2, 1.0, 5.0],
            xis: vec![0.2, 1.0],
            taus: vec![0.5, 1.0, 2.0, 5.0, 10.0, 15.0],
            kinds: vec![AnsatzKind::Linear, AnsatzKind::Imp3, AnsatzKind::Poly3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrapConfig {
    /// Trap frequency.
    pub epsilon: f64,
    pub kind: BathKind,
    pub zeta: f64,
    pub gamma: f64,
    pub xi: f64,
    pub lambda_i: f64,
    pub lambda_f: f64,
    pub tau: f64,
    pub regime: Regime,
    /// Grid step of the quadratic program.
    pub step: f64,
    /// RK4 step of the time-domain work.
    pub dt: f64,
}

impl Default for TrapConfig {
    fn default() -> Self {
        TrapConfig {
            epsilon: 1.0,
            kind: BathKind::Ohmic,
            zeta: 1.0,
            gamma: 1.0,
            xi: 1.0,
            lambda_i: 0.0,
            lambda_f: 1.0,
            tau: 0.5,
            regime: Regime::Underdamped,
            step: 2e-3,
            dt: 1e-4,
        }
    }
}

impl TrapConfig {
    pub fn model(&self) -> Result<TrapModel, CliError> {
        let bath = BathConfig { kind: self.kind, gamma: self.gamma, xi: self.xi, zeta: self.zeta, ..Default::default() };
        Ok(TrapModel::new(
            self.epsilon,
            bath.spectral(self.epsilon)?,
            self.lambda_i,
            self.lambda_f,
            self.tau,
            self.regime,
        )?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("out") }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn model(&self) -> Result<TwoLevelModel, CliError> {
        let s = &self.system;
        let (li, lf) = match s.kind {
            SystemKind::Driven => (0.0, 1.0),
            SystemKind::Tunable => (1.0, 2.0),
        };
        Ok(TwoLevelModel::new(s.kind, s.epsilon, s.lambda_i.unwrap_or(li), s.lambda_f.unwrap_or(lf))?)
    }

    pub fn spectral(&self) -> Result<SpectralDensity, CliError> {
        self.bath.spectral(self.system.epsilon)
    }

    pub fn solver(&self) -> Result<SolverConfig, CliError> {
        let model = self.model()?;
        let spectral = self.spectral()?;
        let cfg = SolverConfig {
            method: self.solver.method,
            dt: self.solver.dt.unwrap_or_else(|| SolverConfig::default_dt(&model, &spectral)),
            depth: self.solver.depth.unwrap_or_else(|| SolverConfig::default_depth(&spectral)),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// The fixed protocol described by the `[protocol]` section.
    pub fn protocol(&self) -> Result<Protocol, CliError> {
        let model = self.model()?;
        let p = &self.protocol;
        let window = Window::for_model(&model, p.tau)?;
        Ok(match p.kind {
            ProtocolKind::Constant => Protocol::constant(window, p.lambda.unwrap_or(model.lambda_i)),
            ProtocolKind::Linear => Protocol::linear(window),
            ProtocolKind::Poly3 => Protocol::poly3(window, p.a1, p.a2, p.a3),
            ProtocolKind::PiecewiseLinear => Protocol::piecewise_linear(window, p.delta, p.values.clone())?,
            ProtocolKind::Imp3 => {
                let guess = match (p.h, p.slope, p.intercept) {
                    (Some(h), Some(slope), Some(intercept)) => Imp3Params { h, slope, intercept },
                    _ => imp3_initial_guess(&model, &self.spectral()?, self.bath.beta, p.tau, p.delta)?,
                };
                let params = Imp3Params {
                    h: p.h.unwrap_or(guess.h),
                    slope: p.slope.unwrap_or(guess.slope),
                    intercept: p.intercept.unwrap_or(guess.intercept),
                };
                Protocol::imp3(window, params, p.delta)?
            }
        })
    }

    /// Check every section that the given command reads.
    pub fn validate(&self) -> Result<(), CliError> {
        self.model()?;
        self.spectral()?.validate()?;
        if !(self.bath.beta > 0.0 && self.bath.beta.is_finite()) {
            return Err(CliError::Config(format!("bath.beta must be positive, got {}", self.bath.beta)));
        }
        if !(self.bath.fit_tol > 0.0) || self.bath.k_max == 0 {
            return Err(CliError::Config("bath.fit_tol must be positive and bath.k_max >= 1".into()));
        }
        self.solver()?;
        self.optimizer.validate()?;
        if self.delta_f.nodes == 0 {
            return Err(CliError::Config("delta_f.nodes must be >= 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_valid() {
        let c = RunConfig::parse("").unwrap();
        c.validate().unwrap();
        assert_eq!(c.solver().unwrap().depth, 6);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(RunConfig::parse("[bath]\ngamma = 1.0\ncolor = 3\n"), Err(CliError::Config(_))));
        assert!(matches!(RunConfig::parse("[nonsense]\n"), Err(CliError::Config(_))));
    }

    #[test]
    fn tunable_defaults() {
        let c = RunConfig::parse("[system]\nkind = \"tunable\"\n[bath]\ngamma = 0.2\n").unwrap();
        let m = c.model().unwrap();
        assert_eq!((m.lambda_i, m.lambda_f), (1.0, 2.0));
        assert_eq!(c.solver().unwrap().dt, 2e-4);
    }

    #[test]
    fn round_trips_through_toml() {
        let mut c = RunConfig::default();
        c.seed = Some(7);
        c.sweep.kinds = vec![AnsatzKind::Poly3];
        let text = toml::to_string(&c).unwrap();
        assert_eq!(RunConfig::parse(&text).unwrap(), c);
    }
}
