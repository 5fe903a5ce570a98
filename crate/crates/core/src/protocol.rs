//! Control-field ansaetze `lambda(t)` on `[0, tau]`.
//!
//! Every protocol is pinned to `lambda_i` before the window and `lambda_f`
//! after it. Inside the window the value may jump at either edge; at `t = 0`
//! and `t = tau` [`Protocol::evaluate`] returns the one-sided interior limits.

use crate::bath::SpectralDensity;
use crate::system::{SystemKind, TwoLevelModel};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("invalid ansatz: {0}")]
    InvalidAnsatz(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("the bath does not couple at the system frequency (J(eps) = 0)")]
    DecoupledGuess,
    #[error("degenerate height reference: intercept equals lambda_i")]
    DegenerateReference,
}

/// Relative tolerance for "divides evenly" checks.
const GRID_TOL: f64 = 1e-9;

/// Number of steps of size `dt` in `span`, if it divides evenly.
pub fn grid_steps(span: f64, dt: f64) -> Result<usize, ProtocolError> {
    if !(dt.is_finite() && dt > 0.0 && span.is_finite() && span >= 0.0) {
        return Err(ProtocolError::GridMismatch(format!("span {span} / step {dt}")));
    }
    let n = (span / dt).round();
    if (n * dt - span).abs() > GRID_TOL * span.max(dt) {
        return Err(ProtocolError::GridMismatch(format!("{span} is not a multiple of {dt}")));
    }
    Ok(n as usize)
}

/// Endpoints and duration shared by all ansaetze.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub lambda_i: f64,
    pub lambda_f: f64,
    pub tau: f64,
}

impl Window {
    pub fn new(lambda_i: f64, lambda_f: f64, tau: f64) -> Result<Self, ProtocolError> {
        if !(lambda_i.is_finite() && lambda_f.is_finite()) {
            return Err(ProtocolError::InvalidAnsatz("endpoints must be finite".into()));
        }
        if !(tau.is_finite() && tau > 0.0) {
            return Err(ProtocolError::InvalidAnsatz(format!("tau must be > 0, got {tau}")));
        }
        Ok(Window { lambda_i, lambda_f, tau })
    }

    pub fn for_model(model: &TwoLevelModel, tau: f64) -> Result<Self, ProtocolError> {
        Self::new(model.lambda_i, model.lambda_f, tau)
    }

    pub fn span(&self) -> f64 {
        self.lambda_f - self.lambda_i
    }
}

/// Parameters of the three-parameter impulse ansatz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Imp3Params {
    /// Impulse height; each impulse carries area `h * delta`.
    pub h: f64,
    /// Interior slope.
    pub slope: f64,
    /// Interior intercept.
    pub intercept: f64,
}

/// Shape of `lambda(t)` inside the window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Constant { lambda: f64 },
    Linear,
    /// Interior line `slope t + intercept` plus a right-triangle impulse of
    /// apex `2h` and base `delta` at each edge: the first decays from the
    /// jump at `0+`, the second is its negative mirror ending at `tau-`.
    Imp3 { h: f64, slope: f64, intercept: f64, delta: f64 },
    /// `lambda_i + span t/tau + t (t - tau)(a1 t^2 + a2 t + a3)`.
    Poly3 { a1: f64, a2: f64, a3: f64 },
    /// Linear interpolation of `values[n]` at `t = n delta`, `n = 0..=tau/delta`;
    /// `values[0]` and the last value are the interior limits at the edges.
    PiecewiseLinear { delta: f64, values: Vec<f64> },
}

/// A control protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    pub window: Window,
    pub shape: Shape,
}

impl Protocol {
    pub fn new(window: Window, shape: Shape) -> Result<Self, ProtocolError> {
        let p = Protocol { window, shape };
        p.validate()?;
        Ok(p)
    }

    pub fn linear(window: Window) -> Self {
        Protocol { window, shape: Shape::Linear }
    }

    pub fn constant(window: Window, lambda: f64) -> Self {
        Protocol { window, shape: Shape::Constant { lambda } }
    }

    pub fn imp3(window: Window, params: Imp3Params, delta: f64) -> Result<Self, ProtocolError> {
        Self::new(
            window,
            Shape::Imp3 { h: params.h, slope: params.slope, intercept: params.intercept, delta },
        )
    }

    pub fn poly3(window: Window, a1: f64, a2: f64, a3: f64) -> Self {
        Protocol { window, shape: Shape::Poly3 { a1, a2, a3 } }
    }

    pub fn piecewise_linear(window: Window, delta: f64, values: Vec<f64>) -> Result<Self, ProtocolError> {
        Self::new(window, Shape::PiecewiseLinear { delta, values })
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        Window::new(self.window.lambda_i, self.window.lambda_f, self.window.tau)?;
        let tau = self.window.tau;
        let finite = |v: &[f64]| {
            if v.iter().all(|x| x.is_finite()) {
                Ok(())
            } else {
                Err(ProtocolError::InvalidAnsatz("non-finite parameter".into()))
            }
        };
        match &self.shape {
            Shape::Constant { lambda } => finite(&[*lambda]),
            Shape::Linear => Ok(()),
            Shape::Imp3 { h, slope, intercept, delta } => {
                finite(&[*h, *slope, *intercept])?;
                if !(delta.is_finite() && *delta > 0.0) {
                    return Err(ProtocolError::InvalidAnsatz(format!("impulse width must be > 0, got {delta}")));
                }
                if tau < 2.0 * delta * (1.0 - GRID_TOL) {
                    return Err(ProtocolError::InvalidAnsatz(format!(
                        "tau = {tau} is shorter than two impulse widths ({delta})"
                    )));
                }
                Ok(())
            }
            Shape::Poly3 { a1, a2, a3 } => finite(&[*a1, *a2, *a3]),
            Shape::PiecewiseLinear { delta, values } => {
                finite(values)?;
                let n = grid_steps(tau, *delta).map_err(|_| {
                    ProtocolError::InvalidAnsatz(format!("node spacing {delta} does not divide tau = {tau}"))
                })?;
                if n == 0 || values.len() != n + 1 {
                    return Err(ProtocolError::InvalidAnsatz(format!(
                        "expected {} node values, got {}",
                        n + 1,
                        values.len()
                    )));
                }
                Ok(())
            }
        }
    }

    /// `lambda(t)`.
    pub fn evaluate(&self, t: f64) -> f64 {
        let Window { lambda_i, lambda_f, tau } = self.window;
        if t < 0.0 {
            return lambda_i;
        }
        if t > tau {
            return lambda_f;
        }
        match &self.shape {
            Shape::Constant { lambda } => *lambda,
            Shape::Linear => lambda_i + (lambda_f - lambda_i) * t / tau,
            Shape::Imp3 { h, slope, intercept, delta } => {
                let mut v = slope * t + intercept;
                if t < *delta {
                    v += 2.0 * h * (1.0 - t / delta);
                }
                let back = tau - t;
                if back < *delta {
                    v -= 2.0 * h * (1.0 - back / delta);
                }
                v
            }
            Shape::Poly3 { a1, a2, a3 } => {
                lambda_i + (lambda_f - lambda_i) * t / tau + t * (t - tau) * ((a1 * t + a2) * t + a3)
            }
            Shape::PiecewiseLinear { delta, values } => {
                let n = values.len() - 1;
                let x = t / delta;
                let k = (x.floor() as usize).min(n - 1);
                let f = x - k as f64;
                values[k] + (values[k + 1] - values[k]) * f
            }
        }
    }

    /// Samples at `t_n = n tau / N` with `N = tau / dt`.
    ///
    /// The time step must divide `tau` and, for ansaetze with an internal
    /// width, that width too.
    pub fn sample_on_grid(&self, dt: f64) -> Result<Vec<f64>, ProtocolError> {
        self.validate()?;
        let n = grid_steps(self.window.tau, dt)?;
        if let Some(width) = self.width() {
            grid_steps(width, dt)?;
        }
        Ok((0..=n).map(|k| self.evaluate(self.window.tau * k as f64 / n as f64)).collect())
    }

    /// Impulse width or node spacing, when the ansatz has one.
    pub fn width(&self) -> Option<f64> {
        match &self.shape {
            Shape::Imp3 { delta, .. } | Shape::PiecewiseLinear { delta, .. } => Some(*delta),
            _ => None,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self.shape {
            Shape::Constant { .. } => "constant",
            Shape::Linear => "linear",
            Shape::Imp3 { .. } => "imp3",
            Shape::Poly3 { .. } => "poly3",
            Shape::PiecewiseLinear { .. } => "piecewise_linear",
        }
    }

    /// Short human-readable description.
    pub fn descriptor(&self) -> String {
        match &self.shape {
            Shape::Constant { lambda } => format!("constant(lambda={lambda})"),
            Shape::Linear => "linear".into(),
            Shape::Imp3 { h, slope, intercept, delta } => {
                format!("imp3(h={h}, slope={slope}, intercept={intercept}, delta={delta})")
            }
            Shape::Poly3 { a1, a2, a3 } => format!("poly3(a1={a1}, a2={a2}, a3={a3})"),
            Shape::PiecewiseLinear { delta, values } => {
                format!("piecewise_linear(delta={delta}, nodes={})", values.len())
            }
        }
    }

    /// Node values of the same protocol on a piecewise-linear grid of spacing `delta`.
    ///
    /// Exact for IMP3 when `delta` equals its impulse width and for any
    /// piecewise-linear protocol on a compatible grid.
    pub fn to_piecewise_linear(&self, delta: f64) -> Result<Protocol, ProtocolError> {
        let n = grid_steps(self.window.tau, delta)?;
        let values = (0..=n).map(|k| self.evaluate(self.window.tau * k as f64 / n as f64)).collect();
        Protocol::piecewise_linear(self.window, delta, values)
    }
}

/// Initial IMP3 parameters from the Markovian moving-trap optimum.
///
/// The bath enters through the friction `zeta = 2 J(eps)`. The tunable
/// system maps to the overdamped trap with an effective temperature and
/// starts without impulses.
pub fn imp3_initial_guess(
    model: &TwoLevelModel,
    bath: &SpectralDensity,
    beta: f64,
    tau: f64,
    delta: f64,
) -> Result<Imp3Params, ProtocolError> {
    let eps = model.epsilon;
    let zeta = 2.0 * bath.value(eps);
    if zeta <= 0.0 || !zeta.is_finite() {
        return Err(ProtocolError::DecoupledGuess);
    }
    if !(delta > 0.0 && tau > 0.0) {
        return Err(ProtocolError::InvalidAnsatz("tau and delta must be > 0".into()));
    }
    let span = model.lambda_f - model.lambda_i;
    let rate = match model.kind {
        SystemKind::Driven => eps * eps / zeta,
        SystemKind::Tunable => {
            let beta_eff = 2.0 / eps * (0.5 * beta * eps).tanh();
            2.0 * zeta / (beta_eff * eps)
        }
    };
    let denom = 2.0 + rate * tau;
    let h = match model.kind {
        SystemKind::Driven => span / zeta / denom / delta,
        SystemKind::Tunable => 0.0,
    };
    Ok(Imp3Params { h, slope: span * rate / denom, intercept: model.lambda_i + span / denom })
}

/// Height in units of `(intercept - lambda_i) / delta`.
pub fn reparam_height(params: &Imp3Params, lambda_i: f64, delta: f64) -> Result<f64, ProtocolError> {
    let reference = height_reference(params.intercept, lambda_i, delta)?;
    Ok(params.h / reference)
}

/// `(intercept - lambda_i) / delta`, the unit of the normalized height.
pub fn height_reference(intercept: f64, lambda_i: f64, delta: f64) -> Result<f64, ProtocolError> {
    let r = (intercept - lambda_i) / delta;
    if r == 0.0 || !r.is_finite() {
        return Err(ProtocolError::DegenerateReference);
    }
    Ok(r)
}
