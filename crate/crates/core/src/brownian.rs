//! Brownian particle in a moving harmonic trap.
//!
//! The mean position obeys
//!
//! ```text
//! q'' = -2 eps int_0^t Delta(t - s) q'(s) ds - eps^2 q + eps x(t),   x = -lambda / sqrt(2)
//! ```
//!
//! (overdamped: `2 int_0^t Delta(t - s) q'(s) ds = -eps q + x`) and the work is
//! `W = (1/sqrt 2) int lambda' q dt`. For `lambda_i = 0` the work is the
//! quadratic functional
//!
//! ```text
//! W[x] = int_0^tau dt int_0^t ds A(t - s) x(t) x(s) - int_0^tau b(t) x(t) dt
//! ```
//!
//! with `A = eps G'` and `b(t) = x(tau) eps G(tau - t)` (underdamped) or
//! `A = F' + 2 F(0) delta` and `b(t) = x(tau) F(tau - t)` (overdamped).
//!
//! A delta impulse in `lambda` at an end of the window acts with its
//! effective area inside `[0, tau]`: a term `2m [delta(t) - delta(t - tau)]`
//! kicks the velocity by `-eps m / sqrt 2` at `0` and `+eps m / sqrt 2` at `tau`.

use crate::bath::{BathError, SpectralDensity};
use crate::protocol::{grid_steps, Protocol, ProtocolError, Window};
use crate::quad;
use nalgebra::{DMatrix, Matrix2, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::SQRT_2;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BrownianError {
    #[error("invalid trap parameter: {0}")]
    InvalidParameter(String),
    #[error("discretized work is not convex at step {step} (reduce the grid step)")]
    NotConvex { step: f64 },
    #[error("stationarity system of the impulse ansatz is singular")]
    DegenerateAnsatz,
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Bath(#[from] BathError),
    #[error(transparent)]
    Quadrature(#[from] quad::QuadError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Underdamped,
    Overdamped,
}

/// Trap frequency, bath and control window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapModel {
    pub epsilon: f64,
    pub spectral: SpectralDensity,
    pub lambda_i: f64,
    pub lambda_f: f64,
    pub tau: f64,
    pub regime: Regime,
}

/// Friction decomposed as `zeta q'` plus a Drude memory `(gamma, xi)`.
#[derive(Debug, Clone, Copy)]
struct Friction {
    zeta: f64,
    gamma: f64,
    xi: f64,
}

impl TrapModel {
    pub fn new(
        epsilon: f64,
        spectral: SpectralDensity,
        lambda_i: f64,
        lambda_f: f64,
        tau: f64,
        regime: Regime,
    ) -> Result<Self, BrownianError> {
        let m = TrapModel { epsilon, spectral, lambda_i, lambda_f, tau, regime };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), BrownianError> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(BrownianError::InvalidParameter(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        Window::new(self.lambda_i, self.lambda_f, self.tau)?;
        self.spectral.validate()?;
        match self.spectral {
            SpectralDensity::Ohmic { epsilon, .. } | SpectralDensity::OhmicPlusDrude { epsilon, .. }
                if (epsilon - self.epsilon).abs() > 1e-12 * self.epsilon =>
            {
                return Err(BrownianError::InvalidParameter(format!(
                    "Ohmic part is scaled by epsilon = {epsilon}, trap has {}",
                    self.epsilon
                )));
            }
            _ => {}
        }
        if self.regime == Regime::Overdamped && self.friction().zeta <= 0.0 {
            return Err(BrownianError::InvalidParameter("overdamped motion needs an Ohmic friction part".into()));
        }
        Ok(())
    }

    pub fn window(&self) -> Window {
        Window { lambda_i: self.lambda_i, lambda_f: self.lambda_f, tau: self.tau }
    }

    fn friction(&self) -> Friction {
        match self.spectral {
            SpectralDensity::Drude { gamma, xi } => Friction { zeta: 0.0, gamma, xi },
            SpectralDensity::Ohmic { zeta, .. } => Friction { zeta, gamma: 1.0, xi: 0.0 },
            SpectralDensity::OhmicPlusDrude { zeta, gamma, xi, .. } => Friction { zeta, gamma, xi },
        }
    }

    fn require_origin(&self) -> Result<(), BrownianError> {
        if self.lambda_i != 0.0 {
            return Err(BrownianError::InvalidParameter(format!(
                "the quadratic-form routines assume lambda_i = 0, got {}",
                self.lambda_i
            )));
        }
        Ok(())
    }

    /// Equilibrium mean position at the initial control value.
    pub fn initial_position(&self) -> f64 {
        x_of(self.lambda_i) / self.epsilon
    }

    fn x_f(&self) -> f64 {
        x_of(self.lambda_f)
    }
}

/// Trap displacement `x = -lambda / sqrt 2`.
pub fn x_of(lambda: f64) -> f64 {
    -lambda / SQRT_2
}

/// Response function `G+` of the underdamped equation of motion.
///
/// Evolves `(G, G', u)` with `u = int_0^t exp(-gamma (t - s)) G'(s) ds`, so
/// `G'' = -eps^2 G - zeta G' - 2 eps gamma xi u` and `u' = G' - gamma u`.
#[derive(Debug, Clone, Copy)]
pub struct GreenFunction {
    generator: Matrix3<f64>,
}

impl GreenFunction {
    pub fn new(model: &TrapModel) -> Self {
        let Friction { zeta, gamma, xi } = model.friction();
        let e = model.epsilon;
        GreenFunction {
            generator: Matrix3::new(
                0.0, 1.0, 0.0, //
                -e * e, -zeta, -2.0 * e * gamma * xi,
                0.0, 1.0, -gamma,
            ),
        }
    }

    /// `(G(t), G'(t))`.
    pub fn at(&self, t: f64) -> (f64, f64) {
        let s = (self.generator * t).exp() * Vector3::new(0.0, 1.0, 0.0);
        (s[0], s[1])
    }

    /// `G` and `G'` at `k * step` for `k = 0..=n`.
    pub fn samples(&self, step: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
        let prop = (self.generator * step).exp();
        let mut s = Vector3::new(0.0, 1.0, 0.0);
        let mut g = Vec::with_capacity(n + 1);
        let mut gd = Vec::with_capacity(n + 1);
        for _ in 0..=n {
            g.push(s[0]);
            gd.push(s[1]);
            s = prop * s;
        }
        (g, gd)
    }
}

/// Samples of `G+` and its derivative on `t_k = k * step`.
pub fn green_plus(model: &TrapModel, step: f64, n: usize) -> Result<(Vec<f64>, Vec<f64>), BrownianError> {
    model.validate()?;
    Ok(GreenFunction::new(model).samples(step, n))
}

/// Overdamped response `F(t)` with Laplace transform `1 / (eps + 2 z Delta(z))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OverdampedKernel {
    /// `c1 exp(r1 t) + c2 exp(r2 t)`.
    Distinct { c1: f64, r1: f64, c2: f64, r2: f64 },
    /// `(a + b t) exp(r t)`.
    Confluent { a: f64, b: f64, r: f64 },
}

impl OverdampedKernel {
    /// Partial fractions of `(eps/zeta)(z + gamma) / (z^2 + p z + c)`.
    pub fn new(model: &TrapModel) -> Result<Self, BrownianError> {
        model.validate()?;
        let Friction { zeta, gamma, xi } = model.friction();
        if zeta <= 0.0 {
            return Err(BrownianError::InvalidParameter("overdamped kernel needs zeta > 0".into()));
        }
        let e = model.epsilon;
        let k = e / zeta;
        let p = gamma + e * e / zeta + 2.0 * xi * gamma * e / zeta;
        let c = gamma * e * e / zeta;
        let disc = p * p - 4.0 * c;
        if disc <= 1e-14 * p * p {
            let r = -p / 2.0;
            return Ok(OverdampedKernel::Confluent { a: k, b: k * (r + gamma), r });
        }
        let r1 = -(p + disc.sqrt()) / 2.0;
        let r2 = c / r1;
        Ok(OverdampedKernel::Distinct {
            c1: k * (r1 + gamma) / (r1 - r2),
            r1,
            c2: -k * (r2 + gamma) / (r1 - r2),
            r2,
        })
    }

    pub fn value(&self, t: f64) -> f64 {
        match *self {
            OverdampedKernel::Distinct { c1, r1, c2, r2 } => c1 * (r1 * t).exp() + c2 * (r2 * t).exp(),
            OverdampedKernel::Confluent { a, b, r } => (a + b * t) * (r * t).exp(),
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match *self {
            OverdampedKernel::Distinct { c1, r1, c2, r2 } => c1 * r1 * (r1 * t).exp() + c2 * r2 * (r2 * t).exp(),
            OverdampedKernel::Confluent { a, b, r } => (b + r * (a + b * t)) * (r * t).exp(),
        }
    }

    /// `F(0)`, equal to `eps / zeta`.
    pub fn at_zero(&self) -> f64 {
        self.value(0.0)
    }
}

/// `F(t)` of the overdamped combined Ohmic-Drude trap.
pub fn overdamped_kernel(model: &TrapModel, t: f64) -> Result<f64, BrownianError> {
    Ok(OverdampedKernel::new(model)?.value(t))
}

/// Smooth kernel `A`, source profile `g` (with `b(t) = x_f g(tau - t)`) and
/// local weight `c` (`A` carries `2 c delta`).
enum Kernel {
    Under { green: GreenFunction, epsilon: f64 },
    Over(OverdampedKernel),
}

impl Kernel {
    fn new(model: &TrapModel) -> Result<Self, BrownianError> {
        model.validate()?;
        Ok(match model.regime {
            Regime::Underdamped => Kernel::Under { green: GreenFunction::new(model), epsilon: model.epsilon },
            Regime::Overdamped => Kernel::Over(OverdampedKernel::new(model)?),
        })
    }

    fn a(&self, t: f64) -> f64 {
        match self {
            Kernel::Under { green, epsilon } => epsilon * green.at(t).1,
            Kernel::Over(f) => f.derivative(t),
        }
    }

    fn g(&self, t: f64) -> f64 {
        match self {
            Kernel::Under { green, epsilon } => epsilon * green.at(t).0,
            Kernel::Over(f) => f.value(t),
        }
    }

    fn local(&self) -> f64 {
        match self {
            Kernel::Under { .. } => 0.0,
            Kernel::Over(f) => f.at_zero(),
        }
    }

    fn samples(&self, step: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
        match self {
            Kernel::Under { green, epsilon } => {
                let (g, gd) = green.samples(step, n);
                (gd.iter().map(|v| epsilon * v).collect(), g.iter().map(|v| epsilon * v).collect())
            }
            Kernel::Over(f) => (0..=n)
                .map(|k| {
                    let t = k as f64 * step;
                    (f.derivative(t), f.value(t))
                })
                .unzip(),
        }
    }
}

/// Trapezoidal discretization of the quadratic work functional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticWork {
    /// Smooth kernel `A(k step)`.
    pub a: Vec<f64>,
    /// Source profile at `k step`; `b(t_n) = x_f g[N - n]`.
    pub g: Vec<f64>,
    pub step: f64,
    /// Weight `c` of the `2 c delta(t - s)` part of `A`.
    pub local: f64,
    pub x_i: f64,
    pub x_f: f64,
}

impl QuadraticWork {
    pub fn new(model: &TrapModel, step: f64) -> Result<Self, BrownianError> {
        model.require_origin()?;
        let n = grid_steps(model.tau, step)?;
        let step = model.tau / n as f64;
        let kernel = Kernel::new(model)?;
        let (a, g) = kernel.samples(step, n);
        Ok(QuadraticWork { a, g, step, local: kernel.local(), x_i: x_of(model.lambda_i), x_f: model.x_f() })
    }

    pub fn intervals(&self) -> usize {
        self.a.len() - 1
    }

    /// Discretized `W` for displacements on all `N + 1` nodes.
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        let n = self.intervals();
        assert_eq!(x.len(), n + 1, "one displacement per node");
        let d = self.step;
        let mut total = 0.0;
        for i in 0..=n {
            let w = if i == 0 || i == n { 0.5 * d } else { d };
            let mut inner = 0.0;
            if i > 0 {
                inner += 0.5 * d * (self.a[i] * x[0] + self.a[0] * x[i]);
                for j in 1..i {
                    inner += d * self.a[i - j] * x[j];
                }
            }
            total += w * (x[i] * inner + self.local * x[i] * x[i] - self.x_f * self.g[n - i] * x[i]);
        }
        total
    }

    /// Work of a control sampled on the grid.
    pub fn evaluate_lambda(&self, lambda: &[f64]) -> f64 {
        let x: Vec<f64> = lambda.iter().map(|&l| x_of(l)).collect();
        self.evaluate(&x)
    }
}

/// Solve `T y = b` for symmetric Toeplitz `T` with first column `t`.
///
/// Returns `None` unless `T` is positive definite.
fn levinson(t: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let t0 = t[0];
    if !(t0 > 0.0) {
        return None;
    }
    let r: Vec<f64> = t[1..n].iter().map(|v| v / t0).collect();
    let b: Vec<f64> = b.iter().map(|v| v / t0).collect();
    let mut x = vec![b[0]];
    if n == 1 {
        return Some(x);
    }
    let mut y = vec![-r[0]];
    let mut alpha = -r[0];
    let mut beta = 1.0;
    x.reserve(n);
    y.reserve(n);
    for k in 1..n {
        beta *= 1.0 - alpha * alpha;
        if !(beta > 0.0) {
            return None;
        }
        let dot: f64 = (0..k).map(|i| r[i] * x[k - 1 - i]).sum();
        let mu = (b[k] - dot) / beta;
        let v: Vec<f64> = (0..k).map(|i| x[i] + mu * y[k - 1 - i]).collect();
        x = v;
        x.push(mu);
        if k < n - 1 {
            let dot: f64 = (0..k).map(|i| r[i] * y[k - 1 - i]).sum();
            alpha = (-r[k] - dot) / beta;
            let z: Vec<f64> = (0..k).map(|i| y[i] + alpha * y[k - 1 - i]).collect();
            y = z;
            y.push(alpha);
        }
    }
    Some(x)
}

/// Levinson solve followed by one step of iterative refinement.
fn toeplitz_solve(t: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let mut y = levinson(t, b)?;
    let res: Vec<f64> = toeplitz_apply(t, &y).iter().zip(b).map(|(a, b)| b - a).collect();
    let corr = levinson(t, &res)?;
    for (v, c) in y.iter_mut().zip(&corr) {
        *v += c;
    }
    Some(y)
}

fn toeplitz_apply(t: &[f64], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n).map(|i| (0..n).map(|j| t[i.abs_diff(j)] * x[j]).sum()).collect()
}

/// Interior Hessian column and linear term of the discretized work.
fn stationarity_system(qw: &QuadraticWork) -> (Vec<f64>, Vec<f64>) {
    let n = qw.intervals();
    let d = qw.step;
    let m = n - 1;
    let mut col: Vec<f64> = qw.a[..m].iter().map(|a| d * d * a).collect();
    col[0] += 2.0 * d * qw.local;
    let rhs = (1..n)
        .map(|i| {
            let linear = 0.5 * d * d * (qw.a[i] * qw.x_i + qw.a[n - i] * qw.x_f) - d * qw.x_f * qw.g[n - i];
            -linear
        })
        .collect();
    (col, rhs)
}

/// Dense Hessian of the interior nodes, for cross-checks.
pub fn dense_hessian(qw: &QuadraticWork) -> DMatrix<f64> {
    let (col, _) = stationarity_system(qw);
    let m = col.len();
    DMatrix::from_fn(m, m, |i, j| col[i.abs_diff(j)])
}

/// Global optimum of the discretized work.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpOptimum {
    pub step: f64,
    pub times: Vec<f64>,
    /// Control on every node; the ends hold `lambda_i` and `lambda_f`.
    pub lambda: Vec<f64>,
    pub work: f64,
    /// `max |lambda|`.
    pub peak: f64,
}

impl QpOptimum {
    pub fn protocol(&self, model: &TrapModel) -> Result<Protocol, BrownianError> {
        Ok(Protocol::piecewise_linear(model.window(), self.step, self.lambda.clone())?)
    }
}

/// Minimize the trapezoidal work over the interior nodes with the ends
/// pinned to `lambda_i` and `lambda_f`.
pub fn qp_optimal_protocol(model: &TrapModel, step: f64) -> Result<QpOptimum, BrownianError> {
    let qw = QuadraticWork::new(model, step)?;
    let n = qw.intervals();
    if n < 2 {
        return Err(BrownianError::InvalidParameter("grid needs at least one interior node".into()));
    }
    let (col, rhs) = stationarity_system(&qw);
    let y = toeplitz_solve(&col, &rhs).ok_or(BrownianError::NotConvex { step: qw.step })?;
    let mut x = Vec::with_capacity(n + 1);
    x.push(qw.x_i);
    x.extend(y);
    x.push(qw.x_f);
    let work = qw.evaluate(&x);
    let lambda: Vec<f64> = x.iter().map(|v| -SQRT_2 * v).collect();
    let peak = lambda.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    Ok(QpOptimum {
        step: qw.step,
        times: (0..=n).map(|k| model.tau * k as f64 / n as f64).collect(),
        lambda,
        work,
        peak,
    })
}

/// Line-plus-impulse protocol `alpha1 t + alpha2 + 2m [delta(t) - delta(t - tau)]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpulseOptimum {
    pub slope: f64,
    pub intercept: f64,
    /// Effective impulse area `m`.
    pub impulse: f64,
    pub work: f64,
}

impl ImpulseOptimum {
    pub fn drive(&self, model: &TrapModel) -> Result<TrapDrive, BrownianError> {
        TrapDrive::line(model, self.slope, self.intercept, self.impulse)
    }
}

/// Optimum of the Markovian (Ohmic) trap with impulses at both ends; the
/// work is obtained by propagating the mean position.
pub fn analytic_optimal_ohmic(
    zeta: f64,
    epsilon: f64,
    tau: f64,
    lambda_i: f64,
    lambda_f: f64,
) -> Result<ImpulseOptimum, BrownianError> {
    analytic_optimum(zeta, epsilon, tau, lambda_i, lambda_f, Regime::Underdamped)
}

/// Overdamped Ohmic optimum: same interior line, jumps but no impulses.
pub fn analytic_optimal_overdamped(
    zeta: f64,
    epsilon: f64,
    tau: f64,
    lambda_i: f64,
    lambda_f: f64,
) -> Result<ImpulseOptimum, BrownianError> {
    analytic_optimum(zeta, epsilon, tau, lambda_i, lambda_f, Regime::Overdamped)
}

fn analytic_optimum(
    zeta: f64,
    epsilon: f64,
    tau: f64,
    lambda_i: f64,
    lambda_f: f64,
    regime: Regime,
) -> Result<ImpulseOptimum, BrownianError> {
    let model = TrapModel::new(epsilon, SpectralDensity::ohmic(zeta, epsilon)?, lambda_i, lambda_f, tau, regime)?;
    let span = lambda_f - lambda_i;
    let denom = 2.0 + epsilon * epsilon * tau / zeta;
    let mut opt = ImpulseOptimum {
        slope: span * epsilon * epsilon / zeta / denom,
        intercept: lambda_i + span / denom,
        impulse: if regime == Regime::Underdamped { span / zeta / denom } else { 0.0 },
        work: 0.0,
    };
    let steps = 20_000.max((tau / 1e-4).ceil() as usize);
    opt.work = trap_work(&model, &opt.drive(&model)?, tau / steps as f64)?;
    Ok(opt)
}

/// Closed-form optimum of the line-plus-impulse ansatz for `lambda_i = 0`.
///
/// Overdamped impulses cost infinite work, so `m = 0` there.
pub fn imp3_delta_optimal(model: &TrapModel) -> Result<ImpulseOptimum, BrownianError> {
    model.require_origin()?;
    let kernel = Kernel::new(model)?;
    let tau = model.tau;
    let xf = model.x_f();
    let c = kernel.local();
    let tol = 1e-13;
    let q = |f: &dyn Fn(f64) -> f64| quad::integrate(f, 0.0, tau, tol, tol, 2000);
    // Symmetric bilinear form on phi1 = -t/sqrt2, phi2 = -1/sqrt2.
    let s11 = 0.25
        * q(&|u| kernel.a(u) * 2.0 * ((tau - u).powi(3) / 3.0 + 0.5 * u * (tau - u).powi(2)))?
        + c * tau.powi(3) / 6.0;
    let s12 = 0.25 * q(&|u| kernel.a(u) * tau * (tau - u))? + c * tau * tau / 4.0;
    let s22 = 0.25 * q(&|u| kernel.a(u) * 2.0 * (tau - u))? + c * tau / 2.0;
    let l1 = xf * q(&|t| kernel.g(tau - t) * (-t / SQRT_2))?;
    let l2 = xf * q(&|t| kernel.g(tau - t) * (-1.0 / SQRT_2))?;
    let (p, work) = match model.regime {
        Regime::Overdamped => {
            let s = Matrix2::new(s11, s12, s12, s22);
            let l = Vector2::new(l1, l2);
            let p = (s * 2.0).lu().solve(&l).ok_or(BrownianError::DegenerateAnsatz)?;
            ([p[0], p[1], 0.0], -0.5 * l.dot(&p))
        }
        Regime::Underdamped => {
            // phi3 = -(1/sqrt2) [delta(t) - delta(t - tau)].
            let (c0, ct) = (-1.0 / SQRT_2, 1.0 / SQRT_2);
            let cross = |phi: &dyn Fn(f64) -> f64| -> Result<f64, BrownianError> {
                Ok(0.5 * (ct * q(&|s| kernel.a(tau - s) * phi(s))? + c0 * q(&|t| kernel.a(t) * phi(t))?))
            };
            let s13 = cross(&|t| -t / SQRT_2)?;
            let s23 = cross(&|_| -1.0 / SQRT_2)?;
            let s33 = 0.5 * (kernel.a(0.0) - kernel.a(tau));
            let l3 = c0 * xf * kernel.g(tau) + ct * xf * kernel.g(0.0);
            let s = Matrix3::new(s11, s12, s13, s12, s22, s23, s13, s23, s33);
            let l = Vector3::new(l1, l2, l3);
            let p = (s * 2.0).lu().solve(&l).ok_or(BrownianError::DegenerateAnsatz)?;
            ([p[0], p[1], p[2]], -0.5 * l.dot(&p))
        }
    };
    if p.iter().any(|v| !v.is_finite()) {
        return Err(BrownianError::DegenerateAnsatz);
    }
    Ok(ImpulseOptimum { slope: p[0], intercept: p[1], impulse: p[2], work })
}

/// A control protocol plus an optional impulse pair `2m [delta(t) - delta(t - tau)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrapDrive {
    pub protocol: Protocol,
    /// Effective impulse area `m`.
    pub impulse: f64,
}

impl TrapDrive {
    pub fn new(protocol: Protocol, impulse: f64) -> Self {
        TrapDrive { protocol, impulse }
    }

    /// `lambda(t) = slope t + intercept` inside the window.
    pub fn line(model: &TrapModel, slope: f64, intercept: f64, impulse: f64) -> Result<Self, BrownianError> {
        let tau = model.tau;
        let protocol = Protocol::piecewise_linear(model.window(), tau, vec![intercept, intercept + slope * tau])?;
        Ok(TrapDrive { protocol, impulse })
    }
}

/// Work from the mean-position equation of motion, integrated by RK4 with
/// step `dt`; impulses are applied as exact velocity kicks.
pub fn trap_work(model: &TrapModel, drive: &TrapDrive, dt: f64) -> Result<f64, BrownianError> {
    model.validate()?;
    drive.protocol.validate()?;
    let w = drive.protocol.window;
    if (w.lambda_i - model.lambda_i).abs() > 1e-12
        || (w.lambda_f - model.lambda_f).abs() > 1e-12
        || (w.tau - model.tau).abs() > 1e-12 * model.tau
    {
        return Err(BrownianError::InvalidParameter("protocol window does not match the trap".into()));
    }
    if model.regime == Regime::Overdamped && drive.impulse != 0.0 {
        return Err(BrownianError::InvalidParameter("impulses cost infinite work in the overdamped limit".into()));
    }
    let n = grid_steps(model.tau, dt)?;
    let h = model.tau / n as f64;
    let Friction { zeta, gamma, xi } = model.friction();
    let e = model.epsilon;
    let x = |t: f64| x_of(drive.protocol.evaluate(t));
    // State (q, v, u, w): u is the memory integral, w accumulates int x q'.
    let rhs = |t: f64, s: [f64; 4]| -> [f64; 4] {
        let xt = x(t);
        let v = match model.regime {
            Regime::Underdamped => s[1],
            Regime::Overdamped => e / zeta * (xt - e * s[0] - 2.0 * xi * gamma * s[2]),
        };
        let a = match model.regime {
            Regime::Underdamped => -e * e * s[0] - zeta * s[1] - 2.0 * e * gamma * xi * s[2] + e * xt,
            Regime::Overdamped => 0.0,
        };
        [v, a, v - gamma * s[2], xt * v]
    };
    let kick = |s: &mut [f64; 4], area: f64| {
        s[3] += -area / SQRT_2 * s[1] + e * area * area / 4.0;
        s[1] += -e * area / SQRT_2;
    };
    let q0 = model.initial_position();
    let mut s = [q0, 0.0, 0.0, 0.0];
    kick(&mut s, drive.impulse);
    let add = |s: [f64; 4], k: [f64; 4], c: f64| -> [f64; 4] { std::array::from_fn(|i| s[i] + c * k[i]) };
    for k in 0..n {
        let t = k as f64 * h;
        let k1 = rhs(t, s);
        let k2 = rhs(t + 0.5 * h, add(s, k1, 0.5 * h));
        let k3 = rhs(t + 0.5 * h, add(s, k2, 0.5 * h));
        let k4 = rhs(t + h, add(s, k3, h));
        s = std::array::from_fn(|i| s[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
    }
    kick(&mut s, -drive.impulse);
    let work = -model.x_f() * s[0] + x_of(model.lambda_i) * q0 + s[3];
    if !work.is_finite() {
        return Err(BrownianError::InvalidParameter("work is not finite".into()));
    }
    Ok(work)
}

/// Linear protocol as a trap drive.
pub fn linear_drive(model: &TrapModel) -> TrapDrive {
    TrapDrive { protocol: Protocol::linear(model.window()), impulse: 0.0 }
}

/// Piecewise-linear protocol through the nodes of a QP optimum.
pub fn nodes_drive(model: &TrapModel, opt: &QpOptimum) -> Result<TrapDrive, BrownianError> {
    Ok(TrapDrive { protocol: opt.protocol(model)?, impulse: 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn ohmic_trap(tau: f64, regime: Regime) -> TrapModel {
        TrapModel::new(1.0, SpectralDensity::ohmic(1.0, 1.0).unwrap(), 0.0, 1.0, tau, regime).unwrap()
    }

    fn drude_trap(gamma: f64, xi: f64, tau: f64) -> TrapModel {
        TrapModel::new(1.0, SpectralDensity::drude(gamma, xi).unwrap(), 0.0, 1.0, tau, Regime::Underdamped).unwrap()
    }

    fn solve_dense(h: &DMatrix<f64>, b: &[f64]) -> Option<Vec<f64>> {
        let c = h.clone().cholesky()?;
        Some(c.solve(&DVector::from_column_slice(b)).iter().copied().collect())
    }

    #[test]
    fn damped_oscillator_green_function() {
        let g = GreenFunction::new(&ohmic_trap(1.0, Regime::Underdamped));
        let w = 3f64.sqrt() / 2.0;
        for t in [0.0_f64, 0.3, 1.0, 4.0] {
            let exact = (-t / 2.0_f64).exp() * (w * t).sin() / w;
            assert!((g.at(t).0 - exact).abs() < 1e-12, "t = {t}");
        }
        let (g0, gd0) = g.at(0.0);
        assert_eq!((g0, gd0), (0.0, 1.0));
    }

    #[test]
    fn pure_ohmic_overdamped_kernel() {
        let m = TrapModel::new(2.0, SpectralDensity::ohmic(3.0, 2.0).unwrap(), 0.0, 1.0, 1.0, Regime::Overdamped)
            .unwrap();
        let f = OverdampedKernel::new(&m).unwrap();
        for t in [0.0, 0.2, 1.5] {
            assert!((f.value(t) - 2.0 / 3.0 * (-4.0 * t / 3.0_f64).exp()).abs() < 1e-14);
        }
    }

    #[test]
    fn levinson_matches_cholesky() {
        let m = drude_trap(1.0, 1.0, 0.5);
        let qw = QuadraticWork::new(&m, 0.025).unwrap();
        let (col, rhs) = stationarity_system(&qw);
        let fast = toeplitz_solve(&col, &rhs).unwrap();
        let dense = solve_dense(&dense_hessian(&qw), &rhs).unwrap();
        let resid = |y: &[f64]| {
            toeplitz_apply(&col, y).iter().zip(&rhs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        };
        let scale = rhs.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        assert!(resid(&fast) < 1e-12 * scale);
        let norm = dense.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for (a, b) in fast.iter().zip(&dense) {
            assert!((a - b).abs() < 1e-6 * norm, "{a} vs {b}");
        }
    }

    #[test]
    fn levinson_rejects_indefinite() {
        assert!(levinson(&[1.0, 2.0, 0.0], &[1.0, 1.0, 1.0]).is_none());
    }

    #[test]
    fn analytic_example_values() {
        let o = analytic_optimal_ohmic(1.0, 1.0, 0.5, 0.0, 1.0).unwrap();
        assert!((o.slope - 0.4).abs() < 1e-15);
        assert!((o.intercept - 0.4).abs() < 1e-15);
        assert!((o.impulse - 0.4).abs() < 1e-15);
        let d = analytic_optimal_overdamped(1.0, 1.0, 0.5, 0.0, 1.0).unwrap();
        assert_eq!(d.impulse, 0.0);
        assert!((d.intercept - 0.4).abs() < 1e-15);
    }

    #[test]
    fn impulse_ansatz_recovers_markov_optimum() {
        let o = imp3_delta_optimal(&ohmic_trap(0.5, Regime::Underdamped)).unwrap();
        assert!((o.slope - 0.4).abs() < 1e-8, "{o:?}");
        assert!((o.intercept - 0.4).abs() < 1e-8, "{o:?}");
        assert!((o.impulse - 0.4).abs() < 1e-8, "{o:?}");
        let a = analytic_optimal_ohmic(1.0, 1.0, 0.5, 0.0, 1.0).unwrap();
        assert!((o.work - a.work).abs() < 1e-6 * a.work.abs(), "{} vs {}", o.work, a.work);
    }

    #[test]
    fn overdamped_impulse_ansatz_recovers_optimum() {
        let o = imp3_delta_optimal(&ohmic_trap(0.5, Regime::Overdamped)).unwrap();
        assert!((o.slope - 0.4).abs() < 1e-8, "{o:?}");
        assert!((o.intercept - 0.4).abs() < 1e-8, "{o:?}");
        let a = analytic_optimal_overdamped(1.0, 1.0, 0.5, 0.0, 1.0).unwrap();
        assert!((o.work - a.work).abs() < 1e-6 * a.work.abs(), "{} vs {}", o.work, a.work);
    }

    #[test]
    fn constant_control_costs_nothing() {
        let m = TrapModel::new(1.0, SpectralDensity::drude(1.0, 1.0).unwrap(), 0.3, 0.3, 1.0, Regime::Underdamped)
            .unwrap();
        let d = TrapDrive::new(Protocol::constant(m.window(), 0.3), 0.0);
        assert!(trap_work(&m, &d, 1e-3).unwrap().abs() < 1e-14);
    }
}
