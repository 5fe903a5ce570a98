//! Bosonic bath: spectral densities, the bath correlation function and its
//! exponential expansion.
//!
//! The correlation function is
//! `L(t) = (1/pi) * int J(w) exp(-i w t) / (1 - exp(-beta w)) dw`
//! and the solvers consume it as `sum_k d_k exp(-z_k t) + 2 eta delta(t)`.

use crate::quad::{self, QuadError};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BathError {
    #[error("invalid bath parameter: {0}")]
    InvalidParameter(String),
    #[error("spectrum is not integrable for the correlation function: {0}")]
    NonIntegrableSpectrum(String),
    #[error("the correlation function is singular at t = 0 for this spectrum")]
    SingularAtOrigin,
    #[error("quadrature failed: {0}")]
    Quadrature(#[from] QuadError),
    #[error("expansion residual {achieved:e} exceeds tolerance {tol:e} with {k_max} terms")]
    FitFailure { achieved: f64, tol: f64, k_max: usize },
    #[error("Drude pole coincides with a Matsubara frequency (beta*gamma = {0})")]
    DegeneratePole(f64),
}

/// Bath spectral density `J(w)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpectralDensity {
    /// `gamma^2 xi w / (w^2 + gamma^2)`.
    Drude { gamma: f64, xi: f64 },
    /// `zeta w / (2 eps)`.
    Ohmic { zeta: f64, epsilon: f64 },
    /// Sum of the two forms above.
    OhmicPlusDrude { zeta: f64, gamma: f64, xi: f64, epsilon: f64 },
}

impl SpectralDensity {
    pub fn drude(gamma: f64, xi: f64) -> Result<Self, BathError> {
        let j = SpectralDensity::Drude { gamma, xi };
        j.validate()?;
        Ok(j)
    }

    pub fn ohmic(zeta: f64, epsilon: f64) -> Result<Self, BathError> {
        let j = SpectralDensity::Ohmic { zeta, epsilon };
        j.validate()?;
        Ok(j)
    }

    pub fn ohmic_plus_drude(zeta: f64, gamma: f64, xi: f64, epsilon: f64) -> Result<Self, BathError> {
        let j = SpectralDensity::OhmicPlusDrude { zeta, gamma, xi, epsilon };
        j.validate()?;
        Ok(j)
    }

    pub fn validate(&self) -> Result<(), BathError> {
        let bad = |what: &str, v: f64| BathError::InvalidParameter(format!("{what} = {v}"));
        let check_drude = |gamma: f64, xi: f64| {
            if !(gamma.is_finite() && gamma > 0.0) {
                return Err(bad("gamma must be > 0, got gamma", gamma));
            }
            if !(xi.is_finite() && xi >= 0.0) {
                return Err(bad("xi must be >= 0, got xi", xi));
            }
            Ok(())
        };
        let check_ohmic = |zeta: f64, eps: f64| {
            if !(zeta.is_finite() && zeta >= 0.0) {
                return Err(bad("zeta must be >= 0, got zeta", zeta));
            }
            if !(eps.is_finite() && eps > 0.0) {
                return Err(bad("epsilon must be > 0, got epsilon", eps));
            }
            Ok(())
        };
        match *self {
            SpectralDensity::Drude { gamma, xi } => check_drude(gamma, xi),
            SpectralDensity::Ohmic { zeta, epsilon } => check_ohmic(zeta, epsilon),
            SpectralDensity::OhmicPlusDrude { zeta, gamma, xi, epsilon } => {
                check_drude(gamma, xi)?;
                check_ohmic(zeta, epsilon)
            }
        }
    }

    /// `J(w)` at real frequency.
    pub fn value(&self, w: f64) -> f64 {
        match *self {
            SpectralDensity::Drude { gamma, xi } => drude(gamma, xi, w),
            SpectralDensity::Ohmic { zeta, epsilon } => zeta * w / (2.0 * epsilon),
            SpectralDensity::OhmicPlusDrude { zeta, gamma, xi, epsilon } => {
                drude(gamma, xi, w) + zeta * w / (2.0 * epsilon)
            }
        }
    }

    /// Analytic continuation of `J` to complex frequency.
    pub fn value_complex(&self, w: Complex64) -> Complex64 {
        let dr = |gamma: f64, xi: f64| w * (gamma * gamma * xi) / (w * w + gamma * gamma);
        match *self {
            SpectralDensity::Drude { gamma, xi } => dr(gamma, xi),
            SpectralDensity::Ohmic { zeta, epsilon } => w * (zeta / (2.0 * epsilon)),
            SpectralDensity::OhmicPlusDrude { zeta, gamma, xi, epsilon } => {
                dr(gamma, xi) + w * (zeta / (2.0 * epsilon))
            }
        }
    }

    /// `J'(0)`.
    pub fn slope_at_zero(&self) -> f64 {
        match *self {
            SpectralDensity::Drude { xi, .. } => xi,
            SpectralDensity::Ohmic { zeta, epsilon } => zeta / (2.0 * epsilon),
            SpectralDensity::OhmicPlusDrude { zeta, xi, epsilon, .. } => xi + zeta / (2.0 * epsilon),
        }
    }

    /// `J(w) / (1 - exp(-beta w))`, with the limit `J'(0)/beta` at `w = 0`.
    pub fn thermal_value(&self, beta: f64, w: f64) -> f64 {
        let x = beta * w;
        if x.abs() < 1e-8 {
            return self.slope_at_zero() / beta * (1.0 + 0.5 * x);
        }
        self.value(w) / -(-x).exp_m1()
    }

    /// Smooth part of the friction kernel `(2/pi) int_0^inf (J(w)/w) cos(w t) dw`.
    pub fn friction_kernel(&self, t: f64) -> f64 {
        match *self {
            SpectralDensity::Drude { gamma, xi } | SpectralDensity::OhmicPlusDrude { gamma, xi, .. } => {
                gamma * xi * (-gamma * t.abs()).exp()
            }
            SpectralDensity::Ohmic { .. } => 0.0,
        }
    }

    /// Weight `c` of the singular part `c * delta(t)` of the friction kernel.
    pub fn friction_delta_weight(&self) -> f64 {
        match *self {
            SpectralDensity::Drude { .. } => 0.0,
            SpectralDensity::Ohmic { zeta, epsilon } | SpectralDensity::OhmicPlusDrude { zeta, epsilon, .. } => {
                zeta / epsilon
            }
        }
    }

    fn drude_parameters(&self) -> Option<(f64, f64)> {
        match *self {
            SpectralDensity::Drude { gamma, xi } => Some((gamma, xi)),
            _ => None,
        }
    }

    /// Exact bath correlation `L(t)` by quadrature.
    ///
    /// Only the Drude spectrum decays fast enough; its real part diverges
    /// logarithmically at `t = 0`, so `t > 0` is required.
    pub fn correlation_exact(&self, beta: f64, t: f64) -> Result<Complex64, BathError> {
        self.validate()?;
        check_beta(beta)?;
        let (gamma, _) = self.drude_parameters().ok_or_else(|| {
            BathError::NonIntegrableSpectrum(format!("{self:?} grows linearly at large frequency"))
        })?;
        if !(t.is_finite() && t >= 0.0) {
            return Err(BathError::InvalidParameter(format!("t must be >= 0, got {t}")));
        }
        if t == 0.0 {
            return Err(BathError::SingularAtOrigin);
        }
        let cut = 50.0 * gamma.max(1.0 / beta);
        let panels = ((cut * t / PI).ceil() as usize).clamp(1, 200_000);
        let edges: Vec<f64> = (0..=panels).map(|i| cut * i as f64 / panels as f64).collect();
        // J coth(beta w / 2) cos(w t) - i J sin(w t), folded onto w > 0.
        let body = quad::integrate_panels(
            |w: f64| {
                let sym = if w == 0.0 {
                    2.0 * self.slope_at_zero() / beta
                } else {
                    self.value(w) / (0.5 * beta * w).tanh()
                };
                Complex64::new(sym * (w * t).cos(), -self.value(w) * (w * t).sin())
            },
            &edges,
            1e-13,
            1e-11,
        )?;
        // Tail beyond the cutoff: coth - 1 < 3e-22 there, so only
        // int J(w) exp(-i w t) remains; rotate the contour to w = cut - i u.
        let u_max = 40.0 / t;
        let mut tail_edges = vec![0.0];
        let mut u = cut;
        while u < u_max {
            tail_edges.push(u);
            u *= 2.0;
        }
        tail_edges.push(u_max);
        let tail = quad::integrate_panels(
            |u: f64| self.value_complex(Complex64::new(cut, -u)) * (-u * t).exp(),
            &tail_edges,
            1e-14,
            1e-11,
        )?;
        let tail = Complex64::new(0.0, -1.0) * Complex64::from_polar(1.0, -cut * t) * tail;
        Ok((body + tail) / PI)
    }
}

fn drude(gamma: f64, xi: f64, w: f64) -> f64 {
    gamma * gamma * xi * w / (w * w + gamma * gamma)
}

fn check_beta(beta: f64) -> Result<(), BathError> {
    if beta.is_finite() && beta > 0.0 {
        Ok(())
    } else {
        Err(BathError::InvalidParameter(format!("beta must be > 0, got {beta}")))
    }
}

/// Bose-Einstein occupation `1 / (exp(beta w) - 1)`.
pub fn bose(beta: f64, w: f64) -> f64 {
    1.0 / (beta * w).exp_m1()
}

/// One exponential term `d exp(-z t)` with its conjugate partner amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpansionTerm {
    /// Amplitude `d_k` in `L(t)`.
    pub amplitude: Complex64,
    /// Amplitude `d'_k` in `conj(L(t))`.
    pub conj_amplitude: Complex64,
    /// Decay rate `z_k`.
    pub rate: Complex64,
}

/// `L(t) = sum_k d_k exp(-z_k t) + 2 eta delta(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentialExpansion {
    pub terms: Vec<ExpansionTerm>,
    /// Weight of the delta term absorbing the truncated fast terms.
    pub eta: f64,
    pub beta: f64,
    /// Relative sup-norm residual of the half-line spectrum on the fit window.
    pub fit_error: f64,
}

/// Frequencies on which the expansion residual is measured.
pub const FIT_WINDOW: f64 = 5.0;
const FIT_POINTS: usize = 201;
const SERIES_TERMS: usize = 20_000;

impl ExponentialExpansion {
    /// Expansion with no terms: a decoupled bath.
    pub fn decoupled(beta: f64) -> Self {
        ExponentialExpansion { terms: Vec::new(), eta: 0.0, beta, fit_error: 0.0 }
    }

    /// Build from explicit parts; the caller vouches for the residual.
    pub fn from_parts(terms: Vec<ExpansionTerm>, eta: f64, beta: f64) -> Self {
        ExponentialExpansion { terms, eta, beta, fit_error: 0.0 }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Whether the expansion couples the system at all.
    pub fn is_decoupled(&self) -> bool {
        self.eta == 0.0 && self.terms.iter().all(|k| k.amplitude.norm() == 0.0 && k.conj_amplitude.norm() == 0.0)
    }

    /// Smooth part `sum_k d_k exp(-z_k t)`.
    pub fn smooth_value(&self, t: f64) -> Complex64 {
        self.terms.iter().map(|k| k.amplitude * (-k.rate * t).exp()).sum()
    }

    /// Smooth part of the conjugate correlation, `sum_k d'_k exp(-z_k t)`.
    pub fn smooth_conj_value(&self, t: f64) -> Complex64 {
        self.terms.iter().map(|k| k.conj_amplitude * (-k.rate * t).exp()).sum()
    }

    /// `int_0^inf L(t) exp(i w t) dt`, the delta counted as `eta`.
    pub fn spectrum(&self, w: f64) -> Complex64 {
        let iw = Complex64::new(0.0, w);
        self.terms.iter().map(|k| k.amplitude / (k.rate - iw)).sum::<Complex64>() + self.eta
    }

    /// `d(w) = int_0^inf Re L(t) exp(i w t) dt`, the delta counted as `eta`.
    pub fn halfline_transform(&self, w: f64) -> Complex64 {
        let iw = Complex64::new(0.0, w);
        self.terms
            .iter()
            .map(|k| (k.amplitude + k.conj_amplitude) * 0.5 / (k.rate - iw))
            .sum::<Complex64>()
            + self.eta
    }

    /// Sum of `|d_k| + |d'_k|`, used for step-size bounds.
    pub fn coupling_scale(&self) -> f64 {
        self.terms.iter().map(|k| k.amplitude.norm() + k.conj_amplitude.norm()).sum::<f64>() + self.eta
    }

    /// Largest `|z_k|`.
    pub fn max_rate(&self) -> f64 {
        self.terms.iter().fold(0.0, |m, k| m.max(k.rate.norm()))
    }
}

/// Drude pole term and Matsubara amplitudes for a Drude bath.
struct DrudeMatsubara {
    gamma: f64,
    xi: f64,
    beta: f64,
}

impl DrudeMatsubara {
    fn new(gamma: f64, xi: f64, beta: f64) -> Result<Self, BathError> {
        let half = 0.5 * beta * gamma;
        let ratio = half / PI;
        if (ratio - ratio.round()).abs() < 1e-9 {
            return Err(BathError::DegeneratePole(beta * gamma));
        }
        Ok(DrudeMatsubara { gamma, xi, beta })
    }

    fn pole_amplitude(&self) -> Complex64 {
        let g2x = self.gamma * self.gamma * self.xi;
        let cot = 1.0 / (0.5 * self.beta * self.gamma).tan();
        Complex64::new(0.5 * g2x * cot, -0.5 * g2x)
    }

    fn matsubara(&self, k: usize) -> (f64, f64) {
        let nu = 2.0 * PI * k as f64 / self.beta;
        let g2 = self.gamma * self.gamma;
        (2.0 * g2 * self.xi / self.beta * nu / (nu * nu - g2), nu)
    }

    /// `sum_{k>=1} d_k / nu_k` in closed form.
    fn matsubara_weight_total(&self) -> f64 {
        let half = 0.5 * self.beta * self.gamma;
        self.xi / self.beta * (1.0 - half / half.tan())
    }

    /// `sum_{k > n} d_k / (nu_k - i w)` with the tail beyond `SERIES_TERMS`
    /// taken from its large-k asymptotics.
    fn matsubara_tail_spectrum(&self, n: usize, w: f64) -> Complex64 {
        let iw = Complex64::new(0.0, w);
        let mut s = Complex64::new(0.0, 0.0);
        for k in (n + 1..=SERIES_TERMS).rev() {
            let (d, nu) = self.matsubara(k);
            s += d / (nu - iw);
        }
        let big = SERIES_TERMS as f64;
        let c = 2.0 * self.gamma * self.gamma * self.xi / self.beta;
        let scale = self.beta / (2.0 * PI);
        let inv2 = 1.0 / big - 0.5 / (big * big) + 1.0 / (6.0 * big * big * big);
        let inv3 = 0.5 / (big * big) - 0.5 / (big * big * big);
        s + Complex64::new(c * scale * scale * inv2, 0.0) + iw * (c * scale.powi(3) * inv3)
    }
}

/// Exponential expansion of the Drude correlation function.
///
/// Uses the Drude pole plus Matsubara poles; Matsubara terms beyond the
/// retained ones are folded into `eta` as `sum d_k / nu_k`. The number of
/// terms (pole included) is the smallest `K <= k_max` whose relative
/// half-line spectrum residual on `[-FIT_WINDOW, FIT_WINDOW]` is below `tol`.
pub fn expand_correlation(
    j: &SpectralDensity,
    beta: f64,
    tol: f64,
    k_max: usize,
) -> Result<ExponentialExpansion, BathError> {
    j.validate()?;
    check_beta(beta)?;
    if !(tol.is_finite() && tol > 0.0) {
        return Err(BathError::InvalidParameter(format!("tol must be > 0, got {tol}")));
    }
    if k_max < 1 {
        return Err(BathError::InvalidParameter("k_max must be >= 1".into()));
    }
    let (gamma, xi) = j.drude_parameters().ok_or_else(|| {
        BathError::NonIntegrableSpectrum(format!("{j:?} has no exponential expansion"))
    })?;
    let dm = DrudeMatsubara::new(gamma, xi, beta)?;
    let d0 = dm.pole_amplitude();
    let omegas: Vec<f64> = (0..FIT_POINTS)
        .map(|i| -FIT_WINDOW + 2.0 * FIT_WINDOW * i as f64 / (FIT_POINTS - 1) as f64)
        .collect();
    let pole = |w: f64| d0 / Complex64::new(gamma, -w);
    let exact: Vec<Complex64> = omegas.iter().map(|&w| pole(w) + dm.matsubara_tail_spectrum(0, w)).collect();
    let norm = exact.iter().fold(0.0_f64, |m, v| m.max(v.norm()));
    let total_weight = dm.matsubara_weight_total();

    let mut best: Option<(f64, usize)> = None;
    for k in 1..=k_max {
        let n_mats = k - 1;
        let retained: f64 = (1..=n_mats).map(|m| {
            let (d, nu) = dm.matsubara(m);
            d / nu
        }).sum();
        let eta = total_weight - retained;
        let resid = omegas
            .iter()
            .zip(&exact)
            .map(|(&w, ex)| {
                let iw = Complex64::new(0.0, w);
                let fit = pole(w)
                    + (1..=n_mats).map(|m| {
                        let (d, nu) = dm.matsubara(m);
                        d / (nu - iw)
                    }).sum::<Complex64>()
                    + eta;
                (fit - ex).norm()
            })
            .fold(0.0_f64, f64::max)
            / norm.max(f64::MIN_POSITIVE);
        if best.is_none_or(|(r, _)| resid < r) {
            best = Some((resid, k));
        }
        if resid <= tol {
            let mut terms = vec![ExpansionTerm { amplitude: d0, conj_amplitude: d0.conj(), rate: Complex64::new(gamma, 0.0) }];
            for m in 1..=n_mats {
                let (d, nu) = dm.matsubara(m);
                let d = Complex64::new(d, 0.0);
                terms.push(ExpansionTerm { amplitude: d, conj_amplitude: d, rate: Complex64::new(nu, 0.0) });
            }
            return Ok(ExponentialExpansion { terms, eta, beta, fit_error: resid });
        }
    }
    Err(BathError::FitFailure { achieved: best.map_or(f64::NAN, |b| b.0), tol, k_max })
}

/// Half-line spectrum of the exact correlation, `int_0^inf L(t) exp(i w t) dt`
/// with the short-time singularity included, from the converged Matsubara series.
pub fn exact_spectrum(j: &SpectralDensity, beta: f64, w: f64) -> Result<Complex64, BathError> {
    j.validate()?;
    check_beta(beta)?;
    let (gamma, xi) = j.drude_parameters().ok_or_else(|| {
        BathError::NonIntegrableSpectrum(format!("{j:?} has no exponential expansion"))
    })?;
    let dm = DrudeMatsubara::new(gamma, xi, beta)?;
    Ok(dm.pole_amplitude() / Complex64::new(gamma, -w) + dm.matsubara_tail_spectrum(0, w))
}
