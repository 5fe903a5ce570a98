//! Adiabatic Lindblad equation in the instantaneous eigenframe.
//!
//! With `H = Omega sz_theta / 2`, `c = cos(theta)`, `s = sin(theta)`:
//!
//! ```text
//! d rho/dt = -i [(Omega + 2 c^2 Im d(Omega)) sz_theta / 2, rho]
//!            + 2 c^2 J(Omega) ((1 + n) D[s-_theta] + n D[s+_theta]) rho
//!            + 2 s^2 d(0) D[sz_theta] rho
//! ```
//!
//! where `D[o] rho = o rho o^dagger - {o^dagger o, rho}/2`, `n` is the Bose
//! occupation at `Omega` and `d` is the half-line transform of `Re L`.

use super::{steady, DynamicsError, Generator, Method};
use crate::bath::{bose, ExponentialExpansion, SpectralDensity};
use crate::op2::{self, Op2};
use crate::system::TwoLevelModel;
use num_complex::Complex64;

#[derive(Debug, Clone)]
pub struct Agksl {
    model: TwoLevelModel,
    spectral: SpectralDensity,
    beta: f64,
    expansion: ExponentialExpansion,
    d_zero: f64,
}

fn dissipator(o: &Op2, rho: &Op2) -> Op2 {
    let od = o.adjoint();
    let n = od * o;
    o * rho * od - (n * rho + rho * n) * Complex64::new(0.5, 0.0)
}

impl Agksl {
    pub fn new(model: &TwoLevelModel, spectral: &SpectralDensity, beta: f64, expansion: &ExponentialExpansion) -> Self {
        Agksl {
            model: *model,
            spectral: *spectral,
            beta,
            expansion: expansion.clone(),
            d_zero: expansion.halfline_transform(0.0).re,
        }
    }

    /// Decay, excitation and dephasing rates and the shifted gap at `lambda`.
    pub fn rates(&self, lambda: f64) -> Result<AgkslRates, DynamicsError> {
        let frame = self.model.eigenframe(lambda)?;
        let (s, c) = frame.theta.sin_cos();
        let j = self.spectral.value(frame.omega);
        let n = bose(self.beta, frame.omega);
        let shift = self.expansion.halfline_transform(frame.omega).im;
        Ok(AgkslRates {
            gap: frame.omega + 2.0 * c * c * shift,
            decay: 2.0 * c * c * j * (1.0 + n),
            excitation: 2.0 * c * c * j * n,
            dephasing: 2.0 * s * s * self.d_zero,
        })
    }

    fn apply(&self, lambda: f64, rho: &Op2) -> Result<Op2, DynamicsError> {
        let frame = self.model.eigenframe(lambda)?;
        let r = self.rates(lambda)?;
        let sz = frame.sigma_z();
        let sm = frame.sigma_minus();
        let sp = frame.sigma_plus();
        let h = sz * Complex64::new(0.5 * r.gap, 0.0);
        let mut d = op2::commutator(&h, rho) * Complex64::new(0.0, -1.0);
        if r.decay != 0.0 {
            d += dissipator(&sm, rho) * op2::re(r.decay);
        }
        if r.excitation != 0.0 {
            d += dissipator(&sp, rho) * op2::re(r.excitation);
        }
        if r.dephasing != 0.0 {
            d += dissipator(&sz, rho) * op2::re(r.dephasing);
        }
        Ok(d)
    }
}

/// Coefficients of the adiabatic Lindblad generator at one control value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgkslRates {
    /// Lamb-shifted gap.
    pub gap: f64,
    pub decay: f64,
    pub excitation: f64,
    pub dephasing: f64,
}

impl Generator for Agksl {
    fn method(&self) -> Method {
        Method::Agksl
    }

    fn state_len(&self) -> usize {
        1
    }

    fn rhs(&self, lambda: f64, state: &[Op2], out: &mut [Op2]) -> Result<(), DynamicsError> {
        out[0] = self.apply(lambda, &state[0])?;
        Ok(())
    }

    fn rate_bound(&self, lambda: f64) -> f64 {
        match self.rates(lambda) {
            Ok(r) => r.gap.abs() + 2.0 * (r.decay + r.excitation) + 4.0 * r.dephasing,
            Err(_) => 1.0,
        }
    }

    fn steady_state(&self, lambda: f64) -> Option<Result<Vec<Op2>, DynamicsError>> {
        if let Err(e) = self.model.eigenframe(lambda) {
            return Some(Err(e.into()));
        }
        Some(steady::null_vector_with_unit_trace(1, |x, y| {
            y[0] = self.apply(lambda, &x[0]).expect("eigenframe checked above");
        }))
    }
}
