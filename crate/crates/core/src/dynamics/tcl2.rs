//! Second-order time-convolutionless equation with auxiliary memory operators.
//!
//! ```text
//! d rho/dt = -i [H, rho] - [V, Q rho - rho Q^dagger],   Q = sum_k C_k + eta V
//! d C_k/dt = d_k V - z_k C_k - i [H, C_k],               C_k(0) = 0
//! ```
//!
//! `C_k(t)` accumulates `int_0^t d_k exp(-z_k s) V_I(-s) ds` with the
//! interaction picture following the instantaneous Hamiltonian.

use super::{steady, DynamicsError, Generator, Method};
use crate::bath::ExponentialExpansion;
use crate::op2::{self, Op2};
use crate::system::TwoLevelModel;
use nalgebra::{Matrix4, Vector4};
use num_complex::Complex64;

/// Reduced state plus one memory operator per expansion term.
#[derive(Debug, Clone, PartialEq)]
pub struct Tcl2State {
    pub rho: Op2,
    pub aux: Vec<Op2>,
}

impl Tcl2State {
    pub fn from_blocks(blocks: &[Op2]) -> Self {
        Tcl2State { rho: blocks[0], aux: blocks[1..].to_vec() }
    }

    pub fn to_blocks(&self) -> Vec<Op2> {
        std::iter::once(self.rho).chain(self.aux.iter().copied()).collect()
    }
}

#[derive(Debug, Clone)]
pub struct Tcl2 {
    model: TwoLevelModel,
    v: Op2,
    eta: f64,
    amp: Vec<Complex64>,
    rates: Vec<Complex64>,
}

impl Tcl2 {
    pub fn new(model: &TwoLevelModel, expansion: &ExponentialExpansion) -> Self {
        Tcl2 {
            model: *model,
            v: model.coupling(),
            eta: expansion.eta,
            amp: expansion.terms.iter().map(|t| t.amplitude).collect(),
            rates: expansion.terms.iter().map(|t| t.rate).collect(),
        }
    }

    fn reduced_rhs(&self, h: &Op2, rho: &Op2, q: &Op2) -> Op2 {
        let mi = Complex64::new(0.0, -1.0);
        op2::commutator(h, rho) * mi - op2::commutator(&self.v, &(q * rho - rho * q.adjoint()))
    }

    /// Stationary memory operators `C_k = d_k (z_k + i H^x)^{-1} V`.
    pub fn stationary_memory(&self, lambda: f64) -> Result<Vec<Op2>, DynamicsError> {
        let h = self.model.hamiltonian(lambda);
        let i = Complex64::new(0.0, 1.0);
        let mut out = Vec::with_capacity(self.amp.len());
        for (d, z) in self.amp.iter().zip(&self.rates) {
            let m = steady::dense_matrix(1, |x, y| y[0] = x[0] * *z + op2::commutator(&h, &x[0]) * i);
            let m: Matrix4<Complex64> = m.fixed_view::<4, 4>(0, 0).into();
            let target = self.v * *d;
            let b = Vector4::new(target[(0, 0)], target[(0, 1)], target[(1, 0)], target[(1, 1)]);
            let c = m
                .lu()
                .solve(&b)
                .ok_or_else(|| DynamicsError::SingularSteadyState("memory resolvent is singular".into()))?;
            out.push(Op2::new(c[0], c[1], c[2], c[3]));
        }
        Ok(out)
    }
}

impl Generator for Tcl2 {
    fn method(&self) -> Method {
        Method::Tcl2
    }

    fn state_len(&self) -> usize {
        1 + self.amp.len()
    }

    fn rhs(&self, lambda: f64, state: &[Op2], out: &mut [Op2]) -> Result<(), DynamicsError> {
        let h = self.model.hamiltonian(lambda);
        let mi = Complex64::new(0.0, -1.0);
        let mut q = self.v * Complex64::new(self.eta, 0.0);
        for k in 0..self.amp.len() {
            let c = &state[k + 1];
            q += c;
            out[k + 1] = self.v * self.amp[k] - c * self.rates[k] + op2::commutator(&h, c) * mi;
        }
        out[0] = self.reduced_rhs(&h, &state[0], &q);
        Ok(())
    }

    fn rate_bound(&self, lambda: f64) -> f64 {
        let h = op2::max_abs(&self.model.hamiltonian(lambda));
        let q: f64 = self.amp.iter().zip(&self.rates).map(|(d, z)| d.norm() / z.re).sum::<f64>() + self.eta;
        4.0 * h + self.rates.iter().fold(0.0_f64, |m, z| m.max(z.norm())) + 8.0 * q
    }

    fn steady_state(&self, lambda: f64) -> Option<Result<Vec<Op2>, DynamicsError>> {
        Some((|| {
            let memory = self.stationary_memory(lambda)?;
            let h = self.model.hamiltonian(lambda);
            let q = memory.iter().fold(self.v * Complex64::new(self.eta, 0.0), |acc, c| acc + c);
            let rho = steady::null_vector_with_unit_trace(1, |x, y| y[0] = self.reduced_rhs(&h, &x[0], &q))?;
            let mut blocks = rho;
            blocks.extend(memory);
            Ok(blocks)
        })())
    }
}
