//! Two-level system Hamiltonians, the coupling operator and the instantaneous
//! eigenframe.

use crate::op2::{self, Op2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SystemError {
    #[error("invalid system parameter: {0}")]
    InvalidParameter(String),
    #[error("degenerate gap: the tunable system has zero splitting at lambda = 0")]
    DegenerateGap,
}

/// Which Hamiltonian family the control field enters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    /// `H = eps sz/2 + lambda sx/2`.
    Driven,
    /// `H = eps lambda sz/2`.
    Tunable,
}

/// A two-level system coupled to the bath through `sigma_x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoLevelModel {
    pub kind: SystemKind,
    /// Level spacing.
    pub epsilon: f64,
    pub lambda_i: f64,
    pub lambda_f: f64,
}

/// Instantaneous eigenframe: `H = omega * sz_theta / 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenFrame {
    pub omega: f64,
    pub theta: f64,
    /// Sign of `cos(theta)`.
    pub sign: f64,
}

impl EigenFrame {
    /// `cos(theta) sz + sin(theta) sx`.
    pub fn sigma_z(&self) -> Op2 {
        op2::from_bloch(0.0, self.theta.sin(), 0.0, self.theta.cos())
    }

    /// `cos(theta) sx - sin(theta) sz`.
    pub fn sigma_x(&self) -> Op2 {
        op2::from_bloch(0.0, self.theta.cos(), 0.0, -self.theta.sin())
    }

    /// Rotated lowering operator `(sx_theta - i sy) / 2`.
    pub fn sigma_minus(&self) -> Op2 {
        (self.sigma_x() - op2::sigma_y() * Complex64::new(0.0, 1.0)) * Complex64::new(0.5, 0.0)
    }

    pub fn sigma_plus(&self) -> Op2 {
        self.sigma_minus().adjoint()
    }

    /// Rotation `U` with `U^dagger H U` diagonal.
    pub fn rotation(&self) -> Op2 {
        let (s, c) = (0.5 * self.theta).sin_cos();
        Op2::new(
            Complex64::new(c, 0.0),
            Complex64::new(-s, 0.0),
            Complex64::new(s, 0.0),
            Complex64::new(c, 0.0),
        )
    }
}

impl TwoLevelModel {
    pub fn new(kind: SystemKind, epsilon: f64, lambda_i: f64, lambda_f: f64) -> Result<Self, SystemError> {
        let m = TwoLevelModel { kind, epsilon, lambda_i, lambda_f };
        m.validate()?;
        Ok(m)
    }

    pub fn driven(epsilon: f64, lambda_i: f64, lambda_f: f64) -> Result<Self, SystemError> {
        Self::new(SystemKind::Driven, epsilon, lambda_i, lambda_f)
    }

    pub fn tunable(epsilon: f64, lambda_i: f64, lambda_f: f64) -> Result<Self, SystemError> {
        Self::new(SystemKind::Tunable, epsilon, lambda_i, lambda_f)
    }

    pub fn validate(&self) -> Result<(), SystemError> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(SystemError::InvalidParameter(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        if !(self.lambda_i.is_finite() && self.lambda_f.is_finite()) {
            return Err(SystemError::InvalidParameter("lambda endpoints must be finite".into()));
        }
        Ok(())
    }

    pub fn hamiltonian(&self, lambda: f64) -> Op2 {
        match self.kind {
            SystemKind::Driven => op2::from_bloch(0.0, 0.5 * lambda, 0.0, 0.5 * self.epsilon),
            SystemKind::Tunable => op2::from_bloch(0.0, 0.0, 0.0, 0.5 * self.epsilon * lambda),
        }
    }

    /// `dH/dlambda`, constant since `H` is linear in the control.
    pub fn control_operator(&self) -> Op2 {
        match self.kind {
            SystemKind::Driven => op2::from_bloch(0.0, 0.5, 0.0, 0.0),
            SystemKind::Tunable => op2::from_bloch(0.0, 0.0, 0.0, 0.5 * self.epsilon),
        }
    }

    /// System side of the system-bath coupling.
    pub fn coupling(&self) -> Op2 {
        op2::sigma_x()
    }

    pub fn eigenframe(&self, lambda: f64) -> Result<EigenFrame, SystemError> {
        match self.kind {
            SystemKind::Driven => Ok(EigenFrame {
                omega: self.epsilon.hypot(lambda),
                theta: lambda.atan2(self.epsilon),
                sign: 1.0,
            }),
            SystemKind::Tunable => {
                if lambda == 0.0 {
                    return Err(SystemError::DegenerateGap);
                }
                let theta = if lambda > 0.0 { 0.0 } else { std::f64::consts::PI };
                Ok(EigenFrame { omega: self.epsilon * lambda.abs(), theta, sign: lambda.signum() })
            }
        }
    }

    /// Half the level splitting of `H(lambda)`.
    fn half_gap(&self, lambda: f64) -> f64 {
        match self.kind {
            SystemKind::Driven => 0.5 * self.epsilon.hypot(lambda),
            SystemKind::Tunable => 0.5 * (self.epsilon * lambda).abs(),
        }
    }

    /// `exp(-beta H) / Z`.
    pub fn gibbs_state(&self, lambda: f64, beta: f64) -> Op2 {
        let half = self.half_gap(lambda);
        let h = self.hamiltonian(lambda);
        if half == 0.0 {
            return op2::identity() * Complex64::new(0.5, 0.0);
        }
        let t = (beta * half).tanh();
        (op2::identity() - h * Complex64::new(t / half, 0.0)) * Complex64::new(0.5, 0.0)
    }

    /// `Z = tr exp(-beta H)`.
    pub fn partition_function(&self, lambda: f64, beta: f64) -> f64 {
        2.0 * (beta * self.half_gap(lambda)).cosh()
    }

    /// `-(1/beta) ln Z`.
    pub fn free_energy(&self, lambda: f64, beta: f64) -> f64 {
        let x = beta * self.half_gap(lambda);
        // ln(2 cosh x) without overflow.
        -(x + (-2.0 * x).exp().ln_1p()) / beta
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::op2::{hermitian_eigenvalues, max_abs};

    #[test]
    fn hamiltonian_examples() {
        let d = TwoLevelModel::driven(1.0, 0.0, 1.0).unwrap();
        let h0 = d.hamiltonian(0.0);
        assert_eq!(h0[(0, 0)].re, 0.5);
        assert_eq!(h0[(1, 1)].re, -0.5);
        let ev = hermitian_eigenvalues(&d.hamiltonian(1.0));
        assert!((ev[1] - 0.5_f64.sqrt()).abs() < 1e-15 && (ev[0] + 0.5_f64.sqrt()).abs() < 1e-15);
        let t = TwoLevelModel::tunable(1.0, 1.0, 2.0).unwrap();
        let h = t.hamiltonian(2.0);
        assert_eq!(h[(0, 0)].re, 1.0);
        assert_eq!(h[(1, 1)].re, -1.0);
    }

    #[test]
    fn eigenframe_examples() {
        let d = TwoLevelModel::driven(1.0, 0.0, 1.0).unwrap();
        let f = d.eigenframe(1.0).unwrap();
        assert!((f.omega - 2.0_f64.sqrt()).abs() < 1e-15);
        assert!((f.theta - std::f64::consts::FRAC_PI_4).abs() < 1e-15);
        let f0 = d.eigenframe(0.0).unwrap();
        assert_eq!((f0.omega, f0.theta), (1.0, 0.0));
        let t = TwoLevelModel::tunable(1.0, 1.0, 2.0).unwrap();
        let ft = t.eigenframe(1.5).unwrap();
        assert_eq!((ft.omega, ft.theta, ft.sign), (1.5, 0.0, 1.0));
        assert_eq!(t.eigenframe(0.0), Err(SystemError::DegenerateGap));
    }

    #[test]
    fn rotated_operators_are_consistent() {
        let d = TwoLevelModel::driven(1.0, 0.0, 1.0).unwrap();
        let f = d.eigenframe(0.7).unwrap();
        let h = d.hamiltonian(0.7);
        assert!(max_abs(&(h - f.sigma_z() * Complex64::new(0.5 * f.omega, 0.0))) < 1e-14);
        let u = f.rotation();
        let diag = u.adjoint() * h * u;
        assert!(diag[(0, 1)].norm() < 1e-14);
        assert!((diag[(0, 0)].re - 0.5 * f.omega).abs() < 1e-14);
        // sx = cos(theta) sx_theta + sin(theta) sz_theta
        let back = f.sigma_x() * op2::re(f.theta.cos()) + f.sigma_z() * op2::re(f.theta.sin());
        assert!(max_abs(&(back - op2::sigma_x())) < 1e-14);
        let sm = f.sigma_minus();
        assert!(max_abs(&(sm * sm)) < 1e-14);
        let comm = op2::commutator(&f.sigma_plus(), &sm);
        assert!(max_abs(&(comm - f.sigma_z())) < 1e-14);
    }

    #[test]
    fn gibbs_examples() {
        let d = TwoLevelModel::driven(1.0, 0.0, 1.0).unwrap();
        let g = d.gibbs_state(0.0, 1.0);
        let z = (-0.5_f64).exp() + 0.5_f64.exp();
        assert!((g[(0, 0)].re - (-0.5_f64).exp() / z).abs() < 1e-15);
        assert!((g[(1, 1)].re - 0.5_f64.exp() / z).abs() < 1e-15);
        let cold = d.gibbs_state(0.0, 1e3);
        assert!(cold[(0, 0)].re < 1e-15 && (cold[(1, 1)].re - 1.0).abs() < 1e-15);
        let hot = d.gibbs_state(0.3, 1e-9);
        assert!(max_abs(&(hot - op2::identity() * op2::re(0.5))) < 1e-9);
    }

    #[test]
    fn free_energy_matches_partition_function() {
        let t = TwoLevelModel::tunable(1.0, 1.0, 2.0).unwrap();
        for (l, b) in [(1.0, 5.0), (2.0, 0.2), (0.0, 1.0)] {
            let f = -t.partition_function(l, b).ln() / b;
            assert!((t.free_energy(l, b) - f).abs() < 1e-14);
        }
    }
}
