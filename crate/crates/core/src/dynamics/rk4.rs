//! Classical fixed-step fourth-order Runge-Kutta for block states.

use super::{DynamicsError, Generator};
use crate::op2::{self, Op2};
use num_complex::Complex64;

/// Stage buffers for RK4, reused across steps.
pub struct Rk4 {
    k1: Vec<Op2>,
    k2: Vec<Op2>,
    k3: Vec<Op2>,
    k4: Vec<Op2>,
    tmp: Vec<Op2>,
}

impl Rk4 {
    pub fn new(len: usize) -> Self {
        let z = vec![op2::zero(); len];
        Rk4 { k1: z.clone(), k2: z.clone(), k3: z.clone(), k4: z.clone(), tmp: z }
    }

    /// First-stage slope buffer, to be filled by the caller before
    /// [`Rk4::step_with_slope`].
    pub fn slope_mut(&mut self) -> &mut [Op2] {
        &mut self.k1
    }

    pub fn slope(&self) -> &[Op2] {
        &self.k1
    }

    /// One step with control values at the start, midpoint and end.
    pub fn step(
        &mut self,
        g: &dyn Generator,
        state: &mut [Op2],
        h: f64,
        l0: f64,
        lm: f64,
        l1: f64,
    ) -> Result<(), DynamicsError> {
        g.rhs(l0, state, &mut self.k1)?;
        self.step_with_slope(g, state, h, lm, l1)
    }

    /// One step reusing the first-stage slope already in the buffer.
    pub fn step_with_slope(
        &mut self,
        g: &dyn Generator,
        state: &mut [Op2],
        h: f64,
        lm: f64,
        l1: f64,
    ) -> Result<(), DynamicsError> {
        let half = Complex64::new(0.5 * h, 0.0);
        let full = Complex64::new(h, 0.0);
        axpy(&mut self.tmp, state, half, &self.k1);
        g.rhs(lm, &self.tmp, &mut self.k2)?;
        axpy(&mut self.tmp, state, half, &self.k2);
        g.rhs(lm, &self.tmp, &mut self.k3)?;
        axpy(&mut self.tmp, state, full, &self.k3);
        g.rhs(l1, &self.tmp, &mut self.k4)?;
        let w1 = Complex64::new(h / 6.0, 0.0);
        let w2 = Complex64::new(h / 3.0, 0.0);
        for i in 0..state.len() {
            state[i] += (self.k1[i] + self.k4[i]) * w1 + (self.k2[i] + self.k3[i]) * w2;
        }
        Ok(())
    }
}

fn axpy(out: &mut [Op2], x: &[Op2], a: Complex64, y: &[Op2]) {
    for ((o, x), y) in out.iter_mut().zip(x).zip(y) {
        *o = x + y * a;
    }
}
