//! Direct stationary-state solves for linear block generators.

use super::DynamicsError;
use crate::op2::{self, Op2};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

fn flatten(blocks: &[Op2]) -> DVector<Complex64> {
    DVector::from_iterator(
        blocks.len() * 4,
        blocks.iter().flat_map(|b| [b[(0, 0)], b[(0, 1)], b[(1, 0)], b[(1, 1)]]),
    )
}

fn unflatten(v: &DVector<Complex64>) -> Vec<Op2> {
    (0..v.len() / 4)
        .map(|b| Op2::new(v[4 * b], v[4 * b + 1], v[4 * b + 2], v[4 * b + 3]))
        .collect()
}

/// Dense matrix of a linear map on `blocks` 2x2 blocks, built column by column.
pub(crate) fn dense_matrix<F: FnMut(&[Op2], &mut [Op2])>(blocks: usize, mut apply: F) -> DMatrix<Complex64> {
    let n = 4 * blocks;
    let mut m = DMatrix::<Complex64>::zeros(n, n);
    let mut e = vec![op2::zero(); blocks];
    let mut out = vec![op2::zero(); blocks];
    for col in 0..n {
        let (b, r, c) = (col / 4, (col % 4) / 2, col % 2);
        e[b][(r, c)] = Complex64::new(1.0, 0.0);
        apply(&e, &mut out);
        e[b][(r, c)] = Complex64::new(0.0, 0.0);
        m.set_column(col, &flatten(&out));
    }
    m
}

/// Solve `G x = 0` with `tr x[0] = 1` for a trace-preserving linear generator.
///
/// The equation for the `(0,0)` entry of the first block is redundant with
/// the `(1,1)` one and is replaced by the trace condition.
pub(crate) fn null_vector_with_unit_trace<F: FnMut(&[Op2], &mut [Op2])>(
    blocks: usize,
    apply: F,
) -> Result<Vec<Op2>, DynamicsError> {
    let mut m = dense_matrix(blocks, apply);
    let scale = m.iter().fold(0.0_f64, |s, z| s.max(z.norm())).max(1.0);
    let n = 4 * blocks;
    for col in 0..n {
        m[(0, col)] = Complex64::new(0.0, 0.0);
    }
    m[(0, 0)] = Complex64::new(scale, 0.0);
    m[(0, 3)] = Complex64::new(scale, 0.0);
    let mut rhs = DVector::<Complex64>::zeros(n);
    rhs[0] = Complex64::new(scale, 0.0);
    let lu = m.clone().lu();
    let mut x = lu
        .solve(&rhs)
        .ok_or_else(|| DynamicsError::SingularSteadyState("singular stationary system".into()))?;
    // One round of iterative refinement.
    let r = &rhs - &m * &x;
    if let Some(dx) = lu.solve(&r) {
        x += dx;
    }
    if x.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(DynamicsError::SingularSteadyState("non-finite stationary state".into()));
    }
    let mut blocks = unflatten(&x);
    // Enforce exact Hermiticity of the reduced state; the solve preserves it only to round-off.
    let rho = blocks[0];
    blocks[0] = (rho + rho.adjoint()) * Complex64::new(0.5, 0.0);
    Ok(blocks)
}
