//! Hierarchical equations of motion.
//!
//! For every multi-index `j` with `|j| <= depth`:
//!
//! ```text
//! d rho_j/dt = -(i H^x + sum_k z_k j_k + eta V^x V^x) rho_j
//!              + sum_k sqrt(j_k) (d_k V rho_{j-e_k} - d'_k rho_{j-e_k} V)
//!              - sum_k sqrt(j_k + 1) V^x rho_{j+e_k}
//! ```
//!
//! where `A^x B = [A, B]` and blocks beyond the depth are zero.

use super::{steady, DynamicsError, Generator, Method};
use crate::bath::ExponentialExpansion;
use crate::op2::{self, Op2};
use crate::system::TwoLevelModel;
use num_complex::Complex64;
use std::collections::HashMap;
use std::sync::Arc;

const NONE: u32 = u32::MAX;

/// Multi-indices of the truncated hierarchy and their neighbor links.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyIndex {
    terms: usize,
    depth: usize,
    indices: Vec<Vec<u16>>,
    /// `lower[b * terms + k]` is the block of `j - e_k`, or `NONE`.
    lower: Vec<u32>,
    /// `upper[b * terms + k]` is the block of `j + e_k`, or `NONE`.
    upper: Vec<u32>,
}

impl HierarchyIndex {
    pub fn new(terms: usize, depth: usize) -> Self {
        let mut indices: Vec<Vec<u16>> = vec![vec![0; terms]];
        let mut level_start = 0;
        for _ in 0..depth {
            let level_end = indices.len();
            for b in level_start..level_end {
                let parent = indices[b].clone();
                // Extend only at or after the last nonzero position to avoid duplicates.
                let first = parent.iter().rposition(|&x| x > 0).unwrap_or(0);
                for k in first..terms {
                    let mut child = parent.clone();
                    child[k] += 1;
                    indices.push(child);
                }
            }
            level_start = level_end;
        }
        let lookup: HashMap<Vec<u16>, u32> =
            indices.iter().enumerate().map(|(i, j)| (j.clone(), i as u32)).collect();
        let mut lower = vec![NONE; indices.len() * terms];
        let mut upper = vec![NONE; indices.len() * terms];
        for (b, j) in indices.iter().enumerate() {
            for k in 0..terms {
                let mut n = j.clone();
                if n[k] > 0 {
                    n[k] -= 1;
                    lower[b * terms + k] = lookup[&n];
                    n[k] += 1;
                }
                n[k] += 1;
                if let Some(&u) = lookup.get(&n) {
                    upper[b * terms + k] = u;
                }
            }
        }
        HierarchyIndex { terms, depth, indices, lower, upper }
    }

    pub fn block_count(&self) -> usize {
        self.indices.len()
    }

    pub fn terms(&self) -> usize {
        self.terms
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn multi_index(&self, block: usize) -> &[u16] {
        &self.indices[block]
    }

    /// Block offset of a multi-index, if it lies inside the truncation.
    pub fn offset_of(&self, j: &[u16]) -> Option<usize> {
        self.indices.iter().position(|x| x.as_slice() == j)
    }

    pub fn lower(&self, block: usize, k: usize) -> Option<usize> {
        let v = self.lower[block * self.terms + k];
        (v != NONE).then_some(v as usize)
    }

    pub fn upper(&self, block: usize, k: usize) -> Option<usize> {
        let v = self.upper[block * self.terms + k];
        (v != NONE).then_some(v as usize)
    }
}

/// Hierarchy blocks together with their index map.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyState {
    pub index: Arc<HierarchyIndex>,
    /// `blocks[0]` is the reduced density matrix.
    pub blocks: Vec<Op2>,
}

impl HierarchyState {
    pub fn rho(&self) -> &Op2 {
        &self.blocks[0]
    }

    pub fn block(&self, j: &[u16]) -> Option<&Op2> {
        self.index.offset_of(j).map(|b| &self.blocks[b])
    }
}

/// HEOM generator for a two-level model.
#[derive(Debug, Clone)]
pub struct Heom {
    model: TwoLevelModel,
    v: Op2,
    eta: f64,
    amp: Vec<Complex64>,
    conj_amp: Vec<Complex64>,
    index: Arc<HierarchyIndex>,
    /// `sum_k z_k j_k` per block.
    damping: Vec<Complex64>,
    sqrt: Vec<f64>,
    static_bound: f64,
}

/// Largest state dimension (complex entries) solved directly for the steady state.
pub const DIRECT_SOLVE_MAX: usize = 1200;

impl Heom {
    pub fn new(model: &TwoLevelModel, expansion: &ExponentialExpansion, depth: usize) -> Self {
        let terms = expansion.len();
        let index = Arc::new(HierarchyIndex::new(terms, depth));
        let rates: Vec<Complex64> = expansion.terms.iter().map(|t| t.rate).collect();
        let amp: Vec<Complex64> = expansion.terms.iter().map(|t| t.amplitude).collect();
        let conj_amp: Vec<Complex64> = expansion.terms.iter().map(|t| t.conj_amplitude).collect();
        let damping: Vec<Complex64> = (0..index.block_count())
            .map(|b| index.multi_index(b).iter().zip(&rates).map(|(&j, z)| z * j as f64).sum())
            .collect();
        let sqrt: Vec<f64> = (0..=depth + 1).map(|n| (n as f64).sqrt()).collect();
        let mut static_bound = 0.0_f64;
        for b in 0..index.block_count() {
            let j = index.multi_index(b);
            let mut s = damping[b].norm() + 4.0 * expansion.eta;
            for k in 0..terms {
                if j[k] > 0 {
                    s += sqrt[j[k] as usize] * (amp[k].norm() + conj_amp[k].norm());
                }
                if index.upper(b, k).is_some() {
                    s += 2.0 * sqrt[j[k] as usize + 1];
                }
            }
            static_bound = static_bound.max(s);
        }
        Heom {
            model: *model,
            v: model.coupling(),
            eta: expansion.eta,
            amp,
            conj_amp,
            index,
            damping,
            sqrt,
            static_bound,
        }
    }

    pub fn index(&self) -> &Arc<HierarchyIndex> {
        &self.index
    }

    /// Wrap a flat state with this hierarchy's index.
    pub fn wrap(&self, blocks: Vec<Op2>) -> HierarchyState {
        HierarchyState { index: Arc::clone(&self.index), blocks }
    }

    /// Time derivative with an explicit Hamiltonian.
    pub fn rhs_with(&self, h: &Op2, state: &[Op2], out: &mut [Op2]) {
        let v = &self.v;
        let terms = self.index.terms;
        let mi = Complex64::new(0.0, -1.0);
        let eta = Complex64::new(self.eta, 0.0);
        for b in 0..self.index.block_count() {
            let rho = &state[b];
            let mut d = op2::commutator(h, rho) * mi - rho * self.damping[b];
            if self.eta != 0.0 {
                let vr = v * rho;
                let rv = rho * v;
                d -= (v * vr - vr * v * Complex64::new(2.0, 0.0) + rv * v) * eta;
            }
            let j = &self.index.indices[b];
            let mut left = op2::zero();
            let mut right = op2::zero();
            let mut up = op2::zero();
            let mut any_low = false;
            let mut any_up = false;
            for k in 0..terms {
                let lo = self.index.lower[b * terms + k];
                if lo != NONE {
                    let s = self.sqrt[j[k] as usize];
                    left += state[lo as usize] * (self.amp[k] * s);
                    right += state[lo as usize] * (self.conj_amp[k] * s);
                    any_low = true;
                }
                let hi = self.index.upper[b * terms + k];
                if hi != NONE {
                    up += state[hi as usize] * Complex64::new(self.sqrt[j[k] as usize + 1], 0.0);
                    any_up = true;
                }
            }
            if any_low {
                d += v * left - right * v;
            }
            if any_up {
                d -= op2::commutator(v, &up);
            }
            out[b] = d;
        }
    }
}

impl Generator for Heom {
    fn method(&self) -> Method {
        Method::Heom
    }

    fn state_len(&self) -> usize {
        self.index.block_count()
    }

    fn rhs(&self, lambda: f64, state: &[Op2], out: &mut [Op2]) -> Result<(), DynamicsError> {
        self.rhs_with(&self.model.hamiltonian(lambda), state, out);
        Ok(())
    }

    fn rate_bound(&self, lambda: f64) -> f64 {
        2.0 * op2::max_abs(&self.model.hamiltonian(lambda)) * 2.0 + self.static_bound
    }

    fn steady_state(&self, lambda: f64) -> Option<Result<Vec<Op2>, DynamicsError>> {
        if 4 * self.state_len() > DIRECT_SOLVE_MAX {
            return None;
        }
        let h = self.model.hamiltonian(lambda);
        Some(steady::null_vector_with_unit_trace(self.state_len(), |x, y| self.rhs_with(&h, x, y)))
    }
}
