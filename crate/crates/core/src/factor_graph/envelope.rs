//! Envelope (profile) storage for the symmetric information matrix.
//!
//! Each row `i` of the lower triangle is stored from its first structurally
//! nonzero column up to the diagonal. Cholesky fill-in never leaves that
//! envelope, so with robot poses ordered first (a chain) and the few inferred
//! variables last the factorization cost stays close to linear in the chain
//! length.

use super::{FactorGraph, GraphError, Linearized, VariableId};
use std::collections::BTreeMap;

/// Scalar layout of the variables in elimination order.
#[derive(Clone, Debug)]
pub(crate) struct Layout {
    pub order: Vec<VariableId>,
    pub offsets: BTreeMap<VariableId, usize>,
    pub first_col: Vec<usize>,
    pub dim: usize,
}

impl Layout {
    pub fn new(graph: &FactorGraph) -> Self {
        let order: Vec<VariableId> = graph.variables().copied().collect();
        let mut offsets = BTreeMap::new();
        let mut dim = 0;
        for id in &order {
            offsets.insert(*id, dim);
            dim += id.dim();
        }
        // first column touched by each variable's block row
        let mut block_first: BTreeMap<VariableId, usize> =
            offsets.iter().map(|(id, off)| (*id, *off)).collect();
        for (_, f) in graph.factors() {
            let keys = f.keys();
            let min_off = keys.iter().map(|k| offsets[k]).min().unwrap_or(0);
            for k in keys {
                let entry = block_first.get_mut(k).expect("factor key declared");
                *entry = (*entry).min(min_off);
            }
        }
        let mut first_col = vec![0; dim];
        for id in &order {
            let off = offsets[id];
            first_col[off..off + id.dim()].fill(block_first[id]);
        }
        Self {
            order,
            offsets,
            first_col,
            dim,
        }
    }

    /// Variable owning scalar row `row`.
    pub fn variable_at(&self, row: usize) -> VariableId {
        let mut found = self.order[0];
        for id in &self.order {
            if self.offsets[id] <= row {
                found = *id;
            } else {
                break;
            }
        }
        found
    }
}

#[derive(Clone, Debug)]
pub(crate) struct EnvelopeMatrix {
    first: Vec<usize>,
    rows: Vec<Vec<f64>>,
}

impl EnvelopeMatrix {
    pub fn zeros(layout: &Layout) -> Self {
        let rows = (0..layout.dim)
            .map(|i| vec![0.0; i + 1 - layout.first_col[i]])
            .collect();
        Self {
            first: layout.first_col.clone(),
            rows,
        }
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(j <= i && j >= self.first[i]);
        self.rows[i][j - self.first[i]] += v;
    }

    /// Entry `(i, j)` with `j <= i`; zero outside the envelope.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j < self.first[i] {
            0.0
        } else {
            self.rows[i][j - self.first[i]]
        }
    }

    pub fn diagonal(&self, i: usize) -> f64 {
        self.rows[i][i - self.first[i]]
    }

    pub fn add_diagonal(&mut self, i: usize, v: f64) {
        let f = self.first[i];
        self.rows[i][i - f] += v;
    }

    /// Accumulates `JᵀJ` blocks of one linearized factor and returns `Jᵀr`
    /// contributions through `gradient`.
    pub fn accumulate(
        &mut self,
        layout: &Layout,
        keys: &[VariableId],
        lin: &Linearized,
        gradient: &mut [f64],
    ) {
        for (a, ja) in keys.iter().zip(&lin.jacobians) {
            let oa = layout.offsets[a];
            let g = ja.transpose() * &lin.residual;
            for (r, v) in g.iter().enumerate() {
                gradient[oa + r] += v;
            }
            for (b, jb) in keys.iter().zip(&lin.jacobians) {
                let ob = layout.offsets[b];
                if ob > oa {
                    continue;
                }
                let block = ja.transpose() * jb;
                for r in 0..block.nrows() {
                    for c in 0..block.ncols() {
                        let (i, j) = (oa + r, ob + c);
                        if j <= i {
                            self.add(i, j, block[(r, c)]);
                        }
                    }
                }
            }
        }
    }

    /// In-envelope Cholesky `A = L Lᵀ`. On failure returns the offending row.
    pub fn cholesky(&self) -> Result<EnvelopeCholesky, usize> {
        let n = self.dim();
        let mut l: Vec<Vec<f64>> = Vec::with_capacity(n);
        for i in 0..n {
            let fi = self.first[i];
            let mut row = vec![0.0; i + 1 - fi];
            for j in fi..=i {
                let fj = self.first[j];
                let k0 = fi.max(fj);
                let mut s = self.rows[i][j - fi];
                if k0 < j {
                    let li = &row[k0 - fi..j - fi];
                    let lj = if j == i {
                        li
                    } else {
                        &l[j][k0 - fj..j - fj]
                    };
                    s -= li.iter().zip(lj).map(|(a, b)| a * b).sum::<f64>();
                }
                if j < i {
                    row[j - fi] = s / l[j][j - fj];
                } else {
                    let d = self.rows[i][i - fi];
                    if !(s > 1e-13 * d.abs()) || !s.is_finite() {
                        return Err(i);
                    }
                    row[i - fi] = s.sqrt();
                }
            }
            l.push(row);
        }
        Ok(EnvelopeCholesky {
            first: self.first.clone(),
            rows: l,
        })
    }
}

#[derive(Clone, Debug)]
pub(crate) struct EnvelopeCholesky {
    first: Vec<usize>,
    rows: Vec<Vec<f64>>,
}

impl EnvelopeCholesky {
    /// Solves `L Lᵀ x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        self.forward(b, 0);
        self.backward(b);
    }

    fn forward(&self, b: &mut [f64], start: usize) {
        let n = self.rows.len();
        for i in start..n {
            let fi = self.first[i].max(start);
            let row = &self.rows[i];
            let f0 = self.first[i];
            let mut s = b[i];
            for k in fi..i {
                s -= row[k - f0] * b[k];
            }
            b[i] = s / row[i - f0];
        }
    }

    fn backward(&self, b: &mut [f64]) {
        let n = self.rows.len();
        for i in (0..n).rev() {
            let f0 = self.first[i];
            let row = &self.rows[i];
            b[i] /= row[i - f0];
            let xi = b[i];
            for k in f0..i {
                b[k] -= row[k - f0] * xi;
            }
        }
    }

    /// Column `c` of the inverse.
    pub fn inverse_column(&self, c: usize) -> Vec<f64> {
        let mut e = vec![0.0; self.rows.len()];
        e[c] = 1.0;
        // rows above c of the forward solve stay zero
        self.forward(&mut e, c);
        self.backward(&mut e);
        e
    }
}

/// Builds the Gauss-Newton system `H δ = -g` at `values`.
pub(crate) fn normal_equations(
    graph: &FactorGraph,
    layout: &Layout,
    values: &super::Values,
) -> Result<(EnvelopeMatrix, Vec<f64>, f64), GraphError> {
    let mut h = EnvelopeMatrix::zeros(layout);
    let mut g = vec![0.0; layout.dim];
    let mut cost = 0.0;
    for (_, f) in graph.factors() {
        let lin = f.linearize(values)?;
        cost += lin.residual.norm_squared();
        h.accumulate(layout, f.keys(), &lin, &mut g);
    }
    Ok((h, g, cost))
}
