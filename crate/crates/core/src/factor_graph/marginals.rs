use super::envelope::{normal_equations, EnvelopeMatrix, Layout};
use super::{FactorGraph, GraphError, VariableId, Values};
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Serialize, Serializer};
use std::collections::{BTreeMap, BTreeSet};

/// Per-variable marginal covariance in each variable's local coordinates.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MarginalCovariance {
    blocks: BTreeMap<VariableId, DMatrix<f64>>,
}

impl MarginalCovariance {
    pub fn get(&self, id: &VariableId) -> Option<&DMatrix<f64>> {
        self.blocks.get(id)
    }

    pub fn trace(&self, id: &VariableId) -> Option<f64> {
        self.blocks.get(id).map(|m| m.trace())
    }

    /// `Λ = Σ⁻¹` for one variable.
    pub fn information(&self, id: &VariableId) -> Option<DMatrix<f64>> {
        self.blocks.get(id).and_then(|m| m.clone().try_inverse())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&VariableId, &DMatrix<f64>)> {
        self.blocks.iter()
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn insert(&mut self, id: VariableId, cov: DMatrix<f64>) {
        self.blocks.insert(id, cov);
    }
}

impl Serialize for MarginalCovariance {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let rows: BTreeMap<String, Vec<Vec<f64>>> = self
            .blocks
            .iter()
            .map(|(id, m)| {
                let rows = (0..m.nrows())
                    .map(|r| m.row(r).iter().copied().collect())
                    .collect();
                (id.to_string(), rows)
            })
            .collect();
        rows.serialize(serializer)
    }
}

/// Marginals of every variable.
pub fn marginals(graph: &FactorGraph, values: &Values) -> Result<MarginalCovariance, GraphError> {
    let all: Vec<VariableId> = graph.variables().copied().collect();
    marginals_for(graph, values, &all)
}

/// Marginals of selected variables from the inverse of `JᵀJ` at `values`.
pub fn marginals_for(
    graph: &FactorGraph,
    values: &Values,
    wanted: &[VariableId],
) -> Result<MarginalCovariance, GraphError> {
    graph.check_values(values)?;
    for id in wanted {
        if !graph.contains(id) {
            return Err(GraphError::UnknownVariable(*id));
        }
    }
    let layout = Layout::new(graph);
    let (h, _, _) = normal_equations(graph, &layout, values)?;
    let chol = h
        .cholesky()
        .map_err(|_| GraphError::SingularInformation(null_space_variables(&layout, &h)))?;

    let mut out = MarginalCovariance::default();
    let unique: BTreeSet<VariableId> = wanted.iter().copied().collect();
    for id in unique {
        let off = layout.offsets[&id];
        let d = id.dim();
        let mut block = DMatrix::zeros(d, d);
        for c in 0..d {
            let col = chol.inverse_column(off + c);
            for r in 0..d {
                block[(r, c)] = col[off + r];
            }
        }
        let sym = (&block + block.transpose()) * 0.5;
        out.insert(id, sym);
    }
    Ok(out)
}

/// Variables with a non-negligible component in the numerical null space of `h`.
fn null_space_variables(layout: &Layout, h: &EnvelopeMatrix) -> Vec<VariableId> {
    let n = layout.dim;
    let mut dense = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in layout.first_col[i]..=i {
            let v = h.get(i, j);
            dense[(i, j)] = v;
            dense[(j, i)] = v;
        }
    }
    let eig = SymmetricEigen::new(dense);
    let scale = eig.eigenvalues.amax().max(1.0);
    let mut found = BTreeSet::new();
    for (k, lambda) in eig.eigenvalues.iter().enumerate() {
        if *lambda > 1e-10 * scale {
            continue;
        }
        let v = eig.eigenvectors.column(k);
        for id in &layout.order {
            let off = layout.offsets[id];
            let norm: f64 = (off..off + id.dim()).map(|r| v[r] * v[r]).sum::<f64>().sqrt();
            if norm > 1e-3 {
                found.insert(*id);
            }
        }
    }
    if found.is_empty() {
        found.extend(layout.order.iter().copied());
    }
    found.into_iter().collect()
}
