use super::envelope::{normal_equations, Layout};
use super::{FactorGraph, GraphError, Values};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub initial_lambda: f64,
    pub lambda_up: f64,
    pub lambda_down: f64,
    pub max_lambda: f64,
    pub max_iterations: usize,
    /// Stop when an accepted step lowers the cost by less than this.
    pub absolute_tolerance: f64,
    /// Stop when an accepted step lowers the cost by less than this fraction.
    pub relative_tolerance: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            initial_lambda: 1e-4,
            lambda_up: 10.0,
            lambda_down: 10.0,
            max_lambda: 1e10,
            max_iterations: 100,
            absolute_tolerance: 1e-9,
            relative_tolerance: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub iterations: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub converged: bool,
    pub final_lambda: f64,
}

fn retract_all(layout: &Layout, values: &Values, step: &[f64]) -> Values {
    let mut out = values.clone();
    for id in &layout.order {
        let off = layout.offsets[id];
        let v = values.get(id).expect("values checked");
        out.set_unchecked(*id, v.retract(&step[off..off + id.dim()]));
    }
    out
}

/// Levenberg-Marquardt on `Σ‖r‖²` with Marquardt (diagonal) damping.
///
/// Only steps that strictly lower the cost are accepted, so the returned cost
/// never exceeds the initial one. Running out of iterations is reported
/// through [`SolverReport::converged`], not as an error.
pub fn optimize(
    graph: &FactorGraph,
    init: &Values,
    cfg: &SolverConfig,
) -> Result<(Values, SolverReport), GraphError> {
    graph.check_values(init)?;
    let unanchored = graph.unanchored_variables();
    if !unanchored.is_empty() {
        return Err(GraphError::Indeterminate(unanchored));
    }

    let layout = Layout::new(graph);
    let mut values = retract_all(&layout, init, &vec![0.0; layout.dim]);
    let mut lambda = cfg.initial_lambda;
    let initial_cost = graph.error(&values)?;
    let mut cost = initial_cost;
    let mut converged = false;
    let mut iterations = 0;

    if layout.dim == 0 {
        return Ok((
            values,
            SolverReport {
                iterations: 0,
                initial_cost,
                final_cost: cost,
                converged: true,
                final_lambda: lambda,
            },
        ));
    }

    while iterations < cfg.max_iterations {
        iterations += 1;
        let (h, g, _) = normal_equations(graph, &layout, &values)?;
        if g.iter().all(|v| v.abs() < 1e-14) {
            converged = true;
            break;
        }
        let mut accepted = false;
        loop {
            let mut damped = h.clone();
            for i in 0..layout.dim {
                damped.add_diagonal(i, lambda * h.diagonal(i));
            }
            match damped.cholesky() {
                Ok(chol) => {
                    let mut step: Vec<f64> = g.iter().map(|v| -v).collect();
                    chol.solve_in_place(&mut step);
                    let candidate = retract_all(&layout, &values, &step);
                    let new_cost = graph.error(&candidate)?;
                    if new_cost < cost {
                        let decrease = cost - new_cost;
                        values = candidate;
                        let old = cost;
                        cost = new_cost;
                        lambda = (lambda / cfg.lambda_down).max(1e-12);
                        accepted = true;
                        if decrease < cfg.absolute_tolerance
                            || decrease < cfg.relative_tolerance * old
                        {
                            converged = true;
                        }
                        break;
                    }
                    lambda *= cfg.lambda_up;
                    if lambda > cfg.max_lambda {
                        // no descent direction left: numerically stationary
                        converged = true;
                        break;
                    }
                }
                Err(row) => {
                    lambda *= cfg.lambda_up;
                    if lambda > cfg.max_lambda {
                        return Err(GraphError::Indeterminate(vec![layout.variable_at(row)]));
                    }
                }
            }
        }
        if converged || !accepted {
            break;
        }
    }

    Ok((
        values,
        SolverReport {
            iterations,
            initial_cost,
            final_cost: cost,
            converged,
            final_lambda: lambda,
        },
    ))
}
