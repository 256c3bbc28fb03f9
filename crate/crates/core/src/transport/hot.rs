use nalgebra::DMatrix;
use rayon::prelude::*;

use super::{counting_distance, sinkhorn, uniform, CostMatrix, OtSettings, TransportPlan};
use crate::error::{Error, Result};
use crate::hawkes::EventSequence;

/// Counting distances between every type of `a` (rows) and every type of `b` (columns).
///
/// Declared types without events enter as empty time lists. Both sequences
/// are compared on the longer of the two horizons.
pub fn inner_cost_matrix(a: &EventSequence, b: &EventSequence) -> Result<CostMatrix> {
    if a.num_types == 0 || b.num_types == 0 {
        return Err(Error::Input("sequences must declare at least one event type".into()));
    }
    let horizon = a.horizon.max(b.horizon);
    let ta = a.times_by_type();
    let tb = b.times_by_type();
    let mut values = DMatrix::zeros(ta.len(), tb.len());
    for (u, tu) in ta.iter().enumerate() {
        for (v, tv) in tb.iter().enumerate() {
            values[(u, v)] = counting_distance(tu, tv, horizon)?;
        }
    }
    CostMatrix::new(values)
}

/// Type-level transport between two sequences with uniform type marginals.
///
/// Returns `<D, T*>` and `T*`.
pub fn inner_ot(a: &EventSequence, b: &EventSequence, settings: &OtSettings) -> Result<(f64, TransportPlan)> {
    let cost = inner_cost_matrix(a, b)?;
    solve_uniform(&cost, settings)
}

fn solve_uniform(cost: &CostMatrix, settings: &OtSettings) -> Result<(f64, TransportPlan)> {
    let (k, l) = cost.shape();
    if k == 1 || l == 1 {
        // Only one coupling exists when either side is a single point.
        let matrix = if k == 1 {
            DMatrix::from_row_slice(1, l, &uniform(l))
        } else {
            DMatrix::from_column_slice(k, 1, &uniform(k))
        };
        let total = matrix.dot(&cost.values);
        let plan = TransportPlan {
            matrix,
            row_marginal: uniform(k),
            col_marginal: uniform(l),
            cost: total,
            iterations_used: 0,
            converged: true,
        };
        return Ok((total, plan));
    }
    let beta = settings.beta.resolve(cost);
    let plan = sinkhorn(cost, &uniform(k), &uniform(l), beta, settings.max_iter, settings.tol)?;
    Ok((plan.cost, plan))
}

/// Set-to-set hierarchical transport result.
#[derive(Debug, Clone)]
pub struct HotResult {
    pub distance: f64,
    /// Outer coupling `Q*` between the two sets.
    pub coupling: TransportPlan,
    /// `D[k, l]`, the inner transport distance between `a[k]` and `b[l]`.
    pub inner_distances: DMatrix<f64>,
    /// `inner_plans[k][l]` couples the types of `a[k]` with those of `b[l]`.
    pub inner_plans: Vec<Vec<TransportPlan>>,
}

/// Hierarchical distance between two sets of sequences.
///
/// Every pair is compared with [`inner_ot`] (in parallel), then the resulting
/// matrix is transported with uniform marginals over the two sets.
pub fn hot_distance(a: &[EventSequence], b: &[EventSequence], settings: &OtSettings) -> Result<HotResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Input("sequence sets must be nonempty".into()));
    }
    let pairs: Vec<(usize, usize)> = (0..a.len()).flat_map(|k| (0..b.len()).map(move |l| (k, l))).collect();
    let solved: Vec<(f64, TransportPlan)> = pairs
        .par_iter()
        .map(|&(k, l)| inner_ot(&a[k], &b[l], settings))
        .collect::<Result<_>>()?;
    let mut inner_distances = DMatrix::zeros(a.len(), b.len());
    let mut inner_plans: Vec<Vec<TransportPlan>> = (0..a.len()).map(|_| Vec::with_capacity(b.len())).collect();
    for ((k, l), (d, plan)) in pairs.into_iter().zip(solved) {
        inner_distances[(k, l)] = d;
        inner_plans[k].push(plan);
    }
    let cost = CostMatrix::new(inner_distances.clone())?;
    let (distance, coupling) = solve_uniform(&cost, settings)?;
    Ok(HotResult { distance, coupling, inner_distances, inner_plans })
}
