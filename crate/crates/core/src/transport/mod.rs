//! Optimal transport machinery.
//!
//! Two conventions coexist and are kept apart:
//! the hierarchical sequence distances ([`inner_ot`], [`hot_distance`]) report the
//! linear cost `<D, T>`, while [`emd_1d`] and [`gw_distance`] report the
//! square-root form `<D, T>^{1/2}` used by the stability bounds.

mod counting;
mod emd;
mod gromov;
mod hot;
mod sinkhorn;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub use counting::{counting_distance, counting_distance_integral};
pub use emd::{emd_1d, emd_1d_plan, padding_bound};
pub use gromov::{fgw_discrete, gw_distance, gw_objective, FgwOptions, GromovResult};
pub use hot::{hot_distance, inner_cost_matrix, inner_ot, HotResult};
pub use sinkhorn::{sinkhorn, sinkhorn_with_trace};

/// Tolerance on marginals when validating probability vectors.
const MARGINAL_TOL: f64 = 1e-9;

/// A coupling between two discrete measures.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub matrix: DMatrix<f64>,
    pub row_marginal: Vec<f64>,
    pub col_marginal: Vec<f64>,
    pub cost: f64,
    pub iterations_used: usize,
    pub converged: bool,
}

impl TransportPlan {
    /// L1 distance between the plan's row/column sums and its marginals.
    pub fn marginal_error(&self) -> (f64, f64) {
        let rows = (0..self.matrix.nrows())
            .map(|i| (self.matrix.row(i).sum() - self.row_marginal[i]).abs())
            .sum();
        let cols = (0..self.matrix.ncols())
            .map(|j| (self.matrix.column(j).sum() - self.col_marginal[j]).abs())
            .sum();
        (rows, cols)
    }

    /// The forced coupling between two single points.
    pub fn trivial(cost: f64) -> Self {
        Self {
            matrix: DMatrix::from_element(1, 1, 1.0),
            row_marginal: vec![1.0],
            col_marginal: vec![1.0],
            cost,
            iterations_used: 0,
            converged: true,
        }
    }
}

/// A finite, nonnegative cost matrix with optional labels.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    pub values: DMatrix<f64>,
    pub row_labels: Option<Vec<String>>,
    pub col_labels: Option<Vec<String>>,
}

impl CostMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.iter().any(|&c| !(c.is_finite() && c >= 0.0)) {
            return Err(Error::Input("cost entries must be finite and nonnegative".into()));
        }
        Ok(Self { values, row_labels: None, col_labels: None })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(Error::Input("ragged cost matrix".into()));
        }
        Self::new(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
    }

    pub fn with_labels(mut self, rows: Vec<String>, cols: Vec<String>) -> Result<Self> {
        if rows.len() != self.values.nrows() || cols.len() != self.values.ncols() {
            return Err(Error::Input("label count does not match cost shape".into()));
        }
        self.row_labels = Some(rows);
        self.col_labels = Some(cols);
        Ok(self)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.shape()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Median of the strictly positive entries, if any.
    pub fn median_positive(&self) -> Option<f64> {
        let mut positive: Vec<f64> = self.values.iter().copied().filter(|&c| c > 0.0).collect();
        if positive.is_empty() {
            return None;
        }
        positive.sort_by(f64::total_cmp);
        let n = positive.len();
        Some(if n % 2 == 1 { positive[n / 2] } else { 0.5 * (positive[n / 2 - 1] + positive[n / 2]) })
    }
}

/// Entropic regularization strength.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Beta {
    /// `1e-2 * median(positive costs)`.
    Auto,
    Fixed(f64),
}

impl Beta {
    pub fn resolve(self, cost: &CostMatrix) -> f64 {
        match self {
            Beta::Fixed(b) => b,
            Beta::Auto => cost.median_positive().map_or(1.0, |m| 1e-2 * m),
        }
    }
}

/// Solver settings shared by every Sinkhorn call in the hierarchical distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OtSettings {
    pub beta: Beta,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for OtSettings {
    fn default() -> Self {
        Self { beta: Beta::Auto, max_iter: 2000, tol: 1e-6 }
    }
}

pub fn uniform(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

fn check_probability(p: &[f64], name: &str) -> Result<()> {
    if p.is_empty() {
        return Err(Error::Input(format!("{name} is empty")));
    }
    if p.iter().any(|&x| !(x.is_finite() && x >= 0.0)) {
        return Err(Error::Input(format!("{name} has negative or non-finite entries")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > MARGINAL_TOL * p.len() as f64 {
        return Err(Error::Input(format!("{name} sums to {total}, expected 1")));
    }
    Ok(())
}
