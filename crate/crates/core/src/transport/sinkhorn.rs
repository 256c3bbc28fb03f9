use nalgebra::{DMatrix, DVector};

use super::{check_probability, CostMatrix, TransportPlan};
use crate::error::{Error, Result};

/// Below this ratio `beta / max(D)` the iteration runs on log-potentials.
const LOG_DOMAIN_RATIO: f64 = 1e-2;

/// Entropic optimal transport between `p` and `q`.
///
/// Alternates `b = q / (C^T a)` and `a = p / (C b)` with `C = exp(-D / beta)`
/// and returns `diag(a) C diag(b)`. `converged` reports whether the L1 column
/// residual fell below `tol` within `max_iter` sweeps (rows are exact after
/// each sweep). Sharp regularization switches to log-domain potentials.
pub fn sinkhorn(cost: &CostMatrix, p: &[f64], q: &[f64], beta: f64, max_iter: usize, tol: f64) -> Result<TransportPlan> {
    run(cost, p, q, beta, max_iter, tol, None)
}

/// Same as [`sinkhorn`], also recording `<D, T>` after every sweep.
pub fn sinkhorn_with_trace(
    cost: &CostMatrix,
    p: &[f64],
    q: &[f64],
    beta: f64,
    max_iter: usize,
    tol: f64,
) -> Result<(TransportPlan, Vec<f64>)> {
    let mut trace = Vec::new();
    let plan = run(cost, p, q, beta, max_iter, tol, Some(&mut trace))?;
    Ok((plan, trace))
}

fn run(
    cost: &CostMatrix,
    p: &[f64],
    q: &[f64],
    beta: f64,
    max_iter: usize,
    tol: f64,
    trace: Option<&mut Vec<f64>>,
) -> Result<TransportPlan> {
    let (k, l) = cost.shape();
    if p.len() != k || q.len() != l {
        return Err(Error::Input(format!(
            "marginal lengths ({}, {}) do not match cost shape ({k}, {l})",
            p.len(),
            q.len()
        )));
    }
    check_probability(p, "row marginal")?;
    check_probability(q, "column marginal")?;
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::Config(format!("beta must be positive, got {beta}")));
    }
    let max_cost = cost.max();
    let (matrix, iterations_used, converged) = if beta < LOG_DOMAIN_RATIO * max_cost {
        log_domain(&cost.values, p, q, beta, max_iter, tol, trace)
    } else {
        scaling_domain(&cost.values, p, q, beta, max_iter, tol, trace)?
    };
    let total = matrix.dot(&cost.values);
    Ok(TransportPlan {
        matrix,
        row_marginal: p.to_vec(),
        col_marginal: q.to_vec(),
        cost: total,
        iterations_used,
        converged,
    })
}

fn scaling_domain(
    d: &DMatrix<f64>,
    p: &[f64],
    q: &[f64],
    beta: f64,
    max_iter: usize,
    tol: f64,
    mut trace: Option<&mut Vec<f64>>,
) -> Result<(DMatrix<f64>, usize, bool)> {
    let kernel = d.map(|c| (-c / beta).exp());
    let p = DVector::from_column_slice(p);
    let q = DVector::from_column_slice(q);
    let mut a = p.clone();
    let mut b = DVector::from_element(q.len(), 1.0);
    let mut converged = false;
    let mut iterations = 0;
    let underflow = || Error::KernelUnderflow { beta, suggested: 10.0 * beta };
    while iterations < max_iter {
        let kta = kernel.tr_mul(&a);
        if iterations > 0 {
            let residual: f64 = b.component_mul(&kta).iter().zip(q.iter()).map(|(s, t)| (s - t).abs()).sum();
            if residual < tol {
                converged = true;
                break;
            }
        }
        if kta.iter().zip(q.iter()).any(|(&s, &t)| s <= 0.0 && t > 0.0) {
            return Err(underflow());
        }
        b = DVector::from_fn(q.len(), |j, _| if q[j] > 0.0 { q[j] / kta[j] } else { 0.0 });
        let kb = &kernel * &b;
        if kb.iter().zip(p.iter()).any(|(&s, &t)| s <= 0.0 && t > 0.0) {
            return Err(underflow());
        }
        a = DVector::from_fn(p.len(), |i, _| if p[i] > 0.0 { p[i] / kb[i] } else { 0.0 });
        iterations += 1;
        if let Some(trace) = trace.as_deref_mut() {
            let plan = scaled(&kernel, &a, &b);
            trace.push(plan.dot(d));
        }
    }
    Ok((scaled(&kernel, &a, &b), iterations, converged))
}

fn scaled(kernel: &DMatrix<f64>, a: &DVector<f64>, b: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(kernel.nrows(), kernel.ncols(), |i, j| a[i] * kernel[(i, j)] * b[j])
}

fn log_sum_exp<I: Iterator<Item = f64>>(values: I) -> f64 {
    let values: Vec<f64> = values.collect();
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn log_domain(
    d: &DMatrix<f64>,
    p: &[f64],
    q: &[f64],
    beta: f64,
    max_iter: usize,
    tol: f64,
    mut trace: Option<&mut Vec<f64>>,
) -> (DMatrix<f64>, usize, bool) {
    let (k, l) = d.shape();
    let log_kernel = d.map(|c| -c / beta);
    let log_p: Vec<f64> = p.iter().map(|x| x.ln()).collect();
    let log_q: Vec<f64> = q.iter().map(|x| x.ln()).collect();
    let mut f = log_p.clone();
    let mut g = vec![0.0; l];
    let mut converged = false;
    let mut iterations = 0;
    let plan_of = |f: &[f64], g: &[f64]| DMatrix::from_fn(k, l, |i, j| (f[i] + log_kernel[(i, j)] + g[j]).exp());
    while iterations < max_iter {
        let col_lse: Vec<f64> = (0..l)
            .map(|j| log_sum_exp((0..k).map(|i| f[i] + log_kernel[(i, j)])))
            .collect();
        if iterations > 0 {
            let residual: f64 = (0..l).map(|j| ((g[j] + col_lse[j]).exp() - q[j]).abs()).sum();
            if residual < tol {
                converged = true;
                break;
            }
        }
        for j in 0..l {
            g[j] = if q[j] > 0.0 { log_q[j] - col_lse[j] } else { f64::NEG_INFINITY };
        }
        for i in 0..k {
            f[i] = if p[i] > 0.0 {
                log_p[i] - log_sum_exp((0..l).map(|j| log_kernel[(i, j)] + g[j]))
            } else {
                f64::NEG_INFINITY
            };
        }
        iterations += 1;
        if let Some(trace) = trace.as_deref_mut() {
            trace.push(plan_of(&f, &g).dot(d));
        }
    }
    (plan_of(&f, &g), iterations, converged)
}
