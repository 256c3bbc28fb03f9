use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::{uniform, TransportPlan};
use crate::error::{Error, Result};
use crate::rng;

/// Settings of the proximal solver for (fused) Gromov-Wasserstein problems.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FgwOptions {
    /// Proximal step: the KL weight tying each iterate to the previous one.
    pub alpha: f64,
    pub outer_iters: usize,
    /// Sinkhorn sweeps per proximal step.
    pub inner_iters: usize,
    /// Extra runs from random feasible starts; the best objective wins.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for FgwOptions {
    fn default() -> Self {
        Self { alpha: 0.05, outer_iters: 200, inner_iters: 100, restarts: 0, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct GromovResult {
    pub distance: f64,
    pub plan: TransportPlan,
}

/// `sum_{i,i',j,j'} T_ij T_i'j' (Ga_ii' - Gb_jj')^2` for an arbitrary nonnegative `T`.
pub fn gw_objective(ga: &DMatrix<f64>, gb: &DMatrix<f64>, t: &DMatrix<f64>) -> f64 {
    let r = t.column_sum();
    let c = t.row_sum().transpose();
    let sa = ga.component_mul(ga);
    let sb = gb.component_mul(gb);
    let cross = (ga * t * gb.transpose()).dot(t);
    (r.dot(&(&sa * &r)) + c.dot(&(&sb * &c)) - 2.0 * cross).max(0.0)
}

fn feature_cost(fa: &[f64], fb: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(fa.len(), fb.len(), |i, j| (fa[i] - fb[j]).powi(2))
}

fn check_square(g: &DMatrix<f64>, name: &str) -> Result<()> {
    if !g.is_square() || g.is_empty() {
        return Err(Error::Input(format!("{name} must be a nonempty square matrix, got {:?}", g.shape())));
    }
    if g.iter().any(|x| !x.is_finite()) {
        return Err(Error::Input(format!("{name} has non-finite entries")));
    }
    Ok(())
}

/// Discrete Gromov-Wasserstein distance `min_T (sum T T |a - b|^2)^{1/2}` with uniform marginals.
///
/// The problem is non-convex; the returned plan is a local optimum of the
/// proximal iteration (improved by `opts.restarts`).
pub fn gw_distance(ga: &DMatrix<f64>, gb: &DMatrix<f64>, opts: &FgwOptions) -> Result<GromovResult> {
    check_square(ga, "first matrix")?;
    check_square(gb, "second matrix")?;
    let zeros = DMatrix::zeros(ga.nrows(), gb.nrows());
    let mut result = solve(&zeros, ga, gb, opts)?;
    result.distance = result.distance.sqrt();
    Ok(result)
}

/// Discrete fused Gromov-Wasserstein objective
/// `min_T <D_f, T> + sum T_ij T_i'j' (Ga_ii' - Gb_jj')^2` with `D_f = [(fa_i - fb_j)^2]`.
pub fn fgw_discrete(
    fa: &[f64],
    ga: &DMatrix<f64>,
    fb: &[f64],
    gb: &DMatrix<f64>,
    opts: &FgwOptions,
) -> Result<GromovResult> {
    check_square(ga, "Ga")?;
    check_square(gb, "Gb")?;
    if fa.len() != ga.nrows() || fb.len() != gb.nrows() {
        return Err(Error::Input(format!(
            "feature lengths ({}, {}) do not match structure sizes ({}, {})",
            fa.len(),
            fb.len(),
            ga.nrows(),
            gb.nrows()
        )));
    }
    solve(&feature_cost(fa, fb), ga, gb, opts)
}

fn solve(df: &DMatrix<f64>, ga: &DMatrix<f64>, gb: &DMatrix<f64>, opts: &FgwOptions) -> Result<GromovResult> {
    if !(opts.alpha.is_finite() && opts.alpha > 0.0) {
        return Err(Error::Config(format!("alpha must be positive, got {}", opts.alpha)));
    }
    if opts.outer_iters == 0 || opts.inner_iters == 0 {
        return Err(Error::Config("iteration counts must be positive".into()));
    }
    let (m, n) = df.shape();
    let p = uniform(m);
    let q = uniform(n);
    let mut best: Option<GromovResult> = None;
    for restart in 0..=opts.restarts {
        let start = if restart == 0 {
            DMatrix::from_fn(m, n, |i, j| p[i] * q[j])
        } else {
            random_coupling(&p, &q, &mut rng::stream(opts.seed, &[restart as u64]))
        };
        let run = proximal(df, ga, gb, &p, &q, start, opts)?;
        if best.as_ref().is_none_or(|b| run.distance < b.distance) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one run"))
}

fn objective(df: &DMatrix<f64>, ga: &DMatrix<f64>, gb: &DMatrix<f64>, t: &DMatrix<f64>) -> f64 {
    df.dot(t) + gw_objective(ga, gb, t)
}

/// Proximal point iteration: `T <- argmin <L(T_j), T> + alpha KL(T || T_j)` over
/// the transport polytope, where `L(T) = D_f + D_g - Ga T Gb^T - Ga^T T Gb`.
///
/// `D_g` only adds row and column constants on the polytope, so it is absorbed
/// by the Sinkhorn potentials and omitted here. For symmetric structures the
/// linear term reduces to `2 Ga T Gb^T`.
///
/// Sinkhorn converges slowly once the iterate nears a vertex, so the final
/// iterate is rounded onto the polytope and, for square problems, compared
/// with the permutation plan that best matches it.
fn proximal(
    df: &DMatrix<f64>,
    ga: &DMatrix<f64>,
    gb: &DMatrix<f64>,
    p: &[f64],
    q: &[f64],
    start: DMatrix<f64>,
    opts: &FgwOptions,
) -> Result<GromovResult> {
    let (m, n) = df.shape();
    let mut t = start;
    let mut converged = false;
    for _ in 0..opts.outer_iters {
        let linear = df - (ga * &t * gb.transpose()) - (ga.transpose() * &t * gb);
        let log_kernel = DMatrix::from_fn(m, n, |i, j| t[(i, j)].ln() - linear[(i, j)] / opts.alpha);
        let (next, ok) = project(&log_kernel, p, q, opts.inner_iters);
        t = next;
        converged = ok;
    }
    let rounded = round_to_polytope(&t, p, q);
    let mut matrix = rounded;
    let mut distance = objective(df, ga, gb, &matrix);
    if m == n {
        let perm = improve_by_swaps(df, ga, gb, nearest_permutation(&t)?);
        let vertex = DMatrix::from_fn(m, n, |i, j| if perm[i] == j { p[i] } else { 0.0 });
        let value = objective(df, ga, gb, &vertex);
        if value < distance {
            distance = value;
            matrix = vertex;
        }
    }
    let (polished, value) = polish(df, ga, gb, p, q, &matrix, distance);
    if value < distance {
        distance = value;
        matrix = polished;
    }
    let plan = TransportPlan {
        matrix,
        row_marginal: p.to_vec(),
        col_marginal: q.to_vec(),
        cost: distance,
        iterations_used: opts.outer_iters,
        converged,
    };
    Ok(GromovResult { distance, plan })
}

/// Sinkhorn projection of `exp(log_kernel)` onto `Pi(p, q)`.
///
/// Runs on a row-stabilized kernel and falls back to log-sum-exp updates if a
/// column underflows.
fn project(log_kernel: &DMatrix<f64>, p: &[f64], q: &[f64], iters: usize) -> (DMatrix<f64>, bool) {
    let (m, n) = log_kernel.shape();
    let row_max: Vec<f64> = (0..m)
        .map(|i| log_kernel.row(i).iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let kernel = DMatrix::from_fn(m, n, |i, j| (log_kernel[(i, j)] - row_max[i]).exp());
    let p = DVector::from_column_slice(p);
    let q = DVector::from_column_slice(q);
    let mut u = DVector::from_element(m, 1.0);
    let mut v = DVector::from_element(n, 1.0);
    let mut converged = false;
    for sweep in 0..iters {
        let ktu = kernel.tr_mul(&u);
        if ktu.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return project_log(log_kernel, p.as_slice(), q.as_slice(), iters);
        }
        if sweep > 0 && sweep % 5 == 0 {
            let residual: f64 = ktu.component_mul(&v).iter().zip(q.iter()).map(|(s, t)| (s - t).abs()).sum();
            if residual < 1e-12 {
                converged = true;
                break;
            }
        }
        v = q.component_div(&ktu);
        let kv = &kernel * &v;
        u = p.component_div(&kv);
    }
    (DMatrix::from_fn(m, n, |i, j| u[i] * kernel[(i, j)] * v[j]), converged)
}

fn project_log(log_kernel: &DMatrix<f64>, p: &[f64], q: &[f64], iters: usize) -> (DMatrix<f64>, bool) {
    let (m, n) = log_kernel.shape();
    let mut f = vec![0.0; m];
    let mut g = vec![0.0; n];
    let mut converged = false;
    for _ in 0..iters {
        for j in 0..n {
            g[j] = q[j].ln() - lse((0..m).map(|i| log_kernel[(i, j)] + f[i]));
        }
        for i in 0..m {
            f[i] = p[i].ln() - lse((0..n).map(|j| log_kernel[(i, j)] + g[j]));
        }
        let residual: f64 = (0..n)
            .map(|j| ((0..m).map(|i| (log_kernel[(i, j)] + f[i] + g[j]).exp()).sum::<f64>() - q[j]).abs())
            .sum();
        if residual < 1e-12 {
            converged = true;
            break;
        }
    }
    (DMatrix::from_fn(m, n, |i, j| (log_kernel[(i, j)] + f[i] + g[j]).exp()), converged)
}

fn lse<I: Iterator<Item = f64>>(values: I) -> f64 {
    let values: Vec<f64> = values.collect();
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Projected gradient descent with backtracking, started from a feasible plan.
///
/// The multiplicative proximal update only approaches the boundary of the
/// polytope geometrically; Euclidean projection reaches faces exactly.
fn polish(
    df: &DMatrix<f64>,
    ga: &DMatrix<f64>,
    gb: &DMatrix<f64>,
    p: &[f64],
    q: &[f64],
    start: &DMatrix<f64>,
    start_value: f64,
) -> (DMatrix<f64>, f64) {
    let mut t = start.clone();
    let mut value = start_value;
    let mut step = 1.0;
    for _ in 0..POLISH_ITERS {
        let grad = df - 2.0 * (ga * &t * gb.transpose() + ga.transpose() * &t * gb);
        let mut accepted = false;
        while step > 1e-12 {
            let candidate = round_to_polytope(&project_euclidean(&(&t - step * &grad), p, q), p, q);
            let moved = &candidate - &t;
            let candidate_value = objective(df, ga, gb, &candidate);
            if candidate_value <= value + grad.dot(&moved) + moved.norm_squared() / (2.0 * step) + 1e-15
                && candidate_value < value
            {
                let shift = moved.norm();
                t = candidate;
                value = candidate_value;
                step *= 2.0;
                accepted = shift > 1e-12;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    (t, value)
}

const POLISH_ITERS: usize = 100;

/// Euclidean projection onto `Pi(p, q)` by Dykstra's alternating projections
/// between the marginal constraints and the nonnegative orthant.
fn project_euclidean(y: &DMatrix<f64>, p: &[f64], q: &[f64]) -> DMatrix<f64> {
    let (m, n) = y.shape();
    let mut x = y.clone();
    let mut correction = DMatrix::zeros(m, n);
    for _ in 0..500 {
        let affine = project_marginals(&x, p, q);
        let shifted = &affine + &correction;
        let clipped = shifted.map(|v| v.max(0.0));
        correction = &shifted - &clipped;
        let error: f64 = marginal_residuals(&clipped, p, q).iter().map(|r| r.abs()).sum();
        x = clipped;
        if error < 1e-13 {
            break;
        }
    }
    x
}

/// Residuals `p - T 1` followed by `q - T^T 1`.
fn marginal_residuals(t: &DMatrix<f64>, p: &[f64], q: &[f64]) -> Vec<f64> {
    let rows = t.column_sum();
    let cols = t.row_sum();
    p.iter()
        .zip(rows.iter())
        .map(|(p, r)| p - r)
        .chain(q.iter().zip(cols.iter()).map(|(q, c)| q - c))
        .collect()
}

/// Closest matrix with row sums `p` and column sums `q`: `X + a 1^T + 1 b^T`.
fn project_marginals(x: &DMatrix<f64>, p: &[f64], q: &[f64]) -> DMatrix<f64> {
    let (m, n) = x.shape();
    let residuals = marginal_residuals(x, p, q);
    let (row_res, col_res) = residuals.split_at(m);
    let total: f64 = row_res.iter().sum();
    let (shift_a, shift_b) = (total / (2.0 * n as f64), total / (2.0 * m as f64));
    DMatrix::from_fn(m, n, |i, j| x[(i, j)] + (row_res[i] - shift_b) / n as f64 + (col_res[j] - shift_a) / m as f64)
}

/// Map an approximate coupling onto `Pi(p, q)`: scale down overfull rows and
/// columns, then spread the remaining deficit as a rank-one correction.
fn round_to_polytope(t: &DMatrix<f64>, p: &[f64], q: &[f64]) -> DMatrix<f64> {
    let mut out = t.clone();
    let rows = out.column_sum();
    for i in 0..out.nrows() {
        if rows[i] > p[i] {
            out.row_mut(i).scale_mut(p[i] / rows[i]);
        }
    }
    let cols = out.row_sum();
    for j in 0..out.ncols() {
        if cols[j] > q[j] {
            out.column_mut(j).scale_mut(q[j] / cols[j]);
        }
    }
    let row_gap: Vec<f64> = out.column_sum().iter().zip(p).map(|(r, p)| (p - r).max(0.0)).collect();
    let col_gap: Vec<f64> = out.row_sum().iter().zip(q).map(|(c, q)| (q - c).max(0.0)).collect();
    let total: f64 = row_gap.iter().sum();
    if total > 0.0 {
        for i in 0..out.nrows() {
            for j in 0..out.ncols() {
                out[(i, j)] += row_gap[i] * col_gap[j] / total;
            }
        }
    }
    out
}

/// Permutation maximizing the mass it keeps from `t`.
fn nearest_permutation(t: &DMatrix<f64>) -> Result<Vec<usize>> {
    let n = t.nrows();
    let flat: Vec<f64> = (0..n * n).map(|k| t[(k / n, k % n)]).collect();
    let (rows, cols) = lsap::solve(n, n, &flat, true)
        .map_err(|e| Error::Input(format!("assignment failed: {e}")))?;
    let mut perm = vec![0; n];
    for (r, c) in rows.into_iter().zip(cols) {
        perm[r] = c;
    }
    Ok(perm)
}

/// Objective terms of a permutation plan that involve position `i`.
fn swap_terms(df: &DMatrix<f64>, ga: &DMatrix<f64>, gb: &DMatrix<f64>, perm: &[usize], r: usize, s: usize) -> f64 {
    let n = perm.len() as f64;
    let mut total = (df[(r, perm[r])] + df[(s, perm[s])]) / n;
    for k in 0..perm.len() {
        for &i in &[r, s] {
            total += (ga[(i, k)] - gb[(perm[i], perm[k])]).powi(2) / (n * n);
            if k != r && k != s {
                total += (ga[(k, i)] - gb[(perm[k], perm[i])]).powi(2) / (n * n);
            }
        }
    }
    total
}

/// First-improvement descent over transpositions of a permutation plan.
fn improve_by_swaps(df: &DMatrix<f64>, ga: &DMatrix<f64>, gb: &DMatrix<f64>, mut perm: Vec<usize>) -> Vec<usize> {
    let n = perm.len();
    for _ in 0..n.max(10) {
        let mut improved = false;
        for r in 0..n {
            for s in (r + 1)..n {
                let before = swap_terms(df, ga, gb, &perm, r, s);
                perm.swap(r, s);
                if swap_terms(df, ga, gb, &perm, r, s) < before - 1e-15 {
                    improved = true;
                } else {
                    perm.swap(r, s);
                }
            }
        }
        if !improved {
            break;
        }
    }
    perm
}

/// A random interior point of the transport polytope: random positive
/// entries rescaled onto the marginals.
fn random_coupling<R: Rng>(p: &[f64], q: &[f64], rng: &mut R) -> DMatrix<f64> {
    let (m, n) = (p.len(), q.len());
    let mut t = DMatrix::from_fn(m, n, |_, _| rng.gen_range(0.05..1.0));
    for _ in 0..500 {
        let rows = t.column_sum();
        for i in 0..m {
            t.row_mut(i).scale_mut(p[i] / rows[i]);
        }
        let cols: DVector<f64> = t.row_sum().transpose();
        for j in 0..n {
            t.column_mut(j).scale_mut(q[j] / cols[j]);
        }
    }
    t
}
