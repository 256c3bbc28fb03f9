use crate::error::{Error, Result};

fn sorted_indices(x: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
    idx
}

/// Optimal coupling of two uniform 1D point sets under squared distance.
///
/// Returns the squared-cost value `sum t_mn |a_m - b_n|^2` and the nonzero
/// plan entries `(m, n, t_mn)` in original indices. The monotone (quantile)
/// coupling is optimal for any convex ground cost on the line.
pub fn emd_1d_plan(a: &[f64], b: &[f64]) -> Result<(f64, Vec<(usize, usize, f64)>)> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Input("emd_1d needs nonempty point sets".into()));
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(Error::Input("emd_1d needs finite points".into()));
    }
    let (ia, ib) = (sorted_indices(a), sorted_indices(b));
    let (m, n) = (a.len(), b.len());
    if m == n {
        let w = 1.0 / n as f64;
        let entries: Vec<_> = ia.iter().zip(&ib).map(|(&i, &j)| (i, j, w)).collect();
        let cost = entries.iter().map(|&(i, j, _)| (a[i] - b[j]).powi(2)).sum::<f64>() * w;
        return Ok((cost, entries));
    }
    // North-west corner on the sorted supports, in integer units of 1/(m n).
    let (mut left_a, mut left_b) = (n, m);
    let (mut p, mut q) = (0, 0);
    let mut entries = Vec::with_capacity(m + n);
    let unit = 1.0 / (m * n) as f64;
    let mut cost = 0.0;
    while p < m && q < n {
        let mass = left_a.min(left_b);
        let (i, j) = (ia[p], ib[q]);
        entries.push((i, j, mass as f64 * unit));
        cost += mass as f64 * unit * (a[i] - b[j]).powi(2);
        left_a -= mass;
        left_b -= mass;
        if left_a == 0 {
            p += 1;
            left_a = n;
        }
        if left_b == 0 {
            q += 1;
            left_b = m;
        }
    }
    Ok((cost, entries))
}

/// Discrete Wasserstein distance `min_T <D, T>^{1/2}` between uniform 1D point sets.
///
/// For equal sizes this is `||sort(a) - sort(b)||_2 / sqrt(N)`.
pub fn emd_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    Ok(emd_1d_plan(a, b)?.0.sqrt())
}

/// Upper bound `sqrt((N - M) / (M N)) ||a||_2` on the distance between `a`
/// and `a` padded with zeros to length `N`.
pub fn padding_bound(a: &[f64], padded_len: usize) -> f64 {
    let m = a.len() as f64;
    let n = padded_len as f64;
    ((n - m) / (m * n)).sqrt() * a.iter().map(|x| x * x).sum::<f64>().sqrt()
}
