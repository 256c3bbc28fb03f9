use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transport::TransportPlan;

/// Relative margin under which two density values count as a tie.
const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignOptions {
    /// Gaussian kernel bandwidth.
    pub bandwidth: f64,
    /// Number of points of the uniform grid over `[0, 1]`, endpoints included.
    pub grid_n: usize,
    /// Pool landmarks over every real sequence instead of only the one holding the type.
    pub all_pairs: bool,
}

impl Default for AlignOptions {
    fn default() -> Self {
        Self { bandwidth: 0.1, grid_n: 1000, all_pairs: false }
    }
}

/// Latent coordinate estimate of one real event type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeAlignment {
    /// Real sequence holding the type; `None` when landmarks are pooled over all sequences.
    pub sequence: Option<usize>,
    #[serde(rename = "type")]
    pub kind: usize,
    /// Grid argmax of the density; `None` when no landmark carries weight.
    pub x_star: Option<f64>,
    /// Density samples on the grid, normalized so `sum(density) * step = 1`.
    pub density: Vec<f64>,
    pub grid: usize,
    pub landmarks: usize,
}

impl TypeAlignment {
    pub fn is_aligned(&self) -> bool {
        self.x_star.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentResult {
    pub types: Vec<TypeAlignment>,
}

impl AlignmentResult {
    /// Aligned coordinates of the types of real sequence `l`, if all are aligned.
    pub fn coordinates_for(&self, l: usize) -> Option<Vec<f64>> {
        let mut rows: Vec<&TypeAlignment> = self
            .types
            .iter()
            .filter(|t| t.sequence.is_none_or(|s| s == l))
            .collect();
        rows.sort_by_key(|t| t.kind);
        rows.iter().map(|t| t.x_star).collect()
    }
}

/// Kernel density estimate of the latent coordinate of every real event type.
///
/// Generated type `u` of sequence `k` is a landmark at `gen_latents[k][u]` with
/// weight `T^{kl}[u, v] * Q[k, l]` for real type `v` of sequence `l`
/// (summed over `l` when `all_pairs` is set). `x*` is the grid argmax, ties
/// going to the smaller coordinate.
pub fn align_types(
    coupling: &TransportPlan,
    inner_plans: &[Vec<TransportPlan>],
    gen_latents: &[Vec<f64>],
    opts: &AlignOptions,
) -> Result<AlignmentResult> {
    if !(opts.bandwidth.is_finite() && opts.bandwidth > 0.0) {
        return Err(Error::Config(format!("bandwidth must be positive, got {}", opts.bandwidth)));
    }
    if opts.grid_n < 2 {
        return Err(Error::Config(format!("alignment grid needs at least 2 points, got {}", opts.grid_n)));
    }
    let (k_gen, l_real) = coupling.matrix.shape();
    if inner_plans.len() != k_gen || gen_latents.len() != k_gen || inner_plans.iter().any(|row| row.len() != l_real) {
        return Err(Error::Input("inner plans and latents do not match the outer coupling".into()));
    }
    let mut real_types = vec![0; l_real];
    for (k, row) in inner_plans.iter().enumerate() {
        for (l, plan) in row.iter().enumerate() {
            let (u, v) = plan.matrix.shape();
            if u != gen_latents[k].len() {
                return Err(Error::Input(format!(
                    "inner plan ({k}, {l}) has {u} rows for {} latent coordinates",
                    gen_latents[k].len()
                )));
            }
            if k > 0 && v != real_types[l] {
                return Err(Error::Input(format!("inner plans disagree on the type count of sequence {l}")));
            }
            real_types[l] = v;
        }
    }

    let grid: Vec<f64> = (0..opts.grid_n).map(|i| i as f64 / (opts.grid_n - 1) as f64).collect();
    let landmarks = |ls: &[usize], v: usize| -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for &l in ls {
            for k in 0..k_gen {
                let q = coupling.matrix[(k, l)];
                let plan = &inner_plans[k][l].matrix;
                if v >= plan.ncols() {
                    continue;
                }
                for (u, &x) in gen_latents[k].iter().enumerate() {
                    let w = plan[(u, v)] * q;
                    if w > 0.0 {
                        out.push((x, w));
                    }
                }
            }
        }
        out
    };

    let mut types = Vec::new();
    if opts.all_pairs {
        let all: Vec<usize> = (0..l_real).collect();
        let n_types = real_types.iter().copied().max().unwrap_or(0);
        for v in 0..n_types {
            types.push(estimate(None, v, &landmarks(&all, v), &grid, opts.bandwidth));
        }
    } else {
        for (l, &n_types) in real_types.iter().enumerate() {
            for v in 0..n_types {
                types.push(estimate(Some(l), v, &landmarks(&[l], v), &grid, opts.bandwidth));
            }
        }
    }
    Ok(AlignmentResult { types })
}

/// Normalized Gaussian mixture on `grid` and its argmax.
pub(crate) fn kde(points: &[(f64, f64)], grid: &[f64], bandwidth: f64) -> Option<(Vec<f64>, f64)> {
    let total: f64 = points.iter().map(|p| p.1).sum();
    if points.is_empty() || !(total > 0.0) {
        return None;
    }
    let inv = 0.5 / (bandwidth * bandwidth);
    let mut density: Vec<f64> = grid
        .iter()
        .map(|&x| points.iter().map(|&(c, w)| w * (-(x - c).powi(2) * inv).exp()).sum())
        .collect();
    let step = grid[1] - grid[0];
    let mass: f64 = density.iter().sum::<f64>() * step;
    if !(mass > 0.0) {
        return None;
    }
    density.iter_mut().for_each(|d| *d /= mass);
    let mut best = 0;
    for (i, &d) in density.iter().enumerate().skip(1) {
        if d > density[best] * (1.0 + TIE_TOL) {
            best = i;
        }
    }
    Some((density, grid[best]))
}

fn estimate(sequence: Option<usize>, kind: usize, points: &[(f64, f64)], grid: &[f64], bandwidth: f64) -> TypeAlignment {
    let (density, x_star) = match kde(points, grid, bandwidth) {
        Some((density, x)) => (density, Some(x)),
        None => (vec![0.0; grid.len()], None),
    };
    TypeAlignment { sequence, kind, x_star, density, grid: grid.len(), landmarks: points.len() }
}
