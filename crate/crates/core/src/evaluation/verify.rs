use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphon::{GraphonParams, LipschitzEstimate};
use crate::hawkes::{spectral_norm, HawkesModel};
use crate::rng;
use crate::transport::{emd_1d, emd_1d_plan, gw_distance, gw_objective, FgwOptions};

const RANDOM_PAIRS: u64 = 1;
const EQUAL_PAIRS: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub pairs: usize,
    pub seed: u64,
    /// Grid for the Lipschitz estimates.
    pub lipschitz_grid: usize,
    /// Relative slack before a bound counts as violated.
    pub slack: f64,
    pub gw: FgwOptions,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { pairs: 100, seed: 0, lipschitz_grid: 2048, slack: 1e-6, gw: FgwOptions { restarts: 2, ..FgwOptions::default() } }
    }
}

/// Outcome counts of one inequality over the sampled pairs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Tally {
    pub checked: usize,
    pub violations: usize,
    /// Pairs where a prerequisite of the bound failed.
    pub inestimable: usize,
    /// Largest `lhs / rhs` seen (0 when every rhs vanished with its lhs).
    pub worst_ratio: f64,
}

impl Tally {
    fn record(&mut self, lhs: f64, rhs: f64, slack: f64) {
        self.checked += 1;
        if lhs > rhs * (1.0 + slack) {
            self.violations += 1;
        }
        if lhs > 0.0 {
            self.worst_ratio = self.worst_ratio.max(if rhs > 0.0 { lhs / rhs } else { f64::INFINITY });
        }
    }

    fn merge(mut self, other: &Tally) -> Tally {
        self.checked += other.checked;
        self.violations += other.violations;
        self.inestimable += other.inestimable;
        self.worst_ratio = self.worst_ratio.max(other.worst_ratio);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub pairs: usize,
    pub lipschitz: LipschitzEstimate,
    /// Lipschitz constant of the impact entries `g / (V_max D)`.
    pub impact_lipschitz: f64,
    /// Sampled models with `||D A||_2 >= 1`.
    pub nonstationary_models: usize,
    pub base_rate_lower: Tally,
    pub base_rate_upper: Tally,
    pub impact_wasserstein: Tally,
    pub impact_gromov: Tally,
    pub average_intensity: Tally,
    pub equal_size: Tally,
}

impl VerificationReport {
    pub fn total_violations(&self) -> usize {
        [
            &self.base_rate_lower,
            &self.base_rate_upper,
            &self.impact_wasserstein,
            &self.impact_gromov,
            &self.average_intensity,
            &self.equal_size,
        ]
        .iter()
        .map(|t| t.violations)
        .sum::<usize>()
            + self.nonstationary_models
    }
}

#[derive(Default)]
struct PairTallies {
    nonstationary: usize,
    lower: Tally,
    upper: Tally,
    impact_w: Tally,
    impact_gw: Tally,
    intensity: Tally,
    equal: Tally,
}

/// Check the parameter and average-intensity stability bounds on sampled model pairs.
///
/// `opts.pairs` pairs of independent size are checked against the
/// bi-Lipschitz base-rate bounds, both impact bounds and the average-intensity
/// bound; as many equal-size pairs are checked against its equal-size form.
/// Distances use the square-root convention. The lattice distances reduce
/// exactly: pairing every type with every other gives
/// `d_w(x1^x, x2^x) = d_gw(x1^x, x2^x) = sqrt(2) d_w(x1, x2)`. The impact
/// Gromov-Wasserstein distance is the smaller of the solver value and the
/// objective at the 1D latent plan, both upper bounds on the true minimum.
pub fn verify_properties(params: &GraphonParams, opts: &VerifyOptions) -> Result<VerificationReport> {
    if opts.pairs == 0 {
        return Err(Error::Config("at least one pair is needed".into()));
    }
    let lipschitz = params.estimate_lipschitz(opts.lipschitz_grid)?;
    let impact_lipschitz = lipschitz.c_g / (params.v_max as f64 * params.decay_mass());
    let constants = Constants { c1_f: lipschitz.c1_f, c2_f: lipschitz.c2_f, c_a: impact_lipschitz, slack: opts.slack };

    let random: Vec<PairTallies> = (0..opts.pairs as u64)
        .into_par_iter()
        .map(|p| {
            let mut r = rng::stream(opts.seed, &[RANDOM_PAIRS, p]);
            let a = params.sample_hp(&mut r, None)?;
            let b = params.sample_hp(&mut r, None)?;
            check_pair(&a, &b, &constants, &opts.gw, false)
        })
        .collect::<Result<_>>()?;
    let equal: Vec<PairTallies> = (0..opts.pairs as u64)
        .into_par_iter()
        .map(|p| {
            let mut r = rng::stream(opts.seed, &[EQUAL_PAIRS, p]);
            let v = rand::Rng::gen_range(&mut r, 1..=params.v_max);
            let a = params.sample_hp(&mut r, Some(v))?;
            let b = params.sample_hp(&mut r, Some(v))?;
            check_pair(&a, &b, &constants, &opts.gw, true)
        })
        .collect::<Result<_>>()?;

    let mut report = VerificationReport {
        pairs: opts.pairs,
        lipschitz,
        impact_lipschitz,
        nonstationary_models: 0,
        base_rate_lower: Tally::default(),
        base_rate_upper: Tally::default(),
        impact_wasserstein: Tally::default(),
        impact_gromov: Tally::default(),
        average_intensity: Tally::default(),
        equal_size: Tally::default(),
    };
    for t in random.iter().chain(&equal) {
        report.nonstationary_models += t.nonstationary;
        report.base_rate_lower = report.base_rate_lower.merge(&t.lower);
        report.base_rate_upper = report.base_rate_upper.merge(&t.upper);
        report.impact_wasserstein = report.impact_wasserstein.merge(&t.impact_w);
        report.impact_gromov = report.impact_gromov.merge(&t.impact_gw);
        report.average_intensity = report.average_intensity.merge(&t.intensity);
        report.equal_size = report.equal_size.merge(&t.equal);
    }
    Ok(report)
}

struct Constants {
    c1_f: f64,
    c2_f: f64,
    /// Lipschitz constant of the impact entries.
    c_a: f64,
    slack: f64,
}

fn check_pair(a: &HawkesModel, b: &HawkesModel, c: &Constants, gw: &FgwOptions, equal_only: bool) -> Result<PairTallies> {
    let mut t = PairTallies::default();
    t.nonstationary = [a, b].iter().filter(|m| !m.is_stationary().stationary).count();
    let xa = a.latent_x.as_deref().ok_or_else(|| Error::Input("model has no latent coordinates".into()))?;
    let xb = b.latent_x.as_deref().ok_or_else(|| Error::Input("model has no latent coordinates".into()))?;
    let dw_x = emd_1d(xa, xb)?;
    let dw_mu = emd_1d(&a.mu, &b.mu)?;

    if !equal_only {
        t.lower.record(c.c1_f * dw_x, dw_mu, c.slack);
        t.upper.record(dw_mu, c.c2_f * dw_x, c.slack);

        let lattice = std::f64::consts::SQRT_2 * dw_x;
        let entries = |m: &DMatrix<f64>| m.iter().copied().collect::<Vec<f64>>();
        let dw_a = emd_1d(&entries(&a.adjacency), &entries(&b.adjacency))?;
        t.impact_w.record(dw_a, c.c_a * lattice, c.slack);

        let solved = gw_distance(&a.adjacency, &b.adjacency, gw)?.distance;
        let (_, plan) = emd_1d_plan(xa, xb)?;
        let mut latent_plan = DMatrix::zeros(xa.len(), xb.len());
        for (i, j, w) in plan {
            latent_plan[(i, j)] += w;
        }
        let at_latent_plan = gw_objective(&a.adjacency, &b.adjacency, &latent_plan).sqrt();
        t.impact_gw.record(solved.min(at_latent_plan), c.c_a * lattice, c.slack);
    }

    // The average-intensity bound is stated for the smaller model first.
    let (small, large) = if a.num_types() <= b.num_types() { (a, b) } else { (b, a) };
    let tally = if equal_only { &mut t.equal } else { &mut t.intensity };
    match intensity_bound(small, large, c)? {
        Some((lhs, rhs)) => tally.record(lhs, rhs, c.slack),
        None => tally.inestimable += 1,
    }
    Ok(t)
}

/// Both sides of the average-intensity bound for `V <= U`, or `None` when a
/// prerequisite (`D ||A_1||_2 < 1`, nonzero base rates, `C_1^f > 0`) fails.
fn intensity_bound(small: &HawkesModel, large: &HawkesModel, c: &Constants) -> Result<Option<(f64, f64)>> {
    let (v, u) = (small.num_types() as f64, large.num_types() as f64);
    let d = small.decay_mass();
    let contraction = d * spectral_norm(&small.adjacency);
    let mu_norm = norm(&small.mu);
    if contraction >= 1.0 || mu_norm <= 0.0 || c.c1_f <= 0.0 {
        return Ok(None);
    }
    let (lam_small, lam_large) = match (small.average_intensity(), large.average_intensity()) {
        (Ok(x), Ok(y)) => (x, y),
        _ => return Ok(None),
    };
    let lam_norm = norm(&lam_small);
    if lam_norm <= 0.0 {
        return Ok(None);
    }
    let lhs = emd_1d(&lam_small, &lam_large)? / lam_norm;
    let n = small.num_types();
    let resolvent_norm = spectral_norm(&(DMatrix::identity(n, n) - small.branching_matrix()));
    let dw_mu = emd_1d(&small.mu, &large.mu)?;
    let factor = ((2.0 * u).sqrt() * c.c_a / (c.c1_f * resolvent_norm) + 1.0 / mu_norm) / (1.0 - contraction);
    let rhs = ((u - v) / (v * u)).sqrt() + factor * (((u - v) / v).sqrt() * mu_norm + dw_mu);
    Ok(Some((lhs, rhs)))
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}
