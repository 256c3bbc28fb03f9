//! Parametric graphon `(f, g)` on `[0, 1]` and sampling of finite Hawkes models.
//!
//! `f(x) = softplus(f1) * (exp(sigmoid(f2) * x) - 1)` gives base rates and
//! `g(x, y) = sigmoid(sum_ij (g1 sin(i pi x) + g2 cos(i pi x)) (g3 sin(j pi y) + g4 cos(j pi y)))`
//! gives the (unscaled) impact coefficients. A sampled model of size `V` uses
//! `mu_v = f(x_v)` and `a_vv' = g(x_v, x_v') / (V_max * D)` with `D = 1 / omega`.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hawkes::HawkesModel;

pub const DEFAULT_LIPSCHITZ_GRID: usize = 512;

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z + (-z).exp()
    } else {
        z.exp().ln_1p()
    }
}

fn check_unit(x: f64, name: &str) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} = {x} is outside [0, 1]")))
    }
}

/// Parameters of the graphon pair `(f, g)` plus the sampling settings.
///
/// `g_coeffs` is laid out row-major over `(i, j, m)` with `i, j` in `0..=S`
/// and `m` in `0..4` (the four coefficient families).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphonParams {
    pub f1: f64,
    pub f2: f64,
    #[serde(rename = "S")]
    pub order: usize,
    pub g_coeffs: Vec<f64>,
    pub v_max: usize,
    pub kernel_rate: f64,
}

/// Sine/cosine basis of one coordinate: `sin(i pi x)` and `cos(i pi x)` for `i in 0..=S`.
#[derive(Debug, Clone)]
pub(crate) struct FourierBasis {
    pub sin: Vec<f64>,
    pub cos: Vec<f64>,
}

impl FourierBasis {
    pub fn new(order: usize, x: f64) -> Self {
        let (sin, cos) = (0..=order)
            .map(|i| (i as f64 * PI * x).sin_cos())
            .unzip();
        Self { sin, cos }
    }
}

impl GraphonParams {
    pub fn new(f1: f64, f2: f64, order: usize, g_coeffs: Vec<f64>, v_max: usize, kernel_rate: f64) -> Result<Self> {
        let params = Self { f1, f2, order, g_coeffs, v_max, kernel_rate };
        params.validate()?;
        Ok(params)
    }

    /// All-zero parameters (`g = 0.5` everywhere).
    pub fn zeros(order: usize, v_max: usize, kernel_rate: f64) -> Result<Self> {
        Self::new(0.0, 0.0, order, vec![0.0; Self::coeff_count(order)], v_max, kernel_rate)
    }

    /// Every entry of theta drawn i.i.d. from a standard normal.
    pub fn random<R: Rng + ?Sized>(order: usize, v_max: usize, kernel_rate: f64, rng: &mut R) -> Result<Self> {
        let f1 = rng.sample(StandardNormal);
        let f2 = rng.sample(StandardNormal);
        let g_coeffs = (0..Self::coeff_count(order)).map(|_| rng.sample(StandardNormal)).collect();
        Self::new(f1, f2, order, g_coeffs, v_max, kernel_rate)
    }

    pub fn coeff_count(order: usize) -> usize {
        4 * (order + 1) * (order + 1)
    }

    pub fn coeff_index(&self, i: usize, j: usize, m: usize) -> usize {
        ((i * (self.order + 1)) + j) * 4 + m
    }

    pub fn validate(&self) -> Result<()> {
        if self.g_coeffs.len() != Self::coeff_count(self.order) {
            return Err(Error::Config(format!(
                "g_coeffs has {} entries, expected 4(S+1)^2 = {}",
                self.g_coeffs.len(),
                Self::coeff_count(self.order)
            )));
        }
        if self.v_max == 0 {
            return Err(Error::Config("v_max must be at least 1".into()));
        }
        if !(self.kernel_rate.is_finite() && self.kernel_rate > 0.0) {
            return Err(Error::Config(format!("kernel_rate must be positive, got {}", self.kernel_rate)));
        }
        let all_finite = self.f1.is_finite() && self.f2.is_finite() && self.g_coeffs.iter().all(|c| c.is_finite());
        if !all_finite {
            return Err(Error::Config("graphon parameters must be finite".into()));
        }
        Ok(())
    }

    /// Integral of the decay kernel, `D = 1 / omega`.
    pub fn decay_mass(&self) -> f64 {
        1.0 / self.kernel_rate
    }

    /// Number of trainable parameters: `f1`, `f2` and the Fourier coefficients.
    pub fn theta_len(&self) -> usize {
        2 + self.g_coeffs.len()
    }

    /// Flat view `[f1, f2, g_coeffs...]`.
    pub fn theta(&self) -> Vec<f64> {
        let mut theta = Vec::with_capacity(self.theta_len());
        theta.push(self.f1);
        theta.push(self.f2);
        theta.extend_from_slice(&self.g_coeffs);
        theta
    }

    pub fn set_theta(&mut self, theta: &[f64]) {
        assert_eq!(theta.len(), self.theta_len(), "theta length mismatch");
        self.f1 = theta[0];
        self.f2 = theta[1];
        self.g_coeffs.copy_from_slice(&theta[2..]);
    }

    pub fn eval_f(&self, x: f64) -> Result<f64> {
        check_unit(x, "x")?;
        Ok(self.f_unchecked(x))
    }

    pub(crate) fn f_unchecked(&self, x: f64) -> f64 {
        softplus(self.f1) * (sigmoid(self.f2) * x).exp_m1()
    }

    pub fn eval_g(&self, x: f64, y: f64) -> Result<f64> {
        check_unit(x, "x")?;
        check_unit(y, "y")?;
        Ok(self.g_unchecked(x, y))
    }

    pub(crate) fn g_unchecked(&self, x: f64, y: f64) -> f64 {
        let bx = FourierBasis::new(self.order, x);
        let by = FourierBasis::new(self.order, y);
        sigmoid(self.g_logit(&bx, &by))
    }

    /// Inner Fourier sum of `g` before the sigmoid.
    pub(crate) fn g_logit(&self, bx: &FourierBasis, by: &FourierBasis) -> f64 {
        let n = self.order + 1;
        let mut z = 0.0;
        for i in 0..n {
            for j in 0..n {
                let c = &self.g_coeffs[(i * n + j) * 4..(i * n + j) * 4 + 4];
                z += (c[0] * bx.sin[i] + c[1] * bx.cos[i]) * (c[2] * by.sin[j] + c[3] * by.cos[j]);
            }
        }
        z
    }

    /// `f` evaluated on the points `xs` (assumed inside `[0, 1]`).
    pub fn f_on(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.f_unchecked(x)).collect()
    }

    /// Matrix `[g(xs[r], ys[c])]`, sharing the Fourier bases across rows and columns.
    pub fn g_on(&self, xs: &[f64], ys: &[f64]) -> DMatrix<f64> {
        let bx: Vec<_> = xs.iter().map(|&x| FourierBasis::new(self.order, x)).collect();
        let by: Vec<_> = ys.iter().map(|&y| FourierBasis::new(self.order, y)).collect();
        DMatrix::from_fn(xs.len(), ys.len(), |r, c| sigmoid(self.g_logit(&bx[r], &by[c])))
    }

    /// Discretize on the grid `{0, 1/N, ..., (N-1)/N}`.
    pub fn discretize(&self, grid_n: usize) -> (Vec<f64>, DMatrix<f64>) {
        let xs: Vec<f64> = (0..grid_n).map(|i| i as f64 / grid_n as f64).collect();
        (self.f_on(&xs), self.g_on(&xs, &xs))
    }

    /// Build the Hawkes model attached to the latent coordinates `xs`.
    pub fn model_at(&self, xs: &[f64]) -> Result<HawkesModel> {
        for &x in xs {
            check_unit(x, "latent coordinate")?;
        }
        let scale = 1.0 / (self.v_max as f64 * self.decay_mass());
        let mu = self.f_on(xs);
        let adjacency = self.g_on(xs, xs) * scale;
        HawkesModel::with_latents(mu, adjacency, self.kernel_rate, xs.to_vec())
    }

    /// Sample a finite Hawkes process: `V ~ Uniform{1..V_max}` (or `forced_v`),
    /// latent types uniform on `[0, 1]`, then `mu = f(x)` and `A = g(x, x) / (V_max D)`.
    pub fn sample_hp<R: Rng + ?Sized>(&self, rng: &mut R, forced_v: Option<usize>) -> Result<HawkesModel> {
        let v = match forced_v {
            Some(v) if v == 0 || v > self.v_max => {
                return Err(Error::Config(format!("forced V = {v} must lie in 1..={}", self.v_max)))
            }
            Some(v) => v,
            None => rng.gen_range(1..=self.v_max),
        };
        let xs: Vec<f64> = (0..v).map(|_| rng.gen::<f64>()).collect();
        self.model_at(&xs)
    }

    /// Grid estimates of the bi-Lipschitz constants of `f` and the Lipschitz constant of `g`.
    pub fn estimate_lipschitz(&self, grid_size: usize) -> Result<LipschitzEstimate> {
        if grid_size < 2 {
            return Err(Error::Config(format!("grid_size must be at least 2, got {grid_size}")));
        }
        let h = 1.0 / (grid_size - 1) as f64;
        let xs: Vec<f64> = (0..grid_size).map(|i| i as f64 * h).collect();
        let fs = self.f_on(&xs);

        let mut c1_f = f64::INFINITY;
        let mut c2_f: f64 = 0.0;
        for i in 0..grid_size {
            for j in (i + 1)..grid_size {
                let slope = (fs[j] - fs[i]).abs() / (xs[j] - xs[i]);
                c1_f = c1_f.min(slope);
                c2_f = c2_f.max(slope);
            }
        }

        // Forward differences along both axes, combined into a gradient norm per cell.
        let gs = self.g_on(&xs, &xs);
        let mut c_g: f64 = 0.0;
        for i in 0..grid_size - 1 {
            for j in 0..grid_size - 1 {
                let dx = (gs[(i + 1, j)] - gs[(i, j)]) / h;
                let dy = (gs[(i, j + 1)] - gs[(i, j)]) / h;
                c_g = c_g.max(dx.hypot(dy));
            }
        }
        Ok(LipschitzEstimate { c1_f, c2_f, c_g, grid_size })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let params: Self = serde_json::from_str(text)?;
        params.validate()?;
        Ok(params)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}

/// Numerical Lipschitz constants of a graphon pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzEstimate {
    pub c1_f: f64,
    pub c2_f: f64,
    pub c_g: f64,
    pub grid_size: usize,
}
