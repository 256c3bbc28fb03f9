//! Reward-weighted maximum likelihood training of a graphon from sequence corpora.
//!
//! Each batch pairs `B` real sequences with `B` sequences simulated from the
//! current graphon. The set-level transport plan between the two groups (or,
//! for the baseline, an exponential payoff on the inner distances) weights
//! the log-likelihood of each simulated sequence. Weights are constants with
//! respect to the parameters; the gradient flows through the sampled models'
//! `(mu, A)` into `(f, g)` and Adam applies the update.

mod adam;
mod gradient;
mod weights;

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::model_fgw;
use crate::graphon::GraphonParams;
use crate::hawkes::{EventSequence, HawkesModel};
use crate::rng;
use crate::transport::{hot_distance, Beta, CostMatrix, OtSettings};

pub use adam::Adam;
pub use gradient::param_gradient;
pub use weights::{raml_baseline_weights, raml_hot_loss, row_max_weights, vmax_heuristic, WeightedLoss};

const INIT_STREAM: u64 = 1;
const SHUFFLE_STREAM: u64 = 2;
const SAMPLE_STREAM: u64 = 3;

/// How simulated sequences are weighted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Row maxima of the set-level transport plan.
    Hot,
    /// Sum over real sequences of `softmax_k(-d_kl / tau)`.
    Raml,
}

/// Size cap of the learned graphon.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VmaxSetting {
    /// [`vmax_heuristic`] on the training corpus (at least 1).
    Auto,
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub v_max_hat: VmaxSetting,
    pub sinkhorn_beta: Beta,
    pub method: Method,
    pub raml_tau: f64,
    /// Simulation window; defaults to the longest training horizon.
    pub horizon: Option<f64>,
    pub seed: u64,
    /// Fourier order of the learned `g`.
    pub order: usize,
    pub kernel_rate: f64,
    /// Grid used for the per-epoch FGW distance to a reference model.
    pub fgw_grid: usize,
    /// Keep `g` at its initial value and train `f` only.
    pub freeze_g: bool,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 10,
            learning_rate: 0.01,
            v_max_hat: VmaxSetting::Auto,
            sinkhorn_beta: Beta::Auto,
            method: Method::Hot,
            raml_tau: 1.0,
            horizon: None,
            seed: 0,
            order: 5,
            kernel_rate: 1.0,
            fgw_grid: 100,
            freeze_g: false,
        }
    }
}

impl LearnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if !(self.raml_tau.is_finite() && self.raml_tau > 0.0) {
            return Err(Error::Config(format!("tau must be positive, got {}", self.raml_tau)));
        }
        if let VmaxSetting::Fixed(0) = self.v_max_hat {
            return Err(Error::Config("v_max must be at least 1".into()));
        }
        if let Beta::Fixed(b) = self.sinkhorn_beta {
            if !(b.is_finite() && b > 0.0) {
                return Err(Error::Config(format!("sinkhorn beta must be positive, got {b}")));
            }
        }
        if let Some(t) = self.horizon {
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::Config(format!("horizon must be positive, got {t}")));
            }
        }
        if self.fgw_grid < 2 {
            return Err(Error::Config("fgw grid must have at least 2 points".into()));
        }
        Ok(())
    }

    fn ot_settings(&self) -> OtSettings {
        OtSettings { beta: self.sinkhorn_beta, ..OtSettings::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean batch loss over the epoch's non-skipped batches.
    pub loss: f64,
    /// Mean reward `-d(gen_k, real_l)` over all batch pairs.
    pub mean_reward: f64,
    pub d_fgw: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnReport {
    pub epochs: Vec<EpochRecord>,
    pub params: GraphonParams,
    pub skipped_batches: usize,
}

/// Train from a standard-normal initialization of every parameter.
pub fn train(data: &[EventSequence], config: &LearnConfig, reference: Option<&GraphonParams>) -> Result<LearnReport> {
    config.validate()?;
    let v_max = match config.v_max_hat {
        VmaxSetting::Auto => vmax_heuristic(data)?.max(1),
        VmaxSetting::Fixed(v) => v,
    };
    let mut init = GraphonParams::random(
        config.order,
        v_max,
        config.kernel_rate,
        &mut rng::stream(config.seed, &[INIT_STREAM]),
    )?;
    if config.freeze_g {
        init.g_coeffs.iter_mut().for_each(|c| *c = 0.0);
    }
    train_from(data, config, init, reference)
}

/// Train starting at `init`, whose size cap and kernel are kept.
pub fn train_from(
    data: &[EventSequence],
    config: &LearnConfig,
    init: GraphonParams,
    reference: Option<&GraphonParams>,
) -> Result<LearnReport> {
    config.validate()?;
    init.validate()?;
    if data.is_empty() {
        return Err(Error::Input("training corpus is empty".into()));
    }
    let horizon = config.horizon.unwrap_or_else(|| data.iter().map(|s| s.horizon).fold(0.0, f64::max));
    let mut params = init;
    let mut theta = params.theta();
    let mut adam = Adam::new(theta.len(), config.learning_rate);
    let mut epochs = Vec::with_capacity(config.epochs);
    let mut skipped_batches = 0;

    for epoch in 0..config.epochs {
        let started = Instant::now();
        let order = shuffled(data.len(), &mut rng::stream(config.seed, &[SHUFFLE_STREAM, epoch as u64]));
        let mut losses = Vec::new();
        let mut rewards = Vec::new();
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let real: Vec<EventSequence> = chunk.iter().map(|&i| data[i].clone()).collect();
            let path = [SAMPLE_STREAM, epoch as u64, b as u64];
            let step = batch_step(&params, &real, horizon, config, &path)?;
            rewards.push(step.mean_reward);
            match step.gradient {
                Some(grad) => {
                    let mut descent: Vec<f64> = grad.iter().map(|g| -g).collect();
                    if config.freeze_g {
                        descent[2..].iter_mut().for_each(|g| *g = 0.0);
                    }
                    adam.step(&mut theta, &descent);
                    params.set_theta(&theta);
                    losses.push(step.loss);
                }
                None => {
                    log::warn!("epoch {epoch} batch {b}: every simulated sequence is degenerate, skipping");
                    skipped_batches += 1;
                }
            }
        }
        let d_fgw = reference.map(|r| model_fgw(&params, r, config.fgw_grid)).transpose()?;
        let record = EpochRecord {
            epoch,
            loss: mean(&losses),
            mean_reward: mean(&rewards),
            d_fgw,
            seconds: started.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {} loss {:.6} reward {:.6}{}",
            epoch,
            record.loss,
            record.mean_reward,
            d_fgw.map_or(String::new(), |d| format!(" d_fgw {d:.6}"))
        );
        epochs.push(record);
    }
    Ok(LearnReport { epochs, params, skipped_batches })
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        f64::NAN
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

fn shuffled(n: usize, rng: &mut rng::StreamRng) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order
}

struct BatchStep {
    loss: f64,
    mean_reward: f64,
    /// Gradient of `sum_k w_k LL_k`; `None` when every likelihood is degenerate.
    gradient: Option<Vec<f64>>,
}

fn batch_step(
    params: &GraphonParams,
    real: &[EventSequence],
    horizon: f64,
    config: &LearnConfig,
    path: &[u64],
) -> Result<BatchStep> {
    let generated: Vec<(HawkesModel, EventSequence)> = (0..real.len())
        .into_par_iter()
        .map(|k| {
            let mut stream_path = path.to_vec();
            stream_path.push(k as u64);
            let mut r = rng::stream(config.seed, &stream_path);
            let model = params.sample_hp(&mut r, None)?;
            let seq = model.simulate(horizon, &mut r)?;
            Ok((model, seq))
        })
        .collect::<Result<_>>()?;
    let sequences: Vec<EventSequence> = generated.iter().map(|(_, s)| s.clone()).collect();
    let hot = hot_distance(&sequences, real, &config.ot_settings())?;
    let mean_reward = -hot.inner_distances.mean();
    let weighted = match config.method {
        Method::Hot => raml_hot_loss(&generated, real, &hot.coupling)?,
        Method::Raml => {
            let cost = CostMatrix::new(hot.inner_distances.clone())?;
            weights::weighted_loss(&generated, raml_baseline_weights(&cost, config.raml_tau)?)?
        }
    };
    if weighted.degenerate_count() == generated.len() {
        return Ok(BatchStep { loss: f64::NAN, mean_reward, gradient: None });
    }
    let grads = generated
        .par_iter()
        .zip(&weighted.log_likelihoods)
        .map(|((model, seq), ll)| {
            if ll.is_degenerate() {
                let v = model.num_types();
                Ok(crate::hawkes::LikelihoodGradient {
                    grad_mu: vec![0.0; v],
                    grad_a: nalgebra::DMatrix::zeros(v, v),
                })
            } else {
                model.ll_gradient(seq)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let models: Vec<HawkesModel> = generated.into_iter().map(|(m, _)| m).collect();
    let gradient = param_gradient(params, &models, &grads, &weighted.weights)?;
    Ok(BatchStep { loss: weighted.loss, mean_reward, gradient: Some(gradient) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(truth: &GraphonParams, n: usize, horizon: f64, seed: u64) -> Vec<EventSequence> {
        (0..n as u64)
            .map(|k| {
                let mut r = rng::stream(seed, &[k]);
                truth.sample_hp(&mut r, None).unwrap().simulate(horizon, &mut r).unwrap()
            })
            .collect()
    }

    #[test]
    fn zero_epochs_are_rejected() {
        let truth = GraphonParams::zeros(1, 3, 1.0).unwrap();
        let data = corpus(&truth, 1, 5.0, 1);
        let config = LearnConfig { epochs: 0, ..LearnConfig::default() };
        assert!(matches!(train(&data, &config, None), Err(Error::Config(_))));
    }

    #[test]
    fn smallest_run_reports_one_epoch() {
        let truth = GraphonParams::random(1, 3, 1.0, &mut rng::stream(4, &[])).unwrap();
        let data = corpus(&truth, 1, 5.0, 2);
        let config = LearnConfig { epochs: 1, batch_size: 1, order: 1, ..LearnConfig::default() };
        let report = train(&data, &config, None).unwrap();
        assert_eq!(report.epochs.len(), 1);
        assert!(report.epochs[0].loss.is_finite());
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let truth = GraphonParams::random(1, 4, 1.0, &mut rng::stream(6, &[])).unwrap();
        let data = corpus(&truth, 6, 10.0, 3);
        for method in [Method::Hot, Method::Raml] {
            let config = LearnConfig { epochs: 2, batch_size: 3, order: 1, method, seed: 11, ..LearnConfig::default() };
            let a = train(&data, &config, Some(&truth)).unwrap();
            let b = train(&data, &config, Some(&truth)).unwrap();
            assert_eq!(a.params, b.params);
            for (x, y) in a.epochs.iter().zip(&b.epochs) {
                assert_eq!((x.loss, x.mean_reward, x.d_fgw), (y.loss, y.mean_reward, y.d_fgw));
            }
        }
    }

    #[test]
    fn frozen_g_is_left_untouched() {
        let truth = GraphonParams::random(1, 4, 1.0, &mut rng::stream(8, &[])).unwrap();
        let data = corpus(&truth, 4, 10.0, 5);
        let config = LearnConfig { epochs: 2, batch_size: 2, order: 1, freeze_g: true, ..LearnConfig::default() };
        let report = train(&data, &config, None).unwrap();
        assert!(report.params.g_coeffs.iter().all(|&c| c == 0.0));
    }
}
