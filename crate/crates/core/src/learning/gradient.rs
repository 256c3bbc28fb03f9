use crate::error::{Error, Result};
use crate::graphon::{sigmoid, softplus, FourierBasis, GraphonParams};
use crate::hawkes::{HawkesModel, LikelihoodGradient};

/// Gradient of `sum_k w_k LL_k` with respect to the graphon parameters, laid
/// out like [`GraphonParams::theta`].
///
/// Each model must carry the latent coordinates it was sampled at; `grads[k]`
/// holds the likelihood gradient with respect to that model's `(mu, A)`.
pub fn param_gradient(
    params: &GraphonParams,
    models: &[HawkesModel],
    grads: &[LikelihoodGradient],
    weights: &[f64],
) -> Result<Vec<f64>> {
    if models.len() != grads.len() || models.len() != weights.len() {
        return Err(Error::Input(format!(
            "{} models, {} gradients and {} weights",
            models.len(),
            grads.len(),
            weights.len()
        )));
    }
    let mut out = vec![0.0; params.theta_len()];
    let rate_scale = softplus(params.f1);
    let d_rate_scale = sigmoid(params.f1);
    let growth = sigmoid(params.f2);
    let d_growth = growth * (1.0 - growth);
    let impact_scale = 1.0 / (params.v_max as f64 * params.decay_mass());
    let n = params.order + 1;

    for ((model, grad), &w) in models.iter().zip(grads).zip(weights) {
        let xs = model
            .latent_x
            .as_ref()
            .ok_or_else(|| Error::Input("model has no latent coordinates".into()))?;
        let v = xs.len();
        if grad.grad_mu.len() != v || grad.grad_a.shape() != (v, v) {
            return Err(Error::Input("gradient shape does not match the model".into()));
        }
        if w == 0.0 {
            continue;
        }
        for (&x, &gm) in xs.iter().zip(&grad.grad_mu) {
            let e = (growth * x).exp();
            out[0] += w * gm * d_rate_scale * (e - 1.0);
            out[1] += w * gm * rate_scale * x * d_growth * e;
        }
        let bases: Vec<FourierBasis> = xs.iter().map(|&x| FourierBasis::new(params.order, x)).collect();
        for r in 0..v {
            for c in 0..v {
                let s = sigmoid(params.g_logit(&bases[r], &bases[c]));
                let coef = w * grad.grad_a[(r, c)] * s * (1.0 - s) * impact_scale;
                if coef == 0.0 {
                    continue;
                }
                let (bx, by) = (&bases[r], &bases[c]);
                for i in 0..n {
                    for j in 0..n {
                        let base = (i * n + j) * 4;
                        let g = &params.g_coeffs[base..base + 4];
                        let row_factor = g[0] * bx.sin[i] + g[1] * bx.cos[i];
                        let col_factor = g[2] * by.sin[j] + g[3] * by.cos[j];
                        let slot = &mut out[2 + base..2 + base + 4];
                        slot[0] += coef * bx.sin[i] * col_factor;
                        slot[1] += coef * bx.cos[i] * col_factor;
                        slot[2] += coef * row_factor * by.sin[j];
                        slot[3] += coef * row_factor * by.cos[j];
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hawkes::EventSequence;
    use crate::rng;
    use nalgebra::DMatrix;
    use rand::Rng;

    /// `sum_k w_k LL_k` with the latent coordinates and sequences held fixed.
    fn frozen_objective(params: &GraphonParams, batch: &[(Vec<f64>, EventSequence)], weights: &[f64]) -> f64 {
        batch
            .iter()
            .zip(weights)
            .map(|((xs, seq), w)| w * params.model_at(xs).unwrap().log_likelihood(seq).unwrap().value)
            .sum()
    }

    fn frozen_batch(params: &GraphonParams, seed: u64, size: usize) -> Vec<(Vec<f64>, EventSequence)> {
        (0..size as u64)
            .map(|k| {
                let mut r = rng::stream(seed, &[k]);
                let model = params.sample_hp(&mut r, None).unwrap();
                let seq = model.simulate(20.0, &mut r).unwrap();
                (model.latent_x.clone().unwrap(), seq)
            })
            .collect()
    }

    fn analytic(params: &GraphonParams, batch: &[(Vec<f64>, EventSequence)], weights: &[f64]) -> Vec<f64> {
        let models: Vec<_> = batch.iter().map(|(xs, _)| params.model_at(xs).unwrap()).collect();
        let grads: Vec<_> = models.iter().zip(batch).map(|(m, (_, s))| m.ll_gradient(s).unwrap()).collect();
        param_gradient(params, &models, &grads, weights).unwrap()
    }

    #[test]
    fn matches_central_differences() {
        for seed in 0..4 {
            let mut r = rng::stream(500, &[seed]);
            let params = GraphonParams::random(2, 6, 1.0, &mut r).unwrap();
            let batch = frozen_batch(&params, 600 + seed, 3);
            let weights: Vec<f64> = (0..3).map(|_| r.gen_range(0.1..1.0)).collect();
            let grad = analytic(&params, &batch, &weights);
            let theta = params.theta();
            for k in 0..theta.len() {
                let h = 1e-6 * theta[k].abs().max(1.0);
                let mut plus = params.clone();
                let mut minus = params.clone();
                let mut t = theta.clone();
                t[k] += h;
                plus.set_theta(&t);
                t[k] -= 2.0 * h;
                minus.set_theta(&t);
                let fd = (frozen_objective(&plus, &batch, &weights) - frozen_objective(&minus, &batch, &weights)) / (2.0 * h);
                let err = (grad[k] - fd).abs() / fd.abs().max(1e-3);
                assert!(err < 1e-4, "seed {seed} theta[{k}]: {} vs {fd}", grad[k]);
            }
        }
    }

    #[test]
    fn zero_weights_give_zero_gradient() {
        let params = GraphonParams::random(1, 4, 1.0, &mut rng::stream(3, &[])).unwrap();
        let batch = frozen_batch(&params, 4, 2);
        assert!(analytic(&params, &batch, &[0.0, 0.0]).iter().all(|&g| g == 0.0));
    }

    #[test]
    fn impact_derivative_at_zero_coefficients() {
        let mut params = GraphonParams::zeros(0, 4, 1.0).unwrap();
        params.g_coeffs[3] = 1.0;
        let xs = vec![0.3];
        let model = params.model_at(&xs).unwrap();
        let grad = LikelihoodGradient { grad_mu: vec![0.0], grad_a: DMatrix::from_element(1, 1, 1.0) };
        let g = param_gradient(&params, &[model], &[grad], &[1.0]).unwrap();
        // The row factor vanishes, so z = 0 and sigmoid'(z) = 0.25.
        assert!((g[2 + 1] - 0.25 / 4.0).abs() < 1e-15);
        assert_eq!(g[2], 0.0);
        assert_eq!(g[2 + 2], 0.0);
    }

    #[test]
    fn missing_latents_are_rejected() {
        let params = GraphonParams::zeros(0, 2, 1.0).unwrap();
        let model = HawkesModel::new(vec![1.0], DMatrix::zeros(1, 1), 1.0).unwrap();
        let grad = LikelihoodGradient { grad_mu: vec![0.0], grad_a: DMatrix::zeros(1, 1) };
        assert!(matches!(param_gradient(&params, &[model], &[grad], &[1.0]), Err(Error::Input(_))));
    }
}
