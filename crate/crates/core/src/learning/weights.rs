use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::hawkes::{EventSequence, HawkesModel, LogLikelihood};
use crate::transport::{CostMatrix, TransportPlan};

/// Default size cap: twice the mean number of distinct types per sequence.
///
/// Sequences without events count as zero types.
pub fn vmax_heuristic(data: &[EventSequence]) -> Result<usize> {
    if data.is_empty() {
        return Err(Error::Input("cannot size the model from an empty corpus".into()));
    }
    let mean = data.iter().map(|s| s.distinct_types() as f64).sum::<f64>() / data.len() as f64;
    Ok((2.0 * mean).round() as usize)
}

/// Weighted negative log-likelihood of generated sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedLoss {
    /// `-sum_k w_k LL_k` over the non-degenerate sequences.
    pub loss: f64,
    pub weights: Vec<f64>,
    pub log_likelihoods: Vec<LogLikelihood>,
}

impl WeightedLoss {
    pub fn degenerate_count(&self) -> usize {
        self.log_likelihoods.iter().filter(|ll| ll.is_degenerate()).count()
    }
}

/// Per-row maxima of a coupling.
pub fn row_max_weights(coupling: &DMatrix<f64>) -> Vec<f64> {
    (0..coupling.nrows()).map(|k| coupling.row(k).max()).collect()
}

/// Loss driven by the set-level coupling: `w_k = max_l Q[k, l]` and
/// `loss = -sum_k w_k log p(gen_k)`. Degenerate likelihoods get zero weight.
pub fn raml_hot_loss(
    generated: &[(HawkesModel, EventSequence)],
    real: &[EventSequence],
    coupling: &TransportPlan,
) -> Result<WeightedLoss> {
    if coupling.matrix.shape() != (generated.len(), real.len()) {
        return Err(Error::Input(format!(
            "coupling is {:?}, expected ({}, {})",
            coupling.matrix.shape(),
            generated.len(),
            real.len()
        )));
    }
    weighted_loss(generated, row_max_weights(&coupling.matrix))
}

pub(crate) fn weighted_loss(generated: &[(HawkesModel, EventSequence)], mut weights: Vec<f64>) -> Result<WeightedLoss> {
    let log_likelihoods = generated
        .iter()
        .map(|(model, seq)| model.log_likelihood(seq))
        .collect::<Result<Vec<_>>>()?;
    let mut loss = 0.0;
    for (w, ll) in weights.iter_mut().zip(&log_likelihoods) {
        if ll.is_degenerate() {
            *w = 0.0;
        } else {
            loss -= *w * ll.value;
        }
    }
    Ok(WeightedLoss { loss, weights, log_likelihoods })
}

/// Exponential-payoff weights of the baseline: per real sequence `l`,
/// `q(k | l) = softmax_k(-d_kl / tau)`, and `w_k = sum_l q(k | l)`.
pub fn raml_baseline_weights(cost: &CostMatrix, tau: f64) -> Result<Vec<f64>> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::Config(format!("tau must be positive, got {tau}")));
    }
    let (k, l) = cost.shape();
    if k == 0 || l == 0 {
        return Err(Error::Input("cost matrix is empty".into()));
    }
    let mut weights = vec![0.0; k];
    for col in 0..l {
        let column = cost.values.column(col);
        let best = column.min();
        let scores: Vec<f64> = column.iter().map(|d| (-(d - best) / tau).exp()).collect();
        let z: f64 = scores.iter().sum();
        for (w, s) in weights.iter_mut().zip(&scores) {
            *w += s / z;
        }
    }
    Ok(weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hawkes::Event;
    use nalgebra::dmatrix;

    fn seq_with_types(types: &[usize], num_types: usize) -> EventSequence {
        let events = types.iter().enumerate().map(|(i, &kind)| Event { time: i as f64 + 0.5, kind }).collect();
        EventSequence::new(100.0, events, num_types).unwrap()
    }

    fn plan(matrix: DMatrix<f64>) -> TransportPlan {
        TransportPlan {
            row_marginal: matrix.column_sum().iter().copied().collect(),
            col_marginal: matrix.row_sum().iter().copied().collect(),
            matrix,
            cost: 0.0,
            iterations_used: 0,
            converged: true,
        }
    }

    fn poisson_pair(mu: f64, times: &[f64]) -> (HawkesModel, EventSequence) {
        let model = HawkesModel::new(vec![mu], DMatrix::zeros(1, 1), 1.0).unwrap();
        let events = times.iter().map(|&time| Event { time, kind: 0 }).collect();
        (model, EventSequence::new(10.0, events, 1).unwrap())
    }

    #[test]
    fn vmax_examples() {
        let three = vec![seq_with_types(&[0, 1, 2], 3); 4];
        assert_eq!(vmax_heuristic(&three).unwrap(), 6);
        let mixed = vec![seq_with_types(&[0, 1], 5), seq_with_types(&[0, 1, 2, 3], 5)];
        assert_eq!(vmax_heuristic(&mixed).unwrap(), 6);
        let with_empty = vec![seq_with_types(&[], 5), seq_with_types(&[0, 1, 2, 3], 5)];
        assert_eq!(vmax_heuristic(&with_empty).unwrap(), 4);
        assert!(vmax_heuristic(&[]).is_err());
    }

    #[test]
    fn uniform_coupling_averages_likelihoods() {
        let gen = vec![poisson_pair(1.0, &[3.0]), poisson_pair(2.0, &[1.0, 2.0])];
        let real = vec![seq_with_types(&[0], 1); 3];
        let q = plan(DMatrix::from_element(2, 3, 1.0 / 6.0));
        let out = raml_hot_loss(&gen, &real, &q).unwrap();
        let lls: f64 = gen.iter().map(|(m, s)| m.log_likelihood(s).unwrap().value).sum();
        assert!((out.loss + lls / 6.0).abs() < 1e-12);
    }

    #[test]
    fn single_generator_gets_its_row_maximum() {
        let gen = vec![poisson_pair(1.0, &[3.0])];
        let real = vec![seq_with_types(&[0], 1); 4];
        let out = raml_hot_loss(&gen, &real, &plan(DMatrix::from_element(1, 4, 0.25))).unwrap();
        assert_eq!(out.weights, vec![0.25]);
    }

    #[test]
    fn diagonal_coupling_halves_each_likelihood() {
        let gen = vec![poisson_pair(1.0, &[3.0]), poisson_pair(0.5, &[])];
        let real = vec![seq_with_types(&[0], 1); 2];
        let out = raml_hot_loss(&gen, &real, &plan(dmatrix![0.5, 0.0; 0.0, 0.5])).unwrap();
        // LL_1 = log 1 - 10, LL_2 = -5.
        assert!((out.loss - 7.5).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let gen = vec![poisson_pair(1.0, &[3.0])];
        let real = vec![seq_with_types(&[0], 1); 2];
        assert!(raml_hot_loss(&gen, &real, &plan(DMatrix::from_element(2, 2, 0.25))).is_err());
    }

    #[test]
    fn degenerate_sequences_are_dropped() {
        let gen = vec![poisson_pair(0.0, &[3.0]), poisson_pair(1.0, &[])];
        let real = vec![seq_with_types(&[0], 1)];
        let out = raml_hot_loss(&gen, &real, &plan(dmatrix![0.5; 0.5])).unwrap();
        assert_eq!(out.weights[0], 0.0);
        assert_eq!(out.degenerate_count(), 1);
        assert!((out.loss - 5.0).abs() < 1e-12);
    }

    #[test]
    fn baseline_weight_examples() {
        let equal = CostMatrix::new(DMatrix::from_element(3, 2, 0.7)).unwrap();
        for w in raml_baseline_weights(&equal, 0.3).unwrap() {
            assert!((w - 2.0 / 3.0).abs() < 1e-15);
        }
        let spread = CostMatrix::new(dmatrix![0.0, 5.0; 3.0, 1.0]).unwrap();
        let flat = raml_baseline_weights(&spread, 1e12).unwrap();
        assert!((flat[0] - 1.0).abs() < 1e-9 && (flat[1] - 1.0).abs() < 1e-9);
        let two = CostMatrix::new(dmatrix![0.0; 1.0]).unwrap();
        let w = raml_baseline_weights(&two, 1.0).unwrap();
        let z = 1.0 + (-1.0f64).exp();
        assert!((w[0] - 1.0 / z).abs() < 1e-15);
        assert!((w[1] - (-1.0f64).exp() / z).abs() < 1e-15);
        assert!(raml_baseline_weights(&two, 0.0).is_err());
    }
}
