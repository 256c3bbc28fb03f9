//! Model- and sequence-level evaluation.

mod align;
mod verify;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graphon::GraphonParams;
use crate::hawkes::{EventSequence, HawkesModel, LogLikelihood};
use crate::rng;
use crate::transport::{fgw_discrete, hot_distance, FgwOptions, HotResult, OtSettings};

pub use align::{align_types, AlignOptions, AlignmentResult, TypeAlignment};
pub use verify::{verify_properties, Tally, VerificationReport, VerifyOptions};

/// Discrete fused Gromov-Wasserstein distance between two graphons.
///
/// Both models are discretized on `{0, 1/N, ..., (N-1)/N}`; the `f` grids
/// enter through the feature cost and the `g` grids through the structure term.
pub fn model_fgw(a: &GraphonParams, b: &GraphonParams, grid_n: usize) -> Result<f64> {
    model_fgw_with(a, b, grid_n, &FgwOptions::default())
}

pub fn model_fgw_with(a: &GraphonParams, b: &GraphonParams, grid_n: usize, opts: &FgwOptions) -> Result<f64> {
    if grid_n < 2 {
        return Err(Error::Config(format!("fgw grid must have at least 2 points, got {grid_n}")));
    }
    let (fa, ga) = a.discretize(grid_n);
    let (fb, gb) = b.discretize(grid_n);
    Ok(fgw_discrete(&fa, &ga, &fb, &gb, opts)?.distance)
}

/// Sample `n` Hawkes models from `params` and one sequence on `[0, horizon]` from each.
///
/// Draw `k` uses the stream `(seed, [k])`, so results do not depend on thread count.
pub fn generate(
    params: &GraphonParams,
    n: usize,
    horizon: f64,
    seed: u64,
) -> Result<(Vec<HawkesModel>, Vec<EventSequence>)> {
    let draws: Vec<(HawkesModel, EventSequence)> = (0..n as u64)
        .into_par_iter()
        .map(|k| {
            let mut r = rng::stream(seed, &[k]);
            let model = params.sample_hp(&mut r, None)?;
            let seq = model.simulate(horizon, &mut r)?;
            Ok((model, seq))
        })
        .collect::<Result<_>>()?;
    Ok(draws.into_iter().unzip())
}

/// Hierarchical transport distance between `n_gen` simulated sequences and a test set.
pub fn set_ot_metric(
    params: &GraphonParams,
    test: &[EventSequence],
    n_gen: usize,
    horizon: f64,
    seed: u64,
    settings: &OtSettings,
) -> Result<HotResult> {
    if n_gen == 0 {
        return Err(Error::Config("n_gen must be at least 1".into()));
    }
    if test.is_empty() {
        return Err(Error::Input("test set is empty".into()));
    }
    let (_, generated) = generate(params, n_gen, horizon, seed)?;
    hot_distance(&generated, test, settings)
}

/// Negative log-likelihood of `seq` under the model attached to aligned coordinates.
///
/// The returned value is `+inf` (and flagged) when an event has zero intensity.
pub fn test_nll(params: &GraphonParams, seq: &EventSequence, aligned_x: &[f64]) -> Result<LogLikelihood> {
    if aligned_x.len() != seq.num_types {
        return Err(Error::Input(format!(
            "{} aligned coordinates for {} event types",
            aligned_x.len(),
            seq.num_types
        )));
    }
    let ll = params.model_at(aligned_x)?.log_likelihood(seq)?;
    Ok(LogLikelihood { value: -ll.value, zero_intensity_events: ll.zero_intensity_events })
}
