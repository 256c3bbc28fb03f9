//! Graphon-based Hawkes processes.
//!
//! A graphon pair `(f, g)` on `[0, 1]` generates finite multivariate Hawkes
//! processes of arbitrary size: latent type coordinates are drawn uniformly,
//! base rates come from `f` and the impact matrix from `g`. This crate
//! provides
//!
//! - [`graphon`]: the parametric `f`/`g`, Lipschitz estimates and sampling of
//!   Hawkes models;
//! - [`hawkes`]: intensities, Ogata thinning, exact log-likelihood and its
//!   gradient, average intensity and stationarity;
//! - [`transport`]: Sinkhorn, 1D Wasserstein, the counting-process distance,
//!   the hierarchical (sequence/set) transport distance and (fused)
//!   Gromov-Wasserstein solvers;
//! - [`learning`]: the reward-weighted maximum likelihood trainer driven by
//!   the hierarchical transport plan, plus the exponential-payoff baseline;
//! - [`evaluation`]: model-level FGW distance, set-level transport distance,
//!   latent type alignment, test NLL and empirical checks of the model's
//!   stability bounds.

pub mod error;
pub mod evaluation;
pub mod graphon;
pub mod hawkes;
pub mod learning;
pub mod rng;
pub mod transport;

pub use error::{Error, Result};
pub use nalgebra;
pub use graphon::{GraphonParams, LipschitzEstimate};
pub use hawkes::{Event, EventSequence, HawkesModel, LogLikelihood};
pub use transport::{CostMatrix, TransportPlan};
