//! Finite multivariate Hawkes processes with an exponential decay kernel.
//!
//! The intensity of type `v` is
//! `lambda_v(t) = mu_v + sum_{t_i < t} a_{v, v_i} exp(-omega (t - t_i))`.
//! Rows of the impact matrix are target types and columns are source types.

use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A Hawkes model `HP_V(mu, A)` with kernel `exp(-omega t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HawkesModel {
    pub mu: Vec<f64>,
    pub adjacency: DMatrix<f64>,
    pub kernel_rate: f64,
    /// Latent type coordinates when the model was sampled from a graphon.
    pub latent_x: Option<Vec<f64>>,
}

/// Spectral-norm stationarity diagnostic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stationarity {
    pub stationary: bool,
    /// `||D A||_2`.
    pub spectral_norm: f64,
}

impl HawkesModel {
    pub fn new(mu: Vec<f64>, adjacency: DMatrix<f64>, kernel_rate: f64) -> Result<Self> {
        let model = Self { mu, adjacency, kernel_rate, latent_x: None };
        model.validate()?;
        Ok(model)
    }

    pub fn with_latents(mu: Vec<f64>, adjacency: DMatrix<f64>, kernel_rate: f64, latent_x: Vec<f64>) -> Result<Self> {
        if latent_x.len() != mu.len() {
            return Err(Error::Input(format!(
                "latent_x has {} entries for {} types",
                latent_x.len(),
                mu.len()
            )));
        }
        let model = Self { mu, adjacency, kernel_rate, latent_x: Some(latent_x) };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        let v = self.mu.len();
        if self.adjacency.shape() != (v, v) {
            return Err(Error::Input(format!(
                "impact matrix is {:?}, expected ({v}, {v})",
                self.adjacency.shape()
            )));
        }
        if !(self.kernel_rate.is_finite() && self.kernel_rate > 0.0) {
            return Err(Error::Config(format!("kernel_rate must be positive, got {}", self.kernel_rate)));
        }
        if self.mu.iter().any(|&m| !(m.is_finite() && m >= 0.0)) {
            return Err(Error::Input("base rates must be finite and nonnegative".into()));
        }
        if self.adjacency.iter().any(|&a| !(a.is_finite() && a >= 0.0)) {
            return Err(Error::Input("impact coefficients must be finite and nonnegative".into()));
        }
        Ok(())
    }

    pub fn num_types(&self) -> usize {
        self.mu.len()
    }

    /// Kernel mass `D = 1 / omega`.
    pub fn decay_mass(&self) -> f64 {
        1.0 / self.kernel_rate
    }

    /// The branching matrix `Phi = D A`.
    pub fn branching_matrix(&self) -> DMatrix<f64> {
        &self.adjacency * self.decay_mass()
    }

    /// Stationary iff `||D A||_2 < 1`.
    pub fn is_stationary(&self) -> Stationarity {
        let spectral_norm = spectral_norm(&self.branching_matrix());
        Stationarity { stationary: spectral_norm < 1.0, spectral_norm }
    }

    /// Spectral radius of `D A`.
    pub fn spectral_radius(&self) -> f64 {
        if self.num_types() == 0 {
            return 0.0;
        }
        self.branching_matrix()
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    /// `(I - D A)^{-1} mu`.
    pub fn average_intensity(&self) -> Result<Vec<f64>> {
        let radius = self.spectral_radius();
        if radius >= 1.0 {
            return Err(Error::NotStationary(radius));
        }
        let v = self.num_types();
        let system = DMatrix::identity(v, v) - self.branching_matrix();
        let rhs = DVector::from_column_slice(&self.mu);
        let solution = system
            .lu()
            .solve(&rhs)
            .ok_or(Error::NotStationary(radius))?;
        // The Neumann series has nonnegative terms; clip roundoff.
        Ok(solution.iter().map(|&x| x.max(0.0)).collect())
    }

    /// Conditional intensity of type `v` at time `t`; only events strictly before `t` contribute.
    pub fn intensity(&self, seq: &EventSequence, t: f64, v: usize) -> Result<f64> {
        if v >= self.num_types() {
            return Err(Error::Domain(format!("type {v} out of range for {} types", self.num_types())));
        }
        if !(0.0..=seq.horizon).contains(&t) {
            return Err(Error::Domain(format!("time {t} outside [0, {}]", seq.horizon)));
        }
        let mut rate = self.mu[v];
        for e in seq.events.iter().take_while(|e| e.time < t) {
            if e.kind >= self.num_types() {
                return Err(Error::Domain(format!("event type {} out of range", e.kind)));
            }
            rate += self.adjacency[(v, e.kind)] * (-self.kernel_rate * (t - e.time)).exp();
        }
        Ok(rate)
    }

    /// Ogata thinning on `[0, horizon]`.
    ///
    /// Between events the intensity only decays, so the total intensity right
    /// after the last accepted event (or rejected candidate) bounds it until
    /// the next event.
    pub fn simulate<R: Rng + ?Sized>(&self, horizon: f64, rng: &mut R) -> Result<EventSequence> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Config(format!("horizon must be positive, got {horizon}")));
        }
        let stationarity = self.is_stationary();
        if !stationarity.stationary {
            log::warn!(
                "simulating a non-stationary Hawkes model (||DA||_2 = {:.4})",
                stationarity.spectral_norm
            );
        }
        let v = self.num_types();
        let omega = self.kernel_rate;
        let base: f64 = self.mu.iter().sum();
        let mut excitation = vec![0.0; v];
        let mut events = Vec::new();
        let mut t = 0.0;
        loop {
            let upper = base + excitation.iter().sum::<f64>();
            if upper <= 0.0 {
                break;
            }
            let u: f64 = rng.gen();
            let wait = -(1.0 - u).ln() / upper;
            t += wait;
            if t > horizon {
                break;
            }
            let decay = (-omega * wait).exp();
            excitation.iter_mut().for_each(|x| *x *= decay);
            let rates: Vec<f64> = self.mu.iter().zip(&excitation).map(|(m, x)| m + x).collect();
            let total: f64 = rates.iter().sum();
            let accept: f64 = rng.gen::<f64>() * upper;
            if accept >= total {
                continue;
            }
            // pick the type with probability proportional to its intensity
            let mut kind = v - 1;
            let mut acc = 0.0;
            for (idx, r) in rates.iter().enumerate() {
                acc += r;
                if accept < acc {
                    kind = idx;
                    break;
                }
            }
            events.push(Event { time: t, kind });
            for (target, x) in excitation.iter_mut().enumerate() {
                *x += self.adjacency[(target, kind)];
            }
        }
        EventSequence::new(horizon, events, v)
    }

    fn check_types(&self, seq: &EventSequence) -> Result<()> {
        if seq.num_types > self.num_types() {
            return Err(Error::Input(format!(
                "sequence declares {} types but the model has {}",
                seq.num_types,
                self.num_types()
            )));
        }
        Ok(())
    }

    /// Exact log-likelihood with the closed-form compensator.
    ///
    /// Events with zero intensity make the value `-inf`; they are counted in
    /// [`LogLikelihood::zero_intensity_events`] instead of raising an error.
    pub fn log_likelihood(&self, seq: &EventSequence) -> Result<LogLikelihood> {
        self.check_types(seq)?;
        let mut value = 0.0;
        let mut zero_intensity_events = 0;
        for_each_event_intensity(self, seq, |_, _, lambda, _| {
            if lambda > 0.0 {
                value += lambda.ln();
            } else {
                zero_intensity_events += 1;
            }
        });
        if zero_intensity_events > 0 {
            return Ok(LogLikelihood { value: f64::NEG_INFINITY, zero_intensity_events });
        }
        value -= self.compensator(seq).iter().sum::<f64>();
        Ok(LogLikelihood { value, zero_intensity_events })
    }

    /// `int_0^T lambda_v(t) dt` for every type.
    pub fn compensator(&self, seq: &EventSequence) -> Vec<f64> {
        let tails = kernel_tails(seq, self.kernel_rate);
        (0..self.num_types())
            .map(|v| {
                self.mu[v] * seq.horizon
                    + seq
                        .events
                        .iter()
                        .zip(&tails)
                        .map(|(e, tail)| self.adjacency[(v, e.kind)] * tail)
                        .sum::<f64>()
            })
            .collect()
    }

    /// Analytic gradient of [`HawkesModel::log_likelihood`] with respect to `mu` and `A`.
    pub fn ll_gradient(&self, seq: &EventSequence) -> Result<LikelihoodGradient> {
        self.check_types(seq)?;
        let v = self.num_types();
        let mut grad_mu = vec![-seq.horizon; v];
        let mut grad_a = DMatrix::zeros(v, v);
        let mut zero_intensity_events = 0;
        for_each_event_intensity(self, seq, |_, kind, lambda, history| {
            if lambda <= 0.0 {
                zero_intensity_events += 1;
                return;
            }
            grad_mu[kind] += 1.0 / lambda;
            for (source, h) in history.iter().enumerate() {
                grad_a[(kind, source)] += h / lambda;
            }
        });
        if zero_intensity_events > 0 {
            return Err(Error::DegenerateLikelihood(zero_intensity_events));
        }
        let tails = kernel_tails(seq, self.kernel_rate);
        for (e, tail) in seq.events.iter().zip(&tails) {
            for target in 0..v {
                grad_a[(target, e.kind)] -= tail;
            }
        }
        Ok(LikelihoodGradient { grad_mu, grad_a })
    }

    /// Model restricted to a relabeling of its types: new type `i` is old type `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let v = self.num_types();
        if perm.len() != v {
            return Err(Error::Input("permutation length mismatch".into()));
        }
        let mu = perm.iter().map(|&p| self.mu[p]).collect();
        let adjacency = DMatrix::from_fn(v, v, |r, c| self.adjacency[(perm[r], perm[c])]);
        let latent_x = self.latent_x.as_ref().map(|x| perm.iter().map(|&p| x[p]).collect());
        Ok(Self { mu, adjacency, kernel_rate: self.kernel_rate, latent_x })
    }
}

/// `(1 - exp(-omega (T - t_i))) / omega` per event.
fn kernel_tails(seq: &EventSequence, omega: f64) -> Vec<f64> {
    seq.events
        .iter()
        .map(|e| -(-omega * (seq.horizon - e.time)).exp_m1() / omega)
        .collect()
}

/// Walks the events in time order, handing the callback each event's index,
/// type, intensity and the per-source decayed history
/// `h_u = sum_{t_j < t_i, v_j = u} exp(-omega (t_i - t_j))`.
/// Events sharing a timestamp do not excite each other.
fn for_each_event_intensity<F>(model: &HawkesModel, seq: &EventSequence, mut visit: F)
where
    F: FnMut(usize, usize, f64, &[f64]),
{
    let v = model.num_types();
    let omega = model.kernel_rate;
    let mut history = vec![0.0; v];
    let mut pending: Vec<usize> = Vec::new();
    let mut clock = 0.0;
    for (idx, e) in seq.events.iter().enumerate() {
        if e.time > clock {
            let decay = (-omega * (e.time - clock)).exp();
            for h in history.iter_mut() {
                *h *= decay;
            }
            for &kind in &pending {
                history[kind] += (-omega * (e.time - clock)).exp();
            }
            pending.clear();
            clock = e.time;
        }
        let lambda = model.mu[e.kind]
            + history
                .iter()
                .enumerate()
                .map(|(u, h)| model.adjacency[(e.kind, u)] * h)
                .sum::<f64>();
        visit(idx, e.kind, lambda, &history);
        pending.push(e.kind);
    }
}

/// Log-likelihood value with a flag for zero-intensity events.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLikelihood {
    /// `-inf` when any event has zero intensity.
    pub value: f64,
    pub zero_intensity_events: usize,
}

impl LogLikelihood {
    pub fn is_degenerate(&self) -> bool {
        self.zero_intensity_events > 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodGradient {
    pub grad_mu: Vec<f64>,
    pub grad_a: DMatrix<f64>,
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().iter().copied().fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub kind: usize,
}

/// Events `(t, v)` on `[0, T]`, sorted by time, over `num_types` declared types.
#[derive(Debug, Clone, PartialEq)]
pub struct EventSequence {
    pub horizon: f64,
    pub events: Vec<Event>,
    pub num_types: usize,
}

#[derive(Serialize, Deserialize)]
struct SequenceRecord {
    #[serde(rename = "T")]
    horizon: f64,
    events: Vec<(f64, usize)>,
    num_types: usize,
}

impl EventSequence {
    /// Validates an already sorted event list.
    pub fn new(horizon: f64, events: Vec<Event>, num_types: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Input(format!("horizon must be positive, got {horizon}")));
        }
        for (i, e) in events.iter().enumerate() {
            if !(e.time.is_finite() && (0.0..=horizon).contains(&e.time)) {
                return Err(Error::Input(format!("event {i} at time {} outside [0, {horizon}]", e.time)));
            }
            if e.kind >= num_types {
                return Err(Error::Input(format!("event {i} has type {} >= num_types {num_types}", e.kind)));
            }
            if i > 0 && events[i - 1].time > e.time {
                return Err(Error::Input(format!("events are not sorted at index {i}")));
            }
        }
        Ok(Self { horizon, events, num_types })
    }

    /// Sorts by time (stable), warning when timestamps tie.
    pub fn from_unsorted(horizon: f64, mut events: Vec<Event>, num_types: usize) -> Result<Self> {
        if events.iter().any(|e| !e.time.is_finite()) {
            return Err(Error::Input("event times must be finite".into()));
        }
        events.sort_by(|a, b| a.time.total_cmp(&b.time));
        let ties = events.windows(2).filter(|w| w[0].time == w[1].time).count();
        if ties > 0 {
            log::warn!("{ties} tied event time(s); keeping input order among ties");
        }
        Self::new(horizon, events, num_types)
    }

    pub fn empty(horizon: f64, num_types: usize) -> Result<Self> {
        Self::new(horizon, Vec::new(), num_types)
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Event times grouped by type (one sorted list per declared type).
    pub fn times_by_type(&self) -> Vec<Vec<f64>> {
        let mut grouped = vec![Vec::new(); self.num_types];
        for e in &self.events {
            grouped[e.kind].push(e.time);
        }
        grouped
    }

    /// Number of types with at least one event.
    pub fn distinct_types(&self) -> usize {
        let mut seen = vec![false; self.num_types];
        for e in &self.events {
            seen[e.kind] = true;
        }
        seen.iter().filter(|&&s| s).count()
    }

    /// `N_v(t)`: number of type-`v` events with time `<= t`.
    pub fn count(&self, v: usize, t: f64) -> usize {
        self.events.iter().filter(|e| e.kind == v && e.time <= t).count()
    }

    /// Relabel types: new type `i` is old type `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let mut inverse = vec![usize::MAX; self.num_types];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }
        let events = self.events.iter().map(|e| Event { time: e.time, kind: inverse[e.kind] }).collect();
        Self::new(self.horizon, events, self.num_types)
    }

    pub fn to_json_line(&self) -> Result<String> {
        let record = SequenceRecord {
            horizon: self.horizon,
            events: self.events.iter().map(|e| (e.time, e.kind)).collect(),
            num_types: self.num_types,
        };
        Ok(serde_json::to_string(&record)?)
    }

    pub fn from_json_line(line: &str) -> Result<Self> {
        let record: SequenceRecord = serde_json::from_str(line)?;
        let events = record.events.into_iter().map(|(time, kind)| Event { time, kind }).collect();
        Self::from_unsorted(record.horizon, events, record.num_types)
    }
}

/// Read a JSON Lines corpus; blank lines are skipped.
pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Vec<EventSequence>> {
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let seq = EventSequence::from_json_line(&line).map_err(|e| match e {
            Error::Parse(inner) => Error::Input(format!("line {}: {inner}", lineno + 1)),
            Error::Input(msg) => Error::Input(format!("line {}: {msg}", lineno + 1)),
            other => other,
        })?;
        out.push(seq);
    }
    Ok(out)
}

pub fn load_jsonl(path: &Path) -> Result<Vec<EventSequence>> {
    let file = std::fs::File::open(path)?;
    read_jsonl(std::io::BufReader::new(file))
}

pub fn write_jsonl<W: Write>(mut writer: W, sequences: &[EventSequence]) -> Result<()> {
    for seq in sequences {
        writeln!(writer, "{}", seq.to_json_line()?)?;
    }
    Ok(())
}

pub fn save_jsonl(path: &Path, sequences: &[EventSequence]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut writer = std::io::BufWriter::new(file);
    write_jsonl(&mut writer, sequences)?;
    writer.flush()?;
    Ok(())
}
