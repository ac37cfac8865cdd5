//! Trajectory records shared by both engines, plus the joint-basis working model.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::hilbert::{CMatrix, Hamiltonian, Propagator, QuantitySet, StateVector, C64};

/// One hitting: its time, the sampled centre and the state statistics just before it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HittingEvent {
    pub time: f64,
    /// Index of the hitting channel that fired.
    pub channel: usize,
    /// Centre components, one per quantity of the channel.
    pub centre: Vec<f64>,
    /// `<A_p>` of the pre-hitting state for the channel's quantities.
    pub prior_mean: Vec<f64>,
    /// Row-major quantum covariance of the pre-hitting state for the channel's quantities.
    pub prior_covariance: Vec<f64>,
}

/// Time series of one stochastic realization.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub seed: u64,
    pub sample_times: Vec<f64>,
    /// Number of hittings in `(t_{j-1}, t_j]` for each sample `j`.
    pub event_counts: Vec<usize>,
    pub born_weights: Vec<Vec<f64>>,
    pub expectations: Vec<Vec<f64>>,
    pub states: Option<Vec<StateVector>>,
    /// Recorded hittings (empty unless event recording was requested).
    pub events: Vec<HittingEvent>,
    pub total_events: usize,
}

impl TrajectoryRecord {
    pub fn final_weights(&self) -> &[f64] {
        self.born_weights.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn final_state(&self) -> Option<&StateVector> {
        self.states.as_ref().and_then(|s| s.last())
    }

    /// Index of the sample closest to `t`, if within half a sample spacing.
    pub fn sample_index(&self, t: f64) -> Option<usize> {
        let (idx, dist) = self
            .sample_times
            .iter()
            .enumerate()
            .map(|(i, s)| (i, (s - t).abs()))
            .min_by(|a, b| a.1.total_cmp(&b.1))?;
        let spacing = if self.sample_times.len() > 1 { self.sample_times[1] - self.sample_times[0] } else { f64::INFINITY };
        (dist <= 0.5 * spacing.max(1e-12) + 1e-12).then_some(idx)
    }
}

/// Sample times `0, r, 2r, ...` up to `t_end`.
pub(crate) fn sample_grid(t_end: f64, interval: f64) -> Vec<f64> {
    let n = (t_end / interval + 1e-9).floor() as usize;
    (0..=n).map(|j| j as f64 * interval).collect()
}

/// The quantities and Hamiltonian expressed in the joint eigenbasis, where every
/// quantity is diagonal.
pub(crate) struct JointModel<'a> {
    pub quantities: &'a QuantitySet,
    pub dim: usize,
    pub count: usize,
    pub hamiltonian: Option<CMatrix>,
    pub propagator: Option<Propagator>,
    pub hbar: f64,
}

impl<'a> JointModel<'a> {
    pub fn new(quantities: &'a QuantitySet, hamiltonian: Option<&Hamiltonian>) -> Result<Self> {
        let (h, prop, hbar) = match hamiltonian {
            Some(h) => {
                quantities.check_dim(h.dim())?;
                let hj = quantities.matrix_to_joint(h.matrix());
                let prop = Propagator::new(&hj, h.hbar());
                (Some(hj), Some(prop), h.hbar())
            }
            None => (None, None, 1.0),
        };
        Ok(JointModel { quantities, dim: quantities.dim(), count: quantities.len(), hamiltonian: h, propagator: prop, hbar })
    }

    #[inline]
    pub fn alpha(&self, k: usize, p: usize) -> f64 {
        self.quantities.eigenvalue(k, p)
    }

    pub fn weights_into(&self, c: &[C64], w: &mut Vec<f64>) {
        w.clear();
        w.extend(c.iter().map(|z| z.norm_sqr()));
    }

    pub fn means_into(&self, w: &[f64], means: &mut Vec<f64>) {
        means.clear();
        means.resize(self.count, 0.0);
        for (k, wk) in w.iter().enumerate() {
            if *wk == 0.0 {
                continue;
            }
            for (p, m) in means.iter_mut().enumerate() {
                *m += wk * self.alpha(k, p);
            }
        }
    }

    /// Quantum covariance restricted to `indices`, row-major.
    pub fn covariance(&self, w: &[f64], means: &[f64], indices: &[usize]) -> Vec<f64> {
        let n = indices.len();
        let mut cov = vec![0.0; n * n];
        for (k, wk) in w.iter().enumerate() {
            if *wk == 0.0 {
                continue;
            }
            for (i, &p) in indices.iter().enumerate() {
                let dp = self.alpha(k, p) - means[p];
                for (j, &q) in indices.iter().enumerate() {
                    cov[i * n + j] += wk * dp * (self.alpha(k, q) - means[q]);
                }
            }
        }
        cov
    }
}

/// Accumulates samples for a [`TrajectoryRecord`].
pub(crate) struct Recorder {
    record: TrajectoryRecord,
    keep_states: bool,
    weights: Vec<f64>,
    means: Vec<f64>,
}

impl Recorder {
    pub fn new(seed: u64, capacity: usize, keep_states: bool) -> Self {
        Recorder {
            record: TrajectoryRecord {
                seed,
                sample_times: Vec::with_capacity(capacity),
                event_counts: Vec::with_capacity(capacity),
                born_weights: Vec::with_capacity(capacity),
                expectations: Vec::with_capacity(capacity),
                states: keep_states.then(|| Vec::with_capacity(capacity)),
                events: Vec::new(),
                total_events: 0,
            },
            keep_states,
            weights: Vec::new(),
            means: Vec::new(),
        }
    }

    pub fn sample(&mut self, model: &JointModel<'_>, t: f64, c: &[C64], events_since_last: usize) {
        model.weights_into(c, &mut self.weights);
        let total: f64 = self.weights.iter().sum();
        for w in &mut self.weights {
            *w /= total;
        }
        model.means_into(&self.weights, &mut self.means);
        self.record.sample_times.push(t);
        self.record.event_counts.push(events_since_last);
        self.record.born_weights.push(self.weights.clone());
        self.record.expectations.push(self.means.clone());
        if self.keep_states {
            let psi = model.quantities.from_joint(c);
            if let Some(states) = self.record.states.as_mut() {
                states.push(psi);
            }
        }
    }

    pub fn push_event(&mut self, event: HittingEvent) {
        self.record.events.push(event);
    }

    pub fn finish(mut self, total_events: usize) -> TrajectoryRecord {
        self.record.total_events = total_events;
        self.record
    }
}
