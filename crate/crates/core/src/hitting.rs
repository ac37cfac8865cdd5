//! The discontinuous (hitting) process.
//!
//! A hitting multiplies the state by the Gaussian sharpening operator
//! `S(a) = (beta/pi)^(K/4) exp(-beta/2 * sum_p (A_p - a_p)^2)` and renormalizes.
//! The centre `a` is drawn from `|S(a) psi|^2`, which in the joint eigenbasis is
//! the mixture `sum_k w_k prod_p N(alpha[k,p], 1/(2 beta))`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{CMatrix, CVector, Hamiltonian, QuantitySet, StateVector, C64};
use crate::trajectory::{sample_grid, HittingEvent, JointModel, Recorder, TrajectoryRecord};

/// Below this squared norm a hitting is treated as numerically impossible.
pub const VANISHING_NORM: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schedule {
    /// Hittings at `k / mu`, `k = 1, 2, ...`.
    EvenlySpaced,
    /// Homogeneous Poisson process of rate `mu`.
    PoissonTimes,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HittingConfig {
    /// Sharpening accuracy.
    pub beta: f64,
    /// Mean hitting frequency.
    pub mu: f64,
    pub schedule: Schedule,
    pub t_end: f64,
    pub record_interval: f64,
    pub record_states: bool,
    pub record_events: bool,
}

impl HittingConfig {
    pub fn new(beta: f64, mu: f64, schedule: Schedule, t_end: f64, record_interval: f64) -> Result<Self> {
        let config = HittingConfig { beta, mu, schedule, t_end, record_interval, record_states: false, record_events: false };
        config.validate()?;
        Ok(config)
    }

    pub fn with_states(mut self, on: bool) -> Self {
        self.record_states = on;
        self
    }

    pub fn with_events(mut self, on: bool) -> Self {
        self.record_events = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        positive("beta", self.beta)?;
        positive("mu", self.mu)?;
        positive("t_end", self.t_end)?;
        positive("record_interval", self.record_interval)?;
        if self.record_interval > self.t_end {
            return Err(Error::param("record_interval", "must be <= t_end"));
        }
        Ok(())
    }
}

pub(crate) fn positive(name: &'static str, value: f64) -> Result<()> {
    if !(value > 0.0) || !value.is_finite() {
        return Err(Error::param(name, "must be > 0"));
    }
    Ok(())
}

/// An independent hitting stream acting on a subset of the quantities with its
/// own accuracy and frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct HittingChannel {
    pub quantities: Vec<usize>,
    pub beta: f64,
    pub mu: f64,
}

/// `(beta/pi)^(K/4) exp(-beta/2 sum_p (A_p - a_p)^2)` as a dense matrix.
pub fn sharpening_operator(a: &QuantitySet, centre: &[f64], beta: f64) -> Result<CMatrix> {
    check_centre(a, centre)?;
    positive("beta", beta)?;
    let all: Vec<usize> = (0..a.len()).collect();
    let diag = CVector::from_iterator(
        a.dim(),
        (0..a.dim()).map(|k| C64::new(log_sharpening(a, k, &all, centre, beta).exp(), 0.0)),
    );
    Ok(a.matrix_from_joint(&CMatrix::from_diagonal(&diag)))
}

/// Applies one hitting centred at `centre`. Returns the normalized state and
/// `|S psi|^2`, the probability density of that centre.
pub fn apply_hitting(psi: &StateVector, a: &QuantitySet, centre: &[f64], beta: f64) -> Result<(StateVector, f64)> {
    check_centre(a, centre)?;
    positive("beta", beta)?;
    let mut c = a.to_joint(psi)?;
    let all: Vec<usize> = (0..a.len()).collect();
    let norm_sq = sharpen_joint(&mut c, a, &all, centre, beta, 0.0)?;
    Ok((a.from_joint(&c), norm_sq))
}

/// Draws a hitting centre from its exact density.
pub fn sample_hitting_centre<R: Rng + ?Sized>(psi: &StateVector, a: &QuantitySet, beta: f64, rng: &mut R) -> Result<Vec<f64>> {
    positive("beta", beta)?;
    let w: Vec<f64> = a.to_joint(psi)?.iter().map(|z| z.norm_sqr()).collect();
    let all: Vec<usize> = (0..a.len()).collect();
    Ok(sample_joint(&w, a, &all, beta, rng))
}

/// `(beta/pi)^(K/2) <psi| exp(-beta (A - a)^2) |psi>`.
pub fn hitting_density(psi: &StateVector, a: &QuantitySet, centre: &[f64], beta: f64) -> Result<f64> {
    check_centre(a, centre)?;
    positive("beta", beta)?;
    let c = a.to_joint(psi)?;
    let norm = (beta / PI).powf(a.len() as f64 / 2.0);
    Ok(c
        .iter()
        .enumerate()
        .map(|(k, z)| {
            let d2: f64 = a.eigenvalue_row(k).iter().zip(centre).map(|(x, y)| (x - y) * (x - y)).sum();
            z.norm_sqr() * (-beta * d2).exp()
        })
        .sum::<f64>()
        * norm)
}

/// Hitting times in `(0, t_end]`.
pub fn schedule_hittings<R: Rng + ?Sized>(config: &HittingConfig, rng: &mut R) -> Vec<f64> {
    hitting_times(config.schedule, config.mu, config.t_end, rng)
}

pub(crate) fn hitting_times<R: Rng + ?Sized>(schedule: Schedule, mu: f64, t_end: f64, rng: &mut R) -> Vec<f64> {
    match schedule {
        Schedule::EvenlySpaced => {
            let n = (mu * t_end * (1.0 + 1e-12)).floor() as usize;
            (1..=n).map(|k| k as f64 / mu).collect()
        }
        Schedule::PoissonTimes => {
            let gap = Exp::new(mu).expect("mu validated positive");
            let mut times = Vec::with_capacity((mu * t_end * 1.2) as usize + 4);
            let mut t = 0.0;
            loop {
                t += gap.sample(rng);
                if t > t_end {
                    break;
                }
                times.push(t);
            }
            times
        }
    }
}

/// Simulates one trajectory of the hitting process with all quantities sharpened together.
pub fn simulate_hitting_trajectory<R: Rng + ?Sized>(
    psi0: &StateVector,
    h: Option<&Hamiltonian>,
    a: &QuantitySet,
    config: &HittingConfig,
    rng: &mut R,
) -> Result<TrajectoryRecord> {
    HittingEngine::new(a, h, config)?.run(psi0, 0, rng)
}

/// Reusable simulator for many trajectories of the same scenario.
pub struct HittingEngine<'a> {
    model: JointModel<'a>,
    channels: Vec<HittingChannel>,
    config: HittingConfig,
}

impl<'a> HittingEngine<'a> {
    pub fn new(a: &'a QuantitySet, h: Option<&Hamiltonian>, config: &HittingConfig) -> Result<Self> {
        let channel = HittingChannel { quantities: (0..a.len()).collect(), beta: config.beta, mu: config.mu };
        Self::with_channels(a, h, config, vec![channel])
    }

    /// Independent hitting streams; the channels' `beta` and `mu` replace those of `config`.
    pub fn with_channels(a: &'a QuantitySet, h: Option<&Hamiltonian>, config: &HittingConfig, channels: Vec<HittingChannel>) -> Result<Self> {
        config.validate()?;
        if channels.is_empty() {
            return Err(Error::param("channels", "must not be empty"));
        }
        for ch in &channels {
            positive("beta", ch.beta)?;
            positive("mu", ch.mu)?;
            if ch.quantities.is_empty() {
                return Err(Error::param("channels", "a channel must sharpen at least one quantity"));
            }
            for &p in &ch.quantities {
                a.check_index(p)?;
            }
        }
        Ok(HittingEngine { model: JointModel::new(a, h)?, channels, config: config.clone() })
    }

    pub fn config(&self) -> &HittingConfig {
        &self.config
    }

    pub fn run<R: Rng + ?Sized>(&self, psi0: &StateVector, seed: u64, rng: &mut R) -> Result<TrajectoryRecord> {
        let a = self.model.quantities;
        let mut c = a.to_joint(psi0)?;
        let cfg = &self.config;

        let mut hits: Vec<(f64, usize)> = Vec::new();
        for (idx, ch) in self.channels.iter().enumerate() {
            hits.extend(hitting_times(cfg.schedule, ch.mu, cfg.t_end, rng).into_iter().map(|t| (t, idx)));
        }
        if self.channels.len() > 1 {
            hits.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        }

        let samples = sample_grid(cfg.t_end, cfg.record_interval);
        let mut recorder = Recorder::new(seed, samples.len(), cfg.record_states);
        let mut scratch = Vec::new();
        let mut weights = Vec::with_capacity(self.model.dim);
        let mut means = Vec::with_capacity(self.model.count);
        let mut now = 0.0;
        let mut since_sample = 0;
        let mut next_hit = 0;

        for &ts in &samples {
            while next_hit < hits.len() && hits[next_hit].0 <= ts {
                let (th, ch_idx) = hits[next_hit];
                self.evolve(&mut c, th - now, &mut scratch);
                now = th;
                let ch = &self.channels[ch_idx];
                self.model.weights_into(&c, &mut weights);
                let centre = sample_joint(&weights, a, &ch.quantities, ch.beta, rng);
                if cfg.record_events {
                    self.model.means_into(&weights, &mut means);
                    recorder.push_event(HittingEvent {
                        time: th,
                        channel: ch_idx,
                        prior_mean: ch.quantities.iter().map(|&p| means[p]).collect(),
                        prior_covariance: self.model.covariance(&weights, &means, &ch.quantities),
                        centre: centre.clone(),
                    });
                }
                sharpen_joint(&mut c, a, &ch.quantities, &centre, ch.beta, th)?;
                since_sample += 1;
                next_hit += 1;
            }
            self.evolve(&mut c, ts - now, &mut scratch);
            now = ts;
            recorder.sample(&self.model, ts, &c, since_sample);
            since_sample = 0;
        }
        Ok(recorder.finish(next_hit))
    }

    fn evolve(&self, c: &mut [C64], dt: f64, scratch: &mut Vec<C64>) {
        if dt > 0.0 {
            if let Some(prop) = &self.model.propagator {
                prop.evolve(c, dt, scratch);
            }
        }
    }
}

fn check_centre(a: &QuantitySet, centre: &[f64]) -> Result<()> {
    if centre.len() != a.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), found: centre.len() });
    }
    if centre.iter().any(|x| !x.is_finite()) {
        return Err(Error::param("centre", "must be finite"));
    }
    Ok(())
}

/// `ln` of the sharpening eigenvalue on joint eigenvector `k` for the quantities in `indices`.
fn log_sharpening(a: &QuantitySet, k: usize, indices: &[usize], centre: &[f64], beta: f64) -> f64 {
    let d2: f64 = indices.iter().zip(centre).map(|(&p, x)| (a.eigenvalue(k, p) - x).powi(2)).sum();
    0.25 * indices.len() as f64 * (beta / PI).ln() - 0.5 * beta * d2
}

/// Multiplies joint coefficients by the sharpening operator and renormalizes.
/// Works with log-shifted factors so the state update never underflows.
fn sharpen_joint(c: &mut [C64], a: &QuantitySet, indices: &[usize], centre: &[f64], beta: f64, time: f64) -> Result<f64> {
    let mut peak = f64::NEG_INFINITY;
    for (k, z) in c.iter().enumerate() {
        if z.norm_sqr() > 0.0 {
            peak = peak.max(2.0 * log_sharpening(a, k, indices, centre, beta));
        }
    }
    let mut scaled = 0.0;
    for (k, z) in c.iter_mut().enumerate() {
        if z.norm_sqr() == 0.0 {
            continue;
        }
        let f = (log_sharpening(a, k, indices, centre, beta) - 0.5 * peak).exp();
        *z *= f;
        scaled += z.norm_sqr();
    }
    let log_norm_sq = scaled.ln() + peak;
    if !(log_norm_sq >= VANISHING_NORM.ln()) {
        return Err(Error::VanishingNorm { norm_sq: log_norm_sq.exp(), time });
    }
    let inv = 1.0 / scaled.sqrt();
    for z in c.iter_mut() {
        *z *= inv;
    }
    Ok(log_norm_sq.exp())
}

/// Eigen-mixture sampler: pick `k` with probability `w_k`, then add Gaussian
/// noise of variance `1/(2 beta)` to each component of `alpha[k, .]`.
fn sample_joint<R: Rng + ?Sized>(w: &[f64], a: &QuantitySet, indices: &[usize], beta: f64, rng: &mut R) -> Vec<f64> {
    let total: f64 = w.iter().sum();
    let u: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut chosen = None;
    for (k, wk) in w.iter().enumerate() {
        if *wk > 0.0 {
            chosen = Some(k);
            acc += wk;
            if u < acc {
                break;
            }
        }
    }
    let k = chosen.unwrap_or(0);
    let sigma = (0.5 / beta).sqrt();
    indices
        .iter()
        .map(|&p| {
            let z: f64 = StandardNormal.sample(rng);
            a.eigenvalue(k, p) + sigma * z
        })
        .collect()
}
