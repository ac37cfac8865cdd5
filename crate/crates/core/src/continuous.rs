//! The continuous (diffusive) process.
//!
//! Itô equation
//! `d psi = [-(i/hbar) H dt + sum_p sqrt(g_p) (A_p - <A_p>) dB_p - 1/2 sum_p g_p (A_p - <A_p>)^2 dt] psi`
//! integrated by Euler–Maruyama in the joint eigenbasis, with `<A_p>` taken at the
//! pre-step state and optional renormalization after every step.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{Hamiltonian, QuantitySet, StateVector, C64, I, ZERO};
use crate::hitting::positive;
use crate::trajectory::{JointModel, Recorder, TrajectoryRecord};

/// Strength of the continuous process equivalent to hittings of accuracy `beta`
/// at frequency `mu`: `gamma = beta * mu / 2`.
pub fn strength_from_hitting(beta: f64, mu: f64) -> f64 {
    beta * mu / 2.0
}

/// Accuracy `beta = 2 gamma / mu` that keeps `beta * mu = 2 gamma` at frequency `mu`.
pub fn accuracy_for_strength(gamma: f64, mu: f64) -> f64 {
    2.0 * gamma / mu
}

/// Per-particle strength for distinguishable particles localized with
/// accuracy `alpha` at frequency `lambda`: `gamma_l = alpha * lambda_l / 2`.
pub fn particle_strength(alpha: f64, lambda: f64) -> f64 {
    alpha * lambda / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HamiltonianMode {
    /// `-(i/hbar) H psi dt` inside the same Euler increment.
    #[default]
    Combined,
    /// Exact unitary over `dt`, then the stochastic increment.
    Split,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousConfig {
    pub gamma: f64,
    pub dt: f64,
    pub t_end: f64,
    pub record_interval: f64,
    pub renormalize: bool,
    pub record_states: bool,
    pub hamiltonian_mode: HamiltonianMode,
    /// Per-quantity strengths overriding `gamma`.
    pub strengths: Option<Vec<f64>>,
}

impl ContinuousConfig {
    pub fn new(gamma: f64, dt: f64, t_end: f64, record_interval: f64) -> Result<Self> {
        let config = ContinuousConfig {
            gamma,
            dt,
            t_end,
            record_interval,
            renormalize: true,
            record_states: false,
            hamiltonian_mode: HamiltonianMode::Combined,
            strengths: None,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn with_states(mut self, on: bool) -> Self {
        self.record_states = on;
        self
    }

    pub fn with_mode(mut self, mode: HamiltonianMode) -> Self {
        self.hamiltonian_mode = mode;
        self
    }

    pub fn with_strengths(mut self, strengths: Vec<f64>) -> Self {
        self.strengths = Some(strengths);
        self
    }

    pub fn validate(&self) -> Result<()> {
        positive("gamma", self.gamma)?;
        positive("dt", self.dt)?;
        positive("t_end", self.t_end)?;
        positive("record_interval", self.record_interval)?;
        if self.dt > self.record_interval * (1.0 + 1e-9) {
            return Err(Error::param("dt", "must be <= record_interval"));
        }
        if self.record_interval > self.t_end * (1.0 + 1e-9) {
            return Err(Error::param("record_interval", "must be <= t_end"));
        }
        if let Some(s) = &self.strengths {
            for &g in s {
                if !(g >= 0.0) || !g.is_finite() {
                    return Err(Error::param("strengths", "must be finite and >= 0"));
                }
            }
        }
        Ok(())
    }

    fn strengths_for(&self, count: usize) -> Result<Vec<f64>> {
        match &self.strengths {
            Some(s) if s.len() != count => Err(Error::DimensionMismatch { expected: count, found: s.len() }),
            Some(s) => Ok(s.clone()),
            None => Ok(vec![self.gamma; count]),
        }
    }
}

/// Largest step with `gamma * sum_p (spectral range of A_p)^2 * dt <= 0.01`.
pub fn default_dt(gamma: f64, a: &QuantitySet) -> f64 {
    let spread: f64 = (0..a.len())
        .map(|p| {
            let col = a.eigenvalue_column(p);
            let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            (hi - lo).powi(2)
        })
        .sum();
    if spread == 0.0 {
        return f64::INFINITY;
    }
    0.01 / (gamma * spread)
}

/// Independent Gaussian increments `dB_p ~ N(0, dt)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerIncrement(pub Vec<f64>);

impl WienerIncrement {
    pub fn sample<R: Rng + ?Sized>(count: usize, dt: f64, rng: &mut R) -> Self {
        let s = dt.sqrt();
        WienerIncrement((0..count).map(|_| s * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)).collect())
    }
}

/// One Euler–Maruyama step of the continuous process with strength `gamma`,
/// followed by renormalization.
pub fn sde_step(psi: &StateVector, a: &QuantitySet, h: Option<&Hamiltonian>, gamma: f64, dt: f64, db: &WienerIncrement) -> Result<StateVector> {
    if db.0.len() != a.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), found: db.0.len() });
    }
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(Error::param("gamma", "must be >= 0"));
    }
    positive("dt", dt)?;
    let model = JointModel::new(a, h)?;
    let mut c = a.to_joint(psi)?;
    let roots = vec![gamma.sqrt(); a.len()];
    let gammas = vec![gamma; a.len()];
    let mut scratch = StepScratch::default();
    let norm = euler_step(&model, &mut c, &roots, &gammas, &db.0, dt, true, &mut scratch);
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::StepRejected { time: dt, norm });
    }
    Ok(a.from_joint(&c))
}

/// Simulates one trajectory of the continuous process.
pub fn simulate_continuous_trajectory<R: Rng + ?Sized>(
    psi0: &StateVector,
    h: Option<&Hamiltonian>,
    a: &QuantitySet,
    config: &ContinuousConfig,
    rng: &mut R,
) -> Result<TrajectoryRecord> {
    ContinuousEngine::new(a, h, config)?.run(psi0, 0, rng)
}

/// Reusable integrator for many trajectories of the same scenario.
pub struct ContinuousEngine<'a> {
    model: JointModel<'a>,
    config: ContinuousConfig,
    gammas: Vec<f64>,
    roots: Vec<f64>,
}

impl<'a> ContinuousEngine<'a> {
    pub fn new(a: &'a QuantitySet, h: Option<&Hamiltonian>, config: &ContinuousConfig) -> Result<Self> {
        config.validate()?;
        let gammas = config.strengths_for(a.len())?;
        let roots = gammas.iter().map(|g| g.sqrt()).collect();
        Ok(ContinuousEngine { model: JointModel::new(a, h)?, config: config.clone(), gammas, roots })
    }

    pub fn config(&self) -> &ContinuousConfig {
        &self.config
    }

    pub fn run<R: Rng + ?Sized>(&self, psi0: &StateVector, seed: u64, rng: &mut R) -> Result<TrajectoryRecord> {
        let cfg = &self.config;
        let dt = cfg.dt;
        let steps = (cfg.t_end / dt).round().max(1.0) as usize;
        let per_sample = ((cfg.record_interval / dt).round() as usize).max(1);
        let mut recorder = Recorder::new(seed, steps / per_sample + 1, cfg.record_states);
        let mut c = self.model.quantities.to_joint(psi0)?;
        let mut scratch = StepScratch::default();
        let mut db = vec![0.0; self.model.count];
        let sqrt_dt = dt.sqrt();
        let split = matches!(cfg.hamiltonian_mode, HamiltonianMode::Split) && self.model.propagator.is_some();
        let mut prop_scratch = Vec::new();

        recorder.sample(&self.model, 0.0, &c, 0);
        for step in 1..=steps {
            for x in db.iter_mut() {
                let z: f64 = StandardNormal.sample(rng);
                *x = sqrt_dt * z;
            }
            if split {
                if let Some(prop) = &self.model.propagator {
                    prop.evolve(&mut c, dt, &mut prop_scratch);
                }
            }
            let norm = euler_step(&self.model, &mut c, &self.roots, &self.gammas, &db, dt, !split, &mut scratch);
            let t = step as f64 * dt;
            if !((norm - 1.0).abs() <= 0.5) {
                return Err(Error::StepRejected { time: t, norm });
            }
            if cfg.renormalize {
                let inv = 1.0 / norm;
                for z in c.iter_mut() {
                    *z *= inv;
                }
            }
            if step % per_sample == 0 {
                recorder.sample(&self.model, t, &c, 0);
            }
        }
        Ok(recorder.finish(0))
    }
}

#[derive(Default)]
struct StepScratch {
    means: Vec<f64>,
    hc: Vec<C64>,
}

/// In-place Euler–Maruyama increment. Returns the norm of the updated vector;
/// renormalization is left to the caller.
#[allow(clippy::too_many_arguments)]
fn euler_step(
    model: &JointModel<'_>,
    c: &mut [C64],
    roots: &[f64],
    gammas: &[f64],
    db: &[f64],
    dt: f64,
    with_hamiltonian: bool,
    s: &mut StepScratch,
) -> f64 {
    let k = model.count;
    let table = model.quantities.eigenvalue_table();
    s.means.clear();
    s.means.resize(k, 0.0);
    let mut total = 0.0;
    for (z, row) in c.iter().zip(table.chunks_exact(k)) {
        let w = z.norm_sqr();
        total += w;
        for (m, a) in s.means.iter_mut().zip(row) {
            *m += w * a;
        }
    }
    for m in &mut s.means {
        *m /= total;
    }

    let h = if with_hamiltonian { model.hamiltonian.as_ref() } else { None };
    if let Some(h) = h {
        s.hc.clear();
        s.hc.resize(c.len(), ZERO);
        for (i, out) in s.hc.iter_mut().enumerate() {
            let mut acc = ZERO;
            for (j, z) in c.iter().enumerate() {
                acc += h[(i, j)] * z;
            }
            *out = acc;
        }
    }

    let mut norm_sq = 0.0;
    let h_scale = -I * (dt / model.hbar);
    for (i, (z, row)) in c.iter_mut().zip(table.chunks_exact(k)).enumerate() {
        let mut linear = 0.0;
        let mut quadratic = 0.0;
        for p in 0..k {
            let delta = row[p] - s.means[p];
            linear += roots[p] * delta * db[p];
            quadratic += gammas[p] * delta * delta;
        }
        let mut next = *z * (1.0 + linear - 0.5 * quadratic * dt);
        if h.is_some() {
            next += h_scale * s.hc[i];
        }
        *z = next;
        norm_sq += next.norm_sqr();
    }
    norm_sq.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::rng_from_seed;
    use crate::hilbert::{born_weights, CMatrix, ONE};
    use approx::assert_abs_diff_eq;

    fn sigma_z_set() -> QuantitySet {
        QuantitySet::from_diagonals(&[vec![1.0, -1.0]]).unwrap()
    }

    fn sigma_x() -> Hamiltonian {
        Hamiltonian::new(CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO])).unwrap()
    }

    #[test]
    fn strength_bridge() {
        assert_abs_diff_eq!(strength_from_hitting(0.01, 100.0), 0.5, epsilon = 1e-15);
        for (gamma, mu) in [(0.5, 10.0), (1.5, 1e4), (0.25, 3.0)] {
            let beta = accuracy_for_strength(gamma, mu);
            assert_abs_diff_eq!(strength_from_hitting(beta, mu), gamma, epsilon = 1e-15 * gamma);
        }
        assert_eq!(particle_strength(2.0, 3.0), 3.0);
    }

    #[test]
    fn eigenvector_is_fixed_for_any_increment() {
        let a = QuantitySet::from_diagonals(&[vec![1.0, 2.0, 3.0], vec![0.0, 4.0, -1.0]]).unwrap();
        let psi = StateVector::basis(3, 1).unwrap();
        let mut rng = rng_from_seed(4);
        for _ in 0..50 {
            let db = WienerIncrement::sample(2, 0.01, &mut rng);
            assert_eq!(sde_step(&psi, &a, None, 0.8, 0.01, &db).unwrap(), psi);
        }
    }

    #[test]
    fn zero_strength_is_first_order_unitary() {
        let psi = StateVector::from_real(&[0.8, 0.6]).unwrap();
        let h = sigma_x();
        let db = WienerIncrement(vec![0.3]);
        for dt in [1e-2, 1e-3] {
            let out = sde_step(&psi, &sigma_z_set(), Some(&h), 0.0, dt, &db).unwrap();
            let exact = crate::hilbert::Propagator::new(h.matrix(), 1.0).unitary(dt) * psi.amplitudes();
            let err = (out.amplitudes() - exact).norm();
            assert!(err < dt * dt, "dt {dt}: err {err}");
        }
    }

    #[test]
    fn positive_increment_favours_upper_branch() {
        let gamma = 1.0;
        let dt: f64 = 1e-4;
        let psi = StateVector::from_real(&[1.0, 1.0]).unwrap();
        let db = WienerIncrement(vec![dt.sqrt()]);
        let out = sde_step(&psi, &sigma_z_set(), None, gamma, dt, &db).unwrap();
        let w = born_weights(&out, &sigma_z_set()).unwrap();
        let s = (gamma * dt).sqrt();
        let expected = 0.5 * (1.0 + s).powi(2) / (0.5 * (1.0 + s).powi(2) + 0.5 * (1.0 - s).powi(2));
        assert!(w[0] > 0.5);
        assert!((w[0] - expected).abs() < 2.0 * dt, "{} vs {}", w[0], expected);
    }

    #[test]
    fn bad_inputs() {
        let psi = StateVector::from_real(&[1.0, 1.0]).unwrap();
        assert!(matches!(
            sde_step(&psi, &sigma_z_set(), None, 1.0, 0.1, &WienerIncrement(vec![0.0, 0.0])),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(ContinuousConfig::new(0.0, 0.1, 1.0, 0.1).is_err());
        assert!(ContinuousConfig::new(1.0, 0.2, 1.0, 0.1).is_err());
        assert!(ContinuousConfig::new(1.0, 0.1, 1.0, 2.0).is_err());
    }

    #[test]
    fn oversized_step_is_rejected() {
        let psi = StateVector::from_real(&[1.0, 1.0]).unwrap();
        let a = QuantitySet::from_diagonals(&[vec![10.0, -10.0]]).unwrap();
        let cfg = ContinuousConfig::new(1.0, 0.05, 1.0, 0.05).unwrap();
        let err = simulate_continuous_trajectory(&psi, None, &a, &cfg, &mut rng_from_seed(0)).unwrap_err();
        assert!(matches!(err, Error::StepRejected { .. }));
    }

    #[test]
    fn default_step_rule() {
        let dt = default_dt(2.0, &sigma_z_set());
        assert_abs_diff_eq!(2.0 * 4.0 * dt, 0.01, epsilon = 1e-15);
    }

    #[test]
    fn trajectory_norms_and_collapse() {
        let psi = StateVector::from_real(&[1.0, 1.0]).unwrap();
        let cfg = ContinuousConfig::new(1.0, 1e-3, 8.0, 0.5).unwrap().with_states(true);
        let rec = simulate_continuous_trajectory(&psi, None, &sigma_z_set(), &cfg, &mut rng_from_seed(3)).unwrap();
        assert_eq!(rec.sample_times.len(), 17);
        for s in rec.states.as_ref().unwrap() {
            assert!((s.norm_sq() - 1.0).abs() < 1e-12);
        }
        assert!(rec.final_weights().iter().cloned().fold(0.0, f64::max) > 0.999);
        assert!(rec.events.is_empty());
    }

    #[test]
    fn split_mode_without_collapse_is_exact_rabi() {
        let psi = StateVector::basis(2, 0).unwrap();
        let mut cfg = ContinuousConfig::new(1.0, 1e-3, 1.0, 0.25).unwrap().with_states(true).with_mode(HamiltonianMode::Split);
        cfg.strengths = Some(vec![0.0]);
        let rec = simulate_continuous_trajectory(&psi, Some(&sigma_x()), &sigma_z_set(), &cfg, &mut rng_from_seed(0)).unwrap();
        for (t, s) in rec.sample_times.iter().zip(rec.states.as_ref().unwrap()) {
            assert!((s.amplitudes()[0] - C64::new(t.cos(), 0.0)).norm() < 1e-10);
        }
    }
}
