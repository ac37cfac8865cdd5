//! Density-matrix oracles for both processes and the statistics used to compare
//! Monte Carlo ensembles against them.

use nalgebra::SymmetricEigen;
use serde::Serialize;

use crate::continuous::{ContinuousConfig, ContinuousEngine};
use crate::ensemble::{rng_from_seed, run_indexed, Moments};
use crate::error::{Error, Result};
use crate::hilbert::{CMatrix, Hamiltonian, QuantitySet, StateVector, C64, I};
use crate::hitting::{hitting_density, positive, HittingChannel, HittingConfig, HittingEngine, Schedule};
use crate::trajectory::TrajectoryRecord;

/// Minimum mean number of hittings per window for [`db_statistics`].
pub const MIN_EVENTS_PER_WINDOW: usize = 30;

/// Default threshold on the largest outcome weight for a trajectory to count as collapsed.
pub const UNRESOLVED_THRESHOLD: f64 = 0.999;

/// Statistical operator in the computational basis.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    rho: CMatrix,
}

impl DensityMatrix {
    /// Checks trace 1, Hermiticity and positivity.
    pub fn new(rho: CMatrix) -> Result<Self> {
        if !rho.is_square() {
            return Err(Error::DimensionMismatch { expected: rho.nrows(), found: rho.ncols() });
        }
        let trace = rho.trace();
        if (trace.re - 1.0).abs() > 1e-10 || trace.im.abs() > 1e-10 {
            return Err(Error::InvalidState(format!("trace {trace} differs from 1")));
        }
        let herm = (&rho - rho.adjoint()).iter().fold(0.0f64, |m, z| m.max(z.norm()));
        if herm > 1e-10 {
            return Err(Error::InvalidState(format!("density matrix not Hermitian ({herm:e})")));
        }
        let dm = DensityMatrix { rho };
        let min = dm.min_eigenvalue();
        if min < -1e-8 {
            return Err(Error::InvalidState(format!("negative eigenvalue {min:e}")));
        }
        Ok(dm)
    }

    pub fn pure(psi: &StateVector) -> Self {
        DensityMatrix { rho: psi.projector() }
    }

    pub(crate) fn from_matrix_unchecked(rho: CMatrix) -> Self {
        DensityMatrix { rho }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.rho
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    pub fn trace(&self) -> C64 {
        self.rho.trace()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let herm = (&self.rho + self.rho.adjoint()) * C64::new(0.5, 0.0);
        SymmetricEigen::new(herm).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Trace norm of the difference (sum of singular values).
    pub fn trace_distance(&self, other: &DensityMatrix) -> f64 {
        trace_norm(&(&self.rho - &other.rho))
    }

    /// The matrix in the joint eigenbasis of `a`.
    pub fn in_joint_basis(&self, a: &QuantitySet) -> Result<CMatrix> {
        a.check_dim(self.dim())?;
        Ok(a.matrix_to_joint(&self.rho))
    }
}

/// Sum of singular values of a Hermitian matrix (sum of |eigenvalues|).
pub fn trace_norm(m: &CMatrix) -> f64 {
    let herm = (m + m.adjoint()) * C64::new(0.5, 0.0);
    SymmetricEigen::new(herm).eigenvalues.iter().map(|v| v.abs()).sum()
}

/// Average effect of one hitting: `rho_kl *= exp(-(beta/4) |alpha_k - alpha_l|^2)` in the
/// joint eigenbasis.
pub fn exact_hitting_map(rho: &DensityMatrix, a: &QuantitySet, beta: f64) -> Result<DensityMatrix> {
    positive("beta", beta)?;
    let mut j = rho.in_joint_basis(a)?;
    for k in 0..a.dim() {
        for l in 0..a.dim() {
            if k != l {
                j[(k, l)] *= (-0.25 * beta * a.row_distance_sq(k, l)).exp();
            }
        }
    }
    Ok(DensityMatrix::from_matrix_unchecked(a.matrix_from_joint(&j)))
}

/// Density matrices at `0, dt, 2 dt, ..., t_end`.
#[derive(Debug, Clone)]
pub struct DensitySeries {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
}

impl DensitySeries {
    pub fn last(&self) -> &DensityMatrix {
        self.states.last().expect("series holds at least the initial state")
    }
}

/// Dephasing rates `mu (1 - exp(-(beta/4) d_kl^2))` of the hitting master equation,
/// row-major over joint eigenvector pairs.
pub fn hitting_rates(a: &QuantitySet, beta: f64, mu: f64) -> Vec<f64> {
    pair_rates(a, |d2| mu * (1.0 - (-0.25 * beta * d2).exp()))
}

/// Dephasing rates `(gamma/2) d_kl^2` of the double-commutator master equation.
pub fn lindblad_rates(a: &QuantitySet, gamma: f64) -> Vec<f64> {
    pair_rates(a, |d2| 0.5 * gamma * d2)
}

fn pair_rates(a: &QuantitySet, f: impl Fn(f64) -> f64) -> Vec<f64> {
    let d = a.dim();
    let mut out = vec![0.0; d * d];
    for k in 0..d {
        for l in 0..d {
            if k != l {
                out[k * d + l] = f(a.row_distance_sq(k, l));
            }
        }
    }
    out
}

/// `d rho/dt = -(i/hbar)[H, rho] + mu (T[rho] - rho)`, with `T` the exact hitting map.
/// Closed form without a Hamiltonian, fixed-step RK4 otherwise.
pub fn hitting_master_evolution(
    rho0: &DensityMatrix,
    a: &QuantitySet,
    h: Option<&Hamiltonian>,
    beta: f64,
    mu: f64,
    t_end: f64,
    dt: f64,
) -> Result<DensitySeries> {
    positive("beta", beta)?;
    non_negative("mu", mu)?;
    dephasing_evolution(rho0, a, h, &hitting_rates(a, beta, mu), t_end, dt, false)
}

/// `d rho/dt = -(i/hbar)[H, rho] - (gamma/2) sum_p [A_p, [A_p, rho]]`.
pub fn lindblad_evolution(
    rho0: &DensityMatrix,
    a: &QuantitySet,
    h: Option<&Hamiltonian>,
    gamma: f64,
    t_end: f64,
    dt: f64,
) -> Result<DensitySeries> {
    non_negative("gamma", gamma)?;
    dephasing_evolution(rho0, a, h, &lindblad_rates(a, gamma), t_end, dt, false)
}

/// Same generator family as the two evolutions above, always integrated by RK4.
pub fn integrate_dephasing(
    rho0: &DensityMatrix,
    a: &QuantitySet,
    h: Option<&Hamiltonian>,
    rates: &[f64],
    t_end: f64,
    dt: f64,
) -> Result<DensitySeries> {
    dephasing_evolution(rho0, a, h, rates, t_end, dt, true)
}

/// Generator with arbitrary pair rates: closed form without a Hamiltonian, RK4 otherwise.
pub fn dephasing_series(
    rho0: &DensityMatrix,
    a: &QuantitySet,
    h: Option<&Hamiltonian>,
    rates: &[f64],
    t_end: f64,
    dt: f64,
) -> Result<DensitySeries> {
    dephasing_evolution(rho0, a, h, rates, t_end, dt, false)
}

/// Pair rates of independent hitting streams, each sharpening its own quantities:
/// `sum_c mu_c (1 - exp(-(beta_c/4) sum_{p in c} (alpha_kp - alpha_lp)^2))`.
pub fn channel_hitting_rates(a: &QuantitySet, channels: &[HittingChannel]) -> Vec<f64> {
    let d = a.dim();
    let mut out = vec![0.0; d * d];
    for k in 0..d {
        for l in 0..d {
            if k == l {
                continue;
            }
            out[k * d + l] = channels
                .iter()
                .map(|c| {
                    let d2: f64 = c.quantities.iter().map(|&p| (a.eigenvalue(k, p) - a.eigenvalue(l, p)).powi(2)).sum();
                    c.mu * (1.0 - (-0.25 * c.beta * d2).exp())
                })
                .sum();
        }
    }
    out
}

/// Pair rates `sum_p (gamma_p/2) (alpha_kp - alpha_lp)^2` for per-quantity strengths.
pub fn weighted_lindblad_rates(a: &QuantitySet, strengths: &[f64]) -> Vec<f64> {
    let d = a.dim();
    let mut out = vec![0.0; d * d];
    for k in 0..d {
        for l in 0..d {
            out[k * d + l] = strengths
                .iter()
                .enumerate()
                .map(|(p, g)| 0.5 * g * (a.eigenvalue(k, p) - a.eigenvalue(l, p)).powi(2))
                .sum();
        }
    }
    out
}

fn non_negative(name: &'static str, v: f64) -> Result<()> {
    if !(v >= 0.0) || !v.is_finite() {
        return Err(Error::param(name, "must be >= 0"));
    }
    Ok(())
}

fn dephasing_evolution(
    rho0: &DensityMatrix,
    a: &QuantitySet,
    h: Option<&Hamiltonian>,
    rates: &[f64],
    t_end: f64,
    dt: f64,
    force_rk4: bool,
) -> Result<DensitySeries> {
    positive("t_end", t_end)?;
    positive("dt", dt)?;
    let d = a.dim();
    if rates.len() != d * d {
        return Err(Error::DimensionMismatch { expected: d * d, found: rates.len() });
    }
    let start = rho0.in_joint_basis(a)?;
    let hj = match h {
        Some(h) => {
            a.check_dim(h.dim())?;
            Some((a.matrix_to_joint(h.matrix()), h.hbar()))
        }
        None => None,
    };
    let steps = (t_end / dt + 1e-9).floor() as usize;
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    times.push(0.0);
    states.push(rho0.clone());

    if hj.is_none() && !force_rk4 {
        for s in 1..=steps {
            let t = s as f64 * dt;
            let mut m = start.clone();
            for k in 0..d {
                for l in 0..d {
                    m[(k, l)] *= (-rates[k * d + l] * t).exp();
                }
            }
            times.push(t);
            states.push(DensityMatrix::from_matrix_unchecked(a.matrix_from_joint(&m)));
        }
        return Ok(DensitySeries { times, states });
    }

    // Step so that (fastest rate) * h <= 0.01.
    let max_rate = rates.iter().cloned().fold(0.0, f64::max);
    let h_rate = hj.as_ref().map(|(m, hbar)| 2.0 * m.norm() / hbar).unwrap_or(0.0);
    let fastest = max_rate + h_rate;
    let sub = ((dt * fastest / 0.01).ceil() as usize).max(1);
    let hstep = dt / sub as f64;
    let generator = |rho: &CMatrix| -> CMatrix {
        let mut out = CMatrix::from_fn(d, d, |k, l| -rho[(k, l)] * rates[k * d + l]);
        if let Some((hm, hbar)) = &hj {
            let comm = hm * rho - rho * hm;
            out += comm * (-I / *hbar);
        }
        out
    };
    let mut rho = start;
    for s in 1..=steps {
        for _ in 0..sub {
            let k1 = generator(&rho);
            let k2 = generator(&(&rho + &k1 * C64::new(0.5 * hstep, 0.0)));
            let k3 = generator(&(&rho + &k2 * C64::new(0.5 * hstep, 0.0)));
            let k4 = generator(&(&rho + &k3 * C64::new(hstep, 0.0)));
            rho += (k1 + k2 * C64::new(2.0, 0.0) + k3 * C64::new(2.0, 0.0) + k4) * C64::new(hstep / 6.0, 0.0);
        }
        times.push(s as f64 * dt);
        states.push(DensityMatrix::from_matrix_unchecked(a.matrix_from_joint(&rho)));
    }
    Ok(DensitySeries { times, states })
}

/// Monte Carlo estimate `(1/N) sum |psi><psi|` at time `t`.
pub fn ensemble_density_matrix(trajectories: &[TrajectoryRecord], t: f64) -> Result<DensityMatrix> {
    Ok(ensemble_density_with_error(trajectories, t)?.0)
}

/// Ensemble density matrix together with the standard error of each entry.
pub fn ensemble_density_with_error(trajectories: &[TrajectoryRecord], t: f64) -> Result<(DensityMatrix, Vec<f64>)> {
    if trajectories.is_empty() {
        return Err(Error::param("trajectories", "must not be empty"));
    }
    let mut sum: Option<CMatrix> = None;
    let mut sum_sq: Vec<f64> = Vec::new();
    for (i, rec) in trajectories.iter().enumerate() {
        let psi = rec
            .sample_index(t)
            .and_then(|j| rec.states.as_ref().and_then(|s| s.get(j)))
            .ok_or(Error::MissingSnapshot { trajectory: i, time: t })?;
        let p = psi.projector();
        let acc = sum.get_or_insert_with(|| CMatrix::zeros(p.nrows(), p.ncols()));
        if acc.nrows() != p.nrows() {
            return Err(Error::DimensionMismatch { expected: acc.nrows(), found: p.nrows() });
        }
        if sum_sq.is_empty() {
            sum_sq = vec![0.0; p.len()];
        }
        *acc += &p;
        for (s, z) in sum_sq.iter_mut().zip(p.iter()) {
            *s += z.norm_sqr();
        }
    }
    let n = trajectories.len() as f64;
    let mean = sum.expect("non-empty") / C64::new(n, 0.0);
    let se = mean
        .iter()
        .zip(&sum_sq)
        .map(|(m, s)| {
            if n < 2.0 {
                0.0
            } else {
                ((s / n - m.norm_sqr()).max(0.0) * n / (n - 1.0) / n).sqrt()
            }
        })
        .collect();
    Ok((DensityMatrix::from_matrix_unchecked(mean), se))
}

/// Error bar for the trace norm of a difference of two estimates with
/// entrywise standard errors `se_a`, `se_b`: `sqrt(d)` times the Frobenius error.
pub fn trace_norm_error(dim: usize, se_a: &[f64], se_b: &[f64]) -> f64 {
    let frob: f64 = se_a.iter().zip(se_b).map(|(a, b)| a * a + b * b).sum();
    (dim as f64).sqrt() * frob.sqrt()
}

/// Error bar for the trace distance between an estimate and an exact matrix.
pub fn trace_norm_error_one(dim: usize, se: &[f64]) -> f64 {
    (dim as f64).sqrt() * se.iter().map(|s| s * s).sum::<f64>().sqrt()
}

/// Per-time ensemble averages.
#[derive(Debug, Clone)]
pub struct EnsembleStats {
    pub times: Vec<f64>,
    pub mean_weights: Vec<Vec<f64>>,
    pub weight_errors: Vec<Vec<f64>>,
    pub rho_series: Option<Vec<DensityMatrix>>,
    pub trajectory_count: usize,
}

pub fn ensemble_stats(trajectories: &[TrajectoryRecord]) -> Result<EnsembleStats> {
    let first = trajectories.first().ok_or_else(|| Error::param("trajectories", "must not be empty"))?;
    let times = first.sample_times.clone();
    let d = first.born_weights.first().map(Vec::len).unwrap_or(0);
    let mut moments = vec![vec![Moments::default(); d]; times.len()];
    for rec in trajectories {
        if rec.sample_times.len() != times.len() {
            return Err(Error::DimensionMismatch { expected: times.len(), found: rec.sample_times.len() });
        }
        for (row, w) in moments.iter_mut().zip(&rec.born_weights) {
            for (m, x) in row.iter_mut().zip(w) {
                m.push(*x);
            }
        }
    }
    let mean_weights = moments.iter().map(|r| r.iter().map(Moments::mean).collect()).collect();
    let weight_errors = moments.iter().map(|r| r.iter().map(Moments::std_error).collect()).collect();
    let rho_series = if trajectories.iter().all(|r| r.states.is_some()) {
        Some(times.iter().map(|&t| ensemble_density_matrix(trajectories, t)).collect::<Result<Vec<_>>>()?)
    } else {
        None
    };
    Ok(EnsembleStats { times, mean_weights, weight_errors, rho_series, trajectory_count: trajectories.len() })
}

/// Scenario for [`convergence_sweep`].
#[derive(Debug, Clone)]
pub struct SweepScenario<'a> {
    pub quantities: &'a QuantitySet,
    pub hamiltonian: Option<&'a Hamiltonian>,
    pub psi0: StateVector,
    pub probe_time: f64,
    /// Monte Carlo ensemble size per engine; 0 skips the Monte Carlo column.
    pub trajectories: usize,
    pub seed: u64,
    pub workers: Option<usize>,
    pub schedule: Schedule,
    /// Step of the continuous engine.
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub mu: f64,
    pub beta: f64,
    /// Trace distance between the two master-equation oracles at the probe time.
    pub deterministic_distance: f64,
    pub monte_carlo_distance: Option<f64>,
    pub monte_carlo_error: Option<f64>,
}

/// For each frequency, `beta = 2 gamma / mu`; compares both processes at the probe time.
pub fn convergence_sweep(scenario: &SweepScenario<'_>, gamma: f64, mus: &[f64]) -> Result<Vec<SweepRow>> {
    positive("gamma", gamma)?;
    positive("probe_time", scenario.probe_time)?;
    let a = scenario.quantities;
    let h = scenario.hamiltonian;
    let t = scenario.probe_time;
    let rho0 = DensityMatrix::pure(&scenario.psi0);
    let oracle_dt = t;
    let lindblad = lindblad_evolution(&rho0, a, h, gamma, t, oracle_dt)?;

    let continuous = if scenario.trajectories > 0 {
        let cfg = ContinuousConfig::new(gamma, scenario.dt.min(t), t, t)?.with_states(true);
        let engine = ContinuousEngine::new(a, h, &cfg)?;
        let runs = run_indexed(scenario.trajectories, scenario.seed ^ 0xc0, scenario.workers, |_, seed| {
            engine.run(&scenario.psi0, seed, &mut rng_from_seed(seed))
        })?;
        Some(ensemble_density_with_error(&runs, t)?)
    } else {
        None
    };

    let mut rows = Vec::with_capacity(mus.len());
    for (i, &mu) in mus.iter().enumerate() {
        positive("mu", mu)?;
        let beta = 2.0 * gamma / mu;
        let master = hitting_master_evolution(&rho0, a, h, beta, mu, t, oracle_dt)?;
        let deterministic_distance = master.last().trace_distance(lindblad.last());
        let (mc, err) = match &continuous {
            Some((rho_c, se_c)) => {
                let cfg = HittingConfig::new(beta, mu, scenario.schedule, t, t)?.with_states(true);
                let engine = HittingEngine::new(a, h, &cfg)?;
                let runs = run_indexed(scenario.trajectories, scenario.seed.wrapping_add(i as u64 + 1), scenario.workers, |_, seed| {
                    engine.run(&scenario.psi0, seed, &mut rng_from_seed(seed))
                })?;
                let (rho_h, se_h) = ensemble_density_with_error(&runs, t)?;
                (Some(rho_h.trace_distance(rho_c)), Some(trace_norm_error(a.dim(), &se_h, se_c)))
            }
            None => (None, None),
        };
        rows.push(SweepRow { mu, beta, deterministic_distance, monte_carlo_distance: mc, monte_carlo_error: err });
    }
    Ok(rows)
}

/// Largest `|P(a2 | a1) - P(a2)|` over all pairs of grid centres, where `P(a2 | a1)` is the
/// density of a second hitting at `a2` after a first one at `a1`.
pub fn factorization_check(psi: &StateVector, a: &QuantitySet, beta: f64, grid: &[Vec<f64>]) -> Result<f64> {
    positive("beta", beta)?;
    let unconditional = grid.iter().map(|c| hitting_density(psi, a, c, beta)).collect::<Result<Vec<_>>>()?;
    let mut worst = 0.0f64;
    for a1 in grid {
        let (after, _) = crate::hitting::apply_hitting(psi, a, a1, beta)?;
        for (a2, p2) in grid.iter().zip(&unconditional) {
            let cond = hitting_density(&after, a, a2, beta)?;
            worst = worst.max((cond - p2).abs());
        }
    }
    Ok(worst)
}

/// Moments of the window increments `dB = sqrt(2 beta / mu) sum_i (a_i - <A>_i)`, where
/// `<A>_i` is the expectation just before hitting `i`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DbReport {
    pub windows: usize,
    pub window: f64,
    pub mean_events_per_window: f64,
    pub mean: Vec<f64>,
    pub mean_se: Vec<f64>,
    pub variance: Vec<f64>,
    pub variance_se: Vec<f64>,
    /// `E[dB_p^2] = dt + (2 beta/mu) E[sum_i var_i(A_p)]`, from the recorded pre-hitting variances.
    pub predicted_variance: Vec<f64>,
    /// Row-major `E[dB_p dB_q]`.
    pub covariance: Vec<f64>,
    pub covariance_se: Vec<f64>,
    /// Row-major `(2 beta/mu) E[sum_i cov_i(A_p, A_q)]` (diagonal excludes the `dt` term).
    pub predicted_covariance: Vec<f64>,
    pub jarque_bera: Vec<f64>,
    pub normality_p: Vec<f64>,
}

/// Builds window increments from recorded hittings of a single channel over all `K`
/// quantities. Windows tile `[0, t_end)` of every trajectory.
pub fn db_statistics(trajectories: &[TrajectoryRecord], beta: f64, mu: f64, window: f64) -> Result<DbReport> {
    positive("beta", beta)?;
    positive("mu", mu)?;
    positive("window", window)?;
    let k = trajectories
        .iter()
        .flat_map(|r| r.events.first())
        .map(|e| e.centre.len())
        .next()
        .ok_or(Error::InsufficientEvents { mean_per_window: 0.0, required: MIN_EVENTS_PER_WINDOW })?;
    let scale = (2.0 * beta / mu).sqrt();
    let mut samples: Vec<Vec<f64>> = Vec::new();
    let mut predicted = vec![0.0; k * k];
    let mut events = 0usize;
    for rec in trajectories {
        let t_end = rec.sample_times.last().copied().unwrap_or(0.0);
        let n_windows = (t_end / window + 1e-9).floor() as usize;
        let start = samples.len();
        samples.resize(start + n_windows, vec![0.0; k]);
        for e in &rec.events {
            if e.centre.len() != k {
                return Err(Error::DimensionMismatch { expected: k, found: e.centre.len() });
            }
            let j = (e.time / window).floor() as usize;
            if j >= n_windows {
                continue;
            }
            events += 1;
            let row = &mut samples[start + j];
            for p in 0..k {
                row[p] += scale * (e.centre[p] - e.prior_mean[p]);
            }
            for (acc, c) in predicted.iter_mut().zip(&e.prior_covariance) {
                *acc += c;
            }
        }
    }
    let windows = samples.len();
    if windows == 0 {
        return Err(Error::InsufficientEvents { mean_per_window: 0.0, required: MIN_EVENTS_PER_WINDOW });
    }
    let mean_events = events as f64 / windows as f64;
    if mean_events < MIN_EVENTS_PER_WINDOW as f64 {
        return Err(Error::InsufficientEvents { mean_per_window: mean_events, required: MIN_EVENTS_PER_WINDOW });
    }
    let n = windows as f64;
    let predicted_covariance: Vec<f64> = predicted.iter().map(|c| scale * scale * c / n).collect();

    let mut mean = Vec::with_capacity(k);
    let mut mean_se = Vec::with_capacity(k);
    let mut variance = Vec::with_capacity(k);
    let mut variance_se = Vec::with_capacity(k);
    let mut predicted_variance = Vec::with_capacity(k);
    let mut jarque_bera = Vec::with_capacity(k);
    let mut normality_p = Vec::with_capacity(k);
    for p in 0..k {
        let m: Moments = samples.iter().map(|r| r[p]).collect();
        mean.push(m.mean());
        mean_se.push(m.std_error());
        let sq: Moments = samples.iter().map(|r| r[p] * r[p]).collect();
        variance.push(sq.mean());
        variance_se.push(sq.std_error());
        predicted_variance.push(window + predicted_covariance[p * k + p]);
        let jb = jarque_bera_statistic(samples.iter().map(|r| r[p]));
        jarque_bera.push(jb);
        normality_p.push((-jb / 2.0).exp());
    }
    let mut covariance = vec![0.0; k * k];
    let mut covariance_se = vec![0.0; k * k];
    for p in 0..k {
        for q in 0..k {
            let m: Moments = samples.iter().map(|r| r[p] * r[q]).collect();
            covariance[p * k + q] = m.mean();
            covariance_se[p * k + q] = m.std_error();
        }
    }
    Ok(DbReport {
        windows,
        window,
        mean_events_per_window: mean_events,
        mean,
        mean_se,
        variance,
        variance_se,
        predicted_variance,
        covariance,
        covariance_se,
        predicted_covariance,
        jarque_bera,
        normality_p,
    })
}

/// Jarque–Bera statistic `n/6 (S^2 + (K - 3)^2 / 4)`; asymptotically chi-squared with 2 dof.
pub fn jarque_bera_statistic(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m: Moments = xs.clone().collect();
    let n = m.count as f64;
    if m.count < 3 {
        return 0.0;
    }
    let mu = m.mean();
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for x in xs {
        let d = x - mu;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    if m2 == 0.0 {
        return 0.0;
    }
    let skew = m3 / m2.powf(1.5);
    let kurt = m4 / (m2 * m2);
    n / 6.0 * (skew * skew + (kurt - 3.0).powi(2) / 4.0)
}

/// Wilson score interval for `successes` out of `n` at `z` standard deviations.
pub fn wilson_interval(successes: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let centre = (p + z2 / (2.0 * nf)) / denom;
    let half = z / denom * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutcomeFrequency {
    /// Joint eigenvalue row shared by the outcome class.
    pub eigenvalues: Vec<f64>,
    /// Joint eigenvectors in the class.
    pub members: Vec<usize>,
    /// Mean initial Born weight of the class across trajectories.
    pub born_weight: f64,
    pub count: usize,
    pub frequency: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CollapseReport {
    pub threshold: f64,
    pub z: f64,
    pub total: usize,
    pub resolved: usize,
    pub unresolved: usize,
    pub unresolved_fraction: f64,
    /// Frequencies among resolved trajectories.
    pub outcomes: Vec<OutcomeFrequency>,
}

/// Terminal outcome frequencies. Joint eigenvectors sharing an eigenvalue row are one
/// outcome; a trajectory is resolved when its largest class weight exceeds `threshold`.
pub fn collapse_statistics(trajectories: &[TrajectoryRecord], a: &QuantitySet, threshold: f64, z: f64) -> Result<CollapseReport> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::param("threshold", "must lie in (0, 1)"));
    }
    let classes = a.outcome_classes(1e-9);
    let nclass = classes.iter().copied().max().map_or(0, |m| m + 1);
    let mut counts = vec![0usize; nclass];
    let mut initial = vec![0.0; nclass];
    let mut unresolved = 0usize;
    let mut class_w = vec![0.0; nclass];
    for rec in trajectories {
        let w = rec.final_weights();
        a.check_dim(w.len())?;
        if let Some(w0) = rec.born_weights.first() {
            for (k, x) in w0.iter().enumerate() {
                initial[classes[k]] += x;
            }
        }
        class_w.iter_mut().for_each(|x| *x = 0.0);
        for (k, x) in w.iter().enumerate() {
            class_w[classes[k]] += x;
        }
        let (best, wmax) = class_w.iter().enumerate().fold((0, f64::NEG_INFINITY), |b, (i, &x)| if x > b.1 { (i, x) } else { b });
        if wmax > threshold {
            counts[best] += 1;
        } else {
            unresolved += 1;
        }
    }
    let total = trajectories.len();
    let resolved = total - unresolved;
    let outcomes = (0..nclass)
        .map(|c| {
            let members: Vec<usize> = (0..a.dim()).filter(|&k| classes[k] == c).collect();
            let (lo, hi) = wilson_interval(counts[c], resolved, z);
            OutcomeFrequency {
                eigenvalues: a.eigenvalue_row(members[0]).to_vec(),
                members,
                born_weight: if total > 0 { initial[c] / total as f64 } else { 0.0 },
                count: counts[c],
                frequency: if resolved > 0 { counts[c] as f64 / resolved as f64 } else { 0.0 },
                wilson_low: lo,
                wilson_high: hi,
            }
        })
        .collect();
    Ok(CollapseReport {
        threshold,
        z,
        total,
        resolved,
        unresolved,
        unresolved_fraction: if total > 0 { unresolved as f64 / total as f64 } else { 0.0 },
        outcomes,
    })
}

/// Off-diagonal element `rho_kl` of `rho` in the joint eigenbasis.
pub fn joint_coherence(rho: &DensityMatrix, a: &QuantitySet, k: usize, l: usize) -> Result<C64> {
    let j = rho.in_joint_basis(a)?;
    if k >= a.dim() || l >= a.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), found: k.max(l) + 1 });
    }
    Ok(j[(k, l)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{ONE, ZERO};
    use crate::hitting::sharpening_operator;
    use approx::assert_abs_diff_eq;

    fn sigma_z_set() -> QuantitySet {
        QuantitySet::from_diagonals(&[vec![1.0, -1.0]]).unwrap()
    }

    fn plus_rho() -> DensityMatrix {
        DensityMatrix::pure(&StateVector::from_real(&[1.0, 1.0]).unwrap())
    }

    fn sigma_x() -> Hamiltonian {
        Hamiltonian::new(CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO])).unwrap()
    }

    #[test]
    fn density_matrix_validation() {
        assert!(DensityMatrix::new(CMatrix::identity(2, 2)).is_err());
        assert!(DensityMatrix::new(CMatrix::identity(2, 2) * C64::new(0.5, 0.0)).is_ok());
        let neg = CMatrix::from_row_slice(2, 2, &[C64::new(1.2, 0.0), ZERO, ZERO, C64::new(-0.2, 0.0)]);
        assert!(DensityMatrix::new(neg).is_err());
        let nonherm = CMatrix::from_row_slice(2, 2, &[C64::new(0.5, 0.0), ONE, ZERO, C64::new(0.5, 0.0)]);
        assert!(DensityMatrix::new(nonherm).is_err());
    }

    #[test]
    fn hitting_map_examples() {
        let out = exact_hitting_map(&plus_rho(), &sigma_z_set(), 0.1).unwrap();
        assert_abs_diff_eq!(out.matrix()[(0, 1)].re, 0.5 * (-0.1f64).exp(), epsilon = 1e-14);
        assert_abs_diff_eq!(out.matrix()[(0, 0)].re, 0.5, epsilon = 1e-15);
        let diag = DensityMatrix::new(CMatrix::from_row_slice(2, 2, &[C64::new(0.3, 0.0), ZERO, ZERO, C64::new(0.7, 0.0)])).unwrap();
        assert_eq!(exact_hitting_map(&diag, &sigma_z_set(), 3.0).unwrap(), diag);
        let tiny = exact_hitting_map(&plus_rho(), &sigma_z_set(), 1e-12).unwrap();
        assert!(tiny.trace_distance(&plus_rho()) < 1e-11);
    }

    /// Independent check of the map: midpoint quadrature of `int da S_a rho S_a` with
    /// dense sharpening operators.
    #[test]
    fn hitting_map_matches_quadrature() {
        let a = sigma_z_set();
        let rho = DensityMatrix::pure(&StateVector::new(vec![C64::new(0.6, 0.0), C64::new(0.0, 0.8)]).unwrap());
        for beta in [0.1f64, 0.5, 2.0] {
            let width = 1.0 + 12.0 / beta.sqrt();
            let n = 8000;
            let h = 2.0 * width / n as f64;
            let mut acc = CMatrix::zeros(2, 2);
            for i in 0..n {
                let x = -width + (i as f64 + 0.5) * h;
                let s = sharpening_operator(&a, &[x], beta).unwrap();
                acc += &s * rho.matrix() * &s * C64::new(h, 0.0);
            }
            let exact = exact_hitting_map(&rho, &a, beta).unwrap();
            let diff = (acc - exact.matrix()).iter().fold(0.0f64, |m, z| m.max(z.norm()));
            assert!(diff < 1e-9, "beta {beta}: {diff:e}");
        }
    }

    #[test]
    fn master_closed_forms() {
        let a = sigma_z_set();
        let s = hitting_master_evolution(&plus_rho(), &a, None, 0.1, 10.0, 1.0, 0.5).unwrap();
        assert_eq!(s.times, vec![0.0, 0.5, 1.0]);
        let factor = 2.0 * s.last().matrix()[(0, 1)].re;
        assert_abs_diff_eq!(factor, (-10.0 * (1.0 - (-0.1f64).exp())).exp(), epsilon = 1e-14);
        assert_abs_diff_eq!(factor, 0.386, epsilon = 5e-4);
        let frozen = hitting_master_evolution(&plus_rho(), &a, None, 0.1, 0.0, 1.0, 0.5).unwrap();
        assert_eq!(frozen.last(), &plus_rho());
        let l = lindblad_evolution(&plus_rho(), &a, None, 0.5, 1.0, 0.25).unwrap();
        assert_abs_diff_eq!(2.0 * l.last().matrix()[(0, 1)].re, (-1.0f64).exp(), epsilon = 1e-14);
    }

    #[test]
    fn rk4_agrees_with_closed_form() {
        let a = QuantitySet::from_diagonals(&[vec![0.0, 1.0, 3.0]]).unwrap();
        let psi = StateVector::from_real(&[1.0, 2.0, 2.0]).unwrap();
        let rho = DensityMatrix::pure(&psi);
        let rates = hitting_rates(&a, 0.4, 20.0);
        let rk = integrate_dephasing(&rho, &a, None, &rates, 2.0, 0.5).unwrap();
        let exact = hitting_master_evolution(&rho, &a, None, 0.4, 20.0, 2.0, 0.5).unwrap();
        for (x, y) in rk.states.iter().zip(&exact.states) {
            assert!(x.trace_distance(y) < 1e-8);
        }
    }

    #[test]
    fn von_neumann_limit_matches_unitary() {
        let a = sigma_z_set();
        let h = sigma_x();
        let rho = DensityMatrix::pure(&StateVector::new(vec![C64::new(0.6, 0.0), C64::new(0.0, 0.8)]).unwrap());
        let s = lindblad_evolution(&rho, &a, Some(&h), 0.0, 2.0, 0.5).unwrap();
        let prop = crate::hilbert::Propagator::new(h.matrix(), 1.0);
        for (t, r) in s.times.iter().zip(&s.states) {
            let u = prop.unitary(*t);
            let exact = &u * rho.matrix() * u.adjoint();
            let diff = (r.matrix() - exact).iter().fold(0.0f64, |m, z| m.max(z.norm()));
            assert!(diff < 1e-8, "t {t}: {diff:e}");
        }
    }

    #[test]
    fn lindblad_with_hamiltonian_keeps_trace_and_positivity() {
        let a = QuantitySet::from_diagonals(&[vec![1.0, 0.0, -1.0]]).unwrap();
        let h = Hamiltonian::new(CMatrix::from_fn(3, 3, |i, j| if i + 1 == j || j + 1 == i { ONE } else { ZERO })).unwrap();
        let rho = DensityMatrix::pure(&StateVector::from_real(&[1.0, 0.0, 1.0]).unwrap());
        let s = lindblad_evolution(&rho, &a, Some(&h), 0.7, 5.0, 0.1).unwrap();
        for r in &s.states {
            assert!((r.trace().re - 1.0).abs() < 1e-9);
            assert!(r.min_eigenvalue() > -1e-8);
        }
    }

    #[test]
    fn ensemble_density_of_identical_records() {
        let a = sigma_z_set();
        let psi = StateVector::from_real(&[1.0, 1.0]).unwrap();
        let cfg = HittingConfig::new(0.1, 1.0, Schedule::PoissonTimes, 1.0, 0.5).unwrap().with_states(true);
        let rec = HittingEngine::new(&a, None, &cfg).unwrap().run(&psi, 0, &mut rng_from_seed(1)).unwrap();
        let rho = ensemble_density_matrix(&[rec.clone(), rec.clone()], 0.0).unwrap();
        assert!(rho.trace_distance(&DensityMatrix::pure(&psi)) < 1e-14);
        let mut missing = rec.clone();
        missing.states = None;
        assert_eq!(
            ensemble_density_matrix(&[rec, missing], 1.0).unwrap_err(),
            Error::MissingSnapshot { trajectory: 1, time: 1.0 }
        );
    }

    #[test]
    fn factorization_examples() {
        let a = sigma_z_set();
        let grid: Vec<Vec<f64>> = (0..21).map(|i| vec![-5.0 + 0.5 * i as f64]).collect();
        let eig = StateVector::basis(2, 0).unwrap();
        assert!(factorization_check(&eig, &a, 1.0, &grid).unwrap() < 1e-15);
        let plus = StateVector::from_real(&[1.0, 1.0]).unwrap();
        let big = factorization_check(&plus, &a, 1.0, &grid).unwrap();
        let small = factorization_check(&plus, &a, 0.01, &grid).unwrap();
        assert!(small >= 0.0 && big / small > 50.0, "{big} {small}");
    }

    #[test]
    fn wilson_interval_contains_estimate() {
        let (lo, hi) = wilson_interval(50, 100, 3.0);
        assert!(lo < 0.5 && hi > 0.5);
        assert_abs_diff_eq!(0.5 - lo, hi - 0.5, epsilon = 1e-12);
        assert_eq!(wilson_interval(0, 0, 3.0), (0.0, 1.0));
        let (lo, hi) = wilson_interval(0, 100, 3.0);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.1);
    }

    #[test]
    fn jarque_bera_of_gaussian_samples_is_small() {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = rng_from_seed(5);
        let xs: Vec<f64> = (0..20000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let jb = jarque_bera_statistic(xs.iter().copied());
        assert!(jb < 14.0, "{jb}");
        let skewed: Vec<f64> = xs.iter().map(|x: &f64| x.exp()).collect();
        assert!(jarque_bera_statistic(skewed.iter().copied()) > 1000.0);
    }

    #[test]
    fn collapse_statistics_of_eigenstate() {
        let a = sigma_z_set();
        let psi = StateVector::basis(2, 1).unwrap();
        let cfg = HittingConfig::new(1.0, 1.0, Schedule::PoissonTimes, 1.0, 1.0).unwrap();
        let engine = HittingEngine::new(&a, None, &cfg).unwrap();
        let runs: Vec<_> = (0..20).map(|s| engine.run(&psi, s, &mut rng_from_seed(s)).unwrap()).collect();
        let report = collapse_statistics(&runs, &a, UNRESOLVED_THRESHOLD, 3.0).unwrap();
        assert_eq!(report.unresolved, 0);
        assert_eq!(report.outcomes[1].count, 20);
        assert_eq!(report.outcomes[1].frequency, 1.0);
        assert_eq!(report.outcomes[1].eigenvalues, vec![-1.0]);
    }

    #[test]
    fn degenerate_rows_form_one_outcome() {
        let a = QuantitySet::from_diagonals(&[vec![1.0, 1.0, 2.0]]).unwrap();
        let psi = StateVector::from_real(&[1.0, 1.0, 0.0]).unwrap();
        let cfg = HittingConfig::new(1.0, 1.0, Schedule::PoissonTimes, 1.0, 1.0).unwrap();
        let rec = HittingEngine::new(&a, None, &cfg).unwrap().run(&psi, 0, &mut rng_from_seed(0)).unwrap();
        let report = collapse_statistics(&[rec], &a, UNRESOLVED_THRESHOLD, 3.0).unwrap();
        assert_eq!(report.outcomes.len(), 2);
        assert_eq!(report.outcomes[0].members, vec![0, 1]);
        assert_eq!(report.outcomes[0].count, 1);
    }

    #[test]
    fn db_statistics_requires_enough_events() {
        let a = sigma_z_set();
        let psi = StateVector::from_real(&[1.0, 1.0]).unwrap();
        let cfg = HittingConfig::new(0.001, 10.0, Schedule::PoissonTimes, 10.0, 10.0).unwrap().with_events(true);
        let engine = HittingEngine::new(&a, None, &cfg).unwrap();
        let runs: Vec<_> = (0..5).map(|s| engine.run(&psi, s, &mut rng_from_seed(s)).unwrap()).collect();
        assert!(matches!(db_statistics(&runs, 0.001, 10.0, 1.0), Err(Error::InsufficientEvents { .. })));
        let report = db_statistics(&runs, 0.001, 10.0, 5.0).unwrap();
        assert_eq!(report.windows, 10);
        assert!(report.mean_events_per_window >= 30.0);
    }
}
