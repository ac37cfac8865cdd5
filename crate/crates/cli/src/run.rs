//! Ensemble execution and the reductions written to the output files.

use std::fmt;

use collapse_core::continuous::ContinuousEngine;
use collapse_core::ensemble::{derive_seed, rng_from_seed, run_indexed};
use collapse_core::equivalence::{
    channel_hitting_rates, collapse_statistics, convergence_sweep, db_statistics, dephasing_series,
    ensemble_density_with_error, ensemble_stats, hitting_rates, trace_norm_error_one, weighted_lindblad_rates,
    CollapseReport, DbReport, DensityMatrix, SweepScenario, UNRESOLVED_THRESHOLD,
};
use collapse_core::hitting::HittingEngine;
use collapse_core::trajectory::TrajectoryRecord;
use collapse_core::Error;
use serde::Serialize;

use crate::config::{ConfigError, EngineChoice, Scenario, ScenarioKind};

/// Thresholds reported next to the default one.
pub const SENSITIVITY_THRESHOLDS: [f64; 3] = [0.99, 0.999, 0.9999];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Hitting,
    Continuous,
}

impl Engine {
    pub fn name(self) -> &'static str {
        match self {
            Engine::Hitting => "hitting",
            Engine::Continuous => "continuous",
        }
    }

    /// Master seed of this engine's ensemble, derived from the scenario seed.
    pub fn master_seed(self, seed: u64) -> u64 {
        match self {
            Engine::Hitting => derive_seed(seed, u64::MAX),
            Engine::Continuous => derive_seed(seed, u64::MAX - 1),
        }
    }
}

/// A trajectory that failed, with what is needed to reproduce it.
#[derive(Debug, Clone, PartialEq)]
pub struct RunFailure {
    pub engine: Engine,
    pub trajectory: usize,
    pub seed: u64,
    pub error: Error,
}

impl fmt::Display for RunFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} trajectory {} (seed {}): {}", self.engine.name(), self.trajectory, self.seed, self.error)
    }
}

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Run(RunFailure),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Run(_) | CliError::Io(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "{e}"),
            CliError::Run(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "{e}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<RunFailure> for CliError {
    fn from(e: RunFailure) -> Self {
        CliError::Run(e)
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleRun {
    pub engine: Engine,
    pub records: Vec<TrajectoryRecord>,
}

/// Runs one engine's ensemble. States are kept when `keep_states`; hittings are recorded
/// for the first `record.event_trajectories` trajectories.
pub fn run_ensemble(scn: &Scenario, engine: Engine, workers: Option<usize>, keep_states: bool) -> Result<EnsembleRun, RunFailure> {
    let master = engine.master_seed(scn.seed);
    let setup_failure = |error: Error| RunFailure { engine, trajectory: 0, seed: derive_seed(master, 0), error };
    let results = match engine {
        Engine::Hitting => {
            let setup = scn.hitting.as_ref().expect("hitting engine configured");
            let quiet = setup.config.clone().with_states(keep_states).with_events(false);
            let loud = quiet.clone().with_events(true);
            let build = |cfg| match &setup.channels {
                Some(ch) => HittingEngine::with_channels(&scn.quantities, scn.hamiltonian.as_ref(), cfg, ch.clone()),
                None => HittingEngine::new(&scn.quantities, scn.hamiltonian.as_ref(), cfg),
            };
            let quiet = build(&quiet).map_err(setup_failure)?;
            let loud = build(&loud).map_err(setup_failure)?;
            let events_for = scn.record.event_trajectories;
            run_indexed(scn.trajectories, master, workers, |i, seed| {
                let e = if i < events_for { &loud } else { &quiet };
                Ok(e.run(&scn.psi0, seed, &mut rng_from_seed(seed)).map_err(|err| (i, seed, err)))
            })
        }
        Engine::Continuous => {
            let cfg = scn.continuous.as_ref().expect("continuous engine configured").clone().with_states(keep_states);
            let eng = ContinuousEngine::new(&scn.quantities, scn.hamiltonian.as_ref(), &cfg).map_err(setup_failure)?;
            run_indexed(scn.trajectories, master, workers, |i, seed| {
                Ok(eng.run(&scn.psi0, seed, &mut rng_from_seed(seed)).map_err(|err| (i, seed, err)))
            })
        }
    };
    let results = results.map_err(|error| RunFailure { engine, trajectory: 0, seed: master, error })?;
    let mut records = Vec::with_capacity(results.len());
    for r in results {
        match r {
            Ok(rec) => records.push(rec),
            Err((trajectory, seed, error)) => return Err(RunFailure { engine, trajectory, seed, error }),
        }
    }
    Ok(EnsembleRun { engine, records })
}

pub fn engines(scn: &Scenario) -> Vec<Engine> {
    match scn.engine {
        EngineChoice::Hitting => vec![Engine::Hitting],
        EngineChoice::Continuous => vec![Engine::Continuous],
        EngineChoice::Both => vec![Engine::Hitting, Engine::Continuous],
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ThresholdSensitivity {
    pub threshold: f64,
    pub unresolved_fraction: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Martingale {
    pub times: Vec<f64>,
    pub mean_weights: Vec<Vec<f64>>,
    pub std_errors: Vec<Vec<f64>>,
    /// Largest `|mean_w(t) - mean_w(0)| / SE(t)` over times and components.
    pub max_deviation_se: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EngineSummary {
    pub engine: Engine,
    pub trajectories: usize,
    pub collapse: CollapseReport,
    pub threshold_sensitivity: Vec<ThresholdSensitivity>,
    pub martingale: Martingale,
    pub mean_events_per_trajectory: Option<f64>,
    pub db_statistics: Option<DbReport>,
    pub db_statistics_note: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Parameters {
    pub beta: Option<f64>,
    pub mu: Option<f64>,
    pub gamma: Option<f64>,
    pub dt: Option<f64>,
    /// Factor between configured and engine accuracy/strength (`1/dx` on lattices).
    pub lattice_scale: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub scenario: String,
    pub kind: ScenarioKind,
    pub engine: EngineChoice,
    pub seed: u64,
    pub dimension: usize,
    pub quantities: usize,
    pub t_end: f64,
    pub record_interval: f64,
    pub parameters: Parameters,
    pub warnings: Vec<String>,
    pub engines: Vec<EngineSummary>,
}

pub fn summarize(scn: &Scenario, runs: &[EnsembleRun]) -> Result<Summary, RunFailure> {
    let mut engines = Vec::with_capacity(runs.len());
    for run in runs {
        let fail = |error: Error| RunFailure { engine: run.engine, trajectory: 0, seed: scn.seed, error };
        let collapse = collapse_statistics(&run.records, &scn.quantities, UNRESOLVED_THRESHOLD, 3.0).map_err(fail)?;
        let threshold_sensitivity = SENSITIVITY_THRESHOLDS
            .iter()
            .map(|&t| {
                collapse_statistics(&run.records, &scn.quantities, t, 3.0)
                    .map(|r| ThresholdSensitivity { threshold: t, unresolved_fraction: r.unresolved_fraction })
            })
            .collect::<Result<Vec<_>, _>>()
            .map_err(fail)?;
        let stats = ensemble_stats(&run.records).map_err(fail)?;
        let mut max_dev: f64 = 0.0;
        for (row, se) in stats.mean_weights.iter().zip(&stats.weight_errors) {
            for ((m, m0), s) in row.iter().zip(&stats.mean_weights[0]).zip(se) {
                if *s > 0.0 {
                    max_dev = max_dev.max((m - m0).abs() / s);
                }
            }
        }
        let martingale = Martingale {
            times: stats.times.clone(),
            mean_weights: stats.mean_weights.clone(),
            std_errors: stats.weight_errors.clone(),
            max_deviation_se: max_dev,
        };
        let (mean_events, db, note) = match (run.engine, &scn.hitting) {
            (Engine::Hitting, Some(setup)) => {
                let mean = run.records.iter().map(|r| r.total_events as f64).sum::<f64>() / run.records.len() as f64;
                let with_events: Vec<TrajectoryRecord> =
                    run.records.iter().take(scn.record.event_trajectories).cloned().collect();
                if setup.channels.is_some() {
                    (Some(mean), None, Some("dB statistics need a single hitting stream over all quantities".to_string()))
                } else {
                    // windows just long enough for 40 hittings on average
                    let window = (40.0 / setup.config.mu).min(scn.t_end);
                    match db_statistics(&with_events, setup.config.beta, setup.config.mu, window) {
                        Ok(r) => (Some(mean), Some(r), None),
                        Err(e) => (Some(mean), None, Some(e.to_string())),
                    }
                }
            }
            _ => (None, None, None),
        };
        engines.push(EngineSummary {
            engine: run.engine,
            trajectories: run.records.len(),
            collapse,
            threshold_sensitivity,
            martingale,
            mean_events_per_trajectory: mean_events,
            db_statistics: db,
            db_statistics_note: note,
        });
    }
    Ok(Summary {
        scenario: scn.name.clone(),
        kind: scn.kind,
        engine: scn.engine,
        seed: scn.seed,
        dimension: scn.quantities.dim(),
        quantities: scn.quantities.len(),
        t_end: scn.t_end,
        record_interval: scn.record_interval,
        parameters: Parameters {
            beta: scn.hitting.as_ref().map(|h| h.config.beta / scn.lattice_scale),
            mu: scn.hitting.as_ref().map(|h| h.config.mu),
            gamma: scn.continuous.as_ref().map(|c| c.gamma / scn.lattice_scale),
            dt: scn.continuous.as_ref().map(|c| c.dt),
            lattice_scale: scn.lattice_scale,
        },
        warnings: scn.warnings.clone(),
        engines,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeComparison {
    pub time: f64,
    /// Trace distance between the two Monte Carlo density matrices.
    pub distance: f64,
    pub error: f64,
    /// Trace distance between the two master-equation oracles.
    pub oracle_distance: f64,
    pub hitting_vs_oracle: f64,
    pub hitting_vs_oracle_error: f64,
    pub continuous_vs_oracle: f64,
    pub continuous_vs_oracle_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub scenario: String,
    pub trajectories: usize,
    pub probes: Vec<ProbeComparison>,
}

/// Pair rates of the hitting and continuous master equations for the scenario.
pub fn oracle_rates(scn: &Scenario) -> (Vec<f64>, Vec<f64>) {
    let a = &scn.quantities;
    let hit = match &scn.hitting {
        Some(setup) => match &setup.channels {
            Some(ch) => channel_hitting_rates(a, ch),
            None => hitting_rates(a, setup.config.beta, setup.config.mu),
        },
        None => vec![0.0; a.dim() * a.dim()],
    };
    let cont = match &scn.continuous {
        Some(cfg) => {
            let strengths = cfg.strengths.clone().unwrap_or_else(|| vec![cfg.gamma; a.len()]);
            weighted_lindblad_rates(a, &strengths)
        }
        None => vec![0.0; a.dim() * a.dim()],
    };
    (hit, cont)
}

pub fn compare(scn: &Scenario, hitting: &EnsembleRun, continuous: &EnsembleRun) -> Result<Comparison, RunFailure> {
    let fail = |error: Error| RunFailure { engine: Engine::Continuous, trajectory: 0, seed: scn.seed, error };
    let rho0 = DensityMatrix::pure(&scn.psi0);
    let (hr, cr) = oracle_rates(scn);
    let h = scn.hamiltonian.as_ref();
    let hit_oracle = dephasing_series(&rho0, &scn.quantities, h, &hr, scn.t_end, scn.record_interval).map_err(fail)?;
    let cont_oracle = dephasing_series(&rho0, &scn.quantities, h, &cr, scn.t_end, scn.record_interval).map_err(fail)?;
    let d = scn.quantities.dim();
    let mut probes = Vec::with_capacity(scn.probe_times.len());
    for &t in &scn.probe_times {
        let j = (t / scn.record_interval).round() as usize;
        let (rh, se_h) = ensemble_density_with_error(&hitting.records, t).map_err(fail)?;
        let (rc, se_c) = ensemble_density_with_error(&continuous.records, t).map_err(fail)?;
        probes.push(ProbeComparison {
            time: t,
            distance: rh.trace_distance(&rc),
            error: collapse_core::equivalence::trace_norm_error(d, &se_h, &se_c),
            oracle_distance: hit_oracle.states[j].trace_distance(&cont_oracle.states[j]),
            hitting_vs_oracle: rh.trace_distance(&hit_oracle.states[j]),
            hitting_vs_oracle_error: trace_norm_error_one(d, &se_h),
            continuous_vs_oracle: rc.trace_distance(&cont_oracle.states[j]),
            continuous_vs_oracle_error: trace_norm_error_one(d, &se_c),
        });
    }
    Ok(Comparison { scenario: scn.name.clone(), trajectories: scn.trajectories, probes })
}

/// Everything a `run` produces, before it is written out.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub runs: Vec<EnsembleRun>,
    pub summary: Summary,
    pub comparison: Option<Comparison>,
}

pub fn execute(scn: &Scenario, workers: Option<usize>) -> Result<RunOutcome, RunFailure> {
    let both = scn.engine == EngineChoice::Both;
    let runs = engines(scn)
        .into_iter()
        .map(|e| run_ensemble(scn, e, workers, both))
        .collect::<Result<Vec<_>, _>>()?;
    let summary = summarize(scn, &runs)?;
    let comparison = if both { Some(compare(scn, &runs[0], &runs[1])?) } else { None };
    Ok(RunOutcome { runs, summary, comparison })
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepEntry {
    /// Position of this value in the list as given.
    pub input_order: usize,
    pub mu: f64,
    /// Accuracy in configured units, `2 gamma / mu`.
    pub beta: f64,
    pub deterministic_distance: f64,
    pub monte_carlo_distance: Option<f64>,
    pub monte_carlo_error: Option<f64>,
}

/// Frequency sweep at fixed strength; values are sorted ascending before running.
pub fn sweep(scn: &Scenario, values: &[f64], workers: Option<usize>) -> Result<Vec<SweepEntry>, CliError> {
    if scn.engine != EngineChoice::Both {
        return Err(ConfigError::new("engine", "must be \"both\" for a sweep").into());
    }
    if scn.kind == ScenarioKind::DistinguishableParticles {
        return Err(ConfigError::new("kind", "sweeps need a single hitting stream; distinguishable-particles has one per particle").into());
    }
    if values.is_empty() {
        return Err(ConfigError::new("values", "must list at least one value").into());
    }
    for v in values {
        if !(*v > 0.0 && v.is_finite()) {
            return Err(ConfigError::new("values", "must be > 0").into());
        }
    }
    let mut order: Vec<(usize, f64)> = values.iter().copied().enumerate().collect();
    order.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let gamma = scn.continuous.as_ref().expect("both engines configured").gamma;
    let setup = scn.hitting.as_ref().expect("both engines configured");
    let probe = scn.probe_times.iter().cloned().fold(0.0, f64::max);
    let probe = if probe > 0.0 { probe } else { scn.t_end };
    let sweep_scn = SweepScenario {
        quantities: &scn.quantities,
        hamiltonian: scn.hamiltonian.as_ref(),
        psi0: scn.psi0.clone(),
        probe_time: probe,
        trajectories: scn.trajectories,
        seed: scn.seed,
        workers,
        schedule: setup.config.schedule,
        dt: scn.continuous.as_ref().map(|c| c.dt).unwrap_or(probe),
    };
    let mus: Vec<f64> = order.iter().map(|(_, v)| *v).collect();
    let rows = convergence_sweep(&sweep_scn, gamma, &mus)
        .map_err(|error| RunFailure { engine: Engine::Hitting, trajectory: 0, seed: scn.seed, error })?;
    Ok(order
        .iter()
        .zip(rows)
        .map(|((i, _), r)| SweepEntry {
            input_order: *i,
            mu: r.mu,
            beta: r.beta / scn.lattice_scale,
            deterministic_distance: r.deterministic_distance,
            monte_carlo_distance: r.monte_carlo_distance,
            monte_carlo_error: r.monte_carlo_error,
        })
        .collect())
}
