//! Scenario configuration files and their resolution into runnable scenarios.

use std::fmt;

use collapse_core::continuous::{default_dt, strength_from_hitting, ContinuousConfig, HamiltonianMode};
use collapse_core::fock::{
    build_mass_density, build_species_densities, effective_accuracy, hopping_hamiltonian,
    DistinguishableParticles, FockLattice, Species, Statistics,
};
use collapse_core::hilbert::{CMatrix, Hamiltonian, QuantitySet, StateVector, C64, ONE, ZERO};
use collapse_core::hitting::{HittingChannel, HittingConfig, Schedule};
use serde::{Deserialize, Serialize};

use crate::matrix::{quantity_set, MatrixSpec};

/// A configuration problem, naming the offending key.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError { key: key.into(), message: message.into() }
    }

    pub fn parse(message: impl Into<String>) -> Self {
        ConfigError { key: String::new(), message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.key.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{} {}", self.key, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    ExplicitMatrices,
    DistinguishableParticles,
    IdenticalParticles,
    MassDensity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EngineChoice {
    Hitting,
    Continuous,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessSpec {
    pub beta: Option<f64>,
    pub mu: Option<f64>,
    pub gamma: Option<f64>,
    #[serde(default = "default_schedule")]
    pub schedule: Schedule,
    pub dt: Option<f64>,
    #[serde(default)]
    pub hamiltonian_mode: HamiltonianMode,
}

fn default_schedule() -> Schedule {
    Schedule::PoissonTimes
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum HamiltonianSpec {
    None,
    Matrix {
        matrix: MatrixSpec,
        #[serde(default = "one")]
        hbar: f64,
    },
    /// `sigma-x`, `sigma-y`, `sigma-z` (dimension 2) or `chain` (nearest-neighbour
    /// tunnelling in any dimension), multiplied by `scale`.
    Preset {
        name: String,
        #[serde(default = "one")]
        scale: f64,
    },
    /// Lattice hopping `-J_s` per species plus on-site interaction.
    Hopping {
        hopping: Vec<f64>,
        #[serde(default)]
        onsite: f64,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Amplitudes {
    pub re: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub im: Option<Vec<f64>>,
}

/// One term of a lattice or particle-placement superposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateTerm {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub occupations: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sites: Option<Vec<usize>>,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialState {
    Amplitudes(Amplitudes),
    Terms(Vec<StateTerm>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeciesSpec {
    pub name: String,
    #[serde(default = "one")]
    pub mass: f64,
    #[serde(default = "boson")]
    pub statistics: Statistics,
    pub count: u32,
    #[serde(default)]
    pub max_occupation: Option<u32>,
}

fn boson() -> Statistics {
    Statistics::Boson
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticleSpec {
    pub name: String,
    /// Localization frequency of this particle.
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordSpec {
    /// Trajectories whose hittings go to events.csv.
    #[serde(default = "default_event_trajectories")]
    pub event_trajectories: usize,
    /// Trajectories written to trajectories.csv; `None` writes all.
    #[serde(default)]
    pub csv_trajectories: Option<usize>,
}

impl Default for RecordSpec {
    fn default() -> Self {
        RecordSpec { event_trajectories: default_event_trajectories(), csv_trajectories: None }
    }
}

fn default_event_trajectories() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub kind: ScenarioKind,
    pub engine: EngineChoice,
    pub process: ProcessSpec,
    #[serde(default)]
    pub quantities: Option<Vec<MatrixSpec>>,
    #[serde(default)]
    pub hamiltonian: Option<HamiltonianSpec>,
    pub initial_state: InitialState,
    #[serde(default)]
    pub sites: Option<usize>,
    #[serde(default)]
    pub dx: Option<f64>,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub species: Option<Vec<SpeciesSpec>>,
    #[serde(default)]
    pub particles: Option<Vec<ParticleSpec>>,
    pub t_end: f64,
    pub record_interval: f64,
    pub trajectories: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<String>,
    /// Times for compare.json; defaults to every sample time.
    #[serde(default)]
    pub probe_times: Option<Vec<f64>>,
    #[serde(default)]
    pub record: RecordSpec,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::parse(format!("invalid config: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Hitting-engine setup; `channels` is set for per-particle streams.
#[derive(Debug, Clone)]
pub struct HittingSetup {
    pub config: HittingConfig,
    pub channels: Option<Vec<HittingChannel>>,
}

/// A validated scenario, with operators built and process parameters in the units
/// the engines use.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub kind: ScenarioKind,
    pub engine: EngineChoice,
    pub quantities: QuantitySet,
    pub hamiltonian: Option<Hamiltonian>,
    pub psi0: StateVector,
    pub hitting: Option<HittingSetup>,
    pub continuous: Option<ContinuousConfig>,
    pub trajectories: usize,
    pub seed: u64,
    pub t_end: f64,
    pub record_interval: f64,
    pub probe_times: Vec<f64>,
    pub record: RecordSpec,
    pub warnings: Vec<String>,
    /// Multiplier from configured to engine accuracy and strength (`1/dx` on lattices).
    pub lattice_scale: f64,
    pub output: Option<String>,
}

fn require(value: Option<f64>, key: &str) -> Result<f64, ConfigError> {
    value.ok_or_else(|| ConfigError::new(key, "is required"))
}

fn check_positive(value: f64, key: &str) -> Result<f64, ConfigError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(ConfigError::new(key, "must be > 0"))
    }
}

fn check_finite_nonneg(value: f64, key: &str) -> Result<f64, ConfigError> {
    if value >= 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(ConfigError::new(key, "must be >= 0"))
    }
}

fn core_err(key: &str) -> impl Fn(collapse_core::Error) -> ConfigError + '_ {
    move |e| ConfigError::new(key, format!("is invalid: {e}"))
}

enum Model {
    Plain,
    Lattice(FockLattice),
    Particles(DistinguishableParticles),
}

impl ScenarioConfig {
    pub fn resolve(&self) -> Result<Scenario, ConfigError> {
        let mut warnings = Vec::new();
        let p = &self.process;
        // process parameters first, so a bad beta is reported before anything else
        if let Some(b) = p.beta {
            check_positive(b, "beta")?;
        }
        if let Some(m) = p.mu {
            check_positive(m, "mu")?;
        }
        if let Some(g) = p.gamma {
            check_positive(g, "gamma")?;
        }
        if let Some(dt) = p.dt {
            check_positive(dt, "dt")?;
        }
        check_positive(self.t_end, "t_end")?;
        check_positive(self.record_interval, "record_interval")?;
        if self.record_interval > self.t_end {
            return Err(ConfigError::new("record_interval", "must be <= t_end"));
        }
        if self.trajectories == 0 {
            return Err(ConfigError::new("trajectories", "must be >= 1"));
        }

        let (quantities, model, lattice_scale) = self.build_quantities()?;
        let psi0 = self.build_state(&quantities, &model)?;
        let hamiltonian = self.build_hamiltonian(&quantities, &model)?;

        let wants_hitting = matches!(self.engine, EngineChoice::Hitting | EngineChoice::Both);
        let wants_continuous = matches!(self.engine, EngineChoice::Continuous | EngineChoice::Both);

        let hitting = if wants_hitting {
            let (beta, mu, channels) = match &model {
                Model::Particles(parts) => {
                    // accuracy alpha and per-particle frequencies come from the particle list
                    if p.beta.is_some() || p.mu.is_some() {
                        warnings.push("process.beta and process.mu are ignored for distinguishable particles; alpha and particles[].lambda set the hittings".into());
                    }
                    let mu_max = parts.lambdas.iter().cloned().fold(0.0, f64::max);
                    (parts.alpha, mu_max, Some(parts.channels()))
                }
                _ => {
                    let beta = require(p.beta, "beta")?;
                    let mu = require(p.mu, "mu")?;
                    (beta * lattice_scale, mu, None)
                }
            };
            let config = HittingConfig::new(beta, mu, p.schedule, self.t_end, self.record_interval)
                .map_err(|e| ConfigError::new("process", e.to_string()))?;
            Some(HittingSetup { config, channels })
        } else {
            None
        };

        let continuous = if wants_continuous {
            let (gamma, strengths) = match &model {
                Model::Particles(parts) => {
                    if p.gamma.is_some() {
                        warnings.push("process.gamma is ignored for distinguishable particles; gamma_l = alpha * lambda_l / 2".into());
                    }
                    let s = parts.strengths();
                    (s.iter().cloned().fold(0.0, f64::max), Some(s))
                }
                _ => {
                    let derived = match (p.beta, p.mu) {
                        (Some(b), Some(m)) => Some(strength_from_hitting(b, m)),
                        _ => None,
                    };
                    let gamma = match (p.gamma, derived) {
                        (Some(g), Some(d)) if self.engine == EngineChoice::Both => {
                            if (g - d).abs() > 1e-12 * d.abs() {
                                warnings.push(format!(
                                    "gamma = {g} overrides beta*mu/2 = {d}; the two engines are no longer matched"
                                ));
                            }
                            g
                        }
                        (Some(g), _) => g,
                        (None, Some(d)) => d,
                        (None, None) => return Err(ConfigError::new("gamma", "is required (or give beta and mu)")),
                    };
                    (gamma * lattice_scale, None)
                }
            };
            let dt = match p.dt {
                Some(dt) => dt,
                None => {
                    let auto = strengths
                        .as_ref()
                        .map(|s| {
                            // per-quantity rule with the largest strength
                            default_dt(s.iter().cloned().fold(0.0, f64::max), &quantities)
                        })
                        .unwrap_or_else(|| default_dt(gamma, &quantities));
                    auto.min(self.record_interval)
                }
            };
            if dt > self.record_interval {
                return Err(ConfigError::new("dt", "must be <= record_interval"));
            }
            let ratio = self.record_interval / dt;
            if (ratio - ratio.round()).abs() > 1e-6 * ratio {
                return Err(ConfigError::new("dt", "must divide record_interval"));
            }
            let mut cfg = ContinuousConfig::new(gamma, dt, self.t_end, self.record_interval)
                .map_err(|e| ConfigError::new("process", e.to_string()))?
                .with_mode(p.hamiltonian_mode);
            if let Some(s) = strengths {
                cfg = cfg.with_strengths(s);
            }
            Some(cfg)
        } else {
            None
        };

        let samples = (self.t_end / self.record_interval + 1e-9).floor() as usize;
        let probe_times = match &self.probe_times {
            Some(times) => {
                for (i, &t) in times.iter().enumerate() {
                    if !(t >= 0.0 && t <= self.t_end * (1.0 + 1e-12)) {
                        return Err(ConfigError::new(format!("probe_times[{i}]"), "must lie in [0, t_end]"));
                    }
                    let r = t / self.record_interval;
                    if (r - r.round()).abs() > 1e-6 {
                        return Err(ConfigError::new(format!("probe_times[{i}]"), "must be a multiple of record_interval"));
                    }
                }
                times.clone()
            }
            None => (0..=samples).map(|j| j as f64 * self.record_interval).collect(),
        };

        Ok(Scenario {
            name: self.name.clone().unwrap_or_else(|| "scenario".into()),
            kind: self.kind,
            engine: self.engine,
            quantities,
            hamiltonian,
            psi0,
            hitting,
            continuous,
            trajectories: self.trajectories,
            seed: self.seed,
            t_end: self.t_end,
            record_interval: self.record_interval,
            probe_times,
            record: self.record.clone(),
            warnings,
            lattice_scale,
            output: self.output.clone(),
        })
    }

    fn lattice(&self) -> Result<FockLattice, ConfigError> {
        let sites = self.sites.ok_or_else(|| ConfigError::new("sites", "is required"))?;
        if sites == 0 {
            return Err(ConfigError::new("sites", "must be >= 1"));
        }
        let dx = check_positive(self.dx.unwrap_or(1.0), "dx")?;
        let specs = self.species.as_ref().ok_or_else(|| ConfigError::new("species", "is required"))?;
        if specs.is_empty() {
            return Err(ConfigError::new("species", "must list at least one species"));
        }
        let species = specs
            .iter()
            .enumerate()
            .map(|(i, s)| {
                check_positive(s.mass, &format!("species[{i}].mass"))?;
                let max_occupation = match s.statistics {
                    Statistics::Fermion => 1,
                    Statistics::Boson => s.max_occupation.unwrap_or(s.count),
                };
                Ok(Species { name: s.name.clone(), mass: s.mass, statistics: s.statistics, count: Some(s.count), max_occupation })
            })
            .collect::<Result<Vec<_>, ConfigError>>()?;
        FockLattice::new(sites, dx, species).map_err(core_err("species"))
    }

    fn build_quantities(&self) -> Result<(QuantitySet, Model, f64), ConfigError> {
        match self.kind {
            ScenarioKind::ExplicitMatrices => {
                let specs = self.quantities.as_ref().ok_or_else(|| ConfigError::new("quantities", "is required"))?;
                Ok((quantity_set(specs)?, Model::Plain, 1.0))
            }
            ScenarioKind::IdenticalParticles | ScenarioKind::MassDensity => {
                let alpha = check_positive(require(self.alpha, "alpha")?, "alpha")?;
                let lattice = self.lattice()?;
                if lattice.dim() < 2 {
                    return Err(ConfigError::new("species", "leave a single occupation configuration; nothing can evolve"));
                }
                let q = if self.kind == ScenarioKind::MassDensity {
                    build_mass_density(&lattice, alpha)
                } else {
                    build_species_densities(&lattice, alpha)
                }
                .map_err(core_err("alpha"))?;
                let scale = effective_accuracy(1.0, lattice.dx());
                Ok((q, Model::Lattice(lattice), scale))
            }
            ScenarioKind::DistinguishableParticles => {
                let sites = self.sites.ok_or_else(|| ConfigError::new("sites", "is required"))?;
                let dx = check_positive(self.dx.unwrap_or(1.0), "dx")?;
                let alpha = check_positive(require(self.alpha, "alpha")?, "alpha")?;
                let particles = self.particles.as_ref().ok_or_else(|| ConfigError::new("particles", "is required"))?;
                for (i, p) in particles.iter().enumerate() {
                    check_positive(p.lambda, &format!("particles[{i}].lambda"))?;
                }
                let model = DistinguishableParticles::new(sites, dx, alpha, particles.iter().map(|p| p.lambda).collect())
                    .map_err(core_err("particles"))?;
                if model.dim() < 2 {
                    return Err(ConfigError::new("sites", "must give a Hilbert space of dimension >= 2"));
                }
                let q = model.quantities().map_err(core_err("particles"))?;
                Ok((q, Model::Particles(model), 1.0))
            }
        }
    }

    fn build_state(&self, q: &QuantitySet, model: &Model) -> Result<StateVector, ConfigError> {
        let err = |e: collapse_core::Error| ConfigError::new("initial_state", format!("is invalid: {e}"));
        match (&self.initial_state, model) {
            (InitialState::Amplitudes(a), Model::Plain) => {
                if a.re.len() != q.dim() {
                    return Err(ConfigError::new("initial_state.re", format!("must hold {} amplitudes", q.dim())));
                }
                if let Some(im) = &a.im {
                    if im.len() != q.dim() {
                        return Err(ConfigError::new("initial_state.im", format!("must hold {} amplitudes", q.dim())));
                    }
                }
                let amps = (0..q.dim()).map(|i| C64::new(a.re[i], a.im.as_ref().map_or(0.0, |im| im[i]))).collect();
                StateVector::new(amps).map_err(err)
            }
            (InitialState::Terms(terms), Model::Lattice(lattice)) => {
                let mut out = Vec::with_capacity(terms.len());
                for (i, t) in terms.iter().enumerate() {
                    let occ = t
                        .occupations
                        .clone()
                        .ok_or_else(|| ConfigError::new(format!("initial_state[{i}].occupations"), "is required"))?;
                    out.push((occ, C64::new(t.re, t.im)));
                }
                lattice.state(&out).map_err(err)
            }
            (InitialState::Terms(terms), Model::Particles(parts)) => {
                let mut out = Vec::with_capacity(terms.len());
                for (i, t) in terms.iter().enumerate() {
                    let sites =
                        t.sites.clone().ok_or_else(|| ConfigError::new(format!("initial_state[{i}].sites"), "is required"))?;
                    out.push((sites, C64::new(t.re, t.im)));
                }
                parts.state(&out).map_err(err)
            }
            (InitialState::Amplitudes(_), _) => {
                Err(ConfigError::new("initial_state", "must be a list of configuration terms for lattice scenarios"))
            }
            (InitialState::Terms(_), Model::Plain) => {
                Err(ConfigError::new("initial_state", "must be {\"re\": [...], \"im\": [...]} for explicit matrices"))
            }
        }
    }

    fn build_hamiltonian(&self, q: &QuantitySet, model: &Model) -> Result<Option<Hamiltonian>, ConfigError> {
        let d = q.dim();
        let h = match &self.hamiltonian {
            None | Some(HamiltonianSpec::None) => return Ok(None),
            Some(HamiltonianSpec::Matrix { matrix, hbar }) => {
                let m = matrix.to_matrix("hamiltonian.matrix")?;
                if m.nrows() != d {
                    return Err(ConfigError::new("hamiltonian.matrix.dim", format!("must equal {d}")));
                }
                Hamiltonian::with_hbar(m, *hbar).map_err(core_err("hamiltonian"))?
            }
            Some(HamiltonianSpec::Preset { name, scale }) => {
                if !scale.is_finite() {
                    return Err(ConfigError::new("hamiltonian.scale", "must be finite"));
                }
                let s = C64::new(*scale, 0.0);
                let m = match name.as_str() {
                    "sigma-x" | "sigma-y" | "sigma-z" if d != 2 => {
                        return Err(ConfigError::new("hamiltonian.name", format!("{name} needs dimension 2, found {d}")))
                    }
                    "sigma-x" => CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]),
                    "sigma-y" => CMatrix::from_row_slice(2, 2, &[ZERO, -C64::i(), C64::i(), ZERO]),
                    "sigma-z" => CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]),
                    "chain" => CMatrix::from_fn(d, d, |i, j| if i + 1 == j || j + 1 == i { ONE } else { ZERO }),
                    other => return Err(ConfigError::new("hamiltonian.name", format!("unknown preset {other:?}"))),
                };
                Hamiltonian::new(m * s).map_err(core_err("hamiltonian"))?
            }
            Some(HamiltonianSpec::Hopping { hopping, onsite }) => match model {
                Model::Lattice(lattice) => {
                    for (i, j) in hopping.iter().enumerate() {
                        if !j.is_finite() {
                            return Err(ConfigError::new(format!("hamiltonian.hopping[{i}]"), "must be finite"));
                        }
                    }
                    check_finite_nonneg(onsite.abs(), "hamiltonian.onsite")?;
                    hopping_hamiltonian(lattice, hopping, *onsite).map_err(core_err("hamiltonian.hopping"))?
                }
                _ => return Err(ConfigError::new("hamiltonian.kind", "hopping needs a lattice scenario")),
            },
        };
        Ok(Some(h))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qubit() -> ScenarioConfig {
        ScenarioConfig::from_json(crate::presets::preset("qubit-equal").unwrap()).unwrap()
    }

    #[test]
    fn negative_beta_names_the_key() {
        let mut cfg = qubit();
        cfg.process.beta = Some(-1.0);
        assert_eq!(cfg.resolve().unwrap_err().to_string(), "beta must be > 0");
    }

    #[test]
    fn both_engines_force_gamma() {
        let scn = qubit().resolve().unwrap();
        let h = scn.hitting.as_ref().unwrap().config.clone();
        let c = scn.continuous.as_ref().unwrap();
        assert!((c.gamma - h.beta * h.mu / 2.0).abs() < 1e-15);
        assert!(scn.warnings.is_empty());
        let mut cfg = qubit();
        cfg.process.gamma = Some(3.0);
        let scn = cfg.resolve().unwrap();
        assert_eq!(scn.continuous.unwrap().gamma, 3.0);
        assert_eq!(scn.warnings.len(), 1);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = crate::presets::preset("qubit-equal").unwrap().replacen("\"t_end\"", "\"tend\"", 1);
        let err = ScenarioConfig::from_json(&text).unwrap_err();
        assert!(err.to_string().contains("tend"), "{err}");
    }

    #[test]
    fn missing_parameters() {
        let mut cfg = qubit();
        cfg.process.mu = None;
        assert_eq!(cfg.resolve().unwrap_err().to_string(), "mu is required");
        let mut cfg = qubit();
        cfg.record_interval = 2.0 * cfg.t_end;
        assert_eq!(cfg.resolve().unwrap_err().key, "record_interval");
        let mut cfg = qubit();
        cfg.initial_state = InitialState::Amplitudes(Amplitudes { re: vec![1.0], im: None });
        assert_eq!(cfg.resolve().unwrap_err().key, "initial_state.re");
    }

    #[test]
    fn lattice_scaling() {
        let cfg = ScenarioConfig::from_json(crate::presets::preset("boson-2site").unwrap()).unwrap();
        let mut halved = cfg.clone();
        halved.dx = Some(cfg.dx.unwrap() / 2.0);
        let a = cfg.resolve().unwrap();
        let b = halved.resolve().unwrap();
        assert!((b.lattice_scale - 2.0 * a.lattice_scale).abs() < 1e-12);
        assert!((b.continuous.unwrap().gamma - 2.0 * a.continuous.unwrap().gamma).abs() < 1e-12);
    }

    #[test]
    fn every_preset_resolves() {
        for name in crate::presets::PRESET_NAMES {
            let cfg = ScenarioConfig::from_json(crate::presets::preset(name).unwrap()).unwrap();
            let scn = cfg.resolve().unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(&scn.name, name);
            let round = ScenarioConfig::from_json(&cfg.to_json()).unwrap();
            assert_eq!(round, cfg);
        }
    }

    #[test]
    fn hamiltonian_presets() {
        let mut cfg = qubit();
        cfg.hamiltonian = Some(HamiltonianSpec::Preset { name: "sigma-x".into(), scale: 0.5 });
        let h = cfg.resolve().unwrap().hamiltonian.unwrap();
        assert_eq!(h.matrix()[(0, 1)], C64::new(0.5, 0.0));
        cfg.hamiltonian = Some(HamiltonianSpec::Preset { name: "nope".into(), scale: 1.0 });
        assert_eq!(cfg.resolve().unwrap_err().key, "hamiltonian.name");
    }
}
