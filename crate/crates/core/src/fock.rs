//! Lattice particle models: occupation-number bases, smeared number and mass
//! densities, and first-quantized distinguishable particles.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{CMatrix, Hamiltonian, QuantitySet, StateVector, C64, ZERO};
use crate::hitting::{hitting_density, positive, HittingChannel};

pub const DEFAULT_DIMENSION_CAP: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistics {
    Boson,
    Fermion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Species {
    pub name: String,
    pub mass: f64,
    pub statistics: Statistics,
    /// Fixed particle number; `None` keeps every sector up to `max_occupation` per site.
    pub count: Option<u32>,
    pub max_occupation: u32,
}

impl Species {
    pub fn bosons(name: &str, mass: f64, count: u32) -> Self {
        Species { name: name.to_string(), mass, statistics: Statistics::Boson, count: Some(count), max_occupation: count }
    }

    pub fn fermions(name: &str, mass: f64, count: u32) -> Self {
        Species { name: name.to_string(), mass, statistics: Statistics::Fermion, count: Some(count), max_occupation: 1 }
    }

    fn site_cap(&self) -> u32 {
        match self.statistics {
            Statistics::Fermion => self.max_occupation.min(1),
            Statistics::Boson => self.max_occupation,
        }
    }
}

/// Occupation-number basis on a 1D lattice `x_j = j dx`. Configurations are flat
/// vectors `n[s * M + j]` (species-major) in descending lexicographic order.
#[derive(Debug, Clone)]
pub struct FockLattice {
    sites: usize,
    dx: f64,
    species: Vec<Species>,
    basis: Vec<Vec<u32>>,
    index: HashMap<Vec<u32>, usize>,
}

impl FockLattice {
    pub fn new(sites: usize, dx: f64, species: Vec<Species>) -> Result<Self> {
        Self::with_cap(sites, dx, species, DEFAULT_DIMENSION_CAP)
    }

    pub fn with_cap(sites: usize, dx: f64, species: Vec<Species>, cap: usize) -> Result<Self> {
        if sites == 0 {
            return Err(Error::param("sites", "must be >= 1"));
        }
        positive("dx", dx)?;
        if species.is_empty() {
            return Err(Error::param("species", "must list at least one species"));
        }
        for s in &species {
            positive("mass", s.mass)?;
            if let Some(n) = s.count {
                if s.statistics == Statistics::Fermion && n as usize > sites {
                    return Err(Error::param("count", format!("{} fermions of species {} do not fit on {} sites", n, s.name, sites)));
                }
                if n as u64 > s.site_cap() as u64 * sites as u64 {
                    return Err(Error::param("max_occupation", format!("too small for {} particles of species {}", n, s.name)));
                }
            }
        }
        let mut per_species = Vec::with_capacity(species.len());
        let mut dim: usize = 1;
        for s in &species {
            let configs = species_configurations(sites, s.site_cap(), s.count, cap)?;
            dim = dim.saturating_mul(configs.len());
            if dim > cap {
                return Err(Error::FockDimensionExceeded { dim, cap });
            }
            per_species.push(configs);
        }
        let mut basis: Vec<Vec<u32>> = vec![Vec::new()];
        for configs in &per_species {
            let mut next = Vec::with_capacity(basis.len() * configs.len());
            for prefix in &basis {
                for c in configs {
                    let mut v = prefix.clone();
                    v.extend_from_slice(c);
                    next.push(v);
                }
            }
            basis = next;
        }
        let index = basis.iter().enumerate().map(|(i, c)| (c.clone(), i)).collect();
        Ok(FockLattice { sites, dx, species, basis, index })
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn species(&self) -> &[Species] {
        &self.species
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn positions(&self) -> Vec<f64> {
        (0..self.sites).map(|j| j as f64 * self.dx).collect()
    }

    pub fn configuration(&self, k: usize) -> &[u32] {
        &self.basis[k]
    }

    pub fn basis(&self) -> &[Vec<u32>] {
        &self.basis
    }

    pub fn index_of(&self, occupations: &[u32]) -> Option<usize> {
        self.index.get(occupations).copied()
    }

    /// Occupation of `species` at site `j` in basis configuration `k`.
    pub fn occupation(&self, k: usize, species: usize, j: usize) -> u32 {
        self.basis[k][species * self.sites + j]
    }

    /// Normalized superposition of occupation configurations.
    pub fn state(&self, terms: &[(Vec<u32>, C64)]) -> Result<StateVector> {
        let mut amps = vec![ZERO; self.dim()];
        for (occ, amp) in terms {
            let k = self
                .index_of(occ)
                .ok_or_else(|| Error::InvalidState(format!("configuration {occ:?} is not in the lattice basis")))?;
            amps[k] += amp;
        }
        StateVector::new(amps)
    }

    fn check_species(&self, species: usize) -> Result<()> {
        if species >= self.species.len() {
            return Err(Error::param("species", format!("index {species} out of range")));
        }
        Ok(())
    }

    /// `sum_j' w_jj' n_s(x_j')` for every basis configuration, one vector per site.
    fn smeared_diagonals(&self, species: usize, kernel: &[f64]) -> Vec<Vec<f64>> {
        let m = self.sites;
        (0..m)
            .map(|j| {
                (0..self.dim())
                    .map(|k| (0..m).map(|jp| kernel[j * m + jp] * self.occupation(k, species, jp) as f64).sum())
                    .collect()
            })
            .collect()
    }
}

/// Occupation vectors of one species in descending lexicographic order.
fn species_configurations(sites: usize, site_cap: u32, count: Option<u32>, cap: usize) -> Result<Vec<Vec<u32>>> {
    let mut out = Vec::new();
    let mut current = vec![0u32; sites];
    fn rec(j: usize, remaining: Option<u32>, site_cap: u32, current: &mut Vec<u32>, out: &mut Vec<Vec<u32>>, cap: usize) -> Result<()> {
        let sites = current.len();
        if j == sites {
            if remaining.is_none_or(|r| r == 0) {
                if out.len() >= cap {
                    return Err(Error::FockDimensionExceeded { dim: out.len() + 1, cap });
                }
                out.push(current.clone());
            }
            return Ok(());
        }
        let hi = remaining.map_or(site_cap, |r| r.min(site_cap));
        for n in (0..=hi).rev() {
            if let Some(r) = remaining {
                // the remaining sites must be able to hold what is left
                if (r - n) as u64 > site_cap as u64 * (sites - j - 1) as u64 {
                    continue;
                }
            }
            current[j] = n;
            rec(j + 1, remaining.map(|r| r - n), site_cap, current, out, cap)?;
        }
        current[j] = 0;
        Ok(())
    }
    rec(0, count, site_cap, &mut current, &mut out, cap)?;
    Ok(out)
}

/// Gaussian smearing kernel `w_jj' = exp(-alpha (x_j - x_j')^2 / 2) / Z`, row-major, with
/// `Z = sum_{m in Z} exp(-alpha dx^2 m^2 / 2)` so each interior row sums to 1. For
/// `alpha dx^2 <= 0.1`, `1/Z` equals `(alpha/2pi)^(1/2) dx` up to exponentially small terms;
/// as `alpha -> infinity` the kernel tends to the identity.
pub fn smearing_kernel(sites: usize, dx: f64, alpha: f64) -> Result<Vec<f64>> {
    positive("alpha", alpha)?;
    positive("dx", dx)?;
    let s = alpha * dx * dx / 2.0;
    let mut z = 1.0;
    for m in 1.. {
        let term = (-s * (m * m) as f64).exp();
        z += 2.0 * term;
        if term < 1e-18 * z {
            break;
        }
    }
    let mut w = vec![0.0; sites * sites];
    for j in 0..sites {
        for jp in 0..sites {
            let d = j as f64 - jp as f64;
            w[j * sites + jp] = (-s * d * d).exp() / z;
        }
    }
    Ok(w)
}

/// Smeared number densities `N_s(x_j)` of one species; all diagonal in the occupation basis.
pub fn build_number_density(lattice: &FockLattice, species: usize, alpha: f64) -> Result<QuantitySet> {
    lattice.check_species(species)?;
    let kernel = smearing_kernel(lattice.sites, lattice.dx, alpha)?;
    QuantitySet::from_diagonals(&lattice.smeared_diagonals(species, &kernel))
}

/// Number densities of every species, species-major: quantity `s * M + j` is `N_s(x_j)`.
pub fn build_species_densities(lattice: &FockLattice, alpha: f64) -> Result<QuantitySet> {
    let kernel = smearing_kernel(lattice.sites, lattice.dx, alpha)?;
    let diags: Vec<Vec<f64>> = (0..lattice.species.len()).flat_map(|s| lattice.smeared_diagonals(s, &kernel)).collect();
    QuantitySet::from_diagonals(&diags)
}

/// Smeared mass densities `M(x_j) = sum_s m_s N_s(x_j)`.
pub fn build_mass_density(lattice: &FockLattice, alpha: f64) -> Result<QuantitySet> {
    let kernel = smearing_kernel(lattice.sites, lattice.dx, alpha)?;
    let mut total = vec![vec![0.0; lattice.dim()]; lattice.sites];
    for (s, sp) in lattice.species.iter().enumerate() {
        for (acc, col) in total.iter_mut().zip(lattice.smeared_diagonals(s, &kernel)) {
            for (a, v) in acc.iter_mut().zip(col) {
                *a += sp.mass * v;
            }
        }
    }
    QuantitySet::from_diagonals(&total)
}

/// A smeared density profile `n(x_j)` in the units of the density operators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityProfile(pub Vec<f64>);

/// Accuracy for per-site density operators built with [`smearing_kernel`]: the spatial
/// integral `beta int dx (N(x) - n(x))^2` of the point density becomes
/// `(beta/dx) sum_j (N_j - n_j)^2` in dimensionless per-kernel counts.
pub fn effective_accuracy(beta: f64, dx: f64) -> f64 {
    beta / dx
}

/// Strength for per-site density operators; white noise with `dB(x) dB(x') = delta(x - x') dt`
/// discretizes to unit-variance increments with `gamma_eff = gamma / dx`.
pub fn effective_strength(gamma: f64, dx: f64) -> f64 {
    gamma / dx
}

/// `|C|^2 <psi| exp(-beta_eff sum_j (N_j - n_j)^2) |psi>` with `|C|^2 = (beta_eff/pi)^(M/2)`,
/// so that the density integrates to 1 over profile space.
pub fn profile_probability(psi: &StateVector, density: &QuantitySet, n: &DensityProfile, beta_eff: f64) -> Result<f64> {
    if n.0.len() != density.len() {
        return Err(Error::DimensionMismatch { expected: density.len(), found: n.0.len() });
    }
    if n.0.iter().any(|v| !v.is_finite()) {
        return Err(Error::param("profile", "entries must be finite"));
    }
    hitting_density(psi, density, &n.0, beta_eff)
}

/// Off-diagonal decay rate `(gamma_eff/2) sum_j (N_j[k] - N_j[l])^2` between two
/// configurations under the continuous process.
pub fn profile_decoherence_rate(density: &QuantitySet, k: usize, l: usize, gamma_eff: f64) -> f64 {
    0.5 * gamma_eff * density.row_distance_sq(k, l)
}

/// Nearest-neighbour hopping `-J_s sum_j (a+_j a_{j+1} + h.c.)` per species plus on-site
/// interaction `(U/2) sum n (n - 1)`. Conserves every species number.
pub fn hopping_hamiltonian(lattice: &FockLattice, hopping: &[f64], onsite: f64) -> Result<Hamiltonian> {
    if hopping.len() != lattice.species.len() {
        return Err(Error::DimensionMismatch { expected: lattice.species.len(), found: hopping.len() });
    }
    let d = lattice.dim();
    let m = lattice.sites;
    let mut h = CMatrix::zeros(d, d);
    for k in 0..d {
        let occ = lattice.configuration(k);
        let diag: f64 = occ.iter().map(|&n| 0.5 * onsite * n as f64 * (n as f64 - 1.0)).sum();
        h[(k, k)] += C64::new(diag, 0.0);
        for (s, &j_s) in hopping.iter().enumerate() {
            if j_s == 0.0 {
                continue;
            }
            for j in 0..m.saturating_sub(1) {
                let (a, b) = (s * m + j, s * m + j + 1);
                // move one particle from b to a; the h.c. term fills the transpose
                if occ[b] == 0 {
                    continue;
                }
                let mut target = occ.to_vec();
                target[b] -= 1;
                target[a] += 1;
                if let Some(t) = lattice.index_of(&target) {
                    // adjacent sites: no Jordan–Wigner string for fermions
                    let amp = -j_s * (occ[b] as f64 * target[a] as f64).sqrt();
                    h[(t, k)] += C64::new(amp, 0.0);
                    h[(k, t)] += C64::new(amp, 0.0);
                }
            }
        }
    }
    Hamiltonian::new(h)
}

/// `N` distinguishable particles on an `M`-site lattice, first quantized: basis
/// `|j_1 ... j_N>` with index `sum_l j_l M^(N-1-l)`. Particle `l` is localized with
/// accuracy `alpha` at frequency `lambda_l`.
#[derive(Debug, Clone)]
pub struct DistinguishableParticles {
    pub sites: usize,
    pub dx: f64,
    pub alpha: f64,
    pub lambdas: Vec<f64>,
}

impl DistinguishableParticles {
    pub fn new(sites: usize, dx: f64, alpha: f64, lambdas: Vec<f64>) -> Result<Self> {
        if sites == 0 {
            return Err(Error::param("sites", "must be >= 1"));
        }
        positive("dx", dx)?;
        positive("alpha", alpha)?;
        if lambdas.is_empty() {
            return Err(Error::param("particles", "must list at least one particle"));
        }
        for &l in &lambdas {
            positive("lambda", l)?;
        }
        let dim = (sites as u128).checked_pow(lambdas.len() as u32).unwrap_or(u128::MAX);
        if dim > DEFAULT_DIMENSION_CAP as u128 {
            return Err(Error::FockDimensionExceeded { dim: dim.min(usize::MAX as u128) as usize, cap: DEFAULT_DIMENSION_CAP });
        }
        Ok(DistinguishableParticles { sites, dx, alpha, lambdas })
    }

    pub fn particles(&self) -> usize {
        self.lambdas.len()
    }

    pub fn dim(&self) -> usize {
        self.sites.pow(self.lambdas.len() as u32)
    }

    pub fn site_of(&self, k: usize, particle: usize) -> usize {
        let n = self.particles();
        (k / self.sites.pow((n - 1 - particle) as u32)) % self.sites
    }

    pub fn index_of(&self, sites: &[usize]) -> Option<usize> {
        if sites.len() != self.particles() || sites.iter().any(|&j| j >= self.sites) {
            return None;
        }
        Some(sites.iter().fold(0, |acc, &j| acc * self.sites + j))
    }

    /// Position operators `q_l`, one per particle.
    pub fn quantities(&self) -> Result<QuantitySet> {
        let diags: Vec<Vec<f64>> =
            (0..self.particles()).map(|l| (0..self.dim()).map(|k| self.site_of(k, l) as f64 * self.dx).collect()).collect();
        QuantitySet::from_diagonals(&diags)
    }

    /// One hitting channel per particle with accuracy `alpha` and frequency `lambda_l`.
    pub fn channels(&self) -> Vec<HittingChannel> {
        self.lambdas.iter().enumerate().map(|(l, &mu)| HittingChannel { quantities: vec![l], beta: self.alpha, mu }).collect()
    }

    /// Continuous strengths `gamma_l = alpha lambda_l / 2`.
    pub fn strengths(&self) -> Vec<f64> {
        self.lambdas.iter().map(|&l| crate::continuous::particle_strength(self.alpha, l)).collect()
    }

    /// Normalized superposition of particle placements.
    pub fn state(&self, terms: &[(Vec<usize>, C64)]) -> Result<StateVector> {
        let mut amps = vec![ZERO; self.dim()];
        for (sites, amp) in terms {
            let k = self.index_of(sites).ok_or_else(|| Error::InvalidState(format!("placement {sites:?} is not on the lattice")))?;
            amps[k] += amp;
        }
        StateVector::new(amps)
    }
}
