use collapse_core::continuous::{ContinuousConfig, ContinuousEngine};
use collapse_core::ensemble::{rng_from_seed, run_indexed};
use collapse_core::equivalence::{ensemble_density_with_error, joint_coherence};
use collapse_core::fock::{build_number_density, effective_strength, profile_decoherence_rate, FockLattice, Species};
use collapse_core::hilbert::C64;

/// Smeared profile of `n` particles sitting on `site`, from the theta-normalized kernel.
fn profile(sites: usize, site: usize, n: f64, alpha: f64, dx: f64) -> Vec<f64> {
    let s = alpha * dx * dx / 2.0;
    let z: f64 = (-60i32..=60).map(|m| (-s * (m * m) as f64).exp()).sum();
    (0..sites).map(|j| n * (-s * (j as f64 - site as f64).powi(2)).exp() / z).collect()
}

#[test]
fn two_bosons_decohere_at_the_profile_rate() {
    let (sites, dx, alpha, gamma) = (3, 1.0, 1.0, 0.5);
    let lattice = FockLattice::new(sites, dx, vec![Species::bosons("b", 1.0, 2)]).unwrap();
    let a = build_number_density(&lattice, 0, alpha).unwrap();
    let left = lattice.index_of(&[2, 0, 0]).unwrap();
    let right = lattice.index_of(&[0, 0, 2]).unwrap();
    let psi = lattice.state(&[(vec![2, 0, 0], C64::new(1.0, 0.0)), (vec![0, 0, 2], C64::new(1.0, 0.0))]).unwrap();

    let gamma_eff = effective_strength(gamma, dx);
    let d2: f64 = profile(sites, 0, 2.0, alpha, dx).iter().zip(profile(sites, 2, 2.0, alpha, dx)).map(|(x, y)| (x - y).powi(2)).sum();
    let rate = 0.5 * gamma_eff * d2;
    assert!((profile_decoherence_rate(&a, left, right, gamma_eff) - rate).abs() < 1e-12);

    let cfg = ContinuousConfig::new(gamma_eff, 5e-4, 1.0, 0.25).unwrap().with_states(true);
    let engine = ContinuousEngine::new(&a, None, &cfg).unwrap();
    let runs = run_indexed(4000, 5, None, |_, s| engine.run(&psi, s, &mut rng_from_seed(s))).unwrap();
    for t in [0.25, 0.5, 1.0] {
        let (rho, se) = ensemble_density_with_error(&runs, t).unwrap();
        let z = joint_coherence(&rho, &a, left, right).unwrap().norm();
        let err = se[left * a.dim() + right];
        let expected = 0.5 * (-rate * t).exp();
        assert!((z - expected).abs() < 4.0 * err, "t {t}: {z} vs {expected} (se {err})");
    }
}

#[test]
fn filled_fermion_sector_has_one_configuration() {
    let lattice = FockLattice::new(2, 1.0, vec![Species::fermions("f", 1.0, 2)]).unwrap();
    assert_eq!(lattice.dim(), 1);
    assert_eq!(lattice.configuration(0), &[1, 1]);
    // a one-dimensional space cannot carry a superposition
    assert!(lattice.state(&[(vec![1, 1], C64::new(1.0, 0.0))]).is_err());
}
