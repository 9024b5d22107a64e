//! Equilibrium and pseudopure-state (PPS) preparation.
//!
//! A spin ensemble at thermal equilibrium is described by
//! ρ_eq = (I + Σ_r ε_r I_rz)/2ⁿ with small per-spin purity factors ε_r.
//! Ensemble computing needs a pseudopure state instead — a state whose
//! traceless deviation is proportional to that of a pure basis state — and
//! the non-unitary step that makes one reachable is twirling. This module
//! provides the two diagonal targets and a GA-driven [`prepare_pps`] that
//! searches for a pulse sequence (with twirl boundaries) maximizing the
//! deviation-state fidelity.

use crate::channels::{
    bb_evolve_with_twirls, state_fidelity, DensityMatrix, FidelityReport,
};
use crate::error::{Error, Result};
use crate::gaopt::{run_ga, GaConfig, Genome, OptimizationResult, StateObjective};
use crate::linalg::{c64, CMatrix};
use crate::propagator::{build_cache, BBSequence};
use crate::spinsys::{mz, SpinSystem};

/// Per-spin purity factors ε_r (dimensionless, typically ~1e-5).
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumSpec {
    pub purity_factors: Vec<f64>,
}

impl EquilibriumSpec {
    pub fn new(purity_factors: Vec<f64>) -> Result<Self> {
        if purity_factors
            .iter()
            .any(|&e| !(e.is_finite() && e >= 0.0))
        {
            return Err(Error::InvalidState(
                "purity factors must be finite and nonnegative".into(),
            ));
        }
        Ok(Self { purity_factors })
    }

    /// Uniform factors scaled per species by `weights[species]` (e.g. ratios
    /// of gyromagnetic ratios); overall scale cancels in F_s.
    pub fn species_weighted(system: &SpinSystem, scale: f64, weights: &[f64]) -> Result<Self> {
        if weights.len() != system.n_species() {
            return Err(Error::DimensionMismatch {
                expected: system.n_species(),
                got: weights.len(),
            });
        }
        let factors = (1..=system.n_spins())
            .map(|r| Ok(scale * weights[system.species_of(r)?]))
            .collect::<Result<Vec<f64>>>()?;
        Self::new(factors)
    }
}

/// Thermal equilibrium state ρ_eq = (I + Σ_r ε_r I_rz)/2ⁿ: diagonal,
/// unit trace. Its traceless deviation — the part visible to NMR — is
/// obtained with [`DensityMatrix::deviation`].
pub fn equilibrium_state(system: &SpinSystem, spec: &EquilibriumSpec) -> Result<DensityMatrix> {
    if spec.purity_factors.len() != system.n_spins() {
        return Err(Error::DimensionMismatch {
            expected: system.n_spins(),
            got: spec.purity_factors.len(),
        });
    }
    let dim = system.dim();
    let norm = 1.0 / dim as f64;
    let mut m = CMatrix::zeros(dim, dim);
    for state in 0..dim {
        let mut s = 0.0;
        for r in 1..=system.n_spins() {
            s += spec.purity_factors[r - 1] * mz(system.n_spins(), r, state);
        }
        m[(state, state)] = c64((1.0 + s) * norm, 0.0);
    }
    DensityMatrix::unit_trace(m)
}

/// Deviation of the pseudopure target |b⟩⟨b|: the diagonal matrix
/// |b⟩⟨b| − I/2ⁿ (traceless).
pub fn pps_target(n_spins: usize, b: usize) -> Result<DensityMatrix> {
    let dim = 1usize << n_spins;
    if b >= dim {
        return Err(Error::InvalidState(format!(
            "basis index {b} out of range for {dim} states"
        )));
    }
    let off = -1.0 / dim as f64;
    let mut m = CMatrix::zeros(dim, dim);
    for i in 0..dim {
        m[(i, i)] = c64(if i == b { 1.0 + off } else { off }, 0.0);
    }
    DensityMatrix::traceless_deviation(m)
}

/// Everything a PPS synthesis run produces.
#[derive(Debug, Clone)]
pub struct PpsOutcome {
    pub optimization: OptimizationResult,
    /// per-RF-scale F_s of the best sequence, plus the mean
    pub fidelity: FidelityReport,
    /// decoded best sequence (with twirl boundaries)
    pub sequence: BBSequence,
    /// diagonal of the target deviation (bar-diagram reference)
    pub target_diagonal: Vec<f64>,
    /// diagonal of the achieved deviation at nominal RF scale
    pub achieved_diagonal: Vec<f64>,
}

/// Search for a twirl-bearing sequence turning the equilibrium deviation
/// into the PPS deviation for basis state `b`. Requires at least one twirl
/// gene: the two diagonals differ in spectrum, so no unitary alone connects
/// them.
pub fn prepare_pps(
    system: &SpinSystem,
    spec: &EquilibriumSpec,
    b: usize,
    config: &GaConfig,
) -> Result<PpsOutcome> {
    prepare_pps_seeded(system, spec, b, config, &[])
}

/// [`prepare_pps`] with warm-start genomes injected into the population.
pub fn prepare_pps_seeded(
    system: &SpinSystem,
    spec: &EquilibriumSpec,
    b: usize,
    config: &GaConfig,
    seeds: &[Genome],
) -> Result<PpsOutcome> {
    if config.n_twirls == 0 {
        return Err(Error::InvalidConfig(
            "PPS preparation needs at least one twirl gene".into(),
        ));
    }
    let rho_in = equilibrium_state(system, spec)?.deviation();
    let rho_target = pps_target(system.n_spins(), b)?;
    let objective = StateObjective::new(system, rho_in.clone(), rho_target.clone(), config)?;
    let optimization = run_ga(&objective, config, seeds)?;

    let sequence = optimization.best.decode(config.dt, system)?;
    let mut fidelities = Vec::with_capacity(config.rf_scales.len());
    for &s in &config.rf_scales {
        let cache = build_cache(&system.with_scaled_amplitudes(s), config.dt)?;
        let out = bb_evolve_with_twirls(&cache, &sequence, &rho_in)?;
        fidelities.push(state_fidelity(&rho_target, &out)?);
    }
    let mean = fidelities.iter().sum::<f64>() / fidelities.len() as f64;

    let nominal = build_cache(system, config.dt)?;
    let achieved = bb_evolve_with_twirls(&nominal, &sequence, &rho_in)?;

    Ok(PpsOutcome {
        optimization,
        fidelity: FidelityReport {
            scales: config.rf_scales.clone(),
            fidelities,
            mean,
        },
        sequence,
        target_diagonal: rho_target.diagonal_real(),
        achieved_diagonal: achieved.diagonal_real(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::twirl;
    use crate::linalg::max_abs_diff;
    use crate::spinsys::single_species_system;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn plain_system(n: usize) -> SpinSystem {
        single_species_system(
            "H",
            2.0 * PI * 1.0e4,
            vec![0.0; n],
            DMatrix::zeros(n, n),
            DMatrix::zeros(n, n),
            true,
        )
        .unwrap()
    }

    #[test]
    fn equilibrium_zero_factors_is_maximally_mixed() {
        let system = plain_system(2);
        let spec = EquilibriumSpec::new(vec![0.0, 0.0]).unwrap();
        let rho = equilibrium_state(&system, &spec).unwrap();
        let want = CMatrix::identity(4, 4) * c64(0.25, 0.0);
        assert_eq!(max_abs_diff(rho.matrix(), &want), 0.0);
    }

    #[test]
    fn equilibrium_single_spin_expansion() {
        let system = plain_system(1);
        let eps = 3e-5;
        let rho = equilibrium_state(&system, &EquilibriumSpec::new(vec![eps]).unwrap()).unwrap();
        assert_eq!(rho.matrix()[(0, 0)].re, (1.0 + eps / 2.0) / 2.0);
        assert_eq!(rho.matrix()[(1, 1)].re, (1.0 - eps / 2.0) / 2.0);
    }

    #[test]
    fn equilibrium_trace_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 1..=4 {
            let system = plain_system(n);
            // dyadic factors: every diagonal entry is exactly representable,
            // so the trace is exactly 1
            let eps: Vec<f64> = (0..n)
                .map(|_| rng.gen_range(1..=1000) as f64 / (1u64 << 30) as f64)
                .collect();
            let rho = equilibrium_state(&system, &EquilibriumSpec::new(eps).unwrap()).unwrap();
            let tr: f64 = rho.diagonal_real().iter().sum();
            assert_eq!(tr, 1.0);

            // arbitrary factors stay within float roundoff
            let eps: Vec<f64> = (0..n).map(|_| rng.gen_range(1e-6..1e-4)).collect();
            let rho = equilibrium_state(&system, &EquilibriumSpec::new(eps).unwrap()).unwrap();
            let tr: f64 = rho.diagonal_real().iter().sum();
            assert!((tr - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn equilibrium_is_twirl_invariant() {
        let system = plain_system(3);
        let spec = EquilibriumSpec::new(vec![1e-5, 2e-5, 3e-5]).unwrap();
        let rho = equilibrium_state(&system, &spec).unwrap();
        assert_eq!(max_abs_diff(twirl(&rho).matrix(), rho.matrix()), 0.0);
    }

    #[test]
    fn equilibrium_validation() {
        assert!(EquilibriumSpec::new(vec![1e-5, -1.0]).is_err());
        assert!(EquilibriumSpec::new(vec![f64::NAN]).is_err());
        let system = plain_system(2);
        let spec = EquilibriumSpec::new(vec![1e-5]).unwrap();
        assert!(equilibrium_state(&system, &spec).is_err());
    }

    #[test]
    fn species_weighted_factors() {
        let system = plain_system(2);
        let spec = EquilibriumSpec::species_weighted(&system, 1e-5, &[4.0]).unwrap();
        assert_eq!(spec.purity_factors, vec![4e-5, 4e-5]);
        assert!(EquilibriumSpec::species_weighted(&system, 1e-5, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn pps_target_single_spin() {
        let t = pps_target(1, 0).unwrap();
        assert_eq!(t.diagonal_real(), vec![0.5, -0.5]);
    }

    #[test]
    fn pps_target_traceless_and_self_fidelity() {
        for (n, b) in [(1, 1), (2, 3), (3, 5), (4, 0)] {
            let t = pps_target(n, b).unwrap();
            let tr: f64 = t.diagonal_real().iter().sum();
            assert_eq!(tr, 0.0);
            assert!((state_fidelity(&t, &t).unwrap() - 1.0).abs() < 1e-14);
        }
        assert!(pps_target(2, 4).is_err());
    }

    #[test]
    fn equilibrium_deviation_differs_from_pps_for_multispin() {
        // establishes the optimization is nontrivial for n ≥ 2
        let system = plain_system(2);
        let spec = EquilibriumSpec::new(vec![1e-5, 1e-5]).unwrap();
        let dev = equilibrium_state(&system, &spec).unwrap().deviation();
        let target = pps_target(2, 0).unwrap();
        let f = state_fidelity(&target, &dev).unwrap();
        assert!(f < 1.0 - 1e-3, "F_s = {f}");
    }

    #[test]
    fn prepare_pps_requires_twirl_genes() {
        let system = plain_system(1);
        let spec = EquilibriumSpec::new(vec![1e-5]).unwrap();
        let config = GaConfig {
            segments: 4,
            n_twirls: 0,
            ..GaConfig::default()
        };
        assert!(matches!(
            prepare_pps(&system, &spec, 0, &config),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn prepare_pps_identity_case() {
        // 1 spin, b = 0: the equilibrium deviation is already proportional
        // to the target, so the all-delay seed scores F_s = 1 immediately
        let system = plain_system(1);
        let spec = EquilibriumSpec::new(vec![2e-5]).unwrap();
        let config = GaConfig {
            segments: 4,
            n_twirls: 1,
            population: 8,
            generations: 10,
            fitness_target: Some(1.0 - 1e-9),
            ..GaConfig::default()
        };
        let seed = Genome::all_off(4, 1, 1);
        let out = prepare_pps_seeded(&system, &spec, 0, &config, &[seed]).unwrap();
        assert!((out.optimization.best_fitness - 1.0).abs() < 1e-12);
        assert_eq!(out.optimization.trace.len(), 1);
        assert!((out.fidelity.mean - 1.0).abs() < 1e-12);
        let sum: f64 = out.achieved_diagonal.iter().sum();
        assert!(sum.abs() < 1e-10);
    }

    #[test]
    fn prepare_pps_finds_inversion() {
        // 1 spin, b = 1: needs a π rotation; Ω·Δt = π makes one pulsed
        // segment sufficient, so a tiny GA finds it fast
        let omega = 2.0 * PI * 1.0e4;
        let system = single_species_system(
            "H",
            omega,
            vec![0.0],
            DMatrix::zeros(1, 1),
            DMatrix::zeros(1, 1),
            true,
        )
        .unwrap();
        let spec = EquilibriumSpec::new(vec![1e-5]).unwrap();
        let config = GaConfig {
            segments: 4,
            n_twirls: 1,
            dt: PI / omega,
            population: 32,
            generations: 80,
            rf_scales: vec![1.0],
            fitness_target: Some(1.0 - 1e-9),
            seed: 11,
            ..GaConfig::default()
        };
        let out = prepare_pps(&system, &spec, 1, &config).unwrap();
        assert!(
            out.fidelity.mean > 0.99,
            "expected convergence, F_s = {}",
            out.fidelity.mean
        );
        let sum: f64 = out.achieved_diagonal.iter().sum();
        assert!(sum.abs() < 1e-10);
        // achieved deviation leans the right way: population at b dominates
        let max = out
            .achieved_diagonal
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(out.achieved_diagonal[1], max);
    }
}
