//! Density matrices, fidelity measures, the twirling channel, and twirled
//! (nonunitary) sequence evolution.
//!
//! Two fidelities are used throughout: the unitary gate fidelity
//! F_u = |Tr(U_T†U)/N|² and the state fidelity
//! F_s = |Tr(ρ_T ρ_out)| / √(Tr(ρ_T²)·Tr(ρ_out²)). State objectives score
//! *traceless deviation* matrices — F_s is ill-defined on the identity
//! component, and the observable signal lives in the deviation.

use crate::error::{Error, Result};
use crate::linalg::{c64, hermiticity_error, CMatrix, C64};
use crate::propagator::{self, BBSequence, PropagatorCache};
use crate::spinsys::{Operator, SpinSystem};

/// Squared-norm floor below which a deviation matrix counts as zero.
const ZERO_NORM_EPS: f64 = 1e-28;

/// Which normalization a density matrix carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateKind {
    /// Physical state, Tr ρ = 1.
    UnitTrace,
    /// Traceless deviation part, Tr ρ = 0.
    TracelessDeviation,
}

/// Hermitian state matrix with a validated normalization kind.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: CMatrix,
    kind: StateKind,
}

impl DensityMatrix {
    pub fn unit_trace(matrix: CMatrix) -> Result<Self> {
        Self::checked(matrix, StateKind::UnitTrace)
    }

    pub fn traceless_deviation(matrix: CMatrix) -> Result<Self> {
        Self::checked(matrix, StateKind::TracelessDeviation)
    }

    fn checked(matrix: CMatrix, kind: StateKind) -> Result<Self> {
        assert_eq!(matrix.nrows(), matrix.ncols(), "state must be square");
        let dev = hermiticity_error(&matrix);
        if dev > 1e-12 {
            return Err(Error::NotHermitian { max_dev: dev });
        }
        let tr: C64 = matrix.diagonal().iter().sum();
        let want = match kind {
            StateKind::UnitTrace => 1.0,
            StateKind::TracelessDeviation => 0.0,
        };
        if (tr - c64(want, 0.0)).norm() > 1e-12 {
            return Err(Error::InvalidState(format!(
                "trace must be {want}, got {tr}"
            )));
        }
        Ok(Self { matrix, kind })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn kind(&self) -> StateKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Real parts of the diagonal (populations / deviation populations).
    pub fn diagonal_real(&self) -> Vec<f64> {
        self.matrix.diagonal().iter().map(|v| v.re).collect()
    }

    /// Traceless deviation: ρ − (Tr ρ / N)·I.
    pub fn deviation(&self) -> DensityMatrix {
        match self.kind {
            StateKind::TracelessDeviation => self.clone(),
            StateKind::UnitTrace => {
                let n = self.dim();
                let tr: C64 = self.matrix.diagonal().iter().sum();
                let shift = tr / c64(n as f64, 0.0);
                let mut m = self.matrix.clone();
                for i in 0..n {
                    m[(i, i)] -= shift;
                }
                DensityMatrix {
                    matrix: m,
                    kind: StateKind::TracelessDeviation,
                }
            }
        }
    }
}

/// Per-RF-scale fidelities and their uniform mean.
#[derive(Debug, Clone, PartialEq)]
pub struct FidelityReport {
    pub scales: Vec<f64>,
    pub fidelities: Vec<f64>,
    pub mean: f64,
}

/// Default RF-inhomogeneity grid: a symmetric 5-point spread over ±10%.
pub const DEFAULT_RF_GRID: [f64; 5] = [0.9, 0.95, 1.0, 1.05, 1.1];

/// Gate fidelity F_u = |Tr(U_T†U)/N|²; invariant under a global phase on
/// either argument.
pub fn unitary_fidelity(u_target: &Operator, u: &Operator) -> Result<f64> {
    if u_target.dim() != u.dim() {
        return Err(Error::DimensionMismatch {
            expected: u_target.dim(),
            got: u.dim(),
        });
    }
    let n = u.dim() as f64;
    // Tr(A†B) = Σ_ij conj(A_ij)·B_ij, no product needed
    let tr: C64 = u_target
        .matrix()
        .iter()
        .zip(u.matrix().iter())
        .map(|(a, b)| a.conj() * b)
        .sum();
    Ok((tr / c64(n, 0.0)).norm_sqr())
}

/// Tr(AB) for Hermitian A, B (real up to roundoff).
fn overlap(a: &CMatrix, b: &CMatrix) -> C64 {
    // B_ji = conj(B_ij) for Hermitian B, so Tr(AB) = Σ_ij A_ij·conj(B_ij)
    a.iter().zip(b.iter()).map(|(x, y)| x * y.conj()).sum()
}

/// State fidelity F_s = |Tr(ρ_T ρ_out)| / √(Tr(ρ_T²)·Tr(ρ_out²)).
pub fn state_fidelity(rho_target: &DensityMatrix, rho_out: &DensityMatrix) -> Result<f64> {
    if rho_target.dim() != rho_out.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho_target.dim(),
            got: rho_out.dim(),
        });
    }
    if rho_target.kind() != rho_out.kind() {
        return Err(Error::KindMismatch);
    }
    let t2 = overlap(rho_target.matrix(), rho_target.matrix()).re;
    let o2 = overlap(rho_out.matrix(), rho_out.matrix()).re;
    if t2 <= ZERO_NORM_EPS || o2 <= ZERO_NORM_EPS {
        return Err(Error::ZeroNormState);
    }
    Ok(overlap(rho_target.matrix(), rho_out.matrix()).norm() / (t2 * o2).sqrt())
}

/// Ideal twirl: project onto the diagonal (all coherences destroyed).
pub fn twirl(rho: &DensityMatrix) -> DensityMatrix {
    let n = rho.dim();
    let mut m = CMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = rho.matrix()[(i, i)];
    }
    DensityMatrix {
        matrix: m,
        kind: rho.kind(),
    }
}

/// Unitary conjugation ρ → U ρ U†.
pub fn evolve(rho: &DensityMatrix, u: &Operator) -> Result<DensityMatrix> {
    if rho.dim() != u.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            got: u.dim(),
        });
    }
    let m = u.matrix() * rho.matrix() * u.matrix().adjoint();
    Ok(DensityMatrix {
        matrix: m,
        kind: rho.kind(),
    })
}

/// Evolve a state through a sequence with twirl boundaries: unitary
/// conjugation on each chunk, a twirl at every boundary.
pub fn bb_evolve_with_twirls(
    cache: &PropagatorCache,
    seq: &BBSequence,
    rho_in: &DensityMatrix,
) -> Result<DensityMatrix> {
    if rho_in.dim() != cache.dim() {
        return Err(Error::DimensionMismatch {
            expected: cache.dim(),
            got: rho_in.dim(),
        });
    }
    let plain = seq.without_twirls();
    let mut rho = rho_in.clone();
    let mut prev = 0usize;
    for &b in seq.twirl_boundaries() {
        let u = chunk_propagator(cache, &plain, prev, b)?;
        rho = twirl(&evolve(&rho, &u)?);
        prev = b;
    }
    let u = chunk_propagator(cache, &plain, prev, seq.n_segments())?;
    evolve(&rho, &u)
}

fn chunk_propagator(
    cache: &PropagatorCache,
    plain: &BBSequence,
    start: usize,
    end: usize,
) -> Result<Operator> {
    if start == end {
        return Ok(Operator::identity(cache.dim()));
    }
    // delegate validation to the range evaluator's caller contract
    propagator::bb_propagator_range(cache, plain, start, end)
}

/// Mean F_u over an RF-amplitude scale grid: the cache is rebuilt with every
/// Ω_j multiplied by each grid value.
pub fn robust_unitary_fidelity(
    system: &SpinSystem,
    seq: &BBSequence,
    u_target: &Operator,
    scale_grid: &[f64],
) -> Result<FidelityReport> {
    if scale_grid.is_empty() {
        return Err(Error::InvalidConfig("empty RF scale grid".into()));
    }
    if scale_grid.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
        return Err(Error::InvalidConfig("RF scales must be positive".into()));
    }
    if u_target.dim() != system.dim() {
        return Err(Error::DimensionMismatch {
            expected: system.dim(),
            got: u_target.dim(),
        });
    }
    let mut fidelities = Vec::with_capacity(scale_grid.len());
    for &s in scale_grid {
        let scaled = system.with_scaled_amplitudes(s);
        let cache = propagator::build_cache(&scaled, seq.dt())?;
        let u = propagator::bb_propagator(&cache, seq)?;
        fidelities.push(unitary_fidelity(u_target, &u)?);
    }
    let mean = fidelities.iter().sum::<f64>() / fidelities.len() as f64;
    Ok(FidelityReport {
        scales: scale_grid.to_vec(),
        fidelities,
        mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;
    use crate::propagator::{build_cache, random_bb_sequence};
    use crate::spinsys::Species;
    use nalgebra::{dmatrix, DMatrix};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::TAU;

    fn random_unitary(n: usize, rng: &mut ChaCha8Rng) -> Operator {
        let mut h = CMatrix::zeros(n, n);
        for i in 0..n {
            h[(i, i)] = c64(rng.gen_range(-1.0..1.0), 0.0);
            for j in (i + 1)..n {
                let v = c64(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                h[(i, j)] = v;
                h[(j, i)] = v.conj();
            }
        }
        let op = Operator::hermitian(h).unwrap();
        crate::propagator::expm_hermitian_generator(&op, 1.0).unwrap()
    }

    fn random_density(n: usize, rng: &mut ChaCha8Rng) -> DensityMatrix {
        let a = CMatrix::from_fn(n, n, |_, _| {
            c64(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let m = &a * a.adjoint();
        let tr: C64 = m.diagonal().iter().sum();
        DensityMatrix::unit_trace(m / tr).unwrap()
    }

    #[test]
    fn unitary_fidelity_basics() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = random_unitary(4, &mut rng);
        assert!((unitary_fidelity(&u, &u).unwrap() - 1.0).abs() < 1e-12);

        // global phase invariance
        let theta = 1.234f64;
        let phased = Operator::from_matrix(u.matrix() * c64(theta.cos(), theta.sin()));
        assert!((unitary_fidelity(&u, &phased).unwrap() - 1.0).abs() < 1e-12);

        // Tr(σ_x) = 0 against the identity
        let mut sx = CMatrix::zeros(2, 2);
        sx[(0, 1)] = c64(1.0, 0.0);
        sx[(1, 0)] = c64(1.0, 0.0);
        let f = unitary_fidelity(&Operator::identity(2), &Operator::from_matrix(sx)).unwrap();
        assert!(f.abs() < 1e-15);

        let i2 = Operator::identity(2);
        let i4 = Operator::identity(4);
        assert!(matches!(
            unitary_fidelity(&i2, &i4),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn unitary_fidelity_is_one_iff_phase_aligned() {
        // reconstruct θ from the trace and check U = e^{iθ}U_T entrywise
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u_t = random_unitary(4, &mut rng);
        let theta = 2.5f64;
        let u = Operator::from_matrix(u_t.matrix() * c64(theta.cos(), theta.sin()));
        assert!((unitary_fidelity(&u_t, &u).unwrap() - 1.0).abs() < 1e-12);
        let tr: C64 = u_t
            .matrix()
            .iter()
            .zip(u.matrix().iter())
            .map(|(a, b)| a.conj() * b)
            .sum();
        let recon = tr / c64(tr.norm(), 0.0);
        let back = u.matrix() * recon.conj();
        assert!(max_abs_diff(&back, u_t.matrix()) < 1e-9);

        // any genuinely different unitary scores strictly below 1
        let v = random_unitary(4, &mut rng);
        assert!(unitary_fidelity(&u_t, &v).unwrap() < 1.0 - 1e-6);
    }

    #[test]
    fn state_fidelity_basics() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rho = random_density(4, &mut rng);
        assert!((state_fidelity(&rho, &rho).unwrap() - 1.0).abs() < 1e-12);

        // orthogonal projectors
        let mut p0 = CMatrix::zeros(2, 2);
        p0[(0, 0)] = c64(1.0, 0.0);
        let mut p1 = CMatrix::zeros(2, 2);
        p1[(1, 1)] = c64(1.0, 0.0);
        let a = DensityMatrix::unit_trace(p0).unwrap();
        let b = DensityMatrix::unit_trace(p1).unwrap();
        assert!(state_fidelity(&a, &b).unwrap().abs() < 1e-15);

        // zero-norm deviation rejected: deviation of I/2 is the zero matrix
        let dev_pure = a.deviation();
        let mixed = DensityMatrix::unit_trace(CMatrix::identity(2, 2) * c64(0.5, 0.0)).unwrap();
        let dev_mixed = mixed.deviation();
        assert!(matches!(
            state_fidelity(&dev_pure, &dev_mixed),
            Err(Error::ZeroNormState)
        ));

        // kind mismatch rejected
        assert!(matches!(
            state_fidelity(&a, &dev_pure),
            Err(Error::KindMismatch)
        ));
    }

    #[test]
    fn state_fidelity_symmetry_and_conjugation_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let a = random_density(4, &mut rng);
            let b = random_density(4, &mut rng);
            let fab = state_fidelity(&a, &b).unwrap();
            let fba = state_fidelity(&b, &a).unwrap();
            assert!((fab - fba).abs() < 1e-12);

            let u = random_unitary(4, &mut rng);
            let fa = state_fidelity(&evolve(&a, &u).unwrap(), &evolve(&b, &u).unwrap()).unwrap();
            assert!((fab - fa).abs() < 1e-10);
            assert!(fab >= 0.0 && fab <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn twirl_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        // |+⟩⟨+| → I/2
        let plus = CMatrix::from_fn(2, 2, |_, _| c64(0.5, 0.0));
        let rho = DensityMatrix::unit_trace(plus).unwrap();
        let t = twirl(&rho);
        assert!(max_abs_diff(t.matrix(), &(CMatrix::identity(2, 2) * c64(0.5, 0.0))) < 1e-15);

        for _ in 0..20 {
            let rho = random_density(8, &mut rng);
            let t = twirl(&rho);
            // diagonal preserved, trace preserved, idempotent
            for i in 0..8 {
                assert_eq!(t.matrix()[(i, i)], rho.matrix()[(i, i)]);
            }
            let t2 = twirl(&t);
            assert_eq!(max_abs_diff(t.matrix(), t2.matrix()), 0.0);
            // projection identity against a random diagonal observable
            let diag = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
                8,
                (0..8).map(|_| c64(rng.gen_range(-1.0..1.0), 0.0)),
            ));
            let lhs = overlap(t.matrix(), &diag);
            let rhs = overlap(rho.matrix(), &diag);
            assert!((lhs - rhs).norm() < 1e-12);
        }

        // a diagonal state is untouched
        let d = DensityMatrix::unit_trace(CMatrix::from_diagonal(
            &nalgebra::DVector::from_vec(vec![c64(0.7, 0.0), c64(0.3, 0.0)]),
        ))
        .unwrap();
        assert_eq!(max_abs_diff(twirl(&d).matrix(), d.matrix()), 0.0);
    }

    #[test]
    fn evolve_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let rho = random_density(4, &mut rng);
        let u = random_unitary(4, &mut rng);

        let same = evolve(&rho, &Operator::identity(4)).unwrap();
        assert!(max_abs_diff(same.matrix(), rho.matrix()) < 1e-15);

        let out = evolve(&rho, &u).unwrap();
        let mut before: Vec<f64> = rho
            .matrix()
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .collect();
        let mut after: Vec<f64> = out
            .matrix()
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .collect();
        before.sort_by(f64::total_cmp);
        after.sort_by(f64::total_cmp);
        for (x, y) in before.iter().zip(after.iter()) {
            assert!((x - y).abs() < 1e-10);
        }

        let back = evolve(&out, &Operator::from_matrix(u.matrix().adjoint())).unwrap();
        assert!(max_abs_diff(back.matrix(), rho.matrix()) < 1e-10);
    }

    fn desk_system() -> SpinSystem {
        crate::spinsys::SpinSystem::new(
            vec![
                Species {
                    label: "H".into(),
                    max_amplitude: TAU * 1e4,
                    spins: vec![1],
                },
                Species {
                    label: "C".into(),
                    max_amplitude: TAU * 1e4,
                    spins: vec![2],
                },
            ],
            vec![0.0, 0.0],
            dmatrix![0.0, 215.0; 215.0, 0.0],
            DMatrix::zeros(2, 2),
            true,
        )
        .unwrap()
    }

    #[test]
    fn twirled_evolution_consistency() {
        let sys = desk_system();
        let dt = 5e-6;
        let cache = build_cache(&sys, dt).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rho = random_density(4, &mut rng);

        // no boundaries → plain conjugation by the total propagator
        let seq = random_bb_sequence(&sys, 50, dt, 0.4, &mut rng).unwrap();
        let out = bb_evolve_with_twirls(&cache, &seq, &rho).unwrap();
        let u = crate::propagator::bb_propagator(&cache, &seq).unwrap();
        let want = evolve(&rho, &u).unwrap();
        assert!(max_abs_diff(out.matrix(), want.matrix()) < 1e-12);

        // boundary at 0 twirls the input before any evolution
        let seq0 = BBSequence::new(
            dt,
            seq.species_labels().to_vec(),
            seq.events().to_vec(),
            vec![0],
        )
        .unwrap();
        let out0 = bb_evolve_with_twirls(&cache, &seq0, &rho).unwrap();
        let want0 = evolve(&twirl(&rho), &u).unwrap();
        assert!(max_abs_diff(out0.matrix(), want0.matrix()) < 1e-12);

        // trace stays 1 through multiple twirls
        let seq3 = BBSequence::new(
            dt,
            seq.species_labels().to_vec(),
            seq.events().to_vec(),
            vec![10, 25, 40],
        )
        .unwrap();
        let out3 = bb_evolve_with_twirls(&cache, &seq3, &rho).unwrap();
        let tr: C64 = out3.matrix().diagonal().iter().sum();
        assert!((tr - c64(1.0, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn twirl_on_pulse_sequence_differs_from_unitary_path() {
        // sanity: a twirl inside a pulsed sequence is genuinely nonunitary
        let sys = desk_system();
        let dt = 5e-6;
        let cache = build_cache(&sys, dt).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rho = random_density(4, &mut rng);
        let seq = random_bb_sequence(&sys, 40, dt, 0.8, &mut rng).unwrap();
        let twirled = BBSequence::new(
            dt,
            seq.species_labels().to_vec(),
            seq.events().to_vec(),
            vec![20],
        )
        .unwrap();
        let a = bb_evolve_with_twirls(&cache, &seq, &rho).unwrap();
        let b = bb_evolve_with_twirls(&cache, &twirled, &rho).unwrap();
        assert!(max_abs_diff(a.matrix(), b.matrix()) > 1e-6);
    }

    #[test]
    fn robust_fidelity_report() {
        let sys = desk_system();
        let dt = 5e-6;
        let labels = vec!["H".to_string(), "C".to_string()];

        // delay-only sequence: RF scale is irrelevant, all entries equal
        let seq = BBSequence::delays(dt, labels.clone(), 30).unwrap();
        let cache = build_cache(&sys, dt).unwrap();
        let u = crate::propagator::bb_propagator(&cache, &seq).unwrap();
        let rep = robust_unitary_fidelity(&sys, &seq, &u, &DEFAULT_RF_GRID).unwrap();
        for f in &rep.fidelities {
            assert!((f - rep.fidelities[0]).abs() < 1e-12);
        }
        assert!((rep.mean - 1.0).abs() < 1e-12);

        // single-point grid equals plain fidelity; mean bounded by max
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let seq = random_bb_sequence(&sys, 30, dt, 0.5, &mut rng).unwrap();
        let target = {
            let c = build_cache(&sys, dt).unwrap();
            crate::propagator::bb_propagator(&c, &seq).unwrap()
        };
        let one = robust_unitary_fidelity(&sys, &seq, &target, &[1.0]).unwrap();
        assert!((one.mean - 1.0).abs() < 1e-12);
        let rep = robust_unitary_fidelity(&sys, &seq, &target, &DEFAULT_RF_GRID).unwrap();
        let max = rep.fidelities.iter().cloned().fold(0.0, f64::max);
        assert!(rep.mean <= max + 1e-15);

        // a pulse sequence must not be phase-shift invariant across scales
        assert!(rep.fidelities[0] < 1.0);
    }

    #[test]
    fn density_matrix_validation() {
        // wrong trace
        assert!(DensityMatrix::unit_trace(CMatrix::identity(2, 2)).is_err());
        // non-Hermitian
        let mut m = CMatrix::zeros(2, 2);
        m[(0, 1)] = c64(1.0, 0.0);
        m[(0, 0)] = c64(1.0, 0.0);
        assert!(DensityMatrix::unit_trace(m).is_err());
        // deviation accessor on a unit-trace state
        let mut p = CMatrix::zeros(2, 2);
        p[(0, 0)] = c64(1.0, 0.0);
        let rho = DensityMatrix::unit_trace(p).unwrap();
        let dev = rho.deviation();
        assert_eq!(dev.kind(), StateKind::TracelessDeviation);
        assert!((dev.matrix()[(0, 0)].re - 0.5).abs() < 1e-15);
        assert!((dev.matrix()[(1, 1)].re + 0.5).abs() < 1e-15);
    }
}
