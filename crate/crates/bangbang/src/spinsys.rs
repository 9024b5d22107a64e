//! Spin-system description and the operators built from it: single-spin and
//! collective spin operators plus the secular internal Hamiltonian
//!
//! H = −Σ_r ω_r I_rz + 2π Σ_{r<s} (J_rs + 2 D_rs) I_rz I_sz
//!     + 2π Σ_{r<s} (J_rs − D_rs) (I_rx I_sx + I_ry I_sy),
//!
//! with the flip-flop (third) term dropped when the system is flagged weakly
//! coupled.
//!
//! Conventions, fixed globally: spin 1 is the most significant tensor factor,
//! |0⟩ is the +1/2 eigenstate of I_z, offsets and RF amplitudes are in rad/s,
//! couplings in Hz (the 2π is explicit above).

use crate::error::{Error, Result};
use crate::linalg::{c64, hermiticity_error, CMatrix};
use nalgebra::DMatrix;
use std::f64::consts::TAU;

/// Default "much greater than" ratio for the weak-coupling validity check:
/// |ω_r − ω_s| must exceed 2π|J_rs − D_rs| by this factor for every pair.
pub const DEFAULT_WEAK_COUPLING_RATIO: f64 = 100.0;

/// Cartesian axis of a spin operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

/// One nuclear species: a group of spins sharing a single RF control channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Species {
    pub label: String,
    /// Peak nutation rate Ω of this channel, rad/s.
    pub max_amplitude: f64,
    /// 1-based indices of the member spins.
    pub spins: Vec<usize>,
}

/// An n-spin-1/2 system partitioned into species.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinSystem {
    n_spins: usize,
    species: Vec<Species>,
    /// species index for each spin (0-based species, entry r-1 for spin r)
    spin_to_species: Vec<usize>,
    /// resonance offsets ω_r, rad/s
    offsets: Vec<f64>,
    /// J couplings, Hz
    j_hz: DMatrix<f64>,
    /// dipolar couplings, Hz
    d_hz: DMatrix<f64>,
    weak_coupling: bool,
}

fn check_coupling_table(name: &str, m: &DMatrix<f64>, n: usize) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::InvalidSystem(format!(
            "{name} table must be {n}x{n}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    for r in 0..n {
        if m[(r, r)] != 0.0 {
            return Err(Error::InvalidSystem(format!(
                "{name} table must have zero diagonal (entry {},{} is {})",
                r + 1,
                r + 1,
                m[(r, r)]
            )));
        }
        for s in 0..r {
            if m[(r, s)] != m[(s, r)] {
                return Err(Error::InvalidSystem(format!(
                    "{name} table is asymmetric at ({},{}): {} vs {}",
                    r + 1,
                    s + 1,
                    m[(r, s)],
                    m[(s, r)]
                )));
            }
        }
    }
    Ok(())
}

impl SpinSystem {
    /// Build and validate a system. `offsets` are ω_r in rad/s; coupling
    /// tables are in Hz. Species member lists must partition 1..=n_spins.
    pub fn new(
        species: Vec<Species>,
        offsets: Vec<f64>,
        j_hz: DMatrix<f64>,
        d_hz: DMatrix<f64>,
        weak_coupling: bool,
    ) -> Result<Self> {
        let n_spins = offsets.len();
        if n_spins == 0 {
            return Err(Error::InvalidSystem("at least one spin required".into()));
        }
        if species.is_empty() {
            return Err(Error::InvalidSystem("at least one species required".into()));
        }
        let mut spin_to_species = vec![usize::MAX; n_spins];
        for (j, sp) in species.iter().enumerate() {
            if sp.label.is_empty() {
                return Err(Error::InvalidSystem(format!("species {} has empty label", j + 1)));
            }
            if !(sp.max_amplitude.is_finite() && sp.max_amplitude >= 0.0) {
                return Err(Error::InvalidSystem(format!(
                    "species {:?} max amplitude must be finite and >= 0",
                    sp.label
                )));
            }
            if sp.spins.is_empty() {
                return Err(Error::InvalidSystem(format!(
                    "species {:?} has no member spins",
                    sp.label
                )));
            }
            for &r in &sp.spins {
                if r == 0 || r > n_spins {
                    return Err(Error::SpinIndexOutOfRange { index: r, n_spins });
                }
                if spin_to_species[r - 1] != usize::MAX {
                    return Err(Error::InvalidSystem(format!(
                        "spin {r} assigned to more than one species"
                    )));
                }
                spin_to_species[r - 1] = j;
            }
        }
        if let Some(r) = spin_to_species.iter().position(|&s| s == usize::MAX) {
            return Err(Error::InvalidSystem(format!(
                "spin {} not assigned to any species",
                r + 1
            )));
        }
        for (j, a) in species.iter().enumerate() {
            for b in species.iter().skip(j + 1) {
                if a.label == b.label {
                    return Err(Error::InvalidSystem(format!(
                        "duplicate species label {:?}",
                        a.label
                    )));
                }
            }
        }
        check_coupling_table("J", &j_hz, n_spins)?;
        check_coupling_table("D", &d_hz, n_spins)?;
        Ok(Self {
            n_spins,
            species,
            spin_to_species,
            offsets,
            j_hz,
            d_hz,
            weak_coupling,
        })
    }

    pub fn n_spins(&self) -> usize {
        self.n_spins
    }

    /// Hilbert-space dimension 2^n.
    pub fn dim(&self) -> usize {
        1 << self.n_spins
    }

    pub fn n_species(&self) -> usize {
        self.species.len()
    }

    pub fn species(&self) -> &[Species] {
        &self.species
    }

    /// 0-based species index of 1-based spin `r`.
    pub fn species_of(&self, r: usize) -> Result<usize> {
        if r == 0 || r > self.n_spins {
            return Err(Error::SpinIndexOutOfRange {
                index: r,
                n_spins: self.n_spins,
            });
        }
        Ok(self.spin_to_species[r - 1])
    }

    /// Resonance offsets ω_r in rad/s, indexed by spin − 1.
    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn j_hz(&self) -> &DMatrix<f64> {
        &self.j_hz
    }

    pub fn d_hz(&self) -> &DMatrix<f64> {
        &self.d_hz
    }

    pub fn weak_coupling(&self) -> bool {
        self.weak_coupling
    }

    /// Copy of the system with every species amplitude multiplied by `scale`
    /// (models RF-field inhomogeneity).
    pub fn with_scaled_amplitudes(&self, scale: f64) -> SpinSystem {
        let mut scaled = self.clone();
        for sp in &mut scaled.species {
            sp.max_amplitude *= scale;
        }
        scaled
    }
}

/// Dense operator on the full Hilbert space, with a Hermiticity tag that
/// downstream exponentials rely on.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    matrix: CMatrix,
    hermitian: bool,
}

impl Operator {
    /// Wrap a matrix asserting Hermiticity (validated to 1e-12 elementwise).
    pub fn hermitian(matrix: CMatrix) -> Result<Self> {
        assert_eq!(matrix.nrows(), matrix.ncols(), "operator must be square");
        let dev = hermiticity_error(&matrix);
        if dev > 1e-12 {
            return Err(Error::NotHermitian { max_dev: dev });
        }
        Ok(Self {
            matrix,
            hermitian: true,
        })
    }

    /// Wrap a general (not necessarily Hermitian) matrix.
    pub fn from_matrix(matrix: CMatrix) -> Self {
        assert_eq!(matrix.nrows(), matrix.ncols(), "operator must be square");
        Self {
            matrix,
            hermitian: false,
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: CMatrix::identity(dim, dim),
            hermitian: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }
}

/// Bit position (from the least significant end) of 1-based spin `r` in a
/// basis index; spin 1 is the most significant factor.
#[inline]
pub(crate) fn bit_of_spin(n_spins: usize, r: usize) -> usize {
    n_spins - r
}

/// I_z eigenvalue (±1/2) of spin `r` in basis state `state`; |0⟩ ↦ +1/2.
#[inline]
pub(crate) fn mz(n_spins: usize, r: usize, state: usize) -> f64 {
    if state >> bit_of_spin(n_spins, r) & 1 == 0 {
        0.5
    } else {
        -0.5
    }
}

/// Spin-1/2 operator (Pauli/2) of spin `r` tensored with identity elsewhere.
pub fn spin_operator(n_spins: usize, r: usize, axis: Axis) -> Result<Operator> {
    if r == 0 || r > n_spins {
        return Err(Error::SpinIndexOutOfRange { index: r, n_spins });
    }
    let dim = 1usize << n_spins;
    let mask = 1usize << bit_of_spin(n_spins, r);
    let mut m = CMatrix::zeros(dim, dim);
    match axis {
        Axis::Z => {
            for s in 0..dim {
                m[(s, s)] = c64(mz(n_spins, r, s), 0.0);
            }
        }
        Axis::X => {
            for s in 0..dim {
                if s & mask == 0 {
                    m[(s, s | mask)] = c64(0.5, 0.0);
                    m[(s | mask, s)] = c64(0.5, 0.0);
                }
            }
        }
        Axis::Y => {
            // ⟨0|I_y|1⟩ = −i/2 per spin, embedded at the spin's bit.
            for s in 0..dim {
                if s & mask == 0 {
                    m[(s, s | mask)] = c64(0.0, -0.5);
                    m[(s | mask, s)] = c64(0.0, 0.5);
                }
            }
        }
    }
    Ok(Operator {
        matrix: m,
        hermitian: true,
    })
}

/// Collective operator S_j = Σ_{r ∈ species j} I_r along `axis`
/// (species index 0-based).
pub fn collective_operator(system: &SpinSystem, species: usize, axis: Axis) -> Result<Operator> {
    let sp = system.species.get(species).ok_or(Error::UnknownSpecies {
        index: species,
        n_species: system.n_species(),
    })?;
    let dim = system.dim();
    let mut m = CMatrix::zeros(dim, dim);
    for &r in &sp.spins {
        m += spin_operator(system.n_spins, r, axis)?.matrix();
    }
    Ok(Operator {
        matrix: m,
        hermitian: true,
    })
}

/// Secular internal Hamiltonian (rad/s). Diagonal when `weak_coupling` is set.
pub fn internal_hamiltonian(system: &SpinSystem) -> Operator {
    let n = system.n_spins;
    let dim = system.dim();
    let mut m = CMatrix::zeros(dim, dim);
    // Zeeman + zz coupling: diagonal in the computational basis.
    for state in 0..dim {
        let mut e = 0.0;
        for r in 1..=n {
            e -= system.offsets[r - 1] * mz(n, r, state);
        }
        for r in 1..=n {
            for s in (r + 1)..=n {
                let zz = system.j_hz[(r - 1, s - 1)] + 2.0 * system.d_hz[(r - 1, s - 1)];
                e += TAU * zz * mz(n, r, state) * mz(n, s, state);
            }
        }
        m[(state, state)] = c64(e, 0.0);
    }
    // Flip-flop term: couples |…0…1…⟩ ↔ |…1…0…⟩ on each pair with
    // matrix element 2π(J−D)·1/2; dropped for weakly coupled systems.
    if !system.weak_coupling {
        for r in 1..=n {
            let mr = 1usize << bit_of_spin(n, r);
            for s in (r + 1)..=n {
                let ms = 1usize << bit_of_spin(n, s);
                let g = TAU * (system.j_hz[(r - 1, s - 1)] - system.d_hz[(r - 1, s - 1)]) * 0.5;
                if g == 0.0 {
                    continue;
                }
                for state in 0..dim {
                    // state has spin r up (bit 0) and spin s down (bit 1)
                    if state & mr == 0 && state & ms != 0 {
                        let other = (state | mr) & !ms;
                        m[(state, other)] += c64(g, 0.0);
                        m[(other, state)] += c64(g, 0.0);
                    }
                }
            }
        }
    }
    Operator {
        matrix: m,
        hermitian: true,
    }
}

/// Result of the weak-coupling validity check.
#[derive(Debug, Clone)]
pub struct WeakCouplingReport {
    pub valid: bool,
    pub ratio_threshold: f64,
    /// (spin r, spin s, |ω_r − ω_s| / (2π|J_rs − D_rs|)) for violating pairs.
    pub violations: Vec<(usize, usize, f64)>,
}

/// Check |ω_r − ω_s| ≥ threshold · 2π|J_rs − D_rs| for every coupled pair.
pub fn weak_coupling_report(system: &SpinSystem, ratio_threshold: f64) -> WeakCouplingReport {
    let n = system.n_spins;
    let mut violations = Vec::new();
    for r in 1..=n {
        for s in (r + 1)..=n {
            let coupling = TAU * (system.j_hz[(r - 1, s - 1)] - system.d_hz[(r - 1, s - 1)]).abs();
            if coupling == 0.0 {
                continue;
            }
            let gap = (system.offsets[r - 1] - system.offsets[s - 1]).abs();
            if gap < ratio_threshold * coupling {
                violations.push((r, s, gap / coupling));
            }
        }
    }
    WeakCouplingReport {
        valid: violations.is_empty(),
        ratio_threshold,
        violations,
    }
}

/// Weak-coupling check at the default ratio threshold (100).
pub fn is_weak_coupling_valid(system: &SpinSystem) -> WeakCouplingReport {
    weak_coupling_report(system, DEFAULT_WEAK_COUPLING_RATIO)
}

/// Convenience constructor for tests and benchmarks: all spins in one species.
pub fn single_species_system(
    label: &str,
    max_amplitude: f64,
    offsets: Vec<f64>,
    j_hz: DMatrix<f64>,
    d_hz: DMatrix<f64>,
    weak_coupling: bool,
) -> Result<SpinSystem> {
    let n = offsets.len();
    SpinSystem::new(
        vec![Species {
            label: label.to_string(),
            max_amplitude,
            spins: (1..=n).collect(),
        }],
        offsets,
        j_hz,
        d_hz,
        weak_coupling,
    )
}
