//! Optimal fixed-point quantum search (OFPQS).
//!
//! The algorithm runs L = 2l+1 oracle queries' worth of generalized Grover
//! iterates whose phases follow a Chebyshev-derived schedule, and guarantees
//! a success probability of at least 1 − δ² for *any* marked fraction — the
//! fixed-point property — while keeping the quadratic search speedup.
//!
//! Register layout: `n_sys` system qubits (database size Q = 2^n_sys) plus
//! one ancilla as the least significant qubit; basis index = sys·2 + anc.
//!
//! Two independent evaluation paths are provided: the full-register circuit
//! ([`run_ofpqs`]) and a two-dimensional reduced rotation in
//! span{|ψ_marked⟩, |ψ_rest⟩} ([`reduced_success_probability`]); tests hold
//! them to 1e-10 agreement.

use crate::channels::{evolve, twirl, DensityMatrix};
use crate::error::{Error, Result};
use crate::linalg::{c64, kron, CMatrix, CVector};
use crate::spinsys::Operator;
use std::f64::consts::{FRAC_1_SQRT_2, TAU};

/// Chebyshev polynomial of the first kind, T_order(x) = cos(order·arccos x),
/// analytically continued as cosh(order·arccosh x) for x > 1 (needed because
/// the phase schedule evaluates it at 1/δ ≥ 1). `order` may be fractional;
/// x < −1 is only defined for integer orders (parity continuation).
pub fn chebyshev_t(order: f64, x: f64) -> Result<f64> {
    if !(order.is_finite() && order >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "Chebyshev order must be finite and nonnegative, got {order}"
        )));
    }
    if x >= -1.0 && x <= 1.0 {
        Ok((order * x.acos()).cos())
    } else if x > 1.0 {
        Ok((order * x.acosh()).cosh())
    } else if order.fract() == 0.0 {
        let sign = if (order as i64) % 2 == 0 { 1.0 } else { -1.0 };
        Ok(sign * (order * (-x).acosh()).cosh())
    } else {
        Err(Error::ChebyshevDomain { order, x })
    }
}

/// Phase schedule of the L = 2l+1 query algorithm.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSchedule {
    pub l: usize,
    /// L = 2l + 1
    pub big_l: usize,
    /// γ = 1 / T_{1/L}(1/δ)
    pub gamma: f64,
    /// α_1..α_l (radians, each in (0, 2π))
    pub alphas: Vec<f64>,
    /// β_1..β_l, with β_{l−j+1} = −α_j exactly
    pub betas: Vec<f64>,
}

/// Compute the phase schedule α_j = 2·cot⁻¹(tan(2πj/L)·√(1−γ²)),
/// β_{l−j+1} = −α_j. `l = 0` yields an empty schedule (L = 1, bare query).
pub fn phase_schedule(l: usize, delta: f64) -> Result<PhaseSchedule> {
    if !(delta.is_finite() && delta > 0.0 && delta <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "delta must lie in (0, 1], got {delta}"
        )));
    }
    let big_l = 2 * l + 1;
    let gamma_inv = chebyshev_t(1.0 / big_l as f64, 1.0 / delta)?;
    let gamma = gamma_inv.recip();
    let spread = (1.0 - gamma * gamma).max(0.0).sqrt();
    let mut alphas = Vec::with_capacity(l);
    for j in 1..=l {
        let t = (TAU * j as f64 / big_l as f64).tan();
        // cot⁻¹ on the (0, π) principal branch is atan2(1, ·); a tan pole
        // (cannot occur for odd L, guarded anyway) collapses to the limit 0.
        let half = if t.is_finite() { 1.0f64.atan2(t * spread) } else { 0.0 };
        alphas.push(2.0 * half);
    }
    let mut betas = vec![0.0; l];
    for j in 1..=l {
        betas[l - j] = -alphas[j - 1];
    }
    Ok(PhaseSchedule {
        l,
        big_l,
        gamma,
        alphas,
        betas,
    })
}

/// Search problem description.
#[derive(Debug, Clone, PartialEq)]
pub struct OFPQSConfig {
    /// system qubits; database size Q = 2^n_sys
    pub n_sys: usize,
    /// marked basis indices (any order; deduplicated on validation)
    pub marked: Vec<usize>,
    /// number of generalized Grover iterates
    pub l: usize,
    /// success-probability parameter: P_L ≥ 1 − δ²
    pub delta: f64,
}

impl OFPQSConfig {
    /// Database size Q.
    pub fn q(&self) -> usize {
        1 << self.n_sys
    }

    /// Sorted, deduplicated marked set after range validation.
    pub fn validated_marked(&self) -> Result<Vec<usize>> {
        validate_marked(self.n_sys, &self.marked)
    }
}

fn validate_marked(n_sys: usize, marked: &[usize]) -> Result<Vec<usize>> {
    if marked.is_empty() {
        return Err(Error::EmptyMarkedSet);
    }
    let q = 1usize << n_sys;
    let mut m: Vec<usize> = marked.to_vec();
    m.sort_unstable();
    m.dedup();
    if let Some(&bad) = m.iter().find(|&&i| i >= q) {
        return Err(Error::MarkedOutOfRange { index: bad, q });
    }
    Ok(m)
}

fn register_dim(n_sys: usize) -> usize {
    1 << (n_sys + 1)
}

/// H^{⊗n_sys} on the system register, identity on the ancilla.
pub fn hadamard_layer(n_sys: usize) -> Operator {
    let h = CMatrix::from_row_slice(
        2,
        2,
        &[
            c64(FRAC_1_SQRT_2, 0.0),
            c64(FRAC_1_SQRT_2, 0.0),
            c64(FRAC_1_SQRT_2, 0.0),
            c64(-FRAC_1_SQRT_2, 0.0),
        ],
    );
    let mut m = CMatrix::identity(1, 1);
    for _ in 0..n_sys {
        m = kron(&m, &h);
    }
    Operator::from_matrix(kron(&m, &CMatrix::identity(2, 2)))
}

/// Oracle U_G: flips the ancilla when the system register holds a marked
/// state. A permutation matrix; involutory.
pub fn oracle_unitary(n_sys: usize, marked: &[usize]) -> Result<Operator> {
    let marked = validate_marked(n_sys, marked)?;
    let dim = register_dim(n_sys);
    let mut m = CMatrix::identity(dim, dim);
    for &s in &marked {
        let i0 = s * 2;
        let i1 = s * 2 + 1;
        m[(i0, i0)] = c64(0.0, 0.0);
        m[(i1, i1)] = c64(0.0, 0.0);
        m[(i0, i1)] = c64(1.0, 0.0);
        m[(i1, i0)] = c64(1.0, 0.0);
    }
    Ok(Operator::from_matrix(m))
}

/// Selective phase on the marked states, built from exactly two oracle calls:
/// U_G · (I_sys ⊗ diag(1, e^{iα})) · U_G. On the ancilla-|0⟩ subspace this
/// multiplies marked system states by e^{iα}; the ancilla-|1⟩ sector carries
/// the complementary phase pattern, which the algorithm never populates.
pub fn selective_phase_marked(n_sys: usize, marked: &[usize], alpha: f64) -> Result<Operator> {
    let oracle = oracle_unitary(n_sys, marked)?;
    let dim = register_dim(n_sys);
    let mut rot = CMatrix::identity(dim, dim);
    let phase = c64(alpha.cos(), alpha.sin());
    for s in 0..dim / 2 {
        rot[(s * 2 + 1, s * 2 + 1)] = phase;
    }
    Ok(Operator::from_matrix(
        oracle.matrix() * rot * oracle.matrix(),
    ))
}

/// Oracle-free diagonal form of [`selective_phase_marked`]; must agree with
/// the oracle-built construction entrywise (serves as its test oracle).
pub fn selective_phase_marked_direct(
    n_sys: usize,
    marked: &[usize],
    alpha: f64,
) -> Result<Operator> {
    let marked = validate_marked(n_sys, marked)?;
    let dim = register_dim(n_sys);
    let phase = c64(alpha.cos(), alpha.sin());
    let mut m = CMatrix::identity(dim, dim);
    for s in 0..dim / 2 {
        let hit = marked.binary_search(&s).is_ok();
        // marked states phase the anc=0 entry, unmarked the anc=1 entry
        let idx = if hit { s * 2 } else { s * 2 + 1 };
        m[(idx, idx)] = phase;
    }
    Ok(Operator::from_matrix(m))
}

/// Selective phase e^{iβ} on the all-zeros system state (both ancilla
/// sectors); diagonal.
pub fn selective_phase_zero(n_sys: usize, beta: f64) -> Operator {
    let dim = register_dim(n_sys);
    let mut m = CMatrix::identity(dim, dim);
    let phase = c64(beta.cos(), beta.sin());
    m[(0, 0)] = phase;
    m[(1, 1)] = phase;
    Operator::from_matrix(m)
}

/// Generalized Grover iterate
/// G(α, β) = (H^{⊗n_sys} · S₀(β) · H^{⊗n_sys}) · S_m(α):
/// marked-state phase α followed by a reflection-like start-state phase β.
/// With α = β = π it is the textbook Grover iterate.
pub fn grover_iterate(n_sys: usize, marked: &[usize], alpha: f64, beta: f64) -> Result<Operator> {
    let sm = selective_phase_marked(n_sys, marked, alpha)?;
    let h = hadamard_layer(n_sys);
    let s0 = selective_phase_zero(n_sys, beta);
    let ss = h.matrix() * s0.matrix() * h.matrix();
    Ok(Operator::from_matrix(ss * sm.matrix()))
}

/// Result of a search run.
#[derive(Debug, Clone)]
pub struct SearchOutcome {
    /// final register state (dimension 2^{n_sys+1})
    pub state: CVector,
    /// probability of measuring a marked system state
    pub p_success: f64,
    /// oracle applications consumed (2 per iterate, L − 1 total)
    pub oracle_queries: usize,
}

/// Run the full algorithm: prepare the all-zeros register, Hadamard the
/// system into the uniform superposition, then apply the l scheduled
/// iterates.
///
/// Schedule wiring: the step-j iterate takes the marked-state phase −β_j and
/// the start-state phase α_j (equivalently: the schedule is traversed in
/// descending j with the two phase roles swapped). This is the convention
/// pinned by the δ=1 Grover-exactness requirement together with the
/// fixed-point band property; tests hold it to the 2D reduced model.
pub fn run_ofpqs(config: &OFPQSConfig) -> Result<SearchOutcome> {
    let marked = config.validated_marked()?;
    let schedule = phase_schedule(config.l, config.delta)?;
    let dim = register_dim(config.n_sys);

    let mut state = CVector::zeros(dim);
    state[0] = c64(1.0, 0.0);
    state = hadamard_layer(config.n_sys).matrix() * state;

    for j in 1..=config.l {
        let g = grover_iterate(
            config.n_sys,
            &marked,
            -schedule.betas[j - 1],
            schedule.alphas[j - 1],
        )?;
        state = g.matrix() * state;
    }

    let p_success = marked
        .iter()
        .map(|&m| state[m * 2].norm_sqr() + state[m * 2 + 1].norm_sqr())
        .sum();
    Ok(SearchOutcome {
        state,
        p_success,
        oracle_queries: 2 * config.l,
    })
}

/// Success probabilities for l = 1..=l_max at fixed (n_sys, marked, δ).
pub fn success_curve(
    n_sys: usize,
    marked: &[usize],
    delta: f64,
    l_max: usize,
) -> Result<Vec<(usize, SearchOutcome)>> {
    (1..=l_max)
        .map(|l| {
            let outcome = run_ofpqs(&OFPQSConfig {
                n_sys,
                marked: marked.to_vec(),
                l,
                delta,
            })?;
            Ok((l, outcome))
        })
        .collect()
}

/// Independent 2D evaluation: the algorithm never leaves
/// span{|ψ_marked⟩, |ψ_rest⟩}, so the success probability follows from a
/// 2×2 rotation sequence. Brute-force oracle for [`run_ofpqs`].
pub fn reduced_success_probability(l: usize, delta: f64, q: usize, r: usize) -> Result<f64> {
    if q == 0 || r == 0 || r > q {
        return Err(Error::InvalidConfig(format!(
            "need 1 ≤ r ≤ q, got r = {r}, q = {q}"
        )));
    }
    if r == q {
        return Ok(1.0);
    }
    let schedule = phase_schedule(l, delta)?;
    let sin_t = (r as f64 / q as f64).sqrt();
    let cos_t = (1.0 - r as f64 / q as f64).sqrt();
    // v in basis {ψ_marked, ψ_rest}; uniform superposition start
    let mut v = [c64(sin_t, 0.0), c64(cos_t, 0.0)];
    for j in (1..=l).rev() {
        let pm = c64(0.0, schedule.alphas[j - 1]).exp();
        let f = c64(1.0, 0.0) - c64(0.0, -schedule.betas[j - 1]).exp();
        // marked-state phase, then I − f·|s⟩⟨s|
        let w0 = pm * v[0];
        let w1 = v[1];
        let overlap = sin_t * w0.re + cos_t * w1.re;
        let overlap_im = sin_t * w0.im + cos_t * w1.im;
        let s_dot = c64(overlap, overlap_im);
        v[0] = w0 - f * s_dot * c64(sin_t, 0.0);
        v[1] = w1 - f * s_dot * c64(cos_t, 0.0);
    }
    Ok(v[0].norm_sqr())
}

/// Measurement-style readout: form the density matrix, twirl away all
/// coherences, rotate the ancilla by a Hadamard, and read the diagonal
/// populations grouped by system basis state.
#[derive(Debug, Clone)]
pub struct ReadoutResult {
    /// population of each system basis state (ancilla traced)
    pub populations: Vec<f64>,
    /// total population on the marked set
    pub p_marked: f64,
}

pub fn readout_via_ancilla(state: &CVector, n_sys: usize, marked: &[usize]) -> Result<ReadoutResult> {
    let marked = validate_marked(n_sys, marked)?;
    let dim = register_dim(n_sys);
    if state.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: state.len(),
        });
    }
    let rho = DensityMatrix::unit_trace(state * state.adjoint())?;
    let twirled = twirl(&rho);
    let h = CMatrix::from_row_slice(
        2,
        2,
        &[
            c64(FRAC_1_SQRT_2, 0.0),
            c64(FRAC_1_SQRT_2, 0.0),
            c64(FRAC_1_SQRT_2, 0.0),
            c64(-FRAC_1_SQRT_2, 0.0),
        ],
    );
    let h_anc = Operator::from_matrix(kron(&CMatrix::identity(dim / 2, dim / 2), &h));
    let rotated = evolve(&twirled, &h_anc)?;
    let diag = rotated.diagonal_real();
    let populations: Vec<f64> = (0..dim / 2).map(|s| diag[s * 2] + diag[s * 2 + 1]).collect();
    let p_marked = marked.iter().map(|&m| populations[m]).sum();
    Ok(ReadoutResult {
        populations,
        p_marked,
    })
}
