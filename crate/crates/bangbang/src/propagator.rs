//! Pulse-sequence representations and propagator engines.
//!
//! The bang-bang (BB) engine exploits the structure of constant-amplitude
//! pulses: the full-power x-phase segment propagator X_j = exp{−i(H₀ + Ω_j
//! S_jx)Δt} of each species is computed once, and an arbitrary-phase pulse is
//! obtained by conjugating it with the diagonal z-rotation Z = exp(−iφ S_jz),
//! so evaluating a sequence needs only matrix products. Delay segments reuse
//! the one-time delay propagator U_d = exp(−i H₀ Δt); when H₀ is diagonal
//! (weak coupling) applying U_d is a row scaling instead of a full product.
//!
//! The smooth-modulation (SM) engine exponentiates every segment Hamiltonian
//! exactly; it is the baseline the BB engine is benchmarked against and the
//! oracle that validates it.

use crate::error::{Error, Result};
use crate::linalg::{c64, CMatrix, CVector};
use crate::spinsys::{collective_operator, internal_hamiltonian, Axis, Operator, SpinSystem};
use nalgebra::DVector;

/// Default segment duration (s).
pub const DEFAULT_DT: f64 = 5e-6;

/// Pulse phase. Stored in degrees because the sequence file format is
/// degree-valued and parse∘emit must be the exact identity; radians are
/// derived on demand and always fall in [0, 2π).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Phase {
    degrees: f64,
}

impl Phase {
    /// Wrap a degree value into [0, 360).
    pub fn from_degrees(deg: f64) -> Self {
        assert!(deg.is_finite(), "phase must be finite");
        let mut d = deg.rem_euclid(360.0);
        if d >= 360.0 {
            // rem_euclid of a tiny negative value rounds to exactly 360.0
            d = 0.0;
        }
        Self { degrees: d }
    }

    /// Wrap a radian value into [0, 2π) (stored as its degree equivalent).
    pub fn from_radians(rad: f64) -> Self {
        Self::from_degrees(rad.to_degrees())
    }

    pub fn degrees(self) -> f64 {
        self.degrees
    }

    pub fn radians(self) -> f64 {
        self.degrees.to_radians()
    }
}

/// One control slot of one species in one segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Event {
    Delay,
    Pulse(Phase),
}

/// A bang-bang pulse program: K segments of length Δt, one event per species
/// per segment, plus twirl boundaries (a twirl is applied after that many
/// segments; see `channels::bb_evolve_with_twirls`).
#[derive(Debug, Clone, PartialEq)]
pub struct BBSequence {
    dt: f64,
    species_labels: Vec<String>,
    /// events[segment][species]
    events: Vec<Vec<Event>>,
    twirl_boundaries: Vec<usize>,
}

impl BBSequence {
    pub fn new(
        dt: f64,
        species_labels: Vec<String>,
        events: Vec<Vec<Event>>,
        twirl_boundaries: Vec<usize>,
    ) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidSequence(format!("dt must be positive, got {dt}")));
        }
        if species_labels.is_empty() {
            return Err(Error::InvalidSequence("at least one species required".into()));
        }
        let n_species = species_labels.len();
        for (k, row) in events.iter().enumerate() {
            if row.len() != n_species {
                return Err(Error::InvalidSequence(format!(
                    "segment {} has {} events, expected {}",
                    k + 1,
                    row.len(),
                    n_species
                )));
            }
        }
        let k = events.len();
        for w in twirl_boundaries.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::InvalidSequence(format!(
                    "twirl boundaries must be strictly increasing, got {} then {}",
                    w[0], w[1]
                )));
            }
        }
        if let Some(&last) = twirl_boundaries.last() {
            if last > k {
                return Err(Error::InvalidSequence(format!(
                    "twirl boundary {last} beyond segment count {k}"
                )));
            }
        }
        Ok(Self {
            dt,
            species_labels,
            events,
            twirl_boundaries,
        })
    }

    /// All-delay sequence of `k` segments.
    pub fn delays(dt: f64, species_labels: Vec<String>, k: usize) -> Result<Self> {
        let n = species_labels.len();
        Self::new(dt, species_labels, vec![vec![Event::Delay; n]; k], Vec::new())
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_segments(&self) -> usize {
        self.events.len()
    }

    pub fn n_species(&self) -> usize {
        self.species_labels.len()
    }

    pub fn species_labels(&self) -> &[String] {
        &self.species_labels
    }

    pub fn events(&self) -> &[Vec<Event>] {
        &self.events
    }

    pub fn twirl_boundaries(&self) -> &[usize] {
        &self.twirl_boundaries
    }

    /// Total duration T = K·Δt.
    pub fn duration(&self) -> f64 {
        self.dt * self.events.len() as f64
    }

    /// Fraction of segments with at least one pulse.
    pub fn duty_cycle(&self) -> f64 {
        if self.events.is_empty() {
            return 0.0;
        }
        let pulsed = self
            .events
            .iter()
            .filter(|row| row.iter().any(|e| matches!(e, Event::Pulse(_))))
            .count();
        pulsed as f64 / self.events.len() as f64
    }

    /// Same sequence with the twirl boundaries removed.
    pub fn without_twirls(&self) -> BBSequence {
        let mut s = self.clone();
        s.twirl_boundaries.clear();
        s
    }
}

/// One control slot of the smooth-modulation engine: arbitrary amplitude
/// (rad/s) within [0, Ω_j] and phase (radians).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmControl {
    pub amplitude: f64,
    pub phase: f64,
}

/// A smooth-modulation pulse program: per-segment, per-species amplitude and
/// phase profiles.
#[derive(Debug, Clone, PartialEq)]
pub struct SMSequence {
    pub dt: f64,
    /// segments[segment][species]
    pub segments: Vec<Vec<SmControl>>,
}

impl SMSequence {
    pub fn n_segments(&self) -> usize {
        self.segments.len()
    }
}

/// SM sequence that mimics a BB one: Delay → amplitude 0, Pulse(φ) → full
/// amplitude Ω_j at phase φ. Twirl boundaries are not representable here and
/// must be absent.
pub fn sm_from_bb(system: &SpinSystem, seq: &BBSequence) -> Result<SMSequence> {
    check_sequence_system(system, seq)?;
    if !seq.twirl_boundaries().is_empty() {
        return Err(Error::TwirlBoundariesPresent);
    }
    let segments = seq
        .events()
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .map(|(j, e)| match e {
                    Event::Delay => SmControl {
                        amplitude: 0.0,
                        phase: 0.0,
                    },
                    Event::Pulse(p) => SmControl {
                        amplitude: system.species()[j].max_amplitude,
                        phase: p.radians(),
                    },
                })
                .collect()
        })
        .collect();
    Ok(SMSequence {
        dt: seq.dt(),
        segments,
    })
}

/// exp(−i H t) for a Hermitian-tagged generator, via eigendecomposition.
pub fn expm_hermitian_generator(h: &Operator, t: f64) -> Result<Operator> {
    if !h.is_hermitian() {
        return Err(Error::NotHermitian {
            max_dev: crate::linalg::hermiticity_error(h.matrix()),
        });
    }
    Ok(Operator::from_matrix(expm_of_matrix(h.matrix(), t)))
}

/// Internal form of `expm_hermitian_generator` working directly on a matrix
/// the caller already knows is Hermitian.
fn expm_of_matrix(h: &CMatrix, t: f64) -> CMatrix {
    let eig = h.clone().symmetric_eigen();
    let mut scaled = eig.eigenvectors.clone();
    for (k, mut col) in scaled.column_iter_mut().enumerate() {
        let phase = -eig.eigenvalues[k] * t;
        col *= c64(phase.cos(), phase.sin());
    }
    scaled * eig.eigenvectors.adjoint()
}

/// One-time-computed propagators for a (system, Δt) pair.
#[derive(Debug, Clone)]
pub struct PropagatorCache {
    system: SpinSystem,
    dt: f64,
    /// X_j per species
    basics: Vec<CMatrix>,
    /// U_d, dense form
    delay: CMatrix,
    /// diagonal of U_d when H₀ is diagonal in the computational basis
    delay_diag: Option<CVector>,
    /// per species: S_jz eigenvalue m_j(state) for every basis state
    mz_tables: Vec<Vec<f64>>,
    use_fast_path: bool,
}

/// Build the cache: X_j = exp{−i(H₀ + Ω_j S_jx)Δt} per species and
/// U_d = exp(−i H₀ Δt). When H₀ is diagonal (weak coupling), U_d is formed
/// entrywise and the diagonal fast path is enabled.
pub fn build_cache(system: &SpinSystem, dt: f64) -> Result<PropagatorCache> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidSequence(format!("dt must be positive, got {dt}")));
    }
    let h0 = internal_hamiltonian(system);
    let dim = system.dim();

    let mut basics = Vec::with_capacity(system.n_species());
    for j in 0..system.n_species() {
        let sx = collective_operator(system, j, Axis::X)?;
        let omega = system.species()[j].max_amplitude;
        let gen = h0.matrix() + sx.matrix() * c64(omega, 0.0);
        basics.push(expm_of_matrix(&gen, dt));
    }

    let diagonal_h0 = (0..dim).all(|i| {
        (0..dim).all(|j| i == j || h0.matrix()[(i, j)] == c64(0.0, 0.0))
    });
    let (delay, delay_diag) = if diagonal_h0 {
        let diag = CVector::from_iterator(
            dim,
            (0..dim).map(|i| {
                let phase = -h0.matrix()[(i, i)].re * dt;
                c64(phase.cos(), phase.sin())
            }),
        );
        (CMatrix::from_diagonal(&diag), Some(diag))
    } else {
        (expm_of_matrix(h0.matrix(), dt), None)
    };

    let mz_tables = (0..system.n_species())
        .map(|j| species_mz_table(system, j))
        .collect();

    Ok(PropagatorCache {
        system: system.clone(),
        dt,
        basics,
        delay,
        delay_diag,
        mz_tables,
        use_fast_path: true,
    })
}

fn species_mz_table(system: &SpinSystem, j: usize) -> Vec<f64> {
    let n = system.n_spins();
    let dim = system.dim();
    let spins = &system.species()[j].spins;
    (0..dim)
        .map(|state| {
            spins
                .iter()
                .map(|&r| crate::spinsys::mz(n, r, state))
                .sum()
        })
        .collect()
}

impl PropagatorCache {
    pub fn system(&self) -> &SpinSystem {
        &self.system
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn dim(&self) -> usize {
        self.system.dim()
    }

    /// Basic propagator X_j of species `j`.
    pub fn basic(&self, j: usize) -> Result<&CMatrix> {
        self.basics.get(j).ok_or(Error::UnknownSpecies {
            index: j,
            n_species: self.system.n_species(),
        })
    }

    /// Delay propagator U_d (dense form).
    pub fn delay(&self) -> &CMatrix {
        &self.delay
    }

    pub fn delay_is_diagonal(&self) -> bool {
        self.delay_diag.is_some()
    }

    /// Toggle the diagonal delay shortcut (on by default). The dense route
    /// exists so the shortcut can be validated bit-for-bit against it.
    pub fn set_fast_path(&mut self, on: bool) {
        self.use_fast_path = on;
    }
}

/// Diagonal z-rotation exp(−iφ S_jz) of species `j`, computed entrywise.
pub fn z_rotation(system: &SpinSystem, species: usize, phi: f64) -> Result<Operator> {
    if species >= system.n_species() {
        return Err(Error::UnknownSpecies {
            index: species,
            n_species: system.n_species(),
        });
    }
    let table = species_mz_table(system, species);
    let dim = system.dim();
    let mut m = CMatrix::zeros(dim, dim);
    for (i, &mz) in table.iter().enumerate() {
        let angle = -phi * mz;
        m[(i, i)] = c64(angle.cos(), angle.sin());
    }
    Ok(Operator::from_matrix(m))
}

fn check_sequence_system(system: &SpinSystem, seq: &BBSequence) -> Result<()> {
    let labels: Vec<&str> = system.species().iter().map(|s| s.label.as_str()).collect();
    let seq_labels: Vec<&str> = seq.species_labels().iter().map(|s| s.as_str()).collect();
    if labels != seq_labels {
        return Err(Error::CacheMismatch(format!(
            "sequence species {seq_labels:?} != system species {labels:?}"
        )));
    }
    Ok(())
}

fn check_sequence_cache(cache: &PropagatorCache, seq: &BBSequence) -> Result<()> {
    check_sequence_system(&cache.system, seq)?;
    if seq.dt() != cache.dt {
        return Err(Error::CacheMismatch(format!(
            "sequence dt {} != cache dt {}",
            seq.dt(),
            cache.dt
        )));
    }
    Ok(())
}

/// Scratch buffers reused across segment applications.
struct Workspace {
    factor: CMatrix,
    tmp: CMatrix,
    z: CVector,
}

impl Workspace {
    fn new(dim: usize) -> Self {
        Self {
            factor: CMatrix::zeros(dim, dim),
            tmp: CMatrix::zeros(dim, dim),
            z: DVector::from_element(dim, c64(0.0, 0.0)),
        }
    }
}

/// Apply one segment's factor(s) to `u` in place (u ← U_seg · u).
fn apply_segment(cache: &PropagatorCache, events: &[Event], u: &mut CMatrix, ws: &mut Workspace) {
    let dim = cache.dim();
    let all_delay = events.iter().all(|e| matches!(e, Event::Delay));
    if all_delay {
        if let (true, Some(diag)) = (cache.use_fast_path, cache.delay_diag.as_ref()) {
            // u ← diag(d)·u is a row scaling; walk columns for locality.
            for mut col in u.column_iter_mut() {
                for (i, v) in col.iter_mut().enumerate() {
                    *v *= diag[i];
                }
            }
        } else {
            cache.delay.mul_to(u, &mut ws.tmp);
            std::mem::swap(u, &mut ws.tmp);
        }
        return;
    }
    // Pulsed factors U_jk = Z_jk X_j Z_jk†, lower species index applied first.
    for (j, event) in events.iter().enumerate() {
        let Event::Pulse(phase) = event else { continue };
        let phi = phase.radians();
        let table = &cache.mz_tables[j];
        for i in 0..dim {
            let angle = -phi * table[i];
            ws.z[i] = c64(angle.cos(), angle.sin());
        }
        let x = &cache.basics[j];
        for b in 0..dim {
            let zb = ws.z[b].conj();
            for a in 0..dim {
                ws.factor[(a, b)] = ws.z[a] * x[(a, b)] * zb;
            }
        }
        ws.factor.mul_to(u, &mut ws.tmp);
        std::mem::swap(u, &mut ws.tmp);
    }
}

/// Propagator of the segment range [start, end) of a sequence: the product
/// U_{end-1} ⋯ U_{start} (leftmost factor latest).
pub(crate) fn propagator_over(
    cache: &PropagatorCache,
    seq: &BBSequence,
    start: usize,
    end: usize,
) -> Result<CMatrix> {
    let dim = cache.dim();
    let mut u = CMatrix::identity(dim, dim);
    let mut ws = Workspace::new(dim);
    for row in &seq.events()[start..end] {
        apply_segment(cache, row, &mut u, &mut ws);
    }
    Ok(u)
}

/// Propagator of one segment.
pub fn segment_propagator(cache: &PropagatorCache, events: &[Event]) -> Result<Operator> {
    if events.len() != cache.system.n_species() {
        return Err(Error::CacheMismatch(format!(
            "segment has {} events, system has {} species",
            events.len(),
            cache.system.n_species()
        )));
    }
    let dim = cache.dim();
    let mut u = CMatrix::identity(dim, dim);
    let mut ws = Workspace::new(dim);
    apply_segment(cache, events, &mut u, &mut ws);
    Ok(Operator::from_matrix(u))
}

/// Total propagator U = U_K ⋯ U_2 U_1 of a twirl-free sequence (segment 1
/// acts first, i.e., rightmost).
pub fn bb_propagator(cache: &PropagatorCache, seq: &BBSequence) -> Result<Operator> {
    if !seq.twirl_boundaries().is_empty() {
        return Err(Error::TwirlBoundariesPresent);
    }
    bb_propagator_range(cache, seq, 0, seq.n_segments())
}

/// Propagator of the segment range [start, end) of a twirl-free sequence;
/// used by the twirled-evolution path to evaluate inter-boundary chunks.
pub(crate) fn bb_propagator_range(
    cache: &PropagatorCache,
    seq: &BBSequence,
    start: usize,
    end: usize,
) -> Result<Operator> {
    check_sequence_cache(cache, seq)?;
    if start > end || end > seq.n_segments() {
        return Err(Error::InvalidSequence(format!(
            "segment range {start}..{end} out of bounds for {} segments",
            seq.n_segments()
        )));
    }
    Ok(Operator::from_matrix(propagator_over(cache, seq, start, end)?))
}

/// Exact per-segment engine: every segment Hamiltonian
/// H₀ + Σ_j u_jk (cos φ S_jx + sin φ S_jy) is exponentiated directly.
pub fn sm_propagator(system: &SpinSystem, seq: &SMSequence) -> Result<Operator> {
    if !(seq.dt.is_finite() && seq.dt > 0.0) {
        return Err(Error::InvalidSequence(format!(
            "dt must be positive, got {}",
            seq.dt
        )));
    }
    let n_species = system.n_species();
    let dim = system.dim();
    let h0 = internal_hamiltonian(system);
    let sx: Vec<CMatrix> = (0..n_species)
        .map(|j| collective_operator(system, j, Axis::X).map(Operator::into_matrix))
        .collect::<Result<_>>()?;
    let sy: Vec<CMatrix> = (0..n_species)
        .map(|j| collective_operator(system, j, Axis::Y).map(Operator::into_matrix))
        .collect::<Result<_>>()?;

    let mut u = CMatrix::identity(dim, dim);
    let mut h = CMatrix::zeros(dim, dim);
    for (k, row) in seq.segments.iter().enumerate() {
        if row.len() != n_species {
            return Err(Error::InvalidSequence(format!(
                "segment {} has {} controls, expected {}",
                k + 1,
                row.len(),
                n_species
            )));
        }
        h.copy_from(h0.matrix());
        for (j, ctl) in row.iter().enumerate() {
            let max = system.species()[j].max_amplitude;
            if !(ctl.amplitude >= 0.0 && ctl.amplitude <= max) {
                return Err(Error::AmplitudeOutOfRange {
                    species: j,
                    amplitude: ctl.amplitude,
                    max,
                });
            }
            if ctl.amplitude == 0.0 {
                continue;
            }
            let (s, c) = ctl.phase.sin_cos();
            h += &sx[j] * c64(ctl.amplitude * c, 0.0);
            h += &sy[j] * c64(ctl.amplitude * s, 0.0);
        }
        u = expm_of_matrix(&h, seq.dt) * u;
    }
    Ok(Operator::from_matrix(u))
}

/// Uniform-random BB sequence at a given duty cycle: `round(duty·K)` segments
/// are pulsed (positions uniform without replacement, phases uniform, species
/// chosen uniformly when there are several).
pub fn random_bb_sequence<R: rand::Rng>(
    system: &SpinSystem,
    k: usize,
    dt: f64,
    duty: f64,
    rng: &mut R,
) -> Result<BBSequence> {
    let n_species = system.n_species();
    let labels = system
        .species()
        .iter()
        .map(|s| s.label.clone())
        .collect::<Vec<_>>();
    let n_pulsed = ((duty * k as f64).round() as usize).min(k);
    let mut positions: Vec<usize> = (0..k).collect();
    // partial Fisher-Yates: first n_pulsed entries are the pulsed segments
    for i in 0..n_pulsed {
        let pick = rng.gen_range(i..k);
        positions.swap(i, pick);
    }
    let mut events = vec![vec![Event::Delay; n_species]; k];
    for &pos in &positions[..n_pulsed] {
        let j = rng.gen_range(0..n_species);
        let phase = Phase::from_degrees(rng.gen_range(0.0..360.0));
        events[pos][j] = Event::Pulse(phase);
    }
    BBSequence::new(dt, labels, events, Vec::new())
}
