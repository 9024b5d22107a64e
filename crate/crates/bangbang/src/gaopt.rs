//! Genetic-algorithm synthesis of bang-bang sequences.
//!
//! A genome carries one on/off bit and one phase gene per (segment, species)
//! slot, plus optional twirl-position genes; it decodes directly to a
//! [`BBSequence`]. Fitness is the RF-scale-averaged gate fidelity F_u against
//! a target unitary, or state fidelity F_s against a target deviation density
//! matrix (twirl genes allowed only for the latter). The search itself is a
//! plain generational GA: tournament selection, uniform crossover, bit-flip /
//! wrapped Gaussian phase-jitter / twirl random-walk mutation, elitism, and
//! an optional early-stop fitness target. Runs are deterministic for a fixed
//! seed; fitness evaluations are pure and may run in parallel.

use crate::channels::{
    bb_evolve_with_twirls, state_fidelity, unitary_fidelity, DensityMatrix, StateKind,
    DEFAULT_RF_GRID,
};
use crate::error::{Error, Result};
use crate::propagator::{build_cache, bb_propagator, BBSequence, Event, Phase, PropagatorCache};
use crate::spinsys::{Operator, SpinSystem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::time::{Duration, Instant};

/// Candidate pulse program in gene form. Phase genes are stored in degrees
/// (like [`Phase`]) so decode∘encode is the exact identity.
#[derive(Debug, Clone, PartialEq)]
pub struct Genome {
    segments: usize,
    n_species: usize,
    /// pulse-on bits, index = segment·n_species + species
    on: Vec<bool>,
    /// phase genes in degrees, wrapped to [0, 360); same indexing
    phases: Vec<f64>,
    /// twirl-position genes, each in [0, segments]
    twirls: Vec<usize>,
}

impl Genome {
    pub fn new(
        segments: usize,
        n_species: usize,
        on: Vec<bool>,
        phases: Vec<f64>,
        twirls: Vec<usize>,
    ) -> Result<Self> {
        let slots = segments * n_species;
        if on.len() != slots || phases.len() != slots {
            return Err(Error::GenomeShape(format!(
                "expected {slots} gene slots ({segments} segments × {n_species} species), \
                 got {} bits and {} phases",
                on.len(),
                phases.len()
            )));
        }
        if let Some(&bad) = twirls.iter().find(|&&t| t > segments) {
            return Err(Error::GenomeShape(format!(
                "twirl gene {bad} beyond segment count {segments}"
            )));
        }
        let phases = phases
            .into_iter()
            .map(|p| Phase::from_degrees(p).degrees())
            .collect();
        Ok(Self {
            segments,
            n_species,
            on,
            phases,
            twirls,
        })
    }

    /// All-delay genome; twirl genes start evenly spread over the interior.
    pub fn all_off(segments: usize, n_species: usize, n_twirls: usize) -> Self {
        let slots = segments * n_species;
        let twirls = (1..=n_twirls)
            .map(|i| i * segments / (n_twirls + 1))
            .collect();
        Self {
            segments,
            n_species,
            on: vec![false; slots],
            phases: vec![0.0; slots],
            twirls,
        }
    }

    /// Uniformly random genome: each slot pulsed with probability
    /// `on_rate`, phases uniform, twirl genes uniform in [0, K].
    pub fn random<R: Rng>(
        segments: usize,
        n_species: usize,
        n_twirls: usize,
        on_rate: f64,
        rng: &mut R,
    ) -> Self {
        let slots = segments * n_species;
        let on = (0..slots).map(|_| rng.gen_bool(on_rate)).collect();
        let phases = (0..slots).map(|_| rng.gen_range(0.0..360.0)).collect();
        let twirls = (0..n_twirls).map(|_| rng.gen_range(0..=segments)).collect();
        Self {
            segments,
            n_species,
            on,
            phases,
            twirls,
        }
    }

    /// Gene form of an existing sequence (inverse of [`Genome::decode`]).
    pub fn from_sequence(seq: &BBSequence) -> Self {
        let segments = seq.n_segments();
        let n_species = seq.n_species();
        let mut on = Vec::with_capacity(segments * n_species);
        let mut phases = Vec::with_capacity(segments * n_species);
        for row in seq.events() {
            for e in row {
                match e {
                    Event::Delay => {
                        on.push(false);
                        phases.push(0.0);
                    }
                    Event::Pulse(p) => {
                        on.push(true);
                        phases.push(p.degrees());
                    }
                }
            }
        }
        Self {
            segments,
            n_species,
            on,
            phases,
            twirls: seq.twirl_boundaries().to_vec(),
        }
    }

    pub fn segments(&self) -> usize {
        self.segments
    }

    pub fn n_species(&self) -> usize {
        self.n_species
    }

    pub fn n_twirl_genes(&self) -> usize {
        self.twirls.len()
    }

    /// Materialize the sequence: off → delay, on → pulse at the phase gene,
    /// twirl genes sorted and deduplicated into boundaries.
    pub fn decode(&self, dt: f64, system: &SpinSystem) -> Result<BBSequence> {
        if system.n_species() != self.n_species {
            return Err(Error::GenomeShape(format!(
                "genome encodes {} species, system has {}",
                self.n_species,
                system.n_species()
            )));
        }
        let labels: Vec<String> = system.species().iter().map(|s| s.label.clone()).collect();
        let mut events = Vec::with_capacity(self.segments);
        for k in 0..self.segments {
            let row = (0..self.n_species)
                .map(|s| {
                    let i = k * self.n_species + s;
                    if self.on[i] {
                        Event::Pulse(Phase::from_degrees(self.phases[i]))
                    } else {
                        Event::Delay
                    }
                })
                .collect();
            events.push(row);
        }
        let mut twirls = self.twirls.clone();
        twirls.sort_unstable();
        twirls.dedup();
        BBSequence::new(dt, labels, events, twirls)
    }
}

/// GA hyperparameters plus the gene-shape inputs (segment count, twirl-gene
/// count, Δt). Maps 1:1 to the optimizer config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaConfig {
    /// sequence length K (number of Δt segments)
    pub segments: usize,
    /// number of twirl-position genes (0 for unitary targets)
    pub n_twirls: usize,
    /// segment duration (s)
    pub dt: f64,
    pub population: usize,
    pub generations: usize,
    /// tournament size for parent selection
    pub tournament: usize,
    /// probability a child is produced by uniform crossover
    pub crossover_rate: f64,
    /// per-gene on/off flip probability
    pub bit_flip_rate: f64,
    /// per-gene phase perturbation probability
    pub phase_mut_rate: f64,
    /// Gaussian jitter width for perturbed phases (degrees, wrapped)
    pub phase_sigma_degrees: f64,
    /// per-gene twirl-position random-walk probability
    pub twirl_move_rate: f64,
    /// genomes copied unchanged into the next generation
    pub elitism: usize,
    /// probability a slot starts pulsed in random initial genomes
    pub init_on_rate: f64,
    /// RF-amplitude scale grid averaged over by the fitness
    pub rf_scales: Vec<f64>,
    /// stop as soon as the best fitness reaches this value
    pub fitness_target: Option<f64>,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            segments: 1,
            n_twirls: 0,
            dt: crate::propagator::DEFAULT_DT,
            population: 64,
            generations: 500,
            tournament: 3,
            crossover_rate: 0.8,
            bit_flip_rate: 0.02,
            phase_mut_rate: 0.05,
            phase_sigma_degrees: 20.0,
            twirl_move_rate: 0.1,
            elitism: 2,
            init_on_rate: 0.5,
            rf_scales: DEFAULT_RF_GRID.to_vec(),
            fitness_target: None,
            seed: 0,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.segments == 0 {
            return Err(Error::InvalidConfig("segments must be ≥ 1".into()));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if self.population < 2 {
            return Err(Error::InvalidConfig("population must be ≥ 2".into()));
        }
        if self.tournament == 0 || self.tournament > self.population {
            return Err(Error::InvalidConfig(format!(
                "tournament size must lie in [1, population], got {}",
                self.tournament
            )));
        }
        if self.elitism >= self.population {
            return Err(Error::InvalidConfig(
                "elitism must leave room for offspring".into(),
            ));
        }
        for (name, r) in [
            ("crossover_rate", self.crossover_rate),
            ("bit_flip_rate", self.bit_flip_rate),
            ("phase_mut_rate", self.phase_mut_rate),
            ("twirl_move_rate", self.twirl_move_rate),
            ("init_on_rate", self.init_on_rate),
        ] {
            if !(r.is_finite() && (0.0..=1.0).contains(&r)) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must lie in [0, 1], got {r}"
                )));
            }
        }
        if !(self.phase_sigma_degrees.is_finite() && self.phase_sigma_degrees >= 0.0) {
            return Err(Error::InvalidConfig(
                "phase_sigma_degrees must be nonnegative".into(),
            ));
        }
        if self.rf_scales.is_empty() || self.rf_scales.iter().any(|&s| !(s.is_finite() && s > 0.0))
        {
            return Err(Error::InvalidConfig(
                "rf_scales must be nonempty and positive".into(),
            ));
        }
        if let Some(t) = self.fitness_target {
            if !t.is_finite() {
                return Err(Error::InvalidConfig("fitness_target must be finite".into()));
            }
        }
        Ok(())
    }
}

/// A pure, thread-safe fitness function over genomes.
pub trait FitnessObjective: Sync {
    /// Number of control species the genome must encode.
    fn species_count(&self) -> usize;

    /// Fitness in [0, 1]; must be deterministic and side-effect-free.
    fn evaluate(&self, genome: &Genome) -> Result<f64>;
}

fn scaled_caches(system: &SpinSystem, dt: f64, scales: &[f64]) -> Result<Vec<PropagatorCache>> {
    scales
        .iter()
        .map(|&s| build_cache(&system.with_scaled_amplitudes(s), dt))
        .collect()
}

/// Mean F_u against a target unitary over the RF scale grid. Rejects twirl
/// genes: a twirl is not a unitary, so no gate target can contain one.
pub struct UnitaryObjective {
    target: Operator,
    caches: Vec<PropagatorCache>,
    dt: f64,
}

impl UnitaryObjective {
    pub fn new(system: &SpinSystem, target: Operator, config: &GaConfig) -> Result<Self> {
        config.validate()?;
        if target.dim() != system.dim() {
            return Err(Error::DimensionMismatch {
                expected: system.dim(),
                got: target.dim(),
            });
        }
        Ok(Self {
            target,
            caches: scaled_caches(system, config.dt, &config.rf_scales)?,
            dt: config.dt,
        })
    }
}

impl FitnessObjective for UnitaryObjective {
    fn species_count(&self) -> usize {
        self.caches[0].system().n_species()
    }

    fn evaluate(&self, genome: &Genome) -> Result<f64> {
        if genome.n_twirl_genes() != 0 {
            return Err(Error::TwirlGenesOnUnitaryObjective);
        }
        let seq = genome.decode(self.dt, self.caches[0].system())?;
        let mut sum = 0.0;
        for cache in &self.caches {
            let u = bb_propagator(cache, &seq)?;
            sum += unitary_fidelity(&self.target, &u)?;
        }
        Ok(sum / self.caches.len() as f64)
    }
}

/// Mean F_s from a fixed input deviation to a target deviation over the RF
/// scale grid, with twirls applied at the genome's boundaries.
pub struct StateObjective {
    rho_in: DensityMatrix,
    rho_target: DensityMatrix,
    caches: Vec<PropagatorCache>,
    dt: f64,
}

impl StateObjective {
    pub fn new(
        system: &SpinSystem,
        rho_in: DensityMatrix,
        rho_target: DensityMatrix,
        config: &GaConfig,
    ) -> Result<Self> {
        config.validate()?;
        for rho in [&rho_in, &rho_target] {
            if rho.kind() != StateKind::TracelessDeviation {
                return Err(Error::InvalidState(
                    "state objective scores traceless deviations; convert with deviation()".into(),
                ));
            }
            if rho.dim() != system.dim() {
                return Err(Error::DimensionMismatch {
                    expected: system.dim(),
                    got: rho.dim(),
                });
            }
        }
        // reject an unusable target up front rather than per evaluation
        state_fidelity(&rho_target, &rho_target)?;
        Ok(Self {
            rho_in,
            rho_target,
            caches: scaled_caches(system, config.dt, &config.rf_scales)?,
            dt: config.dt,
        })
    }
}

impl FitnessObjective for StateObjective {
    fn species_count(&self) -> usize {
        self.caches[0].system().n_species()
    }

    fn evaluate(&self, genome: &Genome) -> Result<f64> {
        let seq = genome.decode(self.dt, self.caches[0].system())?;
        let mut sum = 0.0;
        for cache in &self.caches {
            let out = bb_evolve_with_twirls(cache, &seq, &self.rho_in)?;
            // a twirl can annihilate the deviation entirely; that is a
            // worthless candidate, not an error
            sum += match state_fidelity(&self.rho_target, &out) {
                Ok(f) => f,
                Err(Error::ZeroNormState) => 0.0,
                Err(e) => return Err(e),
            };
        }
        Ok(sum / self.caches.len() as f64)
    }
}

/// One-off genome score against a unitary target (builds the per-scale
/// caches each call; use [`UnitaryObjective`] inside loops).
pub fn fitness_unitary(
    genome: &Genome,
    system: &SpinSystem,
    target: &Operator,
    config: &GaConfig,
) -> Result<f64> {
    UnitaryObjective::new(system, target.clone(), config)?.evaluate(genome)
}

/// One-off genome score against a state target (see [`StateObjective`]).
pub fn fitness_state(
    genome: &Genome,
    system: &SpinSystem,
    rho_in: &DensityMatrix,
    rho_target: &DensityMatrix,
    config: &GaConfig,
) -> Result<f64> {
    StateObjective::new(system, rho_in.clone(), rho_target.clone(), config)?.evaluate(genome)
}

/// Outcome of a GA run.
#[derive(Debug, Clone)]
pub struct OptimizationResult {
    pub best: Genome,
    pub best_fitness: f64,
    /// best fitness after each generation, index 0 = initial population;
    /// nondecreasing by elitism
    pub trace: Vec<f64>,
    pub evaluations: usize,
    pub wall_time: Duration,
}

#[cfg(feature = "parallel")]
fn evaluate_all<O: FitnessObjective + ?Sized>(
    objective: &O,
    population: &[Genome],
) -> Result<Vec<f64>> {
    use rayon::prelude::*;
    population.par_iter().map(|g| objective.evaluate(g)).collect()
}

#[cfg(not(feature = "parallel"))]
fn evaluate_all<O: FitnessObjective + ?Sized>(
    objective: &O,
    population: &[Genome],
) -> Result<Vec<f64>> {
    population.iter().map(|g| objective.evaluate(g)).collect()
}

fn tournament_pick<R: Rng>(fitness: &[f64], k: usize, rng: &mut R) -> usize {
    let mut best = rng.gen_range(0..fitness.len());
    for _ in 1..k {
        let c = rng.gen_range(0..fitness.len());
        if fitness[c] > fitness[best] {
            best = c;
        }
    }
    best
}

fn uniform_crossover<R: Rng>(a: &Genome, b: &Genome, rng: &mut R) -> Genome {
    let mut child = a.clone();
    for i in 0..child.on.len() {
        if rng.gen_bool(0.5) {
            child.on[i] = b.on[i];
            child.phases[i] = b.phases[i];
        }
    }
    for i in 0..child.twirls.len() {
        if rng.gen_bool(0.5) {
            child.twirls[i] = b.twirls[i];
        }
    }
    child
}

fn mutate<R: Rng>(g: &mut Genome, config: &GaConfig, rng: &mut R) {
    for i in 0..g.on.len() {
        if rng.gen_bool(config.bit_flip_rate) {
            g.on[i] = !g.on[i];
        }
        if rng.gen_bool(config.phase_mut_rate) {
            // Box–Muller normal; keeps the rand dependency distribution-free
            let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let normal = (-2.0 * u1.ln()).sqrt() * u2.cos();
            let jittered = g.phases[i] + config.phase_sigma_degrees * normal;
            g.phases[i] = Phase::from_degrees(jittered).degrees();
        }
    }
    if g.segments > 0 {
        let step_span = (g.segments / 10).max(1) as i64;
        for t in g.twirls.iter_mut() {
            if rng.gen_bool(config.twirl_move_rate) {
                let step = rng.gen_range(-step_span..=step_span);
                *t = (*t as i64 + step).clamp(0, g.segments as i64) as usize;
            }
        }
    }
}

/// Run the GA. `seeds` are injected into the initial population (handy for
/// warm restarts); the rest is filled with random genomes. Deterministic for
/// fixed (seed, config, objective): all randomness flows from one ChaCha8
/// stream consumed only in the sequential selection/variation loop.
pub fn run_ga<O: FitnessObjective + ?Sized>(
    objective: &O,
    config: &GaConfig,
    seeds: &[Genome],
) -> Result<OptimizationResult> {
    config.validate()?;
    let started = Instant::now();
    let n_species = objective.species_count();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut population: Vec<Genome> = Vec::with_capacity(config.population);
    for s in seeds.iter().take(config.population) {
        if s.segments() != config.segments
            || s.n_species() != n_species
            || s.n_twirl_genes() != config.n_twirls
        {
            return Err(Error::GenomeShape(format!(
                "seed genome shape ({} segments, {} species, {} twirls) does not match \
                 config ({}, {}, {})",
                s.segments(),
                s.n_species(),
                s.n_twirl_genes(),
                config.segments,
                n_species,
                config.n_twirls
            )));
        }
        population.push(s.clone());
    }
    while population.len() < config.population {
        population.push(Genome::random(
            config.segments,
            n_species,
            config.n_twirls,
            config.init_on_rate,
            &mut rng,
        ));
    }

    let mut fitness = evaluate_all(objective, &population)?;
    let mut evaluations = population.len();
    let mut trace = Vec::with_capacity(config.generations + 1);

    let best_of = |fit: &[f64]| {
        let mut b = 0;
        for i in 1..fit.len() {
            if fit[i] > fit[b] {
                b = i;
            }
        }
        b
    };
    let mut best_idx = best_of(&fitness);
    trace.push(fitness[best_idx]);

    let reached = |f: f64| config.fitness_target.is_some_and(|t| f >= t);

    if !reached(fitness[best_idx]) {
        for _ in 0..config.generations {
            // rank indices by fitness, best first; ties by index for determinism
            let mut order: Vec<usize> = (0..population.len()).collect();
            order.sort_by(|&a, &b| fitness[b].total_cmp(&fitness[a]).then(a.cmp(&b)));

            let mut next: Vec<Genome> = order[..config.elitism]
                .iter()
                .map(|&i| population[i].clone())
                .collect();
            while next.len() < config.population {
                let p1 = tournament_pick(&fitness, config.tournament, &mut rng);
                let mut child = if rng.gen_bool(config.crossover_rate) {
                    let p2 = tournament_pick(&fitness, config.tournament, &mut rng);
                    uniform_crossover(&population[p1], &population[p2], &mut rng)
                } else {
                    population[p1].clone()
                };
                mutate(&mut child, config, &mut rng);
                next.push(child);
            }

            population = next;
            fitness = evaluate_all(objective, &population)?;
            evaluations += population.len();
            best_idx = best_of(&fitness);
            trace.push(fitness[best_idx]);
            if reached(fitness[best_idx]) {
                break;
            }
        }
    }

    Ok(OptimizationResult {
        best: population[best_idx].clone(),
        best_fitness: fitness[best_idx],
        trace,
        evaluations,
        wall_time: started.elapsed(),
    })
}
