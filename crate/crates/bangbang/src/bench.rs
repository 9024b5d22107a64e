//! Timing harness: bang-bang propagator evaluation versus the
//! smooth-modulation baseline.
//!
//! The BB engine pays one eigendecomposition per species at cache-build time
//! and then multiplies precomputed segment factors, while the SM baseline
//! exponentiates a Hamiltonian for every segment. The harness measures both
//! on the same randomized sequences across system sizes and duty cycles,
//! checking cross-engine agreement before any timing is recorded. Cache
//! build time is reported as its own column, never amortized into τ_BB.

use crate::channels::unitary_fidelity;
use crate::error::{Error, Result};
use crate::propagator::{
    bb_propagator, build_cache, random_bb_sequence, sm_from_bb, sm_propagator,
};
use crate::spinsys::{single_species_system, SpinSystem};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

/// One measured grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchPoint {
    pub n_spins: usize,
    /// segment count K
    pub segments: usize,
    /// fraction of segments pulsed
    pub duty: f64,
    /// median wall time of the SM baseline (s)
    pub tau_sm: f64,
    /// median wall time of one BB evaluation, cache excluded (s)
    pub tau_bb: f64,
    /// median wall time of the one-time cache build (s)
    pub tau_cache: f64,
    /// τ_SM / τ_BB
    pub ratio: f64,
}

/// Test-bench spin system: a single-species chain with spread offsets and
/// nearest-neighbour J couplings, weakly coupled (diagonal internal
/// Hamiltonian, the BB fast-path regime).
pub fn bench_system(n_spins: usize) -> Result<SpinSystem> {
    let offsets = (0..n_spins)
        .map(|r| 2.0 * std::f64::consts::PI * 50.0 * (r as f64 - (n_spins - 1) as f64 / 2.0))
        .collect();
    let mut j = DMatrix::zeros(n_spins, n_spins);
    for r in 0..n_spins.saturating_sub(1) {
        j[(r, r + 1)] = 10.0;
        j[(r + 1, r)] = 10.0;
    }
    single_species_system(
        "H",
        2.0 * std::f64::consts::PI * 1.0e4,
        offsets,
        j,
        DMatrix::zeros(n_spins, n_spins),
        true,
    )
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn time_median<F: FnMut() -> Result<()>>(repeats: usize, mut f: F) -> Result<f64> {
    // one warmup pass keeps allocator/cache effects out of the first sample
    f()?;
    let mut samples = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let t0 = Instant::now();
        f()?;
        samples.push(t0.elapsed().as_secs_f64());
    }
    Ok(median(samples))
}

/// Measure one (system size, duty) point on a fresh random sequence.
/// Both engines must agree (|F_u − 1| ≤ 1e-9) before timing starts.
pub fn bench_point(
    system: &SpinSystem,
    segments: usize,
    duty: f64,
    dt: f64,
    repeats: usize,
    rng: &mut ChaCha8Rng,
) -> Result<BenchPoint> {
    if repeats == 0 {
        return Err(Error::InvalidConfig("repeats must be ≥ 1".into()));
    }
    let seq = random_bb_sequence(system, segments, dt, duty, rng)?;
    let sm_seq = sm_from_bb(system, &seq)?;

    // correctness gate: never benchmark a wrong answer
    let cache = build_cache(system, dt)?;
    let u_bb = bb_propagator(&cache, &seq)?;
    let u_sm = sm_propagator(system, &sm_seq)?;
    let f = unitary_fidelity(&u_sm, &u_bb)?;
    if (f - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidState(format!(
            "cross-engine check failed before timing: |F_u - 1| = {:e}",
            (f - 1.0).abs()
        )));
    }

    let tau_cache = time_median(repeats, || build_cache(system, dt).map(|_| ()))?;
    let tau_bb = time_median(repeats, || bb_propagator(&cache, &seq).map(|_| ()))?;
    let tau_sm = time_median(repeats, || sm_propagator(system, &sm_seq).map(|_| ()))?;

    Ok(BenchPoint {
        n_spins: system.n_spins(),
        segments,
        duty,
        tau_sm,
        tau_bb,
        tau_cache,
        ratio: tau_sm / tau_bb,
    })
}

/// Run the full grid (every size × every duty), strictly sequentially, on
/// sequences drawn from one seeded stream. Timing varies run to run; the
/// sequences and the pass/fail of the correctness gate do not.
pub fn run_benchmark(
    sizes: &[usize],
    duties: &[f64],
    segments: usize,
    dt: f64,
    repeats: usize,
    seed: u64,
) -> Result<Vec<BenchPoint>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(sizes.len() * duties.len());
    for &n in sizes {
        let system = bench_system(n)?;
        for &duty in duties {
            points.push(bench_point(&system, segments, duty, dt, repeats, &mut rng)?);
        }
    }
    Ok(points)
}

/// CSV table of measured points.
pub fn to_csv(points: &[BenchPoint]) -> String {
    let mut out = String::from("n_spins,K,duty,tau_sm_s,tau_bb_s,tau_cache_s,ratio\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            p.n_spins, p.segments, p.duty, p.tau_sm, p.tau_bb, p.tau_cache, p.ratio
        ));
    }
    out
}

/// Two-column (duty, ratio) plot data for a fixed system size.
pub fn plot_data(points: &[BenchPoint], n_spins: usize) -> String {
    let mut out = String::from("# duty ratio\n");
    for p in points.iter().filter(|p| p.n_spins == n_spins) {
        out.push_str(&format!("{} {}\n", p.duty, p.ratio));
    }
    out
}
