//! Bang-bang quantum control toolkit for coupled spin-1/2 systems.
//!
//! The crate simulates and optimizes pulse sequences whose RF amplitude
//! switches between zero and a per-channel maximum ("bang-bang" control):
//!
//! * [`spinsys`] — spin systems, spin operators, and the secular internal
//!   Hamiltonian.
//! * [`propagator`] — pulse-sequence representations and fast propagator
//!   evaluation from one-time-computed basic propagators, plus a
//!   smooth-modulation reference engine.
//! * [`channels`] — density matrices, unitary/state fidelities, twirling,
//!   and twirled sequence evolution.
//! * [`gaopt`] — genetic-algorithm sequence synthesis against unitary and
//!   state-preparation objectives with RF-inhomogeneity-robust fitness.
//! * [`ofpqs`] — optimal fixed-point quantum search: phase schedules, oracle
//!   and Grover-iterate construction, end-to-end simulation.
//! * [`statprep`] — thermal-equilibrium and pseudopure-state targets.
//! * [`bench`] — timing harness comparing the bang-bang engine with the
//!   smooth-modulation baseline.
//! * [`io`] — file formats: system description, sequence files, matrices,
//!   GA config.

pub mod bench;
pub mod channels;
pub mod error;
pub mod gaopt;
pub mod io;
pub mod linalg;
pub mod ofpqs;
pub mod propagator;
pub mod spinsys;
pub mod statprep;

pub use error::{Error, Result};
