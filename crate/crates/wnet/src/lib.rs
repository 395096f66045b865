//! Heralded W-state generation across cavity-QED network nodes.
//!
//! The crate simulates and analyzes a two-stage scheme for distributing
//! W-type entanglement among remote three-level atoms, each parked in a
//! leaky cavity behind a balanced photon-detection network:
//!
//! * **seeding**: a two-round, interference-heralded protocol that leaves a
//!   small atomic W (or Dicke) state behind whenever the rounds' click counts
//!   come out right. Simulated with quantum-jump trajectories on the full
//!   multi-node state, including detector and transmission inefficiency.
//! * **breeding**: an exact account of the parity-check conversion that fuses
//!   two N-qubit W registers into one of size 2(N-1), with its success,
//!   recycle, and loss branches.
//! * **resources**: closed-form overhead of growing large W states by
//!   repeated breeding versus direct concatenated seeding, plus Monte Carlo
//!   cross-checks of the same accounting.
//!
//! `hilbert` carries the shared dense state-vector plumbing, and `cli` exposes
//! the lot as a command-line tool with CSV/JSON output.

pub mod hilbert;
pub mod seeding;
pub mod breeding;
pub mod resources;
pub mod cli;
