//! Solver and simulator for finite-horizon mean-field games among teams.
//!
//! Each team's population is summarized by its state counts; a per-team coordinator
//! picks prescriptions (local state → action distribution) from the joint mean field.
//! The crate computes Markov perfect equilibria of the exact finite-population
//! coordinator game and of its infinite-population limit, checks them against
//! agent-level simulation, and measures how well the limit approximates the finite game.

pub mod approx_metrics;
pub mod count_dynamics;
pub mod error;
pub mod game_model;
pub mod mf_limit;
pub mod mpe_finite;
pub mod rng;
pub mod simulator;
pub mod stage_nash;
pub mod static_teamnash;
pub mod transport;

pub use count_dynamics::{CountVector, JointCount, Lattice, MeanField, Prescription};
pub use error::{Error, Result};
pub use game_model::{load_spec, load_spec_file, GameSpec};
pub use mpe_finite::{PolicyTable, ValueTable};
pub use stage_nash::{PrescriptionMode, PrescriptionSet, SolverConfig, StageEquilibrium};
