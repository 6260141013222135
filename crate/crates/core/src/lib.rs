//! Simulation library for hitting- and return-time statistics of circle maps
//! driven by random or deterministic dynamics.
//!
//! The crate provides:
//!
//! * exact and floating-point orbit engines for expanding circle maps
//!   ([`systems`], [`exact`]),
//! * hitting/return-time measurement with censoring ([`recurrence`]),
//! * stationary-measure, local-dimension and annulus-regularity estimators
//!   ([`measure`]),
//! * survival-law diagnostics: Kolmogorov-Smirnov distance to the unit
//!   exponential, geometric-law gaps, conditional-vs-unconditional survival
//!   gaps, and correlation decay ([`lawcheck`]),
//! * a reproducible experiment runner backing the `expolaw` binary
//!   ([`config`], [`runner`]).
//!
//! Every estimator that consumes randomness takes a 64-bit master seed and
//! derives one independent stream per sample (see [`seed`]), so results are
//! byte-stable across thread counts.

pub mod config;
pub mod exact;
pub mod lawcheck;
pub mod measure;
pub mod recurrence;
pub mod runner;
pub mod seed;
pub mod stats;
pub mod systems;
pub mod torus;

pub use exact::ExactCirclePoint;
pub use systems::{OrbitStream, Phase, System};
pub use torus::{circle_dist, Annulus, Ball, CirclePoint};
