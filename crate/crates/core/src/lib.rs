//! Simulator for dynamical state reduction of a charged two-state system
//! coupled to a single electromagnetic field mode.
//!
//! The field mode is driven by a nonlinear stochastic Schrödinger equation
//! that reduces it onto coherent states; the two-state system reduces to a
//! current (`σx`) eigenstate only through its coupling to the field.
//!
//! - [`hilbert`]: truncated composite space, operators, states, observables
//! - [`sde`]: complex Wiener noise and the Euler–Maruyama integrator
//! - [`analytic`]: closed-form limit solutions and predicted time-scales
//! - [`experiment`]: trajectories, ensembles, stopping times, coupling sweeps
//! - [`stats`]: summaries, power-law fits, kernel density estimates
//! - [`oracle`]: dense reference propagators

pub mod analytic;
pub mod experiment;
pub mod hilbert;
pub mod oracle;
pub mod sde;
pub mod stats;

pub use num_complex::Complex64;
