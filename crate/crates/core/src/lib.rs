//! Non-iterative reconstruction of conductivity anomalies from boundary
//! voltage data.
//!
//! The pipeline simulates boundary measurements for a conducting ellipse with
//! embedded anomalies, recasts the inverse problem as a pairwise joint sparse
//! recovery over induced interior currents, and recovers anomaly positions and
//! conductivity values without iterating a forward solver:
//!
//! 1. [`forward`] solves the transmission problem with layer potentials and
//!    samples noisy boundary traces.
//! 2. [`sensing`] assembles the underdetermined linear system relating those
//!    traces to induced currents on a reconstruction grid.
//! 3. [`jsr`] recovers the common current support with a multiple-measurement
//!    sparse Bayesian learner and estimates the interior potential on it.
//! 4. [`recover`] solves a reduced linear system for the conductivity contrast
//!    with a constrained split augmented Lagrangian solver.
//!
//! [`music`] provides an eigenvalue-based subspace localization baseline and
//! [`recover`] also contains a one-step linearized baseline; [`harness`] runs
//! and scores all of them.

pub mod error;
pub mod geometry;
pub mod harness;
pub mod io;
pub mod jsr;
pub mod layerpot;
pub mod music;
pub mod recover;
pub mod sensing;

pub mod forward;

pub use error::{EitError, Result};
