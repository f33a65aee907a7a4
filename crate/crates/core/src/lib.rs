//! Numerical laboratory for diffusions in perpetually homogenizing media.
//!
//! The crate models `dy_t = dω_t − ∇V(y_t) dt` in one dimension where
//! `V(x) = Σ_k U_k(x / R_k)` superposes smooth periodic potentials on
//! geometrically growing scales. It provides
//!
//! * exact evaluation of multi-scale potentials and their model constants ([`potential`]),
//! * quadrature of effective diffusivities, correctors and mixing bounds ([`homogenization`]),
//! * reproducible Monte Carlo for exit times, mean squared displacement and tails ([`sde`]),
//! * predictions and exponent fits for the anomalous behaviour ([`analysis`]),
//! * Birkhoff-sum estimates of topological pressure ([`pressure`]),
//! * closed-form Dirichlet Green functions and their comparison inequalities ([`green`]),
//! * the exponential-martingale Laplace bounds ([`martingale`]),
//! * a Crank–Nicolson heat-kernel solver with the homogenized envelope ([`kernel`]).
//!
//! Everything here is `no_std` with `alloc`. Parallel execution, file formats and
//! the command line live in the companion `perpetual-lab` crate; Monte Carlo entry
//! points take a [`sde::PathRunner`] so the caller decides how paths are scheduled.
#![no_std]
#![deny(unsafe_code)]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]
// depending on the toolchain and on features unified from other crates the
// inherent float methods can shadow the num-traits ones
#![allow(unused_imports)]

extern crate alloc;

pub mod analysis;
pub mod error;
pub mod green;
pub mod homogenization;
pub mod kernel;
pub mod martingale;
pub mod potential;
pub mod pressure;
pub mod quadrature;
pub mod sde;
pub mod stats;

pub use error::{Error, Result};
pub use potential::{Harmonic, ModelConstants, MultiScalePotential, PeriodicPotential, ScaleSchedule, TrigSeries};
