//! Numerical laboratory for the weighted fast diffusion equation
//! `|x|^{-γ} u_t = -∇·(|x|^{-β} u ∇u^{m-1})` in self-similar variables.
//!
//! Modules, bottom-up:
//! - [`params`]: validation and closed-form constants.
//! - [`grid`]: geometric radial mesh, weighted quadrature, fields.
//! - [`profiles`]: Barenblatt profiles, masses, scalings, change of variables.
//! - [`functionals`]: free energy, Fisher information, best matching, norms.
//! - [`spectrum`]: linearized operator per angular sector.
//! - [`evolve`]: implicit finite-volume solver, traces and rate fits.
//! - [`config`]: `key = value` run configuration files.

pub mod config;
pub mod evolve;
pub mod functionals;
pub mod grid;
pub mod params;
pub mod profiles;
pub mod spectrum;
mod tridiag;

#[cfg(test)]
mod proptests;
#[cfg(test)]
mod testkit;

pub use grid::{RadialField, RadialGrid, Tail};
pub use params::{derive, validate, Derived, Params, RawParams};
pub use profiles::BarenblattSpec;
