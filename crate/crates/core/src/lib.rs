//! Quasi-Monte Carlo uncertainty quantification for a reaction-diffusion
//! tumor growth model with chemo-radiation treatment.
//!
//! The pipeline: a P1 finite element discretization ([`fem`]) on a
//! triangulation ([`mesh`]), implicit Euler time stepping with Newton
//! ([`solver`]), random coefficient fields ([`fields`], [`kl`]), randomly
//! shifted rank-1 lattice rules ([`lattice`]) and the estimators that tie
//! them together ([`estimator`]). [`harness`] runs whole studies from a
//! [`config`] file.

pub mod config;
pub mod error;
pub mod estimator;
pub mod fem;
pub mod fields;
pub mod harness;
pub mod kl;
pub mod lattice;
pub mod mesh;
pub mod normal;
pub mod problem;
pub mod random;
pub mod solver;
pub mod sparse;
pub mod treatment;

pub use error::{Error, Result};
