//! Swarm simulation of lattice quantum dynamics.
//!
//! A wave function is represented by integer populations of four sample
//! types per lattice cell, `psi = (s1 - s3) + i (s2 - s4)` up to a scale.
//! Local, stochastic sample events evolve the populations so that their
//! expectation follows the discretised Schrodinger equation.

pub mod bench;
pub mod composite;
#[cfg(feature = "cli")]
pub mod config;
pub mod dynamics;
pub mod error;
pub mod frame;
pub mod lattice;
pub mod measure;
pub mod oracle;
pub mod par;
pub mod rng;
pub mod swarm;

#[cfg(feature = "cli")]
pub mod cli;

pub use error::{Error, Result};
pub use lattice::{Boundary, ComplexField, FieldGrid, Lattice, LatticeSpec};
pub use swarm::{SampleType, Swarm, SwarmState};
