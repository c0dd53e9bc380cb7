//! Two-dimensional rigid-particle model of coupled mechanics and mass transport
//! in quasi-brittle solids, with adaptive coarse-to-fine refinement.
//!
//! Voronoi cells of a random generator point set are rigid particles carrying
//! two translations and one rotation. Their vertices carry fluid pressure. The
//! contact between two cells obeys a vectorial damage law, and the conduit
//! running along their shared facet conducts fluid with a permeability that
//! grows with the cube of the crack opening. The pressure pushes back on the
//! contacts through the Biot coefficient.
//!
//! A simulation may start on a coarse, purely elastic discretization and swap in
//! a fine "physical" one wherever the recovered particle stress approaches the
//! tensile strength (see [`adapt`]).
//!
//! The crate is `no_std` with `alloc`; IO, configuration and the command line
//! live in the companion `poromeso` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod adapt;
pub mod error;
pub mod geom;
pub mod materials;
pub mod mesh;
pub mod physics;
pub mod scenarios;
pub mod solver;
pub mod sparse;

pub use error::{Error, Result};
pub use geom::Vec2;
