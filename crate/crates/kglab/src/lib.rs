//! kglab: a numerical laboratory for the Klein-Gordon field on the cylinder.
//!
//! The crate builds compactly supported Lorentzian metric perturbations of
//! the flat cylinder, solves the Klein-Gordon Cauchy problem to obtain
//! classical symplectic scattering maps, decomposes those maps into
//! Bogoliubov blocks, implements them as unitaries on a truncated bosonic
//! Fock space, and exercises the transport structure over metric space
//! (covariance, locality, causality, central holonomy, smoothness) as
//! measurable properties.
//!
//! See the book under `book/` for a guided tour; its code snippets are
//! compiled as doc-tests through the [`guide`] module.

pub mod error;
pub mod grid;
pub mod geometry;
pub mod bogoliubov;
pub mod connection;
pub mod fock;
pub mod oneparticle;
pub mod wavesolver;

pub use error::{Error, Result};
