//! Time-sliced path-integral propagators for magnetic Schrödinger equations
//! with polynomially growing potentials.

pub mod action;
pub mod audit;
pub mod error;
pub mod fields;
pub mod fit;
pub mod grid;
pub mod hessian;
pub mod kernel;
pub mod linalg;
pub mod multiparticle;
pub mod phimap;
pub mod poly;
pub mod quad;
pub mod reference;
pub mod slicing;
pub mod sobol;
pub mod spin;
pub mod sum;

pub use error::{Error, Result};
pub use fields::{derive_em, gauge_transform, FieldSet, GaugeFunction, PairPotential};
pub use poly::PolySpaceTime;
