//! Hénon-like maps near the first homoclinic bifurcation.
//!
//! The crate covers the family and its modified extension, cocycle analysis,
//! invariant manifolds and the trapping region, stable leaves, critical points,
//! bound/free orbit decomposition, bifurcation parameters and escape statistics.

pub mod binding;
pub mod critical;
pub mod error;
pub mod escape;
pub mod leaves;
pub mod linalg;
pub mod manifolds;
pub mod map_core;
pub mod sweep;

pub use error::{Error, Result};
pub use map_core::{FamilyParams, Orientation, Point};
