//! Traveling touching vortex pairs in the half-plane.
//!
//! The crate computes odd-symmetric dipole profiles of the two-dimensional
//! Euler equations by maximizing kinetic (or `L^p`-penalized) energy at fixed
//! impulse, checks the resulting profiles against the identities they must
//! satisfy, and evolves perturbed data with a vortex-blob particle method.
//!
//! Only the upper half `x2 > 0` is ever stored. All fields are nonnegative
//! there and the lower half is implied by odd reflection, which the
//! half-plane Green's function accounts for.
//!
//! The crate is `no_std` and needs only `alloc`.

#![no_std]
// `!(x > 0.0)` is the idiom used throughout to reject NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

mod math;

pub mod bessel;
pub mod energy;
pub mod error;
pub mod evolution;
pub mod field;
pub mod identities;
pub mod kernel;
pub mod lamb;
pub mod quadrature;
pub mod solver;
pub mod steiner;
pub mod tail;

pub use error::{Error, Result};
pub use field::{ContourPolygon, GridField};
pub use kernel::{Point, Velocity};
