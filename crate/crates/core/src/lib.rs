//! Simulation of a 14N nuclear spin coupled to an NV electron spin in a
//! diamond rotating about an axis tilted from a static bias field.
//!
//! The numerical core is generic over the scalar type (`f32` or `f64`);
//! the aliases below fix it to `f64`, with `*32` variants for `f32`.

// `!(x > 0)` is the NaN-rejecting check, used on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod feedforward;
pub mod geometry;
pub mod interp;
pub mod linalg;
pub mod num;
pub mod protocols;
pub mod spectral;
pub mod spincore;

pub use error::{Error, Result};
pub use num::{Cplx, Real};

pub type Constants = spincore::PhysicalConstants<f64>;
pub type Constants32 = spincore::PhysicalConstants<f32>;
pub type Geometry = geometry::FieldGeometry<f64>;
pub type Geometry32 = geometry::FieldGeometry<f32>;
pub type Rotation = geometry::RotationConfig<f64>;
pub type Rotation32 = geometry::RotationConfig<f32>;
pub type Track = spectral::AdiabaticTrack<f64>;
pub type Track32 = spectral::AdiabaticTrack<f32>;
pub type RfAxis = spectral::RfAxis<f64>;
pub type Profile = feedforward::FMProfile<f64>;
pub type Profile32 = feedforward::FMProfile<f32>;
