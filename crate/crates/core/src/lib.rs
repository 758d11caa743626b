//! Image-based multi-target tracking with a transferable fully convolutional
//! network.
//!
//! The pipeline: simulate targets and range-bearing sensors ([`scenario`]),
//! rasterize target sets and measurement sets into intensity images
//! ([`raster`]), map observation images to target images with an
//! encoder-decoder CNN ([`nn`]) trained on small windows ([`train`]), check the
//! small-to-large transfer bound ([`bound`]), and turn output images back into
//! position sets scored with OSPA ([`eval`]).
//!
//! The crate is `no_std` + `alloc`. The default `std` feature only enables
//! runtime SIMD detection in the matrix-multiply kernels.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod bound;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod nn;
pub mod raster;
pub mod rng;
pub mod scenario;
pub mod train;

pub use error::{Error, Result};
pub use geometry::Vec2;
