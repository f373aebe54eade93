//! Trainable, wavelet-sparse FDK reconstruction for circular-orbit cone-beam CT.
//!
//! The crate is `no_std` (with `alloc`). The default `std` feature turns on
//! rayon-backed parallel loops; every parallel loop writes disjoint outputs and
//! reduces in a fixed order, so results are bit-identical with and without it.
//!
//! Pipeline, from projections `P` to a volume:
//!
//! ```text
//! I_rec = ReLU( B · F⁻¹ H_rec F · (W_rec ⊙ P) )
//! ```
//!
//! where `W_rec` and `H_rec` are materialized from level-2 Haar approximation
//! coefficients ([`model::SparseWaveletParams`]) and `B` is the voxel-driven
//! FDK backprojector ([`projector::fdk_backproject`]).

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

mod array;
mod error;
mod fft;
mod geometry;
mod par;

pub mod fdk;
pub mod metrics;
pub mod model;
pub mod projector;
pub mod rng;
pub mod sim;
pub mod training;
pub mod wavelet;

pub use array::{Matrix, ProjectionStack, Volume};
pub use error::{Error, Result};
pub use fft::Fft;
pub use geometry::Geometry;
