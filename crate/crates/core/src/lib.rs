//! Color upsampling for voxelized point clouds.
//!
//! A low-resolution colored cloud and a high-resolution geometry-only cloud
//! go in; colors for every high-resolution point come out. The learned path
//! ([`model::CuNet`]) extracts per-voxel features with submanifold sparse
//! convolutions, expands them to the high-resolution points together with
//! each point's normalized offset inside its parent voxel, and decodes a
//! color residual on top of plain devoxelization. Classical references live
//! in [`baselines`].

pub mod baselines;
pub mod data;
pub mod error;
pub mod eval;
pub mod exec;
pub mod geometry;
pub mod model;
pub mod sparse;
pub mod tensor;

pub use error::{Error, Result};
