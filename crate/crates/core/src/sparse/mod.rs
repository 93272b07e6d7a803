//! Hash-indexed sparse tensors and submanifold sparse convolution.
//!
//! A sparse tensor is a set of unique `(x, y, z, batch)` sites with one
//! feature row per site. Convolutions evaluate only at occupied sites and keep
//! the site set unchanged, so a single [`KernelMap`] serves every layer of a
//! network.

mod conv;
mod hash;
mod kmap;
pub mod net;

pub use conv::{conv, sparse_conv, SparseCoords, SparseTensor};
pub use hash::CoordIndex;
pub use kmap::KernelMap;
pub use net::{apply_bn_updates, BnUpdate, ConvBn, FeatureExtractor, ResidualBlock};
