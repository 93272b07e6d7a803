//! Point cloud files, synthetic objects, and dataset manifests.

mod manifest;
mod ply;
mod synth;

pub use manifest::{default_corpus, CorpusConfig, Manifest, ObjectEntry, ObjectSource, Split};
pub use ply::{read_ply, read_ply_from, write_ply, write_ply_to};
pub use synth::{expected_surface_voxels, generate_synthetic, Shape, SyntheticRecipe, Texture, SHAPES, TEXTURES};

use crate::error::Result;
use crate::geometry::{voxelize, LrHrMapping, PointCloud};
use serde::{Deserialize, Serialize};

/// Geometry of one upsampling task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskMeta {
    pub extent: u32,
    pub lr_extent: u32,
    pub ratio: u32,
    pub n_lr: usize,
    pub n_hr: usize,
}

/// An HR ground-truth cloud with its voxelized LR input.
#[derive(Debug, Clone)]
pub struct Pair {
    pub id: String,
    pub lr: PointCloud,
    pub hr: PointCloud,
    pub mapping: LrHrMapping,
}

impl Pair {
    pub fn meta(&self) -> TaskMeta {
        TaskMeta {
            extent: self.hr.extent(),
            lr_extent: self.lr.extent(),
            ratio: self.mapping.voxel_size(),
            n_lr: self.lr.len(),
            n_hr: self.hr.len(),
        }
    }
}

/// Voxelizes `hr` at ratio `v` into a training/evaluation pair.
pub fn build_pairs(id: impl Into<String>, hr: &PointCloud, v: u32) -> Result<Pair> {
    let (lr, mapping) = voxelize(hr, v)?;
    Ok(Pair {
        id: id.into(),
        lr,
        hr: hr.clone(),
        mapping,
    })
}
