use super::synth::{generate_synthetic, Shape, SyntheticRecipe, SHAPES, TEXTURES};
use super::{build_pairs, read_ply, Pair};
use crate::error::{Error, Result};
use crate::exec;
use crate::geometry::PointCloud;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::Config(format!("unknown split {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectSource {
    Recipe(SyntheticRecipe),
    /// PLY file, relative to the manifest's directory unless absolute.
    Path(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectEntry {
    pub id: String,
    pub split: Split,
    #[serde(flatten)]
    pub source: ObjectSource,
}

/// A list of objects with split tags; synthetic entries regenerate
/// bit-identically from their recipes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    /// Grid extent for synthetic objects.
    pub extent: u32,
    /// Seed the corpus was drawn from.
    pub seed: u64,
    pub objects: Vec<ObjectEntry>,
    #[serde(skip)]
    base_dir: PathBuf,
}

impl Manifest {
    pub fn new(extent: u32, seed: u64, objects: Vec<ObjectEntry>) -> Result<Self> {
        let m = Self {
            extent,
            seed,
            objects,
            base_dir: PathBuf::new(),
        };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for o in &self.objects {
            if !ids.insert(&o.id) {
                return Err(Error::Config(format!("duplicate object id {:?}", o.id)));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: Manifest =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        m.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| Error::Config(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn entries(&self, split: Split) -> Vec<&ObjectEntry> {
        self.objects.iter().filter(|o| o.split == split).collect()
    }

    /// Materializes one object's HR cloud.
    pub fn load_object(&self, entry: &ObjectEntry) -> Result<PointCloud> {
        match &entry.source {
            ObjectSource::Recipe(r) => generate_synthetic(r, self.extent),
            ObjectSource::Path(p) => read_ply(&self.base_dir.join(p)),
        }
    }

    /// Loads every object of `split` (in manifest order) and voxelizes it at
    /// ratio `v`.
    pub fn pairs(&self, split: Split, v: u32) -> Result<Vec<Pair>> {
        let entries = self.entries(split);
        exec::map_slice(&entries, |e| build_pairs(e.id.clone(), &self.load_object(e)?, v))
            .into_iter()
            .collect()
    }
}

/// Parameters of a generated corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub count: usize,
    pub extent: u32,
    pub seed: u64,
    /// Expected occupied HR voxels per object.
    pub target_points: usize,
    pub train_fraction: f64,
    pub val_fraction: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            count: 200,
            extent: 250,
            seed: 0,
            target_points: 27_000,
            train_fraction: 0.8,
            val_fraction: 0.1,
        }
    }
}

/// Typical unit-radius surface area of each shape family.
fn unit_area(shape: Shape) -> f64 {
    match shape {
        Shape::Sphere => 12.57,
        Shape::Torus => 8.6,
        Shape::Box => 5.4,
        Shape::Blended => 7.0,
    }
}

/// Draws a corpus of random recipes sized so each object occupies about
/// `target_points` voxels, split train/val/test in manifest order.
pub fn default_corpus(cfg: &CorpusConfig) -> Result<Manifest> {
    if cfg.count == 0 {
        return Err(Error::EmptyDataset);
    }
    if !(0.0..=1.0).contains(&cfg.train_fraction)
        || !(0.0..=1.0).contains(&cfg.val_fraction)
        || cfg.train_fraction + cfg.val_fraction > 1.0
    {
        return Err(Error::Config("split fractions must lie in [0, 1] and sum to at most 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_train = (cfg.count as f64 * cfg.train_fraction).round() as usize;
    let n_val = ((cfg.count as f64 * cfg.val_fraction).round() as usize).min(cfg.count - n_train);
    let half = cfg.extent as f64 / 2.0 - 1.0;
    let objects = (0..cfg.count)
        .map(|i| {
            let shape = SHAPES[rng.gen_range(0..SHAPES.len())];
            let texture = TEXTURES[rng.gen_range(0..TEXTURES.len())];
            // 1.5 · area · r² = target  ⇒  r = sqrt(target / (1.5 · area)).
            let r = (cfg.target_points as f64 / (1.5 * unit_area(shape))).sqrt() * rng.gen_range(0.9..1.1);
            let size = (r / half).min(1.0);
            let recipe = SyntheticRecipe {
                shape,
                texture,
                texture_scale: rng.gen_range(2.5..5.0),
                size,
                points: cfg.target_points * 6,
                seed: rng.gen(),
            };
            let split = if i < n_train {
                Split::Train
            } else if i < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
            ObjectEntry {
                id: format!("obj{i:04}"),
                split,
                source: ObjectSource::Recipe(recipe),
            }
        })
        .collect();
    Manifest::new(cfg.extent, cfg.seed, objects)
}
