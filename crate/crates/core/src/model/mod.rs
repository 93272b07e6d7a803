//! The color upsampling network: sparse-convolution LR features, feature
//! expansion to HR points with normalized in-voxel offsets, an MLP predicting
//! residual colors, and composition with devoxelized coarse colors.

mod checkpoint;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointHeader};
pub use train::{train, train_model, EpochLog, TrainConfig};

use crate::error::{Error, Result};
use crate::geometry::{self, LrHrMapping, PointCloud, Rgb};
use crate::sparse::{BnUpdate, FeatureExtractor, KernelMap, SparseCoords};
use crate::tensor::{init, Graph, ParamId, ParamStore, Precision, Real, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::Arc;

/// HR rows decoded per inference chunk.
const INFER_CHUNK: usize = 32 * 1024;

/// Architecture hyper-parameters plus the ratio the weights were trained at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Feature channels `K`.
    pub channels: usize,
    /// Residual blocks after the stem.
    pub blocks: usize,
    pub kernel_size: usize,
    pub v_train: u32,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            channels: 64,
            blocks: 4,
            kernel_size: 3,
            v_train: 5,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 {
            return Err(Error::Config("channels must be positive".into()));
        }
        if self.kernel_size.is_multiple_of(2) {
            return Err(Error::InvalidKernel(self.kernel_size));
        }
        if self.v_train < 2 {
            return Err(Error::InvalidRatio(self.v_train));
        }
        Ok(())
    }

    /// Layer widths of the color MLP: `K+3`, halved twice, then 3.
    pub fn mlp_widths(&self) -> [usize; 4] {
        let w = self.channels + 3;
        [w, w / 2, w / 4, 3]
    }
}

/// Affine layer `x W + b` with `W` stored `in×out`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    fn forward<F: Real>(&self, g: &mut Graph<F>, store: &ParamStore<F>, x: Var) -> Result<Var> {
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        let y = g.matmul(x, w)?;
        g.add_bias(y, b)
    }
}

/// Three-layer color MLP with ReLU between layers and a linear output.
#[derive(Debug, Clone)]
pub struct ColorMlp {
    pub layers: [Linear; 3],
}

impl ColorMlp {
    fn new<F: Real>(store: &mut ParamStore<F>, rng: &mut ChaCha8Rng, widths: [usize; 4], zero_output: bool) -> Self {
        let layers = std::array::from_fn(|l| {
            let (i, o) = (widths[l], widths[l + 1]);
            let w = if l == 2 && zero_output {
                Tensor::zeros(&[i, o])
            } else {
                init::kaiming_uniform(rng, &[i, o], i)
            };
            Linear {
                weight: store.add(format!("mlp.{l}.weight"), w, true),
                bias: store.add(format!("mlp.{l}.bias"), Tensor::zeros(&[o]), true),
            }
        });
        Self { layers }
    }

    fn find<F: Real>(store: &ParamStore<F>, widths: [usize; 4]) -> Result<Self> {
        let mut layers = Vec::with_capacity(3);
        for l in 0..3 {
            let get = |what: &str, shape: &[usize]| {
                let name = format!("mlp.{l}.{what}");
                let id = store
                    .find(&name)
                    .ok_or_else(|| Error::Checkpoint(format!("missing parameter {name}")))?;
                if store.get(id).shape() != shape {
                    return Err(Error::Checkpoint(format!(
                        "{name} has shape {:?}, expected {shape:?}",
                        store.get(id).shape()
                    )));
                }
                Ok(id)
            };
            layers.push(Linear {
                weight: get("weight", &[widths[l], widths[l + 1]])?,
                bias: get("bias", &[widths[l + 1]])?,
            });
        }
        let [a, b, c]: [Linear; 3] = layers.try_into().expect("three layers");
        Ok(Self { layers: [a, b, c] })
    }

    /// Residual colors for HR feature rows of width `K+3`.
    pub fn forward<F: Real>(&self, g: &mut Graph<F>, store: &ParamStore<F>, h: Var) -> Result<Var> {
        let mut x = h;
        for (l, layer) in self.layers.iter().enumerate() {
            x = layer.forward(g, store, x)?;
            if l < 2 {
                x = g.relu(x);
            }
        }
        Ok(x)
    }
}

/// `row j = [lr_features[map[j]], offsets[j]]`.
pub fn expand_features<F: Real>(g: &mut Graph<F>, lr_features: Var, map: Arc<[u32]>, offsets: Var) -> Result<Var> {
    let n_h = g.value(offsets).rows();
    if map.len() != n_h {
        return Err(Error::Shape(format!("{} mapping entries for {n_h} offset rows", map.len())));
    }
    let gathered = g.gather_rows(lr_features, map)?;
    g.concat_cols(gathered, offsets)
}

/// One or more LR/HR pairs merged into a single sparse batch; object `b`
/// occupies batch index `b`.
pub struct Batch<F: Real> {
    pub kmap: Arc<KernelMap>,
    pub lr_colors: Tensor<F>,
    /// HR row → global LR row.
    pub map: Arc<[u32]>,
    pub offsets: Tensor<F>,
    pub coarse: Tensor<F>,
    /// Ground-truth HR colors, when every HR cloud carries colors.
    pub target: Option<Tensor<F>>,
}

impl<F: Real> Batch<F> {
    pub fn new(parts: &[(&PointCloud, &PointCloud, &LrHrMapping)], kernel_size: usize) -> Result<Self> {
        let mut coords = Vec::new();
        let mut lr_colors = Vec::new();
        let mut map = Vec::new();
        let mut offsets = Vec::new();
        let mut target = Some(Vec::new());
        for (b, (lr, hr, mapping)) in parts.iter().enumerate() {
            let base = coords.len() as u32;
            coords.extend(lr.coords().iter().map(|c| [c[0] as i32, c[1] as i32, c[2] as i32, b as i32]));
            lr_colors.extend_from_slice(lr.require_colors()?);
            offsets.extend(geometry::compute_offsets(hr, lr, mapping)?);
            map.extend(mapping.map().iter().map(|&i| i + base));
            match (&mut target, hr.colors()) {
                (Some(t), Some(c)) => t.extend_from_slice(c),
                _ => target = None,
            }
        }
        let sites = SparseCoords::new(coords)?;
        let kmap = Arc::new(sites.kernel_map(kernel_size)?);
        let coarse: Vec<Rgb> = map.iter().map(|&i| lr_colors[i as usize]).collect();
        Ok(Self {
            kmap,
            lr_colors: Tensor::from_rows3(&lr_colors),
            map: map.into(),
            offsets: Tensor::from_rows3(&offsets),
            coarse: Tensor::from_rows3(&coarse),
            target: target.map(|t| Tensor::from_rows3(&t)),
        })
    }

    pub fn n_lr(&self) -> usize {
        self.lr_colors.rows()
    }

    pub fn n_hr(&self) -> usize {
        self.map.len()
    }
}

/// Network weights with their architecture.
#[derive(Debug, Clone)]
pub struct CuNet<F: Real> {
    config: ModelConfig,
    store: ParamStore<F>,
    extractor: FeatureExtractor,
    mlp: ColorMlp,
}

impl<F: Real> CuNet<F> {
    /// Fresh weights from `seed`. The MLP output layer starts at zero so the
    /// untrained network reproduces devoxelization.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        Self::with_init(config, seed, true)
    }

    pub fn with_init(config: ModelConfig, seed: u64, zero_output: bool) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let extractor = FeatureExtractor::new(&mut store, &mut rng, 3, config.channels, config.blocks, config.kernel_size);
        let mlp = ColorMlp::new(&mut store, &mut rng, config.mlp_widths(), zero_output);
        Ok(Self {
            config,
            store,
            extractor,
            mlp,
        })
    }

    /// Rebinds a parameter store (e.g. from a checkpoint) to the architecture.
    pub fn from_store(config: ModelConfig, store: ParamStore<F>) -> Result<Self> {
        config.validate()?;
        let extractor = FeatureExtractor::find(&store, config.blocks)?;
        if extractor.channels() != config.channels || extractor.stem.c_in != 3 {
            return Err(Error::Checkpoint(format!(
                "stem maps {}→{} channels, config says 3→{}",
                extractor.stem.c_in,
                extractor.channels(),
                config.channels
            )));
        }
        let mlp = ColorMlp::find(&store, config.mlp_widths())?;
        Ok(Self {
            config,
            store,
            extractor,
            mlp,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore<F> {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore<F> {
        &mut self.store
    }

    pub fn extractor(&self) -> &FeatureExtractor {
        &self.extractor
    }

    pub fn mlp(&self) -> &ColorMlp {
        &self.mlp
    }

    /// Unclamped HR color prediction `coarse + residual` for a batch.
    pub fn forward_batch(
        &self,
        g: &mut Graph<F>,
        batch: &Batch<F>,
        training: bool,
        updates: &mut Vec<BnUpdate<F>>,
    ) -> Result<Var> {
        let x = g.constant(batch.lr_colors.clone());
        let feats = self.extractor.forward(g, &self.store, x, &batch.kmap, training, updates)?;
        let offsets = g.constant(batch.offsets.clone());
        let h = expand_features(g, feats, batch.map.clone(), offsets)?;
        let r = self.mlp.forward(g, &self.store, h)?;
        let coarse = g.constant(batch.coarse.clone());
        g.add(coarse, r)
    }

    /// LR feature rows in eval mode.
    pub fn lr_features(&self, lr: &PointCloud) -> Result<Tensor<F>> {
        let colors = lr.require_colors()?;
        let coords = lr.coords().iter().map(|c| [c[0] as i32, c[1] as i32, c[2] as i32, 0]).collect();
        let kmap = Arc::new(SparseCoords::new(coords)?.kernel_map(self.config.kernel_size)?);
        let mut g = Graph::inference();
        let x = g.constant(Tensor::from_rows3(colors));
        let f = self.extractor.forward(&mut g, &self.store, x, &kmap, false, &mut Vec::new())?;
        Ok(g.take_value(f))
    }

    /// HR colors in `[0, 1]` for the HR coordinates of `hr` given a colored
    /// LR cloud at ratio `v`.
    pub fn upsample(&self, lr: &PointCloud, hr: &PointCloud, v: u32) -> Result<Vec<Rgb>> {
        let mapping = geometry::recover_mapping(lr, hr, v)?;
        self.upsample_mapped(lr, hr, &mapping)
    }

    pub fn upsample_mapped(&self, lr: &PointCloud, hr: &PointCloud, mapping: &LrHrMapping) -> Result<Vec<Rgb>> {
        let v = mapping.voxel_size();
        if v != self.config.v_train {
            log::debug!("model trained at {}x is evaluated at {v}x", self.config.v_train);
        }
        let colors = lr.require_colors()?;
        let feats = self.lr_features(lr)?;
        let offsets = geometry::compute_offsets(hr, lr, mapping)?;
        let k = feats.cols();
        let width = k + 3;
        let map = mapping.map();
        let mut out = Vec::with_capacity(hr.len());
        for start in (0..hr.len()).step_by(INFER_CHUNK) {
            let end = (start + INFER_CHUNK).min(hr.len());
            let mut rows = Vec::with_capacity((end - start) * width);
            for j in start..end {
                rows.extend_from_slice(feats.row(map[j] as usize));
                rows.extend(offsets[j].iter().map(|&d| F::from_f64_lossy(d)));
            }
            let mut g = Graph::inference();
            let h = g.constant(Tensor::new(vec![end - start, width], rows)?);
            let r = self.mlp.forward(&mut g, &self.store, h)?;
            let r = g.value(r);
            for (j, res) in (start..end).zip(r.data().chunks_exact(3)) {
                let c = colors[map[j] as usize];
                out.push(std::array::from_fn(|ch| (c[ch] + res[ch].to_f64_lossy()).clamp(0.0, 1.0)));
            }
        }
        Ok(out)
    }

    pub fn cast<G: Real>(&self) -> CuNet<G> {
        CuNet {
            config: self.config,
            store: self.store.cast(),
            extractor: self.extractor.clone(),
            mlp: self.mlp.clone(),
        }
    }
}

/// A network at either precision.
#[derive(Debug, Clone)]
pub enum Model {
    F32(CuNet<f32>),
    F64(CuNet<f64>),
}

impl Model {
    pub fn new(config: ModelConfig, precision: Precision, seed: u64) -> Result<Self> {
        Ok(match precision {
            Precision::F32 => Model::F32(CuNet::new(config, seed)?),
            Precision::F64 => Model::F64(CuNet::new(config, seed)?),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        match self {
            Model::F32(m) => m.config(),
            Model::F64(m) => m.config(),
        }
    }

    pub fn precision(&self) -> Precision {
        match self {
            Model::F32(_) => Precision::F32,
            Model::F64(_) => Precision::F64,
        }
    }

    pub fn upsample(&self, lr: &PointCloud, hr: &PointCloud, v: u32) -> Result<Vec<Rgb>> {
        match self {
            Model::F32(m) => m.upsample(lr, hr, v),
            Model::F64(m) => m.upsample(lr, hr, v),
        }
    }

    pub fn upsample_mapped(&self, lr: &PointCloud, hr: &PointCloud, mapping: &LrHrMapping) -> Result<Vec<Rgb>> {
        match self {
            Model::F32(m) => m.upsample_mapped(lr, hr, mapping),
            Model::F64(m) => m.upsample_mapped(lr, hr, mapping),
        }
    }

    pub fn save(&self, path: &Path, train: Option<&TrainConfig>) -> Result<()> {
        match self {
            Model::F32(m) => save_checkpoint(path, m, train),
            Model::F64(m) => save_checkpoint(path, m, train),
        }
    }

    pub fn load(path: &Path) -> Result<(Self, CheckpointHeader)> {
        load_checkpoint(path)
    }
}
