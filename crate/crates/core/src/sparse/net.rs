use super::conv::conv;
use super::kmap::KernelMap;
use crate::error::{Error, Result};
use crate::tensor::{init, BatchStats, Graph, ParamId, ParamStore, Real, Tensor, Var};
use rand::Rng;
use std::sync::Arc;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Batch statistics produced by one training-mode batch norm, waiting to be
/// folded into its running statistics.
#[derive(Debug, Clone)]
pub struct BnUpdate<F> {
    mean: ParamId,
    var: ParamId,
    stats: BatchStats<F>,
}

/// Folds batch statistics into running statistics:
/// `running = (1 - momentum) * running + momentum * batch`.
pub fn apply_bn_updates<F: Real>(store: &mut ParamStore<F>, updates: &[BnUpdate<F>], momentum: f64) {
    let m = F::from_f64_lossy(momentum);
    let keep = F::one() - m;
    for u in updates {
        for (id, batch) in [(u.mean, &u.stats.mean), (u.var, &u.stats.var)] {
            for (r, b) in store.get_mut(id).data_mut().iter_mut().zip(batch) {
                *r = keep * *r + m * *b;
            }
        }
    }
}

/// Sparse convolution (no bias) followed by batch norm.
#[derive(Debug, Clone)]
pub struct ConvBn {
    pub weight: ParamId,
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub c_in: usize,
    pub c_out: usize,
}

impl ConvBn {
    pub fn new<F: Real>(
        store: &mut ParamStore<F>,
        rng: &mut impl Rng,
        name: &str,
        volume: usize,
        c_in: usize,
        c_out: usize,
    ) -> Self {
        let w = init::kaiming_uniform(rng, &[volume, c_in, c_out], volume * c_in);
        Self {
            weight: store.add(format!("{name}.conv.weight"), w, true),
            gamma: store.add(format!("{name}.bn.gamma"), Tensor::full(&[c_out], F::one()), true),
            beta: store.add(format!("{name}.bn.beta"), Tensor::zeros(&[c_out]), true),
            running_mean: store.add(format!("{name}.bn.running_mean"), Tensor::zeros(&[c_out]), false),
            running_var: store.add(format!("{name}.bn.running_var"), Tensor::full(&[c_out], F::one()), false),
            c_in,
            c_out,
        }
    }

    /// Looks up the parameters registered under `name`.
    pub fn find<F: Real>(store: &ParamStore<F>, name: &str) -> Result<Self> {
        let get = |suffix: &str| {
            let key = format!("{name}.{suffix}");
            store
                .find(&key)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter {key}")))
        };
        let weight = get("conv.weight")?;
        let shape = store.get(weight).shape().to_vec();
        if shape.len() != 3 {
            return Err(Error::Checkpoint(format!("{name}.conv.weight has shape {shape:?}")));
        }
        Ok(Self {
            weight,
            gamma: get("bn.gamma")?,
            beta: get("bn.beta")?,
            running_mean: get("bn.running_mean")?,
            running_var: get("bn.running_var")?,
            c_in: shape[1],
            c_out: shape[2],
        })
    }

    pub fn forward<F: Real>(
        &self,
        g: &mut Graph<F>,
        store: &ParamStore<F>,
        x: Var,
        kmap: &Arc<KernelMap>,
        training: bool,
        updates: &mut Vec<BnUpdate<F>>,
    ) -> Result<Var> {
        let w = g.param(store, self.weight);
        let y = conv(g, x, w, kmap)?;
        let gamma = g.param(store, self.gamma);
        let beta = g.param(store, self.beta);
        let running = (store.get(self.running_mean).data(), store.get(self.running_var).data());
        let (out, stats) = g.batchnorm(y, gamma, beta, running, training, F::from_f64_lossy(BN_EPS))?;
        if let Some(stats) = stats {
            updates.push(BnUpdate {
                mean: self.running_mean,
                var: self.running_var,
                stats,
            });
        }
        Ok(out)
    }
}

/// `ReLU(BN(Conv(ReLU(BN(Conv(x))))) + x)`.
#[derive(Debug, Clone)]
pub struct ResidualBlock {
    pub first: ConvBn,
    pub second: ConvBn,
}

impl ResidualBlock {
    pub fn new<F: Real>(store: &mut ParamStore<F>, rng: &mut impl Rng, name: &str, volume: usize, channels: usize) -> Self {
        Self {
            first: ConvBn::new(store, rng, &format!("{name}.0"), volume, channels, channels),
            second: ConvBn::new(store, rng, &format!("{name}.1"), volume, channels, channels),
        }
    }

    pub fn find<F: Real>(store: &ParamStore<F>, name: &str) -> Result<Self> {
        Ok(Self {
            first: ConvBn::find(store, &format!("{name}.0"))?,
            second: ConvBn::find(store, &format!("{name}.1"))?,
        })
    }

    pub fn forward<F: Real>(
        &self,
        g: &mut Graph<F>,
        store: &ParamStore<F>,
        x: Var,
        kmap: &Arc<KernelMap>,
        training: bool,
        updates: &mut Vec<BnUpdate<F>>,
    ) -> Result<Var> {
        let h = self.first.forward(g, store, x, kmap, training, updates)?;
        let h = g.relu(h);
        let h = self.second.forward(g, store, h, kmap, training, updates)?;
        let s = g.add(h, x)?;
        Ok(g.relu(s))
    }
}

/// Stem convolution lifting colors to `K` channels followed by residual
/// blocks, all submanifold with a shared kernel map.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    pub stem: ConvBn,
    pub blocks: Vec<ResidualBlock>,
}

impl FeatureExtractor {
    pub fn new<F: Real>(
        store: &mut ParamStore<F>,
        rng: &mut impl Rng,
        c_in: usize,
        channels: usize,
        n_blocks: usize,
        kernel_size: usize,
    ) -> Self {
        let volume = kernel_size.pow(3);
        let stem = ConvBn::new(store, rng, "extractor.stem", volume, c_in, channels);
        let blocks = (0..n_blocks)
            .map(|b| ResidualBlock::new(store, rng, &format!("extractor.block{b}"), volume, channels))
            .collect();
        Self { stem, blocks }
    }

    pub fn find<F: Real>(store: &ParamStore<F>, n_blocks: usize) -> Result<Self> {
        let stem = ConvBn::find(store, "extractor.stem")?;
        let blocks = (0..n_blocks)
            .map(|b| ResidualBlock::find(store, &format!("extractor.block{b}")))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { stem, blocks })
    }

    pub fn channels(&self) -> usize {
        self.stem.c_out
    }

    pub fn forward<F: Real>(
        &self,
        g: &mut Graph<F>,
        store: &ParamStore<F>,
        x: Var,
        kmap: &Arc<KernelMap>,
        training: bool,
        updates: &mut Vec<BnUpdate<F>>,
    ) -> Result<Var> {
        let c = g.value(x).cols();
        if c != self.stem.c_in {
            return Err(Error::Shape(format!(
                "feature extractor expects {} input channels, got {c}",
                self.stem.c_in
            )));
        }
        let h = self.stem.forward(g, store, x, kmap, training, updates)?;
        let mut h = g.relu(h);
        for b in &self.blocks {
            h = b.forward(g, store, h, kmap, training, updates)?;
        }
        Ok(h)
    }
}
