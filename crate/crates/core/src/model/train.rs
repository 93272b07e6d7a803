use super::{Batch, CuNet, Model, ModelConfig};
use crate::data::Pair;
use crate::error::{Error, Result};
use crate::eval::psnr;
use crate::sparse::{apply_bn_updates, net::BN_MOMENTUM};
use crate::tensor::{Adam, AdamConfig, Graph, Precision, Real};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Training hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub ratio: u32,
    pub channels: usize,
    pub blocks: usize,
    /// Objects per batch.
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub decay_factor: f64,
    pub decay_period: usize,
    pub weight_decay: f64,
    pub seed: u64,
    pub precision: Precision,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::for_ratio(5)
    }
}

impl TrainConfig {
    /// Published settings: `K=32, B=16` at 2×, `K=64, B=8` at 5× and
    /// `K=64, B=4` at 10×. Other ratios use the nearest of the three.
    pub fn for_ratio(ratio: u32) -> Self {
        let (channels, batch_size) = match ratio {
            0..=3 => (32, 16),
            4..=7 => (64, 8),
            _ => (64, 4),
        };
        Self {
            ratio,
            channels,
            blocks: 4,
            batch_size,
            epochs: 25,
            lr: 1e-3,
            decay_factor: 0.1,
            decay_period: 10,
            weight_decay: 1e-4,
            seed: 0,
            precision: Precision::F32,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ratio < 2 {
            return Err(Error::InvalidRatio(self.ratio));
        }
        let positive = [
            ("channels", self.channels),
            ("batch_size", self.batch_size),
            ("decay_period", self.decay_period),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if !(self.lr > 0.0) || !(self.decay_factor > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config("lr and decay_factor must be positive, weight_decay non-negative".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            decay_factor: self.decay_factor,
            decay_period: self.decay_period,
            ..AdamConfig::default()
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            channels: self.channels,
            blocks: self.blocks,
            kernel_size: 3,
            v_train: self.ratio,
        }
    }
}

/// One line of the training log. Epoch 0 is the untrained network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean batch MSE on the `[0, 1]` color scale.
    pub loss: f64,
    /// Mean PSNR over validation objects, when any are given.
    pub val_psnr: Option<f64>,
    pub lr: f64,
}

fn check_pairs(pairs: &[Pair], ratio: u32) -> Result<()> {
    for p in pairs {
        if p.mapping.voxel_size() != ratio {
            return Err(Error::Config(format!(
                "object {} was voxelized at {}x, training ratio is {ratio}x",
                p.id,
                p.mapping.voxel_size()
            )));
        }
        if p.hr.colors().is_none() {
            return Err(Error::Attribute(format!("object {} has no ground-truth colors", p.id)));
        }
    }
    Ok(())
}

fn make_batch<F: Real>(pairs: &[Pair], order: &[usize]) -> Result<Batch<F>> {
    let parts: Vec<_> = order.iter().map(|&i| (&pairs[i].lr, &pairs[i].hr, &pairs[i].mapping)).collect();
    Batch::new(&parts, 3)
}

fn validation_psnr<F: Real>(net: &CuNet<F>, val: &[Pair]) -> Result<Option<f64>> {
    if val.is_empty() {
        return Ok(None);
    }
    let mut total = 0.0;
    for p in val {
        let out = net.upsample_mapped(&p.lr, &p.hr, &p.mapping)?;
        total += psnr(&out, p.hr.require_colors()?)?;
    }
    Ok(Some(total / val.len() as f64))
}

/// Trains a fresh network on `train_set` with Adam and step decay, calling
/// `on_epoch` after the initial evaluation and after every epoch.
pub fn train<F: Real>(
    train_set: &[Pair],
    val_set: &[Pair],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<(CuNet<F>, Vec<EpochLog>)> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    check_pairs(train_set, config.ratio)?;
    check_pairs(val_set, config.ratio)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut net = CuNet::<F>::new(config.model_config(), config.seed)?;
    let mut adam = Adam::new(config.adam(), net.store());
    let mut log = Vec::with_capacity(config.epochs + 1);
    let bs = config.batch_size;

    let initial: Vec<usize> = (0..train_set.len()).collect();
    let mut loss_sum = 0.0;
    let mut batches = 0;
    for chunk in initial.chunks(bs) {
        let batch = make_batch::<F>(train_set, chunk)?;
        let mut g = Graph::inference();
        let pred = net.forward_batch(&mut g, &batch, true, &mut Vec::new())?;
        let t = g.constant(batch.target.clone().expect("checked colors"));
        let l = g.mse_loss(pred, t)?;
        loss_sum += g.value(l).item().to_f64_lossy();
        batches += 1;
    }
    let entry = EpochLog {
        epoch: 0,
        loss: loss_sum / batches as f64,
        val_psnr: validation_psnr(&net, val_set)?,
        lr: config.lr,
    };
    on_epoch(&entry);
    log.push(entry);

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 0..config.epochs {
        adam.set_epoch(epoch);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(bs) {
            let batch = make_batch::<F>(train_set, chunk)?;
            let mut g = Graph::new();
            let mut updates = Vec::new();
            let pred = net.forward_batch(&mut g, &batch, true, &mut updates)?;
            let t = g.constant(batch.target.clone().expect("checked colors"));
            let l = g.mse_loss(pred, t)?;
            loss_sum += g.value(l).item().to_f64_lossy();
            batches += 1;
            g.backward(l)?;
            let grads = g.param_grads(net.store());
            drop(g);
            adam.step(net.store_mut(), &grads);
            apply_bn_updates(net.store_mut(), &updates, BN_MOMENTUM);
        }
        let entry = EpochLog {
            epoch: epoch + 1,
            loss: loss_sum / batches as f64,
            val_psnr: validation_psnr(&net, val_set)?,
            lr: adam.lr(),
        };
        log::info!("epoch {} loss {:.6e} val_psnr {:?}", entry.epoch, entry.loss, entry.val_psnr);
        on_epoch(&entry);
        log.push(entry);
    }
    Ok((net, log))
}

/// [`train`] at the precision named in the config.
pub fn train_model(
    train_set: &[Pair],
    val_set: &[Pair],
    config: &TrainConfig,
    on_epoch: impl FnMut(&EpochLog),
) -> Result<(Model, Vec<EpochLog>)> {
    Ok(match config.precision {
        Precision::F32 => {
            let (net, log) = train::<f32>(train_set, val_set, config, on_epoch)?;
            (Model::F32(net), log)
        }
        Precision::F64 => {
            let (net, log) = train::<f64>(train_set, val_set, config, on_epoch)?;
            (Model::F64(net), log)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_pairs, generate_synthetic, Shape, SyntheticRecipe, Texture};

    fn tiny_pairs(n: usize, v: u32) -> Vec<Pair> {
        (0..n)
            .map(|i| {
                let recipe = SyntheticRecipe {
                    shape: Shape::Sphere,
                    texture: Texture::Checker,
                    texture_scale: 6.0,
                    size: 0.35,
                    points: 4000,
                    seed: i as u64,
                };
                let hr = generate_synthetic(&recipe, 24).unwrap();
                build_pairs(format!("obj{i}"), &hr, v).unwrap()
            })
            .collect()
    }

    fn tiny_config(v: u32) -> TrainConfig {
        TrainConfig {
            channels: 4,
            blocks: 1,
            batch_size: 2,
            epochs: 3,
            lr: 1e-2,
            ..TrainConfig::for_ratio(v)
        }
    }

    #[test]
    fn published_defaults() {
        let c = TrainConfig::for_ratio(2);
        assert_eq!((c.channels, c.batch_size), (32, 16));
        let c = TrainConfig::for_ratio(5);
        assert_eq!((c.channels, c.batch_size), (64, 8));
        let c = TrainConfig::for_ratio(10);
        assert_eq!((c.channels, c.batch_size), (64, 4));
        assert_eq!((c.lr, c.decay_factor, c.decay_period, c.epochs, c.weight_decay, c.blocks), (1e-3, 0.1, 10, 25, 1e-4, 4));
    }

    #[test]
    fn empty_dataset_rejected() {
        let r = train::<f32>(&[], &[], &tiny_config(2), |_| {});
        assert!(matches!(r, Err(Error::EmptyDataset)));
    }

    #[test]
    fn ratio_mismatch_rejected() {
        let pairs = tiny_pairs(2, 3);
        let r = train::<f32>(&pairs, &[], &tiny_config(2), |_| {});
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn training_is_reproducible_and_logs_every_epoch() {
        let pairs = tiny_pairs(5, 2);
        let cfg = tiny_config(2);
        let mut seen = Vec::new();
        let (a, log_a) = train::<f32>(&pairs[..4], &pairs[4..], &cfg, |e| seen.push(e.epoch)).unwrap();
        let (b, log_b) = train::<f32>(&pairs[..4], &pairs[4..], &cfg, |_| {}).unwrap();
        assert_eq!(seen, vec![0, 1, 2, 3]);
        assert_eq!(log_a, log_b);
        for (x, y) in a.store().entries().iter().zip(b.store().entries()) {
            assert_eq!(x.value, y.value);
        }
        assert!(log_a.iter().all(|e| e.val_psnr.is_some() && e.loss.is_finite()));
    }

    #[test]
    fn parallel_and_sequential_training_agree() {
        let pairs = tiny_pairs(4, 2);
        let cfg = TrainConfig { epochs: 1, ..tiny_config(2) };
        let (a, _) = train::<f32>(&pairs, &[], &cfg, |_| {}).unwrap();
        let (b, _) = crate::exec::sequential(|| train::<f32>(&pairs, &[], &cfg, |_| {})).unwrap();
        for (x, y) in a.store().entries().iter().zip(b.store().entries()) {
            assert_eq!(x.value, y.value);
        }
    }
}
