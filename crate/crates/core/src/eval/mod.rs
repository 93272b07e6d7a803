//! Quality metrics, per-object evaluation, latency scaling, and reports.

mod report;
mod scaling;

pub use report::{read_csv_rows, write_csv, write_scaling_dat, CsvRow, EvalSummary, MethodSummary};
pub use scaling::{bench_cloud, bench_scaling, linear_fit, LinearFit, ScalingReport, ScalingSample, WARMUP_RUNS};

use crate::baselines::{upsample_baseline, Method};
use crate::data::Pair;
use crate::error::{Error, Result};
use crate::geometry::Rgb;
use crate::model::Model;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Mean squared error per channel.
pub fn channel_mse(pred: &[Rgb], gt: &[Rgb]) -> Result<[f64; 3]> {
    if pred.len() != gt.len() {
        return Err(Error::Shape(format!("{} predicted colors for {} targets", pred.len(), gt.len())));
    }
    if pred.is_empty() {
        return Err(Error::Shape("PSNR of an empty cloud".into()));
    }
    let mut acc = [RunningMean::default(); 3];
    for (p, g) in pred.iter().zip(gt) {
        for c in 0..3 {
            acc[c].push((p[c] - g[c]).powi(2));
        }
    }
    Ok(acc.map(|a| a.mean))
}

/// Incremental mean. A run of equal values yields that value exactly, which
/// a sum divided by the count does not.
#[derive(Debug, Clone, Copy, Default)]
struct RunningMean {
    mean: f64,
    count: f64,
}

impl RunningMean {
    fn push(&mut self, x: f64) {
        self.count += 1.0;
        self.mean += (x - self.mean) / self.count;
    }
}

fn channel_mean(mse: [f64; 3]) -> f64 {
    let mut m = RunningMean::default();
    mse.into_iter().for_each(|x| m.push(x));
    m.mean
}

/// PSNR in dB with peak 1 over all points and channels. Identical inputs
/// give `f64::INFINITY`.
pub fn psnr(pred: &[Rgb], gt: &[Rgb]) -> Result<f64> {
    let mse = channel_mse(pred, gt)?;
    Ok(psnr_from_mse(channel_mean(mse)))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        // 20 log10(1/RMSE): the square root lands back on the error scale,
        // so an error of 0.1 gives 20 dB without a rounding residue.
        -20.0 * mse.sqrt().log10()
    }
}

/// Result for one object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectResult {
    pub object_id: String,
    pub psnr_db: f64,
    pub mse: [f64; 3],
    pub wall_ms: f64,
    pub n_lr: usize,
    pub n_hr: usize,
}

/// One method evaluated on one dataset at one ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    /// Training ratio of the evaluated checkpoint; `None` for baselines.
    pub v_train: Option<u32>,
    pub v_test: u32,
    pub objects: Vec<ObjectResult>,
}

impl EvalReport {
    pub fn mean_psnr(&self) -> f64 {
        self.objects.iter().map(|o| o.psnr_db).sum::<f64>() / self.objects.len() as f64
    }

    pub fn mean_mse(&self) -> [f64; 3] {
        let n = self.objects.len() as f64;
        std::array::from_fn(|c| self.objects.iter().map(|o| o.mse[c]).sum::<f64>() / n)
    }
}

/// Upsamples every pair with `method` and scores it against the pair's HR
/// colors. `model` is required for `Method::Cunet`; its training ratio may
/// differ from the pairs' ratio.
pub fn evaluate(method: Method, pairs: &[Pair], model: Option<&Model>) -> Result<EvalReport> {
    if pairs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let v_test = pairs[0].mapping.voxel_size();
    if let Some(p) = pairs.iter().find(|p| p.mapping.voxel_size() != v_test) {
        return Err(Error::Config(format!("pair {} has ratio {} but expected {v_test}", p.id, p.mapping.voxel_size())));
    }
    let model = match (method, model) {
        (Method::Cunet, None) => return Err(Error::Config("cunet evaluation needs a checkpoint".into())),
        (Method::Cunet, Some(m)) => Some(m),
        _ => None,
    };
    if let Some(m) = model.filter(|m| m.config().v_train != v_test) {
        log::warn!("model trained at {}x is evaluated at {v_test}x", m.config().v_train);
    }
    // Objects run one at a time so that each wall-clock sample owns the pool.
    let mut objects = Vec::with_capacity(pairs.len());
    for p in pairs {
        let gt = p.hr.require_colors()?;
        let t = Instant::now();
        let pred = match model {
            Some(m) => m.upsample_mapped(&p.lr, &p.hr, &p.mapping)?,
            None => upsample_baseline(method, &p.lr, &p.hr, v_test)?,
        };
        let wall_ms = t.elapsed().as_secs_f64() * 1e3;
        let mse = channel_mse(&pred, gt)?;
        objects.push(ObjectResult {
            object_id: p.id.clone(),
            psnr_db: psnr_from_mse(channel_mean(mse)),
            mse,
            wall_ms,
            n_lr: p.lr.len(),
            n_hr: p.hr.len(),
        });
    }
    Ok(EvalReport {
        method: method.to_string(),
        v_train: model.map(|m| m.config().v_train),
        v_test,
        objects,
    })
}
