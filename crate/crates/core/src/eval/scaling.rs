use crate::data::{generate_synthetic, Shape, SyntheticRecipe, Texture};
use crate::error::{Error, Result};
use crate::exec;
use crate::geometry::PointCloud;
use serde::{Deserialize, Serialize};

/// Untimed runs before each size's measured repeats.
pub const WARMUP_RUNS: usize = 2;
const MIN_SIZES: usize = 4;
const MIN_SPAN: f64 = 8.0;

/// Ordinary least squares fit `y = slope x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Coefficient of determination in `[0, 1]`; 0 when `y` is constant.
    pub r2: f64,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::InsufficientData(format!("need at least 2 paired samples, got {}/{}", xs.len(), ys.len())));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(Error::InsufficientData("all x values are equal".into()));
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 0.0 } else { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) };
    Ok(LinearFit {
        slope,
        intercept: my - slope * mx,
        r2,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingSample {
    pub n_hr: usize,
    /// Median of `runs`.
    pub seconds: f64,
    pub runs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub method: String,
    pub ratio: u32,
    pub threads: usize,
    pub repeats: usize,
    pub warmup: usize,
    pub samples: Vec<ScalingSample>,
    pub fit: LinearFit,
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        (xs[m - 1] + xs[m]) / 2.0
    }
}

/// Times `run(i)` for each `sizes[i]`, keeping the median of `repeats`
/// measured calls after [`WARMUP_RUNS`] discarded ones, and fits latency
/// against size. `run` returns the elapsed seconds of one call.
pub fn bench_scaling(
    sizes: &[usize],
    repeats: usize,
    mut run: impl FnMut(usize) -> Result<f64>,
) -> Result<(Vec<ScalingSample>, LinearFit)> {
    let mut distinct = sizes.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < MIN_SIZES {
        return Err(Error::InsufficientData(format!("need at least {MIN_SIZES} distinct sizes, got {}", distinct.len())));
    }
    let span = *distinct.last().unwrap() as f64 / distinct[0].max(1) as f64;
    if span < MIN_SPAN {
        return Err(Error::InsufficientData(format!("sizes span {span:.1}x, need at least {MIN_SPAN}x")));
    }
    if repeats == 0 {
        return Err(Error::InsufficientData("repeats must be at least 1".into()));
    }
    let mut samples = Vec::with_capacity(sizes.len());
    for (i, &n) in sizes.iter().enumerate() {
        for _ in 0..WARMUP_RUNS {
            run(i)?;
        }
        let runs = (0..repeats).map(|_| run(i)).collect::<Result<Vec<_>>>()?;
        let seconds = median(&mut runs.clone());
        log::info!("n_hr {n}: median {seconds:.4}s over {repeats} runs");
        samples.push(ScalingSample { n_hr: n, seconds, runs });
    }
    let xs: Vec<f64> = samples.iter().map(|s| s.n_hr as f64).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.seconds).collect();
    let fit = linear_fit(&xs, &ys)?;
    Ok((samples, fit))
}

/// A checker-textured sphere with roughly `n_hr` occupied voxels on the
/// smallest grid that holds it.
pub fn bench_cloud(n_hr: usize, seed: u64) -> Result<PointCloud> {
    let area = 4.0 * std::f64::consts::PI;
    let r = (n_hr as f64 / crate::data::expected_surface_voxels(area)).sqrt();
    let first = sphere_cloud(r, n_hr, seed)?;
    // Occupancy grows with r^2; one rescale absorbs the density estimate's bias.
    let r = r * (n_hr as f64 / first.len().max(1) as f64).sqrt();
    sphere_cloud(r, n_hr, seed)
}

fn sphere_cloud(r: f64, n_hr: usize, seed: u64) -> Result<PointCloud> {
    let extent = (2.0 * r).ceil() as u32 + 8;
    let recipe = SyntheticRecipe {
        shape: Shape::Sphere,
        texture: Texture::Checker,
        texture_scale: 4.0,
        size: r / (extent as f64 / 2.0 - 1.0),
        points: n_hr * 5,
        seed,
    };
    generate_synthetic(&recipe, extent)
}

impl ScalingReport {
    pub fn new(method: String, ratio: u32, repeats: usize, samples: Vec<ScalingSample>, fit: LinearFit) -> Self {
        Self {
            method,
            ratio,
            threads: exec::threads(),
            repeats,
            warmup: WARMUP_RUNS,
            samples,
            fit,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Explicit residual sums.
    fn r2_oracle(xs: &[f64], ys: &[f64], fit: &LinearFit) -> f64 {
        let my = ys.iter().sum::<f64>() / ys.len() as f64;
        let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
        let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - fit.slope * x - fit.intercept).powi(2)).sum();
        1.0 - ss_res / ss_tot
    }

    const SIZES: [usize; 5] = [50_000, 100_000, 200_000, 400_000, 800_000];

    #[test]
    fn constant_stub_has_no_slope() {
        let mut calls = 0;
        let (samples, fit) = bench_scaling(&SIZES, 3, |_| {
            calls += 1;
            Ok(0.25)
        })
        .unwrap();
        assert_eq!(calls, SIZES.len() * (3 + WARMUP_RUNS));
        assert_eq!(samples.len(), 5);
        assert!(fit.slope.abs() < 1e-15);
        assert!(fit.r2 < 1e-9);
        assert!((fit.intercept - 0.25).abs() < 1e-12);
    }

    #[test]
    fn linear_stub_is_perfect() {
        let (_, fit) = bench_scaling(&SIZES, 3, |i| Ok(2e-6 * SIZES[i] as f64)).unwrap();
        assert!((fit.r2 - 1.0).abs() < 1e-9);
        assert!((fit.slope - 2e-6).abs() < 1e-15);
    }

    #[test]
    fn median_ignores_outliers() {
        let mut k = 0;
        let (samples, _) = bench_scaling(&SIZES, 3, |i| {
            k += 1;
            // The last measured run of each size is a 10x outlier.
            Ok(SIZES[i] as f64 * if k % 5 == 0 { 10.0 } else { 1.0 })
        })
        .unwrap();
        for s in &samples {
            assert_eq!(s.seconds, s.n_hr as f64);
        }
    }

    #[test]
    fn insufficient_sizes() {
        let run = |_| Ok(1.0);
        assert!(matches!(bench_scaling(&[1, 2, 3], 1, run), Err(Error::InsufficientData(_))));
        assert!(matches!(bench_scaling(&[10, 10, 20, 40, 40], 1, run), Err(Error::InsufficientData(_))));
        // Four sizes but only a 4x span.
        assert!(matches!(bench_scaling(&[10, 20, 30, 40], 1, run), Err(Error::InsufficientData(_))));
        assert!(bench_scaling(&[10, 20, 40, 80], 1, run).is_ok());
    }

    #[test]
    fn bench_cloud_size() {
        for n in [5_000, 50_000, 200_000] {
            let c = bench_cloud(n, 0).unwrap();
            let ratio = c.len() as f64 / n as f64;
            assert!((0.95..1.05).contains(&ratio), "{n}: {}", c.len());
        }
    }

    proptest! {
        #[test]
        fn r2_matches_two_pass_oracle(
            ys in proptest::collection::vec(-100.0f64..100.0, 4..30),
            slope in -5.0f64..5.0,
        ) {
            let xs: Vec<f64> = (0..ys.len()).map(|i| i as f64 * 1.5 + 3.0).collect();
            let ys: Vec<f64> = ys.iter().zip(&xs).map(|(y, x)| y + slope * x).collect();
            let fit = linear_fit(&xs, &ys).unwrap();
            prop_assert!((fit.r2 - r2_oracle(&xs, &ys, &fit)).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&fit.r2));
        }
    }
}
