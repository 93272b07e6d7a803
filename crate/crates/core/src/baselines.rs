//! Classical color upsampling references.
//!
//! Distances are measured from HR coordinates to LR voxel centers in HR
//! units, `center = v p_l + (v - 1) / 2`. Internally everything is doubled
//! so centers and distances stay integral: `2 p_h` against
//! `2 v p_l + v - 1`.

use crate::error::{Error, Result};
use crate::exec;
use crate::geometry::{self, PointCloud, Rgb};
use crate::sparse::CoordIndex;
use serde::{Deserialize, Serialize};

pub const DEFAULT_K: usize = 3;
/// WAAN ball radius in LR voxel lengths.
pub const DEFAULT_WAAN_RADIUS: f64 = 1.5;
const WAAN_EPS: f64 = 1e-8;

/// Upsampling method selector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "method")]
pub enum Method {
    Devox,
    Knn { k: usize },
    /// Ball radius in HR units; `None` means 1.5 LR voxel lengths.
    Waan { radius: Option<f64> },
    Cunet,
}

impl Method {
    pub fn id(&self) -> &'static str {
        match self {
            Method::Devox => "devox",
            Method::Knn { .. } => "knn",
            Method::Waan { .. } => "waan",
            Method::Cunet => "cunet",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::Knn { k } if *k != DEFAULT_K => write!(f, "knn:{k}"),
            Method::Waan { radius: Some(r) } => write!(f, "waan:{r}"),
            m => f.write_str(m.id()),
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    /// `devox` (alias `nn`), `knn[:k]`, `waan[:radius]`, `cunet`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let bad = || Error::Config(format!("bad method {s:?}"));
        match (name, arg) {
            ("devox" | "nn", None) => Ok(Method::Devox),
            ("knn", None) => Ok(Method::Knn { k: DEFAULT_K }),
            ("knn", Some(k)) => match k.parse() {
                Ok(k) if k >= 1 => Ok(Method::Knn { k }),
                _ => Err(bad()),
            },
            ("waan", None) => Ok(Method::Waan { radius: None }),
            ("waan", Some(r)) => match r.parse::<f64>() {
                Ok(r) if r > 0.0 => Ok(Method::Waan { radius: Some(r) }),
                _ => Err(bad()),
            },
            ("cunet", None) => Ok(Method::Cunet),
            _ => Err(bad()),
        }
    }
}

/// Each HR point takes the color of the LR point whose voxel contains it.
pub fn upsample_devox(lr: &PointCloud, hr: &PointCloud, v: u32) -> Result<Vec<Rgb>> {
    let mapping = geometry::recover_mapping(lr, hr, v)?;
    geometry::devoxelize(lr.require_colors()?, &mapping)
}

struct LrGrid<'a> {
    index: CoordIndex,
    colors: &'a [Rgb],
    /// Doubled LR centers.
    centers: Vec<[i64; 3]>,
    v: i64,
    extent: i64,
}

impl<'a> LrGrid<'a> {
    fn new(lr: &'a PointCloud, v: u32) -> Result<Self> {
        if lr.is_empty() {
            return Err(Error::EmptyCloud);
        }
        let colors = lr.require_colors()?;
        let v = v as i64;
        let centers = lr
            .coords()
            .iter()
            .map(|c| c.map(|x| 2 * v * x as i64 + v - 1))
            .collect();
        let extent = lr.coords().iter().flatten().copied().max().unwrap_or(0) as i64 + 1;
        Ok(Self {
            index: CoordIndex::build_3d(lr.coords())?,
            colors,
            centers,
            v,
            extent,
        })
    }

    fn dist2(&self, h2: [i64; 3], i: u32) -> i64 {
        let c = self.centers[i as usize];
        (0..3).map(|a| (h2[a] - c[a]).pow(2)).sum()
    }

    /// Doubled lower bound on the per-axis distance from an HR point to any
    /// LR center in Chebyshev ring `r` around its cell.
    fn ring_bound2(&self, r: i64) -> i64 {
        if r == 0 {
            return 0;
        }
        let b = 2 * r * self.v - (self.v - 1);
        b * b
    }

    /// Calls `f(row)` for each occupied LR cell in ring `r` around `cell`.
    /// Returns false once the ring lies entirely outside the grid.
    fn visit_ring(&self, cell: [i64; 3], r: i64, mut f: impl FnMut(u32)) -> bool {
        let lo = cell.map(|c| c - r);
        let hi = cell.map(|c| c + r);
        if (0..3).all(|a| lo[a] < 0 && hi[a] >= self.extent) {
            return false;
        }
        for x in lo[0].max(0)..=hi[0].min(self.extent - 1) {
            let edge_x = x == lo[0] || x == hi[0];
            for y in lo[1].max(0)..=hi[1].min(self.extent - 1) {
                let edge_xy = edge_x || y == lo[1] || y == hi[1];
                if edge_xy {
                    for z in lo[2].max(0)..=hi[2].min(self.extent - 1) {
                        if let Some(i) = self.index.get([x as i32, y as i32, z as i32, 0]) {
                            f(i);
                        }
                    }
                } else {
                    for z in [lo[2], hi[2]] {
                        if (0..self.extent).contains(&z) {
                            if let Some(i) = self.index.get([x as i32, y as i32, z as i32, 0]) {
                                f(i);
                            }
                        }
                    }
                }
            }
        }
        true
    }

    fn cell_of(&self, h: [u32; 3]) -> [i64; 3] {
        h.map(|x| x as i64 / self.v)
    }

    /// The `k` nearest LR rows ordered by (distance, row).
    fn nearest(&self, h: [u32; 3], k: usize) -> Vec<(i64, u32)> {
        let h2 = h.map(|x| 2 * x as i64);
        let cell = self.cell_of(h);
        let mut best: Vec<(i64, u32)> = Vec::with_capacity(k + 1);
        let mut r = 0;
        loop {
            if best.len() == k && self.ring_bound2(r) > best[k - 1].0 {
                break;
            }
            let inside = self.visit_ring(cell, r, |i| {
                let cand = (self.dist2(h2, i), i);
                if best.len() < k || cand < best[k - 1] {
                    let pos = best.partition_point(|b| *b < cand);
                    best.insert(pos, cand);
                    best.truncate(k);
                }
            });
            if !inside {
                break;
            }
            r += 1;
        }
        best
    }
}

/// Unweighted mean color of the `k` nearest LR centers, ties broken by LR
/// index. `k` larger than the LR cloud is clamped with a warning.
pub fn upsample_knn(lr: &PointCloud, hr: &PointCloud, v: u32, k: usize) -> Result<Vec<Rgb>> {
    geometry::check_ratio(v, hr.extent())?;
    if k == 0 {
        return Err(Error::Config("knn needs k >= 1".into()));
    }
    let grid = LrGrid::new(lr, v)?;
    let k = if k > lr.len() {
        log::warn!("knn k={k} exceeds {} LR points; clamping", lr.len());
        lr.len()
    } else {
        k
    };
    Ok(exec::map_slice(hr.coords(), |&h| {
        let nn = grid.nearest(h, k);
        let mut acc = [0.0; 3];
        for &(_, i) in &nn {
            let c = grid.colors[i as usize];
            for ch in 0..3 {
                acc[ch] += c[ch];
            }
        }
        acc.map(|x| (x / k as f64).clamp(0.0, 1.0))
    }))
}

/// Inverse-distance weighted mean over LR centers within `radius` (HR
/// units, inclusive), with weights `1 / (1e-8 + d)`. Points with an empty
/// ball take their nearest LR color.
pub fn upsample_waan(lr: &PointCloud, hr: &PointCloud, v: u32, radius: Option<f64>) -> Result<Vec<Rgb>> {
    geometry::check_ratio(v, hr.extent())?;
    let radius = radius.unwrap_or(DEFAULT_WAAN_RADIUS * v as f64);
    if !(radius > 0.0) {
        return Err(Error::Config(format!("waan radius {radius} must be positive")));
    }
    let grid = LrGrid::new(lr, v)?;
    let r2 = (2.0 * radius).powi(2);
    Ok(exec::map_slice(hr.coords(), |&h| {
        let h2 = h.map(|x| 2 * x as i64);
        let cell = grid.cell_of(h);
        let mut acc = [0.0; 3];
        let mut wsum = 0.0;
        let mut r = 0;
        while (grid.ring_bound2(r) as f64) <= r2 {
            let inside = grid.visit_ring(cell, r, |i| {
                let d2 = grid.dist2(h2, i);
                if d2 as f64 <= r2 {
                    let w = 1.0 / (WAAN_EPS + (d2 as f64).sqrt() / 2.0);
                    let c = grid.colors[i as usize];
                    for ch in 0..3 {
                        acc[ch] += w * c[ch];
                    }
                    wsum += w;
                }
            });
            if !inside {
                break;
            }
            r += 1;
        }
        if wsum == 0.0 {
            let (_, i) = grid.nearest(h, 1)[0];
            return grid.colors[i as usize];
        }
        acc.map(|x| (x / wsum).clamp(0.0, 1.0))
    }))
}

/// Runs a classical method; `Method::Cunet` needs a model and is rejected.
pub fn upsample_baseline(method: Method, lr: &PointCloud, hr: &PointCloud, v: u32) -> Result<Vec<Rgb>> {
    match method {
        Method::Devox => upsample_devox(lr, hr, v),
        Method::Knn { k } => upsample_knn(lr, hr, v, k),
        Method::Waan { radius } => upsample_waan(lr, hr, v, radius),
        Method::Cunet => Err(Error::Config("cunet is not a baseline; it needs a checkpoint".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::voxelize;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    fn random_hr(n: usize, s: u32, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut seen = HashSet::new();
        let mut coords = Vec::new();
        while coords.len() < n {
            let c = [rng.gen_range(0..s), rng.gen_range(0..s), rng.gen_range(0..s)];
            if seen.insert(c) {
                coords.push(c);
            }
        }
        let colors = (0..n).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect();
        PointCloud::new(coords, Some(colors), s).unwrap()
    }

    fn random_lr(n: usize, s: u32, seed: u64) -> PointCloud {
        random_hr(n, s, seed)
    }

    fn center(c: [u32; 3], v: u32) -> [f64; 3] {
        c.map(|x| v as f64 * x as f64 + (v as f64 - 1.0) / 2.0)
    }

    fn dist(h: [u32; 3], c: [f64; 3]) -> f64 {
        (0..3).map(|a| (h[a] as f64 - c[a]).powi(2)).sum::<f64>().sqrt()
    }

    /// All-pairs distance sort.
    fn knn_oracle(lr: &PointCloud, hr: &PointCloud, v: u32, k: usize) -> Vec<Rgb> {
        let colors = lr.colors().unwrap();
        hr.coords()
            .iter()
            .map(|&h| {
                let mut d: Vec<(f64, usize)> =
                    lr.coords().iter().enumerate().map(|(i, &c)| (dist(h, center(c, v)), i)).collect();
                d.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let mut acc = [0.0; 3];
                for &(_, i) in &d[..k] {
                    for ch in 0..3 {
                        acc[ch] += colors[i][ch];
                    }
                }
                acc.map(|x| x / k as f64)
            })
            .collect()
    }

    /// Linear-scan ball query.
    fn waan_oracle(lr: &PointCloud, hr: &PointCloud, v: u32, radius: f64) -> Vec<Rgb> {
        let colors = lr.colors().unwrap();
        hr.coords()
            .iter()
            .map(|&h| {
                let mut acc = [0.0; 3];
                let mut ws = 0.0;
                for (i, &c) in lr.coords().iter().enumerate() {
                    let d = dist(h, center(c, v));
                    if d <= radius {
                        let w = 1.0 / (1e-8 + d);
                        for ch in 0..3 {
                            acc[ch] += w * colors[i][ch];
                        }
                        ws += w;
                    }
                }
                if ws == 0.0 {
                    return knn_oracle(lr, &PointCloud::new(vec![h], None, hr.extent()).unwrap(), v, 1)[0];
                }
                acc.map(|x| x / ws)
            })
            .collect()
    }

    fn assert_close(a: &[Rgb], b: &[Rgb], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            for c in 0..3 {
                assert!((x[c] - y[c]).abs() <= tol, "{x:?} vs {y:?}");
            }
        }
    }

    #[test]
    fn devox_single_voxel() {
        let hr = PointCloud::new(vec![[0, 0, 0], [1, 1, 0], [0, 1, 1]], None, 4).unwrap();
        let lr = PointCloud::new(vec![[0, 0, 0]], Some(vec![[0.2, 0.4, 0.6]]), 2).unwrap();
        assert_eq!(upsample_devox(&lr, &hr, 2).unwrap(), vec![[0.2, 0.4, 0.6]; 3]);
    }

    #[test]
    fn devox_equals_geometry_devoxelize() {
        let hr = random_hr(2000, 40, 1);
        let (lr, mapping) = voxelize(&hr, 4).unwrap();
        let expected = geometry::devoxelize(lr.colors().unwrap(), &mapping).unwrap();
        assert_eq!(upsample_devox(&lr, &hr, 4).unwrap(), expected);
    }

    #[test]
    fn knn_matches_all_pairs_oracle() {
        let lr = random_lr(300, 12, 2);
        let hr = random_hr(1500, 60, 3);
        for k in [1, 3, 7] {
            let got = upsample_knn(&lr, &hr, 5, k).unwrap();
            assert_close(&got, &knn_oracle(&lr, &hr, 5, k), 1e-10);
        }
        // Sparse LR so rings must widen.
        let sparse = random_lr(20, 12, 4);
        assert_close(&upsample_knn(&sparse, &hr, 5, 3).unwrap(), &knn_oracle(&sparse, &hr, 5, 3), 1e-10);
    }

    #[test]
    fn knn_global_mean_when_k_is_everything() {
        let lr = random_lr(30, 8, 5);
        let hr = random_hr(50, 16, 6);
        let mean = {
            let c = lr.colors().unwrap();
            let mut m = [0.0; 3];
            for x in c {
                for ch in 0..3 {
                    m[ch] += x[ch] / c.len() as f64;
                }
            }
            m
        };
        for k in [30, 1000] {
            let out = upsample_knn(&lr, &hr, 2, k).unwrap();
            assert_close(&out, &vec![mean; 50], 1e-12);
        }
    }

    #[test]
    fn knn_k1_equals_devox_for_interior_points() {
        let hr = random_hr(3000, 50, 7);
        let (lr, _) = voxelize(&hr, 5).unwrap();
        let knn = upsample_knn(&lr, &hr, 5, 1).unwrap();
        let devox = upsample_devox(&lr, &hr, 5).unwrap();
        for (j, h) in hr.coords().iter().enumerate() {
            if h.iter().all(|&x| x % 5 != 0 && x % 5 != 4) {
                assert_eq!(knn[j], devox[j]);
            }
        }
    }

    #[test]
    fn waan_matches_ball_query_oracle() {
        let lr = random_lr(300, 12, 8);
        let hr = random_hr(1500, 60, 9);
        for radius in [None, Some(3.0), Some(11.0)] {
            let got = upsample_waan(&lr, &hr, 5, radius).unwrap();
            assert_close(&got, &waan_oracle(&lr, &hr, 5, radius.unwrap_or(7.5)), 1e-10);
        }
    }

    #[test]
    fn waan_single_neighbor_and_midpoint() {
        let lr = PointCloud::new(vec![[0, 0, 0], [2, 0, 0]], Some(vec![[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]), 4).unwrap();
        // v=2: centers at 0.5 and 4.5 (HR units). HR (0,0,0) sees only the first within radius 1.
        let hr = PointCloud::new(vec![[0, 0, 0]], None, 8).unwrap();
        assert_eq!(upsample_waan(&lr, &hr, 2, Some(1.0)).unwrap(), vec![[1.0, 0.0, 0.0]]);
        // v=3: centers at x=1 and x=7; x=4 is equidistant.
        let hr = PointCloud::new(vec![[4, 1, 1]], None, 12).unwrap();
        let out = upsample_waan(&lr, &hr, 3, Some(10.0)).unwrap();
        assert_close(&out, &[[0.5, 0.0, 0.5]], 1e-12);
        // Empty ball falls back to nearest.
        let hr = PointCloud::new(vec![[1, 11, 11]], None, 12).unwrap();
        assert_eq!(upsample_waan(&lr, &hr, 3, Some(0.5)).unwrap(), vec![[1.0, 0.0, 0.0]]);
    }

    #[test]
    fn method_parsing() {
        assert_eq!("nn".parse::<Method>().unwrap(), Method::Devox);
        assert_eq!("knn".parse::<Method>().unwrap(), Method::Knn { k: 3 });
        assert_eq!("knn:5".parse::<Method>().unwrap(), Method::Knn { k: 5 });
        assert_eq!("waan:2.5".parse::<Method>().unwrap(), Method::Waan { radius: Some(2.5) });
        assert!("knn:0".parse::<Method>().is_err());
        assert!("bilinear".parse::<Method>().is_err());
        for m in ["devox", "knn", "knn:5", "waan", "cunet"] {
            assert_eq!(m.parse::<Method>().unwrap().to_string(), m);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn outputs_stay_in_lr_color_hull(seed in 0u64..1000, v in 2u32..6) {
            let hr = random_hr(400, 30, seed);
            let (lr, _) = voxelize(&hr, v).unwrap();
            let colors = lr.colors().unwrap();
            let lo: [f64; 3] = std::array::from_fn(|c| colors.iter().map(|x| x[c]).fold(f64::INFINITY, f64::min));
            let hi: [f64; 3] = std::array::from_fn(|c| colors.iter().map(|x| x[c]).fold(f64::NEG_INFINITY, f64::max));
            for m in [Method::Devox, Method::Knn { k: 3 }, Method::Waan { radius: None }] {
                for c in upsample_baseline(m, &lr, &hr, v).unwrap() {
                    for ch in 0..3 {
                        prop_assert!(c[ch] >= lo[ch] - 1e-12 && c[ch] <= hi[ch] + 1e-12);
                    }
                }
            }
        }
    }
}
