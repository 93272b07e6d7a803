//! Voxel-grid geometry: point clouds on an integer grid, voxelization with
//! color averaging, LR→HR mapping recovery, normalized in-voxel offsets and
//! devoxelization.

use crate::error::{Error, Result};
use crate::exec;
use crate::sparse::CoordIndex;

/// Integer voxel coordinate.
pub type Coord = [u32; 3];
/// RGB color with channels in `[0, 1]`.
pub type Rgb = [f64; 3];

/// Largest supported grid extent; coordinates pack into 21 bits per axis.
pub const MAX_EXTENT: u32 = 1 << 21;

/// Packs a coordinate into a `u64` whose numeric order is lexicographic
/// order on `(x, y, z)`.
#[inline]
pub(crate) fn pack(c: Coord) -> u64 {
    ((c[0] as u64) << 42) | ((c[1] as u64) << 21) | c[2] as u64
}

/// A voxelized point cloud in the cube `[0, extent)^3`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    coords: Vec<Coord>,
    colors: Option<Vec<Rgb>>,
    extent: u32,
}

impl PointCloud {
    /// Validates and wraps coordinates and optional colors.
    pub fn new(coords: Vec<Coord>, colors: Option<Vec<Rgb>>, extent: u32) -> Result<Self> {
        if extent == 0 || extent > MAX_EXTENT {
            return Err(Error::InvalidCloud(format!("extent {extent} out of range")));
        }
        if let Some(c) = coords.iter().find(|c| c.iter().any(|&x| x >= extent)) {
            return Err(Error::InvalidCloud(format!(
                "coordinate {c:?} outside [0, {extent})"
            )));
        }
        let mut seen = std::collections::HashSet::with_capacity(coords.len());
        for c in &coords {
            if !seen.insert(pack(*c)) {
                return Err(Error::DuplicateCoordinate([
                    c[0] as i32,
                    c[1] as i32,
                    c[2] as i32,
                    0,
                ]));
            }
        }
        if let Some(colors) = &colors {
            check_colors(colors, coords.len())?;
        }
        Ok(Self {
            coords,
            colors,
            extent,
        })
    }

    /// Builds a cloud from possibly repeated coordinates, merging repeats by
    /// averaging their colors. The first occurrence fixes the output order.
    pub fn merge_duplicates(
        coords: &[Coord],
        colors: Option<&[Rgb]>,
        extent: u32,
    ) -> Result<Self> {
        if let Some(colors) = colors {
            if colors.len() != coords.len() {
                return Err(Error::Shape(format!(
                    "{} colors for {} coordinates",
                    colors.len(),
                    coords.len()
                )));
            }
        }
        let mut slot = std::collections::HashMap::with_capacity(coords.len());
        let mut out = Vec::new();
        let mut sums: Vec<Rgb> = Vec::new();
        let mut counts: Vec<u32> = Vec::new();
        for (j, c) in coords.iter().enumerate() {
            let idx = *slot.entry(pack(*c)).or_insert_with(|| {
                out.push(*c);
                sums.push([0.0; 3]);
                counts.push(0);
                out.len() - 1
            });
            if let Some(colors) = colors {
                for ch in 0..3 {
                    sums[idx][ch] += colors[j][ch];
                }
            }
            counts[idx] += 1;
        }
        let merged = colors.map(|_| {
            sums.iter()
                .zip(&counts)
                .map(|(s, &n)| {
                    let n = n as f64;
                    [s[0] / n, s[1] / n, s[2] / n]
                })
                .collect()
        });
        Self::new(out, merged, extent)
    }

    pub fn coords(&self) -> &[Coord] {
        &self.coords
    }

    pub fn colors(&self) -> Option<&[Rgb]> {
        self.colors.as_deref()
    }

    /// Colors, or an attribute error when the cloud is geometry-only.
    pub fn require_colors(&self) -> Result<&[Rgb]> {
        self.colors()
            .ok_or_else(|| Error::Attribute("point cloud has no colors".into()))
    }

    pub fn extent(&self) -> u32 {
        self.extent
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Replaces the colors.
    pub fn with_colors(mut self, colors: Vec<Rgb>) -> Result<Self> {
        check_colors(&colors, self.coords.len())?;
        self.colors = Some(colors);
        Ok(self)
    }

    /// Geometry-only copy.
    pub fn without_colors(&self) -> Self {
        Self {
            coords: self.coords.clone(),
            colors: None,
            extent: self.extent,
        }
    }

    /// Reorders points so that output point `i` is input point `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.len() {
            return Err(Error::Shape("permutation length".into()));
        }
        let coords = perm.iter().map(|&i| self.coords[i]).collect();
        let colors = self
            .colors
            .as_ref()
            .map(|c| perm.iter().map(|&i| c[i]).collect());
        Self::new(coords, colors, self.extent)
    }
}

fn check_colors(colors: &[Rgb], n: usize) -> Result<()> {
    if colors.len() != n {
        return Err(Error::Shape(format!("{} colors for {n} coordinates", colors.len())));
    }
    if let Some(c) = colors
        .iter()
        .find(|c| c.iter().any(|x| !(0.0..=1.0).contains(x)))
    {
        return Err(Error::InvalidCloud(format!("color {c:?} outside [0, 1]")));
    }
    Ok(())
}

/// The surjection from HR point index to the LR point whose voxel contains it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LrHrMapping {
    map: Vec<u32>,
    voxel_size: u32,
    n_lr: usize,
}

impl LrHrMapping {
    /// Wraps a raw index array. Entries must lie in `[0, n_lr)`.
    pub fn new(map: Vec<u32>, voxel_size: u32, n_lr: usize) -> Result<Self> {
        if voxel_size < 2 {
            return Err(Error::InvalidRatio(voxel_size));
        }
        if let Some(&bad) = map.iter().find(|&&i| i as usize >= n_lr) {
            return Err(Error::Mapping(format!("LR index {bad} out of range {n_lr}")));
        }
        Ok(Self {
            map,
            voxel_size,
            n_lr,
        })
    }

    pub fn map(&self) -> &[u32] {
        &self.map
    }

    pub fn voxel_size(&self) -> u32 {
        self.voxel_size
    }

    pub fn n_lr(&self) -> usize {
        self.n_lr
    }

    pub fn n_hr(&self) -> usize {
        self.map.len()
    }

    /// Number of HR children per LR point.
    pub fn child_counts(&self) -> Vec<u32> {
        let mut counts = vec![0u32; self.n_lr];
        for &i in &self.map {
            counts[i as usize] += 1;
        }
        counts
    }

    pub fn is_surjective(&self) -> bool {
        self.child_counts().iter().all(|&c| c > 0)
    }
}

/// Rejects ratios that make the normalized offset undefined or the LR grid
/// collapse to a single cell.
pub fn check_ratio(v: u32, extent: u32) -> Result<()> {
    if v < 2 {
        return Err(Error::InvalidRatio(v));
    }
    if v >= extent {
        return Err(Error::DegenerateGrid { ratio: v, extent });
    }
    Ok(())
}

/// Merges HR points sharing a voxel of side `v` into one LR point.
///
/// LR points come out in lexicographic coordinate order; LR colors are the
/// arithmetic mean of their HR members.
pub fn voxelize(hr: &PointCloud, v: u32) -> Result<(PointCloud, LrHrMapping)> {
    check_ratio(v, hr.extent)?;
    let keys: Vec<u64> = exec::map_slice(hr.coords(), |c| pack([c[0] / v, c[1] / v, c[2] / v]));
    let mut order: Vec<u32> = (0..hr.len() as u32).collect();
    order.sort_unstable_by_key(|&j| (keys[j as usize], j));

    let mut lr_coords: Vec<Coord> = Vec::new();
    let mut map = vec![0u32; hr.len()];
    let mut last = None;
    for &j in &order {
        let key = keys[j as usize];
        if last != Some(key) {
            let c = hr.coords[j as usize];
            lr_coords.push([c[0] / v, c[1] / v, c[2] / v]);
            last = Some(key);
        }
        map[j as usize] = (lr_coords.len() - 1) as u32;
    }

    let n_lr = lr_coords.len();
    let lr_colors = hr.colors().map(|colors| {
        let mut sums = vec![[0.0f64; 3]; n_lr];
        let mut counts = vec![0u32; n_lr];
        for (j, &i) in map.iter().enumerate() {
            let s = &mut sums[i as usize];
            for ch in 0..3 {
                s[ch] += colors[j][ch];
            }
            counts[i as usize] += 1;
        }
        sums.iter()
            .zip(&counts)
            .map(|(s, &n)| {
                let n = n as f64;
                [
                    (s[0] / n).clamp(0.0, 1.0),
                    (s[1] / n).clamp(0.0, 1.0),
                    (s[2] / n).clamp(0.0, 1.0),
                ]
            })
            .collect()
    });
    let lr = PointCloud {
        coords: lr_coords,
        colors: lr_colors,
        extent: hr.extent.div_ceil(v),
    };
    Ok((lr, LrHrMapping::new(map, v, n_lr)?))
}

/// Recovers the LR→HR mapping for an externally supplied LR/HR pair by
/// quantizing HR coordinates and looking up the containing LR point.
pub fn recover_mapping(lr: &PointCloud, hr: &PointCloud, v: u32) -> Result<LrHrMapping> {
    check_ratio(v, hr.extent)?;
    let index = CoordIndex::build_3d(lr.coords())?;
    let rows: Vec<Option<u32>> = exec::map_slice(hr.coords(), |c| {
        index.get([(c[0] / v) as i32, (c[1] / v) as i32, (c[2] / v) as i32, 0])
    });
    let mut map = Vec::with_capacity(rows.len());
    for (j, r) in rows.into_iter().enumerate() {
        match r {
            Some(i) => map.push(i),
            None => {
                return Err(Error::Mapping(format!(
                    "HR point {j} at {:?} has no LR point at ratio {v}",
                    hr.coords[j]
                )))
            }
        }
    }
    LrHrMapping::new(map, v, lr.len())
}

/// Normalized position of each HR point inside its LR voxel, in `[-1, 1]^3`:
/// `2 (p_h - v p_l) / (v - 1) - 1`.
pub fn compute_offsets(
    hr: &PointCloud,
    lr: &PointCloud,
    mapping: &LrHrMapping,
) -> Result<Vec<[f64; 3]>> {
    if mapping.n_hr() != hr.len() || mapping.n_lr() != lr.len() {
        return Err(Error::Mapping(format!(
            "mapping is {}→{}, clouds are {}→{}",
            mapping.n_hr(),
            mapping.n_lr(),
            hr.len(),
            lr.len()
        )));
    }
    let v = mapping.voxel_size() as f64;
    let denom = v - 1.0;
    let lr_coords = lr.coords();
    let hr_coords = hr.coords();
    Ok(exec::map_range(hr.len(), |j| {
        let h = hr_coords[j];
        let l = lr_coords[mapping.map[j] as usize];
        let mut d = [0.0; 3];
        for a in 0..3 {
            d[a] = 2.0 * (h[a] as f64 - v * l[a] as f64) / denom - 1.0;
        }
        d
    }))
}

/// Spreads each LR row to all of its HR children.
pub fn devoxelize<T: Copy + Send + Sync>(lr_rows: &[T], mapping: &LrHrMapping) -> Result<Vec<T>> {
    if lr_rows.len() != mapping.n_lr() {
        return Err(Error::Shape(format!(
            "{} LR rows for a mapping over {} LR points",
            lr_rows.len(),
            mapping.n_lr()
        )));
    }
    Ok(exec::map_slice(mapping.map(), |&i| lr_rows[i as usize]))
}
