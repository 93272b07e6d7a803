use super::CoordIndex;
use crate::error::{Error, Result};
use crate::exec;

pub(crate) const NONE: u32 = u32::MAX;

/// Neighbor relations of a submanifold convolution.
///
/// Offsets are enumerated lexicographically over `(dx, dy, dz)` in
/// `-r..=r`, so offset `k` and offset `K - 1 - k` are opposite and the zero
/// offset sits at `K / 2`. Pair `(i, o)` under offset `k` means
/// `coord(i) = coord(o) + offset[k]` within the same batch.
#[derive(Debug, Clone)]
pub struct KernelMap {
    kernel_size: usize,
    n: usize,
    offsets: Vec<[i32; 3]>,
    /// `n × K` table: input row feeding output row `o` through offset `k`.
    nbr: Vec<u32>,
    pairs: Vec<Vec<(u32, u32)>>,
}

impl KernelMap {
    /// Enumerates all occupied neighbor relations of `index`'s coordinates.
    pub fn build(index: &CoordIndex, kernel_size: usize) -> Result<Self> {
        if kernel_size.is_multiple_of(2) {
            return Err(Error::InvalidKernel(kernel_size));
        }
        let r = (kernel_size / 2) as i32;
        let mut offsets = Vec::new();
        for dx in -r..=r {
            for dy in -r..=r {
                for dz in -r..=r {
                    offsets.push([dx, dy, dz]);
                }
            }
        }
        let kk = offsets.len();
        let coords = index.coords();
        let n = coords.len();
        let rows: Vec<Vec<u32>> = exec::chunk_partials(n, 1024, |range| {
            let mut out = Vec::with_capacity(range.len() * kk);
            for o in range {
                let c = coords[o];
                for off in &offsets {
                    let key = [c[0] + off[0], c[1] + off[1], c[2] + off[2], c[3]];
                    out.push(index.get(key).unwrap_or(NONE));
                }
            }
            out
        });
        let nbr: Vec<u32> = rows.concat();
        let mut pairs = vec![Vec::new(); kk];
        for o in 0..n {
            for (k, p) in pairs.iter_mut().enumerate() {
                let i = nbr[o * kk + k];
                if i != NONE {
                    p.push((i, o as u32));
                }
            }
        }
        Ok(Self {
            kernel_size,
            n,
            offsets,
            nbr,
            pairs,
        })
    }

    pub fn kernel_size(&self) -> usize {
        self.kernel_size
    }

    /// Number of kernel offsets (`k³`).
    pub fn volume(&self) -> usize {
        self.offsets.len()
    }

    /// Number of sites (input rows = output rows).
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn offsets(&self) -> &[[i32; 3]] {
        &self.offsets
    }

    pub fn center(&self) -> usize {
        self.offsets.len() / 2
    }

    /// `(input_row, output_row)` pairs of offset `k`, ordered by output row.
    pub fn pairs(&self, k: usize) -> &[(u32, u32)] {
        &self.pairs[k]
    }

    pub fn total_pairs(&self) -> usize {
        self.pairs.iter().map(Vec::len).sum()
    }

    /// Input row feeding `output` through offset `k`.
    #[inline]
    pub fn neighbor(&self, output: usize, k: usize) -> Option<u32> {
        let i = self.nbr[output * self.offsets.len() + k];
        (i != NONE).then_some(i)
    }

    #[inline]
    pub(crate) fn nbr_raw(&self, output: usize, k: usize) -> u32 {
        self.nbr[output * self.offsets.len() + k]
    }
}
