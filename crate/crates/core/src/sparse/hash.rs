use crate::error::{Error, Result};
use crate::geometry::Coord;

const EMPTY: u32 = u32::MAX;

/// Open-addressing hash index from a 4D coordinate `(x, y, z, batch)` to
/// its row.
///
/// Keys are mixed with a splitmix64-style finalizer (multiplier
/// `0xBF58476D1CE4E5B9`) and probed linearly in a power-of-two table kept at
/// most half full. The table stores row numbers only; keys live in the
/// coordinate array it indexes.
#[derive(Debug, Clone)]
pub struct CoordIndex {
    keys: Vec<[i32; 4]>,
    slots: Vec<u32>,
    mask: usize,
}

#[inline]
fn mix(k: [i32; 4]) -> u64 {
    let mut h = 0x9E37_79B9_7F4A_7C15u64;
    for c in k {
        h = (h ^ c as u32 as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h ^= h >> 31;
    }
    h ^ (h >> 29)
}

impl CoordIndex {
    /// Indexes `coords`; row `i` is the position in the slice.
    pub fn build(coords: Vec<[i32; 4]>) -> Result<Self> {
        let cap = (coords.len() * 2).next_power_of_two().max(2);
        let mut index = Self {
            keys: coords,
            slots: vec![EMPTY; cap],
            mask: cap - 1,
        };
        for row in 0..index.keys.len() {
            let key = index.keys[row];
            let mut s = mix(key) as usize & index.mask;
            loop {
                match index.slots[s] {
                    EMPTY => {
                        index.slots[s] = row as u32;
                        break;
                    }
                    other if index.keys[other as usize] == key => {
                        return Err(Error::DuplicateCoordinate(key));
                    }
                    _ => s = (s + 1) & index.mask,
                }
            }
        }
        Ok(index)
    }

    /// Indexes 3D coordinates with batch index 0.
    pub fn build_3d(coords: &[Coord]) -> Result<Self> {
        Self::build(
            coords
                .iter()
                .map(|c| [c[0] as i32, c[1] as i32, c[2] as i32, 0])
                .collect(),
        )
    }

    #[inline]
    pub fn get(&self, key: [i32; 4]) -> Option<u32> {
        let mut s = mix(key) as usize & self.mask;
        loop {
            match self.slots[s] {
                EMPTY => return None,
                row if self.keys[row as usize] == key => return Some(row),
                _ => s = (s + 1) & self.mask,
            }
        }
    }

    pub fn coords(&self) -> &[[i32; 4]] {
        &self.keys
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }
}
