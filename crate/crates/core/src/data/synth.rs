//! Procedural textured surfaces.
//!
//! Points are drawn uniformly by area from a closed surface, colored by a
//! procedural texture evaluated at the continuous sample position, floored
//! onto the grid, and merged per voxel by color mean. Every texture mixes
//! sharp edges with smooth regions except `Checker`, which is two-valued.

use crate::error::{Error, Result};
use crate::geometry::{Coord, PointCloud, Rgb};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Shape {
    Sphere,
    Torus,
    Box,
    /// Union of a sphere and an overlapping box, interior parts removed.
    Blended,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Texture {
    Checker,
    /// Sawtooth ramp along a direction: smooth inside a period, a hard seam
    /// at each period boundary.
    Gradient,
    /// Smooth value noise with a hard color step along one contour.
    ValueNoise,
    /// Three-color bands with smooth shading.
    Stripes,
}

pub const SHAPES: [Shape; 4] = [Shape::Sphere, Shape::Torus, Shape::Box, Shape::Blended];
pub const TEXTURES: [Texture; 4] = [Texture::Checker, Texture::Gradient, Texture::ValueNoise, Texture::Stripes];

/// Everything needed to regenerate one object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticRecipe {
    pub shape: Shape,
    pub texture: Texture,
    /// Texture periods per object radius.
    pub texture_scale: f64,
    /// Object radius as a fraction of half the grid extent.
    pub size: f64,
    /// Surface samples drawn before quantization.
    pub points: usize,
    pub seed: u64,
}

impl SyntheticRecipe {
    fn validate(&self) -> Result<()> {
        if self.points == 0 {
            return Err(Error::Recipe("point budget must be at least 1".into()));
        }
        if !(self.size > 0.0 && self.size <= 1.0) {
            return Err(Error::Recipe(format!("size {} outside (0, 1]", self.size)));
        }
        if !(self.texture_scale > 0.0 && self.texture_scale.is_finite()) {
            return Err(Error::Recipe(format!("texture scale {} must be positive", self.texture_scale)));
        }
        Ok(())
    }
}

type V3 = [f64; 3];

fn add(a: V3, b: V3) -> V3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn scale(a: V3, s: f64) -> V3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

fn dot(a: V3, b: V3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn unit_vector(rng: &mut impl Rng) -> V3 {
    loop {
        let v: V3 = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let n = dot(v, v);
        if n > 1e-6 && n <= 1.0 {
            return scale(v, 1.0 / n.sqrt());
        }
    }
}

/// Random rotation from a random unit quaternion.
fn random_rotation(rng: &mut impl Rng) -> [V3; 3] {
    let q = loop {
        let q: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let n = q.iter().map(|x| x * x).sum::<f64>();
        if n > 1e-6 && n <= 1.0 {
            break q.map(|x| x / n.sqrt());
        }
    };
    let [w, x, y, z] = q;
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

fn rotate(m: &[V3; 3], p: V3) -> V3 {
    [dot(m[0], p), dot(m[1], p), dot(m[2], p)]
}

/// A closed surface in object units (bounding radius about 1).
enum Surface {
    Sphere { r: f64 },
    Torus { major: f64, minor: f64 },
    Box { half: V3 },
    Blended { r: f64, center: V3, half: V3 },
}

impl Surface {
    fn new(shape: Shape, rng: &mut impl Rng) -> Self {
        match shape {
            Shape::Sphere => Surface::Sphere { r: 1.0 },
            Shape::Torus => {
                let minor = rng.gen_range(0.25..0.4);
                Surface::Torus { major: 1.0 - minor, minor }
            }
            Shape::Box => {
                let half: V3 = std::array::from_fn(|_| rng.gen_range(0.35..0.58));
                Surface::Box { half }
            }
            Shape::Blended => Surface::Blended {
                r: rng.gen_range(0.55..0.7),
                center: [rng.gen_range(-0.3..-0.15), 0.0, 0.0],
                half: [rng.gen_range(0.3..0.4), rng.gen_range(0.3..0.45), rng.gen_range(0.3..0.45)],
            },
        }
    }

    fn sample(&self, rng: &mut impl Rng) -> V3 {
        match *self {
            Surface::Sphere { r } => scale(unit_vector(rng), r),
            Surface::Torus { major, minor } => loop {
                // Area element ∝ (major + minor cos θ); accept by that weight.
                let theta = rng.gen_range(0.0..std::f64::consts::TAU);
                let w = (major + minor * theta.cos()) / (major + minor);
                if rng.gen::<f64>() <= w {
                    let phi = rng.gen_range(0.0..std::f64::consts::TAU);
                    let rr = major + minor * theta.cos();
                    break [rr * phi.cos(), rr * phi.sin(), minor * theta.sin()];
                }
            },
            Surface::Box { half } => sample_box(rng, [0.0; 3], half),
            Surface::Blended { r, center, half } => {
                let sphere_area = 4.0 * std::f64::consts::PI * r * r;
                let box_area = 8.0 * (half[0] * half[1] + half[1] * half[2] + half[0] * half[2]);
                let box_center = scale(center, -1.0);
                loop {
                    if rng.gen::<f64>() < sphere_area / (sphere_area + box_area) {
                        let p = add(center, scale(unit_vector(rng), r));
                        if !inside_box(p, box_center, half) {
                            return p;
                        }
                    } else {
                        let p = sample_box(rng, box_center, half);
                        let d = add(p, scale(center, -1.0));
                        if dot(d, d) >= r * r {
                            return p;
                        }
                    }
                }
            }
        }
    }

    /// Analytic surface area in object units.
    fn area(&self) -> f64 {
        match *self {
            Surface::Sphere { r } => 4.0 * std::f64::consts::PI * r * r,
            Surface::Torus { major, minor } => 4.0 * std::f64::consts::PI.powi(2) * major * minor,
            Surface::Box { half } => 8.0 * (half[0] * half[1] + half[1] * half[2] + half[0] * half[2]),
            Surface::Blended { r, half, .. } => {
                // Upper bound; the union is smaller by the removed overlap.
                4.0 * std::f64::consts::PI * r * r + 8.0 * (half[0] * half[1] + half[1] * half[2] + half[0] * half[2])
            }
        }
    }
}

fn inside_box(p: V3, c: V3, half: V3) -> bool {
    (0..3).all(|a| (p[a] - c[a]).abs() < half[a])
}

fn sample_box(rng: &mut impl Rng, c: V3, h: V3) -> V3 {
    let areas = [h[1] * h[2], h[0] * h[2], h[0] * h[1]];
    let total: f64 = areas.iter().sum();
    let mut u = rng.gen_range(0.0..total);
    let mut axis = 2;
    for (a, &w) in areas.iter().enumerate() {
        if u < w {
            axis = a;
            break;
        }
        u -= w;
    }
    let mut p: V3 = std::array::from_fn(|a| rng.gen_range(-h[a]..h[a]));
    p[axis] = if rng.gen::<bool>() { h[axis] } else { -h[axis] };
    add(c, p)
}

fn hash3(seed: u64, i: i64, j: i64, k: i64) -> f64 {
    let mut h = seed ^ 0x9E37_79B9_7F4A_7C15;
    for v in [i, j, k] {
        h = (h ^ v as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h ^= h >> 27;
        h = h.wrapping_mul(0x94D0_49BB_1331_11EB);
        h ^= h >> 31;
    }
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Trilinear value noise with smoothstep fade, in `[0, 1)`.
fn value_noise(seed: u64, p: V3) -> f64 {
    let base = p.map(|x| x.floor());
    let f = [p[0] - base[0], p[1] - base[1], p[2] - base[2]].map(|t| t * t * (3.0 - 2.0 * t));
    let b = base.map(|x| x as i64);
    let mut acc = 0.0;
    for corner in 0..8 {
        let d = [(corner >> 2) & 1, (corner >> 1) & 1, corner & 1];
        let w: f64 = (0..3).map(|a| if d[a] == 1 { f[a] } else { 1.0 - f[a] }).product();
        acc += w * hash3(seed, b[0] + d[0] as i64, b[1] + d[1] as i64, b[2] + d[2] as i64);
    }
    acc
}

fn lerp(a: Rgb, b: Rgb, t: f64) -> Rgb {
    std::array::from_fn(|c| a[c] + (b[c] - a[c]) * t)
}

struct Painter {
    texture: Texture,
    freq: f64,
    rot: [V3; 3],
    palette: [Rgb; 3],
    seed: u64,
}

impl Painter {
    fn new(recipe: &SyntheticRecipe, rng: &mut impl Rng) -> Self {
        let rot = random_rotation(rng);
        // Two well-separated colors and a third accent.
        let a: Rgb = std::array::from_fn(|_| rng.gen_range(0.05..0.45));
        let b: Rgb = std::array::from_fn(|_| rng.gen_range(0.55..0.95));
        let c: Rgb = std::array::from_fn(|_| rng.gen_range(0.1..0.9));
        let mut palette = [a, b, c];
        if rng.gen::<bool>() {
            palette.swap(0, 1);
        }
        Self {
            texture: recipe.texture,
            freq: recipe.texture_scale,
            rot,
            palette,
            seed: rng.gen(),
        }
    }

    fn shade(&self, p: V3) -> f64 {
        0.8 + 0.2 * value_noise(self.seed ^ 0x5A5A, scale(p, 1.5))
    }

    fn color(&self, p: V3) -> Rgb {
        let q = scale(rotate(&self.rot, p), self.freq);
        let [a, b, c] = self.palette;
        let out = match self.texture {
            Texture::Checker => {
                let parity = q.iter().map(|x| x.floor() as i64).sum::<i64>().rem_euclid(2);
                return if parity == 0 { a } else { b };
            }
            Texture::Gradient => {
                let u = q[0] * 0.5;
                let t = u - u.floor();
                let s = 0.5 + 0.5 * (q[1] * 0.7).sin();
                lerp(lerp(a, b, t), c, 0.3 * s)
            }
            Texture::ValueNoise => {
                let n = value_noise(self.seed, q);
                let base = lerp(a, b, n);
                if n > 0.55 {
                    lerp(base, c, 0.7)
                } else {
                    base
                }
            }
            Texture::Stripes => {
                let band = (q[2] * 0.5).floor().rem_euclid(3.0) as usize;
                let col = self.palette[band];
                let s = self.shade(p);
                col.map(|x| x * s)
            }
        };
        out.map(|x| x.clamp(0.0, 1.0))
    }
}

/// Samples, textures and voxelizes the recipe's object on an `extent³` grid.
pub fn generate_synthetic(recipe: &SyntheticRecipe, extent: u32) -> Result<PointCloud> {
    recipe.validate()?;
    if extent < 4 {
        return Err(Error::Recipe(format!("extent {extent} too small")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(recipe.seed);
    let surface = Surface::new(recipe.shape, &mut rng);
    if surface.area() <= 0.0 {
        return Err(Error::Recipe("zero-area surface".into()));
    }
    let painter = Painter::new(recipe, &mut rng);
    let half = extent as f64 / 2.0;
    let radius = recipe.size * (half - 1.0);
    if radius < 1.0 {
        return Err(Error::Recipe(format!("object radius {radius:.2} voxels is below one voxel")));
    }
    let rot = random_rotation(&mut rng);
    let max = (extent - 1) as f64;
    let mut coords: Vec<Coord> = Vec::with_capacity(recipe.points);
    let mut colors: Vec<Rgb> = Vec::with_capacity(recipe.points);
    for _ in 0..recipe.points {
        let p = surface.sample(&mut rng);
        colors.push(painter.color(p));
        let w = rotate(&rot, p);
        coords.push(std::array::from_fn(|a| (half + radius * w[a]).floor().clamp(0.0, max) as u32));
    }
    PointCloud::merge_duplicates(&coords, Some(&colors), extent)
}

/// Expected number of occupied voxels for a surface of `area` voxel units:
/// a randomly oriented plane crosses `|n_x| + |n_y| + |n_z|` unit cells per
/// unit area, which averages 3/2.
pub fn expected_surface_voxels(area: f64) -> f64 {
    1.5 * area
}
