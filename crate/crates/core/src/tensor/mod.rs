//! Dense row-major tensors, a tape-based reverse-mode autodiff graph, and
//! the Adam optimizer used to train the network.

pub mod gradcheck;
mod graph;
pub mod init;
mod optim;
mod params;

pub use graph::{Backward, BackwardCtx, BatchStats, Graph, Var};
pub use optim::{Adam, AdamConfig};
pub use params::{ParamEntry, ParamId, ParamStore};

use crate::error::{Error, Result};
use crate::exec;
use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::{Deserialize, Serialize};
use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

/// Floating-point width of a tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

impl std::str::FromStr for Precision {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" | "32" => Ok(Precision::F32),
            "f64" | "64" => Ok(Precision::F64),
            _ => Err(Error::Config(format!("unknown precision {s:?}"))),
        }
    }
}

/// Scalar type a tensor can hold.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Default
    + Send
    + Sync
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + 'static
{
    const PRECISION: Precision;

    /// Raw strided GEMM: `c = alpha * a * b + beta * c`.
    ///
    /// # Safety
    /// Pointers and strides must describe valid `m×k`, `k×n` and `m×n`
    /// matrices; `c` must not alias `a` or `b`.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    fn from_f64_lossy(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).unwrap_or_else(Self::nan)
    }

    fn to_f64_lossy(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Real for f32 {
    const PRECISION: Precision = Precision::F32;
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

impl Real for f64 {
    const PRECISION: Precision = Precision::F64;
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

/// `c = op(a) * op(b) + beta * c`, with `op(a)` of shape `m×k` and `op(b)` of
/// shape `k×n`. A transposed operand is stored in its untransposed layout
/// (`k×m` for `a`, `n×k` for `b`).
#[allow(clippy::too_many_arguments)]
pub fn gemm<F: Real>(
    m: usize,
    k: usize,
    n: usize,
    a: &[F],
    trans_a: bool,
    b: &[F],
    trans_b: bool,
    beta: F,
    c: &mut [F],
) {
    assert_eq!(a.len(), m * k, "gemm: lhs length");
    assert_eq!(b.len(), k * n, "gemm: rhs length");
    assert_eq!(c.len(), m * n, "gemm: output length");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|x| *x = if beta == F::zero() { F::zero() } else { *x * beta });
        return;
    }
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: lengths are checked above and `c` is a distinct &mut borrow.
    unsafe {
        F::gemm_raw(
            m,
            k,
            n,
            F::one(),
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Rows per work item for row-parallel kernels.
pub(crate) const ROW_CHUNK: usize = 256;
/// Rows per partial for row reductions.
pub(crate) const REDUCE_CHUNK: usize = 4096;

/// Row-parallel `out[m×n] = a[m×k] * op(b)`.
pub(crate) fn matmul_rows<F: Real>(
    a: &[F],
    b: &[F],
    trans_b: bool,
    m: usize,
    k: usize,
    n: usize,
) -> Vec<F> {
    let mut out = vec![F::zero(); m * n];
    if n == 0 {
        return out;
    }
    exec::for_each_chunk_mut(&mut out, ROW_CHUNK * n, |ci, chunk| {
        let rows = chunk.len() / n;
        let start = ci * ROW_CHUNK;
        gemm(rows, k, n, &a[start * k..(start + rows) * k], false, b, trans_b, F::zero(), chunk);
    });
    out
}

/// `a[m×k]ᵀ * g[m×n]` as a fixed-order sum of per-chunk partial products.
pub(crate) fn matmul_at_b<F: Real>(a: &[F], g: &[F], m: usize, k: usize, n: usize) -> Vec<F> {
    let partials = exec::chunk_partials(m, REDUCE_CHUNK, |r| {
        let rows = r.len();
        let mut p = vec![F::zero(); k * n];
        gemm(k, rows, n, &a[r.start * k..r.end * k], true, &g[r.start * n..r.end * n], false, F::zero(), &mut p);
        p
    });
    sum_partials(partials, k * n)
}

pub(crate) fn sum_partials<F: Real>(partials: Vec<Vec<F>>, len: usize) -> Vec<F> {
    let mut it = partials.into_iter();
    let mut acc = it.next().unwrap_or_else(|| vec![F::zero(); len]);
    for p in it {
        acc.iter_mut().zip(&p).for_each(|(a, b)| *a += *b);
    }
    acc
}

/// Dense row-major tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<F> {
    shape: Vec<usize>,
    data: Vec<F>,
}

impl<F: Real> Tensor<F> {
    pub fn new(shape: Vec<usize>, data: Vec<F>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![F::zero(); n],
        }
    }

    pub fn full(shape: &[usize], value: F) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn scalar(x: F) -> Self {
        Self {
            shape: vec![1],
            data: vec![x],
        }
    }

    /// `n×3` tensor from RGB-like rows given in `f64`.
    pub fn from_rows3(rows: &[[f64; 3]]) -> Self {
        let data = rows.iter().flat_map(|r| r.map(F::from_f64_lossy)).collect();
        Self {
            shape: vec![rows.len(), 3],
            data,
        }
    }

    pub fn to_rows3(&self) -> Vec<[f64; 3]> {
        debug_assert_eq!(self.cols(), 3);
        self.data
            .chunks_exact(3)
            .map(|r| [r[0].to_f64_lossy(), r[1].to_f64_lossy(), r[2].to_f64_lossy()])
            .collect()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<F> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Leading dimension.
    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(1)
    }

    /// Product of the trailing dimensions.
    pub fn cols(&self) -> usize {
        self.shape.iter().skip(1).product()
    }

    pub fn row(&self, i: usize) -> &[F] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn item(&self) -> F {
        self.data[0]
    }

    /// Converts to another precision.
    pub fn cast<G: Real>(&self) -> Tensor<G> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|x| G::from_f64_lossy(x.to_f64_lossy())).collect(),
        }
    }

    pub fn dot(&self, other: &Self) -> F {
        self.data.iter().zip(&other.data).map(|(a, b)| *a * *b).sum()
    }
}
