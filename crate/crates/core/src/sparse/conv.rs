use super::kmap::{KernelMap, NONE};
use super::CoordIndex;
use crate::error::{Error, Result};
use crate::exec;
use crate::tensor::{gemm, sum_partials, Backward, BackwardCtx, Graph, Real, Tensor, Var};
use std::sync::Arc;

const CONV_CHUNK: usize = 128;
const WGRAD_CHUNK: usize = 2048;

/// Immutable coordinate set of a sparse tensor with its hash index.
#[derive(Debug, Clone)]
pub struct SparseCoords {
    index: CoordIndex,
}

impl SparseCoords {
    /// Indexes `(x, y, z, batch)` coordinates; duplicates are rejected.
    pub fn new(coords: Vec<[i32; 4]>) -> Result<Self> {
        Ok(Self {
            index: CoordIndex::build(coords)?,
        })
    }

    pub fn coords(&self) -> &[[i32; 4]] {
        self.index.coords()
    }

    pub fn index(&self) -> &CoordIndex {
        &self.index
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn kernel_map(&self, kernel_size: usize) -> Result<KernelMap> {
        KernelMap::build(&self.index, kernel_size)
    }
}

/// Per-site feature rows attached to a shared coordinate set.
#[derive(Debug, Clone)]
pub struct SparseTensor<F> {
    pub coords: Arc<SparseCoords>,
    pub features: Tensor<F>,
}

impl<F: Real> SparseTensor<F> {
    pub fn new(coords: Arc<SparseCoords>, features: Tensor<F>) -> Result<Self> {
        if features.shape().len() != 2 || features.rows() != coords.len() {
            return Err(Error::Shape(format!(
                "{:?} features for {} sites",
                features.shape(),
                coords.len()
            )));
        }
        Ok(Self { coords, features })
    }
}

fn check_weights<F: Real>(w: &Tensor<F>, kmap: &KernelMap, cin: usize) -> Result<usize> {
    let s = w.shape();
    if s.len() != 3 || s[0] != kmap.volume() || s[1] != cin {
        return Err(Error::Shape(format!(
            "conv weights {s:?} for kernel volume {} and {cin} input channels",
            kmap.volume()
        )));
    }
    Ok(s[2])
}

/// Submanifold sparse convolution on values:
/// `out[o] = Σ_k Σ_{(i,o) ∈ pairs(k)} x[i] · w[k]`.
pub fn sparse_conv<F: Real>(st: &SparseTensor<F>, weights: &Tensor<F>, kmap: &KernelMap) -> Result<SparseTensor<F>> {
    if kmap.len() != st.coords.len() {
        return Err(Error::Shape("kernel map built for a different coordinate set".into()));
    }
    let cin = st.features.cols();
    let cout = check_weights(weights, kmap, cin)?;
    let out = conv_apply(st.features.data(), cin, weights.data(), cout, kmap, false);
    SparseTensor::new(st.coords.clone(), Tensor::new(vec![kmap.len(), cout], out)?)
}

/// Gather–GEMM–scatter over fixed chunks of output rows.
///
/// With `transpose` the roles of inputs and outputs swap: row `r`
/// accumulates `src[nbr(r, K-1-k)] · w[k]ᵀ`, which is the adjoint of the
/// forward map.
fn conv_apply<F: Real>(
    src: &[F],
    c_src: usize,
    w: &[F],
    c_dst: usize,
    kmap: &KernelMap,
    transpose: bool,
) -> Vec<F> {
    let n = kmap.len();
    let kk = kmap.volume();
    let mut out = vec![F::zero(); n * c_dst];
    if c_dst == 0 || n == 0 {
        return out;
    }
    let wsize = c_src * c_dst;
    exec::for_each_chunk_mut(&mut out, CONV_CHUNK * c_dst, |ci, chunk| {
        let base = ci * CONV_CHUNK;
        let rows = chunk.len() / c_dst;
        let mut buf = vec![F::zero(); rows * c_src];
        let mut tmp = vec![F::zero(); rows * c_dst];
        let mut local = Vec::with_capacity(rows);
        for k in 0..kk {
            let kn = if transpose { kk - 1 - k } else { k };
            local.clear();
            for r in 0..rows {
                let i = kmap.nbr_raw(base + r, kn);
                if i != NONE {
                    let i = i as usize;
                    buf[local.len() * c_src..(local.len() + 1) * c_src]
                        .copy_from_slice(&src[i * c_src..(i + 1) * c_src]);
                    local.push(r);
                }
            }
            let m = local.len();
            if m == 0 {
                continue;
            }
            // Forward weights are stored c_in × c_out; the adjoint uses the
            // same block transposed.
            let wk = &w[k * wsize..(k + 1) * wsize];
            gemm(m, c_src, c_dst, &buf[..m * c_src], false, wk, transpose, F::zero(), &mut tmp[..m * c_dst]);
            for (p, &r) in local.iter().enumerate() {
                chunk[r * c_dst..(r + 1) * c_dst]
                    .iter_mut()
                    .zip(&tmp[p * c_dst..(p + 1) * c_dst])
                    .for_each(|(a, b)| *a += *b);
            }
        }
    });
    out
}

/// `dW[k] = Σ_{(i,o) ∈ pairs(k)} x[i]ᵀ g[o]`, reduced in fixed chunk order.
fn conv_weight_grad<F: Real>(x: &[F], cin: usize, g: &[F], cout: usize, kmap: &KernelMap) -> Vec<F> {
    let kk = kmap.volume();
    let wsize = cin * cout;
    let partials = exec::chunk_partials(kmap.len(), WGRAD_CHUNK, |range| {
        let mut acc = vec![F::zero(); kk * wsize];
        let rows = range.len();
        let mut gx = vec![F::zero(); rows * cin];
        let mut gg = vec![F::zero(); rows * cout];
        for k in 0..kk {
            let mut m = 0;
            for o in range.clone() {
                let i = kmap.nbr_raw(o, k);
                if i != NONE {
                    let i = i as usize;
                    gx[m * cin..(m + 1) * cin].copy_from_slice(&x[i * cin..(i + 1) * cin]);
                    gg[m * cout..(m + 1) * cout].copy_from_slice(&g[o * cout..(o + 1) * cout]);
                    m += 1;
                }
            }
            if m > 0 {
                gemm(cin, m, cout, &gx[..m * cin], true, &gg[..m * cout], false, F::one(), &mut acc[k * wsize..(k + 1) * wsize]);
            }
        }
        acc
    });
    sum_partials(partials, kk * wsize)
}

struct SparseConvOp {
    x: Var,
    w: Var,
    kmap: Arc<KernelMap>,
}

impl<F: Real> Backward<F> for SparseConvOp {
    fn inputs(&self) -> Vec<Var> {
        vec![self.x, self.w]
    }

    fn backward(&self, ctx: &BackwardCtx<'_, F>, grad: &Tensor<F>, wanted: &[bool]) -> Vec<Option<Tensor<F>>> {
        let (x, w) = (ctx.value(self.x), ctx.value(self.w));
        let (cin, cout) = (x.cols(), grad.cols());
        let n = self.kmap.len();
        let dx = wanted[0].then(|| {
            let d = conv_apply(grad.data(), cout, w.data(), cin, &self.kmap, true);
            Tensor::new(vec![n, cin], d).expect("conv dx shape")
        });
        let dw = wanted[1].then(|| {
            let d = conv_weight_grad(x.data(), cin, grad.data(), cout, &self.kmap);
            Tensor::new(w.shape().to_vec(), d).expect("conv dw shape")
        });
        vec![dx, dw]
    }
}

/// Differentiable sparse convolution of `x` (`N×C_in`) with weights `w`
/// (`K×C_in×C_out`).
pub fn conv<F: Real>(g: &mut Graph<F>, x: Var, w: Var, kmap: &Arc<KernelMap>) -> Result<Var> {
    let xv = g.value(x);
    if xv.shape().len() != 2 || xv.rows() != kmap.len() {
        return Err(Error::Shape(format!("{:?} features for {} sites", xv.shape(), kmap.len())));
    }
    let cin = xv.cols();
    let cout = check_weights(g.value(w), kmap, cin)?;
    let out = conv_apply(xv.data(), cin, g.value(w).data(), cout, kmap, false);
    let value = Tensor::new(vec![kmap.len(), cout], out)?;
    Ok(g.custom(
        value,
        Box::new(SparseConvOp {
            x,
            w,
            kmap: kmap.clone(),
        }),
    ))
}
