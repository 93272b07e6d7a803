use super::{matmul_at_b, matmul_rows, ParamId, ParamStore, Real, Tensor, REDUCE_CHUNK, ROW_CHUNK};
use crate::error::{Error, Result};
use crate::exec;
use std::collections::HashMap;
use std::sync::Arc;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Backward rule for an operation defined outside this module.
pub trait Backward<F: Real>: Send + Sync {
    fn inputs(&self) -> Vec<Var>;

    /// Gradients with respect to each input; entries whose `wanted` flag is
    /// false may be `None`.
    fn backward(
        &self,
        ctx: &BackwardCtx<'_, F>,
        grad: &Tensor<F>,
        wanted: &[bool],
    ) -> Vec<Option<Tensor<F>>>;
}

/// Read access to forward values during the backward pass.
pub struct BackwardCtx<'a, F: Real> {
    nodes: &'a [Node<F>],
}

impl<F: Real> BackwardCtx<'_, F> {
    pub fn value(&self, v: Var) -> &Tensor<F> {
        &self.nodes[v.0].value
    }
}

/// Per-channel batch statistics from a training-mode batch norm.
#[derive(Debug, Clone)]
pub struct BatchStats<F> {
    pub mean: Vec<F>,
    /// Unbiased variance, as used for running-statistic updates.
    pub var: Vec<F>,
}

enum Op<F: Real> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddBias(Var, Var),
    Relu(Var),
    ConcatCols(Var, Var),
    Gather(Var, Arc<[u32]>),
    ScatterAdd(Var, Arc<[u32]>),
    Mse(Var, Var),
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<F>,
        inv_std: Vec<F>,
        training: bool,
    },
    Custom(Box<dyn Backward<F>>),
}

pub(crate) struct Node<F: Real> {
    value: Tensor<F>,
    grad: Option<Tensor<F>>,
    requires_grad: bool,
    op: Op<F>,
}

/// Tape recording a forward computation for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so reverse insertion order is a
/// valid reverse topological order.
pub struct Graph<F: Real> {
    nodes: Vec<Node<F>>,
    params: HashMap<ParamId, Var>,
    grad_enabled: bool,
}

impl<F: Real> Default for Graph<F> {
    fn default() -> Self {
        Self::new()
    }
}

fn shape_err<T>(msg: String) -> Result<T> {
    Err(Error::Shape(msg))
}

fn check_2d<F: Real>(t: &Tensor<F>, what: &str) -> Result<(usize, usize)> {
    if t.shape().len() != 2 {
        return shape_err(format!("{what}: expected a matrix, got shape {:?}", t.shape()));
    }
    Ok((t.shape()[0], t.shape()[1]))
}

/// Per-column sums of `f(row, col)` over all rows, as chunk-ordered partials.
fn column_reduce<F: Real>(rows: usize, cols: usize, f: impl Fn(usize, usize) -> F + Sync + Send) -> Vec<F> {
    let partials = exec::chunk_partials(rows, REDUCE_CHUNK, |r| {
        let mut acc = vec![F::zero(); cols];
        for i in r {
            for (c, a) in acc.iter_mut().enumerate() {
                *a += f(i, c);
            }
        }
        acc
    });
    super::sum_partials(partials, cols)
}

impl<F: Real> Graph<F> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            params: HashMap::new(),
            grad_enabled: true,
        }
    }

    /// A graph that records values only; nothing requires gradients and no
    /// backward state is kept.
    pub fn inference() -> Self {
        Self {
            grad_enabled: false,
            ..Self::new()
        }
    }

    pub fn grad_enabled(&self) -> bool {
        self.grad_enabled
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<F>, inputs: &[Var], op: Op<F>) -> Var {
        let requires_grad = self.grad_enabled && inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        let op = if requires_grad { op } else { Op::Leaf };
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    /// Input tensor that may or may not be differentiated.
    pub fn leaf(&mut self, value: Tensor<F>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad: requires_grad && self.grad_enabled,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor<F>) -> Var {
        self.leaf(value, false)
    }

    /// Leaf bound to a stored parameter. Repeated calls return the same node.
    pub fn param(&mut self, store: &ParamStore<F>, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let e = store.entry(id);
        let v = self.leaf(e.value.clone(), e.trainable);
        self.params.insert(id, v);
        v
    }

    pub fn value(&self, v: Var) -> &Tensor<F> {
        &self.nodes[v.0].value
    }

    pub fn take_value(&mut self, v: Var) -> Tensor<F> {
        std::mem::replace(&mut self.nodes[v.0].value, Tensor::zeros(&[0]))
    }

    pub fn grad(&self, v: Var) -> Option<&Tensor<F>> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradients of every parameter bound into this graph, indexed by
    /// parameter id.
    pub fn param_grads(&self, store: &ParamStore<F>) -> Vec<Option<Tensor<F>>> {
        let mut out = vec![None; store.len()];
        for (&id, &v) in &self.params {
            out[id.index()] = self.nodes[v.0].grad.clone();
        }
        out
    }

    /// Registers a value computed by an external operation.
    pub fn custom(&mut self, value: Tensor<F>, op: Box<dyn Backward<F>>) -> Var {
        let inputs = op.inputs();
        self.push(value, &inputs, Op::Custom(op))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = check_2d(self.value(a), "matmul lhs")?;
        let (k2, n) = check_2d(self.value(b), "matmul rhs")?;
        if k != k2 {
            return shape_err(format!("matmul {m}×{k} by {k2}×{n}"));
        }
        let out = matmul_rows(self.value(a).data(), self.value(b).data(), false, m, k, n);
        Ok(self.push(Tensor::new(vec![m, n], out)?, &[a, b], Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).shape() != self.value(b).shape() {
            return shape_err(format!(
                "add {:?} + {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            ));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| *x + *y)
            .collect();
        let t = Tensor::new(self.value(a).shape().to_vec(), data)?;
        Ok(self.push(t, &[a, b], Op::Add(a, b)))
    }

    /// Adds a length-`C` bias to every row of an `N×C` matrix.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (n, c) = check_2d(self.value(a), "add_bias")?;
        if self.value(bias).numel() != c {
            return shape_err(format!("bias of {} for {c} columns", self.value(bias).numel()));
        }
        let mut data = self.value(a).data().to_vec();
        let b = self.value(bias).data();
        if c > 0 {
            for row in data.chunks_exact_mut(c) {
                row.iter_mut().zip(b).for_each(|(x, y)| *x += *y);
            }
        }
        Ok(self.push(Tensor::new(vec![n, c], data)?, &[a, bias], Op::AddBias(a, bias)))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let t = self.value(a);
        // `x < 0` is false for NaN, so NaN passes through.
        let data = t
            .data()
            .iter()
            .map(|&x| if x < F::zero() { F::zero() } else { x })
            .collect();
        let out = Tensor {
            shape: t.shape().to_vec(),
            data,
        };
        self.push(out, &[a], Op::Relu(a))
    }

    /// `[a | b]` along columns.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, c1) = check_2d(self.value(a), "concat lhs")?;
        let (n2, c2) = check_2d(self.value(b), "concat rhs")?;
        if n != n2 {
            return shape_err(format!("concat rows {n} vs {n2}"));
        }
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let mut data = Vec::with_capacity(n * (c1 + c2));
        for i in 0..n {
            data.extend_from_slice(&da[i * c1..(i + 1) * c1]);
            data.extend_from_slice(&db[i * c2..(i + 1) * c2]);
        }
        Ok(self.push(Tensor::new(vec![n, c1 + c2], data)?, &[a, b], Op::ConcatCols(a, b)))
    }

    /// Row `r` of the output is row `idx[r]` of `t`.
    pub fn gather_rows(&mut self, t: Var, idx: Arc<[u32]>) -> Result<Var> {
        let (m, c) = check_2d(self.value(t), "gather_rows")?;
        if let Some(&bad) = idx.iter().find(|&&i| i as usize >= m) {
            return shape_err(format!("gather index {bad} out of {m} rows"));
        }
        let out = gather(self.value(t).data(), c, &idx);
        let len = idx.len();
        Ok(self.push(Tensor::new(vec![len, c], out)?, &[t], Op::Gather(t, idx)))
    }

    /// Output row `i` is the sum of the rows `r` of `t` with `idx[r] == i`.
    pub fn scatter_add_rows(&mut self, t: Var, idx: Arc<[u32]>, n_out: usize) -> Result<Var> {
        let (l, c) = check_2d(self.value(t), "scatter_add_rows")?;
        if idx.len() != l {
            return shape_err(format!("{} indices for {l} rows", idx.len()));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i as usize >= n_out) {
            return shape_err(format!("scatter index {bad} out of {n_out} rows"));
        }
        let out = scatter_add(self.value(t).data(), c, &idx, n_out);
        Ok(self.push(Tensor::new(vec![n_out, c], out)?, &[t], Op::ScatterAdd(t, idx)))
    }

    /// Mean of squared differences over all elements.
    pub fn mse_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        let (p, t) = (self.value(pred), self.value(target));
        if p.shape() != t.shape() {
            return shape_err(format!("mse {:?} vs {:?}", p.shape(), t.shape()));
        }
        if p.numel() == 0 {
            return shape_err("mse of empty tensors".into());
        }
        let (pd, td) = (p.data(), t.data());
        let partials = exec::chunk_partials(pd.len(), REDUCE_CHUNK * 4, |r| {
            r.map(|i| {
                let d = (pd[i] - td[i]).to_f64_lossy();
                d * d
            })
            .sum::<f64>()
        });
        let mse = partials.iter().sum::<f64>() / pd.len() as f64;
        Ok(self.push(Tensor::scalar(F::from_f64_lossy(mse)), &[pred, target], Op::Mse(pred, target)))
    }

    /// Batch normalization over the rows of an `N×C` matrix.
    ///
    /// In training mode the batch statistics normalize the input and are
    /// returned for running-statistic updates; in eval mode `running`
    /// (mean, variance) is used.
    pub fn batchnorm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running: (&[F], &[F]),
        training: bool,
        eps: F,
    ) -> Result<(Var, Option<BatchStats<F>>)> {
        let (n, c) = check_2d(self.value(x), "batchnorm")?;
        if self.value(gamma).numel() != c || self.value(beta).numel() != c {
            return shape_err(format!("batchnorm affine size for {c} channels"));
        }
        if running.0.len() != c || running.1.len() != c {
            return shape_err(format!("running statistics size for {c} channels"));
        }
        if training && n < 2 {
            return Err(Error::DegenerateBatch(n));
        }
        let xd = self.value(x).data();
        let (mean, var, stats) = if training {
            let nf = F::from_usize(n).unwrap();
            let mean: Vec<F> = column_reduce(n, c, |i, j| xd[i * c + j])
                .into_iter()
                .map(|s| s / nf)
                .collect();
            let var: Vec<F> = column_reduce(n, c, |i, j| {
                let d = xd[i * c + j] - mean[j];
                d * d
            })
            .into_iter()
            .map(|s| s / nf)
            .collect();
            let unbiased = var
                .iter()
                .map(|&v| v * nf / (nf - F::one()))
                .collect();
            let stats = BatchStats {
                mean: mean.clone(),
                var: unbiased,
            };
            (mean, var, Some(stats))
        } else {
            (running.0.to_vec(), running.1.to_vec(), None)
        };
        let inv_std: Vec<F> = var.iter().map(|&v| F::one() / (v + eps).sqrt()).collect();
        let mut xhat = vec![F::zero(); n * c];
        if c > 0 {
            exec::for_each_chunk_mut(&mut xhat, ROW_CHUNK * c, |ci, chunk| {
                let base = ci * ROW_CHUNK * c;
                for (k, out) in chunk.iter_mut().enumerate() {
                    let j = (base + k) % c;
                    *out = (xd[base + k] - mean[j]) * inv_std[j];
                }
            });
        }
        let (g, b) = (self.value(gamma).data(), self.value(beta).data());
        let y: Vec<F> = xhat
            .iter()
            .enumerate()
            .map(|(k, &h)| g[k % c] * h + b[k % c])
            .collect();
        let out = Tensor::new(vec![n, c], y)?;
        let op = Op::BatchNorm {
            x,
            gamma,
            beta,
            xhat,
            inv_std,
            training,
        };
        Ok((self.push(out, &[x, gamma, beta], op), stats))
    }

    /// Back-propagates from a scalar node, accumulating gradients into every
    /// node that requires them.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if self.value(root).numel() != 1 {
            return shape_err(format!("backward from non-scalar {:?}", self.value(root).shape()));
        }
        if !self.nodes[root.0].requires_grad {
            return Ok(());
        }
        let seed = Tensor::full(self.value(root).shape(), F::one());
        self.nodes[root.0].grad = Some(seed);
        for idx in (0..=root.0).rev() {
            if matches!(self.nodes[idx].op, Op::Leaf) || self.nodes[idx].grad.is_none() {
                continue;
            }
            let grad = self.nodes[idx].grad.take().unwrap();
            let contribs = self.node_backward(idx, &grad);
            for (v, g) in contribs {
                debug_assert_eq!(g.shape(), self.nodes[v.0].value.shape());
                let slot = &mut self.nodes[v.0].grad;
                match slot {
                    Some(acc) => acc.data.iter_mut().zip(&g.data).for_each(|(a, b)| *a += *b),
                    None => *slot = Some(g),
                }
            }
        }
        Ok(())
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn node_backward(&self, idx: usize, g: &Tensor<F>) -> Vec<(Var, Tensor<F>)> {
        let node = &self.nodes[idx];
        let mut out = Vec::new();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let (m, k) = (va.shape()[0], va.shape()[1]);
                let n = vb.shape()[1];
                if self.wants(*a) {
                    let da = matmul_rows(g.data(), vb.data(), true, m, n, k);
                    out.push((*a, Tensor::new(vec![m, k], da).unwrap()));
                }
                if self.wants(*b) {
                    let db = matmul_at_b(va.data(), g.data(), m, k, n);
                    out.push((*b, Tensor::new(vec![k, n], db).unwrap()));
                }
            }
            Op::Add(a, b) => {
                for v in [a, b] {
                    if self.wants(*v) {
                        out.push((*v, g.clone()));
                    }
                }
            }
            Op::AddBias(a, bias) => {
                if self.wants(*a) {
                    out.push((*a, g.clone()));
                }
                if self.wants(*bias) {
                    let (n, c) = (g.rows(), g.cols());
                    let gd = g.data();
                    let db = column_reduce(n, c, |i, j| gd[i * c + j]);
                    let shape = self.value(*bias).shape().to_vec();
                    out.push((*bias, Tensor::new(shape, db).unwrap()));
                }
            }
            Op::Relu(a) => {
                if self.wants(*a) {
                    let x = self.value(*a).data();
                    let data = g
                        .data()
                        .iter()
                        .zip(x)
                        .map(|(&gi, &xi)| if xi > F::zero() || xi.is_nan() { gi } else { F::zero() })
                        .collect();
                    out.push((*a, Tensor::new(g.shape().to_vec(), data).unwrap()));
                }
            }
            Op::ConcatCols(a, b) => {
                let (n, c1) = (self.value(*a).rows(), self.value(*a).cols());
                let c2 = self.value(*b).cols();
                let gd = g.data();
                if self.wants(*a) {
                    let mut d = Vec::with_capacity(n * c1);
                    for i in 0..n {
                        d.extend_from_slice(&gd[i * (c1 + c2)..i * (c1 + c2) + c1]);
                    }
                    out.push((*a, Tensor::new(vec![n, c1], d).unwrap()));
                }
                if self.wants(*b) {
                    let mut d = Vec::with_capacity(n * c2);
                    for i in 0..n {
                        d.extend_from_slice(&gd[i * (c1 + c2) + c1..(i + 1) * (c1 + c2)]);
                    }
                    out.push((*b, Tensor::new(vec![n, c2], d).unwrap()));
                }
            }
            Op::Gather(t, idx) => {
                if self.wants(*t) {
                    let (m, c) = (self.value(*t).rows(), self.value(*t).cols());
                    let d = scatter_add(g.data(), c, idx, m);
                    out.push((*t, Tensor::new(vec![m, c], d).unwrap()));
                }
            }
            Op::ScatterAdd(t, idx) => {
                if self.wants(*t) {
                    let c = g.cols();
                    let d = gather(g.data(), c, idx);
                    out.push((*t, Tensor::new(vec![idx.len(), c], d).unwrap()));
                }
            }
            Op::Mse(p, t) => {
                let (pd, td) = (self.value(*p).data(), self.value(*t).data());
                let scale = g.item() * F::from_f64_lossy(2.0 / pd.len() as f64);
                let shape = self.value(*p).shape().to_vec();
                if self.wants(*p) {
                    let d = pd.iter().zip(td).map(|(a, b)| (*a - *b) * scale).collect();
                    out.push((*p, Tensor::new(shape.clone(), d).unwrap()));
                }
                if self.wants(*t) {
                    let d = pd.iter().zip(td).map(|(a, b)| (*b - *a) * scale).collect();
                    out.push((*t, Tensor::new(shape, d).unwrap()));
                }
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                training,
            } => {
                let (n, c) = (g.rows(), g.cols());
                let gd = g.data();
                let dgamma = column_reduce(n, c, |i, j| gd[i * c + j] * xhat[i * c + j]);
                let dbeta = column_reduce(n, c, |i, j| gd[i * c + j]);
                if self.wants(*x) {
                    let gam = self.value(*gamma).data();
                    let mut dx = vec![F::zero(); n * c];
                    let nf = F::from_usize(n).unwrap();
                    exec::for_each_chunk_mut(&mut dx, ROW_CHUNK * c.max(1), |ci, chunk| {
                        let base = ci * ROW_CHUNK * c;
                        for (k, o) in chunk.iter_mut().enumerate() {
                            let e = base + k;
                            let j = e % c;
                            *o = if *training {
                                gam[j] * inv_std[j] / nf
                                    * (nf * gd[e] - dbeta[j] - xhat[e] * dgamma[j])
                            } else {
                                gam[j] * inv_std[j] * gd[e]
                            };
                        }
                    });
                    out.push((*x, Tensor::new(vec![n, c], dx).unwrap()));
                }
                if self.wants(*gamma) {
                    let shape = self.value(*gamma).shape().to_vec();
                    out.push((*gamma, Tensor::new(shape, dgamma).unwrap()));
                }
                if self.wants(*beta) {
                    let shape = self.value(*beta).shape().to_vec();
                    out.push((*beta, Tensor::new(shape, dbeta).unwrap()));
                }
            }
            Op::Custom(op) => {
                let inputs = op.inputs();
                let wanted: Vec<bool> = inputs.iter().map(|v| self.wants(*v)).collect();
                let ctx = BackwardCtx { nodes: &self.nodes };
                for ((v, g), w) in inputs.iter().zip(op.backward(&ctx, g, &wanted)).zip(&wanted) {
                    if let (Some(g), true) = (g, w) {
                        out.push((*v, g));
                    }
                }
            }
        }
        out
    }
}

pub(crate) fn gather<F: Real>(src: &[F], c: usize, idx: &[u32]) -> Vec<F> {
    let mut out = vec![F::zero(); idx.len() * c];
    if c == 0 {
        return out;
    }
    exec::for_each_chunk_mut(&mut out, ROW_CHUNK * c, |ci, chunk| {
        let base = ci * ROW_CHUNK;
        for (r, row) in chunk.chunks_exact_mut(c).enumerate() {
            let i = idx[base + r] as usize;
            row.copy_from_slice(&src[i * c..(i + 1) * c]);
        }
    });
    out
}

pub(crate) fn scatter_add<F: Real>(src: &[F], c: usize, idx: &[u32], n_out: usize) -> Vec<F> {
    let mut out = vec![F::zero(); n_out * c];
    for (r, &i) in idx.iter().enumerate() {
        let i = i as usize;
        out[i * c..(i + 1) * c]
            .iter_mut()
            .zip(&src[r * c..(r + 1) * c])
            .for_each(|(a, b)| *a += *b);
    }
    out
}
