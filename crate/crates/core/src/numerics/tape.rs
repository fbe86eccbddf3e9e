//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Every op appends one node whose inputs are earlier nodes, so the tape is
//! always in topological order and `backward` is a single reverse sweep.

use std::fmt;

use crate::error::{Error, Result};

use super::kernels::{gemm_nn, gemm_nt, gemm_tn};
use super::rng::Rng;
use super::scalar::{c, Scalar};
use super::tensor::{numel, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Backward rule for [`Tape::custom_unary`]: `(input, output, grad_output) -> grad_input`.
pub type CustomBackward<T> = Box<dyn Fn(&[T], &[T], &[T]) -> Vec<T> + Send + Sync>;

/// Per-channel statistics measured by a training-mode batch norm.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

struct Conv1dDims {
    batch: usize,
    c_in: usize,
    c_out: usize,
    len: usize,
    kernel: usize,
}

enum Op<T> {
    Leaf,
    Add(Var, Var),
    Mul(Var, Var),
    AddBroadcast(Var, Var),
    Scale(Var, T),
    Reshape(Var),
    MatMul {
        a: Var,
        b: Var,
        m: usize,
        p: usize,
        n: usize,
    },
    BatchMatMul {
        a: Var,
        b: Var,
        batch: usize,
        m: usize,
        p: usize,
        n: usize,
        trans_b: bool,
    },
    Softmax {
        x: Var,
        outer: usize,
        len: usize,
        inner: usize,
    },
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<T>,
        rstd: Vec<T>,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<T>,
        rstd: Vec<T>,
        batch: usize,
        channels: usize,
        len: usize,
        batch_stats: bool,
    },
    Prelu {
        x: Var,
        slope: Var,
    },
    Dropout {
        x: Var,
        mask: Vec<T>,
    },
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    SliceCols {
        x: Var,
        rows: usize,
        cols: usize,
        start: usize,
        len: usize,
    },
    ConcatCols {
        parts: Vec<(Var, usize)>,
        rows: usize,
    },
    Conv1d {
        x: Var,
        w: Var,
        b: Var,
        dims: Conv1dDims,
    },
    Mse(Var, Var),
    Sum(Var),
    Custom {
        x: Var,
        backward: CustomBackward<T>,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
    grad: Option<Vec<T>>,
}

/// Records operations for one forward pass; `backward` populates leaf gradients.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T> fmt::Debug for Tape<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tape").field("nodes", &self.nodes.len()).finish()
    }
}

fn check_finite<T: Scalar>(data: &[T], op: &'static str) -> Result<()> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(op))
    }
}

fn add_into<T: Scalar>(dst: &mut [T], src: &[T]) {
    dst.iter_mut().zip(src).for_each(|(d, &s)| *d += s);
}

fn slot<'a, T: Scalar>(grads: &'a mut [Option<Vec<T>>], v: Var, len: usize) -> &'a mut [T] {
    grads[v.0].get_or_insert_with(|| vec![T::zero(); len])
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Adds an input. It receives gradients iff `tensor.requires_grad()`.
    pub fn leaf(&mut self, tensor: Tensor<T>) -> Var {
        let requires_grad = tensor.requires_grad();
        let mut value = tensor;
        value.zero_grad();
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// Adds an input that never receives gradients.
    pub fn constant(&mut self, tensor: Tensor<T>) -> Var {
        let mut t = tensor;
        t.set_requires_grad(false);
        self.leaf(t)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn data(&self, v: Var) -> &[T] {
        self.nodes[v.0].value.data()
    }

    /// Accumulated gradient of a leaf, if `backward` has reached it.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn zero_grads(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<T>, op: Op<T>, inputs: &[Var], name: &'static str) -> Result<Var> {
        check_finite(&data, name)?;
        let requires_grad = inputs.iter().any(|i| self.nodes[i.0].requires_grad);
        self.nodes.push(Node {
            value: Tensor::from_parts_unchecked(shape, data),
            op,
            requires_grad,
            grad: None,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::ShapeMismatch {
                op,
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    fn dims2(&self, op: &'static str, v: Var) -> Result<(usize, usize)> {
        match *self.shape(v) {
            [r, c] => Ok((r, c)),
            ref s => Err(Error::Dimension(format!("{op} expects a 2-D tensor, got {s:?}"))),
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let data = self.data(a).iter().zip(self.data(b)).map(|(&x, &y)| x + y).collect();
        self.push(self.shape(a).to_vec(), data, Op::Add(a, b), &[a, b], "add")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let data = self.data(a).iter().zip(self.data(b)).map(|(&x, &y)| x * y).collect();
        self.push(self.shape(a).to_vec(), data, Op::Mul(a, b), &[a, b], "mul")
    }

    /// `x + b` where `b`'s shape equals the trailing dimensions of `x`
    /// (bias rows, position embeddings over a batch).
    pub fn add_broadcast(&mut self, x: Var, b: Var) -> Result<Var> {
        let (xs, bs) = (self.shape(x), self.shape(b));
        if bs.len() > xs.len() || xs[xs.len() - bs.len()..] != *bs {
            return Err(Error::ShapeMismatch {
                op: "add_broadcast",
                lhs: xs.to_vec(),
                rhs: bs.to_vec(),
            });
        }
        let bd = self.data(b);
        let blen = bd.len();
        let data = self
            .data(x)
            .iter()
            .enumerate()
            .map(|(i, &v)| v + bd[i % blen])
            .collect();
        self.push(xs.to_vec(), data, Op::AddBroadcast(x, b), &[x, b], "add_broadcast")
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Result<Var> {
        let s: T = c(s);
        let data = self.data(x).iter().map(|&v| v * s).collect();
        self.push(self.shape(x).to_vec(), data, Op::Scale(x, s), &[x], "scale")
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        if numel(shape) != self.value(x).len() || shape.iter().any(|&d| d == 0) {
            return Err(Error::Dimension(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape(x)
            )));
        }
        let data = self.data(x).to_vec();
        self.push(shape.to_vec(), data, Op::Reshape(x), &[x], "reshape")
    }

    /// `[m×p] · [p×n] → [m×n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, p) = self.dims2("matmul", a)?;
        let (p2, n) = self.dims2("matmul", b)?;
        if p != p2 {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: vec![m, p],
                rhs: vec![p2, n],
            });
        }
        let mut out = vec![T::zero(); m * n];
        gemm_nn(self.data(a), self.data(b), &mut out, m, p, n);
        self.push(vec![m, n], out, Op::MatMul { a, b, m, p, n }, &[a, b], "matmul")
    }

    /// Batched product over the leading dimension: `[B×m×p]·[B×p×n]`, or
    /// `[B×m×p]·[B×n×p]ᵀ` when `trans_b`.
    pub fn batch_matmul(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let mismatch = || Error::ShapeMismatch {
            op: "batch_matmul",
            lhs: self.shape(a).to_vec(),
            rhs: self.shape(b).to_vec(),
        };
        let (&[ba, m, p], &[bb, r, s]) = (self.shape(a), self.shape(b)) else {
            return Err(Error::Dimension("batch_matmul expects 3-D tensors".into()));
        };
        let n = if trans_b { r } else { s };
        let inner = if trans_b { s } else { r };
        if ba != bb || inner != p {
            return Err(mismatch());
        }
        let (ad, bd) = (self.data(a), self.data(b));
        let mut out = vec![T::zero(); ba * m * n];
        for i in 0..ba {
            let (asl, bsl) = (&ad[i * m * p..(i + 1) * m * p], &bd[i * p * n..(i + 1) * p * n]);
            let csl = &mut out[i * m * n..(i + 1) * m * n];
            if trans_b {
                gemm_nt(asl, bsl, csl, m, p, n);
            } else {
                gemm_nn(asl, bsl, csl, m, p, n);
            }
        }
        let op = Op::BatchMatMul {
            a,
            b,
            batch: ba,
            m,
            p,
            n,
            trans_b,
        };
        self.push(vec![ba, m, n], out, op, &[a, b], "batch_matmul")
    }

    /// Numerically stable softmax along `axis`.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(Error::Dimension(format!("softmax axis {axis} invalid for {shape:?}")));
        }
        let outer: usize = shape[..axis].iter().product();
        let len = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let xd = self.data(x);
        let mut out = vec![T::zero(); xd.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| o * len * inner + j * inner + i;
                let max = (0..len).map(|j| xd[at(j)]).fold(T::neg_infinity(), T::max);
                let mut sum = T::zero();
                for j in 0..len {
                    let e = (xd[at(j)] - max).exp();
                    out[at(j)] = e;
                    sum += e;
                }
                for j in 0..len {
                    out[at(j)] = out[at(j)] / sum;
                }
            }
        }
        let op = Op::Softmax { x, outer, len, inner };
        self.push(shape, out, op, &[x], "softmax")
    }

    /// Normalizes each row over the last dimension, then applies `gamma`, `beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let d = *shape.last().unwrap();
        if self.shape(gamma) != [d] || self.shape(beta) != [d] {
            return Err(Error::ShapeMismatch {
                op: "layer_norm",
                lhs: shape,
                rhs: self.shape(gamma).to_vec(),
            });
        }
        if eps <= 0.0 {
            return Err(Error::Parameter(format!("layer_norm eps must be positive, got {eps}")));
        }
        let eps: T = c(eps);
        let xd = self.data(x);
        let (g, bt) = (self.data(gamma), self.data(beta));
        let rows = xd.len() / d;
        let inv_d: T = c(1.0 / d as f64);
        let mut xhat = vec![T::zero(); xd.len()];
        let mut rstd = vec![T::zero(); rows];
        let mut out = vec![T::zero(); xd.len()];
        for r in 0..rows {
            let row = &xd[r * d..(r + 1) * d];
            let mean = row.iter().copied().sum::<T>() * inv_d;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_d;
            let rs = T::one() / (var + eps).sqrt();
            rstd[r] = rs;
            for j in 0..d {
                let h = (row[j] - mean) * rs;
                xhat[r * d + j] = h;
                out[r * d + j] = h * g[j] + bt[j];
            }
        }
        let op = Op::LayerNorm {
            x,
            gamma,
            beta,
            xhat,
            rstd,
        };
        self.push(shape, out, op, &[x, gamma, beta], "layer_norm")
    }

    /// Batch normalization of `[B×C×L]` per channel. With `running = None`
    /// statistics come from the batch and are returned; otherwise the given
    /// `(mean, var)` are used as constants.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
        running: Option<(&[T], &[T])>,
    ) -> Result<(Var, Option<ChannelStats<T>>)> {
        let &[batch, channels, len] = self.shape(x) else {
            return Err(Error::Dimension(format!(
                "batch_norm expects [B, C, L], got {:?}",
                self.shape(x)
            )));
        };
        if self.shape(gamma) != [channels] || self.shape(beta) != [channels] {
            return Err(Error::ShapeMismatch {
                op: "batch_norm",
                lhs: self.shape(x).to_vec(),
                rhs: self.shape(gamma).to_vec(),
            });
        }
        if let Some((m, v)) = running {
            if m.len() != channels || v.len() != channels {
                return Err(Error::Dimension("batch_norm running stats length".into()));
            }
        }
        let eps: T = c(eps);
        let xd = self.data(x);
        let (g, bt) = (self.data(gamma), self.data(beta));
        let count: T = c((batch * len) as f64);
        let idx = |b: usize, ch: usize, t: usize| (b * channels + ch) * len + t;
        let mut stats = ChannelStats {
            mean: vec![T::zero(); channels],
            var: vec![T::zero(); channels],
        };
        match running {
            Some((m, v)) => {
                stats.mean.copy_from_slice(m);
                stats.var.copy_from_slice(v);
            }
            None => {
                for ch in 0..channels {
                    let mut s = T::zero();
                    for b in 0..batch {
                        for t in 0..len {
                            s += xd[idx(b, ch, t)];
                        }
                    }
                    let mean = s / count;
                    let mut q = T::zero();
                    for b in 0..batch {
                        for t in 0..len {
                            let dv = xd[idx(b, ch, t)] - mean;
                            q += dv * dv;
                        }
                    }
                    stats.mean[ch] = mean;
                    stats.var[ch] = q / count;
                }
            }
        }
        let rstd: Vec<T> = stats.var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let mut xhat = vec![T::zero(); xd.len()];
        let mut out = vec![T::zero(); xd.len()];
        for b in 0..batch {
            for ch in 0..channels {
                for t in 0..len {
                    let i = idx(b, ch, t);
                    let h = (xd[i] - stats.mean[ch]) * rstd[ch];
                    xhat[i] = h;
                    out[i] = h * g[ch] + bt[ch];
                }
            }
        }
        let batch_stats = running.is_none();
        let op = Op::BatchNorm {
            x,
            gamma,
            beta,
            xhat,
            rstd,
            batch,
            channels,
            len,
            batch_stats,
        };
        let shape = vec![batch, channels, len];
        let v = self.push(shape, out, op, &[x, gamma, beta], "batch_norm")?;
        Ok((v, batch_stats.then_some(stats)))
    }

    /// `x` where positive, `slope · x` otherwise; `slope` is a 1-element tensor.
    pub fn prelu(&mut self, x: Var, slope: Var) -> Result<Var> {
        if self.value(slope).len() != 1 {
            return Err(Error::Dimension("prelu slope must hold a single value".into()));
        }
        let a = self.data(slope)[0];
        let data = self
            .data(x)
            .iter()
            .map(|&v| if v > T::zero() { v } else { a * v })
            .collect();
        self.push(self.shape(x).to_vec(), data, Op::Prelu { x, slope }, &[x, slope], "prelu")
    }

    /// Inverted dropout. Identity when `training` is false or `p == 0`.
    pub fn dropout(&mut self, x: Var, p: f64, rng: &mut Rng, training: bool) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Parameter(format!("dropout probability must be in [0, 1), got {p}")));
        }
        if !training || p == 0.0 {
            return Ok(x);
        }
        let keep: T = c(1.0 / (1.0 - p));
        let mask: Vec<T> = (0..self.value(x).len())
            .map(|_| if rng.bernoulli(p) { T::zero() } else { keep })
            .collect();
        let data = self.data(x).iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        self.push(self.shape(x).to_vec(), data, Op::Dropout { x, mask }, &[x], "dropout")
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let data = self.data(x).iter().map(|&v| v.max(T::zero())).collect();
        self.push(self.shape(x).to_vec(), data, Op::Relu(x), &[x], "relu")
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let data = self
            .data(x)
            .iter()
            .map(|&v| T::one() / (T::one() + (-v).exp()))
            .collect();
        self.push(self.shape(x).to_vec(), data, Op::Sigmoid(x), &[x], "sigmoid")
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        let data = self.data(x).iter().map(|&v| v.tanh()).collect();
        self.push(self.shape(x).to_vec(), data, Op::Tanh(x), &[x], "tanh")
    }

    /// Columns `start..start + len` of a 2-D tensor.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (rows, cols) = self.dims2("slice_cols", x)?;
        if len == 0 || start + len > cols {
            return Err(Error::Dimension(format!(
                "slice {start}..{} out of {cols} columns",
                start + len
            )));
        }
        let xd = self.data(x);
        let mut out = Vec::with_capacity(rows * len);
        for r in 0..rows {
            out.extend_from_slice(&xd[r * cols + start..r * cols + start + len]);
        }
        let op = Op::SliceCols {
            x,
            rows,
            cols,
            start,
            len,
        };
        self.push(vec![rows, len], out, op, &[x], "slice_cols")
    }

    /// Concatenates 2-D tensors with equal row counts along columns.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::Dimension("concat_cols needs at least one input".into()));
        };
        let (rows, _) = self.dims2("concat_cols", first)?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, w) = self.dims2("concat_cols", p)?;
            if r != rows {
                return Err(Error::ShapeMismatch {
                    op: "concat_cols",
                    lhs: self.shape(first).to_vec(),
                    rhs: self.shape(p).to_vec(),
                });
            }
            widths.push((p, w));
        }
        let total: usize = widths.iter().map(|&(_, w)| w).sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &(p, w) in &widths {
                out.extend_from_slice(&self.data(p)[r * w..(r + 1) * w]);
            }
        }
        let op = Op::ConcatCols { parts: widths, rows };
        self.push(vec![rows, total], out, op, parts, "concat_cols")
    }

    /// Stride-1 1-D convolution with zero "same" padding.
    /// `x: [B×Cin×L]`, `w: [Cout×Cin×K]` (K odd), `b: [Cout]`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (&[batch, c_in, len], &[c_out, c_in_w, kernel]) = (self.shape(x), self.shape(w)) else {
            return Err(Error::Dimension("conv1d expects x [B,C,L] and w [O,C,K]".into()));
        };
        if c_in != c_in_w || self.shape(b) != [c_out] || kernel % 2 == 0 {
            return Err(Error::ShapeMismatch {
                op: "conv1d",
                lhs: self.shape(x).to_vec(),
                rhs: self.shape(w).to_vec(),
            });
        }
        let pad = kernel / 2;
        let (xd, wd, bd) = (self.data(x), self.data(w), self.data(b));
        let mut out = vec![T::zero(); batch * c_out * len];
        for bi in 0..batch {
            for co in 0..c_out {
                let y = &mut out[(bi * c_out + co) * len..(bi * c_out + co + 1) * len];
                y.iter_mut().for_each(|v| *v = bd[co]);
                for ci in 0..c_in {
                    let xs = &xd[(bi * c_in + ci) * len..(bi * c_in + ci + 1) * len];
                    for k in 0..kernel {
                        let wv = wd[(co * c_in + ci) * kernel + k];
                        // y[t] += w * x[t + k - pad] for t where the index is in range
                        let (t0, t1) = (pad.saturating_sub(k), (len + pad).saturating_sub(k).min(len));
                        for t in t0..t1 {
                            y[t] += wv * xs[t + k - pad];
                        }
                    }
                }
            }
        }
        let dims = Conv1dDims {
            batch,
            c_in,
            c_out,
            len,
            kernel,
        };
        self.push(vec![batch, c_out, len], out, Op::Conv1d { x, w, b, dims }, &[x, w, b], "conv1d")
    }

    /// Mean of squared differences; a 1-element result.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mse", a, b)?;
        let n = self.value(a).len() as f64;
        let s: T = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(&x, &y)| (x - y) * (x - y))
            .sum();
        self.push(vec![1], vec![s / c(n)], Op::Mse(a, b), &[a, b], "mse")
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s: T = self.data(x).iter().copied().sum();
        self.push(vec![1], vec![s], Op::Sum(x), &[x], "sum")
    }

    /// Elementwise op with caller-supplied forward and backward rules.
    pub fn custom_unary(
        &mut self,
        x: Var,
        forward: impl Fn(&[T]) -> Vec<T>,
        backward: CustomBackward<T>,
    ) -> Result<Var> {
        let data = forward(self.data(x));
        if data.len() != self.value(x).len() {
            return Err(Error::Contract("custom_unary must preserve length".into()));
        }
        self.push(self.shape(x).to_vec(), data, Op::Custom { x, backward }, &[x], "custom")
    }

    /// Propagates d(loss)/d(node) back to every leaf that requires gradients.
    /// Leaf gradients accumulate across calls until [`Tape::zero_grads`].
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let nodes = &self.nodes;
            let wants = |v: Var| nodes[v.0].requires_grad;
            let val = |v: Var| nodes[v.0].value.data();
            match &node.op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    for v in [*a, *b] {
                        if wants(v) {
                            add_into(slot(&mut grads, v, g.len()), &g);
                        }
                    }
                }
                Op::Mul(a, b) => {
                    let (a, b) = (*a, *b);
                    if wants(a) {
                        let (s, bv) = (slot(&mut grads, a, g.len()), val(b));
                        s.iter_mut().zip(&g).zip(bv).for_each(|((s, &g), &y)| *s += g * y);
                    }
                    if wants(b) {
                        let (s, av) = (slot(&mut grads, b, g.len()), val(a));
                        s.iter_mut().zip(&g).zip(av).for_each(|((s, &g), &x)| *s += g * x);
                    }
                }
                Op::AddBroadcast(x, b) => {
                    if wants(*x) {
                        add_into(slot(&mut grads, *x, g.len()), &g);
                    }
                    if wants(*b) {
                        let blen = val(*b).len();
                        let s = slot(&mut grads, *b, blen);
                        for (j, &gv) in g.iter().enumerate() {
                            s[j % blen] += gv;
                        }
                    }
                }
                Op::Scale(x, sc) => {
                    if wants(*x) {
                        let sc = *sc;
                        let s = slot(&mut grads, *x, g.len());
                        s.iter_mut().zip(&g).for_each(|(s, &g)| *s += sc * g);
                    }
                }
                Op::Reshape(x) => {
                    if wants(*x) {
                        add_into(slot(&mut grads, *x, g.len()), &g);
                    }
                }
                &Op::MatMul { a, b, m, p, n } => {
                    if wants(a) {
                        let bv = val(b);
                        gemm_nt(&g, bv, slot(&mut grads, a, m * p), m, n, p);
                    }
                    if wants(b) {
                        let av = val(a);
                        gemm_tn(av, &g, slot(&mut grads, b, p * n), m, p, n);
                    }
                }
                &Op::BatchMatMul {
                    a,
                    b,
                    batch,
                    m,
                    p,
                    n,
                    trans_b,
                } => {
                    let (av, bv) = (val(a), val(b));
                    if wants(a) {
                        let s = slot(&mut grads, a, batch * m * p);
                        for k in 0..batch {
                            let gk = &g[k * m * n..(k + 1) * m * n];
                            let bk = &bv[k * p * n..(k + 1) * p * n];
                            let sk = &mut s[k * m * p..(k + 1) * m * p];
                            if trans_b {
                                gemm_nn(gk, bk, sk, m, n, p);
                            } else {
                                gemm_nt(gk, bk, sk, m, n, p);
                            }
                        }
                    }
                    if wants(b) {
                        let s = slot(&mut grads, b, batch * p * n);
                        for k in 0..batch {
                            let gk = &g[k * m * n..(k + 1) * m * n];
                            let ak = &av[k * m * p..(k + 1) * m * p];
                            let sk = &mut s[k * p * n..(k + 1) * p * n];
                            if trans_b {
                                gemm_tn(gk, ak, sk, m, n, p);
                            } else {
                                gemm_tn(ak, gk, sk, m, p, n);
                            }
                        }
                    }
                }
                &Op::Softmax { x, outer, len, inner } => {
                    if wants(x) {
                        let y = node.value.data();
                        let s = slot(&mut grads, x, y.len());
                        for o in 0..outer {
                            for ii in 0..inner {
                                let at = |j: usize| o * len * inner + j * inner + ii;
                                let dot: T = (0..len).map(|j| g[at(j)] * y[at(j)]).sum();
                                for j in 0..len {
                                    s[at(j)] += y[at(j)] * (g[at(j)] - dot);
                                }
                            }
                        }
                    }
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    rstd,
                } => {
                    let d = *node.value.shape().last().unwrap();
                    let rows = xhat.len() / d;
                    let gm = val(*gamma);
                    if wants(*x) {
                        let inv_d: T = c(1.0 / d as f64);
                        let s = slot(&mut grads, *x, xhat.len());
                        for r in 0..rows {
                            let range = r * d..(r + 1) * d;
                            let (gr, hr) = (&g[range.clone()], &xhat[range.clone()]);
                            let mut m1 = T::zero();
                            let mut m2 = T::zero();
                            for j in 0..d {
                                let dh = gr[j] * gm[j];
                                m1 += dh;
                                m2 += dh * hr[j];
                            }
                            m1 *= inv_d;
                            m2 *= inv_d;
                            let sr = &mut s[range];
                            for j in 0..d {
                                sr[j] += rstd[r] * (gr[j] * gm[j] - m1 - hr[j] * m2);
                            }
                        }
                    }
                    if wants(*gamma) {
                        let s = slot(&mut grads, *gamma, d);
                        for (j, (&gv, &h)) in g.iter().zip(xhat).enumerate() {
                            s[j % d] += gv * h;
                        }
                    }
                    if wants(*beta) {
                        let s = slot(&mut grads, *beta, d);
                        for (j, &gv) in g.iter().enumerate() {
                            s[j % d] += gv;
                        }
                    }
                }
                Op::BatchNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    rstd,
                    batch,
                    channels,
                    len,
                    batch_stats,
                } => {
                    let (batch, channels, len) = (*batch, *channels, *len);
                    let idx = |b: usize, ch: usize, t: usize| (b * channels + ch) * len + t;
                    let gm = val(*gamma);
                    if wants(*x) {
                        let inv_n: T = c(1.0 / (batch * len) as f64);
                        let s = slot(&mut grads, *x, xhat.len());
                        for ch in 0..channels {
                            let (mut m1, mut m2) = (T::zero(), T::zero());
                            if *batch_stats {
                                for b in 0..batch {
                                    for t in 0..len {
                                        let i = idx(b, ch, t);
                                        m1 += g[i] * gm[ch];
                                        m2 += g[i] * gm[ch] * xhat[i];
                                    }
                                }
                                m1 *= inv_n;
                                m2 *= inv_n;
                            }
                            for b in 0..batch {
                                for t in 0..len {
                                    let i = idx(b, ch, t);
                                    s[i] += rstd[ch] * (g[i] * gm[ch] - m1 - xhat[i] * m2);
                                }
                            }
                        }
                    }
                    if wants(*gamma) || wants(*beta) {
                        let mut dg = vec![T::zero(); channels];
                        let mut db = vec![T::zero(); channels];
                        for b in 0..batch {
                            for ch in 0..channels {
                                for t in 0..len {
                                    let i = idx(b, ch, t);
                                    dg[ch] += g[i] * xhat[i];
                                    db[ch] += g[i];
                                }
                            }
                        }
                        if wants(*gamma) {
                            add_into(slot(&mut grads, *gamma, channels), &dg);
                        }
                        if wants(*beta) {
                            add_into(slot(&mut grads, *beta, channels), &db);
                        }
                    }
                }
                Op::Prelu { x, slope } => {
                    let xv = val(*x);
                    let a = val(*slope)[0];
                    if wants(*x) {
                        let s = slot(&mut grads, *x, xv.len());
                        for ((s, &gv), &v) in s.iter_mut().zip(&g).zip(xv) {
                            *s += if v > T::zero() { gv } else { a * gv };
                        }
                    }
                    if wants(*slope) {
                        let da: T = g
                            .iter()
                            .zip(xv)
                            .filter(|(_, &v)| v <= T::zero())
                            .map(|(&gv, &v)| gv * v)
                            .sum();
                        slot(&mut grads, *slope, 1)[0] += da;
                    }
                }
                Op::Dropout { x, mask } => {
                    if wants(*x) {
                        let s = slot(&mut grads, *x, mask.len());
                        s.iter_mut().zip(&g).zip(mask).for_each(|((s, &g), &m)| *s += g * m);
                    }
                }
                Op::Relu(x) => {
                    if wants(*x) {
                        let xv = val(*x);
                        let s = slot(&mut grads, *x, xv.len());
                        for ((s, &gv), &v) in s.iter_mut().zip(&g).zip(xv) {
                            if v > T::zero() {
                                *s += gv;
                            }
                        }
                    }
                }
                Op::Sigmoid(x) => {
                    if wants(*x) {
                        let y = node.value.data();
                        let s = slot(&mut grads, *x, y.len());
                        for ((s, &gv), &yv) in s.iter_mut().zip(&g).zip(y) {
                            *s += gv * yv * (T::one() - yv);
                        }
                    }
                }
                Op::Tanh(x) => {
                    if wants(*x) {
                        let y = node.value.data();
                        let s = slot(&mut grads, *x, y.len());
                        for ((s, &gv), &yv) in s.iter_mut().zip(&g).zip(y) {
                            *s += gv * (T::one() - yv * yv);
                        }
                    }
                }
                &Op::SliceCols {
                    x,
                    rows,
                    cols,
                    start,
                    len,
                } => {
                    if wants(x) {
                        let s = slot(&mut grads, x, rows * cols);
                        for r in 0..rows {
                            add_into(&mut s[r * cols + start..r * cols + start + len], &g[r * len..(r + 1) * len]);
                        }
                    }
                }
                Op::ConcatCols { parts, rows } => {
                    let total: usize = parts.iter().map(|&(_, w)| w).sum();
                    let mut off = 0;
                    for &(p, w) in parts {
                        if wants(p) {
                            let s = slot(&mut grads, p, rows * w);
                            for r in 0..*rows {
                                add_into(&mut s[r * w..(r + 1) * w], &g[r * total + off..r * total + off + w]);
                            }
                        }
                        off += w;
                    }
                }
                Op::Conv1d { x, w, b, dims } => {
                    let Conv1dDims {
                        batch,
                        c_in,
                        c_out,
                        len,
                        kernel,
                    } = *dims;
                    let pad = kernel / 2;
                    let (xv, wv) = (val(*x), val(*w));
                    let (wx, ww, wb) = (wants(*x), wants(*w), wants(*b));
                    let mut gx = if wx { vec![T::zero(); xv.len()] } else { Vec::new() };
                    let mut gw = if ww { vec![T::zero(); wv.len()] } else { Vec::new() };
                    let mut gb = vec![T::zero(); c_out];
                    for bi in 0..batch {
                        for co in 0..c_out {
                            let gy = &g[(bi * c_out + co) * len..(bi * c_out + co + 1) * len];
                            gb[co] += gy.iter().copied().sum::<T>();
                            for ci in 0..c_in {
                                let xo = (bi * c_in + ci) * len;
                                for k in 0..kernel {
                                    let wi = (co * c_in + ci) * kernel + k;
                                    let (t0, t1) = (pad.saturating_sub(k), (len + pad).saturating_sub(k).min(len));
                                    if ww {
                                        let mut acc = T::zero();
                                        for t in t0..t1 {
                                            acc += gy[t] * xv[xo + t + k - pad];
                                        }
                                        gw[wi] += acc;
                                    }
                                    if wx {
                                        let wk = wv[wi];
                                        for t in t0..t1 {
                                            gx[xo + t + k - pad] += gy[t] * wk;
                                        }
                                    }
                                }
                            }
                        }
                    }
                    if wx {
                        add_into(slot(&mut grads, *x, gx.len()), &gx);
                    }
                    if ww {
                        add_into(slot(&mut grads, *w, gw.len()), &gw);
                    }
                    if wb {
                        add_into(slot(&mut grads, *b, c_out), &gb);
                    }
                }
                Op::Mse(a, b) => {
                    let (av, bv) = (val(*a), val(*b));
                    let k: T = c::<T>(2.0 / av.len() as f64) * g[0];
                    if wants(*a) {
                        let s = slot(&mut grads, *a, av.len());
                        for ((s, &x), &y) in s.iter_mut().zip(av).zip(bv) {
                            *s += k * (x - y);
                        }
                    }
                    if wants(*b) {
                        let s = slot(&mut grads, *b, bv.len());
                        for ((s, &x), &y) in s.iter_mut().zip(av).zip(bv) {
                            *s -= k * (x - y);
                        }
                    }
                }
                Op::Sum(x) => {
                    if wants(*x) {
                        let len = val(*x).len();
                        let s = slot(&mut grads, *x, len);
                        s.iter_mut().for_each(|s| *s += g[0]);
                    }
                }
                Op::Custom { x, backward } => {
                    if wants(*x) {
                        let gx = backward(val(*x), node.value.data(), &g);
                        add_into(slot(&mut grads, *x, gx.len()), &gx);
                    }
                }
            }
            if matches!(self.nodes[i].op, Op::Leaf) {
                check_finite(&g, "backward")?;
                let node = &mut self.nodes[i];
                match &mut node.grad {
                    Some(acc) => add_into(acc, &g),
                    None => node.grad = Some(g),
                }
            }
        }
        Ok(())
    }
}
