//! Tape-based reverse-mode automatic differentiation.
//!
//! Every primitive evaluates eagerly and appends a node to the [`Tape`].
//! Nodes only reference earlier nodes, so the tape is always in topological
//! order and [`Tape::backward`] is a single reverse sweep.

use super::scalar::gemm;
use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    MatMul { a: Var, b: Var, ta: bool, tb: bool },
    Bmm { a: Var, b: Var, batch_a: usize },
    Add(Var, Var),
    Sub(Var, Var),
    AddRow { a: Var, bias: Var },
    Mul(Var, Var),
    Scale(Var, T),
    Relu(Var),
    Sum(Var),
    Mean(Var),
    MeanAxis { a: Var, outer: usize, axis: usize, inner: usize },
    Reshape(Var),
    Transpose(Var),
    Concat { parts: Vec<Var>, outer: usize, widths: Vec<usize> },
    TemporalConv(ConvGeom, Var, Var),
    Softmax(Var),
    LogSoftmax(Var),
    Log(Var),
    L2Normalize { a: Var, norms: Vec<T> },
    FillDiagonal(Var),
    Gather { a: Var, index: Vec<usize> },
}

#[derive(Clone, Copy, Debug)]
struct ConvGeom {
    batch: usize,
    frames: usize,
    joints: usize,
    cin: usize,
    cout: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    out_frames: usize,
}

impl ConvGeom {
    fn col_len(&self) -> usize {
        self.batch * self.out_frames * self.joints * self.kernel * self.cin
    }

    /// Unfolds `x` [B, T, J, Cin] into rows (b, t', j) × (k, c).
    fn im2col<T: Scalar>(&self, x: &[T]) -> Vec<T> {
        let g = self;
        let width = g.kernel * g.cin;
        let mut col = vec![T::zero(); g.col_len()];
        for b in 0..g.batch {
            for to in 0..g.out_frames {
                for k in 0..g.kernel {
                    let t = (to * g.stride + k) as isize - g.pad as isize;
                    if t < 0 || t as usize >= g.frames {
                        continue;
                    }
                    let t = t as usize;
                    for j in 0..g.joints {
                        let row = ((b * g.out_frames + to) * g.joints + j) * width + k * g.cin;
                        let src = ((b * g.frames + t) * g.joints + j) * g.cin;
                        col[row..row + g.cin].copy_from_slice(&x[src..src + g.cin]);
                    }
                }
            }
        }
        col
    }

    fn col2im<T: Scalar>(&self, col: &[T], dx: &mut [T]) {
        let g = self;
        let width = g.kernel * g.cin;
        for b in 0..g.batch {
            for to in 0..g.out_frames {
                for k in 0..g.kernel {
                    let t = (to * g.stride + k) as isize - g.pad as isize;
                    if t < 0 || t as usize >= g.frames {
                        continue;
                    }
                    let t = t as usize;
                    for j in 0..g.joints {
                        let row = ((b * g.out_frames + to) * g.joints + j) * width + k * g.cin;
                        let dst = ((b * g.frames + t) * g.joints + j) * g.cin;
                        for c in 0..g.cin {
                            dx[dst + c] = dx[dst + c] + col[row + c];
                        }
                    }
                }
            }
        }
    }
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Recorded computation graph. Single-threaded; build one per shard.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients of one backward sweep, indexed by [`Var`]. Only leaves keep
/// their gradient; intermediate buffers are released during the sweep.
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient of `v`, or zeros of length `len` if nothing flowed into it.
    pub fn take_or_zeros(&mut self, v: Var, len: usize) -> Vec<T> {
        self.grads
            .get_mut(v.0)
            .and_then(Option::take)
            .unwrap_or_else(|| vec![T::zero(); len])
    }
}

fn shape_str(s: &[usize]) -> String {
    format!("{s:?}")
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

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    /// A differentiable input (parameter or anything we want dL/dx for).
    pub fn leaf(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// An input that never receives a gradient.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].value.shape
    }

    fn data(&self, v: Var) -> &[T] {
        &self.nodes[v.0].value.data
    }

    fn mat_dims(&self, op: &'static str, v: Var) -> Result<(usize, usize)> {
        match *self.shape(v) {
            [r, c] => Ok((r, c)),
            ref s => Err(Error::dim(op, format!("expected a matrix, got {}", shape_str(s)))),
        }
    }

    /// `op(a) · op(b)` for matrices; `ta`/`tb` transpose the operand.
    pub fn matmul_t(&mut self, a: Var, b: Var, ta: bool, tb: bool) -> Result<Var> {
        let (ar, ac) = self.mat_dims("matmul", a)?;
        let (br, bc) = self.mat_dims("matmul", b)?;
        let (m, k) = if ta { (ac, ar) } else { (ar, ac) };
        let (k2, n) = if tb { (bc, br) } else { (br, bc) };
        if k != k2 {
            return Err(Error::dim(
                "matmul",
                format!(
                    "{} x {} (transpose {ta}/{tb})",
                    shape_str(self.shape(a)),
                    shape_str(self.shape(b))
                ),
            ));
        }
        let mut out = vec![T::zero(); m * n];
        gemm(m, k, n, self.data(a), ta, self.data(b), tb, &mut out, false);
        let ng = self.ng(&[a, b]);
        Ok(self.push(
            Tensor { shape: vec![m, n], data: out },
            Op::MatMul { a, b, ta, tb },
            ng,
        ))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_t(a, b, false, false)
    }

    /// Batched product `a[i] · b[i]` with `a` [Ba, M, K] and `b` [B, K, N];
    /// `Ba` is either `B` or 1 (broadcast, as for a shared adjacency).
    pub fn bmm(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let bad = || Error::dim("bmm", format!("{} x {}", shape_str(&sa), shape_str(&sb)));
        let [ba, m, k] = <[usize; 3]>::try_from(sa.as_slice()).map_err(|_| bad())?;
        let [bb, k2, n] = <[usize; 3]>::try_from(sb.as_slice()).map_err(|_| bad())?;
        if k != k2 || !(ba == bb || ba == 1) {
            return Err(bad());
        }
        let (ad, bd) = (self.data(a), self.data(b));
        let mut out = vec![T::zero(); bb * m * n];
        for i in 0..bb {
            let am = &ad[if ba == 1 { 0 } else { i * m * k }..][..m * k];
            let bm = &bd[i * k * n..(i + 1) * k * n];
            let om = &mut out[i * m * n..(i + 1) * m * n];
            for r in 0..m {
                let orow = &mut om[r * n..(r + 1) * n];
                for q in 0..k {
                    let w = am[r * k + q];
                    if w == T::zero() {
                        continue;
                    }
                    for (o, &x) in orow.iter_mut().zip(&bm[q * n..(q + 1) * n]) {
                        *o = *o + w * x;
                    }
                }
            }
        }
        let ng = self.ng(&[a, b]);
        Ok(self.push(
            Tensor { shape: vec![bb, m, n], data: out },
            Op::Bmm { a, b, batch_a: ba },
            ng,
        ))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim(
                op,
                format!("{} vs {}", shape_str(self.shape(a)), shape_str(self.shape(b))),
            ));
        }
        Ok(())
    }

    fn zip_map(&self, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Tensor<T> {
        Tensor {
            shape: self.shape(a).to_vec(),
            data: self
                .data(a)
                .iter()
                .zip(self.data(b))
                .map(|(&x, &y)| f(x, y))
                .collect(),
        }
    }

    fn map(&self, a: Var, f: impl Fn(T) -> T) -> Tensor<T> {
        Tensor {
            shape: self.shape(a).to_vec(),
            data: self.data(a).iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let t = self.zip_map(a, b, |x, y| x + y);
        let ng = self.ng(&[a, b]);
        Ok(self.push(t, Op::Add(a, b), ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let t = self.zip_map(a, b, |x, y| x - y);
        let ng = self.ng(&[a, b]);
        Ok(self.push(t, Op::Sub(a, b), ng))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let t = self.zip_map(a, b, |x, y| x * y);
        let ng = self.ng(&[a, b]);
        Ok(self.push(t, Op::Mul(a, b), ng))
    }

    /// Adds a vector to every row of `a` (broadcast over the last axis).
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let n = *self.shape(a).last().unwrap_or(&0);
        if self.shape(bias) != [n] {
            return Err(Error::dim(
                "add_row",
                format!("{} + {}", shape_str(self.shape(a)), shape_str(self.shape(bias))),
            ));
        }
        let bd = self.data(bias).to_vec();
        let mut t = self.value(a).clone();
        for row in t.data.chunks_exact_mut(n) {
            for (x, &b) in row.iter_mut().zip(&bd) {
                *x = *x + b;
            }
        }
        let ng = self.ng(&[a, bias]);
        Ok(self.push(t, Op::AddRow { a, bias }, ng))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        let t = self.map(a, |x| x * c);
        let ng = self.ng(&[a]);
        self.push(t, Op::Scale(a, c), ng)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let t = self.map(a, |x| if x > T::zero() { x } else { T::zero() });
        let ng = self.ng(&[a]);
        self.push(t, Op::Relu(a), ng)
    }

    pub fn log(&mut self, a: Var) -> Var {
        let t = self.map(a, |x| x.ln());
        let ng = self.ng(&[a]);
        self.push(t, Op::Log(a), ng)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.data(a).iter().copied().sum();
        let ng = self.ng(&[a]);
        self.push(Tensor::scalar(s), Op::Sum(a), ng)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = T::from_usize(self.data(a).len()).unwrap();
        let s = self.data(a).iter().copied().sum::<T>() / n;
        let ng = self.ng(&[a]);
        self.push(Tensor::scalar(s), Op::Mean(a), ng)
    }

    /// Mean over the contiguous axes `axes` (a range of dimensions), which are
    /// removed from the shape.
    pub fn mean_axes(&mut self, a: Var, axes: std::ops::Range<usize>) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axes.start >= axes.end || axes.end > shape.len() {
            return Err(Error::dim(
                "mean_axes",
                format!("axes {axes:?} of {}", shape_str(&shape)),
            ));
        }
        let outer: usize = shape[..axes.start].iter().product();
        let axis: usize = shape[axes.clone()].iter().product();
        let inner: usize = shape[axes.end..].iter().product();
        let src = self.data(a);
        let mut out = vec![T::zero(); outer * inner];
        for o in 0..outer {
            let dst = &mut out[o * inner..(o + 1) * inner];
            for k in 0..axis {
                let s = &src[(o * axis + k) * inner..][..inner];
                for (d, &v) in dst.iter_mut().zip(s) {
                    *d = *d + v;
                }
            }
        }
        let inv = T::one() / T::from_usize(axis).unwrap();
        out.iter_mut().for_each(|v| *v = *v * inv);
        let mut new_shape = shape[..axes.start].to_vec();
        new_shape.extend_from_slice(&shape[axes.end..]);
        let ng = self.ng(&[a]);
        Ok(self.push(
            Tensor { shape: new_shape, data: out },
            Op::MeanAxis { a, outer, axis, inner },
            ng,
        ))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let n: usize = shape.iter().product();
        if n != self.data(a).len() {
            return Err(Error::dim(
                "reshape",
                format!("{} -> {}", shape_str(self.shape(a)), shape_str(shape)),
            ));
        }
        let t = Tensor {
            shape: shape.to_vec(),
            data: self.data(a).to_vec(),
        };
        let ng = self.ng(&[a]);
        Ok(self.push(t, Op::Reshape(a), ng))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.mat_dims("transpose", a)?;
        let src = self.data(a);
        let mut out = vec![T::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = src[i * c + j];
            }
        }
        let ng = self.ng(&[a]);
        Ok(self.push(Tensor { shape: vec![c, r], data: out }, Op::Transpose(a), ng))
    }

    /// Concatenates along `axis`; all other dimensions must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::dim("concat", "no inputs"))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(Error::dim("concat", format!("axis {axis} of {}", shape_str(&base))));
        }
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            if s.len() != base.len()
                || s.iter().zip(&base).enumerate().any(|(i, (x, y))| i != axis && x != y)
            {
                return Err(Error::dim(
                    "concat",
                    format!("{} vs {}", shape_str(s), shape_str(&base)),
                ));
            }
            let inner: usize = s[axis..].iter().product();
            widths.push(inner);
        }
        let outer: usize = base[..axis].iter().product();
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(outer * total);
        for o in 0..outer {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.data(p)[o * w..(o + 1) * w]);
            }
        }
        let mut shape = base.clone();
        shape[axis] = parts.iter().map(|&p| self.shape(p)[axis]).sum();
        let ng = self.ng(parts);
        Ok(self.push(
            Tensor { shape, data: out },
            Op::Concat {
                parts: parts.to_vec(),
                outer,
                widths,
            },
            ng,
        ))
    }

    /// 1-D convolution along the frame axis of `x` [B, T, J, Cin] with
    /// weights `w` [K·Cin, Cout] (row index = tap·Cin + channel), zero
    /// padding K/2 and the given stride. Output [B, T', J, Cout] with
    /// T' = (T + 2·(K/2) − K) / stride + 1.
    pub fn temporal_conv(&mut self, x: Var, w: Var, kernel: usize, stride: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        let err = || {
            Error::dim(
                "temporal_conv",
                format!("x {} w {} kernel {kernel} stride {stride}", shape_str(&xs), shape_str(&ws)),
            )
        };
        let [batch, frames, joints, cin] = <[usize; 4]>::try_from(xs.as_slice()).map_err(|_| err())?;
        if kernel == 0 || stride == 0 || ws.len() != 2 || ws[0] != kernel * cin {
            return Err(err());
        }
        let pad = kernel / 2;
        if frames + 2 * pad < kernel {
            return Err(err());
        }
        let geom = ConvGeom {
            batch,
            frames,
            joints,
            cin,
            cout: ws[1],
            kernel,
            stride,
            pad,
            out_frames: (frames + 2 * pad - kernel) / stride + 1,
        };
        let col = geom.im2col(self.data(x));
        let rows = batch * geom.out_frames * joints;
        let mut out = vec![T::zero(); rows * geom.cout];
        gemm(rows, kernel * cin, geom.cout, &col, false, self.data(w), false, &mut out, false);
        let ng = self.ng(&[x, w]);
        Ok(self.push(
            Tensor {
                shape: vec![batch, geom.out_frames, joints, geom.cout],
                data: out,
            },
            Op::TemporalConv(geom, x, w),
            ng,
        ))
    }

    fn rows_of(&self, op: &'static str, a: Var) -> Result<(usize, usize)> {
        let s = self.shape(a);
        let cols = *s.last().ok_or_else(|| Error::dim(op, "scalar input"))?;
        if cols == 0 {
            return Err(Error::dim(op, "empty rows"));
        }
        Ok((self.data(a).len() / cols, cols))
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let (_, cols) = self.rows_of("softmax", a)?;
        let mut t = self.value(a).clone();
        for row in t.data.chunks_exact_mut(cols) {
            let m = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut s = T::zero();
            for v in row.iter_mut() {
                *v = (*v - m).exp();
                s = s + *v;
            }
            row.iter_mut().for_each(|v| *v = *v / s);
        }
        let ng = self.ng(&[a]);
        Ok(self.push(t, Op::Softmax(a), ng))
    }

    /// Log-softmax over the last axis. Entries equal to −∞ stay −∞ and
    /// receive zero gradient.
    pub fn log_softmax(&mut self, a: Var) -> Result<Var> {
        let (_, cols) = self.rows_of("log_softmax", a)?;
        let mut t = self.value(a).clone();
        for row in t.data.chunks_exact_mut(cols) {
            let m = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = m + row.iter().map(|&v| (v - m).exp()).sum::<T>().ln();
            row.iter_mut().for_each(|v| *v = *v - lse);
        }
        let ng = self.ng(&[a]);
        Ok(self.push(t, Op::LogSoftmax(a), ng))
    }

    /// Divides every row (last axis) by its Euclidean norm. Zero rows are an
    /// error: their direction is undefined.
    pub fn l2_normalize(&mut self, a: Var) -> Result<Var> {
        let (_, cols) = self.rows_of("l2_normalize", a)?;
        let mut t = self.value(a).clone();
        let mut norms = Vec::with_capacity(t.data.len() / cols);
        for (i, row) in t.data.chunks_exact_mut(cols).enumerate() {
            let n = row.iter().map(|&v| v * v).sum::<T>().sqrt();
            if !(n > T::zero()) || !n.is_finite() {
                return Err(Error::DegenerateInput(format!(
                    "row {i} has norm {n:?}; cannot normalize"
                )));
            }
            row.iter_mut().for_each(|v| *v = *v / n);
            norms.push(n);
        }
        let ng = self.ng(&[a]);
        Ok(self.push(t, Op::L2Normalize { a, norms }, ng))
    }

    /// Sets the diagonal of a square matrix to −∞ (masks self-pairs).
    pub fn mask_diagonal(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.mat_dims("mask_diagonal", a)?;
        if r != c {
            return Err(Error::dim("mask_diagonal", format!("{r}x{c} is not square")));
        }
        let mut t = self.value(a).clone();
        for i in 0..r {
            t.data[i * c + i] = T::neg_infinity();
        }
        let ng = self.ng(&[a]);
        Ok(self.push(t, Op::FillDiagonal(a), ng))
    }

    /// Picks `a[i, index[i]]` from each row of a matrix.
    pub fn gather(&mut self, a: Var, index: &[usize]) -> Result<Var> {
        let (r, c) = self.mat_dims("gather", a)?;
        if index.len() != r || index.iter().any(|&i| i >= c) {
            return Err(Error::dim("gather", format!("{r}x{c} with {} indices", index.len())));
        }
        let src = self.data(a);
        let data = index.iter().enumerate().map(|(i, &j)| src[i * c + j]).collect();
        let ng = self.ng(&[a]);
        Ok(self.push(
            Tensor { shape: vec![r], data },
            Op::Gather {
                a,
                index: index.to_vec(),
            },
            ng,
        ))
    }

    /// Back-propagates from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.data(loss).len() != 1 {
            return Err(Error::dim(
                "backward",
                format!("loss must be scalar, got {}", shape_str(self.shape(loss))),
            ));
        }
        self.backward_with(loss, vec![T::one()])
    }

    /// Back-propagates an explicit upstream gradient `seed` = dL/d`out`.
    pub fn backward_with(&self, out: Var, seed: Vec<T>) -> Result<Gradients<T>> {
        if seed.len() != self.data(out).len() {
            return Err(Error::dim(
                "backward",
                format!("seed of {} for {}", seed.len(), shape_str(self.shape(out))),
            ));
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; out.0 + 1];
        grads[out.0] = Some(seed);
        for idx in (0..=out.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, idx: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[idx];
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [T])| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            let slot = grads[v.0].get_or_insert_with(|| vec![T::zero(); self.data(v).len()]);
            f(slot);
        };
        match &node.op {
            Op::Leaf => {}
            &Op::MatMul { a, b, ta, tb } => {
                let (m, n) = (node.value.shape[0], node.value.shape[1]);
                let k = if ta { self.shape(a)[0] } else { self.shape(a)[1] };
                // C = op(A) op(B):  dA = g op(B)^T (stored per ta), dB = op(A)^T g
                acc(a, &mut |ga| {
                    if ta {
                        // dA (k×m) = op(B) g^T
                        gemm(k, n, m, self.data(b), tb, g, true, ga, true);
                    } else {
                        gemm(m, n, k, g, false, self.data(b), !tb, ga, true);
                    }
                });
                acc(b, &mut |gb| {
                    if tb {
                        // dB (n×k) = g^T op(A)
                        gemm(n, m, k, g, true, self.data(a), ta, gb, true);
                    } else {
                        gemm(k, m, n, self.data(a), !ta, g, false, gb, true);
                    }
                });
            }
            &Op::Bmm { a, b, batch_a } => {
                let [bb, m, n] = <[usize; 3]>::try_from(node.value.shape.as_slice()).unwrap();
                let k = self.shape(a)[2];
                let (ad, bd) = (self.data(a), self.data(b));
                acc(a, &mut |ga| {
                    for i in 0..bb {
                        let off = if batch_a == 1 { 0 } else { i * m * k };
                        gemm(
                            m,
                            n,
                            k,
                            &g[i * m * n..(i + 1) * m * n],
                            false,
                            &bd[i * k * n..(i + 1) * k * n],
                            true,
                            &mut ga[off..off + m * k],
                            true,
                        );
                    }
                });
                acc(b, &mut |gb| {
                    for i in 0..bb {
                        let am = &ad[if batch_a == 1 { 0 } else { i * m * k }..][..m * k];
                        let gi = &g[i * m * n..(i + 1) * m * n];
                        let dst = &mut gb[i * k * n..(i + 1) * k * n];
                        for r in 0..m {
                            let grow = &gi[r * n..(r + 1) * n];
                            for q in 0..k {
                                let w = am[r * k + q];
                                if w == T::zero() {
                                    continue;
                                }
                                for (d, &x) in dst[q * n..(q + 1) * n].iter_mut().zip(grow) {
                                    *d = *d + w * x;
                                }
                            }
                        }
                    }
                });
            }
            &Op::Add(a, b) => {
                acc(a, &mut |ga| add_into(ga, g));
                acc(b, &mut |gb| add_into(gb, g));
            }
            &Op::Sub(a, b) => {
                acc(a, &mut |ga| add_into(ga, g));
                acc(b, &mut |gb| gb.iter_mut().zip(g).for_each(|(d, &x)| *d = *d - x));
            }
            &Op::AddRow { a, bias } => {
                acc(a, &mut |ga| add_into(ga, g));
                acc(bias, &mut |gb| {
                    for row in g.chunks_exact(gb.len()) {
                        add_into(gb, row);
                    }
                });
            }
            &Op::Mul(a, b) => {
                let (ad, bd) = (self.data(a), self.data(b));
                acc(a, &mut |ga| {
                    for ((d, &x), &y) in ga.iter_mut().zip(g).zip(bd) {
                        *d = *d + x * y;
                    }
                });
                acc(b, &mut |gb| {
                    for ((d, &x), &y) in gb.iter_mut().zip(g).zip(ad) {
                        *d = *d + x * y;
                    }
                });
            }
            &Op::Scale(a, c) => acc(a, &mut |ga| {
                ga.iter_mut().zip(g).for_each(|(d, &x)| *d = *d + x * c)
            }),
            &Op::Relu(a) => {
                let ad = self.data(a);
                acc(a, &mut |ga| {
                    for ((d, &x), &v) in ga.iter_mut().zip(g).zip(ad) {
                        if v > T::zero() {
                            *d = *d + x;
                        }
                    }
                })
            }
            &Op::Log(a) => {
                let ad = self.data(a);
                acc(a, &mut |ga| {
                    for ((d, &x), &v) in ga.iter_mut().zip(g).zip(ad) {
                        *d = *d + x / v;
                    }
                })
            }
            &Op::Sum(a) => acc(a, &mut |ga| ga.iter_mut().for_each(|d| *d = *d + g[0])),
            &Op::Mean(a) => {
                let n = T::from_usize(self.data(a).len()).unwrap();
                acc(a, &mut |ga| ga.iter_mut().for_each(|d| *d = *d + g[0] / n))
            }
            &Op::MeanAxis { a, outer, axis, inner } => {
                let inv = T::one() / T::from_usize(axis).unwrap();
                acc(a, &mut |ga| {
                    for o in 0..outer {
                        let src = &g[o * inner..(o + 1) * inner];
                        for k in 0..axis {
                            let dst = &mut ga[(o * axis + k) * inner..][..inner];
                            for (d, &x) in dst.iter_mut().zip(src) {
                                *d = *d + x * inv;
                            }
                        }
                    }
                })
            }
            &Op::Reshape(a) => acc(a, &mut |ga| add_into(ga, g)),
            &Op::Transpose(a) => {
                let (c, r) = (node.value.shape[0], node.value.shape[1]);
                acc(a, &mut |ga| {
                    for i in 0..r {
                        for j in 0..c {
                            ga[i * c + j] = ga[i * c + j] + g[j * r + i];
                        }
                    }
                })
            }
            Op::Concat { parts, outer, widths } => {
                let total: usize = widths.iter().sum();
                let mut off = 0;
                for (&p, &w) in parts.iter().zip(widths) {
                    acc(p, &mut |gp| {
                        for o in 0..*outer {
                            add_into(&mut gp[o * w..(o + 1) * w], &g[o * total + off..][..w]);
                        }
                    });
                    off += w;
                }
            }
            &Op::TemporalConv(geom, x, w) => {
                let rows = geom.batch * geom.out_frames * geom.joints;
                let width = geom.kernel * geom.cin;
                let need_x = self.nodes[x.0].needs_grad;
                let need_w = self.nodes[w.0].needs_grad;
                if need_w {
                    let col = geom.im2col(self.data(x));
                    acc(w, &mut |gw| gemm(width, rows, geom.cout, &col, true, g, false, gw, true));
                }
                if need_x {
                    let mut dcol = vec![T::zero(); rows * width];
                    gemm(rows, geom.cout, width, g, false, self.data(w), true, &mut dcol, false);
                    acc(x, &mut |gx| geom.col2im(&dcol, gx));
                }
            }
            &Op::Softmax(a) => {
                let cols = *node.value.shape.last().unwrap();
                acc(a, &mut |ga| {
                    for ((d, y), gr) in ga
                        .chunks_exact_mut(cols)
                        .zip(node.value.data.chunks_exact(cols))
                        .zip(g.chunks_exact(cols))
                    {
                        let dot: T = y.iter().zip(gr).map(|(&p, &q)| p * q).sum();
                        for ((dd, &p), &q) in d.iter_mut().zip(y).zip(gr) {
                            *dd = *dd + p * (q - dot);
                        }
                    }
                })
            }
            &Op::LogSoftmax(a) => {
                let cols = *node.value.shape.last().unwrap();
                acc(a, &mut |ga| {
                    for ((d, y), gr) in ga
                        .chunks_exact_mut(cols)
                        .zip(node.value.data.chunks_exact(cols))
                        .zip(g.chunks_exact(cols))
                    {
                        let s: T = gr.iter().copied().sum();
                        for ((dd, &ly), &q) in d.iter_mut().zip(y).zip(gr) {
                            *dd = *dd + q - ly.exp() * s;
                        }
                    }
                })
            }
            Op::L2Normalize { a, norms } => {
                let cols = *node.value.shape.last().unwrap();
                acc(*a, &mut |ga| {
                    for (((d, y), gr), &n) in ga
                        .chunks_exact_mut(cols)
                        .zip(node.value.data.chunks_exact(cols))
                        .zip(g.chunks_exact(cols))
                        .zip(norms)
                    {
                        let dot: T = y.iter().zip(gr).map(|(&p, &q)| p * q).sum();
                        for ((dd, &p), &q) in d.iter_mut().zip(y).zip(gr) {
                            *dd = *dd + (q - p * dot) / n;
                        }
                    }
                })
            }
            &Op::FillDiagonal(a) => {
                let c = node.value.shape[1];
                acc(a, &mut |ga| {
                    for (i, (d, &x)) in ga.iter_mut().zip(g).enumerate() {
                        if i / c != i % c {
                            *d = *d + x;
                        }
                    }
                })
            }
            Op::Gather { a, index } => {
                let c = self.shape(*a)[1];
                acc(*a, &mut |ga| {
                    for (i, (&j, &x)) in index.iter().zip(g).enumerate() {
                        ga[i * c + j] = ga[i * c + j] + x;
                    }
                })
            }
        }
    }
}

fn add_into<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = *d + s;
    }
}
