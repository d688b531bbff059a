//! Reverse-mode differentiation over [`Matrix`] values.
//!
//! A [`Graph`] records one forward evaluation. Parameters enter as borrowed
//! leaves tagged with their index in the owning parameter set, so a backward
//! pass returns gradients keyed by that index. Attention and the losses are
//! fused ops with hand-written adjoints; everything else is a small matrix
//! primitive.

use std::borrow::Cow;
use std::sync::Arc;

use rayon::prelude::*;

use crate::scalar::Scalar;
use crate::tensor::{dot, Matrix};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

/// Relative-offset lookup shared by every attention op over the same grid.
#[derive(Clone, Debug)]
pub struct BiasIndex {
    pub queries: usize,
    pub keys: usize,
    /// Row of the bias table for each (query, key) pair, row-major.
    pub index: Vec<u32>,
}

/// Fixed linear resampling of each row: `out[p] = Σ w · in[j]`.
#[derive(Clone, Debug)]
pub struct Resampler<T> {
    pub in_len: usize,
    pub taps: Vec<Vec<(u32, T)>>,
}

impl<T: Scalar> Resampler<T> {
    pub fn out_len(&self) -> usize {
        self.taps.len()
    }

    pub fn apply_row(&self, src: &[T], dst: &mut [T]) {
        for (o, taps) in dst.iter_mut().zip(&self.taps) {
            let mut acc = T::zero();
            for &(j, w) in taps {
                acc += w * src[j as usize];
            }
            *o = acc;
        }
    }
}

enum Op<T> {
    Leaf,
    MatMul(usize, usize),
    MatMulNt(usize, usize),
    Add(usize, usize),
    AddBias(usize, usize),
    Scale(usize, T),
    LayerNorm {
        x: usize,
        gamma: usize,
        beta: usize,
        xhat: Matrix<T>,
        inv_std: Vec<T>,
    },
    Gelu(usize),
    Attention {
        q: usize,
        k: usize,
        v: usize,
        heads: usize,
        bias: Option<(usize, Arc<BiasIndex>)>,
        probs: Vec<Matrix<T>>,
    },
    Resample(usize, Arc<Resampler<T>>),
    BceWithLogits(usize, Arc<Matrix<T>>),
    SoftDice(usize, Arc<Matrix<T>>, T),
    WeightedSum(Vec<(usize, T)>),
}

impl<T> Op<T> {
    fn inputs(&self) -> Vec<usize> {
        match self {
            Op::Leaf => vec![],
            Op::MatMul(a, b) | Op::MatMulNt(a, b) | Op::Add(a, b) | Op::AddBias(a, b) => {
                vec![*a, *b]
            }
            Op::Scale(a, _)
            | Op::Gelu(a)
            | Op::Resample(a, _)
            | Op::BceWithLogits(a, _)
            | Op::SoftDice(a, _, _) => vec![*a],
            Op::LayerNorm { x, gamma, beta, .. } => vec![*x, *gamma, *beta],
            Op::Attention { q, k, v, bias, .. } => {
                let mut ins = vec![*q, *k, *v];
                if let Some((t, _)) = bias {
                    ins.push(*t);
                }
                ins
            }
            Op::WeightedSum(terms) => terms.iter().map(|(i, _)| *i).collect(),
        }
    }
}

/// One recorded forward evaluation.
pub struct Graph<'p, T: Scalar> {
    values: Vec<Cow<'p, Matrix<T>>>,
    ops: Vec<Op<T>>,
    needs_grad: Vec<bool>,
    param_index: Vec<Option<usize>>,
    record: bool,
}

const LN_EPS: f64 = 1e-6;

impl<'p, T: Scalar> Graph<'p, T> {
    /// Graph that keeps what a backward pass needs.
    pub fn new() -> Self {
        Self::with_recording(true)
    }

    /// Forward-only graph; intermediate caches are not kept.
    pub fn inference() -> Self {
        Self::with_recording(false)
    }

    fn with_recording(record: bool) -> Self {
        Self {
            values: Vec::new(),
            ops: Vec::new(),
            needs_grad: Vec::new(),
            param_index: Vec::new(),
            record,
        }
    }

    pub fn is_recording(&self) -> bool {
        self.record
    }

    fn push(&mut self, value: Cow<'p, Matrix<T>>, op: Op<T>, needs_grad: bool) -> Var {
        self.values.push(value);
        self.ops.push(op);
        self.needs_grad.push(needs_grad && self.record);
        self.param_index.push(None);
        Var(self.values.len() - 1)
    }

    fn push_op(&mut self, value: Matrix<T>, op: Op<T>) -> Var {
        let needs = op.inputs().iter().any(|&i| self.needs_grad[i]);
        self.push(Cow::Owned(value), op, needs)
    }

    pub fn value(&self, v: Var) -> &Matrix<T> {
        &self.values[v.0]
    }

    pub fn scalar(&self, v: Var) -> T {
        let m = self.value(v);
        assert_eq!(m.shape(), (1, 1), "not a scalar node");
        m.get(0, 0)
    }

    /// Constant input (no gradient).
    pub fn constant(&mut self, m: Matrix<T>) -> Var {
        self.push(Cow::Owned(m), Op::Leaf, false)
    }

    /// Trainable leaf borrowed from a parameter set.
    pub fn param(&mut self, index: usize, m: &'p Matrix<T>) -> Var {
        let v = self.push(Cow::Borrowed(m), Op::Leaf, true);
        self.param_index[v.0] = Some(index);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).matmul(self.value(b));
        self.push_op(out, Op::MatMul(a.0, b.0))
    }

    /// `a · bᵀ`
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).matmul_nt(self.value(b));
        self.push_op(out, Op::MatMulNt(a.0, b.0))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut out = self.value(a).clone();
        out.axpy(T::one(), self.value(b));
        self.push_op(out, Op::Add(a.0, b.0))
    }

    /// Adds the `1 × cols` row `bias` to every row of `a`.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Var {
        let b = self.value(bias);
        assert_eq!(b.rows(), 1, "bias must be a row vector");
        assert_eq!(b.cols(), self.value(a).cols(), "bias width");
        let mut out = self.value(a).clone();
        let cols = out.cols();
        for row in out.data_mut().chunks_mut(cols) {
            for (o, &bv) in row.iter_mut().zip(b.data()) {
                *o += bv;
            }
        }
        self.push_op(out, Op::AddBias(a.0, bias.0))
    }

    /// `x · w + b`
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let y = self.matmul(x, w);
        self.add_bias(y, b)
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let out = self.value(a).map(|x| x * s);
        self.push_op(out, Op::Scale(a.0, s))
    }

    /// Row-wise layer normalization with affine `gamma`, `beta` (`1 × cols`).
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let xm = self.value(x);
        let (rows, cols) = xm.shape();
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        assert_eq!(g.len(), cols, "layer norm gamma width");
        assert_eq!(b.len(), cols, "layer norm beta width");
        let n = T::from_usize(cols).unwrap();
        let eps = T::of(LN_EPS);
        let mut xhat = Matrix::zeros(rows, cols);
        let mut out = Matrix::zeros(rows, cols);
        let mut inv_std = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = xm.row(r);
            let mean = row.iter().copied().sum::<T>() / n;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
            let is = T::one() / (var + eps).sqrt();
            inv_std.push(is);
            let xh = xhat.row_mut(r);
            for (h, &v) in xh.iter_mut().zip(row) {
                *h = (v - mean) * is;
            }
            let o = out.row_mut(r);
            for c in 0..cols {
                o[c] = xh[c] * g[c] + b[c];
            }
        }
        let (xhat, inv_std) = if self.record {
            (xhat, inv_std)
        } else {
            (Matrix::zeros(0, 0), Vec::new())
        };
        self.push_op(
            out,
            Op::LayerNorm {
                x: x.0,
                gamma: gamma.0,
                beta: beta.0,
                xhat,
                inv_std,
            },
        )
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(gelu);
        self.push_op(out, Op::Gelu(x.0))
    }

    /// Multi-head scaled dot-product attention over row-major token matrices.
    ///
    /// `q` is `n × d`, `k` and `v` are `m × d`, `d` divisible by `heads`. An
    /// optional bias table (`rows × heads`) is added to the logits through
    /// `index`.
    pub fn attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        bias: Option<(Var, Arc<BiasIndex>)>,
    ) -> Var {
        let (qm, km, vm) = (self.value(q), self.value(k), self.value(v));
        let (n, d) = qm.shape();
        let m = km.rows();
        assert_eq!(km.cols(), d, "key width");
        assert_eq!(vm.shape(), (m, d), "value shape");
        assert!(heads > 0 && d % heads == 0, "width not divisible by heads");
        let table = bias.as_ref().map(|(t, idx)| {
            assert_eq!((idx.queries, idx.keys), (n, m), "bias index shape");
            let t = self.value(*t);
            assert_eq!(t.cols(), heads, "bias table head count");
            (t, idx.clone())
        });
        let dh = d / heads;
        let scale = T::one() / T::from_usize(dh).unwrap().sqrt();

        let per_head: Vec<(Matrix<T>, Matrix<T>)> = (0..heads)
            .into_par_iter()
            .map(|h| {
                let qh = column_block(qm, h * dh, dh);
                let kh = column_block(km, h * dh, dh);
                let vh = column_block(vm, h * dh, dh);
                let mut s = qh.matmul_nt(&kh);
                s.scale_in_place(scale);
                if let Some((t, idx)) = &table {
                    for (sv, &row) in s.data_mut().iter_mut().zip(&idx.index) {
                        *sv += t.get(row as usize, h);
                    }
                }
                softmax_rows_in_place(&mut s);
                let o = s.matmul(&vh);
                (s, o)
            })
            .collect();

        let mut out = Matrix::zeros(n, d);
        for (h, (_, o)) in per_head.iter().enumerate() {
            for r in 0..n {
                out.row_mut(r)[h * dh..(h + 1) * dh].copy_from_slice(o.row(r));
            }
        }
        let probs = if self.record {
            per_head.into_iter().map(|(p, _)| p).collect()
        } else {
            Vec::new()
        };
        self.push_op(
            out,
            Op::Attention {
                q: q.0,
                k: k.0,
                v: v.0,
                heads,
                bias: bias.map(|(t, idx)| (t.0, idx)),
                probs,
            },
        )
    }

    /// Applies a fixed linear resampling to every row of `x`.
    pub fn resample(&mut self, x: Var, map: Arc<Resampler<T>>) -> Var {
        let xm = self.value(x);
        assert_eq!(xm.cols(), map.in_len, "resample input width");
        let mut out = Matrix::zeros(xm.rows(), map.out_len());
        for r in 0..xm.rows() {
            map.apply_row(xm.row(r), out.row_mut(r));
        }
        self.push_op(out, Op::Resample(x.0, map))
    }

    /// Mean binary cross-entropy of `sigmoid(x)` against `target` in [0, 1].
    pub fn bce_with_logits(&mut self, x: Var, target: Arc<Matrix<T>>) -> Var {
        let xm = self.value(x);
        assert_eq!(xm.shape(), target.shape(), "bce target shape");
        let n = T::from_usize(xm.len()).unwrap();
        let total: T = xm
            .data()
            .iter()
            .zip(target.data())
            .map(|(&z, &t)| z.max(T::zero()) - z * t + (T::one() + (-z.abs()).exp()).ln())
            .sum();
        self.push_op(Matrix::filled(1, 1, total / n), Op::BceWithLogits(x.0, target))
    }

    /// Soft Dice loss `1 - (2Σpt + s)/(Σp + Σt + s)` per row, averaged over rows,
    /// with `p = sigmoid(x)`.
    pub fn soft_dice(&mut self, x: Var, target: Arc<Matrix<T>>, smooth: T) -> Var {
        let xm = self.value(x);
        assert_eq!(xm.shape(), target.shape(), "dice target shape");
        let rows = xm.rows();
        let mut total = T::zero();
        for r in 0..rows {
            let (inter, sum) = dice_sums(xm.row(r), target.row(r));
            total += T::one() - (inter + inter + smooth) / (sum + smooth);
        }
        let loss = total / T::from_usize(rows.max(1)).unwrap();
        self.push_op(Matrix::filled(1, 1, loss), Op::SoftDice(x.0, target, smooth))
    }

    /// `Σ wᵢ · termᵢ` over `1 × 1` nodes.
    pub fn weighted_sum(&mut self, terms: &[(Var, T)]) -> Var {
        let mut total = T::zero();
        for &(v, w) in terms {
            total += w * self.scalar(v);
        }
        let op = Op::WeightedSum(terms.iter().map(|&(v, w)| (v.0, w)).collect());
        self.push_op(Matrix::filled(1, 1, total), op)
    }

    /// Back-propagates from the scalar `loss` and returns `(param index,
    /// gradient)` for every parameter leaf that received one.
    pub fn backward(&self, loss: Var) -> Vec<(usize, Matrix<T>)> {
        assert!(self.record, "backward on an inference graph");
        assert_eq!(self.value(loss).shape(), (1, 1), "loss must be scalar");
        let mut grads: Vec<Option<Matrix<T>>> = (0..self.values.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::filled(1, 1, T::one()));

        for id in (0..=loss.0).rev() {
            if !self.needs_grad[id] {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            if matches!(self.ops[id], Op::Leaf) {
                grads[id] = Some(g);
                continue;
            }
            for (input, contrib) in self.adjoint(id, &g) {
                if !self.needs_grad[input] {
                    continue;
                }
                match &mut grads[input] {
                    Some(acc) => acc.axpy(T::one(), &contrib),
                    slot @ None => *slot = Some(contrib),
                }
            }
        }

        self.param_index
            .iter()
            .enumerate()
            .filter_map(|(id, p)| p.and_then(|pi| grads[id].take().map(|g| (pi, g))))
            .collect()
    }

    fn adjoint(&self, id: usize, g: &Matrix<T>) -> Vec<(usize, Matrix<T>)> {
        let val = |i: usize| -> &Matrix<T> { &self.values[i] };
        match &self.ops[id] {
            Op::Leaf => vec![],
            Op::MatMul(a, b) => {
                let mut out = Vec::with_capacity(2);
                if self.needs_grad[*a] {
                    out.push((*a, g.matmul_nt(val(*b))));
                }
                if self.needs_grad[*b] {
                    out.push((*b, val(*a).matmul_tn(g)));
                }
                out
            }
            Op::MatMulNt(a, b) => {
                // y = a bᵀ: da = g b, db = gᵀ a
                let mut out = Vec::with_capacity(2);
                if self.needs_grad[*a] {
                    out.push((*a, g.matmul(val(*b))));
                }
                if self.needs_grad[*b] {
                    out.push((*b, g.matmul_tn(val(*a))));
                }
                out
            }
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
            Op::AddBias(a, b) => {
                let cols = g.cols();
                let mut gb = Matrix::zeros(1, cols);
                for row in g.data().chunks(cols) {
                    for (acc, &v) in gb.data_mut().iter_mut().zip(row) {
                        *acc += v;
                    }
                }
                vec![(*a, g.clone()), (*b, gb)]
            }
            Op::Scale(a, s) => vec![(*a, g.map(|x| x * *s))],
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let (rows, cols) = g.shape();
                let gam = val(*gamma).data();
                let n = T::from_usize(cols).unwrap();
                let mut dx = Matrix::zeros(rows, cols);
                let mut dgamma = Matrix::zeros(1, cols);
                let mut dbeta = Matrix::zeros(1, cols);
                for r in 0..rows {
                    let gr = g.row(r);
                    let xh = xhat.row(r);
                    let mut sum_dxh = T::zero();
                    let mut sum_dxh_xh = T::zero();
                    for c in 0..cols {
                        let dxh = gr[c] * gam[c];
                        sum_dxh += dxh;
                        sum_dxh_xh += dxh * xh[c];
                        dgamma.data_mut()[c] += gr[c] * xh[c];
                        dbeta.data_mut()[c] += gr[c];
                    }
                    let k = inv_std[r] / n;
                    let dr = dx.row_mut(r);
                    for c in 0..cols {
                        let dxh = gr[c] * gam[c];
                        dr[c] = k * (n * dxh - sum_dxh - xh[c] * sum_dxh_xh);
                    }
                }
                vec![(*x, dx), (*gamma, dgamma), (*beta, dbeta)]
            }
            Op::Gelu(a) => {
                let x = val(*a);
                let data = x
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(&xv, &gv)| gv * gelu_grad(xv))
                    .collect();
                vec![(*a, Matrix::from_vec(x.rows(), x.cols(), data))]
            }
            Op::Attention {
                q,
                k,
                v,
                heads,
                bias,
                probs,
            } => self.attention_adjoint(g, *q, *k, *v, *heads, bias.as_ref(), probs),
            Op::Resample(a, map) => {
                let rows = g.rows();
                let mut dx = Matrix::zeros(rows, map.in_len);
                for r in 0..rows {
                    let gr = g.row(r);
                    let dr = dx.row_mut(r);
                    for (p, taps) in map.taps.iter().enumerate() {
                        for &(j, w) in taps {
                            dr[j as usize] += w * gr[p];
                        }
                    }
                }
                vec![(*a, dx)]
            }
            Op::BceWithLogits(a, target) => {
                let x = val(*a);
                let scale = g.get(0, 0) / T::from_usize(x.len()).unwrap();
                let data = x
                    .data()
                    .iter()
                    .zip(target.data())
                    .map(|(&z, &t)| (sigmoid(z) - t) * scale)
                    .collect();
                vec![(*a, Matrix::from_vec(x.rows(), x.cols(), data))]
            }
            Op::SoftDice(a, target, smooth) => {
                let x = val(*a);
                let rows = x.rows();
                let upstream = g.get(0, 0) / T::from_usize(rows.max(1)).unwrap();
                let mut dx = Matrix::zeros(x.rows(), x.cols());
                for r in 0..rows {
                    let (inter, sum) = dice_sums(x.row(r), target.row(r));
                    let num = inter + inter + *smooth;
                    let den = sum + *smooth;
                    let den2 = den * den;
                    let dr = dx.row_mut(r);
                    for ((d, &z), &t) in dr.iter_mut().zip(x.row(r)).zip(target.row(r)) {
                        let p = sigmoid(z);
                        // d/dp of -(num/den)
                        let dp = -((t + t) * den - num) / den2;
                        *d = upstream * dp * p * (T::one() - p);
                    }
                }
                vec![(*a, dx)]
            }
            Op::WeightedSum(terms) => {
                let gv = g.get(0, 0);
                terms
                    .iter()
                    .map(|&(i, w)| (i, Matrix::filled(1, 1, gv * w)))
                    .collect()
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn attention_adjoint(
        &self,
        g: &Matrix<T>,
        q: usize,
        k: usize,
        v: usize,
        heads: usize,
        bias: Option<&(usize, Arc<BiasIndex>)>,
        probs: &[Matrix<T>],
    ) -> Vec<(usize, Matrix<T>)> {
        let (qm, km, vm) = (&self.values[q], &self.values[k], &self.values[v]);
        let (n, d) = qm.shape();
        let m = km.rows();
        let dh = d / heads;
        let scale = T::one() / T::from_usize(dh).unwrap().sqrt();

        let per_head: Vec<_> = (0..heads)
            .into_par_iter()
            .map(|h| {
                let p = &probs[h];
                let qh = column_block(qm, h * dh, dh);
                let kh = column_block(km, h * dh, dh);
                let vh = column_block(vm, h * dh, dh);
                let goh = column_block(g, h * dh, dh);
                let dvh = p.matmul_tn(&goh);
                let dp = goh.matmul_nt(&vh);
                let mut ds = Matrix::zeros(n, m);
                for i in 0..n {
                    let pr = p.row(i);
                    let dpr = dp.row(i);
                    let inner = dot(pr, dpr);
                    for (j, dsv) in ds.row_mut(i).iter_mut().enumerate() {
                        *dsv = pr[j] * (dpr[j] - inner);
                    }
                }
                let mut dqh = ds.matmul(&kh);
                dqh.scale_in_place(scale);
                let mut dkh = ds.matmul_tn(&qh);
                dkh.scale_in_place(scale);
                (dqh, dkh, dvh, ds)
            })
            .collect();

        let mut dq = Matrix::zeros(n, d);
        let mut dk = Matrix::zeros(m, d);
        let mut dv = Matrix::zeros(m, d);
        let mut dtable = bias.map(|(t, _)| Matrix::zeros(self.values[*t].rows(), heads));
        for (h, (dqh, dkh, dvh, ds)) in per_head.iter().enumerate() {
            for r in 0..n {
                dq.row_mut(r)[h * dh..(h + 1) * dh].copy_from_slice(dqh.row(r));
            }
            for r in 0..m {
                dk.row_mut(r)[h * dh..(h + 1) * dh].copy_from_slice(dkh.row(r));
                dv.row_mut(r)[h * dh..(h + 1) * dh].copy_from_slice(dvh.row(r));
            }
            if let (Some(dt), Some((_, idx))) = (dtable.as_mut(), bias) {
                for (&row, &s) in idx.index.iter().zip(ds.data()) {
                    let cur = dt.get(row as usize, h);
                    dt.set(row as usize, h, cur + s);
                }
            }
        }
        let mut out = vec![(q, dq), (k, dk), (v, dv)];
        if let (Some(dt), Some((t, _))) = (dtable, bias) {
            out.push((*t, dt));
        }
        out
    }
}

impl<T: Scalar> Default for Graph<'_, T> {
    fn default() -> Self {
        Self::new()
    }
}

fn column_block<T: Scalar>(m: &Matrix<T>, start: usize, width: usize) -> Matrix<T> {
    let mut out = Matrix::zeros(m.rows(), width);
    for r in 0..m.rows() {
        out.row_mut(r)
            .copy_from_slice(&m.row(r)[start..start + width]);
    }
    out
}

fn dice_sums<T: Scalar>(logits: &[T], target: &[T]) -> (T, T) {
    let mut inter = T::zero();
    let mut sum = T::zero();
    for (&z, &t) in logits.iter().zip(target) {
        let p = sigmoid(z);
        inter += p * t;
        sum += p + t;
    }
    (inter, sum)
}

/// Numerically stable row-wise softmax.
pub fn softmax_rows_in_place<T: Scalar>(m: &mut Matrix<T>) {
    let cols = m.cols();
    if cols == 0 {
        return;
    }
    for row in m.data_mut().chunks_mut(cols) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            sum += *x;
        }
        for x in row.iter_mut() {
            *x /= sum;
        }
    }
}

#[inline]
pub fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// Tanh approximation of GELU.
#[inline]
pub fn gelu<T: Scalar>(x: T) -> T {
    let u = T::of(GELU_C) * (x + T::of(GELU_A) * x * x * x);
    T::of(0.5) * x * (T::one() + u.tanh())
}

#[inline]
fn gelu_grad<T: Scalar>(x: T) -> T {
    let c = T::of(GELU_C);
    let a = T::of(GELU_A);
    let u = c * (x + a * x * x * x);
    let th = u.tanh();
    let du = c * (T::one() + T::of(3.0) * a * x * x);
    T::of(0.5) * (T::one() + th) + T::of(0.5) * x * (T::one() - th * th) * du
}
