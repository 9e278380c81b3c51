//! Forward and backward implementations for every tensor primitive.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Scalar, Tensor};
use crate::error::{Error, Result};

fn shape_err<S: Scalar>(op: &'static str, a: &Tensor<S>, b: &Tensor<S>) -> Error {
    Error::ShapeMismatch {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

/// Plain `m×k · k×n` product on slices; shared by forward and backward paths.
fn matmul_raw<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize, out: &mut [S]) {
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let out_row = &mut out[i * n..(i + 1) * n];
        for (kk, &av) in a_row.iter().enumerate() {
            if av == S::zero() {
                continue;
            }
            let b_row = &b[kk * n..(kk + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o = *o + av * bv;
            }
        }
    }
}

fn transpose_raw<S: Scalar>(x: &[S], rows: usize, cols: usize, out: &mut [S]) {
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = x[r * cols + c];
        }
    }
}

impl<S: Scalar> Tensor<S> {
    // ── random constructors ──────────────────────────────────────────

    /// Standard-normal tensor. Samples are drawn in `f64` and converted, so
    /// the stream is identical across scalar types for a given rng state.
    pub fn randn(shape: &[usize], rng: &mut ChaCha8Rng) -> Self {
        let n: usize = shape.iter().product();
        let data = (0..n)
            .map(|_| {
                let v: f64 = StandardNormal.sample(rng);
                S::c(v)
            })
            .collect();
        Self::new_node(data, shape.to_vec(), false, vec![], None)
    }

    // ── linear algebra ───────────────────────────────────────────────

    /// `a[m×k] · b[k×n] → [m×n]`.
    pub fn matmul(&self, other: &Tensor<S>) -> Result<Tensor<S>> {
        let (sa, sb) = (self.shape(), other.shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(shape_err("matmul", self, other));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![S::zero(); m * n];
        matmul_raw(&self.data(), &other.data(), m, k, n, &mut out);
        Ok(Tensor::from_op(
            out,
            vec![m, n],
            vec![self.clone(), other.clone()],
            Box::new(move |dy, _out, parents| {
                let (a, b) = (&parents[0], &parents[1]);
                if a.requires_grad() {
                    // dL/da = dy · bᵀ
                    let mut bt = vec![S::zero(); k * n];
                    transpose_raw(&b.data(), k, n, &mut bt);
                    let mut da = vec![S::zero(); m * k];
                    matmul_raw(dy, &bt, m, n, k, &mut da);
                    a.accumulate_grad(&da);
                }
                if b.requires_grad() {
                    // dL/db = aᵀ · dy
                    let mut at = vec![S::zero(); k * m];
                    transpose_raw(&a.data(), m, k, &mut at);
                    let mut db = vec![S::zero(); k * n];
                    matmul_raw(&at, dy, k, m, n, &mut db);
                    b.accumulate_grad(&db);
                }
            }),
        ))
    }

    /// 2-D transpose.
    pub fn transpose(&self) -> Result<Tensor<S>> {
        let s = self.shape();
        if s.len() != 2 {
            return Err(Error::contract(
                "transpose",
                format!("expected rank 2, got {s:?}"),
            ));
        }
        let (r, c) = (s[0], s[1]);
        let mut out = vec![S::zero(); r * c];
        transpose_raw(&self.data(), r, c, &mut out);
        Ok(Tensor::from_op(
            out,
            vec![c, r],
            vec![self.clone()],
            Box::new(move |dy, _out, parents| {
                let mut dx = vec![S::zero(); r * c];
                transpose_raw(dy, c, r, &mut dx);
                parents[0].accumulate_grad(&dx);
            }),
        ))
    }

    // ── elementwise binary ───────────────────────────────────────────

    fn binary_same_shape(
        &self,
        other: &Tensor<S>,
        op: &'static str,
        fwd: impl Fn(S, S) -> S,
        back: impl Fn(&[S], &[S], &[S]) -> (Vec<S>, Vec<S>) + 'static,
    ) -> Result<Tensor<S>> {
        if self.shape() != other.shape() {
            return Err(shape_err(op, self, other));
        }
        let out: Vec<S> = self
            .data()
            .iter()
            .zip(other.data().iter())
            .map(|(&a, &b)| fwd(a, b))
            .collect();
        Ok(Tensor::from_op(
            out,
            self.shape().to_vec(),
            vec![self.clone(), other.clone()],
            Box::new(move |dy, _out, parents| {
                let (da, db) = back(dy, &parents[0].data(), &parents[1].data());
                if parents[0].requires_grad() {
                    parents[0].accumulate_grad(&da);
                }
                if parents[1].requires_grad() {
                    parents[1].accumulate_grad(&db);
                }
            }),
        ))
    }

    pub fn add(&self, other: &Tensor<S>) -> Result<Tensor<S>> {
        self.binary_same_shape(other, "add", |a, b| a + b, |dy, _a, _b| {
            (dy.to_vec(), dy.to_vec())
        })
    }

    pub fn sub(&self, other: &Tensor<S>) -> Result<Tensor<S>> {
        self.binary_same_shape(other, "sub", |a, b| a - b, |dy, _a, _b| {
            (dy.to_vec(), dy.iter().map(|&g| -g).collect())
        })
    }

    pub fn mul(&self, other: &Tensor<S>) -> Result<Tensor<S>> {
        self.binary_same_shape(other, "mul", |a, b| a * b, |dy, a, b| {
            (
                dy.iter().zip(b).map(|(&g, &bv)| g * bv).collect(),
                dy.iter().zip(a).map(|(&g, &av)| g * av).collect(),
            )
        })
    }

    pub fn div(&self, other: &Tensor<S>) -> Result<Tensor<S>> {
        self.binary_same_shape(other, "div", |a, b| a / b, |dy, a, b| {
            (
                dy.iter().zip(b).map(|(&g, &bv)| g / bv).collect(),
                dy.iter()
                    .zip(a.iter().zip(b))
                    .map(|(&g, (&av, &bv))| -g * av / (bv * bv))
                    .collect(),
            )
        })
    }

    // ── scalar-constant ops ──────────────────────────────────────────

    pub fn add_scalar(&self, c: S) -> Result<Tensor<S>> {
        let out: Vec<S> = self.data().iter().map(|&v| v + c).collect();
        Ok(Tensor::from_op(
            out,
            self.shape().to_vec(),
            vec![self.clone()],
            Box::new(|dy, _out, parents| parents[0].accumulate_grad(dy)),
        ))
    }

    pub fn mul_scalar(&self, c: S) -> Result<Tensor<S>> {
        let out: Vec<S> = self.data().iter().map(|&v| v * c).collect();
        Ok(Tensor::from_op(
            out,
            self.shape().to_vec(),
            vec![self.clone()],
            Box::new(move |dy, _out, parents| {
                let dx: Vec<S> = dy.iter().map(|&g| g * c).collect();
                parents[0].accumulate_grad(&dx);
            }),
        ))
    }

    pub fn neg(&self) -> Result<Tensor<S>> {
        self.mul_scalar(-S::one())
    }

    // ── broadcast over rows (the only broadcasting the model needs) ──

    /// `x[m×d] + r[d]`, `r` added to every row.
    pub fn add_row(&self, row: &Tensor<S>) -> Result<Tensor<S>> {
        let s = self.shape();
        if s.len() != 2 || row.shape() != [s[1]] {
            return Err(shape_err("add_row", self, row));
        }
        let (m, d) = (s[0], s[1]);
        let r = row.data();
        let out: Vec<S> = self
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v + r[i % d])
            .collect();
        drop(r);
        Ok(Tensor::from_op(
            out,
            vec![m, d],
            vec![self.clone(), row.clone()],
            Box::new(move |dy, _out, parents| {
                if parents[0].requires_grad() {
                    parents[0].accumulate_grad(dy);
                }
                if parents[1].requires_grad() {
                    let mut dr = vec![S::zero(); d];
                    for i in 0..m {
                        for j in 0..d {
                            dr[j] = dr[j] + dy[i * d + j];
                        }
                    }
                    parents[1].accumulate_grad(&dr);
                }
            }),
        ))
    }

    /// `x[m×d] ⊙ r[d]`, `r` multiplied into every row.
    pub fn mul_row(&self, row: &Tensor<S>) -> Result<Tensor<S>> {
        let s = self.shape();
        if s.len() != 2 || row.shape() != [s[1]] {
            return Err(shape_err("mul_row", self, row));
        }
        let (m, d) = (s[0], s[1]);
        let r = row.data();
        let out: Vec<S> = self
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v * r[i % d])
            .collect();
        drop(r);
        Ok(Tensor::from_op(
            out,
            vec![m, d],
            vec![self.clone(), row.clone()],
            Box::new(move |dy, _out, parents| {
                let x = parents[0].data().clone();
                let r = parents[1].data().clone();
                if parents[0].requires_grad() {
                    let dx: Vec<S> = dy
                        .iter()
                        .enumerate()
                        .map(|(i, &g)| g * r[i % d])
                        .collect();
                    parents[0].accumulate_grad(&dx);
                }
                if parents[1].requires_grad() {
                    let mut dr = vec![S::zero(); d];
                    for i in 0..m {
                        for j in 0..d {
                            dr[j] = dr[j] + dy[i * d + j] * x[i * d + j];
                        }
                    }
                    parents[1].accumulate_grad(&dr);
                }
            }),
        ))
    }

    // ── activations ──────────────────────────────────────────────────

    /// GELU, tanh approximation:
    /// `0.5·x·(1 + tanh(√(2/π)·(x + 0.044715·x³)))`.
    pub fn gelu(&self) -> Result<Tensor<S>> {
        let c0 = S::c(0.7978845608028654); // √(2/π)
        let c1 = S::c(0.044715);
        let half = S::c(0.5);
        let out: Vec<S> = self
            .data()
            .iter()
            .map(|&x| {
                let u = c0 * (x + c1 * x * x * x);
                half * x * (S::one() + u.tanh())
            })
            .collect();
        Ok(Tensor::from_op(
            out,
            self.shape().to_vec(),
            vec![self.clone()],
            Box::new(move |dy, _out, parents| {
                let x = parents[0].data();
                let dx: Vec<S> = dy
                    .iter()
                    .zip(x.iter())
                    .map(|(&g, &x)| {
                        let u = c0 * (x + c1 * x * x * x);
                        let t = u.tanh();
                        let sech2 = S::one() - t * t;
                        let du = c0 * (S::one() + S::c(3.0) * c1 * x * x);
                        g * (half * (S::one() + t) + half * x * sech2 * du)
                    })
                    .collect();
                drop(x);
                parents[0].accumulate_grad(&dx);
            }),
        ))
    }

    pub fn sigmoid(&self) -> Result<Tensor<S>> {
        let out: Vec<S> = self
            .data()
            .iter()
            .map(|&x| S::one() / (S::one() + (-x).exp()))
            .collect();
        Ok(Tensor::from_op(
            out,
            self.shape().to_vec(),
            vec![self.clone()],
            Box::new(|dy, out, parents| {
                let y = out.data();
                let dx: Vec<S> = dy
                    .iter()
                    .zip(y.iter())
                    .map(|(&g, &y)| g * y * (S::one() - y))
                    .collect();
                drop(y);
                parents[0].accumulate_grad(&dx);
            }),
        ))
    }

    pub fn tanh(&self) -> Result<Tensor<S>> {
        let out: Vec<S> = self.data().iter().map(|&x| x.tanh()).collect();
        Ok(Tensor::from_op(
            out,
            self.shape().to_vec(),
            vec![self.clone()],
            Box::new(|dy, out, parents| {
                let y = out.data();
                let dx: Vec<S> = dy
                    .iter()
                    .zip(y.iter())
                    .map(|(&g, &y)| g * (S::one() - y * y))
                    .collect();
                drop(y);
                parents[0].accumulate_grad(&dx);
            }),
        ))
    }

    /// Elementwise square root. Inputs must be strictly positive where a
    /// gradient is required.
    pub fn sqrt(&self) -> Result<Tensor<S>> {
        if self.data().iter().any(|&v| v < S::zero()) {
            return Err(Error::numeric("sqrt", "negative input"));
        }
        let out: Vec<S> = self.data().iter().map(|&x| x.sqrt()).collect();
        Ok(Tensor::from_op(
            out,
            self.shape().to_vec(),
            vec![self.clone()],
            Box::new(|dy, out, parents| {
                let y = out.data();
                let dx: Vec<S> = dy
                    .iter()
                    .zip(y.iter())
                    .map(|(&g, &y)| g * S::c(0.5) / y)
                    .collect();
                drop(y);
                parents[0].accumulate_grad(&dx);
            }),
        ))
    }

    // ── softmax ──────────────────────────────────────────────────────

    /// Max-subtracted softmax along `axis`.
    pub fn softmax(&self, axis: usize) -> Result<Tensor<S>> {
        self.softmax_masked(axis, None)
    }

    /// Softmax along `axis` with an optional keep-mask over the whole
    /// tensor (`true` = participates). Masked positions come out exactly 0
    /// and never enter the normalization, so `-inf` is never materialized.
    pub fn softmax_masked(&self, axis: usize, mask: Option<&[bool]>) -> Result<Tensor<S>> {
        let shape = self.shape().to_vec();
        if axis >= shape.len() {
            return Err(Error::contract(
                "softmax",
                format!("axis {axis} out of range for shape {shape:?}"),
            ));
        }
        if let Some(m) = mask {
            if m.len() != self.numel() {
                return Err(Error::contract(
                    "softmax",
                    format!("mask len {} != numel {}", m.len(), self.numel()),
                ));
            }
        }
        let axis_len = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let outer: usize = shape[..axis].iter().product();

        let x = self.data();
        let mut out = vec![S::zero(); x.len()];
        for o in 0..outer {
            for i in 0..inner {
                let idx = |j: usize| o * axis_len * inner + j * inner + i;
                let keep = |j: usize| mask.map_or(true, |m| m[idx(j)]);
                let mut max = S::neg_infinity();
                let mut any = false;
                for j in 0..axis_len {
                    if keep(j) {
                        any = true;
                        if x[idx(j)] > max {
                            max = x[idx(j)];
                        }
                    }
                }
                if !any {
                    return Err(Error::contract(
                        "softmax",
                        "fully masked slice".to_string(),
                    ));
                }
                let mut sum = S::zero();
                for j in 0..axis_len {
                    if keep(j) {
                        let e = (x[idx(j)] - max).exp();
                        out[idx(j)] = e;
                        sum = sum + e;
                    }
                }
                for j in 0..axis_len {
                    if keep(j) {
                        out[idx(j)] = out[idx(j)] / sum;
                    }
                }
            }
        }
        drop(x);
        Ok(Tensor::from_op(
            out,
            shape.clone(),
            vec![self.clone()],
            Box::new(move |dy, out, parents| {
                let y = out.data();
                let mut dx = vec![S::zero(); dy.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let idx = |j: usize| o * axis_len * inner + j * inner + i;
                        let mut dot = S::zero();
                        for j in 0..axis_len {
                            dot = dot + dy[idx(j)] * y[idx(j)];
                        }
                        for j in 0..axis_len {
                            dx[idx(j)] = y[idx(j)] * (dy[idx(j)] - dot);
                        }
                    }
                }
                drop(y);
                parents[0].accumulate_grad(&dx);
            }),
        ))
    }

    // ── layer norm ───────────────────────────────────────────────────

    /// Per-row normalization over the last dimension, then affine:
    /// `γ ⊙ (x − μ)/√(σ² + 1e-5) + β`.
    pub fn layer_norm(&self, gamma: &Tensor<S>, beta: &Tensor<S>) -> Result<Tensor<S>> {
        let shape = self.shape().to_vec();
        let d = *shape.last().ok_or_else(|| {
            Error::contract("layer_norm", "rank 0 input".to_string())
        })?;
        if gamma.shape() != [d] {
            return Err(shape_err("layer_norm", self, gamma));
        }
        if beta.shape() != [d] {
            return Err(shape_err("layer_norm", self, beta));
        }
        let eps = S::c(1e-5);
        let rows = self.numel() / d;
        let x = self.data();
        let g = gamma.data();
        let b = beta.data();
        let mut out = vec![S::zero(); x.len()];
        let mut xhat = vec![S::zero(); x.len()];
        let mut inv_std = vec![S::zero(); rows];
        for r in 0..rows {
            let row = &x[r * d..(r + 1) * d];
            let mean = row.iter().copied().sum::<S>() / S::c(d as f64);
            let var = row
                .iter()
                .map(|&v| (v - mean) * (v - mean))
                .sum::<S>()
                / S::c(d as f64);
            let istd = S::one() / (var + eps).sqrt();
            inv_std[r] = istd;
            for j in 0..d {
                let xh = (row[j] - mean) * istd;
                xhat[r * d + j] = xh;
                out[r * d + j] = g[j] * xh + b[j];
            }
        }
        drop(x);
        drop(g);
        drop(b);
        Ok(Tensor::from_op(
            out,
            shape,
            vec![self.clone(), gamma.clone(), beta.clone()],
            Box::new(move |dy, _out, parents| {
                let gamma = parents[1].data().clone();
                let dn = S::c(d as f64);
                if parents[0].requires_grad() {
                    let mut dx = vec![S::zero(); dy.len()];
                    for r in 0..rows {
                        let istd = inv_std[r];
                        let dyr = &dy[r * d..(r + 1) * d];
                        let xhr = &xhat[r * d..(r + 1) * d];
                        // dxhat = dy ⊙ γ
                        let mut m1 = S::zero(); // mean(dxhat)
                        let mut m2 = S::zero(); // mean(dxhat ⊙ xhat)
                        for j in 0..d {
                            let dxh = dyr[j] * gamma[j];
                            m1 = m1 + dxh;
                            m2 = m2 + dxh * xhr[j];
                        }
                        m1 = m1 / dn;
                        m2 = m2 / dn;
                        for j in 0..d {
                            let dxh = dyr[j] * gamma[j];
                            dx[r * d + j] = istd * (dxh - m1 - xhr[j] * m2);
                        }
                    }
                    parents[0].accumulate_grad(&dx);
                }
                if parents[1].requires_grad() {
                    let mut dg = vec![S::zero(); d];
                    for r in 0..rows {
                        for j in 0..d {
                            dg[j] = dg[j] + dy[r * d + j] * xhat[r * d + j];
                        }
                    }
                    parents[1].accumulate_grad(&dg);
                }
                if parents[2].requires_grad() {
                    let mut db = vec![S::zero(); d];
                    for r in 0..rows {
                        for j in 0..d {
                            db[j] = db[j] + dy[r * d + j];
                        }
                    }
                    parents[2].accumulate_grad(&db);
                }
            }),
        ))
    }

    // ── 1-D convolution ──────────────────────────────────────────────

    /// Stride-1 "same" 1-D convolution over time.
    /// `x[T×Cin] * w[K×Cin×Cout] + b[Cout] → [T×Cout]`; K must be odd.
    pub fn conv1d(&self, weight: &Tensor<S>, bias: &Tensor<S>) -> Result<Tensor<S>> {
        let xs = self.shape();
        let ws = weight.shape();
        if xs.len() != 2 || ws.len() != 3 || ws[1] != xs[1] {
            return Err(shape_err("conv1d", self, weight));
        }
        let (t_len, c_in) = (xs[0], xs[1]);
        let (k, c_out) = (ws[0], ws[2]);
        if k % 2 == 0 {
            return Err(Error::contract("conv1d", format!("even kernel size {k}")));
        }
        if bias.shape() != [c_out] {
            return Err(shape_err("conv1d", self, bias));
        }
        let pad = k / 2;
        let x = self.data();
        let w = weight.data();
        let b = bias.data();
        let mut out = vec![S::zero(); t_len * c_out];
        for t in 0..t_len {
            let orow = &mut out[t * c_out..(t + 1) * c_out];
            orow.copy_from_slice(&b);
            for kk in 0..k {
                let src = t as isize + kk as isize - pad as isize;
                if src < 0 || src >= t_len as isize {
                    continue;
                }
                let xrow = &x[src as usize * c_in..(src as usize + 1) * c_in];
                for (ci, &xv) in xrow.iter().enumerate() {
                    if xv == S::zero() {
                        continue;
                    }
                    let wrow = &w[(kk * c_in + ci) * c_out..(kk * c_in + ci + 1) * c_out];
                    for (o, &wv) in orow.iter_mut().zip(wrow) {
                        *o = *o + xv * wv;
                    }
                }
            }
        }
        drop(x);
        drop(w);
        drop(b);
        Ok(Tensor::from_op(
            out,
            vec![t_len, c_out],
            vec![self.clone(), weight.clone(), bias.clone()],
            Box::new(move |dy, _out, parents| {
                let x = parents[0].data().clone();
                let w = parents[1].data().clone();
                if parents[0].requires_grad() {
                    let mut dx = vec![S::zero(); t_len * c_in];
                    for t in 0..t_len {
                        let dyr = &dy[t * c_out..(t + 1) * c_out];
                        for kk in 0..k {
                            let src = t as isize + kk as isize - pad as isize;
                            if src < 0 || src >= t_len as isize {
                                continue;
                            }
                            let dxr =
                                &mut dx[src as usize * c_in..(src as usize + 1) * c_in];
                            for ci in 0..c_in {
                                let wrow = &w[(kk * c_in + ci) * c_out
                                    ..(kk * c_in + ci + 1) * c_out];
                                let mut acc = S::zero();
                                for (g, &wv) in dyr.iter().zip(wrow) {
                                    acc = acc + *g * wv;
                                }
                                dxr[ci] = dxr[ci] + acc;
                            }
                        }
                    }
                    parents[0].accumulate_grad(&dx);
                }
                if parents[1].requires_grad() {
                    let mut dw = vec![S::zero(); k * c_in * c_out];
                    for t in 0..t_len {
                        let dyr = &dy[t * c_out..(t + 1) * c_out];
                        for kk in 0..k {
                            let src = t as isize + kk as isize - pad as isize;
                            if src < 0 || src >= t_len as isize {
                                continue;
                            }
                            let xrow =
                                &x[src as usize * c_in..(src as usize + 1) * c_in];
                            for (ci, &xv) in xrow.iter().enumerate() {
                                let dwr = &mut dw[(kk * c_in + ci) * c_out
                                    ..(kk * c_in + ci + 1) * c_out];
                                for (d, &g) in dwr.iter_mut().zip(dyr) {
                                    *d = *d + xv * g;
                                }
                            }
                        }
                    }
                    parents[1].accumulate_grad(&dw);
                }
                if parents[2].requires_grad() {
                    let mut db = vec![S::zero(); c_out];
                    for t in 0..t_len {
                        for o in 0..c_out {
                            db[o] = db[o] + dy[t * c_out + o];
                        }
                    }
                    parents[2].accumulate_grad(&db);
                }
            }),
        ))
    }

    // ── embedding lookup ─────────────────────────────────────────────

    /// Gather rows of `table[V×d]` by index; backward scatter-adds.
    pub fn embedding(table: &Tensor<S>, ids: &[usize]) -> Result<Tensor<S>> {
        let ts = table.shape();
        if ts.len() != 2 {
            return Err(Error::contract(
                "embedding",
                format!("table must be rank 2, got {ts:?}"),
            ));
        }
        let (v, d) = (ts[0], ts[1]);
        if let Some(&bad) = ids.iter().find(|&&i| i >= v) {
            return Err(Error::contract(
                "embedding",
                format!("id {bad} out of range for table with {v} rows"),
            ));
        }
        if ids.is_empty() {
            return Err(Error::contract("embedding", "empty id list".to_string()));
        }
        let tdata = table.data();
        let mut out = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            out.extend_from_slice(&tdata[i * d..(i + 1) * d]);
        }
        drop(tdata);
        let ids_saved: Vec<usize> = ids.to_vec();
        Ok(Tensor::from_op(
            out,
            vec![ids.len(), d],
            vec![table.clone()],
            Box::new(move |dy, _out, parents| {
                let mut dt = vec![S::zero(); v * d];
                for (row, &i) in ids_saved.iter().enumerate() {
                    for j in 0..d {
                        dt[i * d + j] = dt[i * d + j] + dy[row * d + j];
                    }
                }
                parents[0].accumulate_grad(&dt);
            }),
        ))
    }

    // ── concat / narrow ──────────────────────────────────────────────

    /// Concatenate along `axis`; all other dims must match.
    pub fn concat(parts: &[Tensor<S>], axis: usize) -> Result<Tensor<S>> {
        if parts.is_empty() {
            return Err(Error::contract("concat", "no tensors given".to_string()));
        }
        let rank = parts[0].shape().len();
        if axis >= rank {
            return Err(Error::contract(
                "concat",
                format!("axis {axis} out of range for rank {rank}"),
            ));
        }
        for p in parts {
            if p.shape().len() != rank {
                return Err(shape_err("concat", &parts[0], p));
            }
            for (ax, (&a, &b)) in parts[0].shape().iter().zip(p.shape()).enumerate() {
                if ax != axis && a != b {
                    return Err(shape_err("concat", &parts[0], p));
                }
            }
        }
        let mut out_shape = parts[0].shape().to_vec();
        out_shape[axis] = parts.iter().map(|p| p.shape()[axis]).sum();
        let inner: usize = out_shape[axis + 1..].iter().product();
        let outer: usize = out_shape[..axis].iter().product();
        let total: usize = out_shape.iter().product();

        let axis_sizes: Vec<usize> = parts.iter().map(|p| p.shape()[axis]).collect();
        let mut out = vec![S::zero(); total];
        let out_axis = out_shape[axis];
        let mut offset = 0usize;
        for (p, &alen) in parts.iter().zip(&axis_sizes) {
            let pd = p.data();
            for o in 0..outer {
                let src = &pd[o * alen * inner..(o + 1) * alen * inner];
                let dst_start = (o * out_axis + offset) * inner;
                out[dst_start..dst_start + alen * inner].copy_from_slice(src);
            }
            offset += alen;
        }
        Ok(Tensor::from_op(
            out,
            out_shape,
            parts.to_vec(),
            Box::new(move |dy, _out, parents| {
                let mut offset = 0usize;
                for (p, &alen) in parents.iter().zip(&axis_sizes) {
                    if p.requires_grad() {
                        let mut dp = vec![S::zero(); p.numel()];
                        for o in 0..outer {
                            let src_start = (o * out_axis + offset) * inner;
                            dp[o * alen * inner..(o + 1) * alen * inner]
                                .copy_from_slice(&dy[src_start..src_start + alen * inner]);
                        }
                        p.accumulate_grad(&dp);
                    }
                    offset += alen;
                }
            }),
        ))
    }

    /// Constant copy: same values, no gradient connection.
    pub fn detach(&self) -> Tensor<S> {
        Tensor::from_vec(self.to_vec(), self.shape()).expect("same shape")
    }

    /// Same data, new shape (row-major layout is unchanged).
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor<S>> {
        let numel: usize = shape.iter().product();
        if numel != self.numel() || shape.iter().any(|&d| d == 0) {
            return Err(Error::contract(
                "reshape",
                format!("cannot view {:?} as {shape:?}", self.shape()),
            ));
        }
        Ok(Tensor::from_op(
            self.to_vec(),
            shape.to_vec(),
            vec![self.clone()],
            Box::new(|dy, _out, parents| parents[0].accumulate_grad(dy)),
        ))
    }

    /// Contiguous slice `[start, start+len)` along `axis`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Result<Tensor<S>> {
        let shape = self.shape().to_vec();
        if axis >= shape.len() || start + len > shape[axis] || len == 0 {
            return Err(Error::contract(
                "narrow",
                format!("range {start}..{} invalid on axis {axis} of {shape:?}", start + len),
            ));
        }
        let inner: usize = shape[axis + 1..].iter().product();
        let outer: usize = shape[..axis].iter().product();
        let axis_len = shape[axis];
        let mut out_shape = shape.clone();
        out_shape[axis] = len;
        let x = self.data();
        let mut out = vec![S::zero(); outer * len * inner];
        for o in 0..outer {
            let src_start = (o * axis_len + start) * inner;
            out[o * len * inner..(o + 1) * len * inner]
                .copy_from_slice(&x[src_start..src_start + len * inner]);
        }
        drop(x);
        let full = self.numel();
        Ok(Tensor::from_op(
            out,
            out_shape,
            vec![self.clone()],
            Box::new(move |dy, _out, parents| {
                let mut dx = vec![S::zero(); full];
                for o in 0..outer {
                    let dst_start = (o * axis_len + start) * inner;
                    dx[dst_start..dst_start + len * inner]
                        .copy_from_slice(&dy[o * len * inner..(o + 1) * len * inner]);
                }
                parents[0].accumulate_grad(&dx);
            }),
        ))
    }

    // ── reductions ───────────────────────────────────────────────────

    pub fn sum_all(&self) -> Result<Tensor<S>> {
        let s: S = self.data().iter().copied().sum();
        let n = self.numel();
        Ok(Tensor::from_op(
            vec![s],
            vec![1],
            vec![self.clone()],
            Box::new(move |dy, _out, parents| {
                parents[0].accumulate_grad(&vec![dy[0]; n]);
            }),
        ))
    }

    pub fn mean_all(&self) -> Result<Tensor<S>> {
        let n = self.numel();
        let s: S = self.data().iter().copied().sum::<S>() / S::c(n as f64);
        Ok(Tensor::from_op(
            vec![s],
            vec![1],
            vec![self.clone()],
            Box::new(move |dy, _out, parents| {
                let g = dy[0] / S::c(n as f64);
                parents[0].accumulate_grad(&vec![g; n]);
            }),
        ))
    }

    /// Sum a 2-D tensor along `axis` (0 → column sums, 1 → row sums).
    pub fn sum_axis(&self, axis: usize) -> Result<Tensor<S>> {
        self.reduce_axis(axis, false)
    }

    /// Mean of a 2-D tensor along `axis`.
    pub fn mean_axis(&self, axis: usize) -> Result<Tensor<S>> {
        self.reduce_axis(axis, true)
    }

    fn reduce_axis(&self, axis: usize, mean: bool) -> Result<Tensor<S>> {
        let s = self.shape();
        if s.len() != 2 || axis > 1 {
            return Err(Error::contract(
                "reduce_axis",
                format!("expected rank 2 and axis 0/1, got {s:?} axis {axis}"),
            ));
        }
        let (r, c) = (s[0], s[1]);
        let x = self.data();
        let (out_len, red_n) = if axis == 0 { (c, r) } else { (r, c) };
        let mut out = vec![S::zero(); out_len];
        for i in 0..r {
            for j in 0..c {
                let o = if axis == 0 { j } else { i };
                out[o] = out[o] + x[i * c + j];
            }
        }
        drop(x);
        let scale = if mean {
            S::one() / S::c(red_n as f64)
        } else {
            S::one()
        };
        if mean {
            for v in &mut out {
                *v = *v * scale;
            }
        }
        Ok(Tensor::from_op(
            out,
            vec![out_len],
            vec![self.clone()],
            Box::new(move |dy, _out, parents| {
                let mut dx = vec![S::zero(); r * c];
                for i in 0..r {
                    for j in 0..c {
                        let o = if axis == 0 { j } else { i };
                        dx[i * c + j] = dy[o] * scale;
                    }
                }
                parents[0].accumulate_grad(&dx);
            }),
        ))
    }

    /// Numerically stable `log Σ exp` of a 1-D tensor.
    pub fn log_sum_exp(&self) -> Result<Tensor<S>> {
        if self.shape().len() != 1 {
            return Err(Error::contract(
                "log_sum_exp",
                format!("expected rank 1, got {:?}", self.shape()),
            ));
        }
        let x = self.data();
        let max = x.iter().copied().fold(S::neg_infinity(), S::max);
        let sum: S = x.iter().map(|&v| (v - max).exp()).sum();
        let out = max + sum.ln();
        drop(x);
        Ok(Tensor::from_op(
            vec![out],
            vec![1],
            vec![self.clone()],
            Box::new(move |dy, out, parents| {
                let lse = out.data()[0];
                let x = parents[0].data();
                let dx: Vec<S> = x.iter().map(|&v| dy[0] * (v - lse).exp()).collect();
                drop(x);
                parents[0].accumulate_grad(&dx);
            }),
        ))
    }

    // ── dropout ──────────────────────────────────────────────────────

    /// Inverted dropout. `train = false` is the bit-exact identity.
    pub fn dropout(&self, rate: f64, train: bool, rng: &mut ChaCha8Rng) -> Result<Tensor<S>> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::contract("dropout", format!("rate {rate} not in [0,1)")));
        }
        if !train || rate == 0.0 {
            return Ok(self.clone());
        }
        let keep = 1.0 - rate;
        let scale = S::c(1.0 / keep);
        let mask: Vec<bool> = (0..self.numel()).map(|_| rng.random::<f64>() < keep).collect();
        let out: Vec<S> = self
            .data()
            .iter()
            .zip(&mask)
            .map(|(&v, &m)| if m { v * scale } else { S::zero() })
            .collect();
        Ok(Tensor::from_op(
            out,
            self.shape().to_vec(),
            vec![self.clone()],
            Box::new(move |dy, _out, parents| {
                let dx: Vec<S> = dy
                    .iter()
                    .zip(&mask)
                    .map(|(&g, &m)| if m { g * scale } else { S::zero() })
                    .collect();
                parents[0].accumulate_grad(&dx);
            }),
        ))
    }
}

// ── sinusoidal encodings (forward only) ──────────────────────────────

/// Standard sinusoidal position table: `[len × dim]`,
/// `PE[p, 2i] = sin(p / 10000^(2i/dim))`, cosine on odd channels.
pub fn sinusoidal_position_encoding<S: Scalar>(len: usize, dim: usize) -> Tensor<S> {
    let mut data = vec![S::zero(); len * dim];
    for p in 0..len {
        fill_sinusoidal_row(p as f64, dim, &mut data[p * dim..(p + 1) * dim]);
    }
    Tensor::from_vec(data, &[len, dim]).expect("valid shape")
}

/// Sinusoidal rows at arbitrary (fractional) positions: `[len × dim]`.
/// Lets two streams share one positional scale (e.g. acoustic frames
/// addressed in phoneme units).
pub fn sinusoidal_positions<S: Scalar>(positions: &[f64], dim: usize) -> Tensor<S> {
    let mut data = vec![S::zero(); positions.len() * dim];
    for (i, &p) in positions.iter().enumerate() {
        fill_sinusoidal_row(p, dim, &mut data[i * dim..(i + 1) * dim]);
    }
    Tensor::from_vec(data, &[positions.len(), dim]).expect("valid shape")
}

/// Embedding of a flow time `t ∈ [0,1]` as a `[dim]` vector; `t` is scaled
/// by 1000 so the full sine period range is exercised.
pub fn sinusoidal_time_embedding<S: Scalar>(t: f64, dim: usize) -> Tensor<S> {
    let mut data = vec![S::zero(); dim];
    fill_sinusoidal_row(t * 1000.0, dim, &mut data);
    Tensor::from_vec(data, &[dim]).expect("valid shape")
}

fn fill_sinusoidal_row<S: Scalar>(pos: f64, dim: usize, out: &mut [S]) {
    for i in 0..dim / 2 {
        let freq = 1.0 / 10000f64.powf(2.0 * i as f64 / dim as f64);
        out[2 * i] = S::c((pos * freq).sin());
        out[2 * i + 1] = S::c((pos * freq).cos());
    }
    if dim % 2 == 1 {
        let freq = 1.0 / 10000f64.powf((dim - 1) as f64 / dim as f64);
        out[dim - 1] = S::c((pos * freq).sin());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn t(data: Vec<f64>, shape: &[usize]) -> Tensor<f64> {
        Tensor::from_vec(data, shape).unwrap()
    }

    #[test]
    fn matmul_identity() {
        let i2 = t(vec![1.0, 0.0, 0.0, 1.0], &[2, 2]);
        let m = t(vec![1.0, 2.0, 3.0, 4.0], &[2, 2]);
        let y = i2.matmul(&m).unwrap();
        assert_eq!(y.to_vec(), vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn matmul_dot_product() {
        let a = t(vec![1.0, 2.0], &[1, 2]);
        let b = t(vec![3.0, 4.0], &[2, 1]);
        let y = a.matmul(&b).unwrap();
        assert_eq!(y.to_vec(), vec![11.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let a = t(vec![0.0; 6], &[2, 3]);
        let b = t(vec![0.0; 8], &[2, 4]);
        let err = a.matmul(&b).unwrap_err().to_string();
        assert!(err.contains("[2, 3]") && err.contains("[2, 4]"), "{err}");
    }

    #[test]
    fn matmul_associative_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = Tensor::<f32>::randn(&[3, 4], &mut rng);
        let b = Tensor::<f32>::randn(&[4, 5], &mut rng);
        let c = Tensor::<f32>::randn(&[5, 2], &mut rng);
        let l = a.matmul(&b).unwrap().matmul(&c).unwrap();
        let r = a.matmul(&b.matmul(&c).unwrap()).unwrap();
        for (x, y) in l.to_vec().iter().zip(r.to_vec()) {
            assert!((x - y).abs() < 1e-4);
        }
    }

    #[test]
    fn softmax_symmetry_and_closed_form() {
        let y = t(vec![0.0, 0.0, 0.0], &[3]).softmax(0).unwrap();
        for v in y.to_vec() {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
        let y = t(vec![0.0, 3f64.ln()], &[2]).softmax(0).unwrap();
        let v = y.to_vec();
        assert!((v[0] - 0.25).abs() < 1e-12 && (v[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn softmax_no_overflow() {
        let y = Tensor::<f32>::from_vec(vec![1000.0, 1000.0], &[2])
            .unwrap()
            .softmax(0)
            .unwrap();
        let v = y.to_vec();
        assert!((v[0] - 0.5).abs() < 1e-6 && (v[1] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Tensor::<f64>::randn(&[5, 9], &mut rng);
        let y = x.softmax(1).unwrap();
        let d = y.to_vec();
        for r in 0..5 {
            let s: f64 = d[r * 9..(r + 1) * 9].iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn softmax_masked_zeroes_and_renormalizes() {
        let x = t(vec![1.0, 2.0, 3.0], &[3]);
        let y = x.softmax_masked(0, Some(&[true, false, true])).unwrap();
        let v = y.to_vec();
        assert_eq!(v[1], 0.0);
        assert!((v[0] + v[2] - 1.0).abs() < 1e-12);
        // fully masked slice is a contract error
        assert!(x.softmax_masked(0, Some(&[false, false, false])).is_err());
    }

    #[test]
    fn layer_norm_constant_row_is_zero() {
        let x = t(vec![5.0; 4], &[4]);
        let gamma = t(vec![1.0; 4], &[4]);
        let beta = t(vec![0.0; 4], &[4]);
        let y = x.layer_norm(&gamma, &beta).unwrap();
        for v in y.to_vec() {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn layer_norm_two_point_row() {
        let x = t(vec![1.0, 3.0], &[2]);
        let gamma = t(vec![1.0, 1.0], &[2]);
        let beta = t(vec![0.0, 0.0], &[2]);
        let y = x.layer_norm(&gamma, &beta).unwrap();
        let v = y.to_vec();
        assert!((v[0] + 1.0).abs() < 1e-4 && (v[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn dropout_eval_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = Tensor::<f32>::randn(&[4, 4], &mut rng);
        let y = x.dropout(0.5, false, &mut rng).unwrap();
        assert_eq!(x.to_vec(), y.to_vec());
        assert_eq!(x.id(), y.id()); // literally the same node
    }

    #[test]
    fn dropout_train_scales_kept_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::<f64>::from_vec(vec![1.0; 1000], &[1000]).unwrap();
        let y = x.dropout(0.25, true, &mut rng).unwrap();
        let v = y.to_vec();
        for &vi in &v {
            assert!(vi == 0.0 || (vi - 1.0 / 0.75).abs() < 1e-12);
        }
        let kept = v.iter().filter(|&&vi| vi != 0.0).count();
        assert!(kept > 650 && kept < 850, "kept {kept}");
    }

    #[test]
    fn narrow_concat_roundtrip() {
        let x = t((0..12).map(|v| v as f64).collect(), &[3, 4]);
        let a = x.narrow(1, 0, 2).unwrap();
        let b = x.narrow(1, 2, 2).unwrap();
        let y = Tensor::concat(&[a, b], 1).unwrap();
        assert_eq!(y.to_vec(), x.to_vec());
        let a0 = x.narrow(0, 1, 2).unwrap();
        assert_eq!(a0.to_vec(), (4..12).map(|v| v as f64).collect::<Vec<_>>());
    }

    #[test]
    fn embedding_rejects_out_of_range() {
        let table = t(vec![0.0; 8], &[4, 2]);
        assert!(Tensor::embedding(&table, &[0, 4]).is_err());
    }

    #[test]
    fn log_sum_exp_matches_naive() {
        let x = t(vec![0.1, -0.4, 2.0], &[3]);
        let lse = x.log_sum_exp().unwrap().item().unwrap();
        let naive: f64 = (0.1f64.exp() + (-0.4f64).exp() + 2.0f64.exp()).ln();
        assert!((lse - naive).abs() < 1e-12);
    }

    #[test]
    fn sinusoidal_rows_bounded() {
        let pe = sinusoidal_position_encoding::<f32>(16, 10);
        assert_eq!(pe.shape(), &[16, 10]);
        assert!(pe.to_vec().iter().all(|v| v.abs() <= 1.0));
        let te = sinusoidal_time_embedding::<f32>(0.5, 8);
        assert_eq!(te.shape(), &[8]);
    }
}
