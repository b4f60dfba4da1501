//! Define-by-run reverse-mode automatic differentiation.
//!
//! A [`Graph`] is an append-only arena of nodes. Every operation reads
//! existing nodes and pushes a new one, so node order is a topological order
//! and [`Graph::backward`] is a single reverse sweep. A fresh graph is built
//! for every forward pass; nodes are never mutated in place.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::{matmul_into, transposed, Tensor};

/// Logit written into masked attention entries.
///
/// Finite so that row-max stabilisation never produces `inf - inf`.
pub const NEG_LARGE: f64 = -1e9;

/// Variance floor inside layer normalisation.
pub const LN_EPS: f64 = 1e-6;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Mul(Var, Var),
    Sum(Var),
    SoftmaxRows(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
    },
    Gelu(Var),
    Rows {
        src: Var,
        start: usize,
    },
    Cols {
        src: Var,
        start: usize,
    },
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    MaskFill {
        src: Var,
        mask: Vec<bool>,
    },
    BceWithLogit {
        logit: Var,
        target: f64,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    grad: Option<Vec<f64>>,
    requires_grad: bool,
    op: Op,
}

/// Recorded computation plus the gradient buffers of its nodes.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: BTreeMap<String, Var>,
    macs: u64,
    corrupt_backward: bool,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Multiply-accumulate operations performed by matrix products so far.
    pub fn macs(&self) -> u64 {
        self.macs
    }

    /// Test hook: perturbs the left-operand gradient of every matrix
    /// product so gradient checks have a negative control.
    pub fn corrupt_backward(&mut self, on: bool) {
        self.corrupt_backward = on;
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf for a stored parameter. Aliased names resolve to their canonical
    /// slot, so every alias of one parameter maps to the same node.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<Var> {
        let canonical = store.resolve(name)?;
        if let Some(&v) = self.params.get(canonical) {
            return Ok(v);
        }
        let value = store.get(canonical)?.clone();
        let v = self.leaf(value);
        self.params.insert(canonical.to_string(), v);
        Ok(v)
    }

    /// Parameters bound into this graph, keyed by canonical name.
    pub fn bound_params(&self) -> impl Iterator<Item = (&str, Var)> {
        self.params.iter().map(|(k, &v)| (k.as_str(), v))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn zero_grads(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        let (m, k) = (self.value(a).shape()[0], self.value(a).shape()[1]);
        self.macs += (m * k * out.shape()[1]) as u64;
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).transpose()?;
        let rg = self.needs(a);
        Ok(self.push(out, Op::Transpose(a), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(Error::shape("add", x.shape(), y.shape()));
        }
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p + q).collect();
        let out = Tensor::new(x.shape().to_vec(), data)?;
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    /// `a[m×n] + row[n]`, broadcasting the row over every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (x, r) = (self.value(a), self.value(row));
        if r.numel() != x.cols() {
            return Err(Error::shape("add_row", x.shape(), r.shape()));
        }
        let n = x.cols();
        let data = x.data().iter().enumerate().map(|(i, v)| v + r.data()[i % n]).collect();
        let out = Tensor::new(x.shape().to_vec(), data)?;
        let rg = self.needs(a) || self.needs(row);
        Ok(self.push(out, Op::AddRow(a, row), rg))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let x = self.value(a);
        let out = Tensor::new(x.shape().to_vec(), x.data().iter().map(|v| v * factor).collect())?;
        let rg = self.needs(a);
        Ok(self.push(out, Op::Scale(a, factor), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(Error::shape("mul", x.shape(), y.shape()));
        }
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p * q).collect();
        let out = Tensor::new(x.shape().to_vec(), data)?;
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    /// Sum of every entry, accumulated in index order.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().fold(0.0, |acc, v| acc + v);
        let rg = self.needs(a);
        Ok(self.push(Tensor::scalar(s), Op::Sum(a), rg))
    }

    /// Row-wise softmax, stabilised by subtracting each row's maximum.
    ///
    /// A row made only of [`NEG_LARGE`] entries has no surviving column and
    /// is rejected.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let n = x.cols();
        let mut data = vec![0.0; x.numel()];
        for r in 0..x.rows() {
            let row = x.row(r);
            if row.iter().all(|&v| v <= NEG_LARGE) {
                return Err(Error::Contract(alloc::format!("softmax row {r} is fully masked")));
            }
            softmax_into(row, &mut data[r * n..(r + 1) * n]);
        }
        let out = Tensor::new(x.shape().to_vec(), data)?;
        let rg = self.needs(a);
        Ok(self.push(out, Op::SoftmaxRows(a), rg))
    }

    /// Normalises every row of `x` to zero mean and unit variance, then
    /// applies `gain` and `bias`.
    pub fn layernorm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let xv = self.value(x);
        let d = xv.cols();
        let (g, b) = (self.value(gain), self.value(bias));
        if g.numel() != d || b.numel() != d {
            return Err(Error::shape("layernorm", xv.shape(), g.shape()));
        }
        let rows = xv.rows();
        let mut xhat = vec![0.0; xv.numel()];
        let mut rstd = vec![0.0; rows];
        let mut out = vec![0.0; xv.numel()];
        for r in 0..rows {
            let row = xv.row(r);
            let mean = row.iter().fold(0.0, |a, v| a + v) / d as f64;
            let var = row.iter().fold(0.0, |a, v| a + (v - mean) * (v - mean)) / d as f64;
            let s = 1.0 / libm::sqrt(var + LN_EPS);
            rstd[r] = s;
            for j in 0..d {
                let h = (row[j] - mean) * s;
                xhat[r * d + j] = h;
                out[r * d + j] = h * g.data()[j] + b.data()[j];
            }
        }
        let out = Tensor::new(xv.shape().to_vec(), out)?;
        let rg = self.needs(x) || self.needs(gain) || self.needs(bias);
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            },
            rg,
        ))
    }

    /// Exact (erf-based) GELU.
    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let out = Tensor::new(x.shape().to_vec(), x.data().iter().map(|&v| gelu(v)).collect())?;
        let rg = self.needs(a);
        Ok(self.push(out, Op::Gelu(a), rg))
    }

    /// Rows `start..start + len` of a 2-D tensor.
    pub fn rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let x = self.value(a);
        if x.shape().len() != 2 || len == 0 || start + len > x.shape()[0] {
            return Err(Error::shape("rows", x.shape(), &[start, len]));
        }
        let c = x.cols();
        let out = Tensor::new(vec![len, c], x.data()[start * c..(start + len) * c].to_vec())?;
        let rg = self.needs(a);
        Ok(self.push(out, Op::Rows { src: a, start }, rg))
    }

    /// Columns `start..start + len` of a 2-D tensor.
    pub fn cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let x = self.value(a);
        if x.shape().len() != 2 || len == 0 || start + len > x.shape()[1] {
            return Err(Error::shape("cols", x.shape(), &[start, len]));
        }
        let (m, c) = (x.shape()[0], x.shape()[1]);
        let mut data = Vec::with_capacity(m * len);
        for r in 0..m {
            data.extend_from_slice(&x.data()[r * c + start..r * c + start + len]);
        }
        let out = Tensor::new(vec![m, len], data)?;
        let rg = self.needs(a);
        Ok(self.push(out, Op::Cols { src: a, start }, rg))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Contract("concat_rows of nothing".into()))?;
        let c = self.value(*first).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        let mut rg = false;
        for &p in parts {
            let t = self.value(p);
            if t.shape().len() != 2 || t.cols() != c {
                return Err(Error::shape("concat_rows", self.value(*first).shape(), t.shape()));
            }
            data.extend_from_slice(t.data());
            rows += t.rows();
            rg |= self.needs(p);
        }
        let out = Tensor::new(vec![rows, c], data)?;
        Ok(self.push(out, Op::ConcatRows(parts.to_vec()), rg))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Contract("concat_cols of nothing".into()))?;
        let m = self.value(*first).rows();
        let mut total = 0;
        let mut rg = false;
        for &p in parts {
            let t = self.value(p);
            if t.shape().len() != 2 || t.rows() != m {
                return Err(Error::shape("concat_cols", self.value(*first).shape(), t.shape()));
            }
            total += t.cols();
            rg |= self.needs(p);
        }
        let mut data = Vec::with_capacity(m * total);
        for r in 0..m {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let out = Tensor::new(vec![m, total], data)?;
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Replaces entries where `mask` is set by [`NEG_LARGE`]. Replaced
    /// entries are constants and receive no gradient.
    pub fn mask_fill(&mut self, a: Var, mask: &[bool]) -> Result<Var> {
        let x = self.value(a);
        if mask.len() != x.numel() {
            return Err(Error::shape("mask_fill", x.shape(), &[mask.len()]));
        }
        let data = x
            .data()
            .iter()
            .zip(mask)
            .map(|(&v, &m)| if m { NEG_LARGE } else { v })
            .collect();
        let out = Tensor::new(x.shape().to_vec(), data)?;
        let rg = self.needs(a);
        Ok(self.push(
            out,
            Op::MaskFill {
                src: a,
                mask: mask.to_vec(),
            },
            rg,
        ))
    }

    /// Binary cross-entropy of a single logit against a 0/1 target, in the
    /// overflow-free form `max(x, 0) - x*y + ln(1 + e^-|x|)`.
    pub fn bce_with_logit(&mut self, logit: Var, target: f64) -> Result<Var> {
        if target != 0.0 && target != 1.0 {
            return Err(Error::Contract(alloc::format!(
                "binary target must be 0 or 1, got {target}"
            )));
        }
        let x = self.value(logit).item()?;
        let loss = bce_logit_value(x, target);
        let rg = self.needs(logit);
        Ok(self.push(Tensor::scalar(loss), Op::BceWithLogit { logit, target }, rg))
    }

    /// Back-propagates from a scalar `loss`, adding into the gradient buffer
    /// of every node that requires one. Calling it twice without
    /// [`Graph::zero_grads`] accumulates.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).numel() != 1 {
            return Err(Error::Contract(alloc::format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut adj: Vec<Option<Vec<f64>>> = (0..=loss.0).map(|_| None).collect();
        adj[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            self.propagate(i, &g, &mut adj);
            let node = &mut self.nodes[i];
            match &mut node.grad {
                Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                None => node.grad = Some(g),
            }
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                if self.needs(*a) {
                    let bt = transposed(bv.data(), k, n);
                    let mut da = vec![0.0; m * k];
                    matmul_into(g, &bt, &mut da, m, n, k);
                    if self.corrupt_backward {
                        da.iter_mut().for_each(|v| *v *= 1.01);
                    }
                    accumulate(adj, *a, &da);
                }
                if self.needs(*b) {
                    let at = transposed(av.data(), m, k);
                    let mut db = vec![0.0; k * n];
                    matmul_into(&at, g, &mut db, k, m, n);
                    accumulate(adj, *b, &db);
                }
            }
            Op::Transpose(a) => {
                let s = node.value.shape();
                accumulate(adj, *a, &transposed(g, s[0], s[1]));
            }
            Op::Add(a, b) => {
                if self.needs(*a) {
                    accumulate(adj, *a, g);
                }
                if self.needs(*b) {
                    accumulate(adj, *b, g);
                }
            }
            Op::AddRow(a, row) => {
                if self.needs(*a) {
                    accumulate(adj, *a, g);
                }
                if self.needs(*row) {
                    let n = node.value.cols();
                    let mut dr = vec![0.0; n];
                    for (idx, v) in g.iter().enumerate() {
                        dr[idx % n] += v;
                    }
                    accumulate(adj, *row, &dr);
                }
            }
            Op::Scale(a, f) => {
                let d: Vec<f64> = g.iter().map(|v| v * f).collect();
                accumulate(adj, *a, &d);
            }
            Op::Mul(a, b) => {
                if self.needs(*a) {
                    let d: Vec<f64> = g.iter().zip(self.value(*b).data()).map(|(p, q)| p * q).collect();
                    accumulate(adj, *a, &d);
                }
                if self.needs(*b) {
                    let d: Vec<f64> = g.iter().zip(self.value(*a).data()).map(|(p, q)| p * q).collect();
                    accumulate(adj, *b, &d);
                }
            }
            Op::Sum(a) => {
                let d = vec![g[0]; self.value(*a).numel()];
                accumulate(adj, *a, &d);
            }
            Op::SoftmaxRows(a) => {
                let y = &node.value;
                let n = y.cols();
                let mut d = vec![0.0; y.numel()];
                for r in 0..y.rows() {
                    let yr = y.row(r);
                    let gr = &g[r * n..(r + 1) * n];
                    let dot = yr.iter().zip(gr).fold(0.0, |acc, (p, q)| acc + p * q);
                    for j in 0..n {
                        d[r * n + j] = yr[j] * (gr[j] - dot);
                    }
                }
                accumulate(adj, *a, &d);
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            } => {
                let d = node.value.cols();
                let rows = node.value.rows();
                let gv = self.value(*gain).data();
                if self.needs(*x) {
                    let mut dx = vec![0.0; rows * d];
                    for r in 0..rows {
                        let h = &xhat[r * d..(r + 1) * d];
                        let gr = &g[r * d..(r + 1) * d];
                        let mut mean_dh = 0.0;
                        let mut mean_dh_h = 0.0;
                        for j in 0..d {
                            let dh = gr[j] * gv[j];
                            mean_dh += dh;
                            mean_dh_h += dh * h[j];
                        }
                        mean_dh /= d as f64;
                        mean_dh_h /= d as f64;
                        for j in 0..d {
                            let dh = gr[j] * gv[j];
                            dx[r * d + j] = rstd[r] * (dh - mean_dh - h[j] * mean_dh_h);
                        }
                    }
                    accumulate(adj, *x, &dx);
                }
                if self.needs(*gain) {
                    let mut dg = vec![0.0; d];
                    for (idx, v) in g.iter().enumerate() {
                        dg[idx % d] += v * xhat[idx];
                    }
                    accumulate(adj, *gain, &dg);
                }
                if self.needs(*bias) {
                    let mut db = vec![0.0; d];
                    for (idx, v) in g.iter().enumerate() {
                        db[idx % d] += v;
                    }
                    accumulate(adj, *bias, &db);
                }
            }
            Op::Gelu(a) => {
                let d: Vec<f64> = g
                    .iter()
                    .zip(self.value(*a).data())
                    .map(|(gv, &x)| gv * gelu_grad(x))
                    .collect();
                accumulate(adj, *a, &d);
            }
            Op::Rows { src, start } => {
                let s = self.value(*src);
                let c = s.cols();
                let mut d = vec![0.0; s.numel()];
                d[start * c..start * c + g.len()].copy_from_slice(g);
                accumulate(adj, *src, &d);
            }
            Op::Cols { src, start } => {
                let s = self.value(*src);
                let (m, c) = (s.shape()[0], s.shape()[1]);
                let len = node.value.cols();
                let mut d = vec![0.0; s.numel()];
                for r in 0..m {
                    d[r * c + start..r * c + start + len].copy_from_slice(&g[r * len..(r + 1) * len]);
                }
                accumulate(adj, *src, &d);
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).numel();
                    if self.needs(p) {
                        accumulate(adj, p, &g[offset..offset + len]);
                    }
                    offset += len;
                }
            }
            Op::ConcatCols(parts) => {
                let total = node.value.cols();
                let m = node.value.rows();
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    if self.needs(p) {
                        let mut d = Vec::with_capacity(m * w);
                        for r in 0..m {
                            d.extend_from_slice(&g[r * total + offset..r * total + offset + w]);
                        }
                        accumulate(adj, p, &d);
                    }
                    offset += w;
                }
            }
            Op::MaskFill { src, mask } => {
                let d: Vec<f64> = g.iter().zip(mask).map(|(&v, &m)| if m { 0.0 } else { v }).collect();
                accumulate(adj, *src, &d);
            }
            Op::BceWithLogit { logit, target } => {
                let x = self.value(*logit).data()[0];
                accumulate(adj, *logit, &[g[0] * (sigmoid(x) - target)]);
            }
        }
    }
}

fn accumulate(adj: &mut [Option<Vec<f64>>], v: Var, d: &[f64]) {
    match &mut adj[v.0] {
        Some(acc) => acc.iter_mut().zip(d).for_each(|(a, b)| *a += b),
        slot @ None => *slot = Some(d.to_vec()),
    }
}

pub(crate) fn softmax_into(row: &[f64], out: &mut [f64]) {
    let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let mut total = 0.0;
    for (o, &v) in out.iter_mut().zip(row) {
        *o = libm::exp(v - max);
        total += *o;
    }
    out.iter_mut().for_each(|o| *o /= total);
}

/// Row softmax on plain slices.
pub fn softmax(row: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; row.len()];
    softmax_into(row, &mut out);
    out
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

pub(crate) fn bce_logit_value(x: f64, y: f64) -> f64 {
    x.max(0.0) - x * y + libm::log1p(libm::exp(-x.abs()))
}

const FRAC_1_SQRT_2: f64 = core::f64::consts::FRAC_1_SQRT_2;

/// Exact GELU, `x * Phi(x)`.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * FRAC_1_SQRT_2))
}

fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2));
    let pdf = libm::exp(-0.5 * x * x) * 0.398_942_280_401_432_7;
    cdf + x * pdf
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn softmax_uniform() {
        let mut g = Graph::new();
        let a = g.constant(t(&[&[0.0, 0.0, 0.0]]));
        let s = g.softmax_rows(a).unwrap();
        for &v in g.value(s).data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_sentinel_is_logistic() {
        let mut g = Graph::new();
        let a = g.constant(t(&[&[NEG_LARGE, 0.0]]));
        let s = g.softmax_rows(a).unwrap();
        let v = g.value(s).data();
        // closed form: first entry is sigmoid(NEG_LARGE), which underflows to 0
        assert!(v[0] < 1e-6);
        assert_eq!(v[0], sigmoid(NEG_LARGE));
        assert!((v[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_rejects_fully_masked_row() {
        let mut g = Graph::new();
        let a = g.constant(t(&[&[0.0, 1.0], &[NEG_LARGE, NEG_LARGE]]));
        assert!(matches!(g.softmax_rows(a), Err(Error::Contract(_))));
    }

    #[test]
    fn layernorm_hand_computed() {
        let mut g = Graph::new();
        let x = g.constant(t(&[&[1.0, 3.0]]));
        let gain = g.constant(Tensor::filled(vec![2], 1.0));
        let bias = g.constant(Tensor::zeros(vec![2]));
        let y = g.layernorm(x, gain, bias).unwrap();
        // mean 2, variance 1: (x - 2) / sqrt(1 + 1e-6)
        let v = g.value(y).data();
        assert!((v[0] + 1.0).abs() < 1e-6);
        assert!((v[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn layernorm_constant_row_is_zero() {
        let mut g = Graph::new();
        let x = g.constant(t(&[&[4.0, 4.0, 4.0, 4.0]]));
        let gain = g.constant(Tensor::filled(vec![4], 1.0));
        let bias = g.constant(Tensor::zeros(vec![4]));
        let y = g.layernorm(x, gain, bias).unwrap();
        assert!(g.value(y).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bce_reference_values() {
        let mut g = Graph::new();
        let z = g.constant(Tensor::scalar(0.0));
        let l = g.bce_with_logit(z, 1.0).unwrap();
        assert!((g.value(l).data()[0] - core::f64::consts::LN_2).abs() < 1e-15);

        let big = g.constant(Tensor::scalar(20.0));
        let l = g.bce_with_logit(big, 1.0).unwrap();
        assert!(g.value(l).data()[0] < 1e-8);

        let neg = g.constant(Tensor::scalar(-3.0));
        let l = g.bce_with_logit(neg, 0.0).unwrap();
        // -ln(1 - sigma(-3)) = ln(1 + e^-3) = 0.04858735157374206
        assert!((g.value(l).data()[0] - 0.048_587_351_573_742_06).abs() < 1e-15);

        assert!(g.bce_with_logit(z, 0.5).is_err());
    }

    #[test]
    fn sum_gradient_is_ones() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::from_fn(vec![2, 3], |i| i as f64 - 1.5));
        let s = g.sum(x).unwrap();
        g.backward(s).unwrap();
        assert!(g.grad(x).unwrap().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn square_norm_gradient_is_twice_input() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::from_fn(vec![4], |i| 0.3 * i as f64 - 0.7));
        let sq = g.mul(x, x).unwrap();
        let s = g.sum(sq).unwrap();
        g.backward(s).unwrap();
        for (gv, xv) in g.grad(x).unwrap().iter().zip(g.value(x).data()) {
            assert_eq!(*gv, 2.0 * xv);
        }
    }

    #[test]
    fn backward_twice_doubles() {
        let mut g = Graph::new();
        let w = g.leaf(Tensor::from_fn(vec![3, 2], |i| 0.1 * i as f64 - 0.2));
        let x = g.constant(Tensor::from_fn(vec![2, 3], |i| 0.5 - 0.2 * i as f64));
        let y = g.matmul(x, w).unwrap();
        let y = g.gelu(y).unwrap();
        let s = g.sum(y).unwrap();
        g.backward(s).unwrap();
        let once = g.grad(w).unwrap().to_vec();
        g.backward(s).unwrap();
        for (a, b) in g.grad(w).unwrap().iter().zip(&once) {
            assert_eq!(*a, 2.0 * b);
        }
    }

    #[test]
    fn backward_requires_scalar() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::zeros(vec![2]));
        assert!(matches!(g.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn masked_entries_get_no_gradient() {
        let mut g = Graph::new();
        let x = g.leaf(t(&[&[0.2, -0.4, 1.0]]));
        let m = g.mask_fill(x, &[false, true, false]).unwrap();
        let s = g.softmax_rows(m).unwrap();
        let w = g.constant(t(&[&[1.0, 2.0, 3.0]]));
        let p = g.mul(s, w).unwrap();
        let l = g.sum(p).unwrap();
        g.backward(l).unwrap();
        assert_eq!(g.grad(x).unwrap()[1], 0.0);
        assert!(g.grad(x).unwrap()[0] != 0.0);
    }

    #[test]
    fn counts_macs() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(vec![3, 4]));
        let b = g.constant(Tensor::zeros(vec![4, 5]));
        g.matmul(a, b).unwrap();
        assert_eq!(g.macs(), 60);
    }
}
