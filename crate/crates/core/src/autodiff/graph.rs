//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation as a node in creation order, which is
//! already a topological order; [`Graph::backward`] walks it in reverse.
//! Gradients are only materialised for nodes that (transitively) depend on a
//! leaf created with `requires_grad = true`.

use super::conv::{self, ConvGeom, ConvSpec};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(&self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolKind {
    Max,
    Mean,
    GlobalAvg,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        spec: ConvSpec,
        geom: ConvGeom,
    },
    Relu(Var),
    Sigmoid(Var),
    Hadamard(Var, Var),
    Add(Var, Var),
    MaxPool {
        x: Var,
        argmax: Vec<usize>,
    },
    MeanPool {
        x: Var,
        window: usize,
    },
    GlobalAvgPool(Var),
    Reshape(Var),
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    SoftmaxCrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<f64>,
    },
    L1Loss {
        pred: Var,
        target: Vec<f64>,
    },
    Sum(Var),
    Concat(Vec<Var>),
    Fuse {
        scores: Var,
        inputs: Vec<Var>,
        weights: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn numerically_stable_softmax(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Softmax over a flat score vector.
pub fn softmax(xs: &[f64]) -> Vec<f64> {
    numerically_stable_softmax(xs)
}

// Largest f64 strictly below 1.
const SIGMOID_CEIL: f64 = 1.0 - f64::EPSILON / 2.0;

fn sigmoid_scalar(x: f64) -> f64 {
    let y = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    y.clamp(f64::MIN_POSITIVE, SIGMOID_CEIL)
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

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    /// Constant leaf.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    /// Gradient of the last `backward` target with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<Tensor> {
        let node = &self.nodes[v.0];
        node.grad
            .as_ref()
            .map(|g| Tensor::new(node.value.shape(), g.clone()).expect("grad matches value"))
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, spec: &ConvSpec) -> Result<Var> {
        spec.validate()?;
        let geom = ConvGeom::new(spec, self.value(x).shape())?;
        if self.value(w).shape() != spec.weight_shape() {
            return Err(Error::Shape(format!(
                "conv weight has shape {:?}, expected {:?}",
                self.value(w).shape(),
                spec.weight_shape()
            )));
        }
        if let Some(b) = b {
            if self.value(b).shape() != [spec.out_channels] {
                return Err(Error::Shape(format!(
                    "conv bias has shape {:?}, expected [{}]",
                    self.value(b).shape(),
                    spec.out_channels
                )));
            }
        }
        let out = conv::forward(
            spec,
            &geom,
            self.value(x).data(),
            self.value(w).data(),
            b.map(|b| self.value(b).data()),
        );
        let shape = [geom.n, spec.out_channels, geom.oh, geom.ow];
        let rg = self.rg(x) || self.rg(w) || b.is_some_and(|b| self.rg(b));
        Ok(self.push(
            Tensor::new(&shape, out)?,
            Op::Conv2d {
                x,
                w,
                b,
                spec: *spec,
                geom,
            },
            rg,
        ))
    }

    fn map(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let src = self.value(x);
        let out = Tensor::new(src.shape(), src.data().iter().map(|&v| f(v)).collect())
            .expect("same shape");
        let rg = self.rg(x);
        self.push(out, op, rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.map(x, |v| v.max(0.0), Op::Relu(x))
    }

    /// Logistic sigmoid; outputs lie strictly inside `(0, 1)`.
    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.map(x, sigmoid_scalar, Op::Sigmoid(x))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::Shape(format!(
                "{what}: shapes {:?} and {:?} differ",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        Ok(())
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "hadamard")?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x * y)
            .collect();
        let out = Tensor::new(self.value(a).shape(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Hadamard(a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        let out = Tensor::new(self.value(a).shape(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    fn nchw(&self, x: Var) -> Result<[usize; 4]> {
        let s = self.value(x).shape();
        if s.len() != 4 {
            return Err(Error::Shape(format!("expected an NCHW tensor, got {s:?}")));
        }
        Ok([s[0], s[1], s[2], s[3]])
    }

    /// Non-overlapping `window x window` pooling; `GlobalAvg` ignores
    /// `window` and reduces each plane to `1x1`.
    pub fn pool2d(&mut self, x: Var, kind: PoolKind, window: usize) -> Result<Var> {
        let [n, c, h, w] = self.nchw(x)?;
        let rg = self.rg(x);
        if kind == PoolKind::GlobalAvg {
            let plane = h * w;
            let data = self
                .value(x)
                .data()
                .chunks_exact(plane)
                .map(|p| p.iter().sum::<f64>() / plane as f64)
                .collect();
            return Ok(self.push(Tensor::new(&[n, c, 1, 1], data)?, Op::GlobalAvgPool(x), rg));
        }
        if window == 0 || h % window != 0 || w % window != 0 {
            return Err(Error::Shape(format!(
                "pool window {window} does not divide {h}x{w}"
            )));
        }
        let (oh, ow) = (h / window, w / window);
        let src = self.value(x).data();
        let mut out = vec![0.0; n * c * oh * ow];
        let mut argmax = vec![0; out.len()];
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let oi = plane * oh * ow + oy * ow + ox;
                    let mut best = f64::NEG_INFINITY;
                    let mut best_i = 0;
                    let mut sum = 0.0;
                    for dy in 0..window {
                        for dx in 0..window {
                            let ii = base + (oy * window + dy) * w + ox * window + dx;
                            let v = src[ii];
                            sum += v;
                            if v > best {
                                best = v;
                                best_i = ii;
                            }
                        }
                    }
                    match kind {
                        PoolKind::Max => {
                            out[oi] = best;
                            argmax[oi] = best_i;
                        }
                        _ => out[oi] = sum / (window * window) as f64,
                    }
                }
            }
        }
        let value = Tensor::new(&[n, c, oh, ow], out)?;
        let op = match kind {
            PoolKind::Max => Op::MaxPool { x, argmax },
            _ => Op::MeanPool { x, window },
        };
        Ok(self.push(value, op, rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape)?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::Reshape(x), rg))
    }

    /// `[N, C, 1, 1]` or any `[N, ...]` to `[N, D]`.
    pub fn flatten(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).shape();
        let n = *s.first().ok_or_else(|| Error::Shape("cannot flatten a scalar".into()))?;
        let d = s[1..].iter().product::<usize>();
        self.reshape(x, &[n, d])
    }

    /// `x[N, D] @ w[D, M] + b[M]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (xs, ws) = (self.value(x).shape(), self.value(w).shape());
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[0] {
            return Err(Error::Shape(format!("linear: x {xs:?} and w {ws:?} do not chain")));
        }
        let (n, d, m) = (xs[0], xs[1], ws[1]);
        if let Some(b) = b {
            if self.value(b).shape() != [m] {
                return Err(Error::Shape(format!(
                    "linear bias has shape {:?}, expected [{m}]",
                    self.value(b).shape()
                )));
            }
        }
        let (xd, wd) = (self.value(x).data(), self.value(w).data());
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let row = &mut out[i * m..(i + 1) * m];
            if let Some(b) = b {
                row.copy_from_slice(self.value(b).data());
            }
            for k in 0..d {
                let xv = xd[i * d + k];
                for (o, &wv) in row.iter_mut().zip(&wd[k * m..(k + 1) * m]) {
                    *o += xv * wv;
                }
            }
        }
        let rg = self.rg(x) || self.rg(w) || b.is_some_and(|b| self.rg(b));
        Ok(self.push(Tensor::new(&[n, m], out)?, Op::Linear { x, w, b }, rg))
    }

    /// Batch-mean softmax cross-entropy of `logits[N, M]` against class labels.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let s = self.value(logits).shape();
        if s.len() != 2 || s[0] != labels.len() || s[0] == 0 {
            return Err(Error::Shape(format!(
                "cross-entropy: logits {s:?} vs {} labels",
                labels.len()
            )));
        }
        let (n, m) = (s[0], s[1]);
        if let Some(&bad) = labels.iter().find(|&&l| l >= m) {
            return Err(Error::LabelOutOfRange {
                label: bad,
                classes: m,
            });
        }
        let data = self.value(logits).data();
        let mut probs = Vec::with_capacity(n * m);
        let mut loss = 0.0;
        for (row, &label) in data.chunks_exact(m).zip(labels) {
            let p = numerically_stable_softmax(row);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss += lse - row[label];
            probs.extend(p);
        }
        let rg = self.rg(logits);
        Ok(self.push(
            Tensor::scalar(loss / n as f64),
            Op::SoftmaxCrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            rg,
        ))
    }

    /// Mean absolute error against a constant target.
    pub fn l1_loss(&mut self, pred: Var, target: &Tensor) -> Result<Var> {
        if self.value(pred).shape() != target.shape() || target.is_empty() {
            return Err(Error::Shape(format!(
                "l1 loss: prediction {:?} vs target {:?}",
                self.value(pred).shape(),
                target.shape()
            )));
        }
        let loss = self
            .value(pred)
            .data()
            .iter()
            .zip(target.data())
            .map(|(p, t)| (p - t).abs())
            .sum::<f64>()
            / target.len() as f64;
        let rg = self.rg(pred);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::L1Loss {
                pred,
                target: target.data().to_vec(),
            },
            rg,
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).data().iter().sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(total), Op::Sum(x), rg)
    }

    /// Joins 1-D tensors end to end.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let mut data = Vec::new();
        for &p in parts {
            let v = self.value(p);
            if v.shape().len() != 1 {
                return Err(Error::Shape(format!("concat takes 1-D tensors, got {:?}", v.shape())));
            }
            data.extend_from_slice(v.data());
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        let len = data.len();
        Ok(self.push(Tensor::new(&[len], data)?, Op::Concat(parts.to_vec()), rg))
    }

    /// `sum_s softmax(scores)_s * inputs[s]` over equally shaped inputs.
    pub fn fuse(&mut self, scores: Var, inputs: &[Var]) -> Result<Var> {
        let sc = self.value(scores);
        if sc.shape() != [inputs.len()] || inputs.is_empty() {
            return Err(Error::Shape(format!(
                "fuse: {} inputs but scores of shape {:?}",
                inputs.len(),
                sc.shape()
            )));
        }
        for &v in &inputs[1..] {
            self.same_shape(inputs[0], v, "fuse")?;
        }
        let weights = numerically_stable_softmax(sc.data());
        let mut out = vec![0.0; self.value(inputs[0]).len()];
        for (&wt, &v) in weights.iter().zip(inputs) {
            for (o, x) in out.iter_mut().zip(self.value(v).data()) {
                *o += wt * x;
            }
        }
        let shape = self.value(inputs[0]).shape().to_vec();
        let rg = self.rg(scores) || inputs.iter().any(|&v| self.rg(v));
        Ok(self.push(
            Tensor::new(&shape, out)?,
            Op::Fuse {
                scores,
                inputs: inputs.to_vec(),
                weights,
            },
            rg,
        ))
    }

    /// Reverse pass from `target`, seeding its gradient with ones.
    /// Gradients from any earlier pass are cleared first.
    pub fn backward(&mut self, target: Var) -> Result<()> {
        for node in &mut self.nodes {
            node.grad = None;
        }
        if !self.rg(target) {
            return Ok(());
        }
        let seed = vec![1.0; self.value(target).len()];
        self.nodes[target.0].grad = Some(seed);
        for i in (0..=target.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(gy) = self.nodes[i].grad.take() else {
                continue;
            };
            self.propagate(i, &gy);
            self.nodes[i].grad = Some(gy);
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, g: Vec<f64>) {
        let node = &mut self.nodes[v.0];
        if !node.requires_grad {
            return;
        }
        match node.grad.as_mut() {
            Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
            None => node.grad = Some(g),
        }
    }

    fn propagate(&mut self, i: usize, gy: &[f64]) {
        let out = &self.nodes[i].value;
        let contributions: Vec<(Var, Vec<f64>)> = match &self.nodes[i].op {
            Op::Leaf => vec![],
            Op::Conv2d {
                x,
                w,
                b,
                spec,
                geom,
            } => {
                let need = (self.rg(*x), self.rg(*w), b.is_some_and(|b| self.rg(b)));
                let grads = conv::backward(
                    spec,
                    geom,
                    self.value(*x).data(),
                    self.value(*w).data(),
                    gy,
                    need,
                );
                let mut c = vec![];
                if let Some(dx) = grads.dx {
                    c.push((*x, dx));
                }
                if let Some(dw) = grads.dw {
                    c.push((*w, dw));
                }
                if let (Some(b), Some(db)) = (b, grads.db) {
                    c.push((*b, db));
                }
                c
            }
            Op::Relu(x) => {
                let src = self.value(*x).data();
                let g = src
                    .iter()
                    .zip(gy)
                    .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
                    .collect();
                vec![(*x, g)]
            }
            Op::Sigmoid(x) => {
                let g = out
                    .data()
                    .iter()
                    .zip(gy)
                    .map(|(&y, &g)| g * y * (1.0 - y))
                    .collect();
                vec![(*x, g)]
            }
            Op::Hadamard(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                let ga = gy.iter().zip(bv).map(|(g, y)| g * y).collect();
                let gb = gy.iter().zip(av).map(|(g, x)| g * x).collect();
                vec![(*a, ga), (*b, gb)]
            }
            Op::Add(a, b) => vec![(*a, gy.to_vec()), (*b, gy.to_vec())],
            Op::MaxPool { x, argmax } => {
                let mut g = vec![0.0; self.value(*x).len()];
                for (&src, &d) in argmax.iter().zip(gy) {
                    g[src] += d;
                }
                vec![(*x, g)]
            }
            Op::MeanPool { x, window } => {
                let s = self.value(*x).shape();
                let (h, w) = (s[2], s[3]);
                let (oh, ow) = (h / window, w / window);
                let scale = 1.0 / (window * window) as f64;
                let mut g = vec![0.0; self.value(*x).len()];
                for (ii, gv) in g.iter_mut().enumerate() {
                    let plane = ii / (h * w);
                    let (y, xx) = ((ii % (h * w)) / w, ii % w);
                    *gv = gy[plane * oh * ow + (y / window) * ow + xx / window] * scale;
                }
                vec![(*x, g)]
            }
            Op::GlobalAvgPool(x) => {
                let s = self.value(*x).shape();
                let plane = s[2] * s[3];
                let g = (0..self.value(*x).len())
                    .map(|ii| gy[ii / plane] / plane as f64)
                    .collect();
                vec![(*x, g)]
            }
            Op::Reshape(x) => vec![(*x, gy.to_vec())],
            Op::Linear { x, w, b } => {
                let (xs, ws) = (self.value(*x).shape(), self.value(*w).shape());
                let (n, d, m) = (xs[0], xs[1], ws[1]);
                let (xd, wd) = (self.value(*x).data(), self.value(*w).data());
                let mut c = vec![];
                if self.rg(*x) {
                    let mut gx = vec![0.0; n * d];
                    for i in 0..n {
                        for k in 0..d {
                            gx[i * d + k] = gy[i * m..(i + 1) * m]
                                .iter()
                                .zip(&wd[k * m..(k + 1) * m])
                                .map(|(a, b)| a * b)
                                .sum();
                        }
                    }
                    c.push((*x, gx));
                }
                if self.rg(*w) {
                    let mut gw = vec![0.0; d * m];
                    for i in 0..n {
                        for k in 0..d {
                            let xv = xd[i * d + k];
                            for (o, &g) in gw[k * m..(k + 1) * m].iter_mut().zip(&gy[i * m..]) {
                                *o += xv * g;
                            }
                        }
                    }
                    c.push((*w, gw));
                }
                if let Some(b) = b {
                    if self.rg(*b) {
                        let mut gb = vec![0.0; m];
                        for row in gy.chunks_exact(m) {
                            gb.iter_mut().zip(row).for_each(|(a, g)| *a += g);
                        }
                        c.push((*b, gb));
                    }
                }
                c
            }
            Op::SoftmaxCrossEntropy {
                logits,
                labels,
                probs,
            } => {
                let m = self.value(*logits).shape()[1];
                let n = labels.len() as f64;
                let mut g: Vec<f64> = probs.iter().map(|p| p * gy[0] / n).collect();
                for (i, &l) in labels.iter().enumerate() {
                    g[i * m + l] -= gy[0] / n;
                }
                vec![(*logits, g)]
            }
            Op::L1Loss { pred, target } => {
                let n = target.len() as f64;
                let g = self
                    .value(*pred)
                    .data()
                    .iter()
                    .zip(target)
                    .map(|(p, t)| {
                        let d = p - t;
                        let sign = if d > 0.0 {
                            1.0
                        } else if d < 0.0 {
                            -1.0
                        } else {
                            0.0
                        };
                        sign * gy[0] / n
                    })
                    .collect();
                vec![(*pred, g)]
            }
            Op::Sum(x) => vec![(*x, vec![gy[0]; self.value(*x).len()])],
            Op::Concat(parts) => {
                let mut off = 0;
                parts
                    .iter()
                    .map(|&p| {
                        let len = self.value(p).len();
                        let g = gy[off..off + len].to_vec();
                        off += len;
                        (p, g)
                    })
                    .collect()
            }
            Op::Fuse {
                scores,
                inputs,
                weights,
            } => {
                let mut c = vec![];
                // <g, v_s> for each input
                let dots: Vec<f64> = inputs
                    .iter()
                    .map(|&v| self.value(v).data().iter().zip(gy).map(|(a, b)| a * b).sum())
                    .collect();
                if self.rg(*scores) {
                    let mean: f64 = weights.iter().zip(&dots).map(|(w, d)| w * d).sum();
                    let gs = weights
                        .iter()
                        .zip(&dots)
                        .map(|(w, d)| w * (d - mean))
                        .collect();
                    c.push((*scores, gs));
                }
                for (&v, &wt) in inputs.iter().zip(weights) {
                    if self.rg(v) {
                        c.push((v, gy.iter().map(|g| g * wt).collect()));
                    }
                }
                c
            }
        };
        for (v, g) in contributions {
            self.accumulate(v, g);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn depthwise_identity() {
        let mut g = Graph::new();
        let x = g.input(Tensor::from_fn(&[2, 3, 2, 2], |i| i as f64 - 5.0));
        let spec = ConvSpec::pointwise(3, 3, 3).unwrap();
        let w = g.param(Tensor::full(&[3, 1, 1, 1], 1.0));
        let b = g.param(Tensor::zeros(&[3]));
        let y = g.conv2d(x, w, Some(b), &spec).unwrap();
        assert_eq!(g.value(y), g.value(x));
    }

    #[test]
    fn full_window_sum() {
        let mut g = Graph::new();
        let x = g.input(Tensor::full(&[1, 1, 3, 3], 1.0));
        let w = g.param(Tensor::full(&[1, 1, 3, 3], 1.0));
        let spec = ConvSpec::new(1, 1, 3, 1, 0, 1).unwrap();
        let y = g.conv2d(x, w, None, &spec).unwrap();
        assert_eq!(g.value(y).shape(), &[1, 1, 1, 1]);
        assert_eq!(g.value(y).item(), 9.0);
    }

    #[test]
    fn conv_rejects_bad_inputs() {
        let mut g = Graph::new();
        let x = g.input(Tensor::zeros(&[1, 4, 3, 3]));
        let w = g.param(Tensor::zeros(&[4, 2, 1, 1]));
        let wrong = ConvSpec::pointwise(2, 4, 1).unwrap();
        assert!(matches!(g.conv2d(x, w, None, &wrong), Err(Error::Shape(_))));
        let bad = ConvSpec {
            in_channels: 4,
            out_channels: 4,
            kernel: 1,
            stride: 1,
            padding: 0,
            groups: 3,
        };
        assert!(matches!(g.conv2d(x, w, None, &bad), Err(Error::Config(_))));
    }

    #[test]
    fn elementwise_examples() {
        let mut g = Graph::new();
        let x = g.param(t(&[3], &[-1.0, 0.0, 2.0]));
        let r = g.relu(x);
        assert_eq!(g.value(r).data(), &[0.0, 0.0, 2.0]);
        let s = g.sum(r);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap().data()[2], 1.0);

        let mut g = Graph::new();
        let z = g.param(Tensor::scalar(0.0));
        let sz = g.sigmoid(z);
        assert_eq!(g.value(sz).item(), 0.5);
        g.backward(sz).unwrap();
        assert_eq!(g.grad(z).unwrap().item(), 0.25);

        let mut g = Graph::new();
        let big = g.input(t(&[2], &[800.0, -800.0]));
        let sb = g.sigmoid(big);
        assert!(g.value(sb).data().iter().all(|&v| v > 0.0 && v < 1.0));

        let mut g = Graph::new();
        let a = g.input(t(&[2, 2], &[1.0, -2.0, 3.0, 4.5]));
        let ones = g.input(Tensor::full(&[2, 2], 1.0));
        let h = g.hadamard(a, ones).unwrap();
        assert_eq!(g.value(h), g.value(a));
        let other = g.input(Tensor::zeros(&[4]));
        assert!(matches!(g.hadamard(a, other), Err(Error::Shape(_))));
    }

    #[test]
    fn pooling_examples() {
        let mut g = Graph::new();
        let x = g.param(t(&[1, 1, 2, 2], &[1.0, 3.0, 5.0, 7.0]));
        let ga = g.pool2d(x, PoolKind::GlobalAvg, 0).unwrap();
        assert_eq!(g.value(ga).shape(), &[1, 1, 1, 1]);
        assert_eq!(g.value(ga).item(), 4.0);

        let y = g.input(t(&[1, 1, 2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let mx = g.pool2d(y, PoolKind::Max, 2).unwrap();
        assert_eq!(g.value(mx).item(), 4.0);

        let z = g.param(Tensor::from_fn(&[1, 2, 4, 4], |i| i as f64));
        let mp = g.pool2d(z, PoolKind::Mean, 2).unwrap();
        let s = g.sum(mp);
        g.backward(s).unwrap();
        assert!(g.grad(z).unwrap().data().iter().all(|&v| v == 0.25));

        assert!(matches!(g.pool2d(z, PoolKind::Max, 3), Err(Error::Shape(_))));
    }

    #[test]
    fn losses() {
        let mut g = Graph::new();
        let logits = g.param(Tensor::zeros(&[2, 3]));
        let ce = g.softmax_cross_entropy(logits, &[0, 2]).unwrap();
        assert!((g.value(ce).item() - 3f64.ln()).abs() < 1e-12);
        g.backward(ce).unwrap();
        let grad = g.grad(logits).unwrap();
        let third = 1.0 / 3.0;
        let want = [third - 1.0, third, third, third, third, third - 1.0];
        for (a, b) in grad.data().iter().zip(want) {
            assert!((a - b / 2.0).abs() < 1e-12);
        }
        assert!(matches!(
            g.softmax_cross_entropy(logits, &[0, 3]),
            Err(Error::LabelOutOfRange { label: 3, classes: 3 })
        ));

        let p = g.input(t(&[2], &[1.0, 3.0]));
        let l = g.l1_loss(p, &t(&[2], &[1.0, 3.0])).unwrap();
        assert_eq!(g.value(l).item(), 0.0);
        let l = g.l1_loss(p, &t(&[2], &[2.0, 5.0])).unwrap();
        assert_eq!(g.value(l).item(), 1.5);
    }

    #[test]
    fn linear_forward() {
        let mut g = Graph::new();
        let x = g.input(t(&[1, 2], &[1.0, 2.0]));
        let w = g.param(t(&[2, 3], &[1.0, 0.0, -1.0, 0.5, 2.0, 1.0]));
        let b = g.param(t(&[3], &[0.0, 1.0, 0.0]));
        let y = g.linear(x, w, Some(b)).unwrap();
        assert_eq!(g.value(y).data(), &[2.0, 5.0, 1.0]);
    }

    #[test]
    fn fuse_weights_are_a_convex_combination() {
        let mut g = Graph::new();
        let scores = g.param(t(&[2], &[0.3, -1.2]));
        let a = g.input(t(&[1, 3], &[1.0, 2.0, 3.0]));
        let b = g.input(t(&[1, 3], &[1.0, 2.0, 3.0]));
        let f = g.fuse(scores, &[a, b]).unwrap();
        for (x, y) in g.value(f).data().iter().zip([1.0, 2.0, 3.0]) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn frozen_leaves_receive_no_gradient() {
        let mut g = Graph::new();
        let x = g.input(t(&[1, 2], &[1.0, 2.0]));
        let w = g.leaf(t(&[2, 1], &[1.0, 1.0]), false);
        let v = g.param(t(&[2, 1], &[0.5, 0.5]));
        let y1 = g.linear(x, w, None).unwrap();
        let y2 = g.linear(x, v, None).unwrap();
        let y = g.add(y1, y2).unwrap();
        let s = g.sum(y);
        g.backward(s).unwrap();
        assert!(g.grad(w).is_none());
        assert_eq!(g.grad(v).unwrap().data(), &[1.0, 2.0]);
    }
}
