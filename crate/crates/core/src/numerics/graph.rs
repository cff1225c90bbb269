//! Tape-based reverse-mode automatic differentiation.
//!
//! Nodes are appended in evaluation order, so the tape is topologically sorted
//! by construction and the backward sweep is a single reverse pass.

use std::collections::BTreeMap;
use std::fmt;

use super::kernels::{self, ConvGeometry};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A differentiable operation defined outside this module.
///
/// `backward` receives the values of the inputs, the forward output and the
/// incoming gradient, and returns one optional gradient per input.
pub trait CustomOp: Send + Sync {
    fn name(&self) -> &'static str;
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad: &Tensor) -> Result<Vec<Option<Tensor>>>;
}

enum Op {
    Leaf,
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeometry,
    },
    ConvTranspose2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Tensor,
        inv_std: Vec<f64>,
        train: bool,
    },
    LeakyRelu {
        x: Var,
        slope: f64,
    },
    Sigmoid {
        x: Var,
    },
    GlobalAvgPool {
        x: Var,
    },
    Dense {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    MaxPool2 {
        x: Var,
        argmax: Vec<usize>,
    },
    Add {
        a: Var,
        b: Var,
    },
    Scale {
        x: Var,
        factor: f64,
    },
    Mul {
        a: Var,
        b: Var,
    },
    ChannelGate {
        x: Var,
        gate: Var,
    },
    ChannelAffine {
        x: Var,
        scale: Var,
        shift: Var,
    },
    Concat {
        a: Var,
        b: Var,
    },
    Sum {
        x: Var,
    },
    L1Loss {
        pred: Var,
        target: Var,
    },
    Custom {
        inputs: Vec<Var>,
        op: Box<dyn CustomOp>,
    },
}

impl Op {
    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::Conv2d { x, w, b, .. }
            | Op::ConvTranspose2d { x, w, b, .. }
            | Op::Dense { x, w, b } => {
                let mut v = vec![*x, *w];
                v.extend(b);
                v
            }
            Op::BatchNorm { x, gamma, beta, .. } => vec![*x, *gamma, *beta],
            Op::LeakyRelu { x, .. }
            | Op::Sigmoid { x }
            | Op::GlobalAvgPool { x }
            | Op::MaxPool2 { x, .. }
            | Op::Scale { x, .. }
            | Op::Sum { x } => vec![*x],
            Op::Add { a, b } | Op::Mul { a, b } | Op::Concat { a, b } => vec![*a, *b],
            Op::ChannelGate { x, gate } => vec![*x, *gate],
            Op::ChannelAffine { x, scale, shift } => vec![*x, *scale, *shift],
            Op::L1Loss { pred, target } => vec![*pred, *target],
            Op::Custom { inputs, .. } => inputs.clone(),
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Conv2d { .. } => "conv2d",
            Op::ConvTranspose2d { .. } => "conv_transpose2d",
            Op::BatchNorm { .. } => "batchnorm",
            Op::LeakyRelu { .. } => "leaky_relu",
            Op::Sigmoid { .. } => "sigmoid",
            Op::GlobalAvgPool { .. } => "global_avg_pool",
            Op::Dense { .. } => "dense",
            Op::MaxPool2 { .. } => "max_pool2",
            Op::Add { .. } => "add",
            Op::Scale { .. } => "scale",
            Op::Mul { .. } => "mul",
            Op::ChannelGate { .. } => "channel_gate",
            Op::ChannelAffine { .. } => "channel_affine",
            Op::Concat { .. } => "concat",
            Op::Sum { .. } => "sum",
            Op::L1Loss { .. } => "l1_loss",
            Op::Custom { op, .. } => op.name(),
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    param: Option<String>,
}

/// Gradients produced by [`Graph::backward`].
pub struct Gradients {
    by_node: Vec<Option<Tensor>>,
    by_name: BTreeMap<String, Tensor>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.by_node.get(v.0).and_then(Option::as_ref)
    }

    /// Gradients of named parameter leaves.
    pub fn named(&self) -> &BTreeMap<String, Tensor> {
        &self.by_name
    }

    pub fn into_named(self) -> BTreeMap<String, Tensor> {
        self.by_name
    }
}

/// Batch statistics reported by a train-mode batch-norm node.
#[derive(Clone, Debug)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Biased variance over batch and space.
    pub var: Vec<f64>,
    /// Elements per channel.
    pub count: usize,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl fmt::Debug for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Graph").field("nodes", &self.nodes.len()).finish()
    }
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

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let requires_grad = op.inputs().iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            param: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// A constant leaf; never receives a gradient.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: false,
            param: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// A named trainable leaf.
    pub fn param(&mut self, name: impl Into<String>, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: true,
            param: Some(name.into()),
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, padding: usize) -> Result<Var> {
        let geom = ConvGeometry { stride, padding };
        let out = kernels::conv2d(self.value(x), self.value(w), b.map(|b| self.value(b)), geom)?;
        Ok(self.push(out, Op::Conv2d { x, w, b, geom }))
    }

    pub fn conv_transpose2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize) -> Result<Var> {
        let out = kernels::conv_transpose2d(self.value(x), self.value(w), b.map(|b| self.value(b)), stride)?;
        Ok(self.push(out, Op::ConvTranspose2d { x, w, b, stride }))
    }

    /// Batch normalisation. In train mode the batch statistics are returned so
    /// the caller can update its running estimates; in eval mode `running`
    /// must hold `(mean, var)`.
    pub fn batchnorm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running: Option<(&[f64], &[f64])>,
        eps: f64,
    ) -> Result<(Var, Option<BatchStats>)> {
        let train = running.is_none();
        let (b, _, h, w) = self.value(x).dims4()?;
        if train && b * h * w < 2 {
            return Err(Error::Config(
                "batchnorm in train mode needs at least two values per channel".into(),
            ));
        }
        let fwd = kernels::batchnorm(self.value(x), self.value(gamma), self.value(beta), running, eps)?;
        let stats = train.then(|| BatchStats {
            mean: fwd.batch_mean.clone(),
            var: fwd.batch_var.clone(),
            count: b * h * w,
        });
        let v = self.push(
            fwd.output,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat: fwd.xhat,
                inv_std: fwd.inv_std,
                train,
            },
        );
        Ok((v, stats))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let out = self.value(x).map(|v| if v >= 0.0 { v } else { slope * v });
        self.push(out, Op::LeakyRelu { x, slope })
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(sigmoid);
        self.push(out, Op::Sigmoid { x })
    }

    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let (b, c, h, w) = t.dims4()?;
        let plane = h * w;
        let out: Vec<f64> = t
            .data()
            .chunks(plane)
            .map(|p| p.iter().sum::<f64>() / plane as f64)
            .collect();
        let out = Tensor::new(vec![b, c], out)?;
        Ok(self.push(out, Op::GlobalAvgPool { x }))
    }

    pub fn dense(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let out = kernels::dense(self.value(x), self.value(w), b.map(|b| self.value(b)))?;
        Ok(self.push(out, Op::Dense { x, w, b }))
    }

    pub fn max_pool2(&mut self, x: Var) -> Result<Var> {
        let (out, argmax) = kernels::max_pool2(self.value(x))?;
        Ok(self.push(out, Op::MaxPool2 { x, argmax }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::shape("add", format!("{:?} vs {:?}", ta.shape(), tb.shape())));
        }
        let mut out = ta.clone();
        out.add_assign(tb);
        Ok(self.push(out, Op::Add { a, b }))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let out = self.value(x).map(|v| v * factor);
        self.push(out, Op::Scale { x, factor })
    }

    /// Elementwise product of equal-shape tensors.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::shape("mul", format!("{:?} vs {:?}", ta.shape(), tb.shape())));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push(out, Op::Mul { a, b }))
    }

    /// `x[b, c, :, :] * gate[b, c]`.
    pub fn channel_gate(&mut self, x: Var, gate: Var) -> Result<Var> {
        let (b, c, h, w) = self.value(x).dims4()?;
        if self.value(gate).shape() != [b, c] {
            return Err(Error::shape(
                "channel_gate",
                format!("gate {:?} for input {:?}", self.value(gate).shape(), [b, c, h, w]),
            ));
        }
        let g = self.value(gate).data();
        let mut out = self.value(x).clone();
        for (p, chunk) in out.data_mut().chunks_mut(h * w).enumerate() {
            chunk.iter_mut().for_each(|v| *v *= g[p]);
        }
        Ok(self.push(out, Op::ChannelGate { x, gate }))
    }

    /// `x[b, c] * scale[c] + shift[c]`.
    pub fn channel_affine(&mut self, x: Var, scale: Var, shift: Var) -> Result<Var> {
        let (_, c, h, w) = self.value(x).dims4()?;
        if self.value(scale).numel() != c || self.value(shift).numel() != c {
            return Err(Error::shape("channel_affine", format!("{c} channels")));
        }
        let (s, t) = (self.value(scale).data(), self.value(shift).data());
        let mut out = self.value(x).clone();
        for (p, chunk) in out.data_mut().chunks_mut(h * w).enumerate() {
            let ci = p % c;
            chunk.iter_mut().for_each(|v| *v = *v * s[ci] + t[ci]);
        }
        Ok(self.push(out, Op::ChannelAffine { x, scale, shift }))
    }

    /// Channel concatenation of two rank-4 tensors.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ba, ca, h, w) = self.value(a).dims4()?;
        let (bb, cb, hb, wb) = self.value(b).dims4()?;
        if ba != bb || h != hb || w != wb {
            return Err(Error::shape(
                "concat",
                format!("{:?} vs {:?}", self.value(a).shape(), self.value(b).shape()),
            ));
        }
        let plane = h * w;
        let mut out = Vec::with_capacity(ba * (ca + cb) * plane);
        for bi in 0..ba {
            out.extend_from_slice(&self.value(a).data()[bi * ca * plane..(bi + 1) * ca * plane]);
            out.extend_from_slice(&self.value(b).data()[bi * cb * plane..(bi + 1) * cb * plane]);
        }
        let out = Tensor::new(vec![ba, ca + cb, h, w], out)?;
        Ok(self.push(out, Op::Concat { a, b }))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let out = Tensor::scalar(self.value(x).sum());
        self.push(out, Op::Sum { x })
    }

    /// Mean absolute difference.
    pub fn l1_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        let (p, t) = (self.value(pred), self.value(target));
        if p.shape() != t.shape() {
            return Err(Error::shape("l1_loss", format!("{:?} vs {:?}", p.shape(), t.shape())));
        }
        let loss = p.data().iter().zip(t.data()).map(|(a, b)| (a - b).abs()).sum::<f64>() / p.numel() as f64;
        Ok(self.push(Tensor::scalar(loss), Op::L1Loss { pred, target }))
    }

    /// Records the result of an externally computed operation.
    pub fn custom(&mut self, inputs: Vec<Var>, output: Tensor, op: Box<dyn CustomOp>) -> Var {
        self.push(output, Op::Custom { inputs, op })
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let root = &self.nodes[loss.0];
        if root.value.numel() != 1 {
            return Err(Error::shape(
                "backward",
                format!("loss must be scalar, got {:?}", root.value.shape()),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::ones(root.value.shape()));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            for input in node.op.inputs() {
                if input.0 >= idx {
                    return Err(Error::Numeric(format!(
                        "tape corrupt: {} node {idx} reads node {}",
                        node.op.kind(),
                        input.0
                    )));
                }
            }
            let contributions = self.adjoint(node, &g)?;
            for (v, t) in contributions {
                if !self.nodes[v.0].requires_grad {
                    continue;
                }
                match &mut grads[v.0] {
                    Some(acc) => acc.add_assign(&t),
                    slot @ None => *slot = Some(t),
                }
            }
            // keep the gradient of intermediate nodes available to callers
            grads[idx] = Some(g);
        }

        let by_name = self
            .nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| {
                let name = n.param.as_ref()?;
                let g = grads[i].clone().unwrap_or_else(|| Tensor::zeros(n.value.shape()));
                Some((name.clone(), g))
            })
            .collect();
        Ok(Gradients {
            by_node: grads,
            by_name,
        })
    }

    fn adjoint(&self, node: &Node, g: &Tensor) -> Result<Vec<(Var, Tensor)>> {
        let val = |v: Var| &self.nodes[v.0].value;
        let needs = |v: Var| self.nodes[v.0].requires_grad;
        let mut out = Vec::new();
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { x, w, b, geom } => {
                let (_, _, h, wd) = val(*x).dims4()?;
                let (_, _, kh, kw) = val(*w).dims4()?;
                if needs(*x) {
                    out.push((*x, kernels::conv2d_grad_input(g, val(*w), (h, wd), *geom)?));
                }
                if needs(*w) {
                    out.push((*w, kernels::conv2d_grad_weight(g, val(*x), (kh, kw), *geom)?));
                }
                if let Some(b) = b.filter(|b| needs(*b)) {
                    out.push((b, Tensor::new(val(b).shape().to_vec(), kernels::channel_sums(g)?)?));
                }
            }
            Op::ConvTranspose2d { x, w, b, stride } => {
                let geom = ConvGeometry {
                    stride: *stride,
                    padding: 0,
                };
                let (_, _, kh, kw) = val(*w).dims4()?;
                if needs(*x) {
                    out.push((*x, kernels::conv2d(g, val(*w), None, geom)?));
                }
                if needs(*w) {
                    out.push((*w, kernels::conv2d_grad_weight(val(*x), g, (kh, kw), geom)?));
                }
                if let Some(b) = b.filter(|b| needs(*b)) {
                    out.push((b, Tensor::new(val(b).shape().to_vec(), kernels::channel_sums(g)?)?));
                }
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                train,
            } => {
                if needs(*x) {
                    out.push((
                        *x,
                        kernels::batchnorm_grad_input(g, xhat, val(*gamma), inv_std, *train)?,
                    ));
                }
                if needs(*gamma) {
                    let gx = Tensor::new(
                        g.shape().to_vec(),
                        g.data().iter().zip(xhat.data()).map(|(a, b)| a * b).collect(),
                    )?;
                    out.push((*gamma, Tensor::new(val(*gamma).shape().to_vec(), kernels::channel_sums(&gx)?)?));
                }
                if needs(*beta) {
                    out.push((*beta, Tensor::new(val(*beta).shape().to_vec(), kernels::channel_sums(g)?)?));
                }
            }
            Op::LeakyRelu { x, slope } => {
                let xs = val(*x).data();
                let data = g
                    .data()
                    .iter()
                    .zip(xs)
                    .map(|(gv, xv)| if *xv >= 0.0 { *gv } else { slope * gv })
                    .collect();
                out.push((*x, Tensor::new(g.shape().to_vec(), data)?));
            }
            Op::Sigmoid { x } => {
                let data = g
                    .data()
                    .iter()
                    .zip(node.value.data())
                    .map(|(gv, s)| gv * s * (1.0 - s))
                    .collect();
                out.push((*x, Tensor::new(g.shape().to_vec(), data)?));
            }
            Op::GlobalAvgPool { x } => {
                let (b, c, h, w) = val(*x).dims4()?;
                let plane = h * w;
                let mut data = Vec::with_capacity(b * c * plane);
                for p in 0..b * c {
                    data.extend(std::iter::repeat(g.data()[p] / plane as f64).take(plane));
                }
                out.push((*x, Tensor::new(vec![b, c, h, w], data)?));
            }
            Op::Dense { x, w, b } => {
                let (bsz, cin) = val(*x).dims2()?;
                let (cout, _) = val(*w).dims2()?;
                let (xd, wd, gd) = (val(*x).data(), val(*w).data(), g.data());
                if needs(*x) {
                    let mut gx = vec![0.0; bsz * cin];
                    for bi in 0..bsz {
                        for o in 0..cout {
                            let go = gd[bi * cout + o];
                            for i in 0..cin {
                                gx[bi * cin + i] += go * wd[o * cin + i];
                            }
                        }
                    }
                    out.push((*x, Tensor::new(vec![bsz, cin], gx)?));
                }
                if needs(*w) {
                    let mut gw = vec![0.0; cout * cin];
                    for bi in 0..bsz {
                        for o in 0..cout {
                            let go = gd[bi * cout + o];
                            for i in 0..cin {
                                gw[o * cin + i] += go * xd[bi * cin + i];
                            }
                        }
                    }
                    out.push((*w, Tensor::new(vec![cout, cin], gw)?));
                }
                if let Some(b) = b.filter(|b| needs(*b)) {
                    let mut gb = vec![0.0; cout];
                    for bi in 0..bsz {
                        for o in 0..cout {
                            gb[o] += gd[bi * cout + o];
                        }
                    }
                    out.push((b, Tensor::new(val(b).shape().to_vec(), gb)?));
                }
            }
            Op::MaxPool2 { x, argmax } => {
                let mut gx = Tensor::zeros(val(*x).shape());
                let d = gx.data_mut();
                for (gv, &i) in g.data().iter().zip(argmax) {
                    d[i] += gv;
                }
                out.push((*x, gx));
            }
            Op::Add { a, b } => {
                out.push((*a, g.clone()));
                out.push((*b, g.clone()));
            }
            Op::Scale { x, factor } => out.push((*x, g.map(|v| v * factor))),
            Op::Mul { a, b } => {
                let prod = |t: &Tensor| {
                    let data = g.data().iter().zip(t.data()).map(|(x, y)| x * y).collect();
                    Tensor::new(g.shape().to_vec(), data)
                };
                if needs(*a) {
                    out.push((*a, prod(val(*b))?));
                }
                if needs(*b) {
                    out.push((*b, prod(val(*a))?));
                }
            }
            Op::ChannelGate { x, gate } => {
                let (b, c, h, w) = val(*x).dims4()?;
                let plane = h * w;
                let gt = val(*gate).data();
                if needs(*x) {
                    let mut gx = g.clone();
                    for (p, chunk) in gx.data_mut().chunks_mut(plane).enumerate() {
                        chunk.iter_mut().for_each(|v| *v *= gt[p]);
                    }
                    out.push((*x, gx));
                }
                if needs(*gate) {
                    let xd = val(*x).data();
                    let gg = (0..b * c)
                        .map(|p| {
                            g.data()[p * plane..(p + 1) * plane]
                                .iter()
                                .zip(&xd[p * plane..(p + 1) * plane])
                                .map(|(a, b)| a * b)
                                .sum()
                        })
                        .collect();
                    out.push((*gate, Tensor::new(vec![b, c], gg)?));
                }
            }
            Op::ChannelAffine { x, scale, shift } => {
                let (b, c, h, w) = val(*x).dims4()?;
                let plane = h * w;
                let s = val(*scale).data();
                if needs(*x) {
                    let mut gx = g.clone();
                    for (p, chunk) in gx.data_mut().chunks_mut(plane).enumerate() {
                        chunk.iter_mut().for_each(|v| *v *= s[p % c]);
                    }
                    out.push((*x, gx));
                }
                if needs(*scale) {
                    let xd = val(*x).data();
                    let mut gs = vec![0.0; c];
                    for p in 0..b * c {
                        gs[p % c] += g.data()[p * plane..(p + 1) * plane]
                            .iter()
                            .zip(&xd[p * plane..(p + 1) * plane])
                            .map(|(a, b)| a * b)
                            .sum::<f64>();
                    }
                    out.push((*scale, Tensor::new(val(*scale).shape().to_vec(), gs)?));
                }
                if needs(*shift) {
                    out.push((*shift, Tensor::new(val(*shift).shape().to_vec(), kernels::channel_sums(g)?)?));
                }
            }
            Op::Concat { a, b } => {
                let (bsz, ca, h, w) = val(*a).dims4()?;
                let (_, cb, _, _) = val(*b).dims4()?;
                let plane = h * w;
                let mut ga = Vec::with_capacity(bsz * ca * plane);
                let mut gb = Vec::with_capacity(bsz * cb * plane);
                for chunk in g.data().chunks((ca + cb) * plane) {
                    ga.extend_from_slice(&chunk[..ca * plane]);
                    gb.extend_from_slice(&chunk[ca * plane..]);
                }
                out.push((*a, Tensor::new(vec![bsz, ca, h, w], ga)?));
                out.push((*b, Tensor::new(vec![bsz, cb, h, w], gb)?));
            }
            Op::Sum { x } => out.push((*x, Tensor::full(val(*x).shape(), g.data()[0]))),
            Op::L1Loss { pred, target } => {
                let (p, t) = (val(*pred), val(*target));
                let scale = g.data()[0] / p.numel() as f64;
                let sign: Vec<f64> = p
                    .data()
                    .iter()
                    .zip(t.data())
                    .map(|(a, b)| {
                        let d = a - b;
                        if d > 0.0 {
                            scale
                        } else if d < 0.0 {
                            -scale
                        } else {
                            0.0
                        }
                    })
                    .collect();
                let grad = Tensor::new(p.shape().to_vec(), sign)?;
                out.push((*target, grad.map(|v| -v)));
                out.push((*pred, grad));
            }
            Op::Custom { inputs, op } => {
                let vals: Vec<&Tensor> = inputs.iter().map(|v| val(*v)).collect();
                let grads = op.backward(&vals, &node.value, g)?;
                if grads.len() != inputs.len() {
                    return Err(Error::Numeric(format!(
                        "custom op {} returned {} gradients for {} inputs",
                        op.name(),
                        grads.len(),
                        inputs.len()
                    )));
                }
                for (v, gr) in inputs.iter().zip(grads) {
                    if let Some(gr) = gr {
                        out.push((*v, gr));
                    }
                }
            }
        }
        Ok(out)
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
