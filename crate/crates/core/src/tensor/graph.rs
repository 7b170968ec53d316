use rand::Rng;

use super::kernels::{self, ConvGeom};
use super::{Mode, Scalar, Tensor};
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Batch-norm running statistics; updated by train-mode forward passes.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
    pub momentum: f64,
    pub eps: f64,
}

impl<T: Scalar> RunningStats<T> {
    pub const MOMENTUM: f64 = 0.1;
    pub const EPS: f64 = 1e-5;

    pub fn new(channels: usize) -> Self {
        Self {
            mean: vec![T::zero(); channels],
            var: vec![T::one(); channels],
            momentum: Self::MOMENTUM,
            eps: Self::EPS,
        }
    }
}

enum Op<T> {
    Leaf,
    Conv2d {
        x: Var,
        w: Var,
        b: Var,
        geom: ConvGeom,
    },
    Relu {
        x: Var,
    },
    AvgPool2d {
        x: Var,
        window: (usize, usize),
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<T>,
        inv_std: Vec<T>,
        batch_stats: bool,
    },
    Linear {
        x: Var,
        w: Var,
        b: Var,
    },
    Dropout {
        x: Var,
        mask: Vec<T>,
    },
    SoftmaxCrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<T>,
    },
    L1 {
        params: Vec<Var>,
        lambda: T,
    },
    Concat {
        inputs: Vec<Var>,
        axis: usize,
    },
    Reshape {
        x: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Mul {
        a: Var,
        b: Var,
    },
    Sum {
        x: Var,
    },
    Scale {
        x: Var,
        factor: T,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Execution tape. Nodes are appended in evaluation order, so the node
/// list is already topologically sorted and backward walks it in reverse.
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Registers a leaf. Gradients are tracked iff `t.requires_grad()`.
    pub fn input(&mut self, t: Tensor<T>) -> Var {
        let requires_grad = t.requires_grad();
        self.push(t, Op::Leaf, requires_grad)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Accumulated gradient of a leaf after [`Graph::backward`].
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].value.grad()
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.value.zero_grad();
        }
    }

    /// Sign pattern of every ReLU input, in graph order. Two evaluations
    /// with equal patterns are on the same smooth piece of the network.
    pub fn relu_pattern(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for n in &self.nodes {
            if let Op::Relu { x } = n.op {
                out.extend(self.nodes[x.0].value.data().iter().map(|&v| v > T::zero()));
            }
        }
        out
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn data(&self, v: Var) -> &[T] {
        self.nodes[v.0].value.data()
    }

    /// Valid (unpadded) 2-D cross-correlation plus per-channel bias.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: (usize, usize)) -> Result<Var> {
        let (xs, ws, bs) = (self.shape(x), self.shape(w), self.shape(b));
        if xs.len() != 4 || ws.len() != 4 {
            return Err(Error::dim(
                "conv2d",
                format!("expected rank-4 input and weight, got {xs:?} and {ws:?}"),
            ));
        }
        if xs[1] != ws[1] {
            return Err(Error::dim(
                "conv2d",
                format!("input channels of x {xs:?} do not match weight {ws:?}"),
            ));
        }
        if bs != [ws[0]] {
            return Err(Error::dim(
                "conv2d",
                format!("bias {bs:?} does not match weight {ws:?}"),
            ));
        }
        if ws[2] > xs[2] || ws[3] > xs[3] {
            return Err(Error::dim(
                "conv2d",
                format!("kernel {ws:?} larger than input {xs:?}"),
            ));
        }
        if stride.0 == 0 || stride.1 == 0 {
            return Err(Error::dim("conv2d", "stride must be >= 1"));
        }
        let geom = ConvGeom {
            batch: xs[0],
            cin: xs[1],
            h: xs[2],
            w: xs[3],
            cout: ws[0],
            kh: ws[2],
            kw: ws[3],
            sh: stride.0,
            sw: stride.1,
            ho: (xs[2] - ws[2]) / stride.0 + 1,
            wo: (xs[3] - ws[3]) / stride.1 + 1,
        };
        let out = kernels::conv2d_forward(self.data(x), self.data(w), self.data(b), &geom);
        let t = Tensor::new(vec![geom.batch, geom.cout, geom.ho, geom.wo], out)?;
        let rg = self.rg(&[x, w, b]);
        Ok(self.push(t, Op::Conv2d { x, w, b, geom }, rg))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let src = self.value(x);
        let data = src.data().iter().map(|&v| v.max(T::zero())).collect();
        let t = Tensor::new(src.shape().to_vec(), data).expect("same shape");
        let rg = self.rg(&[x]);
        self.push(t, Op::Relu { x }, rg)
    }

    /// Non-overlapping average pooling over the last two axes; trailing
    /// remainders that do not fill a window are dropped.
    pub fn avg_pool2d(&mut self, x: Var, window: (usize, usize)) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 4 {
            return Err(Error::dim(
                "avg_pool2d",
                format!("expected rank-4 input, got {s:?}"),
            ));
        }
        if window.0 == 0 || window.1 == 0 || window.0 > s[2] || window.1 > s[3] {
            return Err(Error::dim(
                "avg_pool2d",
                format!("window {window:?} does not fit input {s:?}"),
            ));
        }
        let out = kernels::avgpool_forward(self.data(x), s[0] * s[1], (s[2], s[3]), window);
        let t = Tensor::new(vec![s[0], s[1], s[2] / window.0, s[3] / window.1], out)?;
        let rg = self.rg(&[x]);
        Ok(self.push(t, Op::AvgPool2d { x, window }, rg))
    }

    /// Batch normalization over axis 1 of a rank-4 tensor.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        stats: &mut RunningStats<T>,
        mode: Mode,
    ) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 4 {
            return Err(Error::dim(
                "batch_norm",
                format!("expected rank-4 input, got {s:?}"),
            ));
        }
        let (batch, channels, spatial) = (s[0], s[1], s[2] * s[3]);
        if self.shape(gamma) != [channels] || self.shape(beta) != [channels] {
            return Err(Error::dim(
                "batch_norm",
                format!(
                    "gamma {:?} / beta {:?} do not match {channels} channels",
                    self.shape(gamma),
                    self.shape(beta)
                ),
            ));
        }
        if stats.mean.len() != channels {
            return Err(Error::dim(
                "batch_norm",
                format!(
                    "running stats hold {} channels, input has {channels}",
                    stats.mean.len()
                ),
            ));
        }
        let (mean, var): (Vec<f64>, Vec<f64>) = match mode {
            Mode::Train => {
                let n = batch * spatial;
                if n < 2 {
                    return Err(Error::dim(
                        "batch_norm",
                        format!("train mode needs >= 2 values per channel, got {n}"),
                    ));
                }
                let (mean, var) = kernels::channel_moments(self.data(x), batch, channels, spatial);
                let m = stats.momentum;
                let unbias = n as f64 / (n as f64 - 1.0);
                for c in 0..channels {
                    let rm = (1.0 - m) * stats.mean[c].as_f64() + m * mean[c];
                    let rv = (1.0 - m) * stats.var[c].as_f64() + m * var[c] * unbias;
                    stats.mean[c] = T::from_f64_lossy(rm);
                    stats.var[c] = T::from_f64_lossy(rv);
                }
                (mean, var)
            }
            Mode::Eval => (
                stats.mean.iter().map(|v| v.as_f64()).collect(),
                stats.var.iter().map(|v| v.as_f64()).collect(),
            ),
        };
        let inv_std: Vec<T> = var
            .iter()
            .map(|&v| T::from_f64_lossy(1.0 / (v + stats.eps).sqrt()))
            .collect();
        let mean_t: Vec<T> = mean.iter().map(|&m| T::from_f64_lossy(m)).collect();
        let xd = self.data(x);
        let (g, bt) = (self.data(gamma), self.data(beta));
        let mut xhat = vec![T::zero(); xd.len()];
        let mut out = vec![T::zero(); xd.len()];
        for b in 0..batch {
            for c in 0..channels {
                let off = (b * channels + c) * spatial;
                for k in off..off + spatial {
                    let h = (xd[k] - mean_t[c]) * inv_std[c];
                    xhat[k] = h;
                    out[k] = g[c] * h + bt[c];
                }
            }
        }
        let t = Tensor::new(s, out)?;
        let rg = self.rg(&[x, gamma, beta]);
        Ok(self.push(
            t,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats: mode == Mode::Train,
            },
            rg,
        ))
    }

    /// `x[B, F] @ w[F, H] + b[H]`
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xs, ws, bs) = (self.shape(x), self.shape(w), self.shape(b));
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[0] || bs != [ws[1]] {
            return Err(Error::dim(
                "linear",
                format!("input {xs:?} incompatible with weight {ws:?} and bias {bs:?}"),
            ));
        }
        let (batch, fin, fout) = (xs[0], xs[1], ws[1]);
        let out =
            kernels::linear_forward(self.data(x), self.data(w), self.data(b), batch, fin, fout);
        let t = Tensor::new(vec![batch, fout], out)?;
        let rg = self.rg(&[x, w, b]);
        Ok(self.push(t, Op::Linear { x, w, b }, rg))
    }

    /// Inverted dropout: survivors are scaled by `1 / (1 - rate)`.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        x: Var,
        rate: f64,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!(
                "dropout rate {rate} must lie in [0, 1)"
            )));
        }
        if mode == Mode::Eval || rate == 0.0 {
            return Ok(x);
        }
        let keep = T::from_f64_lossy(1.0 / (1.0 - rate));
        let src = self.value(x);
        let mask: Vec<T> = (0..src.numel())
            .map(|_| {
                if rng.random::<f64>() < rate {
                    T::zero()
                } else {
                    keep
                }
            })
            .collect();
        let data = src.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let t = Tensor::new(src.shape().to_vec(), data)?;
        let rg = self.rg(&[x]);
        Ok(self.push(t, Op::Dropout { x, mask }, rg))
    }

    /// Mean negative log-likelihood of `labels` under `softmax(logits)`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let s = self.shape(logits);
        if s.len() != 2 || s[0] != labels.len() {
            return Err(Error::dim(
                "softmax_cross_entropy",
                format!("logits {s:?} vs {} labels", labels.len()),
            ));
        }
        let (batch, k) = (s[0], s[1]);
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::LabelOutOfRange {
                label: bad,
                classes: k,
            });
        }
        let z = self.data(logits);
        let probs = softmax_rows(z, k);
        let mut total = 0.0f64;
        for (b, &label) in labels.iter().enumerate() {
            let row = &z[b * k..(b + 1) * k];
            let m = row.iter().fold(f64::NEG_INFINITY, |a, v| a.max(v.as_f64()));
            let lse = m + row.iter().map(|v| (v.as_f64() - m).exp()).sum::<f64>().ln();
            total += lse - row[label].as_f64();
        }
        let t = Tensor::scalar(T::from_f64_lossy(total / batch as f64));
        let rg = self.rg(&[logits]);
        Ok(self.push(
            t,
            Op::SoftmaxCrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            rg,
        ))
    }

    /// `lambda * sum(|theta|)` over every element of `params`.
    pub fn l1_penalty(&mut self, params: &[Var], lambda: f64) -> Result<Var> {
        if lambda < 0.0 || !lambda.is_finite() {
            return Err(Error::Config(format!(
                "L1 coefficient {lambda} must be >= 0"
            )));
        }
        let total: f64 = params
            .iter()
            .map(|&p| self.data(p).iter().map(|v| v.as_f64().abs()).sum::<f64>())
            .sum();
        let t = Tensor::scalar(T::from_f64_lossy(lambda * total));
        let rg = self.rg(params);
        Ok(self.push(
            t,
            Op::L1 {
                params: params.to_vec(),
                lambda: T::from_f64_lossy(lambda),
            },
            rg,
        ))
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = inputs
            .first()
            .ok_or_else(|| Error::dim("concat", "no inputs"))?;
        if inputs.len() == 1 {
            return Ok(*first);
        }
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(Error::dim(
                "concat",
                format!("axis {axis} out of range for {base:?}"),
            ));
        }
        let mut total = 0;
        for &v in inputs {
            let s = self.shape(v);
            let compatible = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(d, (a, b))| d == axis || a == b);
            if !compatible {
                return Err(Error::dim(
                    "concat",
                    format!("shape {s:?} incompatible with {base:?} along axis {axis}"),
                ));
            }
            total += s[axis];
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &v in inputs {
                let block = self.shape(v)[axis] * inner;
                data.extend_from_slice(&self.data(v)[o * block..(o + 1) * block]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let t = Tensor::new(shape, data)?;
        let rg = self.rg(inputs);
        Ok(self.push(
            t,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            rg,
        ))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).reshaped(shape)?;
        let rg = self.rg(&[x]);
        Ok(self.push(t, Op::Reshape { x }, rg))
    }

    /// Collapses every axis after the first.
    pub fn flatten(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x);
        let rest: usize = s[1..].iter().product();
        let b = s[0];
        self.reshape(x, &[b, rest])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, "add", |x, y| x + y).map(|t| {
            let rg = self.rg(&[a, b]);
            self.push(t, Op::Add { a, b }, rg)
        })
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, "mul", |x, y| x * y).map(|t| {
            let rg = self.rg(&[a, b]);
            self.push(t, Op::Mul { a, b }, rg)
        })
    }

    fn elementwise(
        &self,
        a: Var,
        b: Var,
        op: &'static str,
        f: impl Fn(T, T) -> T,
    ) -> Result<Tensor<T>> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim(
                op,
                format!("shapes {:?} and {:?} differ", self.shape(a), self.shape(b)),
            ));
        }
        let data = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::new(self.shape(a).to_vec(), data)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s: f64 = self.data(x).iter().map(|v| v.as_f64()).sum();
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(T::from_f64_lossy(s)), Op::Sum { x }, rg)
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let f = T::from_f64_lossy(factor);
        let src = self.value(x);
        let t = Tensor::new(
            src.shape().to_vec(),
            src.data().iter().map(|&v| v * f).collect(),
        )
        .expect("same shape");
        let rg = self.rg(&[x]);
        self.push(t, Op::Scale { x, factor: f }, rg)
    }

    /// Reverse sweep from a scalar `loss`. Leaf gradients accumulate, so a
    /// second call without [`Graph::zero_grad`] sums into the first.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let ls = self.shape(loss);
        if ls.iter().product::<usize>() != 1 {
            return Err(Error::NotScalar(ls.to_vec()));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);

        for i in (0..=loss.0).rev() {
            let Some(gy) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            if let Op::Leaf = self.nodes[i].op {
                self.nodes[i].value.accumulate_grad(&gy);
                continue;
            }
            for (v, g) in self.node_backward(i, &gy) {
                if !self.nodes[v.0].requires_grad {
                    continue;
                }
                match &mut grads[v.0] {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, &d)| *a += d),
                    slot @ None => *slot = Some(g),
                }
            }
        }
        Ok(())
    }

    /// Gradients flowing from node `i` into its inputs.
    fn node_backward(&self, i: usize, gy: &[T]) -> Vec<(Var, Vec<T>)> {
        let node = &self.nodes[i];
        let needs = |v: Var| self.nodes[v.0].requires_grad;
        match &node.op {
            Op::Leaf => Vec::new(),
            Op::Conv2d { x, w, b, geom } => {
                let g = kernels::conv2d_backward(self.data(*x), self.data(*w), gy, geom, needs(*x));
                let mut out = vec![(*w, g.dw), (*b, g.db)];
                if let Some(dx) = g.dx {
                    out.push((*x, dx));
                }
                out
            }
            Op::Relu { x } => {
                let dx = self
                    .data(*x)
                    .iter()
                    .zip(gy)
                    .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
                    .collect();
                vec![(*x, dx)]
            }
            Op::AvgPool2d { x, window } => {
                let s = self.shape(*x);
                vec![(
                    *x,
                    kernels::avgpool_backward(gy, s[0] * s[1], (s[2], s[3]), *window),
                )]
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            } => {
                let s = self.shape(*x);
                let (batch, channels, spatial) = (s[0], s[1], s[2] * s[3]);
                let g = self.data(*gamma);
                if *batch_stats {
                    let (dx, dg, db) =
                        kernels::batchnorm_train_backward(gy, xhat, g, inv_std, batch, spatial);
                    vec![(*x, dx), (*gamma, dg), (*beta, db)]
                } else {
                    let mut dx = vec![T::zero(); gy.len()];
                    let mut dg = vec![T::zero(); channels];
                    let mut db = vec![T::zero(); channels];
                    for b in 0..batch {
                        for c in 0..channels {
                            let off = (b * channels + c) * spatial;
                            for k in off..off + spatial {
                                dx[k] = gy[k] * g[c] * inv_std[c];
                                dg[c] += gy[k] * xhat[k];
                                db[c] += gy[k];
                            }
                        }
                    }
                    vec![(*x, dx), (*gamma, dg), (*beta, db)]
                }
            }
            Op::Linear { x, w, b } => {
                let s = self.shape(*x);
                let fout = self.shape(*w)[1];
                let (dx, dw, db) = kernels::linear_backward(
                    self.data(*x),
                    self.data(*w),
                    gy,
                    s[0],
                    s[1],
                    fout,
                    needs(*x),
                );
                let mut out = vec![(*w, dw), (*b, db)];
                if let Some(dx) = dx {
                    out.push((*x, dx));
                }
                out
            }
            Op::Dropout { x, mask } => {
                vec![(*x, gy.iter().zip(mask).map(|(&g, &m)| g * m).collect())]
            }
            Op::SoftmaxCrossEntropy {
                logits,
                labels,
                probs,
            } => {
                let k = self.shape(*logits)[1];
                let scale = gy[0] / T::from_usize(labels.len()).unwrap();
                let mut d: Vec<T> = probs.iter().map(|&p| p * scale).collect();
                for (b, &l) in labels.iter().enumerate() {
                    d[b * k + l] -= scale;
                }
                vec![(*logits, d)]
            }
            Op::L1 { params, lambda } => {
                let s = gy[0] * *lambda;
                params
                    .iter()
                    .map(|&p| {
                        let d = self
                            .data(p)
                            .iter()
                            .map(|&v| {
                                if v > T::zero() {
                                    s
                                } else if v < T::zero() {
                                    -s
                                } else {
                                    T::zero()
                                }
                            })
                            .collect();
                        (p, d)
                    })
                    .collect()
            }
            Op::Concat { inputs, axis } => {
                let base = self.shape(inputs[0]);
                let outer: usize = base[..*axis].iter().product();
                let inner: usize = base[*axis + 1..].iter().product();
                let total: usize = inputs.iter().map(|&v| self.shape(v)[*axis]).sum();
                let mut out = Vec::with_capacity(inputs.len());
                let mut offset = 0;
                for &v in inputs {
                    let block = self.shape(v)[*axis] * inner;
                    let mut d = Vec::with_capacity(outer * block);
                    for o in 0..outer {
                        let start = o * total * inner + offset;
                        d.extend_from_slice(&gy[start..start + block]);
                    }
                    offset += block;
                    out.push((v, d));
                }
                out
            }
            Op::Reshape { x } => vec![(*x, gy.to_vec())],
            Op::Add { a, b } => vec![(*a, gy.to_vec()), (*b, gy.to_vec())],
            Op::Mul { a, b } => {
                let da = gy.iter().zip(self.data(*b)).map(|(&g, &v)| g * v).collect();
                let db = gy.iter().zip(self.data(*a)).map(|(&g, &v)| g * v).collect();
                vec![(*a, da), (*b, db)]
            }
            Op::Sum { x } => vec![(*x, vec![gy[0]; self.value(*x).numel()])],
            Op::Scale { x, factor } => vec![(*x, gy.iter().map(|&g| g * *factor).collect())],
        }
    }
}

/// Row-wise softmax of a `[rows, k]` slice with max subtraction.
pub fn softmax_rows<T: Scalar>(z: &[T], k: usize) -> Vec<T> {
    let mut out = vec![T::zero(); z.len()];
    for (row, orow) in z.chunks(k).zip(out.chunks_mut(k)) {
        let m = row.iter().fold(f64::NEG_INFINITY, |a, v| a.max(v.as_f64()));
        let e: Vec<f64> = row.iter().map(|v| (v.as_f64() - m).exp()).collect();
        let s: f64 = e.iter().sum();
        for (o, v) in orow.iter_mut().zip(e) {
            *o = T::from_f64_lossy(v / s);
        }
    }
    out
}
