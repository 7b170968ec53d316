//! The temporal/spatial convolutional network and its ablations.
//!
//! Input segments are `[batch, 1, channels, samples]` with channels ordered
//! left hemisphere first, then right hemisphere. The temporal learner runs
//! one bank of `(1, w_i)` kernels per scale, pools and concatenates along
//! the feature axis; the spatial learner applies a global `(C, 1)` kernel
//! and a `(C/2, 1)` hemisphere kernel with stride `C/2`, so the same
//! weights see the left block and then the right block.

mod checkpoint;
mod config;

use rand::{Rng, SeedableRng};

use crate::error::{Error, Result};
use crate::tensor::{Graph, Mode, RunningStats, Scalar, Tensor, Var};
use crate::SeededRng;

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC,
};
pub use config::{ModelConfig, VariantKind};

const DROPOUT_SALT: u64 = 0x5eed_d409;

/// A named trainable tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub tensor: Tensor<T>,
}

#[derive(Debug, Clone, Copy)]
struct Affine {
    weight: usize,
    bias: usize,
}

#[derive(Debug, Clone, Copy)]
struct Norm {
    gamma: usize,
    beta: usize,
    stats: usize,
}

#[derive(Debug, Clone)]
struct Layout {
    temporal: Vec<Affine>,
    temporal_bn: Option<Norm>,
    global: Option<Affine>,
    hemisphere: Option<Affine>,
    spatial_bn: Option<Norm>,
    fc1: Affine,
    fc2: Affine,
}

/// Parameters bound into one [`Graph`] for a forward/backward pass.
#[derive(Debug, Clone)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    /// Wraps externally created leaves, one per parameter in model order.
    pub fn from_vars(vars: Vec<Var>) -> Self {
        Self { vars }
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

/// Frozen copy of everything a forward pass depends on.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState<T> {
    params: Vec<Vec<T>>,
    stats: Vec<RunningStats<T>>,
}

#[derive(Debug, Clone)]
pub struct Model<T> {
    kind: VariantKind,
    config: ModelConfig,
    params: Vec<Param<T>>,
    stats: Vec<RunningStats<T>>,
    layout: Layout,
    mode: Mode,
    dropout_rng: SeededRng,
}

struct Builder<T> {
    params: Vec<Param<T>>,
    stats: Vec<RunningStats<T>>,
    rng: SeededRng,
}

impl<T: Scalar> Builder<T> {
    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weight and bias.
    fn affine(&mut self, prefix: &str, wshape: &[usize], fan_in: usize, outputs: usize) -> Affine {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let sample = |shape: &[usize], rng: &mut SeededRng| {
            Tensor::from_fn(shape, |_| {
                T::from_f64_lossy(rng.random_range(-bound..bound))
            })
            .with_grad()
        };
        let w = sample(wshape, &mut self.rng);
        let b = sample(&[outputs], &mut self.rng);
        Affine {
            weight: self.push(format!("{prefix}.weight"), w),
            bias: self.push(format!("{prefix}.bias"), b),
        }
    }

    fn norm(&mut self, prefix: &str, channels: usize) -> Norm {
        let gamma = self.push(
            format!("{prefix}.gamma"),
            Tensor::full(&[channels], T::one()).with_grad(),
        );
        let beta = self.push(
            format!("{prefix}.beta"),
            Tensor::zeros(&[channels]).with_grad(),
        );
        self.stats.push(RunningStats::new(channels));
        Norm {
            gamma,
            beta,
            stats: self.stats.len() - 1,
        }
    }

    fn push(&mut self, name: String, tensor: Tensor<T>) -> usize {
        self.params.push(Param { name, tensor });
        self.params.len() - 1
    }
}

/// Builds one of the three variants with freshly initialized weights.
pub fn build_variant<T: Scalar>(
    kind: VariantKind,
    config: ModelConfig,
    seed: u64,
) -> Result<Model<T>> {
    Model::new(kind, config, seed)
}

impl<T: Scalar> Model<T> {
    pub fn new(kind: VariantKind, config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut b = Builder {
            params: Vec::new(),
            stats: Vec::new(),
            rng: SeededRng::seed_from_u64(seed),
        };
        let c = &config;

        let mut temporal = Vec::new();
        let mut temporal_bn = None;
        if kind.has_temporal() {
            for (i, (_, w)) in c.t_kernel_sizes()?.into_iter().enumerate() {
                temporal.push(b.affine(
                    &format!("temporal.{i}"),
                    &[c.num_t_kernels, 1, 1, w],
                    w,
                    c.num_t_kernels,
                ));
            }
            temporal_bn = Some(b.norm("temporal_bn", c.num_t_kernels));
        }

        let (mut global, mut hemisphere, mut spatial_bn) = (None, None, None);
        if kind.has_spatial() {
            let cin = if kind.has_temporal() {
                c.num_t_kernels
            } else {
                1
            };
            let half = c.num_channels / 2;
            global = Some(b.affine(
                "spatial.global",
                &[c.num_s_kernels, cin, c.num_channels, 1],
                cin * c.num_channels,
                c.num_s_kernels,
            ));
            hemisphere = Some(b.affine(
                "spatial.hemisphere",
                &[c.num_s_kernels, cin, half, 1],
                cin * half,
                c.num_s_kernels,
            ));
            spatial_bn = Some(b.norm("spatial_bn", c.num_s_kernels));
        }

        let flat = c.flatten_len(kind)?;
        let fc1 = b.affine("fc1", &[flat, c.hidden], flat, c.hidden);
        let fc2 = b.affine("fc2", &[c.hidden, c.num_classes], c.hidden, c.num_classes);

        let dropout_rng = SeededRng::seed_from_u64(seed ^ DROPOUT_SALT);
        Ok(Self {
            kind,
            config,
            params: b.params,
            stats: b.stats,
            layout: Layout {
                temporal,
                temporal_bn,
                global,
                hemisphere,
                spatial_bn,
                fc1,
                fc2,
            },
            mode: Mode::Train,
            dropout_rng,
        })
    }

    pub fn kind(&self) -> VariantKind {
        self.kind
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Param<T>> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Param<T>> {
        self.params.iter_mut().find(|p| p.name == name)
    }

    pub fn running_stats(&self) -> &[RunningStats<T>] {
        &self.stats
    }

    pub(crate) fn running_stats_mut(&mut self) -> &mut [RunningStats<T>] {
        &mut self.stats
    }

    /// Total element count of all trainable tensors.
    pub fn count_parameters(&self) -> usize {
        self.params.iter().map(|p| p.tensor.numel()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.tensor.zero_grad();
        }
    }

    pub fn reseed_dropout(&mut self, seed: u64) {
        self.dropout_rng = SeededRng::seed_from_u64(seed);
    }

    pub fn state(&self) -> ModelState<T> {
        ModelState {
            params: self
                .params
                .iter()
                .map(|p| p.tensor.data().to_vec())
                .collect(),
            stats: self.stats.clone(),
        }
    }

    pub fn restore(&mut self, state: &ModelState<T>) {
        for (p, d) in self.params.iter_mut().zip(&state.params) {
            p.tensor.data_mut().copy_from_slice(d);
        }
        self.stats = state.stats.clone();
    }

    /// Inserts every parameter into `g` as a gradient-tracking leaf.
    pub fn bind(&self, g: &mut Graph<T>) -> Bound {
        let vars = self
            .params
            .iter()
            .map(|p| {
                let mut t = Tensor::new(p.tensor.shape().to_vec(), p.tensor.data().to_vec())
                    .expect("parameter shape");
                t.set_requires_grad(p.tensor.requires_grad());
                g.input(t)
            })
            .collect();
        Bound { vars }
    }

    /// Adds the gradients computed in `g` into each parameter's grad.
    pub fn accumulate_grads(&mut self, g: &Graph<T>, bound: &Bound) {
        for (p, &v) in self.params.iter_mut().zip(&bound.vars) {
            if let Some(d) = g.grad(v) {
                p.tensor.accumulate_grad(d);
            }
        }
    }

    fn check_input(&self, g: &Graph<T>, x: Var) -> Result<()> {
        let s = g.shape(x);
        let c = &self.config;
        if s.len() != 4 || s[1] != 1 || s[2] != c.num_channels || s[3] != c.segment_len {
            return Err(Error::dim(
                "model input",
                format!(
                    "expected [batch, 1, {}, {}], got {s:?}",
                    c.num_channels, c.segment_len
                ),
            ));
        }
        Ok(())
    }

    fn norm(&mut self, g: &mut Graph<T>, p: &Bound, x: Var, n: Norm) -> Result<Var> {
        let mode = self.mode;
        g.batch_norm(
            x,
            p.vars[n.gamma],
            p.vars[n.beta],
            &mut self.stats[n.stats],
            mode,
        )
    }

    /// `[B, 1, C, T] -> [B, num_t_kernels, C, F]`
    pub fn temporal_forward(&mut self, g: &mut Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        self.check_input(g, x)?;
        let bn = self
            .layout
            .temporal_bn
            .ok_or_else(|| Error::Config(format!("{} has no temporal learner", self.kind)))?;
        let pool = self.config.t_pool;
        let mut branches = Vec::with_capacity(self.layout.temporal.len());
        for a in self.layout.temporal.clone() {
            let z = g.conv2d(x, p.vars[a.weight], p.vars[a.bias], (1, 1))?;
            let z = g.relu(z);
            branches.push(g.avg_pool2d(z, (1, pool))?);
        }
        let z = g.concat(&branches, 3)?;
        self.norm(g, p, z, bn)
    }

    /// `[B, K, C, F] -> [B, num_s_kernels, 3, F / s_pool]`
    pub fn spatial_forward(&mut self, g: &mut Graph<T>, p: &Bound, z: Var) -> Result<Var> {
        let (Some(global), Some(hemi), Some(bn)) = (
            self.layout.global,
            self.layout.hemisphere,
            self.layout.spatial_bn,
        ) else {
            return Err(Error::Config(format!(
                "{} has no spatial learner",
                self.kind
            )));
        };
        let c = self.config.num_channels;
        let s = g.shape(z);
        if s.len() != 4 || s[2] != c {
            return Err(Error::dim(
                "spatial learner",
                format!("expected {c} electrode rows, got {s:?}"),
            ));
        }
        let pool = self.config.s_pool;
        let zg = g.conv2d(z, p.vars[global.weight], p.vars[global.bias], (1, 1))?;
        let zg = g.relu(zg);
        let zg = g.avg_pool2d(zg, (1, pool))?;
        let zh = g.conv2d(z, p.vars[hemi.weight], p.vars[hemi.bias], (c / 2, 1))?;
        let zh = g.relu(zh);
        let zh = g.avg_pool2d(zh, (1, pool))?;
        let out = g.concat(&[zg, zh], 2)?;
        self.norm(g, p, out, bn)
    }

    /// Flatten, hidden layer with ReLU and dropout, then raw class logits.
    pub fn classifier_forward(&mut self, g: &mut Graph<T>, p: &Bound, z: Var) -> Result<Var> {
        let h = g.flatten(z)?;
        let expected = self.config.flatten_len(self.kind)?;
        if g.shape(h)[1] != expected {
            return Err(Error::dim(
                "classifier",
                format!("flattened width {} != fc1 input {expected}", g.shape(h)[1]),
            ));
        }
        let (fc1, fc2) = (self.layout.fc1, self.layout.fc2);
        let h = g.linear(h, p.vars[fc1.weight], p.vars[fc1.bias])?;
        let h = g.relu(h);
        let (rate, mode) = (self.config.dropout_rate, self.mode);
        let h = g.dropout(h, rate, mode, &mut self.dropout_rng)?;
        g.linear(h, p.vars[fc2.weight], p.vars[fc2.bias])
    }

    /// Full forward pass returning `[B, num_classes]` logits.
    pub fn forward(&mut self, g: &mut Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        self.check_input(g, x)?;
        let z = match self.kind {
            VariantKind::TSception => {
                let z = self.temporal_forward(g, p, x)?;
                self.spatial_forward(g, p, z)?
            }
            VariantKind::Tception => self.temporal_forward(g, p, x)?,
            VariantKind::Sception => self.spatial_forward(g, p, x)?,
        };
        self.classifier_forward(g, p, z)
    }

    /// Logits for a batch without tracking gradients.
    pub fn logits(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let vars = self
            .params
            .iter()
            .map(|p| {
                g.input(
                    Tensor::new(p.tensor.shape().to_vec(), p.tensor.data().to_vec())
                        .expect("shape"),
                )
            })
            .collect();
        let bound = Bound { vars };
        let xv = g.input(Tensor::new(x.shape().to_vec(), x.data().to_vec())?);
        let out = self.forward(&mut g, &bound, xv)?;
        Ok(g.value(out).clone())
    }

    /// Predicted class per row (argmax of the logits, first index on ties).
    pub fn predict(&mut self, x: &Tensor<T>) -> Result<Vec<usize>> {
        let logits = self.logits(x)?;
        Ok(argmax_rows(logits.data(), self.config.num_classes))
    }
}

pub fn argmax_rows<T: Scalar>(data: &[T], k: usize) -> Vec<usize> {
    data.chunks(k)
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}
