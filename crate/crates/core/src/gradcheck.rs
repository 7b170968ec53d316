//! Central finite-difference verification of analytic gradients.
//!
//! Numeric derivatives only ever call forward passes, so this module stays
//! independent of the backward code it checks. Coordinates whose ±ε
//! perturbation flips the sign of any ReLU input are skipped and counted,
//! since the loss is not differentiable across the kink.

use rand::{Rng, SeedableRng};
use serde::Serialize;

use crate::error::Result;
use crate::model::{Bound, Model, ModelConfig, VariantKind};
use crate::tensor::{Graph, Mode, RunningStats, Tensor, Var};
use crate::SeededRng;

pub const EPSILON: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
/// Denominator floor so gradients near zero are compared absolutely.
pub const ABS_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(ABS_FLOOR)
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub max_rel_error: f64,
    pub checked: usize,
    pub skipped: usize,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < TOLERANCE && self.checked > 0
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub seed: u64,
    pub checks: Vec<CheckReport>,
}

impl SuiteReport {
    pub fn max_rel_error(&self) -> f64 {
        self.checks
            .iter()
            .map(|c| c.max_rel_error)
            .fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckReport::passed)
    }
}

/// Deliberate corruption of one analytic gradient, used as a negative
/// control for the checker itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    ConvBackward,
}

/// Compares the gradient of the scalar built by `f` with respect to every
/// element of every input against central differences.
pub fn check_function<F>(name: &str, inputs: &[Tensor<f64>], f: F) -> Result<CheckReport>
where
    F: FnMut(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    check_with_tamper(name, inputs, f, |_, _| {})
}

fn check_with_tamper<F, G>(
    name: &str,
    inputs: &[Tensor<f64>],
    mut f: F,
    tamper: G,
) -> Result<CheckReport>
where
    F: FnMut(&mut Graph<f64>, &[Var]) -> Result<Var>,
    G: Fn(usize, &mut Vec<f64>),
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs
        .iter()
        .map(|t| g.input(t.clone().with_grad()))
        .collect();
    let loss = f(&mut g, &vars)?;
    g.backward(loss)?;
    let base_pattern = g.relu_pattern();
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            let mut d = g
                .grad(v)
                .map(<[f64]>::to_vec)
                .unwrap_or_else(|| vec![0.0; inputs[k].numel()]);
            tamper(k, &mut d);
            d
        })
        .collect();

    let mut eval = |probe: &[Tensor<f64>]| -> Result<(f64, Vec<bool>)> {
        let mut g = Graph::new();
        let vars: Vec<Var> = probe.iter().map(|t| g.input(t.clone())).collect();
        let out = f(&mut g, &vars)?;
        Ok((g.value(out).data()[0], g.relu_pattern()))
    };

    let mut report = CheckReport {
        name: name.to_string(),
        max_rel_error: 0.0,
        checked: 0,
        skipped: 0,
    };
    let mut probe: Vec<Tensor<f64>> = inputs.to_vec();
    for (k, input) in inputs.iter().enumerate() {
        for (e, &orig) in input.data().iter().enumerate() {
            probe[k].data_mut()[e] = orig + EPSILON;
            let (plus, pat_plus) = eval(&probe)?;
            probe[k].data_mut()[e] = orig - EPSILON;
            let (minus, pat_minus) = eval(&probe)?;
            probe[k].data_mut()[e] = orig;
            if pat_plus != base_pattern || pat_minus != base_pattern {
                report.skipped += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * EPSILON);
            let err = relative_error(analytic[k][e], numeric);
            report.max_rel_error = report.max_rel_error.max(err);
            report.checked += 1;
        }
    }
    Ok(report)
}

fn uniform(rng: &mut SeededRng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(lo..hi))
}

/// `sum(out * projection)` turns any tensor output into a scalar whose
/// gradient exercises every output element with a distinct weight.
fn project(g: &mut Graph<f64>, out: Var, seed: u64) -> Result<Var> {
    let mut rng = SeededRng::seed_from_u64(seed);
    let r = uniform(&mut rng, g.shape(out), -1.0, 1.0);
    let r = g.input(r);
    let prod = g.mul(out, r)?;
    Ok(g.sum(prod))
}

/// Miniature network used by the composed check: 32 Hz, 128-sample
/// segments, small kernel counts.
pub fn miniature_config() -> ModelConfig {
    ModelConfig {
        fs: 32.0,
        num_channels: 4,
        segment_len: 128,
        levels: 3,
        alpha: 0.5,
        num_t_kernels: 3,
        num_s_kernels: 2,
        t_pool: 8,
        s_pool: 4,
        hidden: 8,
        num_classes: 2,
        dropout_rate: 0.3,
    }
}

/// Runs every per-op check plus the composed miniature network.
pub fn run_suite(seed: u64, fault: Option<Fault>) -> Result<SuiteReport> {
    let mut rng = SeededRng::seed_from_u64(seed);
    let mut checks = Vec::new();
    let proj_seed = seed.wrapping_add(1);

    let conv_tamper = |k: usize, d: &mut Vec<f64>| {
        if fault == Some(Fault::ConvBackward) && k == 1 {
            d.iter_mut().for_each(|v| *v *= 1.01);
        }
    };
    for (label, xs, ws, stride) in [
        ("conv2d", [2, 2, 3, 9], [3, 2, 1, 4], (1, 1)),
        ("conv2d-strided", [2, 2, 4, 6], [2, 2, 2, 1], (2, 1)),
    ] {
        let inputs = vec![
            uniform(&mut rng, &xs, -1.0, 1.0),
            uniform(&mut rng, &ws, -1.0, 1.0),
            uniform(&mut rng, &[ws[0]], -1.0, 1.0),
        ];
        checks.push(check_with_tamper(
            label,
            &inputs,
            |g, v| {
                let y = g.conv2d(v[0], v[1], v[2], stride)?;
                project(g, y, proj_seed)
            },
            conv_tamper,
        )?);
    }

    let x = Tensor::from_fn(&[3, 7], |_| {
        let m: f64 = rng.random_range(1e-3..1.0);
        if rng.random::<bool>() {
            m
        } else {
            -m
        }
    });
    checks.push(check_function("relu", &[x], |g, v| {
        let y = g.relu(v[0]);
        project(g, y, proj_seed)
    })?);

    let x = uniform(&mut rng, &[2, 2, 3, 9], -1.0, 1.0);
    checks.push(check_function("avg_pool2d", &[x], |g, v| {
        let y = g.avg_pool2d(v[0], (2, 4))?;
        project(g, y, proj_seed)
    })?);

    let inputs = vec![
        uniform(&mut rng, &[3, 2, 2, 5], -2.0, 2.0),
        uniform(&mut rng, &[2], 0.5, 1.5),
        uniform(&mut rng, &[2], -0.5, 0.5),
    ];
    checks.push(check_function("batch_norm", &inputs, |g, v| {
        let mut stats = RunningStats::new(2);
        let y = g.batch_norm(v[0], v[1], v[2], &mut stats, Mode::Train)?;
        project(g, y, proj_seed)
    })?);

    let inputs = vec![
        uniform(&mut rng, &[3, 5], -1.0, 1.0),
        uniform(&mut rng, &[5, 4], -1.0, 1.0),
        uniform(&mut rng, &[4], -1.0, 1.0),
    ];
    checks.push(check_function("linear", &inputs, |g, v| {
        let y = g.linear(v[0], v[1], v[2])?;
        project(g, y, proj_seed)
    })?);

    let logits = uniform(&mut rng, &[4, 3], -2.0, 2.0);
    let labels: Vec<usize> = (0..4).map(|_| rng.random_range(0..3)).collect();
    checks.push(check_function(
        "softmax_cross_entropy",
        &[logits],
        |g, v| g.softmax_cross_entropy(v[0], &labels),
    )?);

    let inputs = vec![
        uniform(&mut rng, &[2, 3, 1, 4], -1.0, 1.0),
        uniform(&mut rng, &[2, 3, 2, 4], -1.0, 1.0),
    ];
    checks.push(check_function("concat", &inputs, |g, v| {
        let y = g.concat(v, 2)?;
        project(g, y, proj_seed)
    })?);

    let x = uniform(&mut rng, &[4, 6], -1.0, 1.0);
    checks.push(check_function("dropout", &[x], |g, v| {
        let mut mask_rng = SeededRng::seed_from_u64(proj_seed);
        let y = g.dropout(v[0], 0.3, Mode::Train, &mut mask_rng)?;
        project(g, y, proj_seed)
    })?);

    checks.push(composed_check(seed, &mut rng)?);
    Ok(SuiteReport { seed, checks })
}

/// Cross-entropy plus L1 through the whole miniature network, differentiated
/// with respect to every parameter.
fn composed_check(seed: u64, rng: &mut SeededRng) -> Result<CheckReport> {
    let cfg = miniature_config();
    let mut model = Model::<f64>::new(VariantKind::TSception, cfg.clone(), seed)?;
    let batch = 4;
    let x = uniform(
        rng,
        &[batch, 1, cfg.num_channels, cfg.segment_len],
        -1.0,
        1.0,
    );
    let labels: Vec<usize> = (0..batch).map(|i| i % 2).collect();
    let params: Vec<Tensor<f64>> = model.params().iter().map(|p| p.tensor.clone()).collect();
    check_function("tsception-miniature", &params, |g, vars| {
        model.reseed_dropout(seed);
        let bound = Bound::from_vars(vars.to_vec());
        let xv = g.input(x.clone());
        let logits = model.forward(g, &bound, xv)?;
        let ce = g.softmax_cross_entropy(logits, &labels)?;
        let l1 = g.l1_penalty(vars, 1e-6)?;
        g.add(ce, l1)
    })
}
