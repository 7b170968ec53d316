//! Linear hinge-loss classifier on RP or DE feature vectors.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::dsp::FeatureRow;
use crate::error::{Error, Result};
use crate::train::mean_std;
use crate::SeededRng;

/// Which half of a full RP-then-DE feature vector a model consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Rp,
    De,
    Both,
}

impl FeatureKind {
    /// Selects this kind's columns from a full feature vector.
    pub fn select(self, full: &[f64]) -> &[f64] {
        let half = full.len() / 2;
        match self {
            FeatureKind::Rp => &full[..half],
            FeatureKind::De => &full[half..],
            FeatureKind::Both => full,
        }
    }

    pub fn dim(self, full_len: usize) -> usize {
        match self {
            FeatureKind::Both => full_len,
            _ => full_len / 2,
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureKind::Rp => "rp",
            FeatureKind::De => "de",
            FeatureKind::Both => "both",
        })
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rp" => Ok(FeatureKind::Rp),
            "de" => Ok(FeatureKind::De),
            "both" => Ok(FeatureKind::Both),
            other => Err(Error::Config(format!(
                "unknown feature kind `{other}` (expected rp, de or both)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearConfig {
    pub epochs: usize,
    /// Initial step size; epoch `e` (0-based) uses `lr / sqrt(1 + e)`.
    pub lr: f64,
    /// L2 penalty on the weights. The bias is not penalized.
    pub reg: f64,
    pub seed: u64,
}

impl Default for LinearConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            lr: 0.01,
            reg: 1e-3,
            seed: 0,
        }
    }
}

impl LinearConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate {} must be positive",
                self.lr
            )));
        }
        if !(self.reg >= 0.0 && self.reg.is_finite()) {
            return Err(Error::Config(format!("reg {} must be >= 0", self.reg)));
        }
        Ok(())
    }
}

/// `score(x) = w . (x - mean) / std + b`; class 1 iff the score is positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub feature_kind: FeatureKind,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl LinearModel {
    /// Identity normalization around the given weights.
    pub fn new(weights: Vec<f64>, bias: f64, feature_kind: FeatureKind) -> Self {
        let f = weights.len();
        Self {
            weights,
            bias,
            feature_kind,
            mean: vec![0.0; f],
            std: vec![1.0; f],
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        let dot: f64 = x
            .iter()
            .zip(&self.mean)
            .zip(&self.std)
            .zip(&self.weights)
            .map(|(((&v, m), s), w)| w * (v - m) / s)
            .sum();
        dot + self.bias
    }
}

fn check_rows(features: &[Vec<f64>], dim: usize, op: &'static str) -> Result<()> {
    for (i, row) in features.iter().enumerate() {
        if row.len() != dim {
            return Err(Error::Dimension {
                op,
                detail: format!("row {i} has {} features, expected {dim}", row.len()),
            });
        }
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "{op}: feature {j} of row {i} is not finite"
            )));
        }
    }
    Ok(())
}

/// Per-column mean and population standard deviation. Constant columns get
/// a standard deviation of one so they standardize to zero.
fn column_stats(features: &[Vec<f64>], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let n = features.len() as f64;
    let mut mean = vec![0.0; dim];
    for row in features {
        mean.iter_mut().zip(row).for_each(|(m, v)| *m += v / n);
    }
    let mut var = vec![0.0; dim];
    for row in features {
        var.iter_mut()
            .zip(row)
            .zip(&mean)
            .for_each(|((s, v), m)| *s += (v - m) * (v - m) / n);
    }
    let std = var
        .into_iter()
        .map(|v| if v > 0.0 { v.sqrt() } else { 1.0 })
        .collect();
    (mean, std)
}

/// Fits by stochastic subgradient descent on the L2-regularized hinge loss,
/// one shuffled pass over the data per epoch. Standardization statistics
/// come from `features` alone.
pub fn fit_linear(
    features: &[Vec<f64>],
    labels: &[usize],
    feature_kind: FeatureKind,
    cfg: &LinearConfig,
) -> Result<LinearModel> {
    cfg.validate()?;
    if features.is_empty() {
        return Err(Error::Empty("training features".into()));
    }
    if features.len() != labels.len() {
        return Err(Error::dim(
            "fit_linear",
            format!("{} rows but {} labels", features.len(), labels.len()),
        ));
    }
    if let Some(&label) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::LabelOutOfRange { label, classes: 2 });
    }
    let ones = labels.iter().filter(|&&l| l == 1).count();
    if ones == 0 || ones == labels.len() {
        return Err(Error::Validation(format!(
            "linear baseline needs both classes, all {} labels are {}",
            labels.len(),
            labels[0]
        )));
    }
    let dim = features[0].len();
    check_rows(features, dim, "fit_linear")?;
    let (mean, std) = column_stats(features, dim);
    let z: Vec<Vec<f64>> = features
        .iter()
        .map(|row| {
            row.iter()
                .zip(&mean)
                .zip(&std)
                .map(|((v, m), s)| (v - m) / s)
                .collect()
        })
        .collect();
    let y: Vec<f64> = labels
        .iter()
        .map(|&l| if l == 1 { 1.0 } else { -1.0 })
        .collect();

    let mut rng = SeededRng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..z.len()).collect();
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    for epoch in 0..cfg.epochs {
        let eta = cfg.lr / ((1 + epoch) as f64).sqrt();
        let shrink = 1.0 - eta * cfg.reg;
        order.shuffle(&mut rng);
        for &i in &order {
            let margin = y[i] * (w.iter().zip(&z[i]).map(|(a, x)| a * x).sum::<f64>() + b);
            w.iter_mut().for_each(|a| *a *= shrink);
            if margin < 1.0 {
                w.iter_mut()
                    .zip(&z[i])
                    .for_each(|(a, x)| *a += eta * y[i] * x);
                b += eta * y[i];
            }
        }
    }
    Ok(LinearModel {
        weights: w,
        bias: b,
        feature_kind,
        mean,
        std,
    })
}

/// Class 1 where the score is strictly positive, class 0 otherwise.
pub fn predict_linear(model: &LinearModel, features: &[Vec<f64>]) -> Result<Vec<usize>> {
    check_rows(features, model.dim(), "predict_linear")?;
    Ok(features
        .iter()
        .map(|x| usize::from(model.score(x) > 0.0))
        .collect())
}

pub fn accuracy(predictions: &[usize], labels: &[usize]) -> f64 {
    let hits = predictions
        .iter()
        .zip(labels)
        .filter(|(p, l)| p == l)
        .count();
    hits as f64 / labels.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineFold {
    pub fold: usize,
    pub test_session: String,
    pub accuracy: f64,
    pub train_size: usize,
    pub test_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSubject {
    pub subject: String,
    pub folds: Vec<BaselineFold>,
    pub mean: f64,
    pub std: f64,
}

/// Leave-one-session-out over the feature rows of one subject, with
/// sessions taken in order of first appearance. Every non-test session is
/// used for training. With `shuffle_seed` the training labels of each fold
/// are permuted before fitting, which samples the permutation null.
pub fn baseline_loso(
    rows: &[FeatureRow],
    kind: FeatureKind,
    cfg: &LinearConfig,
    shuffle_seed: Option<u64>,
) -> Result<BaselineSubject> {
    let first = rows
        .first()
        .ok_or_else(|| Error::Empty("feature table".into()))?;
    let subject = first.provenance.subject.clone();
    if let Some(r) = rows.iter().find(|r| r.provenance.subject != subject) {
        return Err(Error::Validation(format!(
            "rows of subjects {subject} and {} mixed in one cross-validation",
            r.provenance.subject
        )));
    }
    let mut sessions: Vec<&str> = Vec::new();
    for r in rows {
        if !sessions.contains(&r.provenance.session.as_str()) {
            sessions.push(&r.provenance.session);
        }
    }
    if sessions.len() < 2 {
        return Err(Error::Validation(format!(
            "subject {subject} has {} session(s); leave-one-session-out needs at least 2",
            sessions.len()
        )));
    }
    let full = first.values.len();
    let mut folds = Vec::with_capacity(sessions.len());
    for (index, &test_session) in sessions.iter().enumerate() {
        let (test, train): (Vec<&FeatureRow>, Vec<&FeatureRow>) = rows
            .iter()
            .partition(|r| r.provenance.session == test_session);
        let pick = |set: &[&FeatureRow]| -> Result<Vec<Vec<f64>>> {
            set.iter()
                .map(|r| {
                    if r.values.len() != full {
                        return Err(Error::dim(
                            "baseline_loso",
                            format!("row has {} features, expected {full}", r.values.len()),
                        ));
                    }
                    Ok(kind.select(&r.values).to_vec())
                })
                .collect()
        };
        let (train_x, test_x) = (pick(&train)?, pick(&test)?);
        let mut train_y: Vec<usize> = train.iter().map(|r| r.label).collect();
        let test_y: Vec<usize> = test.iter().map(|r| r.label).collect();
        if let Some(seed) = shuffle_seed {
            let mut rng = SeededRng::seed_from_u64(seed);
            rng.set_stream(index as u64);
            train_y.shuffle(&mut rng);
        }
        let model = fit_linear(&train_x, &train_y, kind, cfg)?;
        let acc = accuracy(&predict_linear(&model, &test_x)?, &test_y);
        folds.push(BaselineFold {
            fold: index,
            test_session: test_session.to_string(),
            accuracy: acc,
            train_size: train_x.len(),
            test_size: test_x.len(),
        });
    }
    let accs: Vec<f64> = folds.iter().map(|f| f.accuracy).collect();
    let (mean, std) = mean_std(&accs);
    Ok(BaselineSubject {
        subject,
        folds,
        mean,
        std,
    })
}

/// Mean and population standard deviation of accuracies obtained with
/// permuted training labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullDistribution {
    pub accuracies: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl NullDistribution {
    pub fn from_accuracies(accuracies: Vec<f64>) -> Self {
        let (mean, std) = mean_std(&accuracies);
        Self {
            accuracies,
            mean,
            std,
        }
    }

    /// How many null standard deviations `accuracy` lies above chance.
    pub fn z_above_chance(&self, accuracy: f64) -> f64 {
        (accuracy - 0.5) / self.std
    }
}

/// Grand-mean accuracy over `subjects` for each of `n_permutations`
/// label shuffles.
pub fn permutation_null(
    subjects: &[Vec<FeatureRow>],
    kind: FeatureKind,
    cfg: &LinearConfig,
    n_permutations: usize,
    seed: u64,
) -> Result<NullDistribution> {
    use rayon::prelude::*;
    if n_permutations < 2 {
        return Err(Error::Config(
            "a permutation null needs at least 2 permutations".into(),
        ));
    }
    let accs = (0..n_permutations as u64)
        .into_par_iter()
        .map(|p| {
            let means = subjects
                .iter()
                .map(|rows| Ok(baseline_loso(rows, kind, cfg, Some(seed.wrapping_add(p)))?.mean))
                .collect::<Result<Vec<f64>>>()?;
            Ok(mean_std(&means).0)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(NullDistribution::from_accuracies(accs))
}
