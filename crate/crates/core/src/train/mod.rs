//! Loss, Adam, early-stopped training, evaluation and leave-one-session-out
//! cross-validation.

mod adam;
mod stopping;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use stopping::{EarlyStopping, Verdict};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{build_loso_folds, Fold, FoldSpec, SegmentSet, SubjectData};
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig, VariantKind};
use crate::tensor::{Graph, Mode, Scalar, Var};
use crate::SeededRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub lambda: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    /// Batch size for evaluation passes; does not affect results.
    pub eval_batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            batch_size: 128,
            lambda: 1e-6,
            patience: 4,
            max_epochs: 500,
            seed: 0,
            adam: AdamConfig::default(),
            eval_batch_size: 256,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate {} must be positive",
                self.lr
            )));
        }
        if self.batch_size == 0 || self.eval_batch_size == 0 {
            return Err(Error::Config("batch sizes must be positive".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!(
                "lambda {} must be >= 0",
                self.lambda
            )));
        }
        if self.patience == 0 || self.max_epochs == 0 {
            return Err(Error::Config(
                "patience and max_epochs must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Mean cross-entropy plus `lambda` times the L1 norm of `params`.
pub fn loss<T: Scalar>(
    g: &mut Graph<T>,
    logits: Var,
    labels: &[usize],
    params: &[Var],
    lambda: f64,
) -> Result<Var> {
    let ce = g.softmax_cross_entropy(logits, labels)?;
    let l1 = g.l1_penalty(params, lambda)?;
    g.add(ce, l1)
}

/// Fraction of segments whose argmax logit matches the label. Runs in eval
/// mode and puts the model back in its previous mode afterwards.
pub fn evaluate(model: &mut Model<f32>, data: &SegmentSet, batch_size: usize) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Empty("evaluation set".into()));
    }
    let prev = model.mode();
    model.set_mode(Mode::Eval);
    let idx: Vec<usize> = (0..data.len()).collect();
    let mut correct = 0usize;
    let result = idx
        .chunks(batch_size.max(1))
        .try_for_each(|chunk| -> Result<()> {
            let x = data.segments.gather_rows(chunk)?;
            let pred = model.predict(&x)?;
            correct += chunk
                .iter()
                .zip(pred)
                .filter(|&(&i, p)| data.labels[i] == p)
                .count();
            Ok(())
        });
    model.set_mode(prev);
    result?;
    Ok(correct as f64 / data.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Patience,
    MaxEpochs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Mean training loss per epoch, weighted by batch size.
    pub train_losses: Vec<f64>,
    pub val_accuracies: Vec<f64>,
    /// 1-based epoch whose parameters were restored.
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    pub stopped_epoch: usize,
    pub stop_reason: StopReason,
    /// Validation accuracy of the restored model.
    pub restored_val_accuracy: f64,
}

/// Trains with early stopping on validation accuracy from [`evaluate`].
pub fn fit(
    model: &mut Model<f32>,
    train: &SegmentSet,
    val: &SegmentSet,
    cfg: &TrainConfig,
) -> Result<FitReport> {
    let eval_batch = cfg.eval_batch_size;
    fit_with_validator(model, train, val, cfg, |m, v| evaluate(m, v, eval_batch))
}

/// Trains for up to `max_epochs`: each epoch shuffles `train`, runs one Adam
/// step per mini-batch, then scores the model with `validate`. The best
/// scoring parameters are restored at the end and scored once more.
pub fn fit_with_validator<F>(
    model: &mut Model<f32>,
    train: &SegmentSet,
    val: &SegmentSet,
    cfg: &TrainConfig,
    mut validate: F,
) -> Result<FitReport>
where
    F: FnMut(&mut Model<f32>, &SegmentSet) -> Result<f64>,
{
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training set".into()));
    }
    if val.is_empty() {
        return Err(Error::Empty("validation set".into()));
    }
    let mut rng = SeededRng::seed_from_u64(cfg.seed);
    model.reseed_dropout(cfg.seed);
    let mut adam = AdamState::new(model.params(), cfg.adam);
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best = model.state();
    let mut report = FitReport {
        train_losses: Vec::new(),
        val_accuracies: Vec::new(),
        best_epoch: 0,
        best_val_accuracy: f64::NAN,
        stopped_epoch: 0,
        stop_reason: StopReason::MaxEpochs,
        restored_val_accuracy: f64::NAN,
    };
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=cfg.max_epochs {
        model.set_mode(Mode::Train);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let x = train.segments.gather_rows(chunk)?;
            let labels: Vec<usize> = chunk.iter().map(|&i| train.labels[i]).collect();
            let mut g = Graph::new();
            let bound = model.bind(&mut g);
            let xv = g.input(x);
            let logits = model.forward(&mut g, &bound, xv)?;
            let l = loss(&mut g, logits, &labels, bound.vars(), cfg.lambda)?;
            let value = f64::from(g.value(l).data()[0]);
            if !value.is_finite() {
                return Err(Error::Diverged { epoch, loss: value });
            }
            g.backward(l)?;
            model.zero_grad();
            model.accumulate_grads(&g, &bound);
            adam_step(model.params_mut(), &mut adam, cfg.lr)?;
            total += value * chunk.len() as f64;
        }
        let epoch_loss = total / train.len() as f64;
        let acc = validate(model, val)?;
        report.train_losses.push(epoch_loss);
        report.val_accuracies.push(acc);
        let verdict = stopper.observe(epoch, acc);
        if verdict.improved {
            best = model.state();
        }
        log::info!(
            "epoch {epoch}: loss {epoch_loss:.5} val acc {acc:.4}{}",
            if verdict.improved { " *" } else { "" }
        );
        report.stopped_epoch = epoch;
        if verdict.stop {
            report.stop_reason = StopReason::Patience;
            break;
        }
    }
    model.restore(&best);
    model.set_mode(Mode::Eval);
    report.best_epoch = stopper.best_epoch();
    report.best_val_accuracy = stopper.best().unwrap_or(f64::NAN);
    report.restored_val_accuracy = validate(model, val)?;
    Ok(report)
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub test_session: String,
    pub accuracy: f64,
    pub train_size: usize,
    pub val_size: usize,
    pub test_size: usize,
    pub fit: FitReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectResult {
    pub subject: String,
    pub folds: Vec<FoldResult>,
    pub mean: f64,
    pub std: f64,
}

/// Builds, trains and tests one fold, returning the trained model too.
/// Model initialization and training both use `cfg.seed + fold.index`.
pub fn train_fold(
    fold: &Fold,
    kind: VariantKind,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<(Model<f32>, FoldResult)> {
    let seed = cfg.seed.wrapping_add(fold.index as u64);
    let mut model = Model::<f32>::new(kind, model_cfg.clone(), seed)?;
    let fold_cfg = TrainConfig {
        seed,
        ..cfg.clone()
    };
    let fit_report = fit(&mut model, &fold.train, &fold.val, &fold_cfg)?;
    let accuracy = evaluate(&mut model, &fold.test, cfg.eval_batch_size)?;
    log::info!(
        "fold {} (test {}): accuracy {accuracy:.4} after {} epochs",
        fold.index,
        fold.test_session,
        fit_report.stopped_epoch
    );
    let result = FoldResult {
        fold: fold.index,
        test_session: fold.test_session.clone(),
        accuracy,
        train_size: fold.train.len(),
        val_size: fold.val.len(),
        test_size: fold.test.len(),
        fit: fit_report,
    };
    Ok((model, result))
}

/// [`train_fold`] without the model.
pub fn run_fold(
    fold: &Fold,
    kind: VariantKind,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<FoldResult> {
    Ok(train_fold(fold, kind, model_cfg, cfg)?.1)
}

/// Leave-one-session-out over one subject. Folds run in parallel on the
/// current rayon pool.
pub fn loso_crossval(
    subject: &SubjectData,
    kind: VariantKind,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    spec: &FoldSpec,
) -> Result<SubjectResult> {
    let folds = build_loso_folds(subject, spec)?;
    let results = folds
        .par_iter()
        .map(|f| run_fold(f, kind, model_cfg, cfg))
        .collect::<Result<Vec<_>>>()?;
    let accs: Vec<f64> = results.iter().map(|r| r.accuracy).collect();
    let (mean, std) = mean_std(&accs);
    Ok(SubjectResult {
        subject: subject.subject_id.clone(),
        folds: results,
        mean,
        std,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std_population() {
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!((m, s), (2.0, 1.0));
        assert!(mean_std(&[]).0.is_nan());
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
