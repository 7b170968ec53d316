use rand::{Rng, SeedableRng};
use tsception::data::*;
use tsception::dsp::preprocess_subject;
use tsception::gradcheck::miniature_config;
use tsception::model::{Model, ModelConfig, ModelState, Param, VariantKind};
use tsception::tensor::{Graph, Mode, Tensor};
use tsception::train::*;
use tsception::{Error, SeededRng};

fn scalar_param(v: f64) -> Vec<Param<f64>> {
    vec![Param {
        name: "theta".into(),
        tensor: Tensor::new(vec![1], vec![v]).unwrap().with_grad(),
    }]
}

/// Sets the gradient of `theta^2`.
fn set_bowl_grad(p: &mut [Param<f64>]) {
    let g = 2.0 * p[0].tensor.data()[0];
    p[0].tensor.zero_grad();
    p[0].tensor.accumulate_grad(&[g]);
}

#[test]
fn first_adam_step_moves_by_lr() {
    let mut p = scalar_param(1.0);
    let mut st = AdamState::new(&p, AdamConfig::default());
    set_bowl_grad(&mut p);
    adam_step(&mut p, &mut st, 0.1).unwrap();
    // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps)
    let expected = 1.0 - 0.1 * 2.0 / (2.0 + 1e-8);
    assert!((p[0].tensor.data()[0] - expected).abs() < 1e-12);
    assert!((p[0].tensor.data()[0] - 0.9).abs() < 1e-8);
}

#[test]
fn zero_gradient_leaves_parameters() {
    let mut p = scalar_param(0.7);
    let mut st = AdamState::new(&p, AdamConfig::default());
    p[0].tensor.accumulate_grad(&[0.0]);
    for _ in 0..5 {
        adam_step(&mut p, &mut st, 0.1).unwrap();
    }
    assert_eq!(p[0].tensor.data()[0], 0.7);
}

#[test]
fn adam_converges_on_bowl() {
    let mut p = scalar_param(1.0);
    let mut st = AdamState::new(&p, AdamConfig::default());
    for _ in 0..200 {
        set_bowl_grad(&mut p);
        adam_step(&mut p, &mut st, 0.1).unwrap();
    }
    let theta = p[0].tensor.data()[0];
    assert!(theta.abs() < 1e-3, "{theta}");
}

#[test]
fn tiny_lr_moves_by_order_lr() {
    let mut p = scalar_param(1.0);
    let mut st = AdamState::new(&p, AdamConfig::default());
    set_bowl_grad(&mut p);
    let lr = 1e-9;
    adam_step(&mut p, &mut st, lr).unwrap();
    assert!((p[0].tensor.data()[0] - 1.0).abs() <= 2.0 * lr);
}

#[test]
fn nan_gradient_names_parameter() {
    let mut p = scalar_param(1.0);
    p.push(Param {
        name: "fc1.weight".into(),
        tensor: Tensor::new(vec![3], vec![1.0, 2.0, 3.0])
            .unwrap()
            .with_grad(),
    });
    p[1].tensor.accumulate_grad(&[0.0, f64::NAN, f64::INFINITY]);
    let mut st = AdamState::new(&p, AdamConfig::default());
    match adam_step(&mut p, &mut st, 0.1) {
        Err(Error::NonFiniteGradient { param, count }) => {
            assert_eq!((param.as_str(), count), ("fc1.weight", 2))
        }
        other => panic!("{other:?}"),
    }
    assert_eq!(p[1].tensor.data(), &[1.0, 2.0, 3.0]);
}

#[test]
fn loss_examples() {
    let mut g = Graph::<f64>::new();
    let logits = g.input(Tensor::new(vec![2, 2], vec![60.0, -60.0, -60.0, 60.0]).unwrap());
    let l = loss(&mut g, logits, &[0, 1], &[], 0.0).unwrap();
    assert!(g.value(l).data()[0] < 1e-12);

    let mut g = Graph::<f64>::new();
    let logits = g.input(Tensor::zeros(&[3, 2]));
    let l = loss(&mut g, logits, &[0, 1, 1], &[], 0.0).unwrap();
    assert!((g.value(l).data()[0] - 2f64.ln()).abs() < 1e-12);

    let mut g = Graph::<f64>::new();
    let logits = g.input(Tensor::new(vec![1, 2], vec![0.3, -0.2]).unwrap());
    let w = g.input(Tensor::zeros(&[5]).with_grad());
    let with = loss(&mut g, logits, &[1], &[w], 1e-6).unwrap();
    let ce = g.softmax_cross_entropy(logits, &[1]).unwrap();
    assert_eq!(g.value(with).data()[0], g.value(ce).data()[0]);
}

#[test]
fn l1_strictly_increases_loss_for_nonzero_weights() {
    let mut model = Model::<f64>::new(VariantKind::TSception, miniature_config(), 1).unwrap();
    model.set_mode(Mode::Eval);
    let mut rng = SeededRng::seed_from_u64(1);
    let x = Tensor::from_fn(&[2, 1, 4, 128], |_| rng.random_range(-1.0..1.0));
    let value = |lambda: f64, model: &mut Model<f64>| {
        let mut g = Graph::new();
        let b = model.bind(&mut g);
        let xv = g.input(x.clone());
        let logits = model.forward(&mut g, &b, xv).unwrap();
        let l = loss(&mut g, logits, &[0, 1], b.vars(), lambda).unwrap();
        g.value(l).data()[0]
    };
    assert!(value(1e-6, &mut model) > value(0.0, &mut model));
}

fn constant_output_model(bias: [f32; 2]) -> Model<f32> {
    let mut m = Model::<f32>::new(VariantKind::TSception, miniature_config(), 3).unwrap();
    m.param_mut("fc2.weight")
        .unwrap()
        .tensor
        .data_mut()
        .fill(0.0);
    m.param_mut("fc2.bias")
        .unwrap()
        .tensor
        .data_mut()
        .copy_from_slice(&bias);
    m
}

fn random_set(n: usize, labels: impl Fn(usize) -> usize, seed: u64) -> SegmentSet {
    let mut rng = SeededRng::seed_from_u64(seed);
    let x = Tensor::from_fn(&[n, 1, 4, 128], |_| rng.random_range(-1.0f32..1.0));
    let prov = (0..n)
        .map(|i| Provenance {
            subject: "s".into(),
            session: "a".into(),
            stimulus: "x".into(),
            window_index: i,
        })
        .collect();
    SegmentSet::new(x, (0..n).map(labels).collect(), prov).unwrap()
}

#[test]
fn evaluate_examples() {
    let all_high = random_set(10, |_| 1, 1);
    let mut m = constant_output_model([0.0, 1.0]);
    assert_eq!(evaluate(&mut m, &all_high, 4).unwrap(), 1.0);
    // equal logits tie to class 0
    let balanced = random_set(10, |i| i % 2, 2);
    let mut m = constant_output_model([0.5, 0.5]);
    assert_eq!(evaluate(&mut m, &balanced, 3).unwrap(), 0.5);
    // a set with no segments cannot be constructed at all
    assert!(matches!(balanced.subset(&[]), Err(Error::Empty(_))));
}

#[test]
fn accuracy_invariant_under_logit_scaling() {
    let set = random_set(24, |i| (i / 3) % 2, 3);
    let mut m = Model::<f32>::new(VariantKind::TSception, miniature_config(), 7).unwrap();
    let before = evaluate(&mut m, &set, 8).unwrap();
    let preds_before = {
        m.set_mode(Mode::Eval);
        m.predict(&set.segments).unwrap()
    };
    for name in ["fc2.weight", "fc2.bias"] {
        m.param_mut(name)
            .unwrap()
            .tensor
            .data_mut()
            .iter_mut()
            .for_each(|v| *v *= 3.5);
    }
    assert_eq!(evaluate(&mut m, &set, 8).unwrap(), before);
    assert_eq!(m.predict(&set.segments).unwrap(), preds_before);
}

#[test]
fn evaluate_restores_mode_and_batch_size_does_not_matter() {
    let set = random_set(13, |i| i % 2, 4);
    let mut m = Model::<f32>::new(VariantKind::TSception, miniature_config(), 5).unwrap();
    m.set_mode(Mode::Train);
    let a = evaluate(&mut m, &set, 1).unwrap();
    assert_eq!(m.mode(), Mode::Train);
    assert_eq!(evaluate(&mut m, &set, 13).unwrap(), a);
}

/// Runs `fit` with a validator that replays `script`, and afterwards maps
/// the restored parameters back to the epoch they were captured at.
fn scripted_fit(
    script: &[f64],
    cfg: &TrainConfig,
) -> (FitReport, Vec<ModelState<f32>>, ModelState<f32>) {
    let train = random_set(12, |i| i % 2, 10);
    let val = random_set(6, |i| i % 2, 11);
    let mut model = Model::<f32>::new(VariantKind::TSception, miniature_config(), 2).unwrap();
    let mut states: Vec<ModelState<f32>> = Vec::new();
    let report = fit_with_validator(&mut model, &train, &val, cfg, |m, _| {
        let st = m.state();
        if states.len() < script.len() && !states.contains(&st) || states.is_empty() {
            states.push(st);
            Ok(script[states.len() - 1])
        } else {
            let epoch = states
                .iter()
                .position(|s| *s == st)
                .expect("restored state was seen");
            Ok(script[epoch])
        }
    })
    .unwrap();
    (report, states, model.state())
}

#[test]
fn plateau_stops_patience_epochs_after_best() {
    let cfg = TrainConfig {
        batch_size: 4,
        patience: 4,
        ..TrainConfig::default()
    };
    let script = [0.5, 0.6, 0.6, 0.6, 0.6, 0.6, 0.9, 0.9];
    let (report, states, restored) = scripted_fit(&script, &cfg);
    assert_eq!(report.stopped_epoch, 6);
    assert_eq!(report.stop_reason, StopReason::Patience);
    assert_eq!(report.best_epoch, 2);
    assert_eq!(report.best_val_accuracy, 0.6);
    assert_eq!(report.val_accuracies, script[..6]);
    assert_eq!(report.train_losses.len(), 6);
    assert_eq!(restored, states[1]);
    assert_eq!(report.restored_val_accuracy, report.best_val_accuracy);
}

#[test]
fn increasing_accuracy_runs_to_max_epochs() {
    let cfg = TrainConfig {
        batch_size: 4,
        patience: 1,
        max_epochs: 7,
        ..TrainConfig::default()
    };
    let script: Vec<f64> = (1..=7).map(|e| e as f64 / 10.0).collect();
    let (report, states, restored) = scripted_fit(&script, &cfg);
    assert_eq!(report.stopped_epoch, 7);
    assert_eq!(report.stop_reason, StopReason::MaxEpochs);
    assert_eq!(report.best_epoch, 7);
    assert_eq!(restored, states[6]);
}

#[test]
fn fit_is_deterministic() {
    let train = random_set(20, |i| i % 2, 20);
    let val = random_set(8, |i| i % 2, 21);
    let cfg = TrainConfig {
        batch_size: 6,
        max_epochs: 3,
        patience: 10,
        seed: 17,
        ..TrainConfig::default()
    };
    let run = || {
        let mut m = Model::<f32>::new(VariantKind::TSception, miniature_config(), 4).unwrap();
        let r = fit(&mut m, &train, &val, &cfg).unwrap();
        (r, m.state())
    };
    let (a, sa) = run();
    let (b, sb) = run();
    assert_eq!(a, b);
    assert!(a
        .train_losses
        .iter()
        .zip(&b.train_losses)
        .all(|(x, y)| x.to_bits() == y.to_bits()));
    assert_eq!(sa, sb);
}

#[test]
fn non_finite_input_aborts_training() {
    let mut train = random_set(8, |i| i % 2, 30);
    train.segments.data_mut()[5] = f32::INFINITY;
    let val = random_set(4, |i| i % 2, 31);
    let mut m = Model::<f32>::new(VariantKind::TSception, miniature_config(), 4).unwrap();
    let err = fit(&mut m, &train, &val, &TrainConfig::default()).unwrap_err();
    assert!(
        matches!(
            err,
            Error::Diverged { epoch: 1, .. } | Error::NonFiniteGradient { .. }
        ),
        "{err}"
    );
}

#[test]
fn empty_splits_rejected() {
    let set = random_set(4, |i| i % 2, 1);
    assert!(matches!(set.subset(&[]), Err(Error::Empty(_))));
    let stacked = SegmentSet::concat(&[]);
    assert!(matches!(stacked, Err(Error::Empty(_))));
}

fn synthetic_subject(n_sessions: usize, duration_s: f64, seed: u64) -> SubjectData {
    let cfg = SynthConfig {
        n_subjects: 1,
        n_sessions,
        duration_s,
        seed,
        ..SynthConfig::default()
    };
    let recs = (0..n_sessions)
        .flat_map(|k| {
            [Arousal::Low, Arousal::High].map(|l| generate_recording(&cfg, 0, k, l).unwrap())
        })
        .collect();
    preprocess_subject(&SubjectData::from_recordings("s01", recs).unwrap()).unwrap()
}

#[test]
fn learns_the_synthetic_rule() {
    let subject = synthetic_subject(2, 20.0, 5);
    let cfg = TrainConfig {
        max_epochs: 50,
        ..TrainConfig::default()
    };
    let res = loso_crossval(
        &subject,
        VariantKind::TSception,
        &ModelConfig::default(),
        &cfg,
        &FoldSpec::default(),
    )
    .unwrap();
    assert_eq!(res.folds.len(), 2);
    for f in &res.folds {
        assert!(f.fit.stopped_epoch <= 50);
        assert_eq!(f.fit.restored_val_accuracy, f.fit.best_val_accuracy);
        assert!(f.accuracy >= 0.9, "fold {}: {}", f.fold, f.accuracy);
    }
    assert!(res.mean >= 0.9);
}

#[test]
fn identical_sessions_give_identical_folds() {
    let base = synthetic_subject(1, 8.0, 6);
    let mut copy = base.sessions[0].clone();
    copy.session_id = "session2".into();
    for r in &mut copy.recordings {
        r.session_id = "session2".into();
    }
    let subject = SubjectData {
        subject_id: base.subject_id.clone(),
        sessions: vec![base.sessions[0].clone(), copy],
    };
    let folds = build_loso_folds(&subject, &FoldSpec::default()).unwrap();
    let cfg = TrainConfig {
        max_epochs: 3,
        ..TrainConfig::default()
    };
    let mut second = folds[1].clone();
    second.index = 0;
    let a = run_fold(
        &folds[0],
        VariantKind::Sception,
        &ModelConfig::default(),
        &cfg,
    )
    .unwrap();
    let b = run_fold(
        &second,
        VariantKind::Sception,
        &ModelConfig::default(),
        &cfg,
    )
    .unwrap();
    assert_eq!(a.accuracy, b.accuracy);
    assert_eq!(a.fit, b.fit);
}

#[test]
fn crossval_needs_two_sessions() {
    let subject = synthetic_subject(1, 5.0, 1);
    let err = loso_crossval(
        &subject,
        VariantKind::TSception,
        &ModelConfig::default(),
        &TrainConfig::default(),
        &FoldSpec::default(),
    );
    assert!(err.is_err());
}
