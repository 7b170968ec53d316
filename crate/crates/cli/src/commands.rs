use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use tsception::baseline::{
    baseline_loso, permutation_null, BaselineSubject, LinearConfig, NullDistribution,
};
use tsception::data::{
    build_loso_folds, load_dataset, recording_paths, synth_generate, FoldSpec, SubjectData,
    SynthConfig, MANIFEST_FILE, RECORDING_EXT,
};
use tsception::dsp::{
    preprocess_subject, recording_features, window_samples, FeatureRow, FilterBank,
};
use tsception::gradcheck::{run_suite, Fault, SuiteReport};
use tsception::model::{load_checkpoint, save_checkpoint, Model, ModelConfig, VariantKind};
use tsception::tensor::{Graph, Tensor};
use tsception::train::{loso_crossval, train_fold, SubjectResult, TrainConfig};

use crate::args::*;
use crate::manifest::{manifest_beside, RunManifest, RUN_MANIFEST};
use crate::tables::{
    accuracy_rows, group_by_subject, read_feature_csv, write_accuracy_csv, write_feature_csv,
    SubjectAccuracies,
};

pub const CHECKPOINT_FILE: &str = "checkpoint.tsck";
pub const FIT_REPORT_FILE: &str = "fit_report.json";
pub const ACCURACY_FILE: &str = "accuracy.csv";
pub const RESULTS_FILE: &str = "results.json";
pub const NULL_FILE: &str = "null.json";
pub const GRADCHECK_FILE: &str = "gradcheck.json";
pub const FOLDS_DIR: &str = "folds";

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn synth(cli: &Cli, a: &SynthArgs) -> Result<()> {
    let manifest = RunManifest::start("synth", cli, Some(a.seed))?;
    if a.out.exists() {
        let non_empty = fs::read_dir(&a.out)
            .with_context(|| format!("reading {}", a.out.display()))?
            .next()
            .is_some();
        if non_empty && !a.force {
            bail!(
                "{} exists and is not empty; pass --force to overwrite",
                a.out.display()
            );
        }
        if a.force {
            for p in recording_paths(&a.out)? {
                fs::remove_file(&p).with_context(|| format!("removing {}", p.display()))?;
            }
        }
    }
    let cfg = SynthConfig {
        n_subjects: a.subjects,
        n_sessions: a.sessions,
        fs: a.fs,
        duration_s: a.duration,
        seed: a.seed,
        snr: a.snr,
    };
    let ds = synth_generate(&cfg, &a.out)?;
    let manifest_path = a.out.join(MANIFEST_FILE);
    log::info!("wrote {} recordings to {}", ds.files.len(), a.out.display());
    println!("{}", manifest_path.display());
    let mut outputs = vec![manifest_path];
    outputs.extend(ds.files.iter().map(|f| a.out.join(&f.path)));
    manifest.finish(outputs, &a.out.join(RUN_MANIFEST))?;
    Ok(())
}

fn train_config(t: &TrainArgs) -> TrainConfig {
    TrainConfig {
        lr: t.lr,
        batch_size: t.batch,
        lambda: t.lambda,
        patience: t.patience,
        max_epochs: t.max_epochs,
        seed: t.seed,
        ..TrainConfig::default()
    }
}

fn fold_spec(t: &TrainArgs) -> FoldSpec {
    FoldSpec {
        window_s: t.window,
        step_samples: t.step,
        val_fraction: t.val_fraction,
        seed: t.seed,
        mode: t.split,
    }
}

fn model_config(t: &TrainArgs, subject: &SubjectData) -> ModelConfig {
    ModelConfig {
        fs: subject.fs(),
        num_channels: subject.channel_names().len(),
        segment_len: window_samples(t.window, subject.fs()),
        dropout_rate: t.dropout,
        ..ModelConfig::for_variant(t.model)
    }
}

fn load_subjects(data: &Path, only: &[String]) -> Result<Vec<SubjectData>> {
    let all = load_dataset(data).with_context(|| format!("loading dataset {}", data.display()))?;
    if only.is_empty() {
        return Ok(all);
    }
    let available: Vec<&str> = all.iter().map(|s| s.subject_id.as_str()).collect();
    if let Some(missing) = only.iter().find(|id| !available.contains(&id.as_str())) {
        bail!(
            "unknown subject {missing:?}; available: {}",
            available.join(", ")
        );
    }
    Ok(all
        .into_iter()
        .filter(|s| only.contains(&s.subject_id))
        .collect())
}

pub fn train(cli: &Cli, a: &TrainCmd) -> Result<()> {
    let manifest = RunManifest::start("train", cli, Some(a.train.seed))?;
    let subject = load_subjects(&a.data.data, std::slice::from_ref(&a.subject))?
        .pop()
        .ok_or_else(|| anyhow!("subject {} not found", a.subject))?;
    let n_sessions = subject.sessions.len();
    if a.fold >= n_sessions {
        bail!(
            "fold {} does not exist; subject {} has folds 0..={} (sessions {})",
            a.fold,
            subject.subject_id,
            n_sessions.saturating_sub(1),
            subject
                .sessions
                .iter()
                .map(|s| s.session_id.as_str())
                .collect::<Vec<_>>()
                .join(", ")
        );
    }
    let model_cfg = model_config(&a.train, &subject);
    let count = Model::<f32>::new(a.train.model, model_cfg.clone(), 0)?.count_parameters();
    println!("{}: {count} trainable parameters", a.train.model);

    let clean = preprocess_subject(&subject)?;
    let fold = build_loso_folds(&clean, &fold_spec(&a.train))?.swap_remove(a.fold);
    let (model, result) = train_fold(&fold, a.train.model, &model_cfg, &train_config(&a.train))?;
    println!(
        "fold {} (test {}): test accuracy {:.4}, best val accuracy {:.4} at epoch {}, stopped at epoch {}",
        result.fold,
        result.test_session,
        result.accuracy,
        result.fit.best_val_accuracy,
        result.fit.best_epoch,
        result.fit.stopped_epoch
    );
    create_dir(&a.out)?;
    let ckpt = a.out.join(CHECKPOINT_FILE);
    save_checkpoint(&model, &ckpt)?;
    let report = a.out.join(FIT_REPORT_FILE);
    write_json(&report, &result)?;
    manifest.finish(vec![ckpt, report], &a.out.join(RUN_MANIFEST))?;
    Ok(())
}

pub fn crossval(cli: &Cli, a: &CrossvalCmd) -> Result<()> {
    let manifest = RunManifest::start("crossval", cli, Some(a.train.seed))?;
    let subjects = load_subjects(&a.data.data, &a.subjects)?;
    let cfg = train_config(&a.train);
    let spec = fold_spec(&a.train);
    create_dir(&a.out.join(FOLDS_DIR))?;
    let mut outputs = Vec::new();
    let results: Vec<(SubjectResult, Vec<PathBuf>)> = subjects
        .par_iter()
        .map(|s| -> Result<_> {
            let clean = preprocess_subject(s)?;
            let r = loso_crossval(
                &clean,
                a.train.model,
                &model_config(&a.train, s),
                &cfg,
                &spec,
            )
            .with_context(|| format!("subject {}", s.subject_id))?;
            let mut files = Vec::new();
            for f in &r.folds {
                let p = a
                    .out
                    .join(FOLDS_DIR)
                    .join(format!("{}_fold{}.json", r.subject, f.fold));
                write_json(&p, f)?;
                files.push(p);
            }
            log::info!("subject {}: mean {:.4} std {:.4}", r.subject, r.mean, r.std);
            Ok((r, files))
        })
        .collect::<Result<_>>()?;
    let summary: Vec<SubjectAccuracies> = results
        .iter()
        .map(|(r, _)| SubjectAccuracies {
            subject: r.subject.clone(),
            folds: r.folds.iter().map(|f| f.accuracy).collect(),
        })
        .collect();
    let (rows, grand, grand_std) = accuracy_rows(&summary);
    let csv_path = a.out.join(ACCURACY_FILE);
    write_accuracy_csv(&csv_path, &rows)?;
    let json_path = a.out.join(RESULTS_FILE);
    let subject_results: Vec<&SubjectResult> = results.iter().map(|(r, _)| r).collect();
    write_json(&json_path, &subject_results)?;
    println!(
        "{} over {} subjects: grand mean accuracy {grand:.4} (std {grand_std:.4})",
        a.train.model,
        summary.len()
    );
    outputs.push(csv_path);
    outputs.push(json_path);
    outputs.extend(results.into_iter().flat_map(|(_, f)| f));
    manifest.finish(outputs, &a.out.join(RUN_MANIFEST))?;
    Ok(())
}

pub fn features(cli: &Cli, a: &FeaturesArgs) -> Result<()> {
    let manifest = RunManifest::start("features", cli, None)?;
    let subjects = load_subjects(&a.data.data, &a.subjects)?;
    let n_channels = subjects[0].channel_names().len();
    if let Some(s) = subjects
        .iter()
        .find(|s| s.channel_names().len() != n_channels)
    {
        bail!(
            "subject {} has {} channels, others have {n_channels}",
            s.subject_id,
            s.channel_names().len()
        );
    }
    let mut rows: Vec<FeatureRow> = Vec::new();
    for s in &subjects {
        let clean = preprocess_subject(s)?;
        let bank = FilterBank::new(clean.fs())?;
        for rec in clean.recordings() {
            rows.extend(recording_features(rec, &bank, a.window, a.step)?);
        }
        log::info!(
            "subject {}: {} feature rows so far",
            s.subject_id,
            rows.len()
        );
    }
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_feature_csv(&a.out, n_channels, &rows)?;
    println!("{} rows written to {}", rows.len(), a.out.display());
    manifest.finish(vec![a.out.clone()], &manifest_beside(&a.out))?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct NullSummary {
    kind: String,
    grand_mean_accuracy: f64,
    null: NullDistribution,
    z_above_chance: f64,
    beats_null: bool,
}

pub fn baseline(cli: &Cli, a: &BaselineArgs) -> Result<()> {
    let manifest = RunManifest::start("baseline", cli, Some(a.seed))?;
    let rows = read_feature_csv(&a.features)?;
    if rows.is_empty() {
        bail!("{} has no feature rows", a.features.display());
    }
    let groups = group_by_subject(rows);
    let cfg = LinearConfig {
        epochs: a.epochs,
        lr: a.lr,
        reg: a.reg,
        seed: a.seed,
    };
    let shuffle = a.shuffle_labels.then_some(a.seed);
    let results: Vec<BaselineSubject> = groups
        .par_iter()
        .map(|g| baseline_loso(g, a.kind, &cfg, shuffle))
        .collect::<Result<_, _>>()?;
    let summary: Vec<SubjectAccuracies> = results
        .iter()
        .map(|r| SubjectAccuracies {
            subject: r.subject.clone(),
            folds: r.folds.iter().map(|f| f.accuracy).collect(),
        })
        .collect();
    let (table, grand, grand_std) = accuracy_rows(&summary);
    create_dir(&a.out)?;
    let csv_path = a.out.join(ACCURACY_FILE);
    write_accuracy_csv(&csv_path, &table)?;
    println!(
        "linear baseline ({}) over {} subjects: grand mean accuracy {grand:.4} (std {grand_std:.4})",
        a.kind,
        summary.len()
    );
    let mut outputs = vec![csv_path];
    if a.permutations > 0 {
        let null = permutation_null(
            &groups,
            a.kind,
            &cfg,
            a.permutations,
            a.seed.wrapping_add(1),
        )?;
        let z = null.z_above_chance(grand);
        println!(
            "permutation null: {:.4} +/- {:.4} over {} permutations; accuracy is {z:.1} sigma above chance",
            null.mean, null.std, a.permutations
        );
        let path = a.out.join(NULL_FILE);
        write_json(
            &path,
            &NullSummary {
                kind: a.kind.to_string(),
                grand_mean_accuracy: grand,
                beats_null: grand - 0.5 > 3.0 * null.std,
                z_above_chance: z,
                null,
            },
        )?;
        outputs.push(path);
    }
    manifest.finish(outputs, &a.out.join(RUN_MANIFEST))?;
    Ok(())
}

pub fn gradcheck(cli: &Cli, a: &GradcheckArgs) -> Result<()> {
    let manifest = RunManifest::start("gradcheck", cli, Some(a.seed))?;
    if a.seeds == 0 {
        bail!("--seeds must be at least 1");
    }
    let fault = a
        .inject_fault
        .map(|InjectedFault::Conv| Fault::ConvBackward);
    let reports: Vec<SuiteReport> = (a.seed..a.seed + a.seeds)
        .into_par_iter()
        .map(|s| run_suite(s, fault))
        .collect::<Result<_, _>>()?;
    for r in &reports {
        for c in &r.checks {
            println!(
                "seed {:>3}  {:<24} max rel error {:.3e}  ({} checked, {} skipped)  {}",
                r.seed,
                c.name,
                c.max_rel_error,
                c.checked,
                c.skipped,
                if c.passed() { "ok" } else { "FAIL" }
            );
        }
    }
    let worst = reports
        .iter()
        .map(SuiteReport::max_rel_error)
        .fold(0.0, f64::max);
    println!("max relative error {worst:.3e}");
    if let Some(dir) = &a.out {
        create_dir(dir)?;
        let path = dir.join(GRADCHECK_FILE);
        write_json(&path, &reports)?;
        manifest.finish(vec![path], &dir.join(RUN_MANIFEST))?;
    }
    if !reports.iter().all(SuiteReport::passed) {
        bail!("gradient check failed: max relative error {worst:.3e}");
    }
    Ok(())
}

fn describe_model(model: &mut Model<f32>) -> Result<()> {
    let cfg = model.config().clone();
    println!(
        "{} ({} Hz, {} channels, {} samples)",
        model.kind(),
        cfg.fs,
        cfg.num_channels,
        cfg.segment_len
    );
    for p in model.params() {
        println!(
            "  {:<24} {:<18} {:>8}",
            p.name,
            format!("{:?}", p.tensor.shape()),
            p.tensor.numel()
        );
    }
    println!("  total trainable parameters: {}", model.count_parameters());
    let mut g = Graph::<f32>::new();
    let bound = model.bind(&mut g);
    let x = g.input(Tensor::zeros(&[1, 1, cfg.num_channels, cfg.segment_len]));
    let mut h = x;
    if model.kind().has_temporal() {
        h = model.temporal_forward(&mut g, &bound, h)?;
        println!("  temporal output {:?}", g.shape(h));
    }
    if model.kind().has_spatial() {
        h = model.spatial_forward(&mut g, &bound, h)?;
        println!("  spatial output {:?}", g.shape(h));
    }
    let y = model.classifier_forward(&mut g, &bound, h)?;
    println!("  logits {:?}", g.shape(y));
    Ok(())
}

pub fn inspect(_cli: &Cli, a: &InspectArgs) -> Result<()> {
    if let Some(path) = &a.checkpoint {
        let mut model = load_checkpoint::<f32>(path)?;
        return describe_model(&mut model);
    }
    if let Some(dir) = &a.data {
        let subjects = load_dataset(dir)?;
        let n: usize = subjects.iter().map(|s| s.recordings().count()).sum();
        println!(
            "{}: {} subjects, {n} .{RECORDING_EXT} recordings",
            dir.display(),
            subjects.len()
        );
        for s in &subjects {
            let r = s
                .recordings()
                .next()
                .expect("validated subjects have recordings");
            println!(
                "  {}: {} sessions, {} Hz, {:.1} s, channels {}",
                s.subject_id,
                s.sessions.len(),
                s.fs(),
                r.duration_s(),
                s.channel_names().join(",")
            );
        }
        return Ok(());
    }
    let kind = a.model.unwrap_or(VariantKind::TSception);
    let mut model = Model::<f32>::new(kind, ModelConfig::for_variant(kind), 0)?;
    describe_model(&mut model)
}
