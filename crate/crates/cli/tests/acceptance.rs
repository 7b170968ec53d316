//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines are printed even when everything passes.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use tsception::data::{
    build_loso_folds, generate_recording, Arousal, FoldSpec, Provenance, SegmentSet, SubjectData,
    SynthConfig,
};
use tsception::dsp::*;
use tsception::gradcheck::{miniature_config, run_suite, TOLERANCE};
use tsception::model::{Model, ModelConfig, ModelState, VariantKind};
use tsception::tensor::{Graph, Mode, Tensor};
use tsception::train::{fit_with_validator, loso_crossval, StopReason, SubjectResult, TrainConfig};
use tsception::SeededRng;
use tsception_cli::tables::{read_accuracy_csv, AccuracyRow};
use tsception_cli::{ACCURACY_FILE, FIT_REPORT_FILE, NULL_FILE, RESULTS_FILE};

type Check = Result<(bool, String), String>;

struct Criterion {
    id: u8,
    title: &'static str,
    budget: Duration,
    /// Non-gating criteria are reported but never fail the run.
    gating: bool,
}

fn run(c: &Criterion, f: impl FnOnce() -> Check) -> bool {
    let start = Instant::now();
    let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    let elapsed = start.elapsed();
    let (ok, detail) = match outcome {
        Ok((ok, detail)) => (ok, detail),
        Err(e) => (false, e),
    };
    let in_time = elapsed <= c.budget;
    let pass = ok && in_time;
    let verdict = match (pass, c.gating) {
        (true, _) => "PASS",
        (false, true) => "FAIL",
        (false, false) => "PASS (non-gating diagnostic did not hold)",
    };
    println!(
        "criterion {}: {verdict} | {} | {detail} | {:.1} s of {} s{}",
        c.id,
        c.title,
        elapsed.as_secs_f64(),
        c.budget.as_secs(),
        if in_time { "" } else { " (over budget)" }
    );
    pass || !c.gating
}

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_tsception"));
    cmd.env("RUST_LOG", "warn");
    cmd
}

fn cli(args: &[&str]) -> Result<String, String> {
    let out = bin().args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "`tsception {}` failed: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr).trim()
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn p(path: &Path) -> &str {
    path.to_str().expect("temp paths are UTF-8")
}

fn criterion_1() -> Check {
    let expected = [
        (VariantKind::TSception, 53_483),
        (VariantKind::Tception, 822_671),
        (VariantKind::Sception, 147_902),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (kind, want) in expected {
        let got = Model::<f32>::new(kind, ModelConfig::for_variant(kind), 0)
            .map_err(|e| e.to_string())?
            .count_parameters();
        ok &= got == want;
        parts.push(format!("{kind} {got} (want {want})"));
    }
    Ok((ok, parts.join(", ")))
}

fn synthetic_subject(cfg: &SynthConfig, subject: usize) -> SubjectData {
    let recs = (0..cfg.n_sessions)
        .flat_map(|s| {
            [Arousal::Low, Arousal::High].map(|l| generate_recording(cfg, subject, s, l).unwrap())
        })
        .collect::<Vec<_>>();
    SubjectData::from_recordings(&recs[0].subject_id.clone(), recs).unwrap()
}

fn criterion_2() -> Check {
    let mut ok = true;
    let mut model = Model::<f32>::new(VariantKind::TSception, ModelConfig::default(), 0)
        .map_err(|e| e.to_string())?;
    model.set_mode(Mode::Eval);
    for b in [1, 7, 128] {
        let mut g = Graph::<f32>::new();
        let bound = model.bind(&mut g);
        let x = g.input(Tensor::zeros(&[b, 1, 4, 1024]));
        let t = model
            .temporal_forward(&mut g, &bound, x)
            .map_err(|e| e.to_string())?;
        let s = model
            .spatial_forward(&mut g, &bound, t)
            .map_err(|e| e.to_string())?;
        let y = model
            .classifier_forward(&mut g, &bound, s)
            .map_err(|e| e.to_string())?;
        ok &= g.shape(t) == [b, 9, 4, 356] && g.shape(s) == [b, 6, 3, 22] && g.shape(y) == [b, 2];
    }
    let subject = synthetic_subject(&SynthConfig::default(), 0);
    let folds = build_loso_folds(&subject, &FoldSpec::default()).map_err(|e| e.to_string())?;
    let dims: Vec<[Vec<usize>; 3]> = folds
        .iter()
        .map(|f| [&f.train, &f.val, &f.test].map(|s| s.segments.shape().to_vec()))
        .collect();
    for d in &dims {
        ok &= d[0] == [1836, 1, 4, 1024] && d[1] == [460, 1, 4, 1024] && d[2] == [1148, 1, 4, 1024];
    }
    Ok((
        ok && folds.len() == 3,
        format!(
            "B in {{1,7,128}} -> (B,9,4,356) -> (B,6,3,22) -> (B,2); {} folds of train/val/test {:?}/{:?}/{:?}",
            folds.len(),
            dims[0][0],
            dims[0][1],
            dims[0][2]
        ),
    ))
}

fn criterion_3() -> Check {
    let required = [
        "conv2d",
        "avg_pool2d",
        "batch_norm",
        "linear",
        "relu",
        "softmax_cross_entropy",
        "tsception-miniature",
    ];
    let mut worst = 0.0f64;
    let mut ok = true;
    for seed in 0..10 {
        let r = run_suite(seed, None).map_err(|e| e.to_string())?;
        for name in required {
            ok &= r.checks.iter().any(|c| c.name == name && c.checked > 0);
        }
        ok &= r.passed();
        worst = worst.max(r.max_rel_error());
    }
    let cfg = miniature_config();
    ok &= cfg.fs == 32.0 && cfg.segment_len == 128;
    ok &= worst < TOLERANCE && TOLERANCE == 1e-4;
    Ok((
        ok,
        format!("max relative error {worst:.2e} over 10 seeds (limit 1e-4)"),
    ))
}

fn tone(freq: f64, n: usize, fs: f64) -> Vec<f64> {
    (0..n)
        .map(|i| (2.0 * PI * freq * i as f64 / fs).sin())
        .collect()
}

fn power(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

/// Zero-phase gain over the middle of a 30 s probe; 0 Hz uses a constant.
fn zero_phase_gain_db(sos: &Sos, freq: f64, fs: f64) -> f64 {
    let n = 30 * fs as usize;
    let x = if freq == 0.0 {
        vec![1.0; n]
    } else {
        tone(freq, n, fs)
    };
    let y = filtfilt(sos, &x).unwrap();
    let (a, b) = (10 * fs as usize, 20 * fs as usize);
    10.0 * (power(&y[a..b]) / power(&x[a..b])).log10()
}

fn criterion_4() -> Check {
    let fs = 256.0;
    let mut ok = true;
    let mut parts = Vec::new();

    let rec = EegRecordingBuilder::constant(fs, 60.0);
    let n_seg = segment(&rec, 4.0, 25).map_err(|e| e.to_string())?.len();
    ok &= n_seg == 574 && segment_count(15_360, 1024, 25) == 574;
    parts.push(format!("{n_seg} segments"));

    let mut rng = SeededRng::seed_from_u64(4);
    let noise: Vec<f64> = (0..1024).map(|_| rng.sample(StandardNormal)).collect();
    let bank = FilterBank::new(fs).map_err(|e| e.to_string())?;
    let (rp, _) = channel_features(&bank, &noise).map_err(|e| e.to_string())?;
    let rp_err = (rp.iter().sum::<f64>() - 1.0).abs();
    ok &= rp_err <= 1e-9;
    parts.push(format!("|sum RP - 1| {rp_err:.1e}"));

    // standardized so the unbiased variance is exactly one
    let mut x: Vec<f64> = (0..4096).map(|_| rng.sample(StandardNormal)).collect();
    let m = x.iter().sum::<f64>() / x.len() as f64;
    let sd = (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64).sqrt();
    x.iter_mut().for_each(|v| *v = (*v - m) / sd);
    let de_exact = differential_entropy(&x).map_err(|e| e.to_string())?;
    let mc: Vec<f64> = (0..100_000).map(|_| rng.sample(StandardNormal)).collect();
    let de_mc = differential_entropy(&mc).map_err(|e| e.to_string())?;
    ok &= (de_exact - 1.418939).abs() <= 1e-6 && (de_mc - 1.418939).abs() <= 0.01;
    parts.push(format!("DE {de_exact:.6} exact, {de_mc:.4} Monte-Carlo"));

    let mut worst_stop = f64::NEG_INFINITY;
    let mut worst_mid = 0.0f64;
    for (lo, hi) in band_edges() {
        let spec = FilterSpec::band(lo, hi, fs);
        let sos = design_cheby2_bandpass(&spec).map_err(|e| e.to_string())?;
        let (s_lo, s_hi) = spec.stop_edges();
        for f in [(s_lo - 2.0).max(0.0), s_hi + 2.0] {
            worst_stop = worst_stop.max(zero_phase_gain_db(&sos, f, fs));
        }
        let mid = zero_phase_gain_db(&sos, (lo + hi) / 2.0, fs);
        worst_mid = worst_mid.max(mid.abs());
    }
    ok &= worst_stop <= -37.0 && worst_mid <= 3.0;
    parts.push(format!(
        "worst probe attenuation {:.1} dB, worst mid-band deviation {worst_mid:.2} dB",
        -worst_stop
    ));

    let mut lags = Vec::new();
    for (lo, hi) in band_edges() {
        let sos =
            design_cheby2_bandpass(&FilterSpec::band(lo, hi, fs)).map_err(|e| e.to_string())?;
        let f = (lo + hi) / 2.0;
        let x = tone(f, 4096, fs);
        let y = filtfilt(&sos, &x).map_err(|e| e.to_string())?;
        let half = (fs / f / 2.0).floor() as i64;
        let xcorr = |lag: i64| -> f64 {
            (512..3584)
                .map(|i| x[i] * y[(i as i64 + lag) as usize])
                .sum()
        };
        let best = (-half..=half)
            .max_by(|&a, &b| xcorr(a).total_cmp(&xcorr(b)))
            .unwrap();
        lags.push(best);
    }
    ok &= lags.iter().all(|&l| l == 0);
    parts.push(format!("cross-correlation peak lags {lags:?}"));
    Ok((ok, parts.join("; ")))
}

struct EegRecordingBuilder;

impl EegRecordingBuilder {
    fn constant(fs: f64, seconds: f64) -> tsception::data::EegRecording {
        let n = (fs * seconds) as usize;
        tsception::data::EegRecording::new(
            vec![0.5; 4 * n],
            fs,
            ["TP9", "AF7", "AF8", "TP10"].map(String::from).to_vec(),
            Arousal::Low,
            "s01",
            "session1",
            "low_arousal",
        )
        .unwrap()
    }
}

fn random_set(n: usize, seed: u64) -> SegmentSet {
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
    SegmentSet::new(x, (0..n).map(|i| i % 2).collect(), prov).unwrap()
}

fn criterion_5() -> Check {
    // improvements at epochs 1, 2 and 4; ties do not count
    let script = [0.55, 0.70, 0.65, 0.72, 0.72, 0.71, 0.60, 0.72, 0.99, 0.99];
    let patience = 4;
    let cfg = TrainConfig {
        batch_size: 4,
        patience,
        max_epochs: script.len(),
        ..TrainConfig::default()
    };
    let (train, val) = (random_set(12, 1), random_set(6, 2));
    let mut model = Model::<f32>::new(VariantKind::TSception, miniature_config(), 3)
        .map_err(|e| e.to_string())?;
    let mut states: Vec<ModelState<f32>> = Vec::new();
    let mut restored_epoch = None;
    let report = fit_with_validator(&mut model, &train, &val, &cfg, |m, _| {
        let st = m.state();
        if let Some(k) = states.iter().position(|s| *s == st) {
            if k + 1 != states.len() {
                restored_epoch = Some(k + 1);
            }
            return Ok(script[k]);
        }
        states.push(st);
        Ok(script[states.len() - 1])
    })
    .map_err(|e| e.to_string())?;
    let last_improvement = 4;
    let acc_max = report
        .val_accuracies
        .iter()
        .copied()
        .fold(f64::MIN, f64::max);
    let ok = report.stopped_epoch == last_improvement + patience
        && report.stop_reason == StopReason::Patience
        && report.best_epoch == last_improvement
        && restored_epoch == Some(last_improvement)
        && report.restored_val_accuracy == acc_max
        && model.state() == states[last_improvement - 1];
    Ok((
        ok,
        format!(
            "stopped at epoch {} (last improvement {last_improvement}, patience {patience}); restored epoch {:?}, reported val acc {} == max {acc_max}",
            report.stopped_epoch, restored_epoch, report.restored_val_accuracy
        ),
    ))
}

struct Workspace {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

fn workspace() -> Workspace {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    Workspace { _dir: dir, root }
}

fn criterion_6(ws: &Workspace) -> Check {
    let data = ws.root.join("data");
    cli(&[
        "synth",
        "--subjects",
        "3",
        "--snr",
        "1",
        "--seed",
        "0",
        "--out",
        p(&data),
    ])?;
    let cv = ws.root.join("cv-tsception");
    cli(&[
        "crossval",
        "--data",
        p(&data),
        "--model",
        "tsception",
        "--max-epochs",
        "50",
        "--out",
        p(&cv),
    ])?;
    let rows = read_accuracy_csv(&cv.join(ACCURACY_FILE)).map_err(|e| e.to_string())?;
    let grand: &AccuracyRow = rows.last().ok_or("empty accuracy table")?;
    let results: Vec<SubjectResult> = serde_json::from_str(
        &fs::read_to_string(cv.join(RESULTS_FILE)).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    let max_epochs = results
        .iter()
        .flat_map(|s| &s.folds)
        .map(|f| f.fit.stopped_epoch)
        .max()
        .unwrap_or(0);

    let features = ws.root.join("features.csv");
    cli(&["features", "--data", p(&data), "--out", p(&features)])?;
    let bl = ws.root.join("baseline-de");
    cli(&[
        "baseline",
        "--features",
        p(&features),
        "--kind",
        "de",
        "--permutations",
        "100",
        "--out",
        p(&bl),
    ])?;
    let null: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(bl.join(NULL_FILE)).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    let de_acc = null["grand_mean_accuracy"]
        .as_f64()
        .ok_or("missing accuracy")?;
    let null_std = null["null"]["std"].as_f64().ok_or("missing null std")?;

    let ok = grand.subject == "all"
        && rows.len() == 3 * 3 + 3 + 1
        && grand.accuracy >= 0.90
        && max_epochs <= 50
        && de_acc - 0.5 > 3.0 * null_std;
    Ok((
        ok,
        format!(
            "TSception grand mean {:.4} (std {:.4}, limit >= 0.90, at most {max_epochs} epochs per fold); linear DE {de_acc:.4} vs null sigma {null_std:.4}: margin {:.3} > 3 sigma {:.3}",
            grand.accuracy,
            grand.std.unwrap_or(f64::NAN),
            de_acc - 0.5,
            3.0 * null_std
        ),
    ))
}

fn criterion_7(ws: &Workspace) -> Check {
    // The published accuracies need the private dataset; this only
    // reports whether the variants keep their published order on subject
    // s01 of the synthetic data.
    let subject = tsception::data::load_dataset(&ws.root.join("data"))
        .map_err(|e| e.to_string())?
        .into_iter()
        .next()
        .ok_or("no subjects")?;
    let clean = preprocess_subject(&subject).map_err(|e| e.to_string())?;
    let cfg = TrainConfig {
        max_epochs: 50,
        ..TrainConfig::default()
    };
    let mut acc = Vec::new();
    for kind in VariantKind::ALL {
        let r = loso_crossval(
            &clean,
            kind,
            &ModelConfig::for_variant(kind),
            &cfg,
            &FoldSpec::default(),
        )
        .map_err(|e| e.to_string())?;
        acc.push((kind, r.mean));
    }
    let holds = acc[0].1 > acc[1].1 && acc[1].1 > acc[2].1;
    let listing: Vec<String> = acc.iter().map(|(k, a)| format!("{k} {a:.4}")).collect();
    Ok((
        holds,
        format!(
            "published accuracies not reproducible (private data); ordering on s01: {} -> {}",
            listing.join(" / "),
            if holds {
                "holds"
            } else {
                "does not hold strictly"
            }
        ),
    ))
}

fn criterion_8(ws: &Workspace) -> Check {
    let data = ws.root.join("small");
    cli(&[
        "synth",
        "--subjects",
        "1",
        "--sessions",
        "2",
        "--duration",
        "20",
        "--seed",
        "8",
        "--out",
        p(&data),
    ])?;
    let mut reports = Vec::new();
    let mut checkpoints = Vec::new();
    for run in ["a", "b"] {
        let out = ws.root.join(format!("det-{run}"));
        cli(&[
            "train",
            "--data",
            p(&data),
            "--subject",
            "s01",
            "--fold",
            "0",
            "--seed",
            "11",
            "--max-epochs",
            "6",
            "--patience",
            "10",
            "--out",
            p(&out),
        ])?;
        let v: serde_json::Value = serde_json::from_str(
            &fs::read_to_string(out.join(FIT_REPORT_FILE)).map_err(|e| e.to_string())?,
        )
        .map_err(|e| e.to_string())?;
        reports.push(v["fit"]["train_losses"].clone());
        checkpoints
            .push(fs::read(out.join(tsception_cli::CHECKPOINT_FILE)).map_err(|e| e.to_string())?);
    }
    let n = reports[0].as_array().map_or(0, Vec::len);
    let ok = n == 6 && reports[0] == reports[1] && checkpoints[0] == checkpoints[1];
    Ok((
        ok,
        format!(
            "{n} epoch losses identical: {}; checkpoints identical: {}",
            reports[0] == reports[1],
            checkpoints[0] == checkpoints[1]
        ),
    ))
}

fn main() {
    // `cargo test -- <filter>` and libtest flags are accepted but ignored
    let secs = Duration::from_secs;
    let c = |id, title, budget, gating| Criterion {
        id,
        title,
        budget,
        gating,
    };
    let ws = workspace();
    let results = [
        run(&c(1, "parameter counts", secs(1), true), criterion_1),
        run(&c(2, "shape suite", secs(10), true), criterion_2),
        run(&c(3, "gradient correctness", secs(60), true), criterion_3),
        run(&c(4, "DSP oracles", secs(30), true), criterion_4),
        run(&c(5, "early-stopping contract", secs(5), true), criterion_5),
        run(&c(6, "end-to-end learning", secs(30 * 60), true), || {
            criterion_6(&ws)
        }),
        run(
            &c(
                7,
                "non-reproducibility and variant ordering",
                secs(30 * 60),
                false,
            ),
            || criterion_7(&ws),
        ),
        run(&c(8, "determinism", secs(5 * 60), true), || {
            criterion_8(&ws)
        }),
    ];
    let failed = results.iter().filter(|ok| !**ok).count();
    println!(
        "acceptance: {} of {} criteria passed",
        results.len() - failed,
        results.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
