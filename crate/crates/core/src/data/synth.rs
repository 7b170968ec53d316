//! Seeded synthetic EEG with a known arousal rule.
//!
//! Every channel carries unit-RMS pink noise scaled by a per-subject,
//! per-channel gain. High-arousal recordings add 18-40 Hz bursts that are
//! stronger over AF8 than AF7; low-arousal recordings add left/right
//! symmetric 8-12 Hz alpha. The class component's power on its strongest
//! channel is `snr` times the background power there.

use std::f64::consts::PI;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::format::{save_recording, RECORDING_EXT, RECORDING_MAGIC};
use super::montage::MUSE_MONTAGE;
use super::recording::{Arousal, EegRecording};
use crate::error::{Error, Result};
use crate::SeededRng;

pub const MANIFEST_FILE: &str = "manifest.json";
/// Background amplitude in microvolts.
const BACKGROUND_UV: f64 = 10.0;
const HIGH_WEIGHTS: [f64; 4] = [0.25, 0.4, 1.0, 0.5];
const LOW_WEIGHTS: [f64; 4] = [1.0, 0.6, 0.6, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_subjects: usize,
    pub n_sessions: usize,
    pub fs: f64,
    pub duration_s: f64,
    pub seed: u64,
    pub snr: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_subjects: 18,
            n_sessions: 3,
            fs: 256.0,
            duration_s: 60.0,
            seed: 0,
            snr: 1.0,
        }
    }
}

impl SynthConfig {
    pub fn n_samples(&self) -> usize {
        (self.duration_s * self.fs).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_subjects == 0 || self.n_sessions == 0 {
            return Err(Error::Config(
                "need at least one subject and one session".into(),
            ));
        }
        if !(self.fs >= 80.0) {
            return Err(Error::Config(format!("fs {} must be >= 80 Hz", self.fs)));
        }
        let window = crate::dsp::window_samples(crate::dsp::WINDOW_S, self.fs);
        if self.n_samples() < window {
            return Err(Error::Config(format!(
                "duration {} s is shorter than one {} s window",
                self.duration_s,
                crate::dsp::WINDOW_S
            )));
        }
        if !(self.snr >= 0.0 && self.snr.is_finite()) {
            return Err(Error::Config(format!(
                "snr {} must be finite and >= 0",
                self.snr
            )));
        }
        Ok(())
    }
}

pub fn subject_id(i: usize) -> String {
    format!("s{:02}", i + 1)
}

pub fn session_id(i: usize) -> String {
    format!("session{}", i + 1)
}

pub fn stimulus_id(label: Arousal) -> String {
    format!("{label}_arousal")
}

/// Approximate 1/f noise: white noise through a bank of one-pole filters
/// (Kellet's coefficients), normalized to unit RMS.
fn pink_noise(rng: &mut SeededRng, n: usize) -> Vec<f64> {
    const BURN_IN: usize = 4096;
    let mut b = [0.0f64; 7];
    let mut out = Vec::with_capacity(n);
    for i in 0..n + BURN_IN {
        let w: f64 = StandardNormal.sample(rng);
        b[0] = 0.99886 * b[0] + w * 0.0555179;
        b[1] = 0.99332 * b[1] + w * 0.0750759;
        b[2] = 0.96900 * b[2] + w * 0.1538520;
        b[3] = 0.86650 * b[3] + w * 0.3104856;
        b[4] = 0.55000 * b[4] + w * 0.5329522;
        b[5] = -0.7616 * b[5] - w * 0.0168980;
        let p = b.iter().sum::<f64>() + w * 0.5362;
        b[6] = w * 0.115926;
        if i >= BURN_IN {
            out.push(p);
        }
    }
    normalize(&mut out);
    out
}

fn normalize(x: &mut [f64]) {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let rms = (x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / x.len() as f64).sqrt();
    if rms > 0.0 {
        x.iter_mut().for_each(|v| *v = (*v - mean) / rms);
    }
}

/// Hann-windowed 18-40 Hz bursts separated by short gaps.
fn beta_bursts(rng: &mut SeededRng, n: usize, fs: f64) -> Vec<f64> {
    let mut out = vec![0.0; n];
    let mut t = (rng.random_range(0.0..0.5) * fs) as usize;
    while t < n {
        let len = (rng.random_range(0.5..1.5) * fs) as usize;
        let freq = rng.random_range(18.0..40.0);
        let phase = rng.random_range(0.0..2.0 * PI);
        for k in 0..len.min(n - t) {
            let env = 0.5 - 0.5 * (2.0 * PI * k as f64 / len as f64).cos();
            out[t + k] += env * (2.0 * PI * freq * k as f64 / fs + phase).sin();
        }
        t += len + (rng.random_range(0.1..0.6) * fs) as usize;
    }
    normalize(&mut out);
    out
}

/// A few slowly amplitude-modulated 8-12 Hz components.
fn alpha_rhythm(rng: &mut SeededRng, n: usize, fs: f64) -> Vec<f64> {
    let comps: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.random_range(8.0..12.0),
                rng.random_range(0.0..2.0 * PI),
                rng.random_range(0.05..0.3),
                rng.random_range(0.0..2.0 * PI),
            )
        })
        .collect();
    let mut out: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / fs;
            comps
                .iter()
                .map(|&(f, ph, fm, phm)| {
                    (1.0 + 0.5 * (2.0 * PI * fm * t + phm).sin()) * (2.0 * PI * f * t + ph).sin()
                })
                .sum()
        })
        .collect();
    normalize(&mut out);
    out
}

fn stream_rng(seed: u64, stream: u64) -> SeededRng {
    let mut rng = SeededRng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Per-channel gains of one subject.
fn subject_gains(cfg: &SynthConfig, subject: usize) -> [f64; 4] {
    let mut rng = stream_rng(cfg.seed, (subject as u64) << 32);
    std::array::from_fn(|_| rng.random_range(0.7..1.3))
}

/// One recording, fully determined by the config seed and its indices.
pub fn generate_recording(
    cfg: &SynthConfig,
    subject: usize,
    session: usize,
    label: Arousal,
) -> Result<EegRecording> {
    cfg.validate()?;
    let n = cfg.n_samples();
    let gains = subject_gains(cfg, subject);
    let stream = ((subject as u64) << 32) | ((session as u64 + 1) << 1) | label.index() as u64;
    let mut rng = stream_rng(cfg.seed, stream);
    let (component, weights) = match label {
        Arousal::High => (beta_bursts(&mut rng, n, cfg.fs), HIGH_WEIGHTS),
        Arousal::Low => (alpha_rhythm(&mut rng, n, cfg.fs), LOW_WEIGHTS),
    };
    let amp = cfg.snr.sqrt();
    let mut data = Vec::with_capacity(4 * n);
    for c in 0..MUSE_MONTAGE.len() {
        let bg = pink_noise(&mut rng, n);
        data.extend(
            bg.iter()
                .zip(&component)
                .map(|(b, s)| (BACKGROUND_UV * gains[c] * (b + amp * weights[c] * s)) as f32),
        );
    }
    EegRecording::new(
        data,
        cfg.fs,
        MUSE_MONTAGE.iter().map(|s| s.to_string()).collect(),
        label,
        subject_id(subject),
        session_id(session),
        stimulus_id(label),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub subject_id: String,
    pub session_id: String,
    pub stimulus_id: String,
    pub label: Arousal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: String,
    pub config: SynthConfig,
    pub files: Vec<ManifestEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Writes the dataset and `manifest.json` under `out`; returns the manifest.
pub fn synth_generate(cfg: &SynthConfig, out: &Path) -> Result<DatasetManifest> {
    cfg.validate()?;
    let jobs: Vec<(usize, usize, Arousal)> = (0..cfg.n_subjects)
        .flat_map(|s| {
            (0..cfg.n_sessions).flat_map(move |k| [Arousal::Low, Arousal::High].map(|l| (s, k, l)))
        })
        .collect();
    let files = jobs
        .par_iter()
        .map(|&(s, k, label)| {
            let rec = generate_recording(cfg, s, k, label)?;
            let rel: PathBuf = [
                rec.subject_id.clone(),
                rec.session_id.clone(),
                format!("{}.{RECORDING_EXT}", rec.stimulus_id),
            ]
            .iter()
            .collect();
            let path = out.join(&rel);
            std::fs::create_dir_all(path.parent().expect("nested path"))?;
            save_recording(&rec, &path)?;
            Ok(ManifestEntry {
                path: rel.to_string_lossy().replace('\\', "/"),
                sha256: sha256_hex(&std::fs::read(&path)?),
                subject_id: rec.subject_id,
                session_id: rec.session_id,
                stimulus_id: rec.stimulus_id,
                label,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = DatasetManifest {
        format: String::from_utf8_lossy(RECORDING_MAGIC).into_owned(),
        config: cfg.clone(),
        files,
    };
    let mut f = std::fs::File::create(out.join(MANIFEST_FILE))?;
    serde_json::to_writer_pretty(&mut f, &manifest)?;
    f.write_all(b"\n")?;
    Ok(manifest)
}

/// Recomputes every checksum listed in `<root>/manifest.json`; returns the
/// paths that do not match.
pub fn verify_manifest(root: &Path) -> Result<Vec<String>> {
    let m: DatasetManifest = serde_json::from_slice(&std::fs::read(root.join(MANIFEST_FILE))?)?;
    let mut bad = Vec::new();
    for e in &m.files {
        match std::fs::read(root.join(&e.path)) {
            Ok(bytes) if sha256_hex(&bytes) == e.sha256 => {}
            _ => bad.push(e.path.clone()),
        }
    }
    Ok(bad)
}
