//! Preprocessing, the nine-band zero-phase filter bank, band features and
//! sliding-window segmentation.

mod design;
mod features;
mod filter;

pub use design::{design_butter_bandpass, design_cheby2_bandpass, FilterSpec, Section, Sos};
pub use features::{
    band_edges, channel_features, differential_entropy, energy, extract_features, filter_bank,
    relative_power, sample_variance, FeatureVector, FilterBank, BAND_WIDTH_HZ, NUM_BANDS,
};
pub use filter::{filtfilt, pad_len, sosfilt};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{EegRecording, Provenance, SegmentSet, Session, SubjectData};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const PREPROCESS_LOW_HZ: f64 = 0.3;
pub const PREPROCESS_HIGH_HZ: f64 = 45.0;
pub const PREPROCESS_ORDER: usize = 4;
pub const WINDOW_S: f64 = 4.0;
pub const STEP_SAMPLES: usize = 25;

/// The 0.3-45 Hz zero-phase band-pass used before everything else.
pub fn preprocess_filter(fs: f64) -> Result<Sos> {
    design_butter_bandpass(PREPROCESS_LOW_HZ, PREPROCESS_HIGH_HZ, fs, PREPROCESS_ORDER)
}

/// Band-passes every channel; metadata is carried over unchanged.
pub fn preprocess(raw: &EegRecording) -> Result<EegRecording> {
    let sos = preprocess_filter(raw.fs)?;
    let mut out = raw.clone();
    for c in 0..raw.num_channels() {
        let x: Vec<f64> = raw.channel(c).iter().map(|&v| f64::from(v)).collect();
        let y = filtfilt(&sos, &x)?;
        for (dst, v) in out.channel_mut(c).iter_mut().zip(y) {
            *dst = v as f32;
        }
    }
    Ok(out)
}

/// [`preprocess`] applied to every recording of a subject.
pub fn preprocess_subject(subject: &SubjectData) -> Result<SubjectData> {
    let sessions = subject
        .sessions
        .iter()
        .map(|s| {
            Ok(Session {
                session_id: s.session_id.clone(),
                recordings: s.recordings.iter().map(preprocess).collect::<Result<_>>()?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(SubjectData {
        subject_id: subject.subject_id.clone(),
        sessions,
    })
}

/// Window length in samples for a window given in seconds.
pub fn window_samples(window_s: f64, fs: f64) -> usize {
    (window_s * fs).round() as usize
}

/// Number of windows `floor((len - window) / step) + 1`, or zero when the
/// signal is shorter than one window.
pub fn segment_count(len: usize, window: usize, step: usize) -> usize {
    if len < window || window == 0 || step == 0 {
        0
    } else {
        (len - window) / step + 1
    }
}

/// Cuts a recording into `[N, 1, C, window]` segments carrying its label.
pub fn segment(rec: &EegRecording, window_s: f64, step_samples: usize) -> Result<SegmentSet> {
    let window = window_samples(window_s, rec.fs);
    if window == 0 || step_samples == 0 {
        return Err(Error::Config(format!(
            "window ({window} samples) and step ({step_samples}) must be positive"
        )));
    }
    if rec.n_samples < window {
        return Err(Error::SignalTooShort {
            len: rec.n_samples,
            min: window,
        });
    }
    let n = segment_count(rec.n_samples, window, step_samples);
    let c = rec.num_channels();
    let mut data = Vec::with_capacity(n * c * window);
    let mut provenance = Vec::with_capacity(n);
    for k in 0..n {
        let off = k * step_samples;
        for ch in 0..c {
            data.extend_from_slice(&rec.channel(ch)[off..off + window]);
        }
        provenance.push(Provenance {
            subject: rec.subject_id.clone(),
            session: rec.session_id.clone(),
            stimulus: rec.stimulus_id.clone(),
            window_index: k,
        });
    }
    SegmentSet::new(
        Tensor::new(vec![n, 1, c, window], data)?,
        vec![rec.label.index(); n],
        provenance,
    )
}

/// Features of one window, tagged with where it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub provenance: Provenance,
    pub label: usize,
    /// RP then DE, in the order of [`FeatureVector::column_names`].
    pub values: Vec<f64>,
}

/// Slides the same windows as [`segment`] over a preprocessed recording and
/// extracts RP/DE features from each.
pub fn recording_features(
    rec: &EegRecording,
    bank: &FilterBank,
    window_s: f64,
    step_samples: usize,
) -> Result<Vec<FeatureRow>> {
    if (bank.fs() - rec.fs).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "filter bank designed for {} Hz, recording sampled at {} Hz",
            bank.fs(),
            rec.fs
        )));
    }
    let set = segment(rec, window_s, step_samples)?;
    let (c, w) = (set.num_channels(), set.window());
    let data = set.segments.data();
    (0..set.len())
        .into_par_iter()
        .map(|k| {
            let channels: Vec<Vec<f64>> = (0..c)
                .map(|ch| {
                    let off = (k * c + ch) * w;
                    data[off..off + w].iter().map(|&v| f64::from(v)).collect()
                })
                .collect();
            let fv = extract_features(bank, &channels, &rec.channel_names)?;
            Ok(FeatureRow {
                provenance: set.provenance[k].clone(),
                label: set.labels[k],
                values: fv.to_vec(),
            })
        })
        .collect()
}
