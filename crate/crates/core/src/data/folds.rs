//! Leave-one-session-out folds with a stratified train/validation split.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::dataset::{Session, SubjectData};
use super::segments::SegmentSet;
use crate::dsp::{segment, window_samples, STEP_SAMPLES, WINDOW_S};
use crate::error::{Error, Result};
use crate::SeededRng;

/// How the pooled training sessions are divided into train and validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    /// Seeded shuffle within each class. Overlapping neighbours of a
    /// validation window may sit in the training set.
    #[default]
    Random,
    /// The first part of every recording trains, the tail validates, and
    /// tail windows overlapping any training window are dropped.
    Chronological,
}

impl fmt::Display for SplitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitMode::Random => "random",
            SplitMode::Chronological => "chronological",
        })
    }
}

impl FromStr for SplitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(SplitMode::Random),
            "chronological" => Ok(SplitMode::Chronological),
            _ => Err(Error::Config(format!(
                "unknown split mode {s:?} (random|chronological)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSpec {
    pub window_s: f64,
    pub step_samples: usize,
    pub val_fraction: f64,
    pub seed: u64,
    pub mode: SplitMode,
}

impl Default for FoldSpec {
    fn default() -> Self {
        Self {
            window_s: WINDOW_S,
            step_samples: STEP_SAMPLES,
            val_fraction: 0.2,
            seed: 0,
            mode: SplitMode::Random,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Fold {
    pub index: usize,
    pub test_session: String,
    pub train: SegmentSet,
    pub val: SegmentSet,
    pub test: SegmentSet,
}

/// All windows of a session, recordings in stored order.
pub fn segment_session(session: &Session, window_s: f64, step: usize) -> Result<SegmentSet> {
    let sets = session
        .recordings
        .iter()
        .map(|r| segment(r, window_s, step))
        .collect::<Result<Vec<_>>>()?;
    SegmentSet::concat(&sets)
}

fn train_count(n: usize, val_fraction: f64) -> usize {
    ((n as f64) * (1.0 - val_fraction)).floor() as usize
}

fn split_random(
    pool: &SegmentSet,
    spec: &FoldSpec,
    rng: &mut SeededRng,
) -> (Vec<usize>, Vec<usize>) {
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for class in 0..2 {
        let mut idx: Vec<usize> = (0..pool.len())
            .filter(|&i| pool.labels[i] == class)
            .collect();
        idx.shuffle(rng);
        let k = train_count(idx.len(), spec.val_fraction);
        train.extend_from_slice(&idx[..k]);
        val.extend_from_slice(&idx[k..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

fn split_chronological(
    pool: &SegmentSet,
    spec: &FoldSpec,
    window: usize,
) -> (Vec<usize>, Vec<usize>) {
    // windows i and j overlap while |i - j| * step < window
    let guard = window.div_ceil(spec.step_samples).saturating_sub(1);
    let (mut train, mut val) = (Vec::new(), Vec::new());
    let mut start = 0;
    while start < pool.len() {
        let p = &pool.provenance[start];
        let end = (start..pool.len())
            .find(|&i| {
                let q = &pool.provenance[i];
                (&q.session, &q.stimulus) != (&p.session, &p.stimulus)
            })
            .unwrap_or(pool.len());
        let k = train_count(end - start, spec.val_fraction);
        train.extend(start..start + k);
        val.extend((start + k + guard).min(end)..end);
        start = end;
    }
    (train, val)
}

/// One fold per session: that session is the test set, the others are
/// pooled and split into train and validation. Every fold's split uses the
/// same seed, so identical pools split identically.
pub fn build_loso_folds(subject: &SubjectData, spec: &FoldSpec) -> Result<Vec<Fold>> {
    if subject.sessions.len() < 2 {
        return Err(Error::Validation(format!(
            "subject {} has {} session(s); leave-one-session-out needs at least 2",
            subject.subject_id,
            subject.sessions.len()
        )));
    }
    if !(spec.val_fraction > 0.0 && spec.val_fraction < 1.0) {
        return Err(Error::Config(format!(
            "validation fraction {} must be in (0, 1)",
            spec.val_fraction
        )));
    }
    let window = window_samples(spec.window_s, subject.fs());
    let per_session = subject
        .sessions
        .iter()
        .map(|s| segment_session(s, spec.window_s, spec.step_samples))
        .collect::<Result<Vec<_>>>()?;
    (0..per_session.len())
        .map(|k| {
            let others: Vec<SegmentSet> = per_session
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != k)
                .map(|(_, s)| s.clone())
                .collect();
            let pool = SegmentSet::concat(&others)?;
            let (train_idx, val_idx) = match spec.mode {
                SplitMode::Random => {
                    let mut rng = SeededRng::seed_from_u64(spec.seed);
                    split_random(&pool, spec, &mut rng)
                }
                SplitMode::Chronological => split_chronological(&pool, spec, window),
            };
            let fold = Fold {
                index: k,
                test_session: subject.sessions[k].session_id.clone(),
                train: pool.subset(&train_idx)?,
                val: pool.subset(&val_idx)?,
                test: per_session[k].clone(),
            };
            if fold.train.is_empty() || fold.val.is_empty() {
                return Err(Error::Empty(format!(
                    "train or validation split of fold {k} for subject {}",
                    subject.subject_id
                )));
            }
            Ok(fold)
        })
        .collect()
}
