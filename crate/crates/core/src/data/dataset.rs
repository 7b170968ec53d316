//! Directory layout `<root>/<subject>/<session>/<stimulus>.eegrec`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::format::{load_recording, RECORDING_EXT};
use super::montage::validate_montage;
use super::recording::{Arousal, EegRecording};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub session_id: String,
    pub recordings: Vec<EegRecording>,
}

impl Session {
    pub fn recording(&self, label: Arousal) -> Option<&EegRecording> {
        self.recordings.iter().find(|r| r.label == label)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectData {
    pub subject_id: String,
    pub sessions: Vec<Session>,
}

impl SubjectData {
    /// Groups recordings of one subject by session, sorted by identifier.
    pub fn from_recordings(subject_id: &str, recordings: Vec<EegRecording>) -> Result<Self> {
        let mut by_session: BTreeMap<String, Vec<EegRecording>> = BTreeMap::new();
        for r in recordings {
            if r.subject_id != subject_id {
                return Err(Error::Validation(format!(
                    "recording of subject {} grouped under {subject_id}",
                    r.subject_id
                )));
            }
            by_session.entry(r.session_id.clone()).or_default().push(r);
        }
        let sessions = by_session
            .into_iter()
            .map(|(session_id, mut recordings)| {
                recordings
                    .sort_by(|a, b| (a.label, &a.stimulus_id).cmp(&(b.label, &b.stimulus_id)));
                Session {
                    session_id,
                    recordings,
                }
            })
            .collect();
        let s = Self {
            subject_id: subject_id.to_string(),
            sessions,
        };
        s.validate()?;
        Ok(s)
    }

    /// One low and one high recording per session, consistent sampling rate
    /// and montage across the subject.
    pub fn validate(&self) -> Result<()> {
        let first = self
            .sessions
            .first()
            .and_then(|s| s.recordings.first())
            .ok_or_else(|| Error::Empty(format!("subject {}", self.subject_id)))?;
        for s in &self.sessions {
            for label in [Arousal::Low, Arousal::High] {
                let n = s.recordings.iter().filter(|r| r.label == label).count();
                if n != 1 {
                    return Err(Error::Validation(format!(
                        "subject {} session {} has {n} {label}-arousal recordings, expected 1",
                        self.subject_id, s.session_id
                    )));
                }
            }
            for r in &s.recordings {
                if r.fs != first.fs {
                    return Err(Error::Validation(format!(
                        "subject {}: sampling rate {} Hz in {}/{} differs from {} Hz",
                        self.subject_id, r.fs, s.session_id, r.stimulus_id, first.fs
                    )));
                }
                if r.channel_names != first.channel_names {
                    return Err(Error::Validation(format!(
                        "subject {}: montage {:?} in {}/{} differs from {:?}",
                        self.subject_id,
                        r.channel_names,
                        s.session_id,
                        r.stimulus_id,
                        first.channel_names
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn fs(&self) -> f64 {
        self.sessions[0].recordings[0].fs
    }

    pub fn channel_names(&self) -> &[String] {
        &self.sessions[0].recordings[0].channel_names
    }

    pub fn recordings(&self) -> impl Iterator<Item = &EegRecording> {
        self.sessions.iter().flat_map(|s| &s.recordings)
    }
}

fn sorted_dirs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Every `.eegrec` path below `root`, in sorted order.
pub fn recording_paths(root: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for subject in sorted_dirs(root)? {
        for session in sorted_dirs(&subject)? {
            let mut files: Vec<PathBuf> = std::fs::read_dir(&session)?
                .map(|e| e.map(|e| e.path()))
                .collect::<std::io::Result<_>>()?;
            files.retain(|p| p.extension().is_some_and(|e| e == RECORDING_EXT));
            files.sort();
            out.extend(files);
        }
    }
    Ok(out)
}

/// Loads and validates a dataset directory, grouped by subject.
pub fn load_dataset(root: &Path) -> Result<Vec<SubjectData>> {
    let paths = recording_paths(root)?;
    if paths.is_empty() {
        return Err(Error::Empty(format!(
            "dataset: no .{RECORDING_EXT} files under {}",
            root.display()
        )));
    }
    let recordings: Vec<EegRecording> = paths
        .par_iter()
        .map(|p| {
            let r = load_recording(p)?;
            validate_montage(&r.channel_names).map_err(|e| match e {
                Error::Validation(msg) => Error::format(p, msg),
                other => other,
            })?;
            Ok(r)
        })
        .collect::<Result<_>>()?;
    let mut by_subject: BTreeMap<String, Vec<EegRecording>> = BTreeMap::new();
    for r in recordings {
        by_subject.entry(r.subject_id.clone()).or_default().push(r);
    }
    by_subject
        .into_iter()
        .map(|(id, recs)| SubjectData::from_recordings(&id, recs))
        .collect()
}
