//! Recordings, their on-disk format, montage checks, synthetic data and
//! leave-one-session-out folds.

mod dataset;
mod folds;
mod format;
mod montage;
mod recording;
mod segments;
mod synth;

pub use dataset::{load_dataset, recording_paths, Session, SubjectData};
pub use folds::{build_loso_folds, segment_session, Fold, FoldSpec, SplitMode};
pub use format::{
    load_recording, read_recording, save_recording, write_recording, RecordingHeader,
    RECORDING_EXT, RECORDING_MAGIC,
};
pub use montage::{side_of, validate_montage, Side, MUSE_MONTAGE};
pub use recording::{Arousal, EegRecording};
pub use segments::{Provenance, SegmentSet};
pub use synth::{
    generate_recording, session_id, sha256_hex, stimulus_id, subject_id, synth_generate,
    verify_manifest, DatasetManifest, ManifestEntry, SynthConfig, MANIFEST_FILE,
};
