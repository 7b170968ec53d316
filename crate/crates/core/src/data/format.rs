//! `.eegrec` files: 8-byte magic, little-endian u32 header length, JSON
//! header, then the channel-major float32 payload.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::recording::{Arousal, EegRecording};
use crate::error::{Error, Result};

pub const RECORDING_MAGIC: &[u8; 8] = b"EEGREC01";
pub const RECORDING_EXT: &str = "eegrec";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingHeader {
    pub fs: f64,
    pub channel_names: Vec<String>,
    pub label: Arousal,
    pub subject_id: String,
    pub session_id: String,
    pub stimulus_id: String,
    pub n_samples: usize,
}

pub fn write_recording<W: Write>(rec: &EegRecording, mut w: W) -> Result<()> {
    let header = RecordingHeader {
        fs: rec.fs,
        channel_names: rec.channel_names.clone(),
        label: rec.label,
        subject_id: rec.subject_id.clone(),
        session_id: rec.session_id.clone(),
        stimulus_id: rec.stimulus_id.clone(),
        n_samples: rec.n_samples,
    };
    let json = serde_json::to_vec(&header)?;
    w.write_all(RECORDING_MAGIC)?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    let mut buf = Vec::with_capacity(rec.data.len() * 4);
    for v in &rec.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

/// Parses a recording; `origin` only labels errors.
pub fn read_recording<R: Read>(mut r: R, origin: &Path) -> Result<EegRecording> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| Error::format(origin, "file shorter than the 8-byte magic"))?;
    if &magic != RECORDING_MAGIC {
        return Err(Error::format(
            origin,
            format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(&magic),
                String::from_utf8_lossy(RECORDING_MAGIC)
            ),
        ));
    }
    let mut len = [0u8; 4];
    r.read_exact(&mut len)
        .map_err(|_| Error::format(origin, "missing header length"))?;
    let mut json = vec![0u8; u32::from_le_bytes(len) as usize];
    r.read_exact(&mut json)
        .map_err(|_| Error::format(origin, "header shorter than its declared length"))?;
    let h: RecordingHeader = serde_json::from_slice(&json)
        .map_err(|e| Error::format(origin, format!("invalid header: {e}")))?;

    let expected = h.channel_names.len() * h.n_samples * 4;
    let mut payload = Vec::with_capacity(expected);
    r.read_to_end(&mut payload)?;
    if payload.len() != expected {
        return Err(Error::format(
            origin,
            format!(
                "payload is {} bytes, expected {expected} ({} channels x {} samples x 4)",
                payload.len(),
                h.channel_names.len(),
                h.n_samples
            ),
        ));
    }
    let data = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    let rec = EegRecording {
        data,
        n_samples: h.n_samples,
        fs: h.fs,
        channel_names: h.channel_names,
        label: h.label,
        subject_id: h.subject_id,
        session_id: h.session_id,
        stimulus_id: h.stimulus_id,
    };
    rec.validate().map_err(|e| match e {
        Error::Validation(msg) => Error::format(origin, msg),
        other => other,
    })?;
    Ok(rec)
}

pub fn save_recording(rec: &EegRecording, path: &Path) -> Result<()> {
    write_recording(rec, BufWriter::new(File::create(path)?))
}

pub fn load_recording(path: &Path) -> Result<EegRecording> {
    read_recording(BufReader::new(File::open(path)?), path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> EegRecording {
        EegRecording::new(
            (0..12).map(|i| i as f32 * 0.5 - 1.0).collect(),
            256.0,
            vec!["C3".into(), "C4".into()],
            Arousal::High,
            "s01",
            "sess1",
            "high",
        )
        .unwrap()
    }

    #[test]
    fn round_trip() {
        let rec = sample();
        let mut buf = Vec::new();
        write_recording(&rec, &mut buf).unwrap();
        let back = read_recording(buf.as_slice(), Path::new("mem")).unwrap();
        assert_eq!(back, rec);
    }

    #[test]
    fn truncated_payload_reports_sizes() {
        let mut buf = Vec::new();
        write_recording(&sample(), &mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        let msg = read_recording(buf.as_slice(), Path::new("x.eegrec"))
            .unwrap_err()
            .to_string();
        assert!(
            msg.contains("45 bytes") && msg.contains("expected 48"),
            "{msg}"
        );
    }

    #[test]
    fn bad_magic_rejected() {
        let mut buf = Vec::new();
        write_recording(&sample(), &mut buf).unwrap();
        buf[7] = b'2';
        assert!(read_recording(buf.as_slice(), Path::new("x")).is_err());
    }
}
