use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arousal {
    Low,
    High,
}

impl Arousal {
    pub fn index(self) -> usize {
        match self {
            Arousal::Low => 0,
            Arousal::High => 1,
        }
    }

    pub fn from_index(i: usize) -> Result<Self> {
        match i {
            0 => Ok(Arousal::Low),
            1 => Ok(Arousal::High),
            _ => Err(Error::LabelOutOfRange {
                label: i,
                classes: 2,
            }),
        }
    }
}

impl fmt::Display for Arousal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arousal::Low => "low",
            Arousal::High => "high",
        })
    }
}

impl FromStr for Arousal {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "low" => Ok(Arousal::Low),
            "high" => Ok(Arousal::High),
            _ => Err(Error::Validation(format!("unknown arousal label {s:?}"))),
        }
    }
}

/// One continuous multichannel recording, stored channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EegRecording {
    pub data: Vec<f32>,
    pub n_samples: usize,
    pub fs: f64,
    pub channel_names: Vec<String>,
    pub label: Arousal,
    pub subject_id: String,
    pub session_id: String,
    pub stimulus_id: String,
}

impl EegRecording {
    pub fn new(
        data: Vec<f32>,
        fs: f64,
        channel_names: Vec<String>,
        label: Arousal,
        subject_id: impl Into<String>,
        session_id: impl Into<String>,
        stimulus_id: impl Into<String>,
    ) -> Result<Self> {
        let c = channel_names.len();
        if c == 0 || !data.len().is_multiple_of(c) {
            return Err(Error::Validation(format!(
                "{} samples cannot be split over {c} channels",
                data.len()
            )));
        }
        let rec = Self {
            n_samples: data.len() / c,
            data,
            fs,
            channel_names,
            label,
            subject_id: subject_id.into(),
            session_id: session_id.into(),
            stimulus_id: stimulus_id.into(),
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.len() != self.num_channels() * self.n_samples {
            return Err(Error::Validation(format!(
                "data holds {} values, expected {} channels x {} samples",
                self.data.len(),
                self.num_channels(),
                self.n_samples
            )));
        }
        if !(self.fs > 0.0 && self.fs.is_finite()) {
            return Err(Error::Validation(format!(
                "sampling rate {} is not positive",
                self.fs
            )));
        }
        if let Some(i) = self.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite sample in channel {} at index {}",
                self.channel_names[i / self.n_samples],
                i % self.n_samples
            )));
        }
        Ok(())
    }

    pub fn num_channels(&self) -> usize {
        self.channel_names.len()
    }

    pub fn duration_s(&self) -> f64 {
        self.n_samples as f64 / self.fs
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        &self.data[c * self.n_samples..(c + 1) * self.n_samples]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f32] {
        let n = self.n_samples;
        &mut self.data[c * n..(c + 1) * n]
    }
}
