//! Filter-bank band power and differential entropy.

use std::f64::consts::{E, PI};

use serde::{Deserialize, Serialize};

use super::design::{design_cheby2_bandpass, FilterSpec, Sos};
use super::filter::filtfilt;
use crate::error::{Error, Result};

pub const NUM_BANDS: usize = 9;
pub const BAND_WIDTH_HZ: f64 = 4.0;

/// `(4k, 4k + 4)` Hz for `k = 1..=9`.
pub fn band_edges() -> Vec<(f64, f64)> {
    (1..=NUM_BANDS)
        .map(|k| (BAND_WIDTH_HZ * k as f64, BAND_WIDTH_HZ * (k + 1) as f64))
        .collect()
}

/// The nine band-pass designs for one sampling rate.
#[derive(Debug, Clone)]
pub struct FilterBank {
    fs: f64,
    bands: Vec<(f64, f64)>,
    filters: Vec<Sos>,
}

impl FilterBank {
    pub fn new(fs: f64) -> Result<Self> {
        if !(fs >= 80.0) {
            return Err(Error::Design(format!(
                "filter bank needs fs >= 80 Hz so 40 Hz is below Nyquist, got {fs}"
            )));
        }
        let bands = band_edges();
        let filters = bands
            .iter()
            .map(|&(lo, hi)| design_cheby2_bandpass(&FilterSpec::band(lo, hi, fs)))
            .collect::<Result<_>>()?;
        Ok(Self { fs, bands, filters })
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn bands(&self) -> &[(f64, f64)] {
        &self.bands
    }

    pub fn filters(&self) -> &[Sos] {
        &self.filters
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.filters.iter().map(|sos| filtfilt(sos, x)).collect()
    }
}

/// Splits `x` into the nine zero-phase band-limited signals.
pub fn filter_bank(x: &[f64], fs: f64) -> Result<Vec<Vec<f64>>> {
    FilterBank::new(fs)?.apply(x)
}

pub fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Band energy over total energy across bands.
pub fn relative_power<S: AsRef<[f64]>>(bands: &[S]) -> Result<Vec<f64>> {
    let energies: Vec<f64> = bands.iter().map(|b| energy(b.as_ref())).collect();
    let total: f64 = energies.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::Numeric(format!(
            "relative power undefined: total band energy is {total}"
        )));
    }
    Ok(energies.into_iter().map(|e| e / total).collect())
}

/// Unbiased sample variance.
pub fn sample_variance(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
}

/// Gaussian differential entropy `0.5 * ln(2 pi e var)` in nats.
pub fn differential_entropy(x: &[f64]) -> Result<f64> {
    if x.len() < 2 {
        return Err(Error::SignalTooShort {
            len: x.len(),
            min: 2,
        });
    }
    let var = sample_variance(x);
    if !(var > 0.0) {
        return Err(Error::Numeric(
            "differential entropy of a zero-variance signal".into(),
        ));
    }
    Ok(0.5 * (2.0 * PI * E * var).ln())
}

/// Nine RP values and nine DE values of one channel.
pub fn channel_features(bank: &FilterBank, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let bands = bank.apply(x)?;
    let rp = relative_power(&bands)?;
    let de = bands
        .iter()
        .map(|b| differential_entropy(b))
        .collect::<Result<Vec<_>>>()?;
    Ok((rp, de))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub channel_names: Vec<String>,
    pub bands: Vec<(f64, f64)>,
    /// `[channel][band]`
    pub rp: Vec<Vec<f64>>,
    /// `[channel][band]`
    pub de: Vec<Vec<f64>>,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.rp.iter().chain(&self.de).map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All RP values (channel-major) followed by all DE values.
    pub fn to_vec(&self) -> Vec<f64> {
        self.rp
            .iter()
            .flatten()
            .chain(self.de.iter().flatten())
            .copied()
            .collect()
    }

    /// Column names in the order of [`FeatureVector::to_vec`].
    pub fn column_names(n_channels: usize) -> Vec<String> {
        let mut names = Vec::with_capacity(n_channels * NUM_BANDS * 2);
        for kind in ["rp", "de"] {
            for c in 0..n_channels {
                for b in 0..NUM_BANDS {
                    names.push(format!("ch{c}_band{b}_{kind}"));
                }
            }
        }
        names
    }
}

/// Per-channel RP and DE of one segment, given as one row per channel.
/// A channel with no energy in any band is an error naming that channel.
pub fn extract_features<S: AsRef<[f64]>>(
    bank: &FilterBank,
    channels: &[S],
    channel_names: &[String],
) -> Result<FeatureVector> {
    if channels.len() != channel_names.len() {
        return Err(Error::Validation(format!(
            "{} channel rows but {} channel names",
            channels.len(),
            channel_names.len()
        )));
    }
    let mut rp = Vec::with_capacity(channels.len());
    let mut de = Vec::with_capacity(channels.len());
    for (x, name) in channels.iter().zip(channel_names) {
        let (r, d) = channel_features(bank, x.as_ref()).map_err(|e| match e {
            Error::Numeric(msg) => Error::Numeric(format!("channel {name}: {msg}")),
            other => other,
        })?;
        rp.push(r);
        de.push(d);
    }
    Ok(FeatureVector {
        channel_names: channel_names.to_vec(),
        bands: bank.bands().to_vec(),
        rp,
        de,
    })
}
