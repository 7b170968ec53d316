use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which parts of the network are present.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariantKind {
    /// Temporal learner, spatial learner and classifier.
    TSception,
    /// Temporal learner feeding the classifier directly.
    Tception,
    /// Spatial learner applied to the raw input.
    Sception,
}

impl VariantKind {
    pub const ALL: [VariantKind; 3] = [Self::TSception, Self::Tception, Self::Sception];

    pub fn name(self) -> &'static str {
        match self {
            Self::TSception => "tsception",
            Self::Tception => "tception",
            Self::Sception => "sception",
        }
    }

    pub fn has_temporal(self) -> bool {
        matches!(self, Self::TSception | Self::Tception)
    }

    pub fn has_spatial(self) -> bool {
        matches!(self, Self::TSception | Self::Sception)
    }
}

impl fmt::Display for VariantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for VariantKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tsception" => Ok(Self::TSception),
            "tception" => Ok(Self::Tception),
            "sception" => Ok(Self::Sception),
            other => Err(Error::Config(format!(
                "unknown model kind `{other}` (expected tsception, tception or sception)"
            ))),
        }
    }
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Sampling rate in Hz.
    pub fs: f64,
    pub num_channels: usize,
    pub segment_len: usize,
    /// Number of temporal kernel scales.
    pub levels: usize,
    /// Base ratio; level `i` uses kernels `alpha^i * fs` samples wide.
    pub alpha: f64,
    pub num_t_kernels: usize,
    pub num_s_kernels: usize,
    pub t_pool: usize,
    pub s_pool: usize,
    pub hidden: usize,
    pub num_classes: usize,
    pub dropout_rate: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            fs: 256.0,
            num_channels: 4,
            segment_len: 1024,
            levels: 3,
            alpha: 0.5,
            num_t_kernels: 9,
            num_s_kernels: 6,
            t_pool: 8,
            s_pool: 16,
            hidden: 128,
            num_classes: 2,
            dropout_rate: 0.3,
        }
    }
}

impl ModelConfig {
    /// Defaults with the pool widths pinned for each variant.
    pub fn for_variant(kind: VariantKind) -> Self {
        let mut c = Self::default();
        if kind == VariantKind::Tception {
            c.t_pool = 16;
        }
        c
    }

    pub fn ratio_coeffs(&self) -> Vec<f64> {
        (1..=self.levels)
            .map(|i| self.alpha.powi(i as i32))
            .collect()
    }

    /// Temporal kernel widths, `round(alpha^i * fs)` with halves rounded up.
    pub fn t_kernel_sizes(&self) -> Result<Vec<(usize, usize)>> {
        self.ratio_coeffs()
            .into_iter()
            .map(|r| {
                let w = (r * self.fs + 0.5).floor();
                if w < 1.0 {
                    return Err(Error::Config(format!(
                        "temporal kernel width {r} * {} Hz rounds below one sample",
                        self.fs
                    )));
                }
                if w as usize > self.segment_len {
                    return Err(Error::Config(format!(
                        "temporal kernel width {w} exceeds segment length {}",
                        self.segment_len
                    )));
                }
                Ok((1, w as usize))
            })
            .collect()
    }

    /// Feature-axis length after the temporal learner.
    pub fn temporal_features(&self) -> Result<usize> {
        let mut total = 0;
        for (_, w) in self.t_kernel_sizes()? {
            let n = (self.segment_len - w + 1) / self.t_pool;
            if n == 0 {
                return Err(Error::Config(format!(
                    "temporal pool {} wider than conv output {}",
                    self.t_pool,
                    self.segment_len - w + 1
                )));
            }
            total += n;
        }
        Ok(total)
    }

    /// Feature-axis length after spatial pooling of `input_len` features.
    pub fn spatial_features(&self, input_len: usize) -> Result<usize> {
        let n = input_len / self.s_pool;
        if n == 0 {
            return Err(Error::Config(format!(
                "spatial pool {} wider than feature length {input_len}",
                self.s_pool
            )));
        }
        Ok(n)
    }

    /// Input width of the first fully connected layer.
    pub fn flatten_len(&self, kind: VariantKind) -> Result<usize> {
        Ok(match kind {
            VariantKind::TSception => {
                self.num_s_kernels * 3 * self.spatial_features(self.temporal_features()?)?
            }
            VariantKind::Tception => {
                self.num_t_kernels * self.num_channels * self.temporal_features()?
            }
            VariantKind::Sception => {
                self.num_s_kernels * 3 * self.spatial_features(self.segment_len)?
            }
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.fs > 0.0 && self.fs.is_finite()) {
            return bad(format!("sampling rate {} must be positive", self.fs));
        }
        if self.num_channels < 2 || !self.num_channels.is_multiple_of(2) {
            return bad(format!(
                "channel count {} must be even (left and right hemispheres of equal size)",
                self.num_channels
            ));
        }
        if self.levels == 0 {
            return bad("at least one temporal level is required".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!(
                "alpha {} must lie in (0, 1) so ratio coefficients strictly decrease",
                self.alpha
            ));
        }
        if self.num_t_kernels == 0 || self.num_s_kernels == 0 || self.hidden == 0 {
            return bad("kernel counts and hidden width must be >= 1".into());
        }
        if self.t_pool == 0 || self.s_pool == 0 {
            return bad("pool widths must be >= 1".into());
        }
        if self.num_classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.num_classes));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!(
                "dropout rate {} must lie in [0, 1)",
                self.dropout_rate
            ));
        }
        self.t_kernel_sizes()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_kernel_sizes() {
        let c = ModelConfig::default();
        assert_eq!(c.ratio_coeffs(), vec![0.5, 0.25, 0.125]);
        assert_eq!(
            c.t_kernel_sizes().unwrap(),
            vec![(1, 128), (1, 64), (1, 32)]
        );
    }

    #[test]
    fn kernel_sizes_other_rates() {
        let c = ModelConfig {
            fs: 128.0,
            levels: 1,
            ..ModelConfig::default()
        };
        assert_eq!(c.t_kernel_sizes().unwrap(), vec![(1, 64)]);
        let c = ModelConfig {
            fs: 250.0,
            ..ModelConfig::default()
        };
        assert_eq!(c.t_kernel_sizes().unwrap()[2], (1, 31));
    }

    #[test]
    fn kernel_below_one_sample_rejected() {
        let c = ModelConfig {
            fs: 4.0,
            levels: 4,
            ..ModelConfig::default()
        };
        assert!(matches!(c.t_kernel_sizes(), Err(Error::Config(_))));
    }

    #[test]
    fn feature_lengths() {
        let c = ModelConfig::default();
        assert_eq!(c.temporal_features().unwrap(), 112 + 120 + 124);
        assert_eq!(c.flatten_len(VariantKind::TSception).unwrap(), 396);
        let t = ModelConfig::for_variant(VariantKind::Tception);
        assert_eq!(t.temporal_features().unwrap(), 56 + 60 + 62);
        assert_eq!(t.flatten_len(VariantKind::Tception).unwrap(), 9 * 4 * 178);
        let s = ModelConfig::for_variant(VariantKind::Sception);
        assert_eq!(s.flatten_len(VariantKind::Sception).unwrap(), 6 * 3 * 64);
    }

    #[test]
    fn odd_channels_rejected() {
        let c = ModelConfig {
            num_channels: 3,
            ..ModelConfig::default()
        };
        assert!(c.validate().is_err());
        assert!(ModelConfig::default().validate().is_ok());
    }

    #[test]
    fn kind_parsing() {
        assert_eq!(
            "TSception".parse::<VariantKind>().unwrap(),
            VariantKind::TSception
        );
        assert!("eegnet".parse::<VariantKind>().is_err());
    }
}
