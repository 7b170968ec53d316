use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Where a segment came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Provenance {
    pub subject: String,
    pub session: String,
    pub stimulus: String,
    pub window_index: usize,
}

/// Labelled `[N, 1, C, T]` segments, `N >= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentSet {
    pub segments: Tensor<f32>,
    pub labels: Vec<usize>,
    pub provenance: Vec<Provenance>,
}

impl SegmentSet {
    pub fn new(
        segments: Tensor<f32>,
        labels: Vec<usize>,
        provenance: Vec<Provenance>,
    ) -> Result<Self> {
        let shape = segments.shape();
        if shape.len() != 4 || shape[1] != 1 {
            return Err(Error::dim(
                "SegmentSet",
                format!("expected [N, 1, C, T], got {shape:?}"),
            ));
        }
        if labels.len() != shape[0] || provenance.len() != shape[0] {
            return Err(Error::dim(
                "SegmentSet",
                format!(
                    "{} segments, {} labels, {} provenance entries",
                    shape[0],
                    labels.len(),
                    provenance.len()
                ),
            ));
        }
        if let Some(&l) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::LabelOutOfRange {
                label: l,
                classes: 2,
            });
        }
        Ok(Self {
            segments,
            labels,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_channels(&self) -> usize {
        self.segments.shape()[2]
    }

    pub fn window(&self) -> usize {
        self.segments.shape()[3]
    }

    pub fn class_counts(&self) -> [usize; 2] {
        let mut c = [0; 2];
        for &l in &self.labels {
            c[l] += 1;
        }
        c
    }

    /// Rows `idx` in the given order.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        if idx.is_empty() {
            return Err(Error::Empty("segment subset".into()));
        }
        Ok(Self {
            segments: self.segments.gather_rows(idx)?,
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            provenance: idx.iter().map(|&i| self.provenance[i].clone()).collect(),
        })
    }

    /// Stacks sets with matching `[C, T]`.
    pub fn concat(sets: &[SegmentSet]) -> Result<Self> {
        let first = sets
            .first()
            .ok_or_else(|| Error::Empty("segment set list".into()))?;
        let (c, t) = (first.num_channels(), first.window());
        let n: usize = sets.iter().map(SegmentSet::len).sum();
        let mut data = Vec::with_capacity(n * c * t);
        let mut labels = Vec::with_capacity(n);
        let mut provenance = Vec::with_capacity(n);
        for s in sets {
            if (s.num_channels(), s.window()) != (c, t) {
                return Err(Error::dim(
                    "SegmentSet::concat",
                    format!("[{c}, {t}] vs {:?}", &s.segments.shape()[2..]),
                ));
            }
            data.extend_from_slice(s.segments.data());
            labels.extend_from_slice(&s.labels);
            provenance.extend(s.provenance.iter().cloned());
        }
        Self::new(Tensor::new(vec![n, 1, c, t], data)?, labels, provenance)
    }
}
