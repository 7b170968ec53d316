//! CSV schemas.
//!
//! Accuracy tables (`crossval` and `baseline`), schema version 1:
//! `subject,fold,accuracy,std`. One row per fold with an empty `std`, then a
//! `fold = mean` row per subject, then a final `subject = all, fold = mean`
//! row holding the mean and population std of the subject means.
//!
//! Feature tables (`features`), schema version 1: `subject,session,
//! stimulus,segment_index,label` followed by `ch{c}_band{b}_rp` for every
//! channel and band, then the matching `_de` columns.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use tsception::data::Provenance;
use tsception::dsp::{FeatureRow, FeatureVector};
use tsception::train::mean_std;

pub const PROVENANCE_COLUMNS: [&str; 4] = ["subject", "session", "stimulus", "segment_index"];
pub const LABEL_COLUMN: &str = "label";
pub const MEAN_FOLD: &str = "mean";
pub const ALL_SUBJECTS: &str = "all";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub subject: String,
    pub fold: String,
    pub accuracy: f64,
    pub std: Option<f64>,
}

/// Fold accuracies of one subject, in fold order.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectAccuracies {
    pub subject: String,
    pub folds: Vec<f64>,
}

/// Rows of an accuracy table plus the grand mean and std.
pub fn accuracy_rows(subjects: &[SubjectAccuracies]) -> (Vec<AccuracyRow>, f64, f64) {
    let mut rows = Vec::new();
    let mut means = Vec::with_capacity(subjects.len());
    for s in subjects {
        for (k, &acc) in s.folds.iter().enumerate() {
            rows.push(AccuracyRow {
                subject: s.subject.clone(),
                fold: k.to_string(),
                accuracy: acc,
                std: None,
            });
        }
        let (m, sd) = mean_std(&s.folds);
        means.push(m);
        rows.push(AccuracyRow {
            subject: s.subject.clone(),
            fold: MEAN_FOLD.into(),
            accuracy: m,
            std: Some(sd),
        });
    }
    let (grand, grand_std) = mean_std(&means);
    rows.push(AccuracyRow {
        subject: ALL_SUBJECTS.into(),
        fold: MEAN_FOLD.into(),
        accuracy: grand,
        std: Some(grand_std),
    });
    (rows, grand, grand_std)
}

pub fn write_accuracy_csv(path: &Path, rows: &[AccuracyRow]) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_accuracy_csv(path: &Path) -> Result<Vec<AccuracyRow>> {
    let mut r =
        csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    r.deserialize()
        .collect::<Result<Vec<AccuracyRow>, _>>()
        .with_context(|| format!("reading {}", path.display()))
}

pub fn feature_header(n_channels: usize) -> Vec<String> {
    PROVENANCE_COLUMNS
        .iter()
        .map(|s| s.to_string())
        .chain([LABEL_COLUMN.to_string()])
        .chain(FeatureVector::column_names(n_channels))
        .collect()
}

/// Writes feature rows; floats use the shortest representation that reads
/// back to the same value.
pub fn write_feature_csv(path: &Path, n_channels: usize, rows: &[FeatureRow]) -> Result<()> {
    let header = feature_header(n_channels);
    let n_values = header.len() - PROVENANCE_COLUMNS.len() - 1;
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    w.write_record(&header)?;
    for r in rows {
        if r.values.len() != n_values {
            bail!(
                "feature row has {} values, header expects {n_values}",
                r.values.len()
            );
        }
        let p = &r.provenance;
        let mut rec = vec![
            p.subject.clone(),
            p.session.clone(),
            p.stimulus.clone(),
            p.window_index.to_string(),
            r.label.to_string(),
        ];
        rec.extend(r.values.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.into_inner().map_err(|e| e.into_error())?.flush()?;
    Ok(())
}

pub fn read_feature_csv(path: &Path) -> Result<Vec<FeatureRow>> {
    let mut r =
        csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let fixed = PROVENANCE_COLUMNS.len() + 1;
    if header.len() <= fixed
        || header[..PROVENANCE_COLUMNS.len()] != PROVENANCE_COLUMNS
        || header[PROVENANCE_COLUMNS.len()] != LABEL_COLUMN
    {
        bail!(
            "{} is not a feature table: expected columns {:?}, {LABEL_COLUMN:?} then features",
            path.display(),
            PROVENANCE_COLUMNS
        );
    }
    let n_values = header.len() - fixed;
    if !n_values.is_multiple_of(2)
        || !header[fixed].ends_with("_rp")
        || !header[fixed + n_values / 2].ends_with("_de")
    {
        bail!(
            "{}: feature columns must be all RP columns followed by all DE columns",
            path.display()
        );
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.with_context(|| format!("{}: record {}", path.display(), i + 1))?;
        let parse = |j: usize| -> Result<f64> {
            rec[j].parse::<f64>().with_context(|| {
                format!("{}: record {}, column {}", path.display(), i + 1, header[j])
            })
        };
        rows.push(FeatureRow {
            provenance: Provenance {
                subject: rec[0].to_string(),
                session: rec[1].to_string(),
                stimulus: rec[2].to_string(),
                window_index: rec[3].parse().with_context(|| {
                    format!("{}: record {}, segment_index", path.display(), i + 1)
                })?,
            },
            label: rec[4]
                .parse()
                .with_context(|| format!("{}: record {}, label", path.display(), i + 1))?,
            values: (fixed..header.len()).map(parse).collect::<Result<_>>()?,
        });
    }
    Ok(rows)
}

/// Splits rows by subject, keeping the order of first appearance.
pub fn group_by_subject(rows: Vec<FeatureRow>) -> Vec<Vec<FeatureRow>> {
    let mut groups: Vec<Vec<FeatureRow>> = Vec::new();
    for r in rows {
        match groups
            .iter_mut()
            .find(|g| g[0].provenance.subject == r.provenance.subject)
        {
            Some(g) => g.push(r),
            None => groups.push(vec![r]),
        }
    }
    groups
}
