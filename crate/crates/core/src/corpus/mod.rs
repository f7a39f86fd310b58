//! Data model for slice discovery: feature matrices, example records, SLFX
//! bundle I/O, splitting, normalization and the synthetic generator.

mod matrix;
mod normalize;
mod slfx;
mod split;
mod synth;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

pub use matrix::{FeatureMatrix, Row, Storage};
pub use normalize::{normalize, Normalization};
pub use slfx::{load_dataset, save_dataset, Layout, Manifest, MANIFEST_FILE};
pub use split::{split, Split};
pub use synth::{generate_synthetic, SliceSpec, SynthConfig};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed input: {0}")]
    Format(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite feature value: {0}")]
    NonFinite(String),
    #[error("duplicate example id {0:?}")]
    DuplicateId(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Membership of one example in each of the `k` tracked slices (0 or 1).
pub type SliceVector = Vec<u8>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleRecord {
    pub id: String,
    /// Task label of the example.
    pub y: i64,
    /// Ground-truth slice memberships, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<SliceVector>,
    /// Original text, shown to human annotators.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    /// Whether the task model got this example right, when supplied.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: FeatureMatrix,
    pub records: Vec<ExampleRecord>,
    pub slice_names: Vec<String>,
    pub provenance: String,
}

impl Dataset {
    /// Builds a dataset after checking the record/feature/slice invariants.
    pub fn new(
        features: FeatureMatrix,
        records: Vec<ExampleRecord>,
        slice_names: Vec<String>,
        provenance: impl Into<String>,
    ) -> Result<Self, CorpusError> {
        let ds = Dataset {
            features,
            records,
            slice_names,
            provenance: provenance.into(),
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.records.len() != self.features.n_rows() {
            return Err(CorpusError::DimensionMismatch(format!(
                "{} records for {} feature rows",
                self.records.len(),
                self.features.n_rows()
            )));
        }
        let k = self.k();
        let mut seen = HashSet::with_capacity(self.records.len());
        for rec in &self.records {
            if !seen.insert(rec.id.as_str()) {
                return Err(CorpusError::DuplicateId(rec.id.clone()));
            }
            if let Some(s) = &rec.s {
                if s.len() != k {
                    return Err(CorpusError::DimensionMismatch(format!(
                        "record {:?} has {} slice labels, dataset declares k={k}",
                        rec.id,
                        s.len()
                    )));
                }
                if s.iter().any(|&v| v > 1) {
                    return Err(CorpusError::Format(format!(
                        "record {:?} has a slice label outside {{0,1}}",
                        rec.id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn k(&self) -> usize {
        self.slice_names.len()
    }

    pub fn dim(&self) -> usize {
        self.features.n_cols()
    }

    /// Ground-truth membership column for slice `j`; `None` if any record lacks it.
    pub fn slice_column(&self, j: usize) -> Option<Vec<u8>> {
        self.records
            .iter()
            .map(|r| r.s.as_ref().map(|s| s[j]))
            .collect()
    }

    /// Sub-dataset with the given rows, in order.
    pub fn select(&self, rows: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(rows),
            records: rows.iter().map(|&i| self.records[i].clone()).collect(),
            slice_names: self.slice_names.clone(),
            provenance: self.provenance.clone(),
        }
    }

    /// Appends the task label `y` (and the task model's correctness bit,
    /// where every record carries one) as extra feature columns, so slice
    /// classifiers can condition on `(x, y)`.
    pub fn with_task_columns(&self) -> Result<Dataset, CorpusError> {
        let ys: Vec<f32> = self.records.iter().map(|r| r.y as f32).collect();
        let mut features = self.features.append_column(&ys)?;
        let correct: Option<Vec<f32>> = self
            .records
            .iter()
            .map(|r| r.correct.map(|c| if c { 1.0 } else { 0.0 }))
            .collect();
        if let Some(col) = correct {
            features = features.append_column(&col)?;
        }
        Ok(Dataset {
            features,
            records: self.records.clone(),
            slice_names: self.slice_names.clone(),
            provenance: format!("{} +task-columns", self.provenance),
        })
    }
}
