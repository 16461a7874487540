//! Multi-view dataset representation.
//!
//! A dataset is an ordered collection of blocks (data sources) sharing the
//! sample mode as rows. Sources whose *columns* are the shared mode are
//! transposed at ingestion; the original orientation is kept as metadata so
//! exports can restore it.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{GfaError, Result};
use crate::io::{self, LabeledMatrix};

/// One input matrix plus its label, before pairing-orientation is resolved.
#[derive(Debug, Clone)]
pub struct SourceMatrix {
    pub label: String,
    pub values: DMatrix<f64>,
    pub row_names: Vec<String>,
    pub col_names: Vec<String>,
}

impl SourceMatrix {
    /// Wrap a raw matrix, generating `s1..sN` / `f1..fD` names.
    pub fn new(label: impl Into<String>, values: DMatrix<f64>) -> Self {
        let row_names = (1..=values.nrows()).map(|i| format!("s{i}")).collect();
        let col_names = (1..=values.ncols()).map(|i| format!("f{i}")).collect();
        SourceMatrix {
            label: label.into(),
            values,
            row_names,
            col_names,
        }
    }

    pub fn from_file(label: impl Into<String>, path: impl AsRef<Path>) -> Result<Self> {
        let LabeledMatrix {
            values,
            row_names,
            col_names,
        } = io::read_labeled_matrix(path)?;
        Ok(SourceMatrix {
            label: label.into(),
            values,
            row_names,
            col_names,
        })
    }
}

/// One data source, oriented samples-by-features.
#[derive(Debug, Clone, PartialEq)]
pub struct DataBlock {
    pub label: String,
    /// N x D_m values; missing entries are NaN.
    pub values: DMatrix<f64>,
    /// Same shape as `values`; true = observed.
    pub mask: DMatrix<bool>,
    pub feature_names: Vec<String>,
    pub sample_names: Vec<String>,
    /// True when the source was supplied column-paired and transposed here.
    pub column_paired: bool,
}

impl DataBlock {
    pub fn n_samples(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.values.ncols()
    }

    pub fn observed_count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }
}

/// Ordered collection of blocks sharing the sample mode.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiViewData {
    blocks: Vec<DataBlock>,
    total_d: usize,
}

/// Shape and label metadata of a dataset, carried with posterior output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub n: usize,
    pub d: Vec<usize>,
    pub labels: Vec<String>,
    pub feature_names: Vec<Vec<String>>,
    pub sample_names: Vec<String>,
}

fn mask_of(values: &DMatrix<f64>) -> DMatrix<bool> {
    DMatrix::from_fn(values.nrows(), values.ncols(), |r, c| !values[(r, c)].is_nan())
}

impl MultiViewData {
    /// Assemble a dataset from row-paired and column-paired sources.
    ///
    /// Column-paired sources are transposed so the shared mode becomes rows;
    /// block order is row-paired sources first, then column-paired.
    pub fn assemble(
        row_paired: Vec<SourceMatrix>,
        column_paired: Vec<SourceMatrix>,
    ) -> Result<Self> {
        if row_paired.is_empty() {
            return Err(GfaError::InvalidData(
                "at least one row-paired source is required".into(),
            ));
        }
        let n = row_paired[0].values.nrows();
        let sample_names = row_paired[0].row_names.clone();

        let mut labels = BTreeSet::new();
        let mut blocks = Vec::with_capacity(row_paired.len() + column_paired.len());

        for src in row_paired {
            if src.values.nrows() != n {
                return Err(GfaError::ShapeMismatch(format!(
                    "shared dimension mismatch: {} has {} rows, expected {}",
                    src.label,
                    src.values.nrows(),
                    n
                )));
            }
            if src.row_names != sample_names {
                return Err(GfaError::InvalidData(format!(
                    "sample names of block {} do not match the first block",
                    src.label
                )));
            }
            if !labels.insert(src.label.clone()) {
                return Err(GfaError::InvalidData(format!(
                    "duplicate block label: {}",
                    src.label
                )));
            }
            let mask = mask_of(&src.values);
            blocks.push(DataBlock {
                label: src.label,
                values: src.values,
                mask,
                feature_names: src.col_names,
                sample_names: sample_names.clone(),
                column_paired: false,
            });
        }
        for src in column_paired {
            if src.values.ncols() != n {
                return Err(GfaError::ShapeMismatch(format!(
                    "shared dimension mismatch: {} has {} columns, expected {}",
                    src.label,
                    src.values.ncols(),
                    n
                )));
            }
            if src.col_names != sample_names {
                return Err(GfaError::InvalidData(format!(
                    "sample names of column-paired block {} do not match the first block",
                    src.label
                )));
            }
            if !labels.insert(src.label.clone()) {
                return Err(GfaError::InvalidData(format!(
                    "duplicate block label: {}",
                    src.label
                )));
            }
            let values = src.values.transpose();
            let mask = mask_of(&values);
            blocks.push(DataBlock {
                label: src.label,
                values,
                mask,
                feature_names: src.row_names,
                sample_names: sample_names.clone(),
                column_paired: true,
            });
        }

        let data = Self::from_blocks(blocks)?;
        data.check_coverage()?;
        Ok(data)
    }

    /// Build directly from prepared blocks, checking shape invariants only.
    pub(crate) fn from_blocks(blocks: Vec<DataBlock>) -> Result<Self> {
        let n = blocks[0].n_samples();
        if n < 2 {
            return Err(GfaError::InvalidData(format!(
                "need at least 2 samples, got {n}"
            )));
        }
        let mut total_d = 0;
        for b in &blocks {
            if b.n_features() == 0 {
                return Err(GfaError::InvalidData(format!(
                    "block {} has no features",
                    b.label
                )));
            }
            assert_eq!(b.mask.shape(), b.values.shape());
            total_d += b.n_features();
        }
        Ok(MultiViewData { blocks, total_d })
    }

    /// Reject all-missing feature columns (per block) and sample rows missing
    /// in every block of the collection.
    fn check_coverage(&self) -> Result<()> {
        for b in &self.blocks {
            let empty_cols: Vec<usize> = (0..b.n_features())
                .filter(|&d| (0..b.n_samples()).all(|nn| !b.mask[(nn, d)]))
                .collect();
            if !empty_cols.is_empty() {
                return Err(GfaError::InvalidData(format!(
                    "block {} has entirely missing feature columns at indices {:?}",
                    b.label, empty_cols
                )));
            }
        }
        let n = self.n_samples();
        let empty_rows: Vec<usize> = (0..n)
            .filter(|&nn| {
                self.blocks
                    .iter()
                    .all(|b| (0..b.n_features()).all(|d| !b.mask[(nn, d)]))
            })
            .collect();
        if !empty_rows.is_empty() {
            return Err(GfaError::InvalidData(format!(
                "sample rows entirely missing across all blocks at indices {empty_rows:?}"
            )));
        }
        Ok(())
    }

    /// Assemble a batch for fixed-projection prediction: sources present are
    /// the observed blocks; every trained block label absent from `sources`
    /// becomes an all-missing block of the trained width. Rows need not be
    /// observed anywhere (a no-evidence row predicts the prior mean).
    pub fn prediction_batch(sources: Vec<SourceMatrix>, template: &DatasetInfo) -> Result<Self> {
        if sources.is_empty() {
            return Err(GfaError::InvalidData(
                "prediction batch has zero observed blocks".into(),
            ));
        }
        let n = sources[0].values.nrows();
        let sample_names = sources[0].row_names.clone();
        let mut blocks = Vec::with_capacity(template.labels.len());
        for (m, label) in template.labels.iter().enumerate() {
            let d = template.d[m];
            if let Some(src) = sources.iter().find(|s| &s.label == label) {
                if src.values.nrows() != n {
                    return Err(GfaError::ShapeMismatch(format!(
                        "block {} has {} rows, expected {}",
                        label,
                        src.values.nrows(),
                        n
                    )));
                }
                if src.values.ncols() != d {
                    return Err(GfaError::ShapeMismatch(format!(
                        "block {} has {} features, trained model expects {}",
                        label,
                        src.values.ncols(),
                        d
                    )));
                }
                let mask = mask_of(&src.values);
                blocks.push(DataBlock {
                    label: label.clone(),
                    values: src.values.clone(),
                    mask,
                    feature_names: src.col_names.clone(),
                    sample_names: sample_names.clone(),
                    column_paired: false,
                });
            } else {
                blocks.push(DataBlock {
                    label: label.clone(),
                    values: DMatrix::from_element(n, d, f64::NAN),
                    mask: DMatrix::from_element(n, d, false),
                    feature_names: template.feature_names[m].clone(),
                    sample_names: sample_names.clone(),
                    column_paired: false,
                });
            }
        }
        for src in &sources {
            if !template.labels.contains(&src.label) {
                return Err(GfaError::InvalidData(format!(
                    "block {} was not part of the trained model",
                    src.label
                )));
            }
        }
        Self::from_blocks(blocks)
    }

    pub fn blocks(&self) -> &[DataBlock] {
        &self.blocks
    }

    pub fn block(&self, m: usize) -> &DataBlock {
        &self.blocks[m]
    }

    pub fn block_mut(&mut self, m: usize) -> &mut DataBlock {
        &mut self.blocks[m]
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn n_samples(&self) -> usize {
        self.blocks[0].n_samples()
    }

    pub fn total_d(&self) -> usize {
        self.total_d
    }

    pub fn d(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.n_features()).collect()
    }

    pub fn labels(&self) -> Vec<String> {
        self.blocks.iter().map(|b| b.label.clone()).collect()
    }

    pub fn info(&self) -> DatasetInfo {
        DatasetInfo {
            n: self.n_samples(),
            d: self.d(),
            labels: self.labels(),
            feature_names: self.blocks.iter().map(|b| b.feature_names.clone()).collect(),
            sample_names: self.blocks[0].sample_names.clone(),
        }
    }

    /// Restore a block to its original orientation (transposing back if the
    /// source was column-paired).
    pub fn export_block(&self, m: usize) -> SourceMatrix {
        let b = &self.blocks[m];
        if b.column_paired {
            SourceMatrix {
                label: b.label.clone(),
                values: b.values.transpose(),
                row_names: b.feature_names.clone(),
                col_names: b.sample_names.clone(),
            }
        } else {
            SourceMatrix {
                label: b.label.clone(),
                values: b.values.clone(),
                row_names: b.sample_names.clone(),
                col_names: b.feature_names.clone(),
            }
        }
    }

    /// Mark one entry missing in place (used by hold-out harnesses).
    pub fn set_missing(&mut self, m: usize, row: usize, col: usize) {
        let b = &mut self.blocks[m];
        b.values[(row, col)] = f64::NAN;
        b.mask[(row, col)] = false;
    }
}

/// Per-block diagnostics from [`validate`].
#[derive(Debug, Clone, Serialize)]
pub struct BlockDiagnostics {
    pub label: String,
    pub n_features: usize,
    pub missing_count: usize,
    pub observed_per_feature: Vec<usize>,
    /// Indices of features whose observed entries have zero variance; these
    /// break feature scaling.
    pub constant_features: Vec<usize>,
}

/// Dataset-level diagnostics report.
#[derive(Debug, Clone, Serialize)]
pub struct DataDiagnostics {
    pub n_samples: usize,
    pub total_d: usize,
    pub per_block: Vec<BlockDiagnostics>,
}

impl DataDiagnostics {
    pub fn has_constant_features(&self) -> bool {
        self.per_block.iter().any(|b| !b.constant_features.is_empty())
    }
}

impl fmt::Display for DataDiagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} samples, {} blocks, {} features total",
            self.n_samples,
            self.per_block.len(),
            self.total_d
        )?;
        for b in &self.per_block {
            write!(
                f,
                "  block {}: {} features, {} missing entries",
                b.label, b.n_features, b.missing_count
            )?;
            if b.constant_features.is_empty() {
                writeln!(f)?;
            } else {
                writeln!(
                    f,
                    "; constant features (normalization hazard): {:?}",
                    b.constant_features
                )?;
            }
        }
        Ok(())
    }
}

/// Pure diagnostics: missing counts, per-feature coverage, constant features.
pub fn validate(data: &MultiViewData) -> DataDiagnostics {
    let per_block = data
        .blocks()
        .iter()
        .map(|b| {
            let mut observed_per_feature = vec![0usize; b.n_features()];
            let mut missing_count = 0;
            for d in 0..b.n_features() {
                for n in 0..b.n_samples() {
                    if b.mask[(n, d)] {
                        observed_per_feature[d] += 1;
                    } else {
                        missing_count += 1;
                    }
                }
            }
            let constant_features = (0..b.n_features())
                .filter(|&d| {
                    let obs: Vec<f64> = (0..b.n_samples())
                        .filter(|&n| b.mask[(n, d)])
                        .map(|n| b.values[(n, d)])
                        .collect();
                    obs.len() < 2 || obs.iter().all(|&v| v == obs[0])
                })
                .collect();
            BlockDiagnostics {
                label: b.label.clone(),
                n_features: b.n_features(),
                missing_count,
                observed_per_feature,
                constant_features,
            }
        })
        .collect();
    DataDiagnostics {
        n_samples: data.n_samples(),
        total_d: data.total_d(),
        per_block,
    }
}
