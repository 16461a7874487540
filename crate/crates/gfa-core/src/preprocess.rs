//! Centering and scaling with an exact inverse.
//!
//! Statistics are computed over observed entries only; missing entries stay
//! missing. The record written here travels with the posterior output so
//! predictions can be mapped back to the original data scale.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::MultiViewData;
use crate::error::{GfaError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationScheme {
    /// Subtract each feature's observed mean.
    Center,
    /// Center, then divide each feature by its observed sample sd (n-1).
    CenterScaleFeatures,
    /// Center, then divide each block by the square root of its mean
    /// per-feature observed variance, equalizing expected per-feature
    /// variance across blocks.
    CenterScaleBlocks,
}

impl NormalizationScheme {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "center" => Ok(Self::Center),
            "center_scale_features" => Ok(Self::CenterScaleFeatures),
            "center_scale_blocks" => Ok(Self::CenterScaleBlocks),
            other => Err(GfaError::InvalidOptions(format!(
                "unknown normalization scheme {other:?} (expected center, \
                 center_scale_features or center_scale_blocks)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Center => "center",
            Self::CenterScaleFeatures => "center_scale_features",
            Self::CenterScaleBlocks => "center_scale_blocks",
        }
    }
}

/// Everything needed to invert a [`normalize`] call exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationRecord {
    pub scheme: NormalizationScheme,
    pub block_labels: Vec<String>,
    /// Per block, per feature observed mean.
    pub feature_means: Vec<Vec<f64>>,
    /// Per block, per feature scale divisor (1.0 unless feature scaling).
    pub feature_scales: Vec<Vec<f64>>,
    /// Per block scale divisor (1.0 unless block scaling).
    pub block_scales: Vec<f64>,
}

impl NormalizationRecord {
    /// Combined divisor applied to entry (•, d) of block m.
    pub fn scale(&self, m: usize, d: usize) -> f64 {
        self.feature_scales[m][d] * self.block_scales[m]
    }

    pub fn mean(&self, m: usize, d: usize) -> f64 {
        self.feature_means[m][d]
    }
}

fn observed_column(data: &MultiViewData, m: usize, d: usize) -> Vec<f64> {
    let b = data.block(m);
    (0..b.n_samples())
        .filter(|&n| b.mask[(n, d)])
        .map(|n| b.values[(n, d)])
        .collect()
}

/// Center and optionally scale each block; returns the transformed data and
/// the record inverting it.
pub fn normalize(
    data: &MultiViewData,
    scheme: NormalizationScheme,
) -> Result<(MultiViewData, NormalizationRecord)> {
    let m_blocks = data.n_blocks();
    let mut feature_means = Vec::with_capacity(m_blocks);
    let mut feature_scales = Vec::with_capacity(m_blocks);
    let mut block_scales = Vec::with_capacity(m_blocks);

    for m in 0..m_blocks {
        let b = data.block(m);
        let dm = b.n_features();
        let mut means = Vec::with_capacity(dm);
        let mut variances = Vec::with_capacity(dm);
        for d in 0..dm {
            let obs = observed_column(data, m, d);
            if obs.is_empty() {
                return Err(GfaError::InvalidData(format!(
                    "feature {} of block {} is entirely missing",
                    b.feature_names[d], b.label
                )));
            }
            means.push(crate::stats::mean(&obs));
            variances.push(if obs.len() < 2 {
                f64::NAN
            } else {
                crate::stats::sample_variance(&obs)
            });
        }

        let scales = match scheme {
            NormalizationScheme::Center | NormalizationScheme::CenterScaleBlocks => {
                vec![1.0; dm]
            }
            NormalizationScheme::CenterScaleFeatures => {
                let mut s = Vec::with_capacity(dm);
                for d in 0..dm {
                    let v = variances[d];
                    if v.is_nan() || v == 0.0 {
                        return Err(GfaError::ZeroVariance(format!(
                            "feature {} of block {} has zero observed variance; \
                             cannot scale features",
                            b.feature_names[d], b.label
                        )));
                    }
                    s.push(v.sqrt());
                }
                s
            }
        };

        let block_scale = match scheme {
            NormalizationScheme::CenterScaleBlocks => {
                // Mean per-feature variance over features with >= 2 observations.
                let usable: Vec<f64> = variances.iter().copied().filter(|v| !v.is_nan()).collect();
                let mv = crate::stats::mean(&usable);
                if usable.is_empty() || mv == 0.0 {
                    return Err(GfaError::ZeroVariance(format!(
                        "block {} has zero observed variance; cannot scale blocks",
                        b.label
                    )));
                }
                mv.sqrt()
            }
            _ => 1.0,
        };

        feature_means.push(means);
        feature_scales.push(scales);
        block_scales.push(block_scale);
    }

    let record = NormalizationRecord {
        scheme,
        block_labels: data.labels(),
        feature_means,
        feature_scales,
        block_scales,
    };

    let mut out = data.clone();
    for m in 0..m_blocks {
        let block = out.block_mut(m);
        for d in 0..block.n_features() {
            let mu = record.mean(m, d);
            let s = record.scale(m, d);
            for n in 0..block.n_samples() {
                if block.mask[(n, d)] {
                    block.values[(n, d)] = (block.values[(n, d)] - mu) / s;
                }
            }
        }
    }
    Ok((out, record))
}

/// Exact inverse of [`normalize`] applied to one matrix of block `m`'s shape
/// (reconstructions included, not just the original data).
pub fn denormalize_block(
    record: &NormalizationRecord,
    m: usize,
    values: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let dm = record.feature_means[m].len();
    if values.ncols() != dm {
        return Err(GfaError::ShapeMismatch(format!(
            "block {}: matrix has {} columns, record expects {}",
            record.block_labels[m],
            values.ncols(),
            dm
        )));
    }
    let mut out = values.clone();
    for d in 0..dm {
        let mu = record.mean(m, d);
        let s = record.scale(m, d);
        for n in 0..out.nrows() {
            let v = out[(n, d)];
            if !v.is_nan() {
                out[(n, d)] = v * s + mu;
            }
        }
    }
    Ok(out)
}

/// Map a per-block matrix of standard deviations back to the original scale
/// (multiplies by the scale divisors, no mean shift).
pub fn denormalize_sd_block(
    record: &NormalizationRecord,
    m: usize,
    sds: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let dm = record.feature_means[m].len();
    if sds.ncols() != dm {
        return Err(GfaError::ShapeMismatch(format!(
            "block {}: sd matrix has {} columns, record expects {}",
            record.block_labels[m],
            sds.ncols(),
            dm
        )));
    }
    let mut out = sds.clone();
    for d in 0..dm {
        let s = record.scale(m, d);
        for n in 0..out.nrows() {
            out[(n, d)] *= s;
        }
    }
    Ok(out)
}

/// Denormalize every block of a dataset-shaped collection of matrices.
pub fn denormalize(
    record: &NormalizationRecord,
    per_block: &[DMatrix<f64>],
) -> Result<Vec<DMatrix<f64>>> {
    if per_block.len() != record.feature_means.len() {
        return Err(GfaError::ShapeMismatch(format!(
            "got {} matrices, record has {} blocks",
            per_block.len(),
            record.feature_means.len()
        )));
    }
    per_block
        .iter()
        .enumerate()
        .map(|(m, v)| denormalize_block(record, m, v))
        .collect()
}

/// Apply a training-time record to *new* data (same transform, no new
/// statistics). Used when normalizing a prediction batch.
pub fn apply_record(record: &NormalizationRecord, data: &MultiViewData) -> Result<MultiViewData> {
    if data.n_blocks() != record.feature_means.len() {
        return Err(GfaError::ShapeMismatch(format!(
            "batch has {} blocks, record has {}",
            data.n_blocks(),
            record.feature_means.len()
        )));
    }
    let mut out = data.clone();
    for m in 0..out.n_blocks() {
        let block = out.block_mut(m);
        if block.n_features() != record.feature_means[m].len() {
            return Err(GfaError::ShapeMismatch(format!(
                "block {} has {} features, record expects {}",
                block.label,
                block.n_features(),
                record.feature_means[m].len()
            )));
        }
        for d in 0..block.n_features() {
            let mu = record.mean(m, d);
            let s = record.scale(m, d);
            for n in 0..block.n_samples() {
                if block.mask[(n, d)] {
                    block.values[(n, d)] = (block.values[(n, d)] - mu) / s;
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SourceMatrix;
    use approx::assert_relative_eq;

    fn dataset(vals: DMatrix<f64>) -> MultiViewData {
        MultiViewData::assemble(vec![SourceMatrix::new("A", vals)], vec![]).unwrap()
    }

    #[test]
    fn center_subtracts_feature_means() {
        let data = dataset(DMatrix::from_row_slice(2, 2, &[1., 3., 3., 5.]));
        let (out, rec) = normalize(&data, NormalizationScheme::Center).unwrap();
        let b = out.block(0);
        assert_eq!(b.values[(0, 0)], -1.0);
        assert_eq!(b.values[(0, 1)], -1.0);
        assert_eq!(b.values[(1, 0)], 1.0);
        assert_eq!(b.values[(1, 1)], 1.0);
        assert_eq!(rec.feature_means[0], vec![2.0, 4.0]);
    }

    #[test]
    fn scale_features_uses_sample_sd() {
        // column [0, 2]: mean 1, sample sd sqrt(2) -> +-1/sqrt(2)
        let data = dataset(DMatrix::from_row_slice(2, 1, &[0., 2.]));
        let (out, rec) = normalize(&data, NormalizationScheme::CenterScaleFeatures).unwrap();
        let e = 1.0 / 2.0_f64.sqrt();
        assert_relative_eq!(out.block(0).values[(0, 0)], -e, max_relative = 1e-15);
        assert_relative_eq!(out.block(0).values[(1, 0)], e, max_relative = 1e-15);
        assert_relative_eq!(rec.feature_scales[0][0], 2.0_f64.sqrt());
    }

    #[test]
    fn observed_only_statistics_with_missing() {
        // column [1, NA, 3]: mean recorded as 2, transformed to [-1, NA, 1]
        let data = dataset(DMatrix::from_row_slice(
            3,
            2,
            &[1., 0., f64::NAN, 1., 3., 2.],
        ));
        let (out, rec) = normalize(&data, NormalizationScheme::Center).unwrap();
        assert_eq!(rec.feature_means[0][0], 2.0);
        assert_eq!(out.block(0).values[(0, 0)], -1.0);
        assert!(out.block(0).values[(1, 0)].is_nan());
        assert_eq!(out.block(0).values[(2, 0)], 1.0);
    }

    #[test]
    fn zero_variance_feature_rejected_by_name() {
        let data = dataset(DMatrix::from_row_slice(3, 2, &[1., 5., 2., 5., 3., 5.]));
        let err = normalize(&data, NormalizationScheme::CenterScaleFeatures).unwrap_err();
        assert!(err.to_string().contains("f2"), "{err}");
        // centering alone is fine
        assert!(normalize(&data, NormalizationScheme::Center).is_ok());
    }

    #[test]
    fn block_scaling_equalizes_mean_feature_variance() {
        let a = SourceMatrix::new("A", DMatrix::from_row_slice(4, 1, &[0., 2., 4., 6.]));
        let b = SourceMatrix::new("B", DMatrix::from_row_slice(4, 2, &[0., 0., 20., 40., 40., 80., 60., 120.]));
        let data = MultiViewData::assemble(vec![a, b], vec![]).unwrap();
        let (out, rec) = normalize(&data, NormalizationScheme::CenterScaleBlocks).unwrap();
        for m in 0..2 {
            let blk = out.block(m);
            let mut total = 0.0;
            for d in 0..blk.n_features() {
                let col: Vec<f64> = (0..blk.n_samples()).map(|n| blk.values[(n, d)]).collect();
                total += crate::stats::sample_variance(&col);
            }
            let mean_var = total / blk.n_features() as f64;
            assert_relative_eq!(mean_var, 1.0, max_relative = 1e-12);
        }
        assert!(rec.block_scales[1] > rec.block_scales[0]);
    }

    #[test]
    fn denormalize_is_exact_inverse_on_observed_entries() {
        let vals = DMatrix::from_row_slice(3, 2, &[1.2, -0.5, f64::NAN, 2.5, 0.1, 9.0]);
        let data = dataset(vals.clone());
        for scheme in [
            NormalizationScheme::Center,
            NormalizationScheme::CenterScaleFeatures,
            NormalizationScheme::CenterScaleBlocks,
        ] {
            let (out, rec) = normalize(&data, scheme).unwrap();
            let back = denormalize_block(&rec, 0, &out.block(0).values).unwrap();
            for r in 0..3 {
                for c in 0..2 {
                    if !vals[(r, c)].is_nan() {
                        assert_relative_eq!(back[(r, c)], vals[(r, c)], max_relative = 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn denormalize_all_zero_matrix_gives_recorded_means() {
        let data = dataset(DMatrix::from_row_slice(2, 2, &[1., 3., 3., 5.]));
        let (_, rec) = normalize(&data, NormalizationScheme::Center).unwrap();
        let back = denormalize_block(&rec, 0, &DMatrix::zeros(2, 2)).unwrap();
        assert_eq!(back[(0, 0)], 2.0);
        assert_eq!(back[(1, 1)], 4.0);
    }

    #[test]
    fn denormalize_scalar_example() {
        // value 1 with feature scale 2 and mean 3 -> 1*2 + 3 = 5
        let rec = NormalizationRecord {
            scheme: NormalizationScheme::CenterScaleFeatures,
            block_labels: vec!["A".into()],
            feature_means: vec![vec![3.0]],
            feature_scales: vec![vec![2.0]],
            block_scales: vec![1.0],
        };
        let back = denormalize_block(&rec, 0, &DMatrix::from_element(1, 1, 1.0)).unwrap();
        assert_eq!(back[(0, 0)], 5.0);
    }

    #[test]
    fn denormalize_shape_mismatch_rejected() {
        let data = dataset(DMatrix::from_row_slice(2, 2, &[1., 3., 3., 5.]));
        let (_, rec) = normalize(&data, NormalizationScheme::Center).unwrap();
        assert!(denormalize_block(&rec, 0, &DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn statistics_depend_only_on_observed_multiset() {
        // Same observed multiset {1, 3} in column 0, missing in different positions.
        let d1 = dataset(DMatrix::from_row_slice(3, 2, &[1., 9., f64::NAN, 8., 3., 7.]));
        let d2 = dataset(DMatrix::from_row_slice(3, 2, &[3., 9., 1., 8., f64::NAN, 7.]));
        let (_, r1) = normalize(&d1, NormalizationScheme::Center).unwrap();
        let (_, r2) = normalize(&d2, NormalizationScheme::Center).unwrap();
        assert_eq!(r1.feature_means[0][0], r2.feature_means[0][0]);
    }
}
