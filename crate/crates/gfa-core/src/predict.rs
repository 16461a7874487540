//! Posterior-predictive reconstruction, missing-value imputation, and
//! fixed-projection prediction for new sample batches.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_distr::StandardNormal;

use crate::data::MultiViewData;
use crate::error::{GfaError, Result};
use crate::preprocess;
use crate::sampler::{ChainRng, PosteriorSamples, PreparedData};

/// Point estimates and predictive standard deviations, one matrix per block.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveSummary {
    pub mean: Vec<DMatrix<f64>>,
    pub sd: Vec<DMatrix<f64>>,
    /// Posterior snapshots averaged over.
    pub n_samples_used: usize,
    /// Whether the summary is on the original (denormalized) data scale.
    pub denormalized: bool,
}

/// Knobs for [`predict_new_samples`].
#[derive(Debug, Clone)]
pub struct PredictOptions {
    /// Use the conditional mean of the new latents (fast, default) instead of
    /// sampling them; sampling adds latent-draw variance to the sd.
    pub point_estimate: bool,
    /// Map outputs back to the original data scale when a normalization
    /// record is attached.
    pub denormalize: bool,
    /// Stream for sampled-latents mode.
    pub seed: u64,
}

impl Default for PredictOptions {
    fn default() -> Self {
        PredictOptions {
            point_estimate: true,
            denormalize: true,
            seed: 0,
        }
    }
}

/// Accumulates across-snapshot mean and variance (denominator n, a posterior
/// moment) plus the average noise variance, entry by entry.
struct SummaryAccumulator {
    sum: Vec<DMatrix<f64>>,
    sum_sq: Vec<DMatrix<f64>>,
    noise_var: Vec<DVector<f64>>, // per block, per feature
    count: usize,
}

impl SummaryAccumulator {
    fn new(n: usize, d: &[usize]) -> Self {
        SummaryAccumulator {
            sum: d.iter().map(|&dm| DMatrix::zeros(n, dm)).collect(),
            sum_sq: d.iter().map(|&dm| DMatrix::zeros(n, dm)).collect(),
            noise_var: d.iter().map(|&dm| DVector::zeros(dm)).collect(),
            count: 0,
        }
    }

    fn add(&mut self, block: usize, pred: &DMatrix<f64>) {
        for (s, p) in self.sum[block].iter_mut().zip(pred.iter()) {
            *s += p;
        }
        for (s, p) in self.sum_sq[block].iter_mut().zip(pred.iter()) {
            *s += p * p;
        }
    }

    fn add_noise(&mut self, snapshot: &crate::model::GfaState) {
        for m in 0..self.noise_var.len() {
            for d in 0..self.noise_var[m].len() {
                self.noise_var[m][d] += 1.0 / snapshot.tau_for(m, d);
            }
        }
    }

    fn finish(self) -> (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
        let s = self.count as f64;
        let mut means = Vec::with_capacity(self.sum.len());
        let mut sds = Vec::with_capacity(self.sum.len());
        for m in 0..self.sum.len() {
            let mean = &self.sum[m] / s;
            let mut sd = DMatrix::zeros(mean.nrows(), mean.ncols());
            for d in 0..mean.ncols() {
                let nv = self.noise_var[m][d] / s;
                for r in 0..mean.nrows() {
                    let across = (self.sum_sq[m][(r, d)] / s - mean[(r, d)] * mean[(r, d)]).max(0.0);
                    sd[(r, d)] = (across + nv).sqrt();
                }
            }
            means.push(mean);
            sds.push(sd);
        }
        (means, sds)
    }
}

fn denormalize_summary(
    samples: &PosteriorSamples,
    mean: Vec<DMatrix<f64>>,
    sd: Vec<DMatrix<f64>>,
    want: bool,
) -> Result<(Vec<DMatrix<f64>>, Vec<DMatrix<f64>>, bool)> {
    match (&samples.normalization, want) {
        (Some(rec), true) => {
            let mean = mean
                .iter()
                .enumerate()
                .map(|(m, v)| preprocess::denormalize_block(rec, m, v))
                .collect::<Result<Vec<_>>>()?;
            let sd = sd
                .iter()
                .enumerate()
                .map(|(m, v)| preprocess::denormalize_sd_block(rec, m, v))
                .collect::<Result<Vec<_>>>()?;
            Ok((mean, sd, true))
        }
        _ => Ok((mean, sd, false)),
    }
}

/// Posterior-predictive summary of the training data: the point estimate is
/// the across-snapshot average of X W^T per block, the predictive variance
/// the across-snapshot variance plus the average noise variance. Covers all
/// entries, observed and missing. Output is denormalized when a record is
/// attached.
pub fn reconstruction(samples: &PosteriorSamples) -> Result<PredictiveSummary> {
    reconstruction_with(samples, true)
}

/// [`reconstruction`] with explicit control over denormalization.
pub fn reconstruction_with(samples: &PosteriorSamples, denormalize: bool) -> Result<PredictiveSummary> {
    if samples.snapshots.is_empty() {
        return Err(GfaError::EmptySamples("reconstruction".into()));
    }
    let n = samples.dataset.n;
    let d = samples.dataset.d.clone();
    let mut acc = SummaryAccumulator::new(n, &d);
    for snap in &samples.snapshots {
        for m in 0..d.len() {
            let pred = &snap.x * snap.w[m].transpose();
            acc.add(m, &pred);
        }
        acc.add_noise(snap);
        acc.count += 1;
    }
    let (mean, sd) = acc.finish();
    let (mean, sd, denormalized) = denormalize_summary(samples, mean, sd, denormalize)?;
    Ok(PredictiveSummary {
        mean,
        sd,
        n_samples_used: samples.snapshots.len(),
        denormalized,
    })
}

/// Fixed-projection prediction for a new batch of samples.
///
/// The batch must already be on the training scale (normalize it with the
/// training record first); blocks must match the trained labels and widths,
/// with the blocks to predict fully missing. For every stored snapshot the
/// new latent rows come from their Gaussian full conditional given the
/// observed blocks only (W and tau fixed), then every block is predicted as
/// X_new W^T and aggregated as in [`reconstruction`].
pub fn predict_new_samples(
    samples: &PosteriorSamples,
    new_batch: &MultiViewData,
    options: &PredictOptions,
) -> Result<PredictiveSummary> {
    if samples.snapshots.is_empty() {
        return Err(GfaError::EmptySamples("predict_new_samples".into()));
    }
    let info = &samples.dataset;
    if new_batch.n_blocks() != info.d.len() {
        return Err(GfaError::ShapeMismatch(format!(
            "new batch has {} blocks, trained model has {}",
            new_batch.n_blocks(),
            info.d.len()
        )));
    }
    for (m, b) in new_batch.blocks().iter().enumerate() {
        if b.label != info.labels[m] {
            return Err(GfaError::ShapeMismatch(format!(
                "block {} is {:?}, trained model expects {:?}",
                m, b.label, info.labels[m]
            )));
        }
        if b.n_features() != info.d[m] {
            return Err(GfaError::ShapeMismatch(format!(
                "block {} has {} features, trained model expects {}",
                b.label,
                b.n_features(),
                info.d[m]
            )));
        }
    }
    let prepared = PreparedData::new(new_batch);
    if prepared.obs_count.iter().all(|&c| c == 0) {
        return Err(GfaError::InvalidData(
            "new batch has zero observed blocks".into(),
        ));
    }

    let n_new = prepared.n;
    let mut acc = SummaryAccumulator::new(n_new, &prepared.d);
    let mut rng = ChainRng::seed_from_u64(options.seed);

    for snap in &samples.snapshots {
        let k = snap.k_active;
        // shared precision over fully observed rows: I + sum_m W^T diag(tau) W
        let mut base = DMatrix::<f64>::identity(k, k);
        let mut rhs = DMatrix::<f64>::zeros(n_new, k);
        for m in 0..prepared.m {
            let w = &snap.w[m];
            if snap.tau[m].len() == 1 {
                let t = snap.tau[m][0];
                base += w.tr_mul(w) * t;
                rhs += (&prepared.y[m] * w) * t;
            } else {
                let mut scaled = w.clone();
                let mut y_scaled = prepared.y[m].clone();
                for d in 0..prepared.d[m] {
                    let t = snap.tau[m][d];
                    scaled.row_mut(d).scale_mut(t.sqrt());
                    y_scaled.column_mut(d).scale_mut(t);
                }
                base += scaled.tr_mul(&scaled);
                rhs += y_scaled * w;
            }
        }

        let mut x_new = DMatrix::<f64>::zeros(n_new, k);
        let mut prec = DMatrix::<f64>::zeros(k, k);
        for row in 0..n_new {
            prec.copy_from(&base);
            for m in 0..prepared.m {
                let w = &snap.w[m];
                for &d in &prepared.missing_by_row[m][row] {
                    let t = snap.tau_for(m, d);
                    for i in 0..k {
                        let wi = t * w[(d, i)];
                        for j in 0..k {
                            prec[(i, j)] -= wi * w[(d, j)];
                        }
                    }
                }
            }
            let chol = nalgebra::Cholesky::new(prec.clone()).ok_or_else(|| {
                GfaError::Factorization("new-batch latent precision not SPD".into())
            })?;
            let mean = chol.solve(&rhs.row(row).transpose());
            if options.point_estimate {
                x_new.row_mut(row).copy_from(&mean.transpose());
            } else {
                let mut z = DVector::from_fn(k, |_, _| {
                    rand::Rng::sample::<f64, _>(&mut rng, StandardNormal)
                });
                let l = chol.l_dirty();
                for i in (0..k).rev() {
                    let mut s = z[i];
                    for j in i + 1..k {
                        s -= l[(j, i)] * z[j];
                    }
                    z[i] = s / l[(i, i)];
                }
                x_new.row_mut(row).copy_from(&(z + mean).transpose());
            }
        }
        for m in 0..prepared.m {
            let pred = &x_new * snap.w[m].transpose();
            acc.add(m, &pred);
        }
        acc.add_noise(snap);
        acc.count += 1;
    }

    let (mean, sd) = acc.finish();
    let (mean, sd, denormalized) = denormalize_summary(samples, mean, sd, options.denormalize)?;
    Ok(PredictiveSummary {
        mean,
        sd,
        n_samples_used: samples.snapshots.len(),
        denormalized,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{DatasetInfo, SourceMatrix};
    use crate::model::{default_options, GfaState, ModelOptions};
    use nalgebra::DVector;

    /// Hand-built chain with explicit snapshots for degenerate-case tests.
    fn handmade_samples(
        snapshots: Vec<GfaState>,
        n: usize,
        d: Vec<usize>,
        options: ModelOptions,
    ) -> PosteriorSamples {
        let dataset = DatasetInfo {
            n,
            d: d.clone(),
            labels: (0..d.len()).map(|m| format!("B{m}")).collect(),
            feature_names: d
                .iter()
                .map(|&dm| (1..=dm).map(|i| format!("f{i}")).collect())
                .collect(),
            sample_names: (1..=n).map(|i| format!("s{i}")).collect(),
        };
        PosteriorSamples {
            snapshots,
            options,
            normalization: None,
            dataset,
            recon_trace: vec![],
            pruning_history: vec![],
            convergence_z: None,
            seed: 0,
            warnings: vec![],
        }
    }

    fn state_1d(x: &[f64], w: &[f64], tau: f64) -> GfaState {
        let n = x.len();
        let d = w.len();
        GfaState {
            x: DMatrix::from_column_slice(n, 1, x),
            w: vec![DMatrix::from_column_slice(d, 1, w)],
            z_w: vec![DMatrix::from_element(d, 1, 1)],
            z_x: DMatrix::from_element(n, 1, 1),
            alpha: DMatrix::from_element(1, 1, 1.0),
            tau: vec![DVector::from_element(1, tau)],
            pi_w: DMatrix::from_element(1, 1, 0.5),
            pi_x: DVector::from_element(1, 0.5),
            k_active: 1,
        }
    }

    #[test]
    fn single_snapshot_reconstruction_is_exact_outer_product() {
        // X = [1, 2]^T, W = [3], tau huge -> mean [[3],[6]], sd ~ 0
        let snap = state_1d(&[1.0, 2.0], &[3.0], 1e30);
        let opts = default_options(2, &[1], false);
        let samples = handmade_samples(vec![snap], 2, vec![1], opts);
        let s = reconstruction(&samples).unwrap();
        assert_eq!(s.mean[0][(0, 0)], 3.0);
        assert_eq!(s.mean[0][(1, 0)], 6.0);
        assert!(s.sd[0][(0, 0)] < 1e-14);
        assert!(!s.denormalized);
    }

    #[test]
    fn two_snapshot_variance_uses_denominator_n() {
        // reconstructions 0 and 2 at every entry, noise negligible:
        // mean 1, across-snapshot variance ((0-1)^2 + (2-1)^2)/2 = 1 -> sd 1
        let s0 = state_1d(&[0.0, 0.0], &[1.0], 1e30);
        let s1 = state_1d(&[2.0, 2.0], &[1.0], 1e30);
        let opts = default_options(2, &[1], false);
        let samples = handmade_samples(vec![s0, s1], 2, vec![1], opts);
        let s = reconstruction(&samples).unwrap();
        assert_eq!(s.mean[0][(0, 0)], 1.0);
        approx::assert_relative_eq!(s.sd[0][(0, 0)], 1.0, max_relative = 1e-12);
    }

    #[test]
    fn predictive_sd_never_below_noise_floor() {
        let s0 = state_1d(&[0.5, -0.5], &[1.0], 4.0); // noise var 0.25
        let s1 = state_1d(&[0.5, -0.5], &[1.0], 4.0);
        let opts = default_options(2, &[1], false);
        let samples = handmade_samples(vec![s0, s1], 2, vec![1], opts);
        let s = reconstruction(&samples).unwrap();
        for v in s.sd[0].iter() {
            assert!(*v >= 0.5 - 1e-12, "sd {v} below noise floor");
        }
    }

    #[test]
    fn empty_sample_set_rejected() {
        let opts = default_options(2, &[1], false);
        let samples = handmade_samples(vec![], 2, vec![1], opts);
        assert!(matches!(
            reconstruction(&samples),
            Err(GfaError::EmptySamples(_))
        ));
    }

    /// Noiseless K=1: conditional mean of the new latent given one observed
    /// block is (tau w^T y) / (1 + tau |w|^2); the missing block's
    /// prediction is that latent times its loading.
    #[test]
    fn fixed_projection_prediction_matches_closed_form() {
        let n_new = 3;
        // trained model: block A loading [2, -1], block B loading [3]
        let mut snap = state_1d(&[0.0; 5], &[0.0], 1.0);
        snap.x = DMatrix::zeros(5, 1);
        snap.w = vec![
            DMatrix::from_column_slice(2, 1, &[2.0, -1.0]),
            DMatrix::from_column_slice(1, 1, &[3.0]),
        ];
        snap.z_w = vec![DMatrix::from_element(2, 1, 1), DMatrix::from_element(1, 1, 1)];
        snap.tau = vec![DVector::from_element(1, 1.5), DVector::from_element(1, 2.0)];
        let opts = default_options(5, &[2, 1], false);
        let samples = handmade_samples(vec![snap], 5, vec![2, 1], opts);

        // new batch: block A observed, block B missing
        let a = SourceMatrix::new("B0", DMatrix::from_row_slice(n_new, 2, &[
            1.0, 0.5, //
            -2.0, 1.0, //
            0.0, 0.0,
        ]));
        let batch = MultiViewData::prediction_batch(vec![a], &samples.dataset).unwrap();
        let s = predict_new_samples(&samples, &batch, &PredictOptions::default()).unwrap();

        let w = [2.0, -1.0];
        let tau = 1.5;
        for (row, y) in [(0, [1.0, 0.5]), (1, [-2.0, 1.0]), (2, [0.0, 0.0])] {
            let num = tau * (w[0] * y[0] + w[1] * y[1]);
            let den = 1.0 + tau * (w[0] * w[0] + w[1] * w[1]);
            let x_hat = num / den;
            approx::assert_relative_eq!(s.mean[1][(row, 0)], 3.0 * x_hat, max_relative = 1e-12);
        }
        // the all-zero row has no evidence pull beyond the observed zeros
        assert_eq!(s.mean[1][(2, 0)], 0.0);
    }

    #[test]
    fn fully_missing_new_row_predicts_prior_mean_zero() {
        let mut snap = state_1d(&[0.0; 4], &[0.0], 1.0);
        snap.x = DMatrix::zeros(4, 1);
        snap.w = vec![
            DMatrix::from_column_slice(2, 1, &[2.0, -1.0]),
            DMatrix::from_column_slice(1, 1, &[3.0]),
        ];
        snap.z_w = vec![DMatrix::from_element(2, 1, 1), DMatrix::from_element(1, 1, 1)];
        snap.tau = vec![DVector::from_element(1, 1.0), DVector::from_element(1, 1.0)];
        let opts = default_options(4, &[2, 1], false);
        let samples = handmade_samples(vec![snap], 4, vec![2, 1], opts);

        let a = SourceMatrix::new(
            "B0",
            DMatrix::from_row_slice(2, 2, &[1.0, 1.0, f64::NAN, f64::NAN]),
        );
        let batch = MultiViewData::prediction_batch(vec![a], &samples.dataset).unwrap();
        let s = predict_new_samples(&samples, &batch, &PredictOptions::default()).unwrap();
        assert_eq!(s.mean[1][(1, 0)], 0.0, "no-evidence row reverts to prior");
        assert_ne!(s.mean[1][(0, 0)], 0.0);
    }

    #[test]
    fn zero_observed_blocks_rejected() {
        let snap = state_1d(&[0.0; 4], &[1.0, 1.0], 1.0);
        let opts = default_options(4, &[2], false);
        let samples = handmade_samples(vec![snap], 4, vec![2], opts);
        let a = SourceMatrix::new("B0", DMatrix::from_element(3, 2, f64::NAN));
        let batch = MultiViewData::prediction_batch(vec![a], &samples.dataset).unwrap();
        let err = predict_new_samples(&samples, &batch, &PredictOptions::default()).unwrap_err();
        assert!(err.to_string().contains("zero observed blocks"));
    }

    #[test]
    fn feature_dimension_mismatch_rejected() {
        let snap = state_1d(&[0.0; 4], &[1.0, 1.0], 1.0);
        let opts = default_options(4, &[2], false);
        let samples = handmade_samples(vec![snap], 4, vec![2], opts);
        let a = SourceMatrix::new("B0", DMatrix::from_element(3, 5, 1.0));
        assert!(MultiViewData::prediction_batch(vec![a], &samples.dataset).is_err());
    }
}
