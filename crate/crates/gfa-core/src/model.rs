//! Generative model definition: options, prior elicitation, and state.
//!
//! The model factorizes each block as Y^(m) = X W^(m)T + noise with
//! Normal(0,1) latents, per-(block, component) ARD precisions on the
//! loadings, Gamma noise precisions, and optional element-wise
//! spike-and-slab indicators on X and W (biclustering mode).

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::MultiViewData;
use crate::error::{GfaError, Result};

/// Hard cap on the default initial component count; the default formula is
/// quadratic-cost-prone on wide data.
pub const K_CAP: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadingSparsity {
    /// Group sparsity through ARD precision per (block, component).
    GroupArd,
    /// Element-wise spike-and-slab on W (biclustering mode).
    ElementSpikeSlab,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatentSparsity {
    /// Dense latents along the sample space.
    Dense,
    /// Element-wise spike-and-slab on X (biclustering mode).
    ElementSpikeSlab,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoisePooling {
    /// One residual precision per block.
    PerBlock,
    /// One residual precision per feature.
    PerFeature,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArdPooling {
    /// Component scales are block-specific (group sparsity).
    PerBlock,
    /// One scale per component shared by all blocks.
    Global,
}

/// Rate hyperparameter of the noise precision prior; per-block values arise
/// from [`informative_noise_prior`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseRatePrior {
    Shared(f64),
    PerBlock(Vec<f64>),
}

impl NoiseRatePrior {
    pub fn for_block(&self, m: usize) -> f64 {
        match self {
            NoiseRatePrior::Shared(b) => *b,
            NoiseRatePrior::PerBlock(bs) => bs[m],
        }
    }
}

/// All prior hyperparameters, sparsity/pooling modes and sampler schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelOptions {
    /// Initial component count.
    pub k_init: usize,
    /// Total Gibbs sweeps.
    pub iterations: usize,
    /// Sweeps discarded (pruning happens only here).
    pub burn_in: usize,
    /// Keep every thin-th post-burn-in sweep.
    pub thin: usize,
    pub loading_sparsity: LoadingSparsity,
    pub latent_sparsity: LatentSparsity,
    pub noise_pooling: NoisePooling,
    pub ard_pooling: ArdPooling,
    /// Gamma shape of the ARD precisions.
    pub a_alpha: f64,
    /// Gamma rate of the ARD precisions.
    pub b_alpha: f64,
    /// Gamma shape of the noise precisions.
    pub a_tau: f64,
    /// Gamma rate of the noise precisions.
    pub b_tau: NoiseRatePrior,
    /// Beta parameters of the inclusion probabilities.
    pub a_pi: f64,
    pub b_pi: f64,
    /// Run the reconstruction-trace convergence diagnostic after sampling.
    pub convergence_check: bool,
    /// Variance-explained fraction below which a component counts as empty.
    pub prune_tolerance: f64,
    /// Consecutive sweeps below tolerance before pruning.
    pub prune_patience: usize,
    pub seed: u64,
    pub verbose: bool,
}

/// Defaults for a dataset of the given shape.
///
/// The initial component count is min(N, sum of block widths)/2, capped at
/// [`K_CAP`]. With `bicluster`, element-wise sparse priors are used for both
/// X and W; otherwise latents are dense and loadings group-sparse.
pub fn default_options(n: usize, d: &[usize], bicluster: bool) -> ModelOptions {
    let total_d: usize = d.iter().sum();
    let k_formula = n.min(total_d) / 2;
    let k_init = k_formula.clamp(1, K_CAP);
    if k_formula > K_CAP {
        log::info!("default k_init {k_formula} capped at {K_CAP}");
    }
    ModelOptions {
        k_init,
        iterations: 1000,
        burn_in: 500,
        thin: 5,
        loading_sparsity: if bicluster {
            LoadingSparsity::ElementSpikeSlab
        } else {
            LoadingSparsity::GroupArd
        },
        latent_sparsity: if bicluster {
            LatentSparsity::ElementSpikeSlab
        } else {
            LatentSparsity::Dense
        },
        noise_pooling: NoisePooling::PerBlock,
        ard_pooling: ArdPooling::PerBlock,
        a_alpha: 1e-2,
        b_alpha: 1e-2,
        a_tau: 1e-2,
        b_tau: NoiseRatePrior::Shared(1e-2),
        a_pi: 1.0,
        b_pi: 1.0,
        convergence_check: true,
        prune_tolerance: 1e-6,
        prune_patience: 20,
        seed: 0,
        verbose: false,
    }
}

impl ModelOptions {
    /// Check every invariant, naming the offending field.
    pub fn validate(&self, n_blocks: usize) -> Result<()> {
        if self.k_init == 0 {
            return Err(GfaError::InvalidOptions("k_init must be >= 1".into()));
        }
        if self.burn_in >= self.iterations {
            return Err(GfaError::InvalidOptions(format!(
                "burn_in ({}) must be smaller than iterations ({})",
                self.burn_in, self.iterations
            )));
        }
        if self.thin == 0 {
            return Err(GfaError::InvalidOptions("thin must be >= 1".into()));
        }
        for (name, v) in [
            ("a_alpha", self.a_alpha),
            ("b_alpha", self.b_alpha),
            ("a_tau", self.a_tau),
            ("a_pi", self.a_pi),
            ("b_pi", self.b_pi),
            ("prune_tolerance", self.prune_tolerance),
        ] {
            if !(v > 0.0) {
                return Err(GfaError::InvalidOptions(format!("{name} must be > 0, got {v}")));
            }
        }
        match &self.b_tau {
            NoiseRatePrior::Shared(b) => {
                if !(*b > 0.0) {
                    return Err(GfaError::InvalidOptions(format!(
                        "b_tau must be > 0, got {b}"
                    )));
                }
            }
            NoiseRatePrior::PerBlock(bs) => {
                if bs.len() != n_blocks {
                    return Err(GfaError::InvalidOptions(format!(
                        "b_tau has {} entries but the data has {} blocks",
                        bs.len(),
                        n_blocks
                    )));
                }
                if let Some(b) = bs.iter().find(|b| !(**b > 0.0)) {
                    return Err(GfaError::InvalidOptions(format!(
                        "b_tau entries must be > 0, got {b}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Sweeps kept after burn-in and thinning.
    pub fn kept_snapshots(&self) -> usize {
        (self.iterations - self.burn_in).div_ceil(self.thin)
    }
}

/// Elicit a per-block noise prior from the expected signal proportion.
///
/// For each block with mean observed per-feature variance v, returns
/// a_tau = confidence and b_tau = confidence * (1 - signal_proportion) * v,
/// so the prior mean residual variance is about (1 - signal_proportion) * v.
/// Larger confidence concentrates the prior, pushing weak structured-noise
/// components into the residual term.
pub fn informative_noise_prior(
    data: &MultiViewData,
    signal_proportion: f64,
    confidence: f64,
) -> Result<(f64, Vec<f64>)> {
    if !(signal_proportion > 0.0 && signal_proportion < 1.0) {
        return Err(GfaError::InvalidOptions(format!(
            "signal_proportion must be in (0,1), got {signal_proportion}"
        )));
    }
    if !(confidence > 0.0) {
        return Err(GfaError::InvalidOptions(format!(
            "confidence must be > 0, got {confidence}"
        )));
    }
    let mut b_tau = Vec::with_capacity(data.n_blocks());
    for m in 0..data.n_blocks() {
        let b = data.block(m);
        let mut var_sum = 0.0;
        let mut var_count = 0usize;
        let mut worst_mean: f64 = 0.0;
        for d in 0..b.n_features() {
            let obs: Vec<f64> = (0..b.n_samples())
                .filter(|&n| b.mask[(n, d)])
                .map(|n| b.values[(n, d)])
                .collect();
            let mean = crate::stats::mean(&obs);
            let var = crate::stats::sample_variance(&obs);
            worst_mean = worst_mean.max(mean.abs() / var.sqrt().max(1e-12));
            if obs.len() >= 2 {
                var_sum += var;
                var_count += 1;
            }
        }
        if worst_mean > 1e-6 {
            log::warn!(
                "informative noise prior: block {} does not look centered \
                 (max |mean|/sd = {worst_mean:.3}); center the data first",
                b.label
            );
        }
        let v_hat = var_sum / var_count.max(1) as f64;
        b_tau.push(confidence * (1.0 - signal_proportion) * v_hat);
    }
    Ok((confidence, b_tau))
}

/// One Gibbs configuration of all model variables.
#[derive(Debug, Clone, PartialEq)]
pub struct GfaState {
    /// N x K latent variables.
    pub x: DMatrix<f64>,
    /// Per block, D_m x K projections.
    pub w: Vec<DMatrix<f64>>,
    /// Per block, D_m x K loading inclusion indicators (all 1 under group ARD).
    pub z_w: Vec<DMatrix<u8>>,
    /// N x K latent inclusion indicators (all 1 when latents are dense).
    pub z_x: DMatrix<u8>,
    /// M x K ARD precisions (rows replicated under global pooling).
    pub alpha: DMatrix<f64>,
    /// Per block residual precisions: length 1 (per-block) or D_m (per-feature).
    pub tau: Vec<DVector<f64>>,
    /// M x K loading inclusion probabilities.
    pub pi_w: DMatrix<f64>,
    /// Per component latent inclusion probabilities.
    pub pi_x: DVector<f64>,
    /// Current component count.
    pub k_active: usize,
}

impl GfaState {
    pub fn n_blocks(&self) -> usize {
        self.w.len()
    }

    /// Residual precision applying to entry (•, d) of block m.
    pub fn tau_for(&self, m: usize, d: usize) -> f64 {
        if self.tau[m].len() == 1 {
            self.tau[m][0]
        } else {
            self.tau[m][d]
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().all(|v| v.is_finite())
            && self.w.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.alpha.iter().all(|v| v.is_finite())
            && self.tau.iter().all(|t| t.iter().all(|v| v.is_finite()))
            && self.pi_w.iter().all(|v| v.is_finite())
            && self.pi_x.iter().all(|v| v.is_finite())
    }

    /// Check the mutual-consistency invariants; used by tests and after sweeps
    /// in debug builds.
    pub fn check_invariants(&self) -> Result<()> {
        let k = self.k_active;
        let m = self.n_blocks();
        if self.x.ncols() != k || self.z_x.shape() != self.x.shape() {
            return Err(GfaError::ShapeMismatch("X / z_X".into()));
        }
        if self.alpha.shape() != (m, k) || self.pi_w.shape() != (m, k) {
            return Err(GfaError::ShapeMismatch("alpha / pi_W".into()));
        }
        if self.pi_x.len() != k {
            return Err(GfaError::ShapeMismatch("pi_X".into()));
        }
        for (i, (w, zw)) in self.w.iter().zip(&self.z_w).enumerate() {
            if w.ncols() != k || zw.shape() != w.shape() {
                return Err(GfaError::ShapeMismatch(format!("W/z_W of block {i}")));
            }
            for r in 0..w.nrows() {
                for c in 0..k {
                    if zw[(r, c)] == 0 && w[(r, c)] != 0.0 {
                        return Err(GfaError::InvalidData(
                            "w nonzero where z_W = 0".into(),
                        ));
                    }
                }
            }
        }
        for r in 0..self.x.nrows() {
            for c in 0..k {
                if self.z_x[(r, c)] == 0 && self.x[(r, c)] != 0.0 {
                    return Err(GfaError::InvalidData("x nonzero where z_X = 0".into()));
                }
            }
        }
        if self.alpha.iter().any(|v| !(*v > 0.0)) {
            return Err(GfaError::InvalidData("alpha must be positive".into()));
        }
        if self.tau.iter().any(|t| t.iter().any(|v| !(*v > 0.0))) {
            return Err(GfaError::InvalidData("tau must be positive".into()));
        }
        Ok(())
    }

    /// Drop component `k` from every variable.
    pub fn remove_component(&mut self, k: usize) {
        assert!(k < self.k_active);
        let x = std::mem::take(&mut self.x);
        self.x = x.remove_column(k);
        let zx = std::mem::take(&mut self.z_x);
        self.z_x = zx.remove_column(k);
        for w in &mut self.w {
            let t = std::mem::take(w);
            *w = t.remove_column(k);
        }
        for zw in &mut self.z_w {
            let t = std::mem::take(zw);
            *zw = t.remove_column(k);
        }
        let a = std::mem::take(&mut self.alpha);
        self.alpha = a.remove_column(k);
        let p = std::mem::take(&mut self.pi_w);
        self.pi_w = p.remove_column(k);
        let px = std::mem::take(&mut self.pi_x);
        self.pi_x = px.remove_row(k);
        self.k_active -= 1;
    }
}

/// Draw the initial state: X standard normal, W normal with variance
/// 1/k_init, precisions and inclusion probabilities at their prior means,
/// all indicators included.
pub fn init_state(data: &MultiViewData, options: &ModelOptions, seed: u64) -> GfaState {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    init_state_with_rng(data, options, &mut rng)
}

/// As [`init_state`] but drawing from a caller-owned stream, so a chain can
/// keep consuming the same stream for its sweeps.
pub fn init_state_with_rng<R: Rng>(
    data: &MultiViewData,
    options: &ModelOptions,
    rng: &mut R,
) -> GfaState {
    let n = data.n_samples();
    let m = data.n_blocks();
    let k = options.k_init;
    let std_normal = Normal::new(0.0, 1.0).unwrap();
    let w_init = Normal::new(0.0, (1.0 / k as f64).sqrt()).unwrap();

    // Column-major fill order; fixed so a seed pins the whole state.
    let x = DMatrix::from_fn(n, k, |_, _| std_normal.sample(rng));
    let w: Vec<DMatrix<f64>> = data
        .blocks()
        .iter()
        .map(|b| DMatrix::from_fn(b.n_features(), k, |_, _| w_init.sample(rng)))
        .collect();

    let alpha = DMatrix::from_element(m, k, options.a_alpha / options.b_alpha);
    let tau = (0..m)
        .map(|mi| {
            let t0 = options.a_tau / options.b_tau.for_block(mi);
            match options.noise_pooling {
                NoisePooling::PerBlock => DVector::from_element(1, t0),
                NoisePooling::PerFeature => DVector::from_element(data.block(mi).n_features(), t0),
            }
        })
        .collect();
    let pi0 = options.a_pi / (options.a_pi + options.b_pi);

    GfaState {
        z_x: DMatrix::from_element(n, k, 1),
        z_w: data
            .blocks()
            .iter()
            .map(|b| DMatrix::from_element(b.n_features(), k, 1))
            .collect(),
        x,
        w,
        alpha,
        tau,
        pi_w: DMatrix::from_element(m, k, pi0),
        pi_x: DVector::from_element(k, pi0),
        k_active: k,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SourceMatrix;

    fn toy(n: usize, d: &[usize]) -> MultiViewData {
        let sources = d
            .iter()
            .enumerate()
            .map(|(i, &dm)| {
                SourceMatrix::new(
                    format!("B{i}"),
                    DMatrix::from_fn(n, dm, |r, c| (r + c) as f64 + 0.5 * i as f64),
                )
            })
            .collect();
        MultiViewData::assemble(sources, vec![]).unwrap()
    }

    #[test]
    fn default_k_init_formula() {
        // N=100, D=(30,50): min(100, 80)/2 = 40
        assert_eq!(default_options(100, &[30, 50], false).k_init, 40);
        // N=4, D=(3,): floor(3/2) = 1
        assert_eq!(default_options(4, &[3], false).k_init, 1);
        // never below 1
        assert_eq!(default_options(2, &[1], false).k_init, 1);
        // capped
        assert_eq!(default_options(10_000, &[10_000], false).k_init, K_CAP);
    }

    #[test]
    fn bicluster_flag_selects_sparsity() {
        let dense = default_options(10, &[4], false);
        assert_eq!(dense.loading_sparsity, LoadingSparsity::GroupArd);
        assert_eq!(dense.latent_sparsity, LatentSparsity::Dense);
        let bic = default_options(10, &[4], true);
        assert_eq!(bic.loading_sparsity, LoadingSparsity::ElementSpikeSlab);
        assert_eq!(bic.latent_sparsity, LatentSparsity::ElementSpikeSlab);
        assert_eq!(bic.noise_pooling, NoisePooling::PerBlock);
        assert_eq!(bic.ard_pooling, ArdPooling::PerBlock);
    }

    #[test]
    fn default_options_is_pure() {
        assert_eq!(default_options(7, &[3, 9], true), default_options(7, &[3, 9], true));
    }

    #[test]
    fn options_validation_names_fields() {
        let mut o = default_options(10, &[4], false);
        o.burn_in = o.iterations;
        let e = o.validate(1).unwrap_err().to_string();
        assert!(e.contains("burn_in"), "{e}");
        let mut o = default_options(10, &[4], false);
        o.a_alpha = 0.0;
        assert!(o.validate(1).unwrap_err().to_string().contains("a_alpha"));
        let mut o = default_options(10, &[4], false);
        o.b_tau = NoiseRatePrior::PerBlock(vec![1.0, 2.0]);
        assert!(o.validate(1).is_err());
        assert!(o.validate(2).is_ok());
    }

    #[test]
    fn informative_prior_formula() {
        // v_hat = 2, signal 0.5, confidence 10 -> (10, 10 * 0.5 * 2) = (10, 10)
        let vals = DMatrix::from_column_slice(3, 1, &[-2.0_f64.sqrt(), 0.0, 2.0_f64.sqrt()]);
        let data = MultiViewData::assemble(vec![SourceMatrix::new("A", vals)], vec![]).unwrap();
        let (a, b) = informative_noise_prior(&data, 0.5, 10.0).unwrap();
        assert_eq!(a, 10.0);
        approx::assert_relative_eq!(b[0], 10.0, max_relative = 1e-12);

        // standardized data (v_hat = 1): signal 0.8, confidence 14 -> (14, 2.8)
        let vals = DMatrix::from_column_slice(2, 1, &[-0.5_f64.sqrt(), 0.5_f64.sqrt()]);
        let data = MultiViewData::assemble(vec![SourceMatrix::new("A", vals)], vec![]).unwrap();
        let (a, b) = informative_noise_prior(&data, 0.8, 14.0).unwrap();
        assert_eq!(a, 14.0);
        approx::assert_relative_eq!(b[0], 2.8, max_relative = 1e-12);
    }

    #[test]
    fn informative_prior_vanishes_as_signal_approaches_one() {
        let vals = DMatrix::from_column_slice(2, 1, &[-0.5_f64.sqrt(), 0.5_f64.sqrt()]);
        let data = MultiViewData::assemble(vec![SourceMatrix::new("A", vals)], vec![]).unwrap();
        let (_, b) = informative_noise_prior(&data, 0.999999, 10.0).unwrap();
        assert!(b[0] < 1e-4);
        assert!(informative_noise_prior(&data, 1.0, 10.0).is_err());
        assert!(informative_noise_prior(&data, 0.0, 10.0).is_err());
    }

    #[test]
    fn informative_prior_scales_linearly_in_variance() {
        let vals = DMatrix::from_column_slice(4, 2, &[1., 2., 3., 4., 0., 2., 4., 6.]);
        let d1 = MultiViewData::assemble(vec![SourceMatrix::new("A", vals.clone())], vec![]).unwrap();
        let d2 =
            MultiViewData::assemble(vec![SourceMatrix::new("A", vals * 2.0_f64.sqrt())], vec![])
                .unwrap();
        let (_, b1) = informative_noise_prior(&d1, 0.5, 5.0).unwrap();
        let (_, b2) = informative_noise_prior(&d2, 0.5, 5.0).unwrap();
        approx::assert_relative_eq!(b2[0], 2.0 * b1[0], max_relative = 1e-12);
    }

    #[test]
    fn init_state_shapes_and_determinism() {
        let data = toy(5, &[2, 4]);
        let mut opts = default_options(5, &[2, 4], false);
        opts.k_init = 3;
        let s1 = init_state(&data, &opts, 7);
        let s2 = init_state(&data, &opts, 7);
        let s3 = init_state(&data, &opts, 8);
        assert_eq!(s1, s2);
        assert_ne!(s1, s3);
        assert_eq!(s1.x.shape(), (5, 3));
        assert_eq!(s1.w[0].shape(), (2, 3));
        assert_eq!(s1.w[1].shape(), (4, 3));
        assert_eq!(s1.alpha.shape(), (2, 3));
        assert_eq!(s1.tau[0].len(), 1);
        s1.check_invariants().unwrap();
    }

    #[test]
    fn init_uses_prior_means() {
        let data = toy(4, &[3]);
        let opts = default_options(4, &[3], false);
        let s = init_state(&data, &opts, 0);
        // a_alpha/b_alpha = 1e-2/1e-2 = 1 under defaults
        assert_eq!(s.alpha[(0, 0)], 1.0);
        assert_eq!(s.tau[0][0], 1.0);
        assert_eq!(s.pi_w[(0, 0)], 0.5);
        assert!(s.z_w[0].iter().all(|&z| z == 1));
    }

    #[test]
    fn per_feature_noise_gets_one_tau_per_feature() {
        let data = toy(4, &[3]);
        let mut opts = default_options(4, &[3], false);
        opts.noise_pooling = NoisePooling::PerFeature;
        let s = init_state(&data, &opts, 0);
        assert_eq!(s.tau[0].len(), 3);
    }

    #[test]
    fn remove_component_shifts_everything() {
        let data = toy(4, &[3]);
        let mut opts = default_options(4, &[3], false);
        opts.k_init = 3;
        let mut s = init_state(&data, &opts, 1);
        let kept_col = s.x.column(2).clone_owned();
        s.remove_component(1);
        assert_eq!(s.k_active, 2);
        assert_eq!(s.x.ncols(), 2);
        assert_eq!(s.w[0].ncols(), 2);
        assert_eq!(s.alpha.ncols(), 2);
        assert_eq!(s.pi_x.len(), 2);
        assert_eq!(s.x.column(1), kept_col);
        s.check_invariants().unwrap();
    }
}
