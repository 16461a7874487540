//! Group factor analysis (GFA) of multiple co-occurring data matrices.
//!
//! The crate covers the full pipeline: assembling a multi-view dataset,
//! normalization with an exact inverse, Gibbs-sampled Bayesian factorization
//! with group-sparse or element-wise (biclustering) priors, automatic model
//! complexity selection by component pruning, missing-value and new-batch
//! prediction, cross-chain robustness analysis, and interpretation exports.
//!
//! Typical use:
//!
//! ```
//! use gfa_core::{default_options, normalize, run_chain, reconstruction};
//! use gfa_core::{MultiViewData, NormalizationScheme, SourceMatrix};
//! use nalgebra::DMatrix;
//!
//! let block = SourceMatrix::new("expr", DMatrix::from_fn(20, 6, |r, c| {
//!     (r as f64 * 0.3).sin() * (c as f64 + 1.0)
//! }));
//! let data = MultiViewData::assemble(vec![block], vec![]).unwrap();
//! let (data, record) = normalize(&data, NormalizationScheme::Center).unwrap();
//! let mut opts = default_options(20, &[6], false);
//! opts.iterations = 60;
//! opts.burn_in = 30;
//! opts.convergence_check = false;
//! let mut samples = run_chain(&data, &opts, 1).unwrap();
//! samples.normalization = Some(record);
//! let summary = reconstruction(&samples).unwrap();
//! assert_eq!(summary.mean[0].shape(), (20, 6));
//! ```

pub mod data;
pub mod error;
pub mod experiment;
pub mod io;
pub mod model;
pub mod predict;
pub mod preprocess;
pub mod report;
pub mod robust;
pub mod sampler;
pub mod stats;
pub mod store;
pub mod synthetic;

pub use data::{validate, DataBlock, DataDiagnostics, DatasetInfo, MultiViewData, SourceMatrix};
pub use error::{ErrorCategory, GfaError, Result};
pub use model::{
    default_options, informative_noise_prior, init_state, ArdPooling, GfaState, LatentSparsity,
    LoadingSparsity, ModelOptions, NoisePooling, NoiseRatePrior,
};
pub use predict::{predict_new_samples, reconstruction, PredictOptions, PredictiveSummary};
pub use preprocess::{
    denormalize, normalize, NormalizationRecord, NormalizationScheme,
};
pub use report::{component_activity, export_visualization, variance_explained, ComponentSummary};
pub use robust::{component_effect, robust_components, MatchedSet, RobustComponents};
pub use sampler::{geweke_diagnostic, run_chain, PosteriorSamples, PruneEvent, PruneReason};
pub use store::{load_posterior, save_posterior};
