//! Synthetic multi-view datasets with known ground truth, plus hold-out
//! helpers for cross-validated benchmarks.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_distr::{Bernoulli, Distribution, StandardNormal};

use crate::data::{MultiViewData, SourceMatrix};
use crate::sampler::ChainRng;

/// Design of a group-sparse dataset: the first `n_shared` components are
/// active in every block, the remainder in exactly one block (round-robin).
#[derive(Debug, Clone)]
pub struct GroupSparseConfig {
    pub n: usize,
    pub d: Vec<usize>,
    pub k_true: usize,
    pub n_shared: usize,
    pub noise_sd: f64,
    /// Loading scale of shared component j in block m is
    /// `shared_strengths[(j + m) % len]`. Shared components with identical
    /// strength in every block are only identified up to rotation; cycling
    /// distinct strengths gives each one a distinct per-block profile.
    /// Empty means uniform strength 1.
    pub shared_strengths: Vec<f64>,
}

impl Default for GroupSparseConfig {
    /// The benchmark design: N=100, D=(40,30,20), six components
    /// (three shared by all blocks with cycled strengths, three
    /// block-specific), unit noise.
    fn default() -> Self {
        GroupSparseConfig {
            n: 100,
            d: vec![40, 30, 20],
            k_true: 6,
            n_shared: 3,
            noise_sd: 1.0,
            shared_strengths: vec![1.5, 1.0, 0.6],
        }
    }
}

/// Generator-known truth of a group-sparse dataset.
#[derive(Debug, Clone)]
pub struct GroupSparseTruth {
    pub x: DMatrix<f64>,
    pub w: Vec<DMatrix<f64>>,
    /// activity[m][k] = component k active in block m.
    pub activity: Vec<Vec<bool>>,
    pub noise_sd: f64,
}

impl GroupSparseTruth {
    /// Data-space effect of component `k` in block `m`.
    pub fn effect(&self, m: usize, k: usize) -> DMatrix<f64> {
        self.x.column(k) * self.w[m].column(k).transpose()
    }
}

/// Draw a dataset from the group factor model with the given sharing design.
pub fn generate_group_sparse(
    cfg: &GroupSparseConfig,
    seed: u64,
) -> (MultiViewData, GroupSparseTruth) {
    assert!(cfg.n_shared <= cfg.k_true);
    let m_blocks = cfg.d.len();
    let mut rng = ChainRng::seed_from_u64(seed);
    let mut normal = |r: usize, c: usize| {
        DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal))
    };
    let x = normal(cfg.n, cfg.k_true);

    let mut activity = vec![vec![false; cfg.k_true]; m_blocks];
    for k in 0..cfg.k_true {
        if k < cfg.n_shared {
            for row in activity.iter_mut() {
                row[k] = true;
            }
        } else {
            activity[(k - cfg.n_shared) % m_blocks][k] = true;
        }
    }

    let mut w = Vec::with_capacity(m_blocks);
    for (m, &dm) in cfg.d.iter().enumerate() {
        let mut wm = normal(dm, cfg.k_true);
        for k in 0..cfg.k_true {
            if !activity[m][k] {
                wm.column_mut(k).fill(0.0);
            } else if k < cfg.n_shared && !cfg.shared_strengths.is_empty() {
                let s = cfg.shared_strengths[(k + m) % cfg.shared_strengths.len()];
                wm.column_mut(k).scale_mut(s);
            }
        }
        w.push(wm);
    }

    let sources = (0..m_blocks)
        .map(|m| {
            let noise = normal(cfg.n, cfg.d[m]) * cfg.noise_sd;
            SourceMatrix::new(format!("block{}", m + 1), &x * w[m].transpose() + noise)
        })
        .collect();
    let data = MultiViewData::assemble(sources, vec![]).expect("generated data is valid");
    (
        data,
        GroupSparseTruth {
            x,
            w,
            activity,
            noise_sd: cfg.noise_sd,
        },
    )
}

/// Generator-known truth of a biclustered dataset (element-wise sparse X and W).
#[derive(Debug, Clone)]
pub struct BiclusterTruth {
    pub x: DMatrix<f64>,
    pub w: Vec<DMatrix<f64>>,
    pub z_x: DMatrix<u8>,
    pub z_w: Vec<DMatrix<u8>>,
    pub noise_sd: f64,
}

/// Draw a dataset whose X and W are element-wise sparse with the given
/// density; nonzero elements are standard normal.
pub fn generate_bicluster(
    n: usize,
    d: &[usize],
    k_true: usize,
    density: f64,
    noise_sd: f64,
    seed: u64,
) -> (MultiViewData, BiclusterTruth) {
    let mut rng = ChainRng::seed_from_u64(seed);
    let bern = Bernoulli::new(density).expect("density in [0,1]");
    let mut sparse = |r: usize, c: usize| {
        let z = DMatrix::from_fn(r, c, |_, _| u8::from(bern.sample(&mut rng)));
        let v = DMatrix::from_fn(r, c, |i, j| {
            if z[(i, j)] == 1 {
                rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            }
        });
        (v, z)
    };
    let (x, z_x) = sparse(n, k_true);
    let mut w = Vec::new();
    let mut z_w = Vec::new();
    for &dm in d {
        let (wm, zm) = sparse(dm, k_true);
        w.push(wm);
        z_w.push(zm);
    }
    let sources = (0..d.len())
        .map(|m| {
            let noise =
                DMatrix::from_fn(n, d[m], |_, _| rng.sample::<f64, _>(StandardNormal)) * noise_sd;
            SourceMatrix::new(format!("block{}", m + 1), &x * w[m].transpose() + noise)
        })
        .collect();
    let data = MultiViewData::assemble(sources, vec![]).expect("generated data is valid");
    (
        data,
        BiclusterTruth {
            x,
            w,
            z_x,
            z_w,
            noise_sd,
        },
    )
}

/// A held-out entry of one block, with its true value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeldOut {
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

/// Mark a random `fraction` of block `m`'s observed entries missing;
/// returns the reduced dataset and the held-out truth.
pub fn hold_out_entries(
    data: &MultiViewData,
    m: usize,
    fraction: f64,
    seed: u64,
) -> (MultiViewData, Vec<HeldOut>) {
    let block = data.block(m);
    let mut observed: Vec<(usize, usize)> = Vec::new();
    for row in 0..block.n_samples() {
        for col in 0..block.n_features() {
            if block.mask[(row, col)] {
                observed.push((row, col));
            }
        }
    }
    let mut rng = ChainRng::seed_from_u64(seed);
    observed.shuffle(&mut rng);
    let take = ((observed.len() as f64) * fraction).round() as usize;
    let mut out = data.clone();
    let mut held = Vec::with_capacity(take);
    for &(row, col) in observed.iter().take(take) {
        held.push(HeldOut {
            row,
            col,
            value: block.values[(row, col)],
        });
        out.set_missing(m, row, col);
    }
    (out, held)
}

/// Partition block `m`'s observed entries into `folds` disjoint hold-out
/// sets of (row, col) indices.
pub fn cv_folds(
    data: &MultiViewData,
    m: usize,
    folds: usize,
    seed: u64,
) -> Vec<Vec<(usize, usize)>> {
    let block = data.block(m);
    let mut observed: Vec<(usize, usize)> = Vec::new();
    for row in 0..block.n_samples() {
        for col in 0..block.n_features() {
            if block.mask[(row, col)] {
                observed.push((row, col));
            }
        }
    }
    let mut rng = ChainRng::seed_from_u64(seed);
    observed.shuffle(&mut rng);
    let mut out = vec![Vec::new(); folds];
    for (i, e) in observed.into_iter().enumerate() {
        out[i % folds].push(e);
    }
    out
}

/// Column-mean imputation of held-out entries, the baseline predictor:
/// each entry is predicted by its feature's observed training mean.
pub fn column_mean_predictions(
    train: &MultiViewData,
    m: usize,
    held: &[HeldOut],
) -> Vec<f64> {
    let block = train.block(m);
    let means: Vec<f64> = (0..block.n_features())
        .map(|col| {
            let obs: Vec<f64> = (0..block.n_samples())
                .filter(|&r| block.mask[(r, col)])
                .map(|r| block.values[(r, col)])
                .collect();
            crate::stats::mean(&obs)
        })
        .collect();
    held.iter().map(|h| means[h.col]).collect()
}
