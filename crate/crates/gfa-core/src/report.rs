//! Model interpretation: per-block component activity, variance explained,
//! and plot-ready static exports.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Serialize;

use crate::data::MultiViewData;
use crate::error::{GfaError, Result};
use crate::io;
use crate::model::LoadingSparsity;
use crate::robust::component_effect;
use crate::sampler::{PosteriorSamples, PreparedData};

/// Default fraction of block variance a component must explain to count as
/// active there (group-ARD mode).
pub const DEFAULT_ACTIVITY_THRESHOLD: f64 = 0.005;

/// Which components act in which blocks, with the variance they explain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentSummary {
    /// M x K: 1 when the component is active in the block.
    pub activity: Vec<Vec<u8>>,
    /// M x K variance-explained fractions.
    pub variance_explained: Vec<Vec<f64>>,
    /// Component indices sorted by total variance explained, descending.
    pub order: Vec<usize>,
    pub activity_threshold: f64,
}

impl ComponentSummary {
    /// Components active in at least two blocks (they imply predictability
    /// from one data source to another).
    pub fn shared_components(&self) -> Vec<usize> {
        let k = self.order.len();
        (0..k)
            .filter(|&comp| self.activity.iter().filter(|row| row[comp] == 1).count() >= 2)
            .collect()
    }
}

/// M x K variance-explained fractions on the normalized (training) scale:
/// v_{m,k} = |E_k^(m)|^2_F / |Y^(m)|^2_F over observed entrieser, with E_k
/// the posterior-mean component effect.
pub fn variance_explained(
    samples: &PosteriorSamples,
    data: &MultiViewData,
) -> Result<DMatrix<f64>> {
    if samples.snapshots.is_empty() {
        return Err(GfaError::EmptySamples("variance_explained".into()));
    }
    if data.n_samples() != samples.dataset.n || data.d() != samples.dataset.d {
        return Err(GfaError::ShapeMismatch(
            "data does not match the shapes the chain was trained on".into(),
        ));
    }
    let prepared = PreparedData::new(data);
    let m_blocks = data.n_blocks();
    let k = samples.k_active();
    for (m, &sq) in prepared.y_sq_obs.iter().enumerate() {
        if sq == 0.0 {
            return Err(GfaError::ZeroVariance(format!(
                "block {} has zero observed variance",
                data.block(m).label
            )));
        }
    }
    let mut v = DMatrix::zeros(m_blocks, k);
    for comp in 0..k {
        let effect = component_effect(samples, comp)?;
        for m in 0..m_blocks {
            let mask = &data.block(m).mask;
            let mut num = 0.0;
            for col in 0..effect[m].ncols() {
                for row in 0..effect[m].nrows() {
                    if mask[(row, col)] {
                        num += effect[m][(row, col)] * effect[m][(row, col)];
                    }
                }
            }
            v[(m, comp)] = num / prepared.y_sq_obs[m];
        }
    }
    Ok(v)
}

/// Binary M x K activity matrix.
///
/// Group-ARD loadings: active when the variance-explained fraction reaches
/// `activity_threshold`. Spike-and-slab loadings: active when the posterior
/// mean inclusion fraction of z_W in the block reaches 0.5.
pub fn component_activity(
    samples: &PosteriorSamples,
    data: &MultiViewData,
    activity_threshold: f64,
) -> Result<ComponentSummary> {
    let v = variance_explained(samples, data)?;
    let m_blocks = v.nrows();
    let k = v.ncols();
    let activity: Vec<Vec<u8>> = match samples.options.loading_sparsity {
        LoadingSparsity::GroupArd => (0..m_blocks)
            .map(|m| {
                (0..k)
                    .map(|comp| u8::from(v[(m, comp)] >= activity_threshold))
                    .collect()
            })
            .collect(),
        LoadingSparsity::ElementSpikeSlab => {
            let s = samples.snapshots.len() as f64;
            (0..m_blocks)
                .map(|m| {
                    let dm = samples.dataset.d[m];
                    (0..k)
                        .map(|comp| {
                            let included: usize = samples
                                .snapshots
                                .iter()
                                .map(|snap| {
                                    (0..dm).map(|d| snap.z_w[m][(d, comp)] as usize).sum::<usize>()
                                })
                                .sum();
                            let fraction = included as f64 / (s * dm as f64);
                            u8::from(fraction >= 0.5)
                        })
                        .collect()
                })
                .collect()
        }
    };
    let mut order: Vec<usize> = (0..k).collect();
    let totals: Vec<f64> = (0..k).map(|comp| (0..m_blocks).map(|m| v[(m, comp)]).sum()).collect();
    order.sort_by(|&a, &b| totals[b].partial_cmp(&totals[a]).unwrap().then(a.cmp(&b)));
    Ok(ComponentSummary {
        activity,
        variance_explained: (0..m_blocks)
            .map(|m| (0..k).map(|comp| v[(m, comp)]).collect())
            .collect(),
        order,
        activity_threshold,
    })
}

fn color_hex(t: f64) -> String {
    // diverging scale anchored at 0: blue for negative, white at 0, red for
    // positive; t in [-1, 1]
    let ch = |x: f64| (255.0 * x.clamp(0.0, 1.0)).round() as u8;
    if t >= 0.0 {
        format!("#ff{0:02x}{0:02x}", ch(1.0 - t))
    } else {
        format!("#{0:02x}{0:02x}ff", ch(1.0 + t))
    }
}

fn svg_heatmap(values: &DMatrix<f64>, path: &Path) -> Result<()> {
    const CELL: usize = 12;
    let (rows, cols) = values.shape();
    let max_abs = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" \
         shape-rendering=\"crispEdges\">\n",
        cols * CELL,
        rows * CELL
    ));
    for r in 0..rows {
        for c in 0..cols {
            let t = if max_abs == 0.0 {
                0.0
            } else {
                values[(r, c)] / max_abs
            };
            out.push_str(&format!(
                "<rect x=\"{}\" y=\"{}\" width=\"{CELL}\" height=\"{CELL}\" fill=\"{}\"/>\n",
                c * CELL,
                r * CELL,
                color_hex(t)
            ));
        }
    }
    out.push_str("</svg>\n");
    std::fs::write(path, out).map_err(|e| GfaError::io(path.display().to_string(), e))
}

#[derive(Serialize)]
struct ExportManifest {
    files: Vec<String>,
    k_active: usize,
    blocks: Vec<String>,
    activity_threshold: f64,
}

/// Write interpretation artifacts: activity and variance-explained matrices,
/// posterior-mean X and W, per-component effects, and the total
/// reconstruction, each as a delimited file plus an SVG heatmap, with a
/// manifest listing every file. Output is deterministic byte for byte.
pub fn export_visualization(
    samples: &PosteriorSamples,
    data: &MultiViewData,
    out_dir: impl AsRef<Path>,
) -> Result<Vec<PathBuf>> {
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir)
        .map_err(|e| GfaError::io(out_dir.display().to_string(), e))?;
    let k = samples.k_active();
    let labels = &samples.dataset.labels;
    let comp_names: Vec<String> = (1..=k).map(|i| format!("k{i}")).collect();
    let block_names: Vec<String> = labels.clone();
    let mut files: Vec<String> = Vec::new();
    let write_matrix = |name: &str,
                            values: &DMatrix<f64>,
                            rows: &[String],
                            cols: &[String],
                            files: &mut Vec<String>|
     -> Result<()> {
        let tsv = out_dir.join(format!("{name}.tsv"));
        io::write_labeled_matrix(&tsv, values, rows, cols)?;
        files.push(format!("{name}.tsv"));
        let svg = out_dir.join(format!("{name}.svg"));
        svg_heatmap(values, &svg)?;
        files.push(format!("{name}.svg"));
        Ok(())
    };

    let summary = component_activity(samples, data, DEFAULT_ACTIVITY_THRESHOLD)?;
    let m_blocks = data.n_blocks();
    let activity = DMatrix::from_fn(m_blocks, k, |m, comp| f64::from(summary.activity[m][comp]));
    write_matrix("activity", &activity, &block_names, &comp_names, &mut files)?;
    let vexp = DMatrix::from_fn(m_blocks, k, |m, comp| summary.variance_explained[m][comp]);
    write_matrix("variance_explained", &vexp, &block_names, &comp_names, &mut files)?;

    // posterior means of X and W
    let s = samples.snapshots.len() as f64;
    let mut x_mean = DMatrix::zeros(samples.dataset.n, k);
    for snap in &samples.snapshots {
        x_mean += &snap.x;
    }
    x_mean /= s;
    write_matrix("x_mean", &x_mean, &samples.dataset.sample_names, &comp_names, &mut files)?;
    for m in 0..m_blocks {
        let mut w_mean = DMatrix::zeros(samples.dataset.d[m], k);
        for snap in &samples.snapshots {
            w_mean += &snap.w[m];
        }
        w_mean /= s;
        write_matrix(
            &format!("w_mean_{}", labels[m]),
            &w_mean,
            &samples.dataset.feature_names[m],
            &comp_names,
            &mut files,
        )?;
    }

    // per-component effects and total reconstruction
    let mut totals: Vec<DMatrix<f64>> = samples
        .dataset
        .d
        .iter()
        .map(|&dm| DMatrix::zeros(samples.dataset.n, dm))
        .collect();
    for comp in 0..k {
        let effect = component_effect(samples, comp)?;
        for m in 0..m_blocks {
            totals[m] += &effect[m];
            write_matrix(
                &format!("effect_k{}_{}", comp + 1, labels[m]),
                &effect[m],
                &samples.dataset.sample_names,
                &samples.dataset.feature_names[m],
                &mut files,
            )?;
        }
    }
    for m in 0..m_blocks {
        write_matrix(
            &format!("reconstruction_{}", labels[m]),
            &totals[m],
            &samples.dataset.sample_names,
            &samples.dataset.feature_names[m],
            &mut files,
        )?;
    }

    let manifest = ExportManifest {
        files: files.clone(),
        k_active: k,
        blocks: labels.clone(),
        activity_threshold: DEFAULT_ACTIVITY_THRESHOLD,
    };
    let mpath = out_dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| GfaError::parse("manifest.json", e.to_string()))?;
    text.push('\n');
    std::fs::write(&mpath, text).map_err(|e| GfaError::io(mpath.display().to_string(), e))?;
    files.push("manifest.json".into());
    Ok(files.into_iter().map(|f| out_dir.join(f)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{DatasetInfo, SourceMatrix};
    use crate::model::{default_options, GfaState};
    use nalgebra::DVector;
    use tempfile::tempdir;

    fn chain_with(x: DMatrix<f64>, w: Vec<DMatrix<f64>>, bicluster: bool) -> PosteriorSamples {
        let n = x.nrows();
        let k = x.ncols();
        let d: Vec<usize> = w.iter().map(|wm| wm.nrows()).collect();
        let m = d.len();
        let state = GfaState {
            z_x: DMatrix::from_element(n, k, 1),
            z_w: w
                .iter()
                .map(|wm| {
                    DMatrix::from_fn(wm.nrows(), k, |r, c| u8::from(wm[(r, c)] != 0.0 || !bicluster))
                })
                .collect(),
            alpha: DMatrix::from_element(m, k, 1.0),
            tau: (0..m).map(|_| DVector::from_element(1, 1.0)).collect(),
            pi_w: DMatrix::from_element(m, k, 0.5),
            pi_x: DVector::from_element(k, 0.5),
            k_active: k,
            x,
            w,
        };
        PosteriorSamples {
            snapshots: vec![state],
            options: default_options(n, &d, bicluster),
            normalization: None,
            dataset: DatasetInfo {
                n,
                d: d.clone(),
                labels: (0..m).map(|i| format!("B{i}")).collect(),
                feature_names: d
                    .iter()
                    .map(|&dm| (1..=dm).map(|i| format!("f{i}")).collect())
                    .collect(),
                sample_names: (1..=n).map(|i| format!("s{i}")).collect(),
            },
            recon_trace: vec![],
            pruning_history: vec![],
            convergence_z: None,
            seed: 0,
            warnings: vec![],
        }
    }

    #[test]
    fn exact_effect_explains_all_variance() {
        // Y equals component 0's effect exactly; component 1 is zero
        let x = DMatrix::from_column_slice(3, 2, &[1.0, -2.0, 0.5, 0.0, 0.0, 0.0]);
        let w = vec![DMatrix::from_column_slice(2, 2, &[2.0, -1.0, 0.0, 0.0])];
        let chain = chain_with(x.clone(), w.clone(), false);
        let y = x.column(0) * w[0].column(0).transpose();
        let data = MultiViewData::assemble(vec![SourceMatrix::new("B0", y)], vec![]).unwrap();
        let v = variance_explained(&chain, &data).unwrap();
        approx::assert_relative_eq!(v[(0, 0)], 1.0, max_relative = 1e-12);
        assert_eq!(v[(0, 1)], 0.0);
    }

    #[test]
    fn activity_threshold_is_monotone() {
        let x = DMatrix::from_column_slice(3, 2, &[1.0, -2.0, 0.5, 0.1, 0.2, -0.1]);
        let w = vec![DMatrix::from_column_slice(2, 2, &[2.0, -1.0, 0.3, 0.2])];
        let chain = chain_with(x.clone(), w.clone(), false);
        let y = &x * w[0].transpose();
        let data = MultiViewData::assemble(vec![SourceMatrix::new("B0", y)], vec![]).unwrap();
        let mut prev_active = usize::MAX;
        for thr in [0.0, 0.001, 0.01, 0.1, 0.5, 1.0] {
            let s = component_activity(&chain, &data, thr).unwrap();
            let active: usize = s.activity.iter().flatten().map(|&a| a as usize).sum();
            assert!(active <= prev_active, "raising threshold activated a component");
            prev_active = active;
        }
        // threshold 0 marks anything with a nonzero effect active
        let s = component_activity(&chain, &data, 0.0).unwrap();
        assert!(s.activity.iter().flatten().all(|&a| a == 1));
    }

    #[test]
    fn spike_mode_uses_inclusion_fractions() {
        let x = DMatrix::from_column_slice(3, 1, &[1.0, -2.0, 0.5]);
        // feature inclusion 2/3 >= 0.5 -> active
        let w = vec![DMatrix::from_column_slice(3, 1, &[2.0, -1.0, 0.0])];
        let chain = chain_with(x.clone(), w.clone(), true);
        let y = &x * w[0].transpose();
        let data = MultiViewData::assemble(vec![SourceMatrix::new("B0", y)], vec![]).unwrap();
        let s = component_activity(&chain, &data, 0.005).unwrap();
        assert_eq!(s.activity[0][0], 1);

        // all-zero column: inclusion 0 -> inactive
        let w0 = vec![DMatrix::from_column_slice(3, 1, &[0.0, 0.0, 0.0])];
        let chain0 = chain_with(x, w0, true);
        let s0 = component_activity(&chain0, &data, 0.005).unwrap();
        assert_eq!(s0.activity[0][0], 0);
    }

    #[test]
    fn export_writes_documented_inventory_deterministically() {
        let x = DMatrix::from_column_slice(3, 2, &[1.0, -2.0, 0.5, 0.1, 0.2, -0.1]);
        let w = vec![DMatrix::from_column_slice(2, 2, &[2.0, -1.0, 0.3, 0.2])];
        let chain = chain_with(x.clone(), w.clone(), false);
        let y = &x * w[0].transpose();
        let data = MultiViewData::assemble(vec![SourceMatrix::new("B0", y)], vec![]).unwrap();

        let dir1 = tempdir().unwrap();
        let dir2 = tempdir().unwrap();
        let files1 = export_visualization(&chain, &data, dir1.path()).unwrap();
        let files2 = export_visualization(&chain, &data, dir2.path()).unwrap();
        // inventory: activity, variance_explained, x_mean, w_mean_B0,
        // effect_k{1,2}_B0, reconstruction_B0 (tsv+svg each) + manifest
        assert_eq!(files1.len(), 2 * (4 + 2 + 1) + 1);
        for f in &files1 {
            assert!(f.exists(), "{f:?} missing");
        }
        for (a, b) in files1.iter().zip(files2.iter()) {
            assert_eq!(
                std::fs::read(a).unwrap(),
                std::fs::read(b).unwrap(),
                "{a:?} differs between runs"
            );
        }
        let manifest: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir1.path().join("manifest.json")).unwrap())
                .unwrap();
        let listed: Vec<String> = manifest["files"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_str().unwrap().to_string())
            .collect();
        let on_disk: Vec<String> = files1
            .iter()
            .filter(|f| f.file_name().unwrap() != "manifest.json")
            .map(|f| f.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        assert_eq!(listed, on_disk, "manifest inventory must match the files written");
    }

    #[test]
    fn zero_effects_render_uniform_mid_scale() {
        let x = DMatrix::from_column_slice(2, 1, &[0.0, 0.0]);
        let w = vec![DMatrix::from_column_slice(2, 1, &[0.0, 0.0])];
        let chain = chain_with(x, w, false);
        let data = MultiViewData::assemble(
            vec![SourceMatrix::new(
                "B0",
                DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]),
            )],
            vec![],
        )
        .unwrap();
        let dir = tempdir().unwrap();
        export_visualization(&chain, &data, dir.path()).unwrap();
        let svg = std::fs::read_to_string(dir.path().join("effect_k1_B0.svg")).unwrap();
        assert!(svg.contains("#ffffff"), "zero matrix should be mid-scale white");
        assert!(!svg.contains("#ff00"), "nothing saturated in a zero matrix");
    }

    #[test]
    fn full_reconstruction_dominates_single_components() {
        let x = DMatrix::from_column_slice(4, 2, &[1.0, -2.0, 0.5, 1.5, 0.4, 0.8, -1.1, 0.3]);
        let w = vec![DMatrix::from_column_slice(3, 2, &[2.0, -1.0, 0.5, 0.3, 0.2, -0.7])];
        let chain = chain_with(x.clone(), w.clone(), false);
        let y = &x * w[0].transpose();
        let data = MultiViewData::assemble(vec![SourceMatrix::new("B0", y.clone())], vec![]).unwrap();
        let v = variance_explained(&chain, &data).unwrap();
        // run the variance ratio for the full reconstruction
        let num: f64 = y.iter().map(|e| e * e).sum();
        let den: f64 = y.iter().map(|e| e * e).sum();
        let full = num / den;
        for comp in 0..2 {
            assert!(full >= v[(0, comp)] - 1e-12);
        }
    }
}
