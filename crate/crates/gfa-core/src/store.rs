//! Posterior persistence.
//!
//! A chain is stored as a directory: `manifest.json` (options, shapes,
//! labels, seed, convergence z, pruning history, normalization record),
//! `trace.tsv` (one reconstruction scalar per sweep) and one delimited
//! matrix file per stored parameter per snapshot under `snapshots/`.
//! Values round-trip exactly: floats are written in shortest form that
//! parses back to the identical bits.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::DatasetInfo;
use crate::error::{GfaError, Result};
use crate::io::{read_plain_matrix, write_plain_matrix};
use crate::model::{GfaState, LatentSparsity, LoadingSparsity, ModelOptions};
use crate::preprocess::NormalizationRecord;
use crate::sampler::{PosteriorSamples, PruneEvent};

const FORMAT: &str = "delimited-v1";

#[derive(Debug, Serialize, Deserialize)]
struct ChainManifest {
    format: String,
    options: ModelOptions,
    seed: u64,
    dataset: DatasetInfo,
    normalization: Option<NormalizationRecord>,
    convergence_z: Option<f64>,
    pruning_history: Vec<PruneEvent>,
    warnings: Vec<String>,
    n_snapshots: usize,
    k_active: usize,
}

fn snap_dir(dir: &Path, i: usize) -> std::path::PathBuf {
    dir.join("snapshots").join(format!("snap_{i:05}"))
}

/// Persist a chain to `dir` (created if needed).
pub fn save_posterior(dir: impl AsRef<Path>, samples: &PosteriorSamples) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| GfaError::io(dir.display().to_string(), e))?;

    let manifest = ChainManifest {
        format: FORMAT.into(),
        options: samples.options.clone(),
        seed: samples.seed,
        dataset: samples.dataset.clone(),
        normalization: samples.normalization.clone(),
        convergence_z: samples.convergence_z.filter(|z| z.is_finite()),
        pruning_history: samples.pruning_history.clone(),
        warnings: samples.warnings.clone(),
        n_snapshots: samples.snapshots.len(),
        k_active: samples.k_active(),
    };
    let mpath = dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| GfaError::parse(mpath.display().to_string(), e.to_string()))?;
    text.push('\n');
    fs::write(&mpath, text).map_err(|e| GfaError::io(mpath.display().to_string(), e))?;

    let tpath = dir.join("trace.tsv");
    let mut trace = String::new();
    for v in &samples.recon_trace {
        trace.push_str(&format!("{v}\n"));
    }
    fs::write(&tpath, trace).map_err(|e| GfaError::io(tpath.display().to_string(), e))?;

    let spike_w = samples.options.loading_sparsity == LoadingSparsity::ElementSpikeSlab;
    let spike_x = samples.options.latent_sparsity == LatentSparsity::ElementSpikeSlab;
    for (i, snap) in samples.snapshots.iter().enumerate() {
        let sdir = snap_dir(dir, i);
        fs::create_dir_all(&sdir).map_err(|e| GfaError::io(sdir.display().to_string(), e))?;
        write_plain_matrix(sdir.join("x.tsv"), &snap.x)?;
        write_plain_matrix(sdir.join("alpha.tsv"), &snap.alpha)?;
        for (m, w) in snap.w.iter().enumerate() {
            write_plain_matrix(sdir.join(format!("w_{m}.tsv")), w)?;
            write_plain_matrix(
                sdir.join(format!("tau_{m}.tsv")),
                &DMatrix::from_fn(1, snap.tau[m].len(), |_, c| snap.tau[m][c]),
            )?;
        }
        if spike_w {
            write_plain_matrix(sdir.join("pi_w.tsv"), &snap.pi_w)?;
            for (m, zw) in snap.z_w.iter().enumerate() {
                write_plain_matrix(
                    sdir.join(format!("z_w_{m}.tsv")),
                    &DMatrix::from_fn(zw.nrows(), zw.ncols(), |r, c| f64::from(zw[(r, c)])),
                )?;
            }
        }
        if spike_x {
            write_plain_matrix(
                sdir.join("pi_x.tsv"),
                &DMatrix::from_fn(1, snap.pi_x.len(), |_, c| snap.pi_x[c]),
            )?;
            write_plain_matrix(
                sdir.join("z_x.tsv"),
                &DMatrix::from_fn(snap.z_x.nrows(), snap.z_x.ncols(), |r, c| {
                    f64::from(snap.z_x[(r, c)])
                }),
            )?;
        }
    }
    Ok(())
}

fn to_u8_matrix(m: &DMatrix<f64>, what: &str, path: &Path) -> Result<DMatrix<u8>> {
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    for (i, v) in m.iter().enumerate() {
        out[(i % m.nrows(), i / m.nrows())] = match *v {
            v if v == 0.0 => 0,
            v if v == 1.0 => 1,
            other => {
                return Err(GfaError::parse(
                    path.display().to_string(),
                    format!("{what} contains non-indicator value {other}"),
                ))
            }
        };
    }
    Ok(out)
}

/// Load a chain saved by [`save_posterior`].
pub fn load_posterior(dir: impl AsRef<Path>) -> Result<PosteriorSamples> {
    let dir = dir.as_ref();
    let mpath = dir.join("manifest.json");
    let text =
        fs::read_to_string(&mpath).map_err(|e| GfaError::io(mpath.display().to_string(), e))?;
    let manifest: ChainManifest = serde_json::from_str(&text)
        .map_err(|e| GfaError::parse(mpath.display().to_string(), e.to_string()))?;
    if manifest.format != FORMAT {
        return Err(GfaError::parse(
            mpath.display().to_string(),
            format!("unsupported store format {:?}", manifest.format),
        ));
    }

    let tpath = dir.join("trace.tsv");
    let ttext =
        fs::read_to_string(&tpath).map_err(|e| GfaError::io(tpath.display().to_string(), e))?;
    let recon_trace: Vec<f64> = ttext
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.trim()
                .parse::<f64>()
                .map_err(|_| GfaError::parse(tpath.display().to_string(), format!("bad value {l:?}")))
        })
        .collect::<Result<_>>()?;

    let spike_w = manifest.options.loading_sparsity == LoadingSparsity::ElementSpikeSlab;
    let spike_x = manifest.options.latent_sparsity == LatentSparsity::ElementSpikeSlab;
    let m_blocks = manifest.dataset.d.len();
    let pi0 = manifest.options.a_pi / (manifest.options.a_pi + manifest.options.b_pi);

    let mut snapshots = Vec::with_capacity(manifest.n_snapshots);
    for i in 0..manifest.n_snapshots {
        let sdir = snap_dir(dir, i);
        let x = read_plain_matrix(sdir.join("x.tsv"))?;
        let alpha = read_plain_matrix(sdir.join("alpha.tsv"))?;
        let k = x.ncols();
        let mut w = Vec::with_capacity(m_blocks);
        let mut tau = Vec::with_capacity(m_blocks);
        for m in 0..m_blocks {
            w.push(read_plain_matrix(sdir.join(format!("w_{m}.tsv")))?);
            let t = read_plain_matrix(sdir.join(format!("tau_{m}.tsv")))?;
            tau.push(DVector::from_fn(t.ncols(), |c, _| t[(0, c)]));
        }
        let (pi_w, z_w) = if spike_w {
            let pi_w = read_plain_matrix(sdir.join("pi_w.tsv"))?;
            let z_w = (0..m_blocks)
                .map(|m| {
                    let p = sdir.join(format!("z_w_{m}.tsv"));
                    to_u8_matrix(&read_plain_matrix(&p)?, "z_w", &p)
                })
                .collect::<Result<Vec<_>>>()?;
            (pi_w, z_w)
        } else {
            (
                DMatrix::from_element(m_blocks, k, pi0),
                w.iter()
                    .map(|wm| DMatrix::from_element(wm.nrows(), k, 1))
                    .collect(),
            )
        };
        let (pi_x, z_x) = if spike_x {
            let p = read_plain_matrix(sdir.join("pi_x.tsv"))?;
            let zp = sdir.join("z_x.tsv");
            (
                DVector::from_fn(p.ncols(), |c, _| p[(0, c)]),
                to_u8_matrix(&read_plain_matrix(&zp)?, "z_x", &zp)?,
            )
        } else {
            (
                DVector::from_element(k, pi0),
                DMatrix::from_element(x.nrows(), k, 1),
            )
        };
        snapshots.push(GfaState {
            k_active: k,
            x,
            w,
            z_w,
            z_x,
            alpha,
            tau,
            pi_w,
            pi_x,
        });
    }

    let loaded = PosteriorSamples {
        snapshots,
        options: manifest.options,
        normalization: manifest.normalization,
        dataset: manifest.dataset,
        recon_trace,
        pruning_history: manifest.pruning_history,
        convergence_z: manifest.convergence_z,
        seed: manifest.seed,
        warnings: manifest.warnings,
    };
    if loaded.k_active() != manifest.k_active {
        return Err(GfaError::parse(
            dir.display().to_string(),
            format!(
                "manifest says k_active = {}, snapshots have {}",
                manifest.k_active,
                loaded.k_active()
            ),
        ));
    }
    Ok(loaded)
}
