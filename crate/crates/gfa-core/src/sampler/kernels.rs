//! Full-conditional Gibbs updates.
//!
//! Missing entries contribute nothing to any conditional: sums run over
//! observed entries only. The working copies in [`PreparedData`] hold zeros
//! at missing positions so right-hand sides need no masking; precision
//! matrices subtract the missing rank-1 terms explicitly.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma, Normal, StandardNormal};

use crate::error::{GfaError, Result};
use crate::model::{GfaState, LatentSparsity, LoadingSparsity, ModelOptions, NoisePooling};

use super::{ArdPooling, PreparedData};

/// Cholesky of a precision matrix, retrying once with trace-scaled jitter.
fn spd_cholesky(prec: DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    let k = prec.nrows();
    match Cholesky::new(prec.clone()) {
        Some(c) => Ok(c),
        None => {
            let jitter = 1e-10 * prec.trace() / k as f64;
            log::warn!("precision factorization failed, adding jitter {jitter:.3e}");
            let mut p = prec;
            for i in 0..k {
                p[(i, i)] += jitter;
            }
            Cholesky::new(p).ok_or_else(|| {
                GfaError::Factorization(format!("{k}x{k} precision not SPD even with jitter"))
            })
        }
    }
}

/// Draw from N(mean, precision^-1) given the precision's Cholesky factor:
/// x = mean + L^-T z.
fn draw_gaussian_from_precision<R: Rng>(
    chol: &Cholesky<f64, Dyn>,
    mean: &DVector<f64>,
    rng: &mut R,
) -> DVector<f64> {
    let k = mean.len();
    let mut z = DVector::from_fn(k, |_, _| rng.sample::<f64, _>(StandardNormal));
    let l = chol.l_dirty();
    // back-substitution for L^T v = z, in place
    for i in (0..k).rev() {
        let mut s = z[i];
        for j in i + 1..k {
            s -= l[(j, i)] * z[j];
        }
        z[i] = s / l[(i, i)];
    }
    z + mean
}

fn gamma_draw<R: Rng>(kernel: &str, shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    if !(shape.is_finite() && rate.is_finite() && shape > 0.0 && rate > 0.0) {
        return Err(GfaError::OverflowedConditional {
            kernel: kernel.into(),
            detail: format!("Gamma(shape={shape}, rate={rate})"),
        });
    }
    Ok(Gamma::new(shape, 1.0 / rate).unwrap().sample(rng))
}

fn slab_draw<R: Rng>(kernel: &str, mu: f64, lambda: f64, rng: &mut R) -> Result<f64> {
    if !(mu.is_finite() && lambda.is_finite() && lambda > 0.0) {
        return Err(GfaError::OverflowedConditional {
            kernel: kernel.into(),
            detail: format!("Normal(mu={mu}, precision={lambda})"),
        });
    }
    Ok(Normal::new(mu, (1.0 / lambda).sqrt()).unwrap().sample(rng))
}

fn sigmoid(log_odds: f64) -> f64 {
    if log_odds >= 0.0 {
        1.0 / (1.0 + (-log_odds).exp())
    } else {
        let e = log_odds.exp();
        e / (1.0 + e)
    }
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    (p / (1.0 - p)).ln()
}

/// Redraw the latent matrix X from its full conditional.
pub fn update_latents<R: Rng>(
    state: &mut GfaState,
    data: &PreparedData,
    options: &ModelOptions,
    rng: &mut R,
) -> Result<()> {
    match options.latent_sparsity {
        LatentSparsity::Dense => update_latents_dense(state, data, rng),
        LatentSparsity::ElementSpikeSlab => update_latents_spike_slab(state, data, rng),
    }
}

fn update_latents_dense<R: Rng>(
    state: &mut GfaState,
    data: &PreparedData,
    rng: &mut R,
) -> Result<()> {
    let k = state.k_active;
    let n = data.n;

    // Shared fully-observed precision: I_K + sum_m W^T diag(tau) W.
    let mut base = DMatrix::<f64>::identity(k, k);
    let mut rhs = DMatrix::<f64>::zeros(n, k);
    for m in 0..data.m {
        let w = &state.w[m];
        if state.tau[m].len() == 1 {
            let t = state.tau[m][0];
            base += w.tr_mul(w) * t;
            rhs += (&data.y[m] * w) * t;
        } else {
            let mut scaled = w.clone();
            let mut y_scaled = data.y[m].clone();
            for d in 0..data.d[m] {
                let t = state.tau[m][d];
                let ts = t.sqrt();
                scaled.row_mut(d).scale_mut(ts);
                y_scaled.column_mut(d).scale_mut(t);
            }
            base += scaled.tr_mul(&scaled);
            rhs += y_scaled * w;
        }
    }

    let mut prec = DMatrix::<f64>::zeros(k, k);
    for row in 0..n {
        prec.copy_from(&base);
        for m in 0..data.m {
            let w = &state.w[m];
            for &d in &data.missing_by_row[m][row] {
                let t = state.tau_for(m, d);
                for i in 0..k {
                    let wi = t * w[(d, i)];
                    for j in 0..k {
                        prec[(i, j)] -= wi * w[(d, j)];
                    }
                }
            }
        }
        let chol = spd_cholesky(prec.clone())?;
        let mean = chol.solve(&rhs.row(row).transpose());
        let xi = draw_gaussian_from_precision(&chol, &mean, rng);
        state.x.row_mut(row).copy_from(&xi.transpose());
    }
    Ok(())
}

fn update_latents_spike_slab<R: Rng>(
    state: &mut GfaState,
    data: &PreparedData,
    rng: &mut R,
) -> Result<()> {
    let k = state.k_active;
    for row in 0..data.n {
        // current prediction of this sample's row in every block
        let mut pred: Vec<DVector<f64>> = (0..data.m)
            .map(|m| (state.w[m].clone() * state.x.row(row).transpose()).column(0).into())
            .collect();
        for comp in 0..k {
            let x_old = state.x[(row, comp)];
            let mut s_ww = 0.0; // sum tau * w^2 over observed entries
            let mut s_wr = 0.0; // sum tau * w * residual-excluding-comp
            for m in 0..data.m {
                let w = &state.w[m];
                let mask = &data.mask[m];
                for d in 0..data.d[m] {
                    if !mask[(row, d)] {
                        continue;
                    }
                    let wv = w[(d, comp)];
                    if wv == 0.0 {
                        continue;
                    }
                    let t = state.tau_for(m, d);
                    let r = data.y[m][(row, d)] - pred[m][d] + x_old * wv;
                    s_ww += t * wv * wv;
                    s_wr += t * wv * r;
                }
            }
            // slab prior variance is 1
            let lambda = 1.0 + s_ww;
            let mu = s_wr / lambda;
            let log_odds = logit(state.pi_x[comp]) - 0.5 * lambda.ln() + 0.5 * lambda * mu * mu;
            let include = rng.random::<f64>() < sigmoid(log_odds);
            let x_new = if include {
                state.z_x[(row, comp)] = 1;
                slab_draw("update_latents", mu, lambda, rng)?
            } else {
                state.z_x[(row, comp)] = 0;
                0.0
            };
            if x_new != x_old {
                let delta = x_new - x_old;
                for m in 0..data.m {
                    let w = &state.w[m];
                    for d in 0..data.d[m] {
                        pred[m][d] += w[(d, comp)] * delta;
                    }
                }
                state.x[(row, comp)] = x_new;
            }
        }
    }
    Ok(())
}

/// Redraw every projection matrix W^(m) from its full conditional.
pub fn update_loadings<R: Rng>(
    state: &mut GfaState,
    data: &PreparedData,
    options: &ModelOptions,
    rng: &mut R,
) -> Result<()> {
    match options.loading_sparsity {
        LoadingSparsity::GroupArd => update_loadings_dense(state, data, rng),
        LoadingSparsity::ElementSpikeSlab => update_loadings_spike_slab(state, data, rng),
    }
}

fn update_loadings_dense<R: Rng>(
    state: &mut GfaState,
    data: &PreparedData,
    rng: &mut R,
) -> Result<()> {
    let k = state.k_active;
    let xtx = state.x.tr_mul(&state.x); // K x K over all samples

    let mut prec = DMatrix::<f64>::zeros(k, k);
    for m in 0..data.m {
        let rhs_all = state.x.tr_mul(&data.y[m]); // K x D_m, observed-only via zeros
        for d in 0..data.d[m] {
            let t = state.tau_for(m, d);
            prec.copy_from(&xtx);
            for &row in &data.missing_by_col[m][d] {
                for i in 0..k {
                    let xi = state.x[(row, i)];
                    for j in 0..k {
                        prec[(i, j)] -= xi * state.x[(row, j)];
                    }
                }
            }
            prec *= t;
            for i in 0..k {
                prec[(i, i)] += state.alpha[(m, i)];
            }
            let chol = spd_cholesky(prec.clone())?;
            let mean = chol.solve(&(rhs_all.column(d) * t));
            let wd = draw_gaussian_from_precision(&chol, &mean, rng);
            state.w[m].row_mut(d).copy_from(&wd.transpose());
        }
    }
    Ok(())
}

fn update_loadings_spike_slab<R: Rng>(
    state: &mut GfaState,
    data: &PreparedData,
    rng: &mut R,
) -> Result<()> {
    let k = state.k_active;
    for m in 0..data.m {
        for d in 0..data.d[m] {
            let t = state.tau_for(m, d);
            // current prediction of this feature's column
            let mut pred: DVector<f64> =
                (&state.x * state.w[m].row(d).transpose()).column(0).into();
            for comp in 0..k {
                let w_old = state.w[m][(d, comp)];
                let mut s_xx = 0.0;
                let mut s_xr = 0.0;
                for row in 0..data.n {
                    if !data.mask[m][(row, d)] {
                        continue;
                    }
                    let xv = state.x[(row, comp)];
                    if xv == 0.0 {
                        continue;
                    }
                    let r = data.y[m][(row, d)] - pred[row] + xv * w_old;
                    s_xx += xv * xv;
                    s_xr += xv * r;
                }
                let alpha = state.alpha[(m, comp)];
                let lambda = alpha + t * s_xx;
                let mu = t * s_xr / lambda;
                let log_odds = logit(state.pi_w[(m, comp)]) + 0.5 * (alpha.ln() - lambda.ln())
                    + 0.5 * lambda * mu * mu;
                let include = rng.random::<f64>() < sigmoid(log_odds);
                let w_new = if include {
                    state.z_w[m][(d, comp)] = 1;
                    slab_draw("update_loadings", mu, lambda, rng)?
                } else {
                    state.z_w[m][(d, comp)] = 0;
                    0.0
                };
                if w_new != w_old {
                    let delta = w_new - w_old;
                    for row in 0..data.n {
                        pred[row] += state.x[(row, comp)] * delta;
                    }
                    state.w[m][(d, comp)] = w_new;
                }
            }
        }
    }
    Ok(())
}

/// Redraw the ARD precisions from their Gamma full conditionals.
pub fn update_ard<R: Rng>(
    state: &mut GfaState,
    options: &ModelOptions,
    rng: &mut R,
) -> Result<()> {
    let k = state.k_active;
    let m_blocks = state.n_blocks();
    match options.ard_pooling {
        ArdPooling::PerBlock => {
            for m in 0..m_blocks {
                for comp in 0..k {
                    let (count, ssq) = loading_column_stats(state, m, comp);
                    let shape = options.a_alpha + count as f64 / 2.0;
                    let rate = options.b_alpha + ssq / 2.0;
                    state.alpha[(m, comp)] = gamma_draw("update_ard", shape, rate, rng)?;
                }
            }
        }
        ArdPooling::Global => {
            for comp in 0..k {
                let mut count = 0usize;
                let mut ssq = 0.0;
                for m in 0..m_blocks {
                    let (c, s) = loading_column_stats(state, m, comp);
                    count += c;
                    ssq += s;
                }
                let shape = options.a_alpha + count as f64 / 2.0;
                let rate = options.b_alpha + ssq / 2.0;
                let a = gamma_draw("update_ard", shape, rate, rng)?;
                for m in 0..m_blocks {
                    state.alpha[(m, comp)] = a;
                }
            }
        }
    }
    Ok(())
}

fn loading_column_stats(state: &GfaState, m: usize, comp: usize) -> (usize, f64) {
    let w = &state.w[m];
    let zw = &state.z_w[m];
    let mut count = 0usize;
    let mut ssq = 0.0;
    for d in 0..w.nrows() {
        if zw[(d, comp)] == 1 {
            count += 1;
            ssq += w[(d, comp)] * w[(d, comp)];
        }
    }
    (count, ssq)
}

/// Redraw the noise precisions; returns the per-block residual sums of
/// squares over observed entries (the reconstruction trace scalar's parts).
pub fn update_noise<R: Rng>(
    state: &mut GfaState,
    data: &PreparedData,
    options: &ModelOptions,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut block_ssr = Vec::with_capacity(data.m);
    for m in 0..data.m {
        let pred = &state.x * state.w[m].transpose();
        let mask = &data.mask[m];
        let mut per_feature = vec![0.0; data.d[m]];
        for d in 0..data.d[m] {
            let mut s = 0.0;
            for row in 0..data.n {
                if mask[(row, d)] {
                    let r = data.y[m][(row, d)] - pred[(row, d)];
                    s += r * r;
                }
            }
            per_feature[d] = s;
        }
        let total: f64 = per_feature.iter().sum();
        let b_tau = options.b_tau.for_block(m);
        match options.noise_pooling {
            NoisePooling::PerBlock => {
                let shape = options.a_tau + data.obs_count[m] as f64 / 2.0;
                let rate = b_tau + total / 2.0;
                state.tau[m][0] = gamma_draw("update_noise", shape, rate, rng)?;
            }
            NoisePooling::PerFeature => {
                for d in 0..data.d[m] {
                    let shape = options.a_tau + data.obs_count_col[m][d] as f64 / 2.0;
                    let rate = b_tau + per_feature[d] / 2.0;
                    state.tau[m][d] = gamma_draw("update_noise", shape, rate, rng)?;
                }
            }
        }
        block_ssr.push(total);
    }
    Ok(block_ssr)
}

/// Redraw the inclusion probabilities of whichever matrices use
/// spike-and-slab priors; a no-op otherwise.
pub fn update_inclusion_probs<R: Rng>(state: &mut GfaState, options: &ModelOptions, rng: &mut R) {
    let k = state.k_active;
    if options.loading_sparsity == LoadingSparsity::ElementSpikeSlab {
        for m in 0..state.n_blocks() {
            let d = state.w[m].nrows();
            for comp in 0..k {
                let ones: usize = (0..d).map(|di| state.z_w[m][(di, comp)] as usize).sum();
                let beta = Beta::new(
                    options.a_pi + ones as f64,
                    options.b_pi + (d - ones) as f64,
                )
                .unwrap();
                state.pi_w[(m, comp)] = beta.sample(rng);
            }
        }
    }
    if options.latent_sparsity == LatentSparsity::ElementSpikeSlab {
        let n = state.x.nrows();
        for comp in 0..k {
            let ones: usize = (0..n).map(|r| state.z_x[(r, comp)] as usize).sum();
            let beta = Beta::new(
                options.a_pi + ones as f64,
                options.b_pi + (n - ones) as f64,
            )
            .unwrap();
            state.pi_x[comp] = beta.sample(rng);
        }
    }
}
