//! Cross-chain robustness analysis.
//!
//! The factorization is unidentifiable (components permute and flip sign
//! across chains), so chains are compared through the data-space effects of
//! their components: two components match when the flattened effects
//! correlate strongly in absolute value.

use nalgebra::DMatrix;

use crate::error::{GfaError, Result};
use crate::sampler::PosteriorSamples;
use crate::stats::pearson;

/// One member of a matched set, with the sign aligning it to the reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SetMember {
    pub chain: usize,
    pub component: usize,
    pub sign: f64,
}

/// A component recurring across chains.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchedSet {
    pub members: Vec<SetMember>,
    /// Fraction of chains contributing a member (reference included).
    pub occurrence: f64,
    /// Sign-aligned average data-space effect, one matrix per block.
    pub effect: Vec<DMatrix<f64>>,
    /// Absolute correlation of each member against the reference component,
    /// aligned with `members` (the reference's own entry is 1).
    pub correlations: Vec<f64>,
}

/// Result of [`robust_components`].
#[derive(Debug, Clone, PartialEq)]
pub struct RobustComponents {
    pub sets: Vec<MatchedSet>,
    pub cor_thr: f64,
    pub match_thr: f64,
    pub n_chains: usize,
}

/// Posterior-mean data-space effect of component `k`: the across-snapshot
/// average of X_k W_k^T per block.
pub fn component_effect(samples: &PosteriorSamples, k: usize) -> Result<Vec<DMatrix<f64>>> {
    if samples.snapshots.is_empty() {
        return Err(GfaError::EmptySamples("component_effect".into()));
    }
    let k_active = samples.k_active();
    if k >= k_active {
        return Err(GfaError::InvalidData(format!(
            "component index {k} out of range (K_active = {k_active})"
        )));
    }
    let n = samples.dataset.n;
    let d = &samples.dataset.d;
    let mut effect: Vec<DMatrix<f64>> = d.iter().map(|&dm| DMatrix::zeros(n, dm)).collect();
    for snap in &samples.snapshots {
        for m in 0..d.len() {
            for col in 0..d[m] {
                let w = snap.w[m][(col, k)];
                if w == 0.0 {
                    continue;
                }
                for row in 0..n {
                    effect[m][(row, col)] += snap.x[(row, k)] * w;
                }
            }
        }
    }
    let s = samples.snapshots.len() as f64;
    for e in &mut effect {
        *e /= s;
    }
    Ok(effect)
}

/// Per-component effects of a whole chain, with a flattened copy
/// (blocks concatenated) for correlation matching.
fn chain_effects(samples: &PosteriorSamples) -> Result<Vec<(Vec<DMatrix<f64>>, Vec<f64>)>> {
    (0..samples.k_active())
        .map(|k| {
            let blocks = component_effect(samples, k)?;
            let mut flat = Vec::new();
            for b in &blocks {
                flat.extend(b.iter().copied());
            }
            Ok((blocks, flat))
        })
        .collect()
}

fn check_same_shapes(chains: &[&PosteriorSamples]) -> Result<()> {
    if chains.len() < 2 {
        return Err(GfaError::InvalidData(format!(
            "robustness analysis needs at least 2 chains, got {}",
            chains.len()
        )));
    }
    let first = &chains[0].dataset;
    for (i, c) in chains.iter().enumerate().skip(1) {
        if c.dataset.n != first.n || c.dataset.d != first.d {
            return Err(GfaError::ShapeMismatch(format!(
                "chain {i} was trained on shapes {:?} x {:?}, chain 0 on {:?} x {:?}",
                c.dataset.n, c.dataset.d, first.n, first.d
            )));
        }
    }
    Ok(())
}

/// Match components across chains against `chains[reference]`, greedily and
/// without reuse, in reference-component index order.
fn match_against_reference(
    effects: &[Vec<(Vec<DMatrix<f64>>, Vec<f64>)>],
    reference: usize,
    cor_thr: f64,
    match_thr: f64,
) -> Vec<MatchedSet> {
    let n_chains = effects.len();
    let mut used: Vec<Vec<bool>> = effects.iter().map(|e| vec![false; e.len()]).collect();
    let mut sets = Vec::new();

    for (k, (ref_blocks, ref_flat)) in effects[reference].iter().enumerate() {
        let mut members = vec![SetMember {
            chain: reference,
            component: k,
            sign: 1.0,
        }];
        let mut corrs = vec![1.0];
        for c in 0..n_chains {
            if c == reference {
                continue;
            }
            let mut best: Option<(usize, f64)> = None;
            for (j, (_, flat)) in effects[c].iter().enumerate() {
                if used[c][j] {
                    continue;
                }
                let r = pearson(ref_flat, flat);
                // strict > keeps the lower index on ties
                if best.map_or(true, |(_, b)| r.abs() > b.abs()) {
                    best = Some((j, r));
                }
            }
            if let Some((j, r)) = best {
                if r.abs() >= cor_thr {
                    used[c][j] = true;
                    members.push(SetMember {
                        chain: c,
                        component: j,
                        sign: if r < 0.0 { -1.0 } else { 1.0 },
                    });
                    corrs.push(r.abs());
                }
            }
        }
        let occurrence = members.len() as f64 / n_chains as f64;
        if occurrence >= match_thr {
            let mut effect: Vec<DMatrix<f64>> = ref_blocks
                .iter()
                .map(|b| DMatrix::zeros(b.nrows(), b.ncols()))
                .collect();
            for member in &members {
                let src = &effects[member.chain][member.component].0;
                for (dst, s) in effect.iter_mut().zip(src.iter()) {
                    *dst += s * member.sign;
                }
            }
            for e in &mut effect {
                *e /= members.len() as f64;
            }
            sets.push(MatchedSet {
                members,
                occurrence,
                effect,
                correlations: corrs,
            });
        }
    }
    sets
}

/// Identify components that recur across independently sampled chains.
///
/// The first chain is the reference: each of its components is matched in
/// every other chain by best absolute Pearson correlation of flattened
/// data-space effects (greedy, no reuse, ties to the lower index). Sets
/// matched in at least `match_thr` of the chains are reported with
/// sign-aligned average effects.
pub fn robust_components(
    chains: &[&PosteriorSamples],
    cor_thr: f64,
    match_thr: f64,
) -> Result<RobustComponents> {
    robust_components_with(chains, cor_thr, match_thr, false)
}

/// As [`robust_components`]; with `all_references` the matching is repeated
/// with every chain as the reference and only sets whose (chain, component)
/// membership appears under every reference are kept (slower, stricter).
pub fn robust_components_with(
    chains: &[&PosteriorSamples],
    cor_thr: f64,
    match_thr: f64,
    all_references: bool,
) -> Result<RobustComponents> {
    if !(cor_thr > 0.0 && cor_thr <= 1.0) {
        return Err(GfaError::InvalidOptions(format!(
            "cor_thr must be in (0,1], got {cor_thr}"
        )));
    }
    if !(match_thr > 0.0 && match_thr <= 1.0) {
        return Err(GfaError::InvalidOptions(format!(
            "match_thr must be in (0,1], got {match_thr}"
        )));
    }
    check_same_shapes(chains)?;
    let effects: Vec<_> = chains
        .iter()
        .map(|c| chain_effects(c))
        .collect::<Result<_>>()?;

    let mut sets = match_against_reference(&effects, 0, cor_thr, match_thr);
    if all_references {
        let key = |s: &MatchedSet| {
            let mut k: Vec<(usize, usize)> =
                s.members.iter().map(|m| (m.chain, m.component)).collect();
            k.sort_unstable();
            k
        };
        for reference in 1..chains.len() {
            let other = match_against_reference(&effects, reference, cor_thr, match_thr);
            let other_keys: Vec<_> = other.iter().map(key).collect();
            sets.retain(|s| other_keys.contains(&key(s)));
        }
    }
    Ok(RobustComponents {
        sets,
        cor_thr,
        match_thr,
        n_chains: chains.len(),
    })
}
