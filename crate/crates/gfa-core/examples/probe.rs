// scratch calibration probe (removed before finalizing)
use gfa_core::*;
use gfa_core::synthetic::*;
use std::time::Instant;

fn main() {
    let which = std::env::args().nth(1).unwrap_or_else(|| "joint".into());
    match which.as_str() {
        "joint" => joint(),
        "fig1" => fig1(),
        "impute" => impute(),
        "bicluster" => bicluster(),
        _ => println!("unknown probe"),
    }
}

fn joint() {
    // criterion-2 style run: K_init=15, 2000 sweeps
    for seed in [0u64, 1, 2] {
        let t0 = Instant::now();
        let cfg = GroupSparseConfig::default();
        let (data, truth) = generate_group_sparse(&cfg, seed);
        let (norm, record) = normalize(&data, NormalizationScheme::Center).unwrap();
        let mut opts = default_options(100, &[40, 30, 20], false);
        opts.k_init = 15;
        opts.iterations = 2000;
        opts.burn_in = 1000;
        opts.thin = 10;
        opts.prune_tolerance = std::env::var("TOL").map(|v| v.parse().unwrap()).unwrap_or(2.5e-2);
        opts.prune_patience = std::env::var("PAT").map(|v| v.parse().unwrap()).unwrap_or(50);
        opts.convergence_check = true;
        let (a_tau, b_tau) = informative_noise_prior(&norm, 0.8, 10.0).unwrap();
        opts.a_tau = a_tau;
        opts.b_tau = NoiseRatePrior::PerBlock(b_tau);
        let mut samples = run_chain(&norm, &opts, 100 + seed).unwrap();
        samples.normalization = Some(record);
        let k = samples.k_active();
        println!("seed {seed}: K_active = {k} (pruned {}), z = {:?}, {:.1}s",
            samples.pruning_history.len(), samples.convergence_z, t0.elapsed().as_secs_f64());

        // reconstruction RMSE on observed entries vs oracle noise sd (1.0)
        let recon = predict::reconstruction_with(&samples, true).unwrap();
        let mut sse = 0.0; let mut cnt = 0usize;
        for m in 0..3 {
            let b = data.block(m);
            for r in 0..100 { for c in 0..b.n_features() {
                let e = recon.mean[m][(r, c)] - b.values[(r, c)];
                sse += e * e; cnt += 1;
            }}
        }
        println!("  recon RMSE = {:.4} (oracle 1.0)", (sse / cnt as f64).sqrt());

        // robust match vs ground truth (on normalized scale -> build truth chain on normalized scale)
        // truth effects: X W^T per component, normalized by the record (center only: effects unchanged)
        let truth_chain = {
            use nalgebra::{DMatrix, DVector};
            let k_true = 6;
            let state = GfaState {
                x: truth.x.clone(),
                w: truth.w.clone(),
                z_w: truth.w.iter().map(|wm| DMatrix::from_fn(wm.nrows(), k_true, |r, c| u8::from(wm[(r,c)] != 0.0))).collect(),
                z_x: DMatrix::from_element(100, k_true, 1),
                alpha: DMatrix::from_element(3, k_true, 1.0),
                tau: (0..3).map(|_| DVector::from_element(1, 1.0)).collect(),
                pi_w: DMatrix::from_element(3, k_true, 0.5),
                pi_x: DVector::from_element(k_true, 0.5),
                k_active: k_true,
            };
            PosteriorSamples {
                snapshots: vec![state],
                options: opts.clone(),
                normalization: None,
                dataset: norm.info(),
                recon_trace: vec![],
                pruning_history: vec![],
                convergence_z: None,
                seed: 0,
                warnings: vec![],
            }
        };
        let r = robust_components(&[&truth_chain, &samples], 0.9, 1.0).unwrap();
        println!("  matched {} of 6 planted at |corr| >= 0.9", r.sets.len());
        let r2 = robust_components(&[&truth_chain, &samples], 0.05, 1.0).unwrap();
        let cs: Vec<String> = r2.sets.iter().map(|s| format!("{:.3}", s.correlations[1])).collect();
        println!("  best |corr| per planted: {:?}", cs);
        // per-component variance fractions of the last snapshot
        let prep = gfa_core::sampler::PreparedData::new(&norm);
        let fr = gfa_core::sampler::component_variance_fractions(samples.snapshots.last().unwrap(), &prep);
        let fs: Vec<String> = fr.iter().map(|v| format!("{:.4}", v)).collect();
        println!("  v_k last snapshot: {:?}", fs);

        // activity pattern of matched components vs truth
        let summary = component_activity(&samples, &norm, 0.005).unwrap();
        let mut worst = 0;
        for set in &r.sets {
            let truth_k = set.members[0].component;
            let model_k = set.members[1].component;
            let mut diff = 0;
            for m in 0..3 {
                let t = truth.activity[m][truth_k];
                let a = summary.activity[m][model_k] == 1;
                if t != a { diff += 1; }
            }
            worst = worst.max(diff);
            if diff > 0 { println!("  comp {truth_k}->{model_k}: {diff} activity cells differ"); }
        }
        println!("  worst activity diff = {worst}");
    }
}

fn fig1() {
    let t0 = Instant::now();
    let cfg = experiment::ComplexityExperiment::default();
    let (cells, summaries) = experiment::run_complexity_experiment(&cfg).unwrap();
    println!("total {:.1}s", t0.elapsed().as_secs_f64());
    for s in &summaries {
        let pf: Vec<usize> = cells.iter().filter(|c| c.k_init == s.k_init).map(|c| c.empty_components).collect();
        println!("K={:>2}: spearman {:.4}, empty mean {:.1}, folds_with_pruning {}/5, per fold {:?}",
            s.k_init, s.mean_spearman, s.mean_empty_components, s.folds_with_pruning, pf);
    }
}

fn impute() {
    let mut wins = 0;
    let t0 = Instant::now();
    for rep in 0..20u64 {
        let cfg = GroupSparseConfig::default();
        let (data, _) = generate_group_sparse(&cfg, 500 + rep);
        let (train, held) = hold_out_entries(&data, 0, 0.10, 600 + rep);
        let (norm, record) = normalize(&train, NormalizationScheme::Center).unwrap();
        let mut opts = default_options(100, &[40, 30, 20], false);
        opts.k_init = 15;
        opts.iterations = 600;
        opts.burn_in = 300;
        opts.thin = 5;
        opts.prune_tolerance = 1e-3;
        opts.convergence_check = false;
        let (a_tau, b_tau) = informative_noise_prior(&norm, 0.8, 10.0).unwrap();
        opts.a_tau = a_tau;
        opts.b_tau = NoiseRatePrior::PerBlock(b_tau);
        let mut samples = run_chain(&norm, &opts, 700 + rep).unwrap();
        samples.normalization = Some(record);
        let recon = reconstruction(&samples).unwrap();
        let preds: Vec<f64> = held.iter().map(|h| recon.mean[0][(h.row, h.col)]).collect();
        let base = column_mean_predictions(&train, 0, &held);
        let mae = |p: &[f64]| p.iter().zip(held.iter()).map(|(x, h)| (x - h.value).abs()).sum::<f64>() / p.len() as f64;
        let (m_model, m_base) = (mae(&preds), mae(&base));
        if m_model < m_base { wins += 1; }
        if rep < 3 { println!("rep {rep}: model {m_model:.3} vs baseline {m_base:.3}"); }
    }
    println!("wins {wins}/20, {:.1}s", t0.elapsed().as_secs_f64());
}

fn bicluster() {
    let t0 = Instant::now();
    let (data, truth) = generate_bicluster(100, &[40, 30], 4, 0.3, 0.5, 42);
    let (norm, _) = normalize(&data, NormalizationScheme::Center).unwrap();
    let mut opts = default_options(100, &[40, 30], true);
    opts.k_init = 5;
    opts.iterations = 1500;
    opts.burn_in = 750;
    opts.thin = 5;
    opts.convergence_check = false;
    let samples = run_chain(&norm, &opts, 9).unwrap();
    println!("K_active = {}, {:.1}s", samples.k_active(), t0.elapsed().as_secs_f64());

    // match components to truth by effect correlation, then z accuracy
    use nalgebra::{DMatrix, DVector};
    let k_true = 4;
    let truth_chain = PosteriorSamples {
        snapshots: vec![GfaState {
            x: truth.x.clone(),
            w: truth.w.clone(),
            z_w: truth.z_w.iter().map(|z| z.clone()).collect(),
            z_x: truth.z_x.clone(),
            alpha: DMatrix::from_element(2, k_true, 1.0),
            tau: (0..2).map(|_| DVector::from_element(1, 1.0)).collect(),
            pi_w: DMatrix::from_element(2, k_true, 0.3),
            pi_x: DVector::from_element(k_true, 0.3),
            k_active: k_true,
        }],
        options: opts.clone(),
        normalization: None,
        dataset: norm.info(),
        recon_trace: vec![],
        pruning_history: vec![],
        convergence_z: None,
        seed: 0,
        warnings: vec![],
    };
    let r = robust_components(&[&truth_chain, &samples], 0.5, 1.0).unwrap();
    println!("matched {} of {k_true}", r.sets.len());
    let s = samples.snapshots.len() as f64;
    let mut correct = 0usize; let mut total = 0usize;
    for m in 0..2 {
        let dm = norm.d()[m];
        for set in &r.sets {
            let tk = set.members[0].component;
            let mk = set.members[1].component;
            for d in 0..dm {
                let frac: f64 = samples.snapshots.iter().map(|sn| sn.z_w[m][(d, mk)] as usize).sum::<usize>() as f64 / s;
                let inc = frac >= 0.5;
                let t = truth.z_w[m][(d, tk)] == 1;
                if inc == t { correct += 1; }
                total += 1;
            }
        }
        // unmatched truth components count as all-wrong
        for _k in r.sets.len()..k_true { total += dm; }
    }
    println!("z_W accuracy {:.3} ({correct}/{total}), {:.1}s", correct as f64 / total as f64, t0.elapsed().as_secs_f64());
}
