mod support;

use std::collections::HashMap;

use nalgebra::DVector;
use rstmrf::forward::ForwardOperator;
use rstmrf::prior::AuxiliaryScales;
use rstmrf::sampler::ConditionalDraw;
use rstmrf::{
    build_grid, sample_conditional_image, sample_prior, ChainConfig, ConditionalSettings, DifferenceOperator,
    DifferencePrior, Family, GibbsSampler, GridGraph, LinearProblem, RngStream, SpanningForest,
};
use support::*;

fn denoise(h: usize, w: usize, y: Vec<f64>, sigma: f64) -> LinearProblem {
    LinearProblem::new(h, w, ForwardOperator::Identity(h * w), y, sigma).unwrap()
}

fn draws(
    n: usize,
    seed: u64,
    problem: Option<&LinearProblem>,
    prior: &DifferencePrior,
    op: &DifferenceOperator,
    aux: Option<&AuxiliaryScales>,
    settings: &ConditionalSettings,
) -> Vec<Vec<f64>> {
    let mut rng = RngStream::new(seed);
    (0..n)
        .map(|_| {
            let d: ConditionalDraw = sample_conditional_image(problem, prior, op, aux, settings, None, &mut rng).unwrap();
            assert!(d.converged);
            d.image
        })
        .collect()
}

fn tree_2x2() -> (GridGraph, SpanningForest) {
    let g = build_grid(2, 2, 1.0, 0.0).unwrap();
    let f = SpanningForest::from_edges(&g, &[0, 1, 3]).unwrap();
    (g, f)
}

#[test]
fn rto_matches_dense_posterior_on_fixed_tree() {
    let (g, f) = tree_2x2();
    let (lambda, root_weight, sigma) = (1.5, 0.5, 0.4);
    let y = vec![0.2, 0.9, -0.1, 1.1];
    let prob = denoise(2, 2, y.clone(), sigma);
    let prior = DifferencePrior::new(Family::Gaussian, lambda, root_weight).unwrap();
    let op = rstmrf::difference_operator(&f, &g, root_weight, true).unwrap();
    let edges: Vec<_> = f.included_edges().iter().map(|&e| g.edge(e)).collect();
    let q = tree_precision(4, &edges, lambda, &f.roots(), root_weight);
    let (mean, cov) = denoising_posterior(&q, &y, sigma);

    let mut settings = ConditionalSettings::default();
    settings.cg.rel_tol = 1e-10;
    for precondition in [false, true] {
        settings.precondition = precondition;
        let xs = draws(100_000, 3, Some(&prob), &prior, &op, None, &settings);
        let (m, c) = sample_moments(&xs);
        assert!((m - &mean).norm() / mean.norm() < 0.02);
        assert!(sym_norm(&(c - &cov)) / sym_norm(&cov) < 0.02);
    }
}

#[test]
fn rto_uses_auxiliary_precisions() {
    let (g, f) = tree_2x2();
    let sigma = 0.3;
    let y = vec![0.0, 1.0, 0.5, -0.4];
    let prob = denoise(2, 2, y.clone(), sigma);
    let prior = DifferencePrior::new(Family::Laplace, 2.0, 0.8).unwrap();
    let op = rstmrf::difference_operator(&f, &g, 0.8, true).unwrap();
    let tau = vec![0.5, 2.0, 0.1, 3.0];
    let aux = AuxiliaryScales { tau: tau.clone() };

    let mut q = nalgebra::DMatrix::zeros(4, 4);
    for (i, &(a, b, _)) in op.edge_rows().iter().enumerate() {
        let p = 1.0 / tau[i];
        q[(a, a)] += p;
        q[(b, b)] += p;
        q[(a, b)] -= p;
        q[(b, a)] -= p;
    }
    q[(0, 0)] += 0.8 * 0.8 / tau[3];
    let (mean, cov) = denoising_posterior(&q, &y, sigma);
    let mut settings = ConditionalSettings::default();
    settings.cg.rel_tol = 1e-10;
    let xs = draws(100_000, 4, Some(&prob), &prior, &op, Some(&aux), &settings);
    let (m, c) = sample_moments(&xs);
    assert!((m - &mean).norm() / mean.norm() < 0.02);
    assert!(sym_norm(&(c - &cov)) / sym_norm(&cov) < 0.02);
}

#[test]
fn flipped_orientation_gives_the_same_distribution() {
    let (g, f) = tree_2x2();
    let prob = denoise(2, 2, vec![0.3, -0.2, 0.8, 0.1], 0.5);
    let prior = DifferencePrior::new(Family::Gaussian, 1.2, 0.6).unwrap();
    let op = rstmrf::difference_operator(&f, &g, 0.6, true).unwrap();
    let flipped = op.with_flipped_orientation();
    assert_ne!(op, flipped);
    let settings = ConditionalSettings::default();
    let a = draws(60_000, 10, Some(&prob), &prior, &op, None, &settings);
    let b = draws(60_000, 10, Some(&prob), &prior, &flipped, None, &settings);
    assert_ne!(a[0], b[0]);
    let (ma, ca) = sample_moments(&a);
    let (mb, cb) = sample_moments(&b);
    let scale = sym_norm(&ca);
    assert!((ma - mb).norm() < 0.03 * scale.sqrt());
    assert!(sym_norm(&(ca - cb)) / scale < 0.03);
}

#[test]
fn huge_noise_reverts_to_prior() {
    let (g, f) = tree_2x2();
    let prob = denoise(2, 2, vec![5.0, -5.0, 5.0, 0.0], 1e6);
    let prior = DifferencePrior::new(Family::Gaussian, 2.0, 0.5).unwrap();
    let op = rstmrf::difference_operator(&f, &g, 0.5, true).unwrap();
    let post = draws(50_000, 11, Some(&prob), &prior, &op, None, &ConditionalSettings::default());
    let mut rng = RngStream::new(12);
    let pri: Vec<Vec<f64>> = (0..50_000).map(|_| sample_prior(&prior, &f, &g, &mut rng).unwrap()).collect();
    let (_, cp) = sample_moments(&post);
    let (_, cq) = sample_moments(&pri);
    assert!(sym_norm(&(cp - &cq)) / sym_norm(&cq) < 0.04);
}

#[test]
fn gibbs_tree_marginal_and_mean_match_exact_posterior() {
    let g = build_grid(2, 2, 1.0, 0.0).unwrap();
    let (lambda, root_weight, sigma) = (1.5, 0.5, 0.35);
    let y = vec![0.0, 0.2, 1.4, 1.0];
    let prob = denoise(2, 2, y.clone(), sigma);
    let prior = DifferencePrior::new(Family::Gaussian, lambda, root_weight).unwrap();
    let mut cfg = ChainConfig::new(prior, 2);
    cfg.rho_rel = 0.0;
    cfg.conditional.cg.rel_tol = 1e-10;
    let sampler = GibbsSampler::new(&g, &prob, &cfg).unwrap();

    let trees = tree_probabilities(
        &EdgeList {
            n: 4,
            edges: g.edges().to_vec(),
        },
        &[1.0; 4],
    );
    let mut log_post = Vec::new();
    let mut means = Vec::new();
    for (edges, _) in &trees {
        let pairs: Vec<_> = edges.iter().map(|&e| g.edge(e)).collect();
        let q = tree_precision(4, &pairs, lambda, &[0], root_weight);
        log_post.push(log_evidence(&q, &y, sigma));
        means.push(denoising_posterior(&q, &y, sigma).0);
    }
    let top = log_post.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = log_post.iter().map(|l| (l - top).exp()).sum();
    let probs: Vec<f64> = log_post.iter().map(|l| (l - top).exp() / z).collect();
    let exact_mean = probs
        .iter()
        .zip(&means)
        .fold(DVector::zeros(4), |acc, (p, m)| acc + m * *p);

    let mut rng = RngStream::new(77);
    let mut state = sampler.initial_state();
    for _ in 0..1000 {
        sampler.step(&mut state, &mut rng).unwrap();
    }
    let mut counts: HashMap<Vec<usize>, u64> = HashMap::new();
    let mut sum = DVector::zeros(4);
    let (kept, thin) = (100_000, 5);
    for t in 0..kept * thin {
        sampler.step(&mut state, &mut rng).unwrap();
        if t % thin == 0 {
            let key = state.forest.as_ref().unwrap().included_edges().to_vec();
            *counts.entry(key).or_default() += 1;
            sum += DVector::from_column_slice(&state.image);
        }
    }
    let obs: Vec<u64> = trees.iter().map(|(e, _)| counts.get(e).copied().unwrap_or(0)).collect();
    let p = chi_square_p(&obs, &probs);
    assert!(p > 1e-3, "p = {p}, observed {obs:?}, expected {probs:?}");
    let mean = sum / kept as f64;
    assert!((mean - &exact_mean).norm() / exact_mean.norm() < 0.02);
}

/// Marginal CDFs of the 1×2 Laplace denoising posterior by grid quadrature.
fn laplace_pair_marginals(y: [f64; 2], sigma: f64, lambda: f64, root_weight: f64) -> [Vec<(f64, f64)>; 2] {
    let (lo, hi, n) = (-4.0, 5.0, 1801);
    let h = (hi - lo) / (n - 1) as f64;
    let grid: Vec<f64> = (0..n).map(|i| lo + i as f64 * h).collect();
    let mut m0 = vec![0.0; n];
    let mut m1 = vec![0.0; n];
    for (i, &a) in grid.iter().enumerate() {
        for (j, &b) in grid.iter().enumerate() {
            let lp = -((a - y[0]).powi(2) + (b - y[1]).powi(2)) / (2.0 * sigma * sigma)
                - root_weight * a.abs()
                - lambda * (a - b).abs();
            let p = lp.exp();
            m0[i] += p;
            m1[j] += p;
        }
    }
    let cdf = |m: Vec<f64>| {
        let total: f64 = m.iter().sum();
        let mut acc = 0.0;
        grid.iter()
            .zip(m)
            .map(|(&x, p)| {
                acc += p / total;
                (x + 0.5 * h, acc)
            })
            .collect::<Vec<_>>()
    };
    [cdf(m0), cdf(m1)]
}

fn interp(table: &[(f64, f64)], x: f64) -> f64 {
    match table.binary_search_by(|(t, _)| t.total_cmp(&x)) {
        Ok(i) => table[i].1,
        Err(0) => 0.0,
        Err(i) if i == table.len() => 1.0,
        Err(i) => {
            let ((x0, y0), (x1, y1)) = (table[i - 1], table[i]);
            y0 + (y1 - y0) * (x - x0) / (x1 - x0)
        }
    }
}

#[test]
fn laplace_gibbs_matches_exact_marginals() {
    let g = build_grid(1, 2, 1.0, 0.0).unwrap();
    let (y, sigma, lambda, root_weight) = ([0.3, 1.2], 0.5, 2.0, 1.0);
    let prob = denoise(1, 2, y.to_vec(), sigma);
    let prior = DifferencePrior::new(Family::Laplace, lambda, root_weight).unwrap();
    let mut cfg = ChainConfig::new(prior, 2);
    cfg.rho_rel = 0.0;
    cfg.conditional.cg.rel_tol = 1e-10;
    let sampler = GibbsSampler::new(&g, &prob, &cfg).unwrap();
    let mut rng = RngStream::new(5);
    let mut state = sampler.initial_state();
    for _ in 0..1000 {
        sampler.step(&mut state, &mut rng).unwrap();
    }
    let mut xs = [Vec::new(), Vec::new()];
    for t in 0..400_000 {
        sampler.step(&mut state, &mut rng).unwrap();
        if t % 2 == 0 {
            xs[0].push(state.image[0]);
            xs[1].push(state.image[1]);
        }
    }
    let cdfs = laplace_pair_marginals(y, sigma, lambda, root_weight);
    for k in 0..2 {
        let d = ks_statistic(&mut xs[k], |x| interp(&cdfs[k], x));
        assert!(d < 0.02, "coordinate {k}: KS {d}");
    }
}
