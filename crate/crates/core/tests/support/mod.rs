//! Independent oracles shared by the integration and acceptance tests:
//! goodness-of-fit statistics, brute-force forest enumeration, dense
//! Gaussian algebra and Gauss–Legendre quadrature.

#![allow(dead_code)]

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Pearson chi-square p-value. Bins with expected count below 5 are pooled.
pub fn chi_square_p(counts: &[u64], probs: &[f64]) -> f64 {
    assert_eq!(counts.len(), probs.len());
    let n: u64 = counts.iter().sum();
    let total_p: f64 = probs.iter().sum();
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let (mut pooled_obs, mut pooled_exp) = (0.0, 0.0);
    for (&c, &p) in counts.iter().zip(probs) {
        let e = n as f64 * p / total_p;
        if e < 5.0 {
            pooled_obs += c as f64;
            pooled_exp += e;
        } else {
            bins.push((c as f64, e));
        }
    }
    if pooled_exp > 0.0 || pooled_obs > 0.0 {
        if pooled_exp >= 5.0 || bins.is_empty() {
            bins.push((pooled_obs, pooled_exp));
        } else {
            let smallest = (0..bins.len())
                .min_by(|&a, &b| bins[a].1.total_cmp(&bins[b].1))
                .unwrap();
            bins[smallest].0 += pooled_obs;
            bins[smallest].1 += pooled_exp;
        }
    }
    if bins.len() < 2 {
        return 1.0;
    }
    let stat: f64 = bins.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let dist = ChiSquared::new((bins.len() - 1) as f64).unwrap();
    1.0 - dist.cdf(stat)
}

/// One-sample Kolmogorov–Smirnov statistic.
pub fn ks_statistic(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}

pub fn laplace_cdf(x: f64, rate: f64) -> f64 {
    if x < 0.0 {
        0.5 * (rate * x).exp()
    } else {
        1.0 - 0.5 * (-rate * x).exp()
    }
}

pub fn cauchy_cdf(x: f64, scale: f64) -> f64 {
    0.5 + (x / scale).atan() / std::f64::consts::PI
}

/// Small undirected graph given by its edge list, independent of the
/// library's graph type.
pub struct EdgeList {
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
}

fn find(p: &mut [usize], mut v: usize) -> usize {
    while p[v] != v {
        p[v] = p[p[v]];
        v = p[v];
    }
    v
}

/// Every acyclic edge subset with its component sizes.
pub fn all_forests(g: &EdgeList) -> Vec<(Vec<usize>, Vec<usize>)> {
    let m = g.edges.len();
    assert!(m <= 20);
    let mut out = Vec::new();
    'subsets: for mask in 0u32..(1 << m) {
        let mut parent: Vec<usize> = (0..g.n).collect();
        let mut chosen = Vec::new();
        for e in 0..m {
            if mask >> e & 1 == 1 {
                let (a, b) = g.edges[e];
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra == rb {
                    continue 'subsets;
                }
                parent[ra] = rb;
                chosen.push(e);
            }
        }
        let mut sizes: HashMap<usize, usize> = HashMap::new();
        for v in 0..g.n {
            *sizes.entry(find(&mut parent, v)).or_default() += 1;
        }
        let mut sizes: Vec<usize> = sizes.into_values().collect();
        sizes.sort_unstable();
        out.push((chosen, sizes));
    }
    out
}

/// Spanning trees with probabilities `∝ Π w`.
pub fn tree_probabilities(g: &EdgeList, weights: &[f64]) -> Vec<(Vec<usize>, f64)> {
    let trees: Vec<(Vec<usize>, f64)> = all_forests(g)
        .into_iter()
        .filter(|(_, sizes)| sizes.len() == 1)
        .map(|(edges, _)| {
            let w = edges.iter().map(|&e| weights[e]).product();
            (edges, w)
        })
        .collect();
    let z: f64 = trees.iter().map(|t| t.1).sum();
    trees.into_iter().map(|(e, w)| (e, w / z)).collect()
}

/// Forest probabilities of a Wilson walk into a terminal of weight `rho`:
/// `∝ Π w · ρ^k · Π |C_i|`.
pub fn terminal_forest_probabilities(g: &EdgeList, weights: &[f64], rho: f64) -> Vec<(Vec<usize>, f64)> {
    let forests: Vec<(Vec<usize>, f64)> = all_forests(g)
        .into_iter()
        .map(|(edges, sizes)| {
            let w = edges.iter().map(|&e| weights[e]).product::<f64>()
                * rho.powi(sizes.len() as i32)
                * sizes.iter().product::<usize>() as f64;
            (edges, w)
        })
        .collect();
    let z: f64 = forests.iter().map(|t| t.1).sum();
    forests.into_iter().map(|(e, w)| (e, w / z)).collect()
}

/// Dense Laplacian `Σ_e c_e (e_a - e_b)(e_a - e_b)ᵀ`.
pub fn dense_laplacian(g: &EdgeList, coeffs: &[f64]) -> DMatrix<f64> {
    let mut l = DMatrix::zeros(g.n, g.n);
    for (&(a, b), &c) in g.edges.iter().zip(coeffs) {
        l[(a, a)] += c;
        l[(b, b)] += c;
        l[(a, b)] -= c;
        l[(b, a)] -= c;
    }
    l
}

/// Gaussian precision of a rooted tree prior: `Σ_e λ_e² (e_a − e_b)(·)ᵀ +
/// Σ_r λ_r² e_r e_rᵀ`.
pub fn tree_precision(n: usize, edges: &[(usize, usize)], lambda: f64, roots: &[usize], root_weight: f64) -> DMatrix<f64> {
    let g = EdgeList { n, edges: edges.to_vec() };
    let mut q = dense_laplacian(&g, &vec![lambda * lambda; edges.len()]);
    for &r in roots {
        q[(r, r)] += root_weight * root_weight;
    }
    q
}

/// Mean and covariance of `x | y` for `y = x + e`, `e ~ N(0, σ² I)`,
/// `x ~ N(0, Q⁻¹)`.
pub fn denoising_posterior(q: &DMatrix<f64>, y: &[f64], sigma: f64) -> (DVector<f64>, DMatrix<f64>) {
    let n = q.nrows();
    let post = q + DMatrix::identity(n, n) / (sigma * sigma);
    let cov = post.clone().try_inverse().unwrap();
    let mean = &cov * DVector::from_column_slice(y) / (sigma * sigma);
    (mean, cov)
}

/// Log density of `y ~ N(0, Q⁻¹ + σ² I)`.
pub fn log_evidence(q: &DMatrix<f64>, y: &[f64], sigma: f64) -> f64 {
    let n = q.nrows();
    let cov = q.clone().try_inverse().unwrap() + DMatrix::identity(n, n) * sigma * sigma;
    let chol = cov.cholesky().unwrap();
    let yv = DVector::from_column_slice(y);
    let quad = yv.dot(&chol.solve(&yv));
    let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    -0.5 * (quad + logdet + n as f64 * (2.0 * std::f64::consts::PI).ln())
}

pub fn sample_moments(samples: &[Vec<f64>]) -> (DVector<f64>, DMatrix<f64>) {
    let n = samples[0].len();
    let k = samples.len() as f64;
    let mut mean = DVector::zeros(n);
    for s in samples {
        mean += DVector::from_column_slice(s);
    }
    mean /= k;
    let mut cov = DMatrix::zeros(n, n);
    for s in samples {
        let d = DVector::from_column_slice(s) - &mean;
        cov += &d * d.transpose();
    }
    (mean, cov / (k - 1.0))
}

/// Spectral norm of a symmetric matrix.
pub fn sym_norm(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigenvalues().iter().fold(0.0, |a: f64, v| a.max(v.abs()))
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// Nodes and weights for `∫_{-∞}^{∞} f(z) dz` via `z = s tan θ`, with each
/// half line integrated separately so a kink at 0 costs no accuracy.
pub fn real_line_rule(order: usize, scale: f64) -> Vec<(f64, f64)> {
    let half = std::f64::consts::FRAC_PI_2;
    let mut out = Vec::with_capacity(2 * order);
    for (t, w) in gauss_legendre(order) {
        let theta = 0.5 * half * (t + 1.0);
        let jac = 0.5 * half * scale / theta.cos().powi(2);
        let z = scale * theta.tan();
        out.push((z, w * jac));
        out.push((-z, w * jac));
    }
    out
}
