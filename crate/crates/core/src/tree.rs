//! Weighted random spanning trees: Wilson's loop-erased random walk sampler
//! (with an optional terminal vertex), conjugate reweighting given an image,
//! and exact enumeration / matrix-tree oracles for small graphs.

use rand::Rng;

use crate::error::{check_len, invalid, Error, Result};
use crate::graph::{GridGraph, SpanningForest};
use crate::prior::DifferencePrior;

/// Default cap on the total number of walk steps per sample.
pub const DEFAULT_STEP_BUDGET: u64 = 1_000_000_000;

/// Largest edge count accepted by [`enumerate_trees`].
pub const ENUMERATION_EDGE_LIMIT: usize = 25;

/// Largest vertex count accepted by the dense matrix-tree determinant.
pub const MATRIX_TREE_VERTEX_LIMIT: usize = 10_000;

/// Distribution over spanning trees with `P(T) ∝ Π_{e∈T} weights[e]`.
///
/// A positive terminal weight adds a vertex joined to every pixel; sampling
/// rooted at it yields spanning forests of the original graph.
#[derive(Clone, Debug)]
pub struct TreeDistribution<'g> {
    graph: &'g GridGraph,
    weights: Vec<f64>,
    terminal_weight: f64,
}

impl<'g> TreeDistribution<'g> {
    /// The graph's own weights and terminal weight.
    pub fn from_graph(graph: &'g GridGraph) -> Self {
        Self {
            graph,
            weights: graph.weights().to_vec(),
            terminal_weight: graph.terminal_weight(),
        }
    }

    pub fn new(graph: &'g GridGraph, weights: Vec<f64>) -> Result<Self> {
        check_len(graph.edge_count(), weights.len())?;
        if let Some(e) = weights.iter().position(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(invalid(format!("edge {e} has non-positive weight {}", weights[e])));
        }
        Ok(Self {
            graph,
            weights,
            terminal_weight: graph.terminal_weight(),
        })
    }

    pub fn with_terminal_weight(mut self, terminal_weight: f64) -> Result<Self> {
        if !(terminal_weight >= 0.0 && terminal_weight.is_finite()) {
            return Err(invalid(format!("terminal weight must be finite and >= 0, got {terminal_weight}")));
        }
        self.terminal_weight = terminal_weight;
        Ok(self)
    }

    pub fn graph(&self) -> &'g GridGraph {
        self.graph
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn terminal_weight(&self) -> f64 {
        self.terminal_weight
    }
}

/// Where Wilson's algorithm starts its tree.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WalkRoot {
    Vertex(usize),
    Terminal,
}

/// A sampled forest plus the total number of random-walk steps it took.
#[derive(Clone, Debug)]
pub struct TreeSample {
    pub forest: SpanningForest,
    pub steps: u64,
}

/// Wilson's algorithm with a hard step budget.
#[derive(Clone, Copy, Debug)]
pub struct WilsonSampler {
    pub step_budget: u64,
}

impl Default for WilsonSampler {
    fn default() -> Self {
        Self {
            step_budget: DEFAULT_STEP_BUDGET,
        }
    }
}

impl WilsonSampler {
    pub fn sample<R: Rng + ?Sized>(
        &self,
        dist: &TreeDistribution<'_>,
        root: WalkRoot,
        rng: &mut R,
    ) -> Result<TreeSample> {
        let graph = dist.graph;
        let n = graph.vertex_count();
        let rho = dist.terminal_weight;
        let terminal = n;

        let mut in_tree = vec![false; n + 1];
        in_tree[terminal] = true;
        match root {
            WalkRoot::Vertex(r) => {
                if r >= n {
                    return Err(invalid(format!("root {r} out of range for {n} vertices")));
                }
                if rho > 0.0 {
                    return Err(invalid("vertex-rooted sampling requires terminal weight 0"));
                }
                in_tree[r] = true;
            }
            WalkRoot::Terminal => {
                if rho <= 0.0 {
                    return Err(invalid("terminal-rooted sampling requires a positive terminal weight"));
                }
            }
        }

        let totals: Vec<f64> = (0..n)
            .map(|v| graph.neighbors(v).iter().map(|&(_, e)| dist.weights[e]).sum::<f64>() + rho)
            .collect();

        // Successor pointers; a later visit overwrites, which erases loops.
        let mut next_vertex = vec![terminal; n];
        let mut next_edge = vec![usize::MAX; n];
        let mut parent_edge = vec![None; n];
        let mut steps = 0u64;

        for start in 0..n {
            let mut u = start;
            while !in_tree[u] {
                steps += 1;
                if steps > self.step_budget {
                    return Err(Error::StepBudgetExceeded { steps: self.step_budget });
                }
                let nbrs = graph.neighbors(u);
                let mut x = rng.random::<f64>() * totals[u];
                let mut pick = None;
                for &(v, e) in nbrs {
                    x -= dist.weights[e];
                    if x < 0.0 {
                        pick = Some((v, e));
                        break;
                    }
                }
                let (v, e) = match pick {
                    Some(p) => p,
                    None if rho > 0.0 => (terminal, usize::MAX),
                    // Rounding left a sliver past the last neighbour.
                    None => *nbrs.last().expect("connected graph without isolated vertices"),
                };
                next_vertex[u] = v;
                next_edge[u] = e;
                u = v;
            }
            let mut u = start;
            while !in_tree[u] {
                in_tree[u] = true;
                if next_vertex[u] != terminal {
                    parent_edge[u] = Some(next_edge[u]);
                }
                u = next_vertex[u];
            }
        }

        let forest = SpanningForest::from_parent_edges(graph, parent_edge)?;
        Ok(TreeSample { forest, steps })
    }
}

/// Samples `P(T) ∝ Π w(e)` with Wilson's algorithm rooted at `root`.
pub fn wilson_sample<R: Rng + ?Sized>(
    dist: &TreeDistribution<'_>,
    root: usize,
    rng: &mut R,
) -> Result<SpanningForest> {
    Ok(WilsonSampler::default().sample(dist, WalkRoot::Vertex(root), rng)?.forest)
}

/// Samples a spanning tree of the terminal-augmented graph rooted at the
/// terminal vertex and returns it with the terminal edges dropped.
pub fn wilson_sample_terminal<R: Rng + ?Sized>(
    dist: &TreeDistribution<'_>,
    rng: &mut R,
) -> Result<SpanningForest> {
    Ok(WilsonSampler::default().sample(dist, WalkRoot::Terminal, rng)?.forest)
}

/// Conjugate tree weights given an image: `w̃(e) = w(e) φ(λ_e Δx_e)`.
///
/// Values that underflow are raised to the smallest positive normal double so
/// the result stays a valid weight vector.
pub fn conjugate_weights(
    graph: &GridGraph,
    base_weights: &[f64],
    image: &[f64],
    prior: &DifferencePrior,
) -> Result<Vec<f64>> {
    check_len(graph.edge_count(), base_weights.len())?;
    check_len(graph.vertex_count(), image.len())?;
    Ok(graph
        .edges()
        .iter()
        .enumerate()
        .map(|(e, &(a, b))| {
            let z = prior.edge_strength(e) * (image[a] - image[b]);
            (base_weights[e] * prior.unit_density(z)).max(f64::MIN_POSITIVE)
        })
        .collect())
}

/// Every spanning tree of a small graph with its exact probability under
/// `P(T) ∝ Π w(e)`, using the graph's own weights.
pub fn enumerate_trees(graph: &GridGraph) -> Result<Vec<(SpanningForest, f64)>> {
    let m = graph.edge_count();
    if m > ENUMERATION_EDGE_LIMIT {
        return Err(Error::TooLarge {
            what: "tree enumeration",
            size: m,
            limit: ENUMERATION_EDGE_LIMIT,
        });
    }
    let n = graph.vertex_count();
    let mut found: Vec<(Vec<usize>, f64)> = Vec::new();
    let mut chosen = Vec::with_capacity(n.saturating_sub(1));
    let dsu: Vec<usize> = (0..n).collect();
    collect_trees(graph, 0, &dsu, &mut chosen, &mut found);

    let total: f64 = found.iter().map(|(_, w)| w).sum();
    found
        .into_iter()
        .map(|(edges, w)| Ok((SpanningForest::from_edges(graph, &edges)?, w / total)))
        .collect()
}

fn find(dsu: &[usize], mut v: usize) -> usize {
    while dsu[v] != v {
        v = dsu[v];
    }
    v
}

fn collect_trees(
    graph: &GridGraph,
    next: usize,
    dsu: &[usize],
    chosen: &mut Vec<usize>,
    found: &mut Vec<(Vec<usize>, f64)>,
) {
    let needed = graph.vertex_count() - 1 - chosen.len();
    if needed == 0 {
        let w = chosen.iter().map(|&e| graph.weights()[e]).product();
        found.push((chosen.clone(), w));
        return;
    }
    if graph.edge_count() - next < needed {
        return;
    }
    let (a, b) = graph.edge(next);
    let (ra, rb) = (find(dsu, a), find(dsu, b));
    if ra != rb {
        let mut merged = dsu.to_vec();
        merged[ra] = rb;
        chosen.push(next);
        collect_trees(graph, next + 1, &merged, chosen, found);
        chosen.pop();
    }
    collect_trees(graph, next + 1, dsu, chosen, found);
}

/// Kirchhoff determinant `det(L_v)` with vertex 0 deleted; see
/// [`matrix_tree_count_deleting`].
pub fn matrix_tree_count(graph: &GridGraph, squared: bool) -> Result<f64> {
    matrix_tree_count_deleting(graph, squared, 0)
}

/// `det(L_v)`: the Laplacian with row and column `deleted` removed, built
/// from squared weights (`Dᵀ W² D`) or plain weights (`Dᵀ W D`). Equals the
/// weighted spanning tree sum `Σ_T Π w(e)^{2 or 1}`. The terminal vertex, if
/// any, is ignored.
pub fn matrix_tree_count_deleting(graph: &GridGraph, squared: bool, deleted: usize) -> Result<f64> {
    Ok(log_matrix_tree_count(graph, squared, deleted)?.exp())
}

/// Natural log of [`matrix_tree_count_deleting`]; `-inf` for disconnected
/// graphs.
pub fn log_matrix_tree_count(graph: &GridGraph, squared: bool, deleted: usize) -> Result<f64> {
    let n = graph.vertex_count();
    if n > MATRIX_TREE_VERTEX_LIMIT {
        return Err(Error::TooLarge {
            what: "dense matrix-tree determinant",
            size: n,
            limit: MATRIX_TREE_VERTEX_LIMIT,
        });
    }
    if deleted >= n {
        return Err(invalid(format!("deleted vertex {deleted} out of range")));
    }
    if n == 1 {
        return Ok(0.0);
    }
    // Eliminate vertices on the edge-weight matrix. Each pivot is a sum of
    // positive couplings, so bottleneck weights cause no cancellation.
    let mut w = vec![0.0; n * n];
    for (&(a, b), &x) in graph.edges().iter().zip(graph.weights()) {
        let x = if squared { x * x } else { x };
        w[a * n + b] += x;
        w[b * n + a] += x;
    }
    let mut alive = vec![true; n];
    let mut log_det = 0.0;
    for k in (0..n).filter(|&k| k != deleted) {
        alive[k] = false;
        let d: f64 = (0..n).filter(|&j| alive[j]).map(|j| w[k * n + j]).sum();
        if d <= 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        log_det += d.ln();
        let nbrs: Vec<usize> = (0..n).filter(|&j| alive[j] && w[k * n + j] > 0.0).collect();
        for &i in &nbrs {
            let scale = w[i * n + k] / d;
            for &j in nbrs.iter().filter(|&&j| j != i) {
                w[i * n + j] += scale * w[k * n + j];
            }
        }
    }
    Ok(log_det)
}
