//! Contrast metrics, tree depth fields, interface roughness and the spanning
//! tree runtime benchmark.

use std::collections::{BTreeSet, VecDeque};
use std::io::Write;
use std::time::Instant;

use crate::error::{check_len, invalid, Result};
use crate::graph::{GridGraph, SpanningForest};
use crate::image::Image;
use crate::rng::RngStream;
use crate::tree::{TreeDistribution, WalkRoot, WilsonSampler};

/// Largest absolute difference between 4-neighbours.
pub fn max_local_contrast(image: &Image) -> f64 {
    local_contrast(&image.data, image.height, image.width)
}

pub(crate) fn local_contrast(data: &[f64], height: usize, width: usize) -> f64 {
    let mut best = 0.0f64;
    for r in 0..height {
        for c in 0..width {
            let v = data[r * width + c];
            if c + 1 < width {
                best = best.max((v - data[r * width + c + 1]).abs());
            }
            if r + 1 < height {
                best = best.max((v - data[(r + 1) * width + c]).abs());
            }
        }
    }
    best
}

/// `max - min`.
pub fn global_contrast(image: &Image) -> f64 {
    value_range(&image.data)
}

pub(crate) fn value_range(data: &[f64]) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let (lo, hi) = data
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    hi - lo
}

/// Graph distance along the forest from `root`. Components not containing
/// `root` are measured from their own roots and shifted past the largest
/// depth assigned so far.
pub fn tree_depth_field(forest: &SpanningForest, graph: &GridGraph, root: usize) -> Result<Vec<usize>> {
    let n = graph.vertex_count();
    check_len(n, forest.vertex_count())?;
    if root >= n {
        return Err(invalid(format!("root {root} out of range")));
    }
    let mut adj = vec![Vec::new(); n];
    for &e in forest.included_edges() {
        let (a, b) = graph.edge(e);
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut depth = vec![usize::MAX; n];
    let mut offset = 0;
    let starts = std::iter::once(root).chain(forest.roots());
    for start in starts {
        if depth[start] != usize::MAX {
            continue;
        }
        let mut deepest = offset;
        depth[start] = offset;
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if depth[v] == usize::MAX {
                    depth[v] = depth[u] + 1;
                    deepest = deepest.max(depth[v]);
                    queue.push_back(v);
                }
            }
        }
        offset = deepest + 1;
    }
    Ok(depth)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Roughness {
    /// Number of neighbour pairs straddling the threshold.
    pub length: usize,
    /// Extent of a straight interface with the same footprint.
    pub span: usize,
}

impl Roughness {
    pub fn ratio(&self) -> f64 {
        self.length as f64 / self.span as f64
    }
}

/// Length of the level-`threshold` interface in pixel-edge units against
/// its straight-line span. `None` if the image never crosses the level.
pub fn interface_roughness(image: &Image, threshold: f64) -> Option<Roughness> {
    let (h, w) = (image.height, image.width);
    let above = |r: usize, c: usize| image.get(r, c) > threshold;
    let mut length = 0;
    let mut rows = BTreeSet::new();
    let mut cols = BTreeSet::new();
    for r in 0..h {
        for c in 0..w {
            if c + 1 < w && above(r, c) != above(r, c + 1) {
                length += 1;
                rows.insert(r);
            }
            if r + 1 < h && above(r, c) != above(r + 1, c) {
                length += 1;
                cols.insert(c);
            }
        }
    }
    (length > 0).then(|| Roughness {
        length,
        span: rows.len().max(cols.len()),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkRow {
    pub grid_size: usize,
    pub kappa: f64,
    pub rho_rel: f64,
    pub repeats: usize,
    pub mean_steps: f64,
    pub wall_time_ms: f64,
}

impl BenchmarkRow {
    pub fn steps_per_vertex(&self) -> f64 {
        self.mean_steps / (self.grid_size * self.grid_size) as f64
    }
}

/// Mean Wilson walk length on `n`×`n` grids with horizontal weight `kappa`
/// and vertical weight 1. A positive `rho_rel` adds a terminal vertex of that
/// weight; zero roots the walks at vertex 0.
pub fn benchmark_tree_runtime(
    sizes: &[usize],
    kappas: &[f64],
    rho_rels: &[f64],
    repeats: usize,
    seed: u64,
) -> Result<Vec<BenchmarkRow>> {
    if repeats == 0 {
        return Err(invalid("benchmark needs at least one repeat"));
    }
    let sampler = WilsonSampler::default();
    let mut rows = Vec::new();
    for &n in sizes {
        for &kappa in kappas {
            let graph = GridGraph::lattice(n, n, |horizontal| if horizontal { kappa } else { 1.0 }, 0.0)?;
            for &rho in rho_rels {
                if !(rho >= 0.0 && rho.is_finite()) {
                    return Err(invalid(format!("rho_rel must be nonnegative, got {rho}")));
                }
                let mut dist = TreeDistribution::from_graph(&graph);
                let root = if rho > 0.0 {
                    dist = dist.with_terminal_weight(rho)?;
                    WalkRoot::Terminal
                } else {
                    WalkRoot::Vertex(0)
                };
                let mut rng = RngStream::for_chain(seed, rows.len());
                let mut steps = 0u64;
                let start = Instant::now();
                for _ in 0..repeats {
                    steps += sampler.sample(&dist, root, &mut rng)?.steps;
                }
                rows.push(BenchmarkRow {
                    grid_size: n,
                    kappa,
                    rho_rel: rho,
                    repeats,
                    mean_steps: steps as f64 / repeats as f64,
                    wall_time_ms: start.elapsed().as_secs_f64() * 1e3 / repeats as f64,
                });
            }
        }
    }
    Ok(rows)
}

/// Step counts only; these are reproducible for a fixed seed.
pub fn write_benchmark_csv<W: Write>(out: &mut W, rows: &[BenchmarkRow]) -> Result<()> {
    writeln!(out, "grid_size,kappa,rho_rel,repeats,mean_steps,steps_per_vertex")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.grid_size,
            r.kappa,
            r.rho_rel,
            r.repeats,
            r.mean_steps,
            r.steps_per_vertex()
        )?;
    }
    Ok(())
}

/// Per-sample wall times, kept apart from the reproducible step counts.
pub fn write_timing_csv<W: Write>(out: &mut W, rows: &[BenchmarkRow]) -> Result<()> {
    writeln!(out, "grid_size,kappa,rho_rel,wall_time_ms")?;
    for r in rows {
        writeln!(out, "{},{},{},{:.4}", r.grid_size, r.kappa, r.rho_rel, r.wall_time_ms)?;
    }
    Ok(())
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}
