//! Weighted pixel lattices, spanning forests and the finite difference
//! operator shared by every prior.
//!
//! Vertices are pixels in row-major order. Every edge is stored once with
//! orientation `(lower index, higher index)`; difference rows evaluate
//! `x[lower] - x[higher]`.

use std::collections::VecDeque;

use crate::error::{check_len, invalid, Result};
use crate::linalg::SparseMatrix;

/// A weighted, undirected, simple graph on the pixels of a `height x width`
/// image, optionally augmented with a terminal vertex joined to every pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct GridGraph {
    height: usize,
    width: usize,
    edges: Vec<(usize, usize)>,
    weights: Vec<f64>,
    terminal_weight: f64,
    adj_offsets: Vec<usize>,
    adj: Vec<(usize, usize)>,
}

/// Builds the 4-connected `height x width` lattice with constant edge weight.
pub fn build_grid(
    height: usize,
    width: usize,
    uniform_weight: f64,
    terminal_weight: f64,
) -> Result<GridGraph> {
    GridGraph::lattice(height, width, |_| uniform_weight, terminal_weight)
}

impl GridGraph {
    /// Builds the full 4-connected lattice. `weight_of(horizontal)` gives the
    /// weight of each horizontal (same row) or vertical edge.
    pub fn lattice(
        height: usize,
        width: usize,
        weight_of: impl Fn(bool) -> f64,
        terminal_weight: f64,
    ) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(invalid(format!("grid dimensions must be positive, got {height}x{width}")));
        }
        let mut edges = Vec::with_capacity(height * (width - 1) + width * (height - 1));
        let mut weights = Vec::with_capacity(edges.capacity());
        for r in 0..height {
            for c in 0..width {
                let v = r * width + c;
                if c + 1 < width {
                    edges.push((v, v + 1));
                    weights.push(weight_of(true));
                }
                if r + 1 < height {
                    edges.push((v, v + width));
                    weights.push(weight_of(false));
                }
            }
        }
        Self::new(height, width, edges, weights, terminal_weight)
    }

    /// Graph with an explicit edge list. Edges must join 4-neighbours, appear
    /// at most once, and carry strictly positive weights. The graph must be
    /// connected unless a terminal vertex is present.
    pub fn new(
        height: usize,
        width: usize,
        edges: Vec<(usize, usize)>,
        weights: Vec<f64>,
        terminal_weight: f64,
    ) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(invalid(format!("grid dimensions must be positive, got {height}x{width}")));
        }
        check_len(edges.len(), weights.len())?;
        if !(terminal_weight >= 0.0 && terminal_weight.is_finite()) {
            return Err(invalid(format!("terminal weight must be finite and >= 0, got {terminal_weight}")));
        }
        let n = height * width;
        let mut edges = edges;
        for (i, e) in edges.iter_mut().enumerate() {
            let (a, b) = (e.0.min(e.1), e.0.max(e.1));
            let adjacent = b < n && ((b == a + 1 && a / width == b / width) || b == a + width);
            if !adjacent {
                return Err(invalid(format!("edge {i} ({a}, {b}) does not join 4-neighbours")));
            }
            if !(weights[i] > 0.0 && weights[i].is_finite()) {
                return Err(invalid(format!("edge {i} has non-positive weight {}", weights[i])));
            }
            *e = (a, b);
        }

        let mut degree = vec![0usize; n];
        for &(a, b) in &edges {
            degree[a] += 1;
            degree[b] += 1;
        }
        let mut adj_offsets = vec![0usize; n + 1];
        for v in 0..n {
            adj_offsets[v + 1] = adj_offsets[v] + degree[v];
        }
        let mut fill = adj_offsets.clone();
        let mut adj = vec![(0usize, 0usize); adj_offsets[n]];
        for (i, &(a, b)) in edges.iter().enumerate() {
            adj[fill[a]] = (b, i);
            fill[a] += 1;
            adj[fill[b]] = (a, i);
            fill[b] += 1;
        }
        for v in 0..n {
            let nbrs = &mut adj[adj_offsets[v]..adj_offsets[v + 1]];
            nbrs.sort_unstable();
            if nbrs.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(invalid(format!("duplicate edge at vertex {v}")));
            }
        }

        let graph = Self {
            height,
            width,
            edges,
            weights,
            terminal_weight,
            adj_offsets,
            adj,
        };
        if terminal_weight == 0.0 && graph.component_labels().1 > 1 {
            return Err(invalid("graph is disconnected and has no terminal vertex"));
        }
        Ok(graph)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn vertex_count(&self) -> usize {
        self.height * self.width
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge(&self, e: usize) -> (usize, usize) {
        self.edges[e]
    }

    /// True when the edge joins two pixels of the same row.
    pub fn is_horizontal(&self, e: usize) -> bool {
        let (a, b) = self.edges[e];
        b == a + 1 && a / self.width == b / self.width
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn terminal_weight(&self) -> f64 {
        self.terminal_weight
    }

    pub fn has_terminal(&self) -> bool {
        self.terminal_weight > 0.0
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    pub fn coords(&self, v: usize) -> (usize, usize) {
        (v / self.width, v % self.width)
    }

    /// `(neighbour, edge index)` pairs of `v`, sorted by neighbour.
    pub fn neighbors(&self, v: usize) -> &[(usize, usize)] {
        &self.adj[self.adj_offsets[v]..self.adj_offsets[v + 1]]
    }

    pub fn max_degree(&self) -> usize {
        (0..self.vertex_count())
            .map(|v| self.adj_offsets[v + 1] - self.adj_offsets[v])
            .max()
            .unwrap_or(0)
    }

    /// Index of the edge joining `a` and `b`, if any.
    pub fn find_edge(&self, a: usize, b: usize) -> Option<usize> {
        self.neighbors(a)
            .binary_search_by_key(&b, |&(u, _)| u)
            .ok()
            .map(|i| self.neighbors(a)[i].1)
    }

    pub fn with_weights(&self, weights: Vec<f64>) -> Result<Self> {
        Self::new(self.height, self.width, self.edges.clone(), weights, self.terminal_weight)
    }

    pub fn with_terminal_weight(&self, terminal_weight: f64) -> Result<Self> {
        Self::new(self.height, self.width, self.edges.clone(), self.weights.clone(), terminal_weight)
    }

    /// The subgraph with the listed edges removed. Remaining edges keep their
    /// relative order (and are renumbered).
    pub fn without_edges(&self, removed: &[usize]) -> Result<Self> {
        let mut keep = vec![true; self.edge_count()];
        for &e in removed {
            if e >= keep.len() {
                return Err(invalid(format!("edge index {e} out of range")));
            }
            keep[e] = false;
        }
        let (edges, weights) = self
            .edges
            .iter()
            .zip(&self.weights)
            .zip(&keep)
            .filter(|(_, &k)| k)
            .map(|((&e, &w), _)| (e, w))
            .unzip();
        Self::new(self.height, self.width, edges, weights, self.terminal_weight)
    }

    /// The subgraph on the given edges (renumbered in the given order).
    pub fn edge_subgraph(&self, edges: &[usize], weights: Vec<f64>) -> Result<Self> {
        check_len(edges.len(), weights.len())?;
        let list = edges.iter().map(|&e| self.edges[e]).collect();
        Self::new(self.height, self.width, list, weights, self.terminal_weight)
    }

    /// Connected-component label of every vertex (ignoring the terminal
    /// vertex) and the number of components.
    pub fn component_labels(&self) -> (Vec<usize>, usize) {
        let n = self.vertex_count();
        let mut label = vec![usize::MAX; n];
        let mut count = 0;
        let mut queue = VecDeque::new();
        for s in 0..n {
            if label[s] != usize::MAX {
                continue;
            }
            label[s] = count;
            queue.push_back(s);
            while let Some(v) = queue.pop_front() {
                for &(u, _) in self.neighbors(v) {
                    if label[u] == usize::MAX {
                        label[u] = count;
                        queue.push_back(u);
                    }
                }
            }
            count += 1;
        }
        (label, count)
    }
}

/// An acyclic edge subset of a [`GridGraph`] touching every vertex.
///
/// Each component is rooted; `parent[v]` is `None` exactly at the roots. For a
/// forest produced with a terminal vertex, the roots are the vertices whose
/// walk stepped into the terminal vertex.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpanningForest {
    parent: Vec<Option<usize>>,
    parent_edge: Vec<Option<usize>>,
    included_edges: Vec<usize>,
    component_count: usize,
}

impl SpanningForest {
    /// Forest from per-vertex parent edges. Fails if the pointers form a cycle.
    pub fn from_parent_edges(graph: &GridGraph, parent_edge: Vec<Option<usize>>) -> Result<Self> {
        let n = graph.vertex_count();
        check_len(n, parent_edge.len())?;
        let mut parent = vec![None; n];
        for v in 0..n {
            if let Some(e) = parent_edge[v] {
                let (a, b) = *graph
                    .edges
                    .get(e)
                    .ok_or_else(|| invalid(format!("edge index {e} out of range")))?;
                parent[v] = Some(match v {
                    _ if v == a => b,
                    _ if v == b => a,
                    _ => return Err(invalid(format!("edge {e} is not incident to vertex {v}"))),
                });
            }
        }
        // Every vertex must reach a root; 0 = unvisited, 1 = on stack, 2 = done.
        let mut state = vec![0u8; n];
        let mut path = Vec::new();
        for s in 0..n {
            let mut v = s;
            while state[v] == 0 {
                state[v] = 1;
                path.push(v);
                match parent[v] {
                    Some(p) => v = p,
                    None => break,
                }
            }
            if state[v] == 1 && parent[v].is_some() {
                return Err(invalid("parent pointers contain a cycle"));
            }
            for u in path.drain(..) {
                state[u] = 2;
            }
        }
        let mut included_edges: Vec<usize> = parent_edge.iter().flatten().copied().collect();
        included_edges.sort_unstable();
        let component_count = parent.iter().filter(|p| p.is_none()).count();
        Ok(Self {
            parent,
            parent_edge,
            included_edges,
            component_count,
        })
    }

    /// Forest from an edge list. Each component is rooted at its lowest
    /// vertex index. Fails on cycles or unknown edges.
    pub fn from_edges(graph: &GridGraph, edges: &[usize]) -> Result<Self> {
        let n = graph.vertex_count();
        let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for &e in edges {
            let (a, b) = *graph
                .edges
                .get(e)
                .ok_or_else(|| invalid(format!("edge index {e} out of range")))?;
            adj[a].push((b, e));
            adj[b].push((a, e));
        }
        let mut parent_edge = vec![None; n];
        let mut seen = vec![false; n];
        let mut tree_edges = 0usize;
        let mut queue = VecDeque::new();
        for root in 0..n {
            if seen[root] {
                continue;
            }
            seen[root] = true;
            queue.push_back(root);
            while let Some(v) = queue.pop_front() {
                for &(u, e) in &adj[v] {
                    if !seen[u] {
                        seen[u] = true;
                        parent_edge[u] = Some(e);
                        tree_edges += 1;
                        queue.push_back(u);
                    }
                }
            }
        }
        if tree_edges != edges.len() {
            return Err(invalid("edge set contains a cycle or a repeated edge"));
        }
        Self::from_parent_edges(graph, parent_edge)
    }

    pub fn vertex_count(&self) -> usize {
        self.parent.len()
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        self.parent[v]
    }

    pub fn parent_edge(&self, v: usize) -> Option<usize> {
        self.parent_edge[v]
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parent
    }

    /// Included edge indices, sorted ascending.
    pub fn included_edges(&self) -> &[usize] {
        &self.included_edges
    }

    pub fn component_count(&self) -> usize {
        self.component_count
    }

    pub fn is_tree(&self) -> bool {
        self.component_count == 1
    }

    pub fn roots(&self) -> Vec<usize> {
        (0..self.parent.len()).filter(|&v| self.parent[v].is_none()).collect()
    }

    /// Vertices ordered so that every parent precedes its children.
    pub fn topological_order(&self) -> Vec<usize> {
        let n = self.parent.len();
        let mut child_count = vec![0usize; n + 1];
        for p in self.parent.iter().flatten() {
            child_count[p + 1] += 1;
        }
        for v in 0..n {
            child_count[v + 1] += child_count[v];
        }
        let offsets = child_count.clone();
        let mut fill = child_count;
        let mut children = vec![0usize; n];
        for v in 0..n {
            if let Some(p) = self.parent[v] {
                children[fill[p]] = v;
                fill[p] += 1;
            }
        }
        let mut order = self.roots();
        let mut head = 0;
        while head < order.len() {
            let v = order[head];
            order.extend_from_slice(&children[offsets[v]..offsets[v + 1]]);
            head += 1;
        }
        order
    }

    /// Root of the component containing each vertex.
    pub fn component_roots(&self) -> Vec<usize> {
        let mut root = vec![usize::MAX; self.parent.len()];
        for v in self.topological_order() {
            root[v] = match self.parent[v] {
                None => v,
                Some(p) => root[p],
            };
        }
        root
    }
}

/// Sparse finite difference operator over a set of edges, with optional
/// root rows. Edge rows come first, in the order given; root rows follow.
#[derive(Clone, Debug, PartialEq)]
pub struct DifferenceOperator {
    n_vertices: usize,
    /// `(plus vertex, minus vertex, graph edge index)` per edge row.
    edge_rows: Vec<(usize, usize, usize)>,
    /// `(vertex, entry)` per root row.
    root_rows: Vec<(usize, f64)>,
}

/// Difference operator of a spanning forest. When `rooted`, every component
/// root gets a row with the single entry `root_weight`.
pub fn difference_operator(
    forest: &SpanningForest,
    graph: &GridGraph,
    root_weight: f64,
    rooted: bool,
) -> Result<DifferenceOperator> {
    let roots = if rooted { forest.roots() } else { Vec::new() };
    DifferenceOperator::new(graph, forest.included_edges(), &roots, root_weight)
}

impl DifferenceOperator {
    pub fn new(graph: &GridGraph, edges: &[usize], roots: &[usize], root_weight: f64) -> Result<Self> {
        if !roots.is_empty() && !(root_weight > 0.0 && root_weight.is_finite()) {
            return Err(invalid(format!("root weight must be positive, got {root_weight}")));
        }
        let n = graph.vertex_count();
        let mut edge_rows = Vec::with_capacity(edges.len());
        for &e in edges {
            let &(a, b) = graph
                .edges
                .get(e)
                .ok_or_else(|| invalid(format!("edge index {e} out of range")))?;
            edge_rows.push((a, b, e));
        }
        let mut root_rows = Vec::with_capacity(roots.len());
        for &r in roots {
            if r >= n {
                return Err(invalid(format!("root {r} out of range")));
            }
            root_rows.push((r, root_weight));
        }
        Ok(Self {
            n_vertices: n,
            edge_rows,
            root_rows,
        })
    }

    pub fn nrows(&self) -> usize {
        self.edge_rows.len() + self.root_rows.len()
    }

    pub fn ncols(&self) -> usize {
        self.n_vertices
    }

    pub fn edge_rows(&self) -> &[(usize, usize, usize)] {
        &self.edge_rows
    }

    pub fn root_rows(&self) -> &[(usize, f64)] {
        &self.root_rows
    }

    /// Same operator with every edge row negated.
    pub fn with_flipped_orientation(&self) -> Self {
        Self {
            n_vertices: self.n_vertices,
            edge_rows: self.edge_rows.iter().map(|&(p, m, e)| (m, p, e)).collect(),
            root_rows: self.root_rows.clone(),
        }
    }

    /// Differences `D x`: one value per edge row, then one per root row.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.n_vertices);
        self.edge_rows
            .iter()
            .map(|&(p, m, _)| x[p] - x[m])
            .chain(self.root_rows.iter().map(|&(r, w)| w * x[r]))
            .collect()
    }

    /// Sparse matrix `diag(row_scales) D`.
    pub fn to_sparse(&self, row_scales: &[f64]) -> SparseMatrix {
        assert_eq!(row_scales.len(), self.nrows());
        let ne = self.edge_rows.len();
        let triplets = self
            .edge_rows
            .iter()
            .enumerate()
            .flat_map(|(i, &(p, m, _))| [(i, p, row_scales[i]), (i, m, -row_scales[i])])
            .chain(
                self.root_rows
                    .iter()
                    .enumerate()
                    .map(|(j, &(r, w))| (ne + j, r, w * row_scales[ne + j])),
            );
        SparseMatrix::from_triplets(self.nrows(), self.n_vertices, triplets)
    }
}

/// Weighted graph Laplacian `Dᵀ W² D` over all edges of the graph.
pub fn graph_laplacian(graph: &GridGraph) -> SparseMatrix {
    weighted_laplacian(graph, graph.weights(), true)
}

/// `Dᵀ W² D` when `squared`, otherwise `Dᵀ W D`, with the given edge weights.
pub fn weighted_laplacian(graph: &GridGraph, weights: &[f64], squared: bool) -> SparseMatrix {
    assert_eq!(weights.len(), graph.edge_count());
    let n = graph.vertex_count();
    let mut triplets = Vec::with_capacity(4 * graph.edge_count());
    for (&(a, b), &w) in graph.edges().iter().zip(weights) {
        let c = if squared { w * w } else { w };
        triplets.extend([(a, a, c), (b, b, c), (a, b, -c), (b, a, -c)]);
    }
    SparseMatrix::from_triplets(n, n, triplets)
}
