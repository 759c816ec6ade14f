//! Compressed-row sparse matrices, normal-equation operator stacks, conjugate
//! gradients and Hutchinson diagonal estimation.

use rand::Rng;

use crate::error::{check_len, invalid, Error, Result};

/// Diagonal entries below this are raised to it before use as a Jacobi
/// preconditioner.
pub const DIAGONAL_FLOOR: f64 = 1e-12;

/// Default number of Rademacher probes for [`hutchinson_diagonal`].
pub const DEFAULT_PROBES: usize = 64;

/// A linear map with an adjoint.
pub trait LinearMap: Sync {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    /// `out = M x`
    fn apply(&self, x: &[f64], out: &mut [f64]);
    /// `out = Mᵀ y`
    fn apply_transpose(&self, y: &[f64], out: &mut [f64]);
}

/// Compressed sparse row matrix with sorted, duplicate-free columns per row.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Assembles from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Self {
        let mut t: Vec<_> = triplets.into_iter().collect();
        for &(r, c, _) in &t {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) outside {nrows}x{ncols}");
        }
        t.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_offsets = vec![0usize; nrows + 1];
        let mut col_indices = Vec::with_capacity(t.len());
        let mut values: Vec<f64> = Vec::with_capacity(t.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in t {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_indices.push(c);
                values.push(v);
                row_offsets[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..nrows {
            row_offsets[i + 1] += row_offsets[i];
        }
        Self {
            nrows,
            ncols,
            row_offsets,
            col_indices,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(d: &[f64]) -> Self {
        Self::from_triplets(d.len(), d.len(), d.iter().enumerate().map(|(i, &v)| (i, i, v)))
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nrows, self.ncols)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `(column, value)` pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_offsets[i]..self.row_offsets[i + 1];
        self.col_indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let span = self.row_offsets[i]..self.row_offsets[i + 1];
        match self.col_indices[span.clone()].binary_search(&j) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.ncols]; self.nrows];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        out
    }

    /// Diagonal of `Mᵀ M`, i.e. squared column norms.
    pub fn gram_diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.ncols];
        for (&c, &v) in self.col_indices.iter().zip(&self.values) {
            d[c] += v * v;
        }
        d
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nrows];
        self.apply(x, &mut out);
        out
    }
}

impl LinearMap for SparseMatrix {
    fn nrows(&self) -> usize {
        self.nrows
    }

    fn ncols(&self) -> usize {
        self.ncols
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate().take(self.nrows) {
            *o = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    fn apply_transpose(&self, y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for i in 0..self.nrows {
            let yi = y[i];
            if yi != 0.0 {
                for (j, v) in self.row(i) {
                    out[j] += v * yi;
                }
            }
        }
    }
}

/// The symmetric operator `Σ_k c_k M_kᵀ M_k` for weighted terms `(c_k, M_k)`.
pub struct LinearOperatorStack<'a> {
    dim: usize,
    terms: Vec<(f64, &'a dyn LinearMap)>,
}

impl<'a> LinearOperatorStack<'a> {
    pub fn new(dim: usize) -> Self {
        Self { dim, terms: Vec::new() }
    }

    pub fn push(&mut self, weight: f64, op: &'a dyn LinearMap) -> Result<()> {
        check_len(self.dim, op.ncols())?;
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(invalid(format!("operator term weight must be positive, got {weight}")));
        }
        self.terms.push((weight, op));
        Ok(())
    }

    pub fn with(mut self, weight: f64, op: &'a dyn LinearMap) -> Result<Self> {
        self.push(weight, op)?;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        let mut back = vec![0.0; self.dim];
        for &(c, op) in &self.terms {
            let mut fwd = vec![0.0; op.nrows()];
            op.apply(x, &mut fwd);
            op.apply_transpose(&fwd, &mut back);
            for (o, b) in out.iter_mut().zip(&back) {
                *o += c * b;
            }
        }
    }

    /// Dense assembly, for tests and tiny problems.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut cols = Vec::with_capacity(self.dim);
        let mut e = vec![0.0; self.dim];
        let mut col = vec![0.0; self.dim];
        for j in 0..self.dim {
            e[j] = 1.0;
            self.apply(&e, &mut col);
            cols.push(col.clone());
            e[j] = 0.0;
        }
        (0..self.dim).map(|i| cols.iter().map(|c| c[i]).collect()).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgSettings {
    pub rel_tol: f64,
    /// Defaults to `10 * dim` when `None`.
    pub max_iter: Option<usize>,
}

impl Default for CgSettings {
    fn default() -> Self {
        Self {
            rel_tol: 1e-6,
            max_iter: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CgOutcome {
    pub solution: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
    /// False when `max_iter` ran out before reaching the tolerance.
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `op x = rhs` by (optionally Jacobi-preconditioned) conjugate
/// gradients, stopping once `‖rhs - op x‖ / ‖rhs‖ <= rel_tol`.
///
/// `preconditioner` holds the diagonal approximation of `op` itself; its
/// entries are inverted internally.
pub fn cg_solve(
    op: &LinearOperatorStack<'_>,
    rhs: &[f64],
    initial: Option<&[f64]>,
    settings: &CgSettings,
    preconditioner: Option<&[f64]>,
) -> Result<CgOutcome> {
    let n = op.dim();
    if op.is_empty() {
        return Err(invalid("operator stack is empty"));
    }
    check_len(n, rhs.len())?;
    if !(settings.rel_tol > 0.0 && settings.rel_tol < 1.0) {
        return Err(invalid(format!("relative tolerance must lie in (0, 1), got {}", settings.rel_tol)));
    }
    let inv_diag: Option<Vec<f64>> = match preconditioner {
        Some(d) => {
            check_len(n, d.len())?;
            Some(d.iter().map(|&v| 1.0 / v.max(DIAGONAL_FLOOR)).collect())
        }
        None => None,
    };
    let max_iter = settings.max_iter.unwrap_or(10 * n.max(1));

    let rhs_norm = dot(rhs, rhs).sqrt();
    if !rhs_norm.is_finite() {
        return Err(Error::NumericalBreakdown {
            iteration: 0,
            detail: "non-finite right-hand side".into(),
        });
    }
    if rhs_norm == 0.0 {
        return Ok(CgOutcome {
            solution: vec![0.0; n],
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
        });
    }

    let mut x = match initial {
        Some(x0) => {
            check_len(n, x0.len())?;
            x0.to_vec()
        }
        None => vec![0.0; n],
    };
    let mut ap = vec![0.0; n];
    let mut r = rhs.to_vec();
    if initial.is_some() {
        op.apply(&x, &mut ap);
        for (ri, a) in r.iter_mut().zip(&ap) {
            *ri -= a;
        }
    }
    let precondition = |r: &[f64]| -> Vec<f64> {
        match &inv_diag {
            Some(d) => r.iter().zip(d).map(|(a, b)| a * b).collect(),
            None => r.to_vec(),
        }
    };
    let mut z = precondition(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut res = dot(&r, &r).sqrt() / rhs_norm;
    let mut it = 0;
    while res > settings.rel_tol && it < max_iter {
        op.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        let alpha = rz / pap;
        if !alpha.is_finite() || pap <= 0.0 {
            return Err(Error::NumericalBreakdown {
                iteration: it,
                detail: format!("curvature pᵀAp = {pap}"),
            });
        }
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        it += 1;
        res = dot(&r, &r).sqrt() / rhs_norm;
        if !res.is_finite() {
            return Err(Error::NumericalBreakdown {
                iteration: it,
                detail: "non-finite residual".into(),
            });
        }
        z = precondition(&r);
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Ok(CgOutcome {
        solution: x,
        iterations: it,
        relative_residual: res,
        converged: res <= settings.rel_tol,
    })
}

/// Unbiased estimate of `diag(op)` from Rademacher probes:
/// `d_i ≈ mean_k v_i (op v)_i`.
pub fn hutchinson_diagonal<R: Rng + ?Sized>(
    op: &LinearOperatorStack<'_>,
    probes: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if probes == 0 {
        return Err(invalid("at least one probe is required"));
    }
    let n = op.dim();
    let mut acc = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut av = vec![0.0; n];
    for _ in 0..probes {
        for vi in v.iter_mut() {
            *vi = if rng.random::<bool>() { 1.0 } else { -1.0 };
        }
        op.apply(&v, &mut av);
        for i in 0..n {
            acc[i] += v[i] * av[i];
        }
    }
    Ok(acc.into_iter().map(|a| a / probes as f64).collect())
}
