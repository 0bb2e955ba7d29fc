//! The homogeneous pairwise-minor system of a flattening and its smallest
//! singular pair.
//!
//! For a flattening with column groups `Theta_j`, every pair of observed rows
//! `r < r'` in the same column `j` contributes the equation
//! `A[r, j] * x[r'] - A[r', j] * x[r] = 0`. Stacked, these form a sparse matrix
//! `B` whose nullspace carries the row factor of any rank-one completion.
//!
//! Two solvers back [`smallest_singular`]: a dense path (blocked QR followed by
//! an SVD of the triangular factor) and, for wide systems, a shift-invert
//! subspace iteration on `B^T B` driven by a sparse Cholesky factorization.

mod balance;
mod dense;
mod iterative;

pub use balance::{equilibrate, Balanced};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::tensor::{FlattenedView, ReducedIndex};
use crate::union_find::UnionFind;

/// Where a row of a built system came from: column `col` of the flattening
/// and the positions (into the column labels) of the two row labels paired.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct RowOrigin {
    pub col: usize,
    pub first: usize,
    pub second: usize,
}

/// A sparse matrix in compressed-row form.
///
/// Systems produced by [`build_system`] carry their column labels (the row
/// labels of the flattening) and one [`RowOrigin`] per row; systems built
/// from raw triplets carry neither.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseSystem {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<f64>,
    col_labels: Vec<ReducedIndex>,
    provenance: Vec<RowOrigin>,
}

impl SparseSystem {
    /// Assembles a matrix from `(row, col, value)` triplets, summing
    /// duplicates and dropping explicit zeros.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let mut sorted = triplets.to_vec();
        for &(r, c, v) in &sorted {
            if r >= nrows || c >= ncols {
                return Err(Error::arg(format!(
                    "triplet ({r}, {c}) outside a {nrows}x{ncols} matrix"
                )));
            }
            if !v.is_finite() {
                return Err(Error::arg(format!("triplet ({r}, {c}) is not finite")));
            }
        }
        sorted.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut vals = Vec::with_capacity(sorted.len());
        let mut rows = Vec::with_capacity(sorted.len());
        for (r, c, v) in sorted {
            if rows.last() == Some(&r) && col_idx.last() == Some(&c) {
                *vals.last_mut().unwrap() += v;
            } else {
                rows.push(r);
                col_idx.push(c);
                vals.push(v);
            }
        }
        let mut out_cols = Vec::with_capacity(col_idx.len());
        let mut out_vals = Vec::with_capacity(vals.len());
        for ((&r, &c), &v) in rows.iter().zip(&col_idx).zip(&vals) {
            if v != 0.0 {
                row_ptr[r + 1] += 1;
                out_cols.push(c);
                out_vals.push(v);
            }
        }
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Ok(SparseSystem {
            nrows,
            ncols,
            row_ptr,
            col_idx: out_cols,
            vals: out_vals,
            col_labels: Vec::new(),
            provenance: Vec::new(),
        })
    }

    /// Dense row-major input; zeros are not stored.
    pub fn from_dense_rows(ncols: usize, rows: &[Vec<f64>]) -> Result<Self> {
        let mut t = Vec::new();
        for (r, row) in rows.iter().enumerate() {
            if row.len() != ncols {
                return Err(Error::arg(format!(
                    "row {r} has {} entries, expected {ncols}",
                    row.len()
                )));
            }
            t.extend(row.iter().enumerate().map(|(c, &v)| (r, c, v)));
        }
        Self::from_triplets(rows.len(), ncols, &t)
    }

    /// The rows `rows` restricted to the columns `cols` (sorted), renumbered
    /// in the given order. Entries outside `cols` are dropped.
    pub(crate) fn submatrix(&self, rows: &[usize], cols: &[usize]) -> SparseSystem {
        let mut t = Vec::new();
        for (i, &r) in rows.iter().enumerate() {
            let (c, v) = self.row(r);
            for (&c, &v) in c.iter().zip(v) {
                if let Ok(j) = cols.binary_search(&c) {
                    t.push((i, j, v));
                }
            }
        }
        SparseSystem::from_triplets(rows.len(), cols.len(), &t).expect("entries are in range")
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn is_underdetermined(&self) -> bool {
        self.nrows < self.ncols
    }

    /// Column indices and values stored in row `r`.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        (&self.col_idx[span.clone()], &self.vals[span])
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |r| {
            let (c, v) = self.row(r);
            c.iter().zip(v).map(move |(&c, &v)| (r, c, v))
        })
    }

    pub fn col_labels(&self) -> &[ReducedIndex] {
        &self.col_labels
    }

    pub fn provenance(&self) -> &[RowOrigin] {
        &self.provenance
    }

    pub fn scaled(&self, c: f64) -> SparseSystem {
        let mut out = self.clone();
        out.vals.iter_mut().for_each(|v| *v *= c);
        out
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols, "vector length must match column count");
        (0..self.nrows)
            .map(|r| {
                let (c, v) = self.row(r);
                c.iter().zip(v).map(|(&c, &v)| v * x[c]).sum()
            })
            .collect()
    }

    pub fn mul_transpose_vec(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.nrows, "vector length must match row count");
        let mut out = vec![0.0; self.ncols];
        for (r, &yr) in y.iter().enumerate() {
            let (c, v) = self.row(r);
            for (&c, &v) in c.iter().zip(v) {
                out[c] += v * yr;
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.vals.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn to_dense_rows(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.ncols]; self.nrows];
        for (r, c, v) in self.triplets() {
            out[r][c] = v;
        }
        out
    }
}

/// Assembles the pairwise-minor system of a flattening.
///
/// Columns follow the sorted row labels of `view`. Rows enumerate, for each
/// column label `j` in ascending order, every pair `r < r'` of row labels
/// observed in column `j` (pairs in lexicographic order); the row carries
/// `A[r, j]` at column `r'` and `-A[r', j]` at column `r`.
pub fn build_system(view: &FlattenedView) -> SparseSystem {
    let ncols = view.row_labels().len();
    let mut row_ptr = vec![0usize];
    let mut col_idx = Vec::new();
    let mut vals = Vec::new();
    let mut provenance = Vec::new();
    for (j, group) in view.column_groups() {
        for (s, a) in group.iter().enumerate() {
            for b in &group[s + 1..] {
                // a.row < b.row: the group is sorted by row position.
                if b.value != 0.0 {
                    col_idx.push(a.row);
                    vals.push(-b.value);
                }
                if a.value != 0.0 {
                    col_idx.push(b.row);
                    vals.push(a.value);
                }
                row_ptr.push(col_idx.len());
                provenance.push(RowOrigin {
                    col: j,
                    first: a.row,
                    second: b.row,
                });
            }
        }
    }
    SparseSystem {
        nrows: provenance.len(),
        ncols,
        row_ptr,
        col_idx,
        vals,
        col_labels: view.row_labels().to_vec(),
        provenance,
    }
}

/// How singular values are judged to be zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum RankTolerance {
    /// `max(nrows, ncols) * machine_epsilon * sigma_max`.
    Auto,
    /// `t * max(1, sigma_max)`.
    Relative(f64),
}

impl RankTolerance {
    pub fn threshold(self, nrows: usize, ncols: usize, sigma_max: f64) -> f64 {
        match self {
            RankTolerance::Auto => nrows.max(ncols) as f64 * f64::EPSILON * sigma_max,
            RankTolerance::Relative(t) => t * sigma_max.max(1.0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SvdStrategy {
    /// Dense when `ncols <= dense_limit`, iterative otherwise.
    Auto,
    Dense,
    Iterative,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolverOptions {
    pub tolerance: RankTolerance,
    pub strategy: SvdStrategy,
    pub dense_limit: usize,
    /// Subspace dimension of the iterative solver.
    pub block_size: usize,
    pub max_iterations: usize,
    /// Eigen-residual target `||B^T B x - s^2 x|| <= tol * sigma_max^2` for
    /// the smallest pair.
    pub residual_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tolerance: RankTolerance::Auto,
            strategy: SvdStrategy::Auto,
            dense_limit: 512,
            block_size: 6,
            max_iterations: 300,
            residual_tol: 1e-12,
        }
    }
}

impl SolverOptions {
    pub fn with_tolerance(mut self, tolerance: RankTolerance) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn with_strategy(mut self, strategy: SvdStrategy) -> Self {
        self.strategy = strategy;
        self
    }

    fn use_dense(&self, ncols: usize) -> bool {
        match self.strategy {
            SvdStrategy::Dense => true,
            SvdStrategy::Iterative => false,
            SvdStrategy::Auto => ncols <= self.dense_limit,
        }
    }
}

/// Smallest singular value of a system with its right singular vector.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SingularTriplet {
    /// `sigma_n`; exactly 0 when the system is underdetermined.
    pub sigma_min: f64,
    /// `sigma_{n-1}` (equal to `sigma_min` for a single column).
    pub sigma_next: f64,
    pub sigma_max: f64,
    /// `sigma_{n-1} - sigma_n`, or 0 for underdetermined systems.
    pub gap: f64,
    /// Unit vector; its largest-magnitude entry is positive.
    pub right_vector: Vec<f64>,
    pub underdetermined: bool,
    /// Singular values at or below `threshold` (including the `ncols - nrows`
    /// structural zeros of a wide system).
    pub nullity: usize,
    /// False when the iterative solver only saw a block of small singular
    /// values that all fell below the threshold; `nullity` is then a lower bound.
    pub nullity_exact: bool,
    pub threshold: f64,
}

/// Raw solver output before the sign convention and nullity bookkeeping.
pub(crate) struct SmallestPairs {
    /// Smallest singular values in ascending order (at least one, at most
    /// `ncols`), padded with zeros for wide systems.
    pub sigmas: Vec<f64>,
    /// Right singular vectors matching `sigmas`.
    pub vectors: Vec<Vec<f64>>,
    pub sigma_max: f64,
    /// Whether `sigmas` covers every singular value.
    pub complete: bool,
}

/// Computes the smallest singular value and its right singular vector.
///
/// For `nrows >= ncols` this is the pair `(sigma_n, v_n)`; for wide systems
/// it returns a unit vector of the nullspace. When several singular values are
/// below the rank threshold and the full spectrum is known, the returned
/// vector is the normalized projection onto the numerical nullspace of the
/// lowest-index unit vector with a nonzero projection.
pub fn smallest_singular(b: &SparseSystem, opts: &SolverOptions) -> Result<SingularTriplet> {
    let pairs = smallest_pairs(b, opts, 2)?;
    Ok(finish_triplet(b, opts, pairs))
}

fn smallest_pairs(b: &SparseSystem, opts: &SolverOptions, wanted: usize) -> Result<SmallestPairs> {
    if b.ncols() == 0 {
        return Err(Error::arg("system has no columns"));
    }
    let blocks = column_components(b);
    if blocks.len() == 1 {
        return solve_block(b, opts, wanted);
    }

    // B is block diagonal after permuting rows and columns: its spectrum is
    // the union of the blocks' spectra, and singular vectors are the blocks'
    // vectors padded with zeros.
    let n = b.ncols();
    let mut merged: Vec<(f64, usize, usize)> = Vec::new();
    let mut solved = Vec::with_capacity(blocks.len());
    let mut sigma_max = 0.0f64;
    let mut bound = f64::INFINITY;
    for (id, (rows, cols)) in blocks.iter().enumerate() {
        let p = solve_block(&b.submatrix(rows, cols), opts, wanted)?;
        sigma_max = sigma_max.max(p.sigma_max);
        if !p.complete {
            bound = bound.min(*p.sigmas.last().expect("nonempty spectrum"));
        }
        merged.extend(p.sigmas.iter().enumerate().map(|(i, &s)| (s, id, i)));
        solved.push(p);
    }
    merged.sort_by(|x, y| x.0.total_cmp(&y.0).then((x.1, x.2).cmp(&(y.1, y.2))));
    let complete = bound.is_infinite();
    if !complete {
        // Unseen values of an incomplete block all exceed its largest seen one.
        merged.retain(|&(s, _, _)| s <= bound);
    }
    let threshold = opts.tolerance.threshold(b.nrows(), n, sigma_max);
    let keep = merged
        .iter()
        .filter(|m| m.0 <= threshold)
        .count()
        .max(wanted)
        .min(merged.len());
    let vectors = merged[..keep]
        .iter()
        .map(|&(_, id, i)| {
            let mut v = vec![0.0; n];
            for (&c, &x) in blocks[id].1.iter().zip(&solved[id].vectors[i]) {
                v[c] = x;
            }
            v
        })
        .collect();
    Ok(SmallestPairs {
        sigmas: merged.iter().map(|m| m.0).collect(),
        vectors,
        sigma_max,
        complete,
    })
}

fn solve_block(b: &SparseSystem, opts: &SolverOptions, wanted: usize) -> Result<SmallestPairs> {
    if opts.use_dense(b.ncols()) {
        Ok(dense::smallest_pairs(b))
    } else {
        iterative::smallest_pairs(b, opts, opts.block_size.max(wanted))
    }
}

/// Rows and columns of each connected component of the graph linking two
/// columns whenever a row touches both. Components are ordered by their
/// smallest column; empty columns form their own components.
/// Number of connected components of the graph on columns in which two
/// columns are adjacent when a row couples them. `B` is block diagonal over
/// these components.
pub fn coupled_components(b: &SparseSystem) -> usize {
    let mut uf = UnionFind::new(b.ncols());
    for r in 0..b.nrows() {
        for w in b.row(r).0.windows(2) {
            uf.union(w[0], w[1]);
        }
    }
    uf.components()
}

fn column_components(b: &SparseSystem) -> Vec<(Vec<usize>, Vec<usize>)> {
    let n = b.ncols();
    let mut uf = UnionFind::new(n);
    for r in 0..b.nrows() {
        let (c, _) = b.row(r);
        for w in c.windows(2) {
            uf.union(w[0], w[1]);
        }
    }
    if uf.components() == 1 {
        return vec![((0..b.nrows()).collect(), (0..n).collect())];
    }
    let mut id = vec![usize::MAX; n];
    let mut blocks: Vec<(Vec<usize>, Vec<usize>)> = Vec::with_capacity(uf.components());
    let mut root_block = std::collections::HashMap::new();
    for (c, slot) in id.iter_mut().enumerate() {
        let root = uf.find(c);
        let k = *root_block.entry(root).or_insert_with(|| {
            blocks.push((Vec::new(), Vec::new()));
            blocks.len() - 1
        });
        *slot = k;
        blocks[k].1.push(c);
    }
    for r in 0..b.nrows() {
        let (c, _) = b.row(r);
        if let Some(&first) = c.first() {
            blocks[id[first]].0.push(r);
        }
    }
    blocks
}

fn finish_triplet(b: &SparseSystem, opts: &SolverOptions, pairs: SmallestPairs) -> SingularTriplet {
    let n = b.ncols();
    let underdetermined = b.is_underdetermined();
    let threshold = opts.tolerance.threshold(b.nrows(), n, pairs.sigma_max);
    let nullity = pairs.sigmas.iter().filter(|&&s| s <= threshold).count();
    let nullity_exact = pairs.complete || nullity < pairs.sigmas.len();

    let mut v = if nullity >= 2 && pairs.complete {
        canonical_null_vector(&pairs.vectors[..nullity])
    } else {
        pairs.vectors[0].clone()
    };
    normalize(&mut v);
    fix_sign(&mut v);

    let sigma_min = if underdetermined {
        0.0
    } else {
        pairs.sigmas[0]
    };
    let sigma_next = pairs.sigmas.get(1).copied().unwrap_or(pairs.sigmas[0]);
    let gap = if underdetermined || n == 1 {
        0.0
    } else {
        (sigma_next - sigma_min).max(0.0)
    };
    SingularTriplet {
        sigma_min,
        sigma_next,
        sigma_max: pairs.sigma_max,
        gap,
        right_vector: v,
        underdetermined,
        nullity,
        nullity_exact,
        threshold,
    }
}

/// Projection of the first coordinate vector with a visible component in
/// span(basis). `basis` is orthonormal.
fn canonical_null_vector(basis: &[Vec<f64>]) -> Vec<f64> {
    let n = basis[0].len();
    let pivot = (0..n)
        .find(|&p| basis.iter().map(|q| q[p] * q[p]).sum::<f64>() > 1e-16)
        .unwrap_or(0);
    let mut x = vec![0.0; n];
    for q in basis {
        let w = q[pivot];
        for (xi, qi) in x.iter_mut().zip(q) {
            *xi += w * qi;
        }
    }
    x
}

pub(crate) fn normalize(v: &mut [f64]) {
    let nrm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nrm > 0.0 {
        v.iter_mut().for_each(|x| *x /= nrm);
    }
}

/// Flips `v` so that its largest-magnitude entry is positive. Entries within
/// a relative 1e-9 of the maximum count as tied; the lowest index wins.
pub fn fix_sign(v: &mut [f64]) {
    let max = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if max == 0.0 {
        return;
    }
    let lead = v
        .iter()
        .position(|x| x.abs() >= max * (1.0 - 1e-9))
        .expect("maximum is attained");
    if v[lead] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Number of singular values at or below the rank threshold, counting the
/// structural zeros of wide systems.
pub fn nullspace_dimension(b: &SparseSystem, opts: &SolverOptions) -> Result<usize> {
    let mut block = opts.block_size.max(2);
    loop {
        let t = finish_triplet(b, opts, smallest_pairs(b, opts, block)?);
        if t.nullity_exact || block >= b.ncols() {
            return Ok(t.nullity);
        }
        block = (block * 2).min(b.ncols());
    }
}

/// Perturbation bound for the nullvector of a rank-(n-1) system.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StabilityBound {
    /// `C0` with `||dv|| <= C0 ||dB||` whenever `||dB|| <= radius`.
    pub constant: f64,
    pub radius: f64,
    /// `sigma_{n-1}` of the unperturbed system.
    pub sigma_next: f64,
    pub wide: bool,
}

/// `C0 = 4 sqrt(2) / sigma_{n-1}` with radius `sigma_{n-1} / 4` for
/// `nrows >= ncols`; `3 sqrt(2) / sigma_{n-1}` with radius `sigma_{n-1} / 3`
/// otherwise.
pub fn stability_constant(b: &SparseSystem, opts: &SolverOptions) -> Result<StabilityBound> {
    let t = smallest_singular(b, opts)?;
    if t.nullity != 1 || b.ncols() < 2 {
        return Err(Error::Precondition(format!(
            "stability bound needs a one-dimensional nullspace, found dimension {}",
            t.nullity
        )));
    }
    Ok(stability_from_sigma(t.sigma_next, b.is_underdetermined()))
}

pub fn stability_from_sigma(sigma_next: f64, wide: bool) -> StabilityBound {
    let (c, r) = if wide { (3.0, 3.0) } else { (4.0, 4.0) };
    StabilityBound {
        constant: c * std::f64::consts::SQRT_2 / sigma_next,
        radius: sigma_next / r,
        sigma_next,
        wide,
    }
}
