//! Structural predicates: extractability of a flattening, connectivity of the
//! observation pattern, mod-t fullness and recursive determinability.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::error::Result;
use crate::linsys::{build_system, smallest_singular, SolverOptions};
use crate::tensor::{FlattenedView, PartialTensor};
pub use crate::union_find::UnionFind;

/// Relative magnitude below which a nullvector entry counts as zero.
pub const ENTIRELY_NONZERO_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Extractability {
    pub extractable: bool,
    pub nullity: usize,
    pub sigma_min: f64,
    pub sigma_next: f64,
    pub gap: f64,
    pub nrows: usize,
    pub ncols: usize,
    /// Whether every entry of the computed nullvector is nonzero (relative to
    /// its largest entry).
    pub entirely_nonzero: bool,
    #[serde(skip)]
    pub null_vector: Vec<f64>,
}

/// True iff the pairwise-minor system of `view` has a one-dimensional
/// numerical nullspace.
pub fn is_extractable(view: &FlattenedView, opts: &SolverOptions) -> Result<Extractability> {
    let b = build_system(view);
    let t = smallest_singular(&b, opts)?;
    let nullity = if t.nullity_exact {
        t.nullity
    } else {
        crate::linsys::nullspace_dimension(&b, opts)?
    };
    let max = t.right_vector.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let entirely_nonzero = t
        .right_vector
        .iter()
        .all(|x| x.abs() > ENTIRELY_NONZERO_TOL * max);
    Ok(Extractability {
        extractable: nullity == 1,
        nullity,
        sigma_min: t.sigma_min,
        sigma_next: t.sigma_next,
        gap: t.gap,
        nrows: b.nrows(),
        ncols: b.ncols(),
        entirely_nonzero,
        null_vector: t.right_vector,
    })
}

/// Connectivity of the bipartite graph whose vertex sets are all row
/// indices and all column indices of the flattening and whose edges are the
/// observed entries. Unobserved rows or columns are isolated vertices, so
/// they make the graph disconnected.
pub fn bipartite_connected(view: &FlattenedView) -> bool {
    let n_cols = view.base_dims()[view.mode() - 1];
    if view.row_labels().len() != view.full_row_count() || view.col_labels().len() != n_cols {
        return false;
    }
    pattern_connected(view)
}

/// Connectivity of the observed pattern alone: vertices are the observed
/// row labels and column labels.
pub fn pattern_connected(view: &FlattenedView) -> bool {
    let rows = view.row_labels().len();
    let cols = view.col_labels();
    if rows == 0 {
        return false;
    }
    let mut uf = UnionFind::new(rows + cols.len());
    for e in view.entries() {
        let c = cols.binary_search(&e.col).expect("column label present");
        uf.union(e.row, rows + c);
    }
    uf.components() == 1
}

/// Connectivity of the m-partite observation graph: one vertex per
/// (mode, coordinate) pair for every coordinate in range, one hyperedge per
/// observed index. For matrices this is the usual bipartite row/column graph.
pub fn observation_graph_connected(a: &PartialTensor) -> bool {
    let offsets: Vec<usize> = a
        .dims()
        .iter()
        .scan(0usize, |acc, &n| {
            let o = *acc;
            *acc += n;
            Some(o)
        })
        .collect();
    let total: usize = a.dims().iter().sum();
    let mut uf = UnionFind::new(total);
    for idx in a.indices() {
        let first = offsets[0] + idx.coord(1) - 1;
        for t in 2..=a.order() {
            uf.union(first, offsets[t - 1] + idx.coord(t) - 1);
        }
    }
    uf.components() == 1
}

/// Every coordinate of `mode` occurs in some observed index.
pub fn is_mod_full(a: &PartialTensor, mode: usize) -> bool {
    mode >= 1 && mode <= a.order() && a.mode_projection(mode).len() == a.dims()[mode - 1]
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum HypothesisViolation {
    ModFullness { mode: usize, missing: Vec<usize> },
    ZeroEntry { index: Vec<usize> },
}

impl fmt::Display for HypothesisViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HypothesisViolation::ModFullness { mode, missing } => {
                write!(
                    f,
                    "mod-{mode} fullness violated (missing coordinates {missing:?})"
                )
            }
            HypothesisViolation::ZeroEntry { index } => {
                let s: Vec<String> = index.iter().map(|c| c.to_string()).collect();
                write!(f, "nonzero-entries violated at ({})", s.join(","))
            }
        }
    }
}

/// Hypotheses of the uniqueness guarantee that `a` fails: every mode must be
/// fully covered and no observed entry may be exactly zero.
pub fn verify_unique_completion_hypotheses(a: &PartialTensor) -> Vec<HypothesisViolation> {
    let mut out = Vec::new();
    for t in 1..=a.order() {
        let seen = a.mode_projection(t);
        if seen.len() != a.dims()[t - 1] {
            out.push(HypothesisViolation::ModFullness {
                mode: t,
                missing: (1..=a.dims()[t - 1])
                    .filter(|i| !seen.contains(i))
                    .collect(),
            });
        }
    }
    out.extend(a.iter().filter(|(_, v)| *v == 0.0).map(|(idx, _)| {
        HypothesisViolation::ZeroEntry {
            index: idx.coords().to_vec(),
        }
    }));
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct WitnessStep {
    /// Mode of the original tensor removed at this level.
    pub mode: usize,
    pub nullity: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub order: usize,
    pub extractable_per_mode: BTreeMap<usize, Extractability>,
    pub connected: bool,
    pub mod_full: BTreeMap<usize, bool>,
    pub nonzero_entries: bool,
    pub determinable: bool,
    pub witness_chain: Option<Vec<WitnessStep>>,
    pub violations: Vec<String>,
}

/// Recursive determinability with depth-first backtracking over modes,
/// tried in ascending order at every level.
///
/// At order 2 both orientations of the matrix are tried (mode 2 is the matrix
/// itself, mode 1 its transpose). At higher orders a mode qualifies when its
/// flattening is extractable and the reshaped nullvector is determinable.
pub fn is_determinable(a: &PartialTensor, opts: &SolverOptions) -> Result<AnalysisReport> {
    if a.order() < 2 {
        return Err(crate::Error::arg("determinability needs order at least 2"));
    }
    let mut extractable_per_mode = BTreeMap::new();
    for k in 1..=a.order() {
        extractable_per_mode.insert(k, is_extractable(&a.flatten(k)?, opts)?);
    }
    let modes: Vec<usize> = (1..=a.order()).collect();
    let witness_chain = search(a, &modes, opts, Some(&extractable_per_mode))?;
    Ok(AnalysisReport {
        order: a.order(),
        determinable: witness_chain.is_some(),
        witness_chain,
        extractable_per_mode,
        connected: observation_graph_connected(a),
        mod_full: (1..=a.order()).map(|t| (t, is_mod_full(a, t))).collect(),
        nonzero_entries: a.values().all(|v| v != 0.0),
        violations: verify_unique_completion_hypotheses(a)
            .iter()
            .map(|v| v.to_string())
            .collect(),
    })
}

/// `modes[l]` is the original mode number of local mode `l + 1`.
fn search(
    a: &PartialTensor,
    modes: &[usize],
    opts: &SolverOptions,
    cached: Option<&BTreeMap<usize, Extractability>>,
) -> Result<Option<Vec<WitnessStep>>> {
    for k in 1..=a.order() {
        let view = a.flatten(k)?;
        let ext = match cached.and_then(|c| c.get(&k)) {
            Some(e) => e.clone(),
            None => is_extractable(&view, opts)?,
        };
        if !ext.extractable {
            continue;
        }
        let step = WitnessStep {
            mode: modes[k - 1],
            nullity: ext.nullity,
        };
        if a.order() == 2 {
            return Ok(Some(vec![step]));
        }
        let reduced = view.reshape_solution(&ext.null_vector)?;
        let mut rest_modes = modes.to_vec();
        rest_modes.remove(k - 1);
        if let Some(mut chain) = search(&reduced, &rest_modes, opts, None)? {
            chain.insert(0, step);
            return Ok(Some(chain));
        }
    }
    Ok(None)
}
