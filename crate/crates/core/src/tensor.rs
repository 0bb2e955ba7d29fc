//! Partially observed tensors and their mode-k flattenings.
//!
//! Coordinates and mode numbers are 1-based throughout the public API, so a
//! third-order tensor has modes `1..=3` and index `(1, 2, 3)` is the entry
//! with first coordinate 1. Observed entries live in a sorted map, which makes
//! iteration order (and everything built from it) deterministic.

use std::collections::btree_map::{self, BTreeMap};
use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A full multi-index `(i_1, ..., i_m)`, 1-based.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(Vec<usize>);

impl MultiIndex {
    pub fn new(coords: Vec<usize>) -> Self {
        MultiIndex(coords)
    }

    pub fn coords(&self) -> &[usize] {
        &self.0
    }

    pub fn order(&self) -> usize {
        self.0.len()
    }

    /// Coordinate along `mode` (1-based).
    pub fn coord(&self, mode: usize) -> usize {
        self.0[mode - 1]
    }

    /// Drops the coordinate of `mode`, keeping the others in mode order.
    pub fn without(&self, mode: usize) -> ReducedIndex {
        let mut coords = Vec::with_capacity(self.0.len().saturating_sub(1));
        coords.extend_from_slice(&self.0[..mode - 1]);
        coords.extend_from_slice(&self.0[mode..]);
        ReducedIndex {
            coords,
            dropped_mode: mode,
        }
    }

    pub fn into_inner(self) -> Vec<usize> {
        self.0
    }

    fn check(&self, dims: &[usize]) -> Result<()> {
        if self.0.len() != dims.len() {
            return Err(Error::arg(format!(
                "index {self} has {} coordinates, tensor order is {}",
                self.0.len(),
                dims.len()
            )));
        }
        for (t, (&i, &n)) in self.0.iter().zip(dims).enumerate() {
            if i == 0 || i > n {
                return Err(Error::arg(format!(
                    "index {self}: coordinate {i} of mode {} outside 1..={n}",
                    t + 1
                )));
            }
        }
        Ok(())
    }
}

impl From<Vec<usize>> for MultiIndex {
    fn from(v: Vec<usize>) -> Self {
        MultiIndex(v)
    }
}

impl From<&[usize]> for MultiIndex {
    fn from(v: &[usize]) -> Self {
        MultiIndex(v.to_vec())
    }
}

impl<const N: usize> From<[usize; N]> for MultiIndex {
    fn from(v: [usize; N]) -> Self {
        MultiIndex(v.to_vec())
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_tuple(f, &self.0)
    }
}

fn write_tuple(f: &mut fmt::Formatter<'_>, coords: &[usize]) -> fmt::Result {
    f.write_str("(")?;
    for (n, c) in coords.iter().enumerate() {
        if n > 0 {
            f.write_str(",")?;
        }
        write!(f, "{c}")?;
    }
    f.write_str(")")
}

/// A multi-index with one mode removed, used as a row label of a flattening.
///
/// Ordering is lexicographic on the surviving coordinates.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct ReducedIndex {
    coords: Vec<usize>,
    dropped_mode: usize,
}

impl ReducedIndex {
    pub fn new(coords: Vec<usize>, dropped_mode: usize) -> Self {
        ReducedIndex {
            coords,
            dropped_mode,
        }
    }

    pub fn coords(&self) -> &[usize] {
        &self.coords
    }

    pub fn dropped_mode(&self) -> usize {
        self.dropped_mode
    }

    /// Re-inserts coordinate `j` at the dropped mode.
    pub fn expand(&self, j: usize) -> MultiIndex {
        let k = self.dropped_mode;
        let mut coords = Vec::with_capacity(self.coords.len() + 1);
        coords.extend_from_slice(&self.coords[..k - 1]);
        coords.push(j);
        coords.extend_from_slice(&self.coords[k - 1..]);
        MultiIndex(coords)
    }

    /// The same coordinates read as a full index of the order-(m-1) tensor.
    pub fn to_multi_index(&self) -> MultiIndex {
        MultiIndex(self.coords.clone())
    }
}

impl fmt::Display for ReducedIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_tuple(f, &self.coords)
    }
}

/// Real tensor observed on a finite index set.
///
/// Serializes as `{"dims": [...], "entries": [{"idx": [...], "val": x}, ...]}`
/// with 1-based indices; deserialization applies the same checks as
/// [`PartialTensor::insert`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TensorRepr", into = "TensorRepr")]
pub struct PartialTensor {
    dims: Vec<usize>,
    entries: BTreeMap<MultiIndex, f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorRepr {
    dims: Vec<usize>,
    entries: Vec<EntryRepr>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntryRepr {
    idx: Vec<usize>,
    val: f64,
}

impl TryFrom<TensorRepr> for PartialTensor {
    type Error = Error;

    fn try_from(r: TensorRepr) -> Result<Self> {
        PartialTensor::from_entries(r.dims, r.entries.into_iter().map(|e| (e.idx, e.val)))
    }
}

impl From<PartialTensor> for TensorRepr {
    fn from(t: PartialTensor) -> Self {
        TensorRepr {
            dims: t.dims,
            entries: t
                .entries
                .into_iter()
                .map(|(idx, val)| EntryRepr {
                    idx: idx.into_inner(),
                    val,
                })
                .collect(),
        }
    }
}

impl PartialTensor {
    /// An order-`dims.len()` tensor with nothing observed.
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::arg("tensor order must be at least 1"));
        }
        if let Some(t) = dims.iter().position(|&n| n == 0) {
            return Err(Error::arg(format!("mode {} has size 0", t + 1)));
        }
        Ok(PartialTensor {
            dims,
            entries: BTreeMap::new(),
        })
    }

    /// Builds a tensor from `(index, value)` pairs. Duplicate indices are an
    /// error rather than last-wins.
    pub fn from_entries<I, M>(dims: Vec<usize>, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (M, f64)>,
        M: Into<MultiIndex>,
    {
        let mut t = PartialTensor::new(dims)?;
        for (idx, val) in entries {
            t.insert(idx, val)?;
        }
        Ok(t)
    }

    pub fn insert(&mut self, idx: impl Into<MultiIndex>, value: f64) -> Result<()> {
        let idx = idx.into();
        idx.check(&self.dims)?;
        if !value.is_finite() {
            return Err(Error::arg(format!("entry {idx} is not finite")));
        }
        match self.entries.entry(idx) {
            btree_map::Entry::Occupied(e) => {
                Err(Error::arg(format!("duplicate index {}", e.key())))
            }
            btree_map::Entry::Vacant(e) => {
                e.insert(value);
                Ok(())
            }
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    /// Number of observed entries, `|Omega|`.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, idx: &MultiIndex) -> Option<f64> {
        self.entries.get(idx).copied()
    }

    pub fn contains(&self, idx: &MultiIndex) -> bool {
        self.entries.contains_key(idx)
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = (&MultiIndex, f64)> + '_ {
        self.entries.iter().map(|(k, &v)| (k, v))
    }

    pub fn indices(&self) -> impl ExactSizeIterator<Item = &MultiIndex> + '_ {
        self.entries.keys()
    }

    pub fn values(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        self.entries.values().copied()
    }

    /// Same observation set, values transformed entrywise.
    pub fn map_values(&self, mut f: impl FnMut(&MultiIndex, f64) -> f64) -> PartialTensor {
        PartialTensor {
            dims: self.dims.clone(),
            entries: self
                .entries
                .iter()
                .map(|(k, &v)| (k.clone(), f(k, v)))
                .collect(),
        }
    }

    pub fn scaled(&self, c: f64) -> PartialTensor {
        self.map_values(|_, v| c * v)
    }

    /// Coordinates of `mode` that occur in some observed index.
    pub fn mode_projection(&self, mode: usize) -> BTreeSet<usize> {
        self.entries.keys().map(|idx| idx.coord(mode)).collect()
    }

    /// Square root of the sum of squared observed entries.
    pub fn omega_norm(&self) -> f64 {
        self.entries.values().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `|| A - u_1 (x) ... (x) u_m ||` restricted to the observed entries.
    pub fn residual_on_omega<V: AsRef<[f64]>>(&self, factors: &[V]) -> Result<f64> {
        check_factors(&self.dims, factors)?;
        let sum: f64 = self
            .entries
            .iter()
            .map(|(idx, &v)| {
                let d = v - outer_entry(factors, idx);
                d * d
            })
            .sum();
        Ok(sum.sqrt())
    }

    /// The `mode`-th flattening restricted to observed entries.
    pub fn flatten(&self, mode: usize) -> Result<FlattenedView> {
        let m = self.order();
        if m < 2 {
            return Err(Error::arg("flattening needs a tensor of order at least 2"));
        }
        if mode == 0 || mode > m {
            return Err(Error::arg(format!("mode {mode} outside 1..={m}")));
        }
        let keyed: Vec<(ReducedIndex, usize, f64)> = self
            .entries
            .iter()
            .map(|(idx, &v)| (idx.without(mode), idx.coord(mode), v))
            .collect();
        let row_labels: Vec<ReducedIndex> = keyed
            .iter()
            .map(|(r, _, _)| r.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let col_labels: Vec<usize> = keyed
            .iter()
            .map(|&(_, j, _)| j)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let mut entries: Vec<FlatEntry> = keyed
            .into_iter()
            .map(|(r, col, value)| FlatEntry {
                row: row_labels.binary_search(&r).expect("label collected above"),
                col,
                value,
            })
            .collect();
        entries.sort_by_key(|e| (e.col, e.row));
        Ok(FlattenedView {
            base_dims: self.dims.clone(),
            mode,
            row_labels,
            col_labels,
            entries,
        })
    }
}

/// `(u_1)_{i_1} * ... * (u_m)_{i_m}`.
pub fn outer_entry<V: AsRef<[f64]>>(factors: &[V], idx: &MultiIndex) -> f64 {
    factors
        .iter()
        .zip(idx.coords())
        .map(|(u, &i)| u.as_ref()[i - 1])
        .product()
}

pub(crate) fn check_factors<V: AsRef<[f64]>>(dims: &[usize], factors: &[V]) -> Result<()> {
    if factors.len() != dims.len() {
        return Err(Error::arg(format!(
            "expected {} factor vectors, got {}",
            dims.len(),
            factors.len()
        )));
    }
    for (t, (u, &n)) in factors.iter().zip(dims).enumerate() {
        if u.as_ref().len() != n {
            return Err(Error::arg(format!(
                "factor {} has length {}, mode size is {n}",
                t + 1,
                u.as_ref().len()
            )));
        }
    }
    Ok(())
}

/// One observed entry of a flattening.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlatEntry {
    /// Position of the row label in [`FlattenedView::row_labels`].
    pub row: usize,
    /// Mode-k coordinate (1-based).
    pub col: usize,
    pub value: f64,
}

/// The partially observed matrix obtained by flattening along one mode.
///
/// Row labels are the sorted reduced indices that occur, column labels the
/// sorted mode coordinates that occur. Entries are sorted by column, then row.
#[derive(Clone, Debug, PartialEq)]
pub struct FlattenedView {
    base_dims: Vec<usize>,
    mode: usize,
    row_labels: Vec<ReducedIndex>,
    col_labels: Vec<usize>,
    entries: Vec<FlatEntry>,
}

impl FlattenedView {
    pub fn base_dims(&self) -> &[usize] {
        &self.base_dims
    }

    pub fn mode(&self) -> usize {
        self.mode
    }

    pub fn row_labels(&self) -> &[ReducedIndex] {
        &self.row_labels
    }

    pub fn col_labels(&self) -> &[usize] {
        &self.col_labels
    }

    pub fn entries(&self) -> &[FlatEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Dimensions of the order-(m-1) tensor that the row labels index.
    pub fn reduced_dims(&self) -> Vec<usize> {
        let mut d = self.base_dims.clone();
        d.remove(self.mode - 1);
        d
    }

    /// Number of rows of the full flattening, `prod_{l != k} n_l`, saturating.
    pub fn full_row_count(&self) -> usize {
        self.reduced_dims()
            .iter()
            .fold(1usize, |acc, &n| acc.saturating_mul(n))
    }

    pub fn get(&self, row: &ReducedIndex, col: usize) -> Option<f64> {
        let r = self.row_labels.binary_search(row).ok()?;
        self.entries
            .binary_search_by_key(&(col, r), |e| (e.col, e.row))
            .ok()
            .map(|p| self.entries[p].value)
    }

    pub fn scaled(&self, c: f64) -> FlattenedView {
        let mut out = self.clone();
        for e in &mut out.entries {
            e.value *= c;
        }
        out
    }

    /// Entries grouped by column: `(j, entries with mode coordinate j)`.
    pub fn column_groups(&self) -> impl Iterator<Item = (usize, &[FlatEntry])> + '_ {
        self.entries
            .chunk_by(|a, b| a.col == b.col)
            .map(|g| (g[0].col, g))
    }

    /// Reads `x` (one value per row label, in label order) as a partially
    /// observed tensor of order m-1 observed exactly on the row labels.
    pub fn reshape_solution(&self, x: &[f64]) -> Result<PartialTensor> {
        if x.len() != self.row_labels.len() {
            return Err(Error::arg(format!(
                "solution has {} values, flattening has {} row labels",
                x.len(),
                self.row_labels.len()
            )));
        }
        let dims = self.reduced_dims();
        if dims.is_empty() {
            return Err(Error::arg(
                "cannot reshape the flattening of an order-1 tensor",
            ));
        }
        Ok(PartialTensor {
            dims,
            entries: self
                .row_labels
                .iter()
                .zip(x)
                .map(|(r, &v)| (r.to_multi_index(), v))
                .collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn seven_row() -> PartialTensor {
        PartialTensor::from_entries(
            vec![3, 3, 3],
            [
                ([1, 1, 1], -1.0),
                ([2, 2, 1], -1.0),
                ([3, 1, 1], -1.0),
                ([1, 3, 2], 1.0),
                ([3, 1, 2], -1.0),
                ([2, 3, 3], 1.0),
                ([3, 1, 3], 1.0),
                ([3, 2, 3], -1.0),
            ],
        )
        .unwrap()
    }

    #[test]
    fn flatten_seven_row_mode_3_row_labels() {
        let view = seven_row().flatten(3).unwrap();
        let rows: Vec<Vec<usize>> = view
            .row_labels()
            .iter()
            .map(|r| r.coords().to_vec())
            .collect();
        assert_eq!(
            rows,
            vec![
                vec![1, 1],
                vec![1, 3],
                vec![2, 2],
                vec![2, 3],
                vec![3, 1],
                vec![3, 2]
            ]
        );
        assert_eq!(view.col_labels(), &[1, 2, 3]);
        assert_eq!(view.len(), 8);
    }

    #[test]
    fn flatten_matrix_along_last_mode_is_the_matrix() {
        let a =
            PartialTensor::from_entries(vec![2, 3], [([1, 2], 4.0), ([2, 3], -1.0), ([2, 1], 7.0)])
                .unwrap();
        let view = a.flatten(2).unwrap();
        for (idx, v) in a.iter() {
            let r = ReducedIndex::new(vec![idx.coord(1)], 2);
            assert_eq!(view.get(&r, idx.coord(2)), Some(v));
        }
        assert_eq!(view.col_labels(), &[1, 2, 3]);
        assert_eq!(view.row_labels().len(), 2);
    }

    #[test]
    fn flatten_diagonal_2x2_mode_1() {
        let a = PartialTensor::from_entries(vec![2, 2], [([1, 1], 2.0), ([2, 2], 5.0)]).unwrap();
        let view = a.flatten(1).unwrap();
        let r1 = ReducedIndex::new(vec![1], 1);
        let r2 = ReducedIndex::new(vec![2], 1);
        assert_eq!(view.row_labels(), &[r1.clone(), r2.clone()]);
        assert_eq!(view.col_labels(), &[1, 2]);
        assert_eq!(view.get(&r1, 1), Some(2.0));
        assert_eq!(view.get(&r2, 2), Some(5.0));
        assert_eq!(view.get(&r1, 2), None);
    }

    #[test]
    fn flatten_rejects_bad_mode() {
        let a = seven_row();
        assert!(a.flatten(0).is_err());
        assert!(a.flatten(4).is_err());
        let v = PartialTensor::from_entries(vec![3], [([1], 1.0)]).unwrap();
        assert!(v.flatten(1).is_err());
    }

    #[test]
    fn reshape_seven_row() {
        let view = seven_row().flatten(3).unwrap();
        let x = [-1.0, 1.0, -1.0, -1.0, -1.0, 1.0];
        let a = view.reshape_solution(&x).unwrap();
        assert_eq!(a.dims(), &[3, 3]);
        let expect = [
            ([1, 1], -1.0),
            ([1, 3], 1.0),
            ([2, 2], -1.0),
            ([2, 3], -1.0),
            ([3, 1], -1.0),
            ([3, 2], 1.0),
        ];
        assert_eq!(a.len(), expect.len());
        for (idx, v) in expect {
            assert_eq!(a.get(&idx.into()), Some(v));
        }
    }

    #[test]
    fn reshape_single_label() {
        let a = PartialTensor::from_entries(vec![2, 3, 4], [([2, 3, 1], 1.5), ([2, 3, 4], 2.0)])
            .unwrap();
        let view = a.flatten(3).unwrap();
        let t = view.reshape_solution(&[0.25]).unwrap();
        assert_eq!(t.dims(), &[2, 3]);
        assert_eq!(t.len(), 1);
        assert_eq!(t.get(&[2, 3].into()), Some(0.25));
    }

    #[test]
    fn reshape_rejects_label_mismatch() {
        let view = seven_row().flatten(3).unwrap();
        assert!(view.reshape_solution(&[1.0; 5]).is_err());
    }

    #[test]
    fn omega_norm_cases() {
        let e = PartialTensor::new(vec![2, 2]).unwrap();
        assert_eq!(e.omega_norm(), 0.0);
        let a = PartialTensor::from_entries(vec![2, 2], [([1, 1], 3.0), ([2, 1], 4.0)]).unwrap();
        assert_eq!(a.omega_norm(), 5.0);
    }

    #[test]
    fn residual_with_zero_factors_is_the_norm() {
        let a = seven_row();
        let zeros = vec![vec![0.0; 3]; 3];
        assert_eq!(a.residual_on_omega(&zeros).unwrap(), a.omega_norm());
        assert!(a.residual_on_omega(&zeros[..2]).is_err());
        assert!(a
            .residual_on_omega(&[vec![0.0; 3], vec![0.0; 3], vec![0.0; 2]])
            .is_err());
    }

    #[test]
    fn duplicates_and_bad_indices_are_rejected() {
        let mut a = PartialTensor::new(vec![2, 2]).unwrap();
        a.insert([1, 1], 1.0).unwrap();
        assert!(a.insert([1, 1], 2.0).is_err());
        assert!(a.insert([3, 1], 2.0).is_err());
        assert!(a.insert([0, 1], 2.0).is_err());
        assert!(a.insert([1, 1, 1], 2.0).is_err());
        assert!(a.insert([2, 2], f64::NAN).is_err());
        assert!(PartialTensor::new(vec![]).is_err());
        assert!(PartialTensor::new(vec![2, 0]).is_err());
    }

    #[test]
    fn reduced_index_expand_roundtrip() {
        let idx = MultiIndex::from([4, 5, 6, 7]);
        for k in 1..=4 {
            let r = idx.without(k);
            assert_eq!(r.expand(idx.coord(k)), idx);
        }
    }
}
