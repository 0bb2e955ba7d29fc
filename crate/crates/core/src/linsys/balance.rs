//! Diagonal equilibration of a pairwise-minor system.
//!
//! Entries of a flattening can span many orders of magnitude. Coordinates
//! whose equations all have tiny coefficients are then only weakly tied to
//! the rest, `sigma_{n-1}` collapses, and under noise the smallest singular
//! vector drifts onto those coordinates. Rescaling `x = D y` with `D` an
//! estimate of `|x|`, and normalizing every row, gives a system with the same
//! nullspace (mapped by `D`) whose coefficients are all of order one.

use std::collections::VecDeque;

use super::SparseSystem;

/// `R B D` with `D = diag(col_scale)` and `R` normalizing each row.
#[derive(Clone, Debug, PartialEq)]
pub struct Balanced {
    pub system: SparseSystem,
    pub col_scale: Vec<f64>,
}

impl Balanced {
    /// Maps a vector of the balanced system back: `x = D y`.
    pub fn unscale(&self, y: &[f64]) -> Vec<f64> {
        y.iter().zip(&self.col_scale).map(|(a, d)| a * d).collect()
    }
}

/// Estimates `|x|` by propagating the magnitude ratios `|x_q / x_p| =
/// |c_p / c_q|` of two-term rows along a breadth-first spanning forest, then
/// scales columns by it and rows to unit length. Each tree is normalized to
/// geometric mean one; unreached columns keep scale one.
pub fn equilibrate(b: &SparseSystem) -> Balanced {
    let n = b.ncols();
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); n];
    for r in 0..b.nrows() {
        let (c, v) = b.row(r);
        if c.len() == 2 && v[0] != 0.0 && v[1] != 0.0 {
            incident[c[0]].push(r);
            incident[c[1]].push(r);
        }
    }
    let mut log_scale = vec![0.0f64; n];
    let mut seen = vec![false; n];
    let mut queue = VecDeque::new();
    for root in 0..n {
        if seen[root] {
            continue;
        }
        seen[root] = true;
        queue.push_back(root);
        let mut tree = vec![root];
        while let Some(p) = queue.pop_front() {
            for &r in &incident[p] {
                let (c, v) = b.row(r);
                let (q, cp, cq) = if c[0] == p {
                    (c[1], v[0], v[1])
                } else {
                    (c[0], v[1], v[0])
                };
                if !seen[q] {
                    seen[q] = true;
                    log_scale[q] = log_scale[p] + (cp.abs() / cq.abs()).ln();
                    queue.push_back(q);
                    tree.push(q);
                }
            }
        }
        let mean = tree.iter().map(|&i| log_scale[i]).sum::<f64>() / tree.len() as f64;
        tree.iter().for_each(|&i| log_scale[i] -= mean);
    }
    let col_scale: Vec<f64> = log_scale.iter().map(|l| l.exp()).collect();

    let mut t = Vec::with_capacity(b.nnz());
    for r in 0..b.nrows() {
        let (c, v) = b.row(r);
        let norm = c
            .iter()
            .zip(v)
            .map(|(&j, &a)| (a * col_scale[j]).powi(2))
            .sum::<f64>()
            .sqrt();
        if norm > 0.0 {
            t.extend(
                c.iter()
                    .zip(v)
                    .map(|(&j, &a)| (r, j, a * col_scale[j] / norm)),
            );
        }
    }
    let system =
        SparseSystem::from_triplets(b.nrows(), n, &t).expect("entries are in range and finite");
    Balanced { system, col_scale }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minors(x: &[f64], b: &[f64], pairs: &[(usize, usize, usize)]) -> SparseSystem {
        // Row (p, q, j): a[p,j] x_q - a[q,j] x_p with a = x b^T.
        let t: Vec<(usize, usize, f64)> = pairs
            .iter()
            .enumerate()
            .flat_map(|(r, &(p, q, j))| [(r, q, x[p] * b[j]), (r, p, -x[q] * b[j])])
            .collect();
        SparseSystem::from_triplets(pairs.len(), x.len(), &t).unwrap()
    }

    #[test]
    fn scales_recover_magnitudes_on_a_tree() {
        let x = [1e-3, 2.0, -5.0, 4e2];
        let b = minors(&x, &[1.0, -3.0, 0.5], &[(0, 1, 0), (1, 2, 1), (1, 3, 2)]);
        let bal = equilibrate(&b);
        let ratio: Vec<f64> = bal
            .col_scale
            .iter()
            .zip(&x)
            .map(|(d, v)| d / v.abs())
            .collect();
        for r in &ratio {
            assert!((r / ratio[0] - 1.0).abs() < 1e-12, "{ratio:?}");
        }
        for r in 0..bal.system.nrows() {
            let (_, v) = bal.system.row(r);
            assert!((v.iter().map(|a| a * a).sum::<f64>() - 1.0).abs() < 1e-12);
            // Both coefficients have magnitude 1/sqrt(2) once balanced.
            assert!(v.iter().all(|a| (a.abs() - 0.5f64.sqrt()).abs() < 1e-12));
        }
    }

    #[test]
    fn nullspace_is_preserved() {
        let x = [0.3, -1e-4, 2.0, 7.0, -0.01];
        let b = minors(
            &x,
            &[2.0, 1.0],
            &[
                (0, 1, 0),
                (1, 2, 0),
                (0, 2, 0),
                (2, 3, 1),
                (3, 4, 1),
                (2, 4, 1),
            ],
        );
        let bal = equilibrate(&b);
        let y: Vec<f64> = x.iter().zip(&bal.col_scale).map(|(v, d)| v / d).collect();
        let res = bal.system.mul_vec(&y);
        assert!(res.iter().all(|r| r.abs() < 1e-12), "{res:?}");
        let back = bal.unscale(&y);
        for (a, v) in back.iter().zip(&x) {
            assert!((a - v).abs() < 1e-12 * v.abs().max(1.0));
        }
    }

    #[test]
    fn isolated_columns_keep_unit_scale() {
        let b = SparseSystem::from_triplets(1, 3, &[(0, 0, 2.0), (0, 1, -4.0)]).unwrap();
        let bal = equilibrate(&b);
        assert_eq!(bal.col_scale[2], 1.0);
        assert!((bal.col_scale[0] * bal.col_scale[1] - 1.0).abs() < 1e-12);
        assert!((bal.col_scale[1] / bal.col_scale[0] - 0.5).abs() < 1e-12);
    }
}
