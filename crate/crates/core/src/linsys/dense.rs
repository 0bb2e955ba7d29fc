use faer::Mat;

use super::{SmallestPairs, SparseSystem};

/// Rows folded into the triangular factor per QR step.
const ROW_BLOCK: usize = 2048;

/// Full spectrum of `b`, smallest first.
///
/// Tall systems are first reduced to their `n x n` triangular factor by a
/// blocked QR (stacking the running factor on the next block of rows), so the
/// working set stays `O(n^2)` no matter how many pairwise rows there are.
pub(super) fn smallest_pairs(b: &SparseSystem) -> SmallestPairs {
    let n = b.ncols();
    let m = b.nrows();
    if m == 0 {
        return SmallestPairs {
            sigmas: vec![0.0; n],
            vectors: (0..n).rev().map(|p| unit(n, p)).collect(),
            sigma_max: 0.0,
            complete: true,
        };
    }

    let (s, v) = if m >= n {
        let r = triangular_factor(b);
        let svd = r.svd().expect("svd of a finite matrix");
        let s: Vec<f64> = (0..n).map(|i| svd.S()[i]).collect();
        (s, svd.V().to_owned())
    } else {
        let dense = to_dense(b, 0..m);
        let svd = dense.svd().expect("svd of a finite matrix");
        let mut s: Vec<f64> = (0..m).map(|i| svd.S()[i]).collect();
        s.resize(n, 0.0);
        (s, svd.V().to_owned())
    };

    let sigma_max = s[0];
    SmallestPairs {
        sigmas: s.iter().rev().copied().collect(),
        vectors: (0..n)
            .rev()
            .map(|c| (0..n).map(|i| v[(i, c)]).collect())
            .collect(),
        sigma_max,
        complete: true,
    }
}

fn unit(n: usize, p: usize) -> Vec<f64> {
    let mut e = vec![0.0; n];
    e[p] = 1.0;
    e
}

fn to_dense(b: &SparseSystem, rows: std::ops::Range<usize>) -> Mat<f64> {
    let start = rows.start;
    let mut out = Mat::<f64>::zeros(rows.len(), b.ncols());
    for r in rows {
        let (c, v) = b.row(r);
        for (&c, &v) in c.iter().zip(v) {
            out[(r - start, c)] = v;
        }
    }
    out
}

/// `R` with `B = Q R`, computed over row blocks. Singular values of `R` equal
/// those of `B`.
fn triangular_factor(b: &SparseSystem) -> Mat<f64> {
    let n = b.ncols();
    let m = b.nrows();
    let block = ROW_BLOCK.max(2 * n);
    let first = block.min(m);
    let mut r = to_dense(b, 0..first).qr().thin_R().to_owned();
    let mut next = first;
    while next < m {
        let end = (next + block).min(m);
        let chunk = to_dense(b, next..end);
        let mut stacked = Mat::<f64>::zeros(r.nrows() + chunk.nrows(), n);
        for j in 0..n {
            for i in 0..r.nrows() {
                stacked[(i, j)] = r[(i, j)];
            }
            for i in 0..chunk.nrows() {
                stacked[(r.nrows() + i, j)] = chunk[(i, j)];
            }
        }
        r = stacked.qr().thin_R().to_owned();
        next = end;
    }
    r
}
