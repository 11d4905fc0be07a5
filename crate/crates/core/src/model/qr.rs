//! Rank-revealing Householder QR with column pivoting.
//!
//! Only the pivot sequence is needed here (which columns are kept, in what
//! order, and with what diagonal magnitude), so `Q` is never formed.

use nalgebra::DMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct PivotedQr {
    /// Original indices of the retained columns, in pivot order.
    pub order: Vec<usize>,
    /// `|R_kk|` for each retained column.
    pub pivots: Vec<f64>,
    /// Original indices of columns judged linearly dependent, ascending.
    pub dropped: Vec<usize>,
}

impl PivotedQr {
    pub fn rank(&self) -> usize {
        self.order.len()
    }
}

/// Column-pivoted QR of `a`.
///
/// Columns listed in `pinned` are pivoted first, in the given order; after
/// that the remaining column with the largest residual norm is chosen
/// (earliest index on ties). A column whose residual norm is at most
/// `rel_tol` times the largest pivot accepted so far is dropped.
pub fn pivoted_qr(a: &DMatrix<f64>, pinned: &[usize], rel_tol: f64) -> PivotedQr {
    let (n, p) = a.shape();
    let mut work = a.clone();
    let mut remaining: Vec<usize> = (0..p).collect();
    let mut order = Vec::new();
    let mut pivots = Vec::new();
    let mut dropped = Vec::new();
    let mut max_pivot: f64 = 0.0;
    let mut pinned_iter = pinned.iter().copied();
    let mut row = 0usize;

    let residual_norm = |work: &DMatrix<f64>, col: usize, row: usize| -> f64 {
        work.view((row, col), (n - row, 1)).norm()
    };

    while !remaining.is_empty() {
        if row >= n {
            dropped.append(&mut remaining);
            break;
        }
        let (pos, norm, from_pin) = if let Some(c) = pinned_iter.next() {
            let pos = match remaining.iter().position(|&r| r == c) {
                Some(pos) => pos,
                None => continue,
            };
            (pos, residual_norm(&work, c, row), true)
        } else {
            let mut best = 0usize;
            let mut best_norm = f64::NEG_INFINITY;
            for (pos, &c) in remaining.iter().enumerate() {
                let nrm = residual_norm(&work, c, row);
                if nrm > best_norm {
                    best_norm = nrm;
                    best = pos;
                }
            }
            (best, best_norm, false)
        };
        let col = remaining[pos];
        if norm == 0.0 || norm <= rel_tol * max_pivot {
            if from_pin {
                dropped.push(remaining.remove(pos));
                continue;
            }
            // Largest remaining residual is negligible: everything left is dependent.
            dropped.append(&mut remaining);
            break;
        }
        remaining.remove(pos);
        max_pivot = max_pivot.max(norm);
        order.push(col);
        pivots.push(norm);

        // Householder reflector zeroing work[row+1.., col].
        let x0 = work[(row, col)];
        let alpha = if x0 >= 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (row..n).map(|i| work[(i, col)]).collect();
        v[0] -= alpha;
        let vtv: f64 = v.iter().map(|x| x * x).sum();
        if vtv > 0.0 {
            for &c in &remaining {
                let dot: f64 = (row..n).zip(&v).map(|(i, vi)| work[(i, c)] * vi).sum();
                let f = 2.0 * dot / vtv;
                for (i, vi) in (row..n).zip(&v) {
                    work[(i, c)] -= f * vi;
                }
            }
        }
        work[(row, col)] = alpha;
        for i in row + 1..n {
            work[(i, col)] = 0.0;
        }
        row += 1;
    }
    dropped.sort_unstable();
    PivotedQr {
        order,
        pivots,
        dropped,
    }
}
