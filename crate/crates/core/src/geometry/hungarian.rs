//! Minimum-cost rectangular assignment (Kuhn-Munkres with potentials).

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct AssignmentResult {
    /// `row_to_col[r]` is the column assigned to row `r`, if any.
    pub row_to_col: Vec<Option<usize>>,
    /// Sum of the selected entries, accumulated in row order.
    pub cost: f64,
}

impl AssignmentResult {
    pub fn empty(rows: usize) -> Self {
        Self {
            row_to_col: vec![None; rows],
            cost: 0.0,
        }
    }

    /// `(row, col)` pairs in increasing row order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.row_to_col
            .iter()
            .enumerate()
            .filter_map(|(r, c)| c.map(|c| (r, c)))
    }

    pub fn col_to_row(&self, cols: usize) -> Vec<Option<usize>> {
        let mut out = vec![None; cols];
        for (r, c) in self.pairs() {
            out[c] = Some(r);
        }
        out
    }
}

/// Solves `min Σ cost[r][σ(r)]` over injective assignments of `min(rows, cols)`
/// pairs. Rectangular inputs are handled by solving on the shorter side.
///
/// The search is deterministic: augmenting paths are grown from rows in
/// increasing order and the first minimum (lowest column index) wins ties.
pub fn hungarian(cost: &[Vec<f64>]) -> Result<AssignmentResult> {
    let rows = cost.len();
    let cols = cost.first().map_or(0, Vec::len);
    if cost.iter().any(|r| r.len() != cols) {
        return Err(Error::shape("hungarian", "ragged cost matrix"));
    }
    if cost.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Contract("hungarian requires finite costs".into()));
    }
    if rows == 0 || cols == 0 {
        return Ok(AssignmentResult::empty(rows));
    }

    let row_to_col = if rows <= cols {
        solve(rows, cols, |r, c| cost[r][c])
    } else {
        let col_to_row = solve(cols, rows, |r, c| cost[c][r]);
        let mut out = vec![None; rows];
        for (c, r) in col_to_row.into_iter().enumerate() {
            if let Some(r) = r {
                out[r] = Some(c);
            }
        }
        out
    };
    let cost_sum = row_to_col
        .iter()
        .enumerate()
        .filter_map(|(r, c)| c.map(|c| cost[r][c]))
        .sum();
    Ok(AssignmentResult {
        row_to_col,
        cost: cost_sum,
    })
}

/// Core solver for `n <= m`; every row is assigned.
fn solve(n: usize, m: usize, a: impl Fn(usize, usize) -> f64) -> Vec<Option<usize>> {
    // 1-based arrays; index 0 is the virtual source.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = a(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut out = vec![None; n];
    for j in 1..=m {
        if p[j] != 0 {
            out[p[j] - 1] = Some(j - 1);
        }
    }
    out
}
