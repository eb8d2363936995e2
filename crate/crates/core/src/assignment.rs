//! Optimal assignment between two index sets under a dense cost matrix.
//!
//! The solver runs the O(n^3) shortest-augmenting-path form of the
//! Hungarian algorithm on a square matrix obtained by padding the input
//! with zero-cost dummy rows or columns. Exactly `min(rows, cols)` real
//! pairs come back. Among all optimal assignments the lexicographically
//! smallest pair list is returned, which pins the output down completely
//! and keeps every downstream consumer deterministic.

use crate::error::{Error, Result};

/// Whether the objective is minimized or maximized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

/// Dense cost matrix; `costs[r][c]` is the cost of pairing row `r` with
/// column `c`. Rows and columns may differ in count.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    /// Build from row-major data. Every entry must be finite.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::input("cost matrix must have at least one row and one column"));
        }
        if data.len() != rows * cols {
            return Err(Error::input(format!(
                "cost matrix shape {rows}x{cols} expects {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::input(format!(
                "cost matrix entry ({}, {}) is not finite: {}",
                pos / cols,
                pos % cols,
                data[pos]
            )));
        }
        Ok(CostMatrix { rows, cols, data })
    }

    /// Build from nested rows; all rows must share one length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::input("cost matrix must have at least one row and one column"));
        }
        let cols = rows[0].len();
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::input("cost matrix rows have unequal lengths"));
        }
        let data: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::new(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }
}

/// An optimal assignment: `pairs` is sorted by row index and `objective` is
/// the sum of the original costs over those pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    pub pairs: Vec<(usize, usize)>,
    pub objective: f64,
}

/// Solve the assignment problem over `costs` in the given `sense`.
///
/// Rectangular matrices are padded internally with zero-cost dummies, so
/// exactly `min(rows, cols)` pairs are returned and the surplus side stays
/// unmatched. Ties between optimal assignments break toward the
/// lexicographically smallest pair list.
///
/// # Errors
///
/// Construction of [`CostMatrix`] has already rejected non-finite entries
/// and empty shapes, so this function itself cannot fail on a valid matrix;
/// it returns `Result` to keep call sites uniform with the constructors.
pub fn solve_assignment(costs: &CostMatrix, sense: Sense) -> Result<Matching> {
    let n = costs.rows;
    let m = costs.cols;
    let dim = n.max(m);

    // Minimize a padded square copy; maximization negates the real entries.
    // Dummy entries cost 0, which never beats a real pairing incorrectly
    // because every dummy row/column is interchangeable.
    let mut square = vec![0.0; dim * dim];
    for r in 0..n {
        for c in 0..m {
            let v = costs.at(r, c);
            square[r * dim + c] = match sense {
                Sense::Minimize => v,
                Sense::Maximize => -v,
            };
        }
    }

    let (row_to_col, u, v) = hungarian(&square, dim);
    let tight = tight_edges(&square, dim, &row_to_col, &u, &v);
    let lex = lexicographic_matching(&tight, dim, &row_to_col);

    let mut pairs = Vec::new();
    for r in 0..n {
        let c = lex[r];
        if c < m {
            pairs.push((r, c));
        }
    }
    let objective: f64 = pairs.iter().map(|&(r, c)| costs.at(r, c)).sum();
    Ok(Matching { pairs, objective })
}

/// Shortest-augmenting-path Hungarian on a dim x dim row-major matrix.
/// Returns the matching (row -> col) and the final dual potentials, which
/// satisfy u[r] + v[c] <= cost(r, c) with equality on matched edges.
fn hungarian(cost: &[f64], dim: usize) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    const UNSET: usize = usize::MAX;
    let mut u = vec![0.0; dim];
    // Column duals, with one sentinel slot at index `dim` for the virtual
    // start column of each augmenting search.
    let mut v = vec![0.0; dim + 1];
    // p[c] = row currently matched to column c; p[dim] holds the row being
    // inserted during a search.
    let mut p = vec![UNSET; dim + 1];

    for row in 0..dim {
        p[dim] = row;
        let mut j0 = dim;
        let mut min_slack = vec![f64::INFINITY; dim];
        let mut way = vec![dim; dim];
        let mut used = vec![false; dim + 1];

        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = UNSET;
            for j in 0..dim {
                if used[j] {
                    continue;
                }
                let reduced = cost[i0 * dim + j] - u[i0] - v[j];
                if reduced < min_slack[j] {
                    min_slack[j] = reduced;
                    way[j] = j0;
                }
                // Strict `<` over ascending j keeps tie handling fixed.
                if min_slack[j] < delta {
                    delta = min_slack[j];
                    j1 = j;
                }
            }
            debug_assert!(j1 != UNSET, "augmenting search ran out of columns");
            for j in 0..=dim {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_slack[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == UNSET {
                break;
            }
        }

        // Flip the alternating path back to the virtual column.
        while j0 != dim {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        }
    }

    let mut row_to_col = vec![UNSET; dim];
    for c in 0..dim {
        row_to_col[p[c]] = c;
    }
    let v_real = v[..dim].to_vec();
    (row_to_col, u, v_real)
}

/// Adjacency lists (per row, ascending columns) of edges whose reduced cost
/// is tight. The tolerance absorbs float drift in the duals; the optimal
/// matching's own edges are always included so a perfect tight matching
/// exists by construction.
fn tight_edges(cost: &[f64], dim: usize, row_to_col: &[usize], u: &[f64], v: &[f64]) -> Vec<Vec<usize>> {
    let max_abs = cost.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let mut eps = 1e-11 * (1.0 + max_abs);
    for r in 0..dim {
        let c = row_to_col[r];
        let rc = (cost[r * dim + c] - u[r] - v[c]).abs();
        if rc > eps {
            eps = rc;
        }
    }
    let mut adj = vec![Vec::new(); dim];
    for r in 0..dim {
        for c in 0..dim {
            if (cost[r * dim + c] - u[r] - v[c]).abs() <= eps {
                adj[r].push(c);
            }
        }
    }
    adj
}

/// Lexicographically smallest perfect matching within the tight subgraph.
///
/// Rows are fixed in ascending order; for each row we take the smallest
/// column that still leaves the remainder perfectly matchable. The test
/// "can edge (r, c) join some perfect matching" reduces to reachability of
/// `r` from `c`'s current partner along alternating paths.
fn lexicographic_matching(adj: &[Vec<usize>], dim: usize, row_to_col: &[usize]) -> Vec<usize> {
    let mut row_to_col = row_to_col.to_vec();
    let mut col_to_row = vec![usize::MAX; dim];
    for (r, &c) in row_to_col.iter().enumerate() {
        col_to_row[c] = r;
    }
    let mut fixed_col = vec![false; dim];

    for r in 0..dim {
        let current = row_to_col[r];
        for &c in &adj[r] {
            if fixed_col[c] {
                continue;
            }
            if c == current {
                break;
            }
            if c > current {
                break;
            }
            if rematch(adj, r, c, &mut row_to_col, &mut col_to_row, &fixed_col) {
                break;
            }
        }
        fixed_col[row_to_col[r]] = true;
    }
    row_to_col
}

/// Try to transform the matching so that row `r` pairs with column `c`,
/// leaving fixed columns untouched. Searches for an alternating path from
/// `c`'s partner back to `r` and flips it on success.
fn rematch(
    adj: &[Vec<usize>],
    r: usize,
    c: usize,
    row_to_col: &mut [usize],
    col_to_row: &mut [usize],
    fixed_col: &[bool],
) -> bool {
    let dim = adj.len();
    let displaced = col_to_row[c];
    debug_assert!(displaced != usize::MAX, "tight matching must be perfect");

    // Find an alternating path displaced -> ... -> (column of r), i.e. give
    // the displaced row a new column, possibly cascading, ending at the
    // column freed by moving r to c.
    let target_col = row_to_col[r];
    let mut visited = vec![false; dim];
    let mut via: Vec<(usize, usize)> = Vec::new(); // (row, new col) trail on success
    if search(adj, displaced, target_col, c, &mut visited, col_to_row, fixed_col, &mut via) {
        // Apply the trail, then the forced edge.
        for &(row, col) in &via {
            row_to_col[row] = col;
            col_to_row[col] = row;
        }
        row_to_col[r] = c;
        col_to_row[c] = r;
        true
    } else {
        false
    }
}

/// Depth-first alternating-path search: row `row` needs a column; it may
/// take any tight, unfixed column except `banned` (the one being claimed).
/// Reaching `target_col` (currently owned by the claiming row) succeeds.
#[allow(clippy::too_many_arguments)]
fn search(
    adj: &[Vec<usize>],
    row: usize,
    target_col: usize,
    banned: usize,
    visited: &mut [bool],
    col_to_row: &[usize],
    fixed_col: &[bool],
    via: &mut Vec<(usize, usize)>,
) -> bool {
    for &col in &adj[row] {
        if col == banned || fixed_col[col] || visited[col] {
            continue;
        }
        visited[col] = true;
        if col == target_col {
            via.push((row, col));
            return true;
        }
        let owner = col_to_row[col];
        debug_assert!(owner != usize::MAX);
        if search(adj, owner, target_col, banned, visited, col_to_row, fixed_col, via) {
            via.push((row, col));
            return true;
        }
    }
    false
}
