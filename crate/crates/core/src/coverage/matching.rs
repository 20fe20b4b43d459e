//! Maximum-weight bipartite assignment with a lexicographic tie-break.

/// Weights closer than this are treated as equal when breaking ties.
pub const TIE_TOLERANCE: f64 = 1e-9;

/// Above this many cells the lexicographic refinement is skipped and the
/// plain assignment is returned.
const REFINE_LIMIT: usize = 900;

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `(row, column)` pairs in row order, zero-weight pairs included.
    pub pairs: Vec<(usize, usize)>,
    /// Sum of matched weights, accumulated in row order.
    pub total: f64,
}

/// Min-cost perfect assignment on a square matrix (potentials method).
/// Returns `col_of_row`.
fn hungarian_min(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
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
    let mut col_of_row = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            col_of_row[p[j] - 1] = j - 1;
        }
    }
    col_of_row
}

/// Square padded weights; `None` marks a forbidden cell.
fn solve_padded(w: &[Vec<Option<f64>>]) -> Vec<usize> {
    let n = w.len();
    let max = w.iter().flatten().flatten().fold(0.0f64, |a, &b| a.max(b));
    let big = (max + 1.0) * (n as f64 + 1.0) * 4.0;
    let cost: Vec<Vec<f64>> = w
        .iter()
        .map(|row| row.iter().map(|c| match c { Some(x) => max - x, None => big }).collect())
        .collect();
    hungarian_min(&cost)
}

fn padded_total(w: &[Vec<Option<f64>>], cols: &[usize]) -> f64 {
    cols.iter().enumerate().map(|(r, &c)| w[r][c].unwrap_or(f64::NEG_INFINITY)).sum()
}

/// Maximum-total-weight injective matching of rows to columns. Weights must
/// be finite and non-negative. Among optimal matchings the one whose pair
/// list is lexicographically smallest is returned.
pub fn max_weight_matching(weights: &[Vec<f64>]) -> Assignment {
    let rows = weights.len();
    let cols = weights.first().map(Vec::len).unwrap_or(0);
    if rows == 0 || cols == 0 {
        return Assignment { pairs: Vec::new(), total: 0.0 };
    }
    let n = rows.max(cols);
    // padding cells carry weight 0 and sort after every real column
    let mut w: Vec<Vec<Option<f64>>> = (0..n)
        .map(|r| (0..n).map(|c| Some(if r < rows && c < cols { weights[r][c] } else { 0.0 })).collect())
        .collect();
    let mut best = solve_padded(&w);
    let optimum = padded_total(&w, &best);

    if rows * cols <= REFINE_LIMIT {
        for r in 0..rows {
            for c in 0..n {
                let mut trial = w.clone();
                for (cc, cell) in trial[r].iter_mut().enumerate() {
                    if cc != c {
                        *cell = None;
                    }
                }
                for (rr, row) in trial.iter_mut().enumerate() {
                    if rr != r {
                        row[c] = None;
                    }
                }
                let cand = solve_padded(&trial);
                let feasible = cand.iter().enumerate().all(|(rr, &cc)| trial[rr][cc].is_some());
                if feasible && padded_total(&trial, &cand) >= optimum - TIE_TOLERANCE {
                    w = trial;
                    best = cand;
                    break;
                }
            }
        }
    }

    let pairs: Vec<(usize, usize)> = (0..rows).filter(|&r| best[r] < cols).map(|r| (r, best[r])).collect();
    let total = pairs.iter().map(|&(r, c)| weights[r][c]).sum();
    Assignment { pairs, total }
}
