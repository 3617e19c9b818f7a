//! Maximum-weight bipartite matching between reference and hypothesis speakers.

/// Hungarian algorithm on a square cost matrix; returns the column assigned to
/// each row.
fn hungarian_min(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    // 1-based potentials, column 0 is the virtual start.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut col0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let r0 = owner[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0;
            for col in 1..=n {
                if !used[col] {
                    let cur = cost[r0 - 1][col - 1] - u[r0] - v[col];
                    if cur < minv[col] {
                        minv[col] = cur;
                        way[col] = col0;
                    }
                    if minv[col] < delta {
                        delta = minv[col];
                        col1 = col;
                    }
                }
            }
            for col in 0..=n {
                if used[col] {
                    u[owner[col]] += delta;
                    v[col] -= delta;
                } else {
                    minv[col] -= delta;
                }
            }
            col0 = col1;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let col1 = way[col0];
            owner[col0] = owner[col1];
            col0 = col1;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for col in 1..=n {
        if owner[col] > 0 {
            assignment[owner[col] - 1] = col - 1;
        }
    }
    assignment
}

/// Best achievable total weight using only the given rows and columns.
fn best_value(weights: &[Vec<f64>], rows: &[usize], cols: &[usize]) -> f64 {
    if rows.is_empty() || cols.is_empty() {
        return 0.0;
    }
    let n = rows.len().max(cols.len());
    let max = rows
        .iter()
        .flat_map(|&r| cols.iter().map(move |&c| weights[r][c]))
        .fold(0.0, f64::max);
    let cost: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| match (rows.get(i), cols.get(j)) {
                    (Some(&r), Some(&c)) => max - weights[r][c],
                    _ => max,
                })
                .collect()
        })
        .collect();
    hungarian_min(&cost)
        .iter()
        .enumerate()
        .filter_map(|(i, &j)| match (rows.get(i), cols.get(j)) {
            (Some(&r), Some(&c)) => Some(weights[r][c]),
            _ => None,
        })
        .sum()
}

/// Injective row → column mapping maximizing the summed weight.
///
/// Among optimal mappings the lexicographically smallest is returned: row 0
/// takes the lowest column it can while staying optimal, then row 1, and so
/// on. Rows left over when there are more rows than columns map to `None`.
pub fn optimal_mapping(weights: &[Vec<f64>]) -> Vec<Option<usize>> {
    let nrows = weights.len();
    let ncols = weights.first().map_or(0, |r| r.len());
    let all_rows: Vec<usize> = (0..nrows).collect();
    let mut free_cols: Vec<usize> = (0..ncols).collect();
    let optimum = best_value(weights, &all_rows, &free_cols);
    let total: f64 = weights.iter().flatten().sum();
    let tol = 1e-9 * (1.0 + total);

    let mut mapping = vec![None; nrows];
    let mut fixed = 0.0;
    for row in 0..nrows {
        let rest: Vec<usize> = ((row + 1)..nrows).collect();
        let mut chosen = None;
        for (pos, &col) in free_cols.iter().enumerate() {
            let mut remaining = free_cols.clone();
            remaining.remove(pos);
            let value = fixed + weights[row][col] + best_value(weights, &rest, &remaining);
            if value >= optimum - tol {
                chosen = Some(pos);
                break;
            }
        }
        if let Some(pos) = chosen {
            let col = free_cols.remove(pos);
            fixed += weights[row][col];
            mapping[row] = Some(col);
        }
    }
    mapping
}

pub fn mapping_value(weights: &[Vec<f64>], mapping: &[Option<usize>]) -> f64 {
    mapping
        .iter()
        .enumerate()
        .filter_map(|(r, c)| c.map(|c| weights[r][c]))
        .sum()
}
