//! Exact linear assignment on small dense square matrices.

/// Minimum-cost perfect matching of an `n x n` cost matrix (row-major).
/// Returns `(assignment, cost)` with `assignment[row] = column`.
///
/// Shortest augmenting path with row/column potentials, O(n^3).
pub fn min_cost_assignment(cost: &[f64], n: usize) -> (Vec<usize>, f64) {
    assert_eq!(cost.len(), n * n, "cost matrix must be n x n");
    if n == 0 {
        return (Vec::new(), 0.0);
    }
    let c = |i: usize, j: usize| cost[(i - 1) * n + (j - 1)];
    // 1-based; index 0 is the virtual source column.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut matched_row = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for row in 1..=n {
        matched_row[0] = row;
        let mut j0 = 0;
        let mut min_v = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let reduced = c(i0, j) - u[i0] - v[j];
                if reduced < min_v[j] {
                    min_v[j] = reduced;
                    way[j] = j0;
                }
                if min_v[j] < delta {
                    delta = min_v[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_v[j] -= delta;
                }
            }
            j0 = j1;
            if matched_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[matched_row[j] - 1] = j - 1;
    }
    let total = assignment.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum();
    (assignment, total)
}

/// Maximum-weight assignment. Among assignments whose total is within
/// `tol` of the optimum, returns the lexicographically smallest.
pub fn max_weight_assignment(weights: &[f64], n: usize, tol: f64) -> (Vec<usize>, f64) {
    let negated: Vec<f64> = weights.iter().map(|w| -w).collect();
    let (_, neg_best) = min_cost_assignment(&negated, n);
    let best = -neg_best;

    let mut assignment = Vec::with_capacity(n);
    let mut free_cols: Vec<usize> = (0..n).collect();
    let mut fixed = 0.0;
    for row in 0..n {
        let rest_rows = n - row - 1;
        let mut chosen = None;
        for (k, &col) in free_cols.iter().enumerate() {
            let remaining: Vec<usize> = free_cols.iter().copied().filter(|&c| c != col).collect();
            let sub: Vec<f64> =
                (row + 1..n).flat_map(|r| remaining.iter().map(move |&c| -weights[r * n + c])).collect();
            let (_, sub_cost) = min_cost_assignment(&sub, rest_rows);
            let total = fixed + weights[row * n + col] - sub_cost;
            if total >= best - tol {
                chosen = Some((k, col));
                break;
            }
        }
        // The optimal column always passes the check; fall back to it only on
        // pathological rounding.
        let (k, col) = chosen.unwrap_or((0, free_cols[0]));
        fixed += weights[row * n + col];
        assignment.push(col);
        free_cols.remove(k);
    }
    let total = assignment.iter().enumerate().map(|(i, &j)| weights[i * n + j]).sum();
    (assignment, total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force_max(w: &[f64], n: usize) -> f64 {
        fn rec(w: &[f64], n: usize, row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
            if row == n {
                *best = best.max(acc);
                return;
            }
            for c in 0..n {
                if !used[c] {
                    used[c] = true;
                    rec(w, n, row + 1, used, acc + w[row * n + c], best);
                    used[c] = false;
                }
            }
        }
        let mut best = f64::NEG_INFINITY;
        rec(w, n, 0, &mut vec![false; n], 0.0, &mut best);
        best
    }

    #[test]
    fn two_by_two_swap() {
        let (a, t) = max_weight_assignment(&[0.1, 0.9, 0.8, 0.2], 2, 1e-12);
        assert_eq!(a, vec![1, 0]);
        assert!((t - 1.7).abs() < 1e-15);
    }

    #[test]
    fn ties_pick_lexicographically_smallest() {
        let w = vec![1.0; 9];
        assert_eq!(max_weight_assignment(&w, 3, 1e-12).0, vec![0, 1, 2]);
        let w = [0.0, 1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0];
        assert_eq!(max_weight_assignment(&w, 3, 1e-12).0, vec![1, 2, 0]);
    }

    #[test]
    fn min_cost_matches_brute_force() {
        let mut state = 12345u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for n in 1..=6 {
            for _ in 0..20 {
                let w: Vec<f64> = (0..n * n).map(|_| next()).collect();
                let (_, t) = max_weight_assignment(&w, n, 1e-12);
                assert!((t - brute_force_max(&w, n)).abs() < 1e-12);
            }
        }
    }
}
