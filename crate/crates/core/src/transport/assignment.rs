//! Shortest augmenting path assignment over a dense `f64` cost matrix.

use std::collections::VecDeque;

use super::{assignment_cost, Assignment, CostMatrix, DualPotentials};

/// Solves the square assignment problem, then moves to the lexicographically smallest
/// permutation inside the equality subgraph of the optimal duals (every perfect
/// matching there is optimal).
///
/// Panics if the matrix is not square.
pub fn solve_assignment_matrix(cost: &CostMatrix) -> (Assignment, DualPotentials) {
    assert_eq!(
        cost.rows(),
        cost.cols(),
        "assignment needs a square cost matrix"
    );
    let n = cost.rows();
    if n == 0 {
        return (
            Assignment {
                n,
                perm: Vec::new(),
                cost: 0.0,
            },
            DualPotentials {
                phi: Vec::new(),
                psi: Vec::new(),
            },
        );
    }
    let (mut perm, phi, psi) = shortest_augmenting_path(cost);
    let tol = 1e-12 * cost.max_abs().max(1.0);
    lexicographic_refine(cost, &phi, &psi, &mut perm, tol);
    let total = assignment_cost(cost, &perm);
    (
        Assignment {
            n,
            perm,
            cost: total,
        },
        DualPotentials::normalized(phi, psi),
    )
}

/// Dense O(n^3) primal-dual method: rows are inserted one by one, each followed by a
/// Dijkstra-like search for the shortest augmenting path in reduced costs.
fn shortest_augmenting_path(cost: &CostMatrix) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    let n = cost.rows();
    // 1-based with a virtual column 0, as in the classical formulation.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0f64; n + 1];
    let mut used = vec![false; n + 1];

    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0usize;
        minv.iter_mut().for_each(|m| *m = f64::INFINITY);
        used.iter_mut().for_each(|b| *b = false);
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let row = cost.row(i0 - 1);
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = row[j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut perm = vec![0usize; n];
    for j in 1..=n {
        perm[owner[j] - 1] = j - 1;
    }
    (perm, u[1..].to_vec(), v[1..].to_vec())
}

/// Walks rows in order and, for each, swaps in the smallest tight column that still
/// admits a perfect matching of the remaining rows on tight edges.
fn lexicographic_refine(cost: &CostMatrix, phi: &[f64], psi: &[f64], perm: &mut [usize], tol: f64) {
    let n = perm.len();
    let tight = |i: usize, j: usize| cost.get(i, j) - phi[i] - psi[j] <= tol;
    let mut owner = vec![0usize; n];
    for (i, &j) in perm.iter().enumerate() {
        owner[j] = i;
    }
    let mut col_locked = vec![false; n];
    let mut row_seen = vec![false; n];
    let mut col_seen = vec![false; n];
    let mut parent_col = vec![usize::MAX; n];

    for i in 0..n {
        let current = perm[i];
        for j in 0..current {
            if col_locked[j] || !tight(i, j) {
                continue;
            }
            // Row `r` loses column `j` to row `i`; look for an alternating path from `r`
            // that ends in the column `i` releases.
            let r = owner[j];
            row_seen.iter_mut().for_each(|b| *b = false);
            col_seen.iter_mut().for_each(|b| *b = false);
            row_seen[i] = true;
            row_seen[r] = true;
            col_seen[j] = true;
            let mut queue = VecDeque::from([r]);
            let mut found = None;
            'search: while let Some(row) = queue.pop_front() {
                for c in 0..n {
                    if col_seen[c] || col_locked[c] || !tight(row, c) {
                        continue;
                    }
                    col_seen[c] = true;
                    parent_col[c] = row;
                    if c == current {
                        found = Some(c);
                        break 'search;
                    }
                    let next = owner[c];
                    if !row_seen[next] {
                        row_seen[next] = true;
                        queue.push_back(next);
                    }
                }
            }
            if let Some(mut c) = found {
                // Rematch along the path back to `r`.
                loop {
                    let row = parent_col[c];
                    let prev = perm[row];
                    perm[row] = c;
                    owner[c] = row;
                    if row == r {
                        break;
                    }
                    c = prev;
                }
                perm[i] = j;
                owner[j] = i;
                break;
            }
        }
        col_locked[perm[i]] = true;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force(cost: &CostMatrix) -> f64 {
        fn rec(cost: &CostMatrix, row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
            if row == cost.rows() {
                *best = best.min(acc);
                return;
            }
            for j in 0..cost.cols() {
                if !used[j] {
                    used[j] = true;
                    rec(cost, row + 1, used, acc + cost.get(row, j), best);
                    used[j] = false;
                }
            }
        }
        let mut best = f64::INFINITY;
        rec(cost, 0, &mut vec![false; cost.cols()], 0.0, &mut best);
        best
    }

    #[test]
    fn integer_matrix_matches_enumeration() {
        let raw = [
            [7.0, 3.0, 9.0, 4.0],
            [2.0, 8.0, 5.0, 6.0],
            [4.0, 4.0, 1.0, 8.0],
            [9.0, 2.0, 6.0, 3.0],
        ];
        let cost = CostMatrix::from_fn(4, 4, |i, j| raw[i][j]);
        let (a, d) = solve_assignment_matrix(&cost);
        assert_eq!(a.cost, brute_force(&cost));
        assert_eq!(d.psi[0], 0.0);
        assert!(d.certificate_violation(&cost, a.perm.iter().copied().enumerate()) < 1e-12);
    }

    #[test]
    fn refinement_prefers_small_columns_in_row_order() {
        // Every permutation is optimal.
        let cost = CostMatrix::from_fn(5, 5, |_, _| 1.0);
        let (a, _) = solve_assignment_matrix(&cost);
        assert_eq!(a.perm, vec![0, 1, 2, 3, 4]);
        // Only rows 0 and 1 can swap.
        let cost = CostMatrix::from_fn(3, 3, |i, j| match (i, j) {
            (0, 0) | (0, 1) | (1, 0) | (1, 1) => 0.0,
            (2, 2) => 0.0,
            _ => 5.0,
        });
        let (a, _) = solve_assignment_matrix(&cost);
        assert_eq!(a.perm, vec![0, 1, 2]);
    }

    #[test]
    fn empty_matrix() {
        let (a, _) = solve_assignment_matrix(&CostMatrix::from_fn(0, 0, |_, _| 0.0));
        assert!(a.perm.is_empty());
    }
}
