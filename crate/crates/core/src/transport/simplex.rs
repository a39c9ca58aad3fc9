//! Network simplex on the transportation problem between two uniform measures.
//!
//! Masses are scaled to integers (`m` units per source, `n` per target) so flows stay
//! exact; only costs and potentials are floating point.

use super::{CostMatrix, Coupling, CouplingEntry, DualPotentials};
use crate::points::KahanSum;

/// Consecutive degenerate pivots tolerated before switching to Bland's rule.
const DEGENERATE_SWITCH: usize = 32;

#[derive(Debug, Clone, Copy)]
struct BasicCell {
    row: usize,
    col: usize,
    flow: u64,
}

/// Optimal coupling for the cost matrix with uniform marginals `1/rows` and `1/cols`.
///
/// Panics on an empty matrix.
pub fn solve_transportation_matrix(cost: &CostMatrix) -> (Coupling, DualPotentials) {
    let n = cost.rows();
    let m = cost.cols();
    assert!(
        n > 0 && m > 0,
        "transportation needs a nonempty cost matrix"
    );
    let supply = vec![m as u64; n];
    let demand = vec![n as u64; m];
    let tol = 1e-12 * cost.max_abs().max(1.0);

    let mut basis = northwest_corner(&supply, &demand);
    let mut in_basis = vec![false; n * m];
    for b in &basis {
        in_basis[b.row * m + b.col] = true;
    }

    let mut u = vec![0.0; n];
    let mut v = vec![0.0; m];
    let mut degenerate_run = 0usize;
    let max_pivots = 50 * (n + m) * (n + m) + 1000;
    for _ in 0..max_pivots {
        let adjacency = tree_adjacency(&basis, n, m);
        potentials(cost, &basis, &adjacency, &mut u, &mut v);

        let bland = degenerate_run >= DEGENERATE_SWITCH;
        let mut entering = None;
        let mut best = -tol;
        'pricing: for i in 0..n {
            let row = cost.row(i);
            for j in 0..m {
                if in_basis[i * m + j] {
                    continue;
                }
                let r = row[j] - u[i] - v[j];
                if r < best {
                    entering = Some((i, j));
                    if bland {
                        break 'pricing;
                    }
                    best = r;
                }
            }
        }
        let Some((ei, ej)) = entering else {
            break;
        };

        // Tree path from column node `ej` to row node `ei`; with the entering cell it
        // closes a cycle whose cells alternate -, +, -, ... starting next to `ej`.
        let path = tree_path(&basis, &adjacency, n + ej, ei, n);
        let mut theta = u64::MAX;
        let mut leaving = usize::MAX;
        for (k, &cell) in path.iter().enumerate() {
            if k % 2 == 0 {
                let b = basis[cell];
                let better = b.flow < theta
                    || (b.flow == theta
                        && bland
                        && b.row * m + b.col < basis[leaving].row * m + basis[leaving].col);
                if better {
                    theta = b.flow;
                    leaving = cell;
                }
            }
        }
        for (k, &cell) in path.iter().enumerate() {
            if k % 2 == 0 {
                basis[cell].flow -= theta;
            } else {
                basis[cell].flow += theta;
            }
        }
        degenerate_run = if theta == 0 { degenerate_run + 1 } else { 0 };
        let old = basis[leaving];
        in_basis[old.row * m + old.col] = false;
        in_basis[ei * m + ej] = true;
        basis[leaving] = BasicCell {
            row: ei,
            col: ej,
            flow: theta,
        };
    }
    let adjacency = tree_adjacency(&basis, n, m);
    potentials(cost, &basis, &adjacency, &mut u, &mut v);

    let mass = (n * m) as f64;
    let mut cells: Vec<BasicCell> = basis.into_iter().filter(|b| b.flow > 0).collect();
    cells.sort_by_key(|b| (b.row, b.col));
    let mut terms: Vec<f64> = cells
        .iter()
        .map(|b| b.flow as f64 * cost.get(b.row, b.col))
        .collect();
    terms.sort_by(f64::total_cmp);
    let total: KahanSum = terms.into_iter().collect();
    let entries = cells
        .iter()
        .map(|b| CouplingEntry {
            source: b.row,
            target: b.col,
            weight: b.flow as f64 / mass,
        })
        .collect();
    (
        Coupling {
            n,
            m,
            entries,
            cost: total.value() / mass,
        },
        DualPotentials::normalized(u, v),
    )
}

/// Initial basic feasible solution with exactly `n + m - 1` cells (zero-flow cells are
/// kept when supply and demand run out together).
fn northwest_corner(supply: &[u64], demand: &[u64]) -> Vec<BasicCell> {
    let (n, m) = (supply.len(), demand.len());
    let mut s = supply.to_vec();
    let mut d = demand.to_vec();
    let mut basis = Vec::with_capacity(n + m - 1);
    let (mut i, mut j) = (0, 0);
    loop {
        let f = s[i].min(d[j]);
        basis.push(BasicCell {
            row: i,
            col: j,
            flow: f,
        });
        s[i] -= f;
        d[j] -= f;
        if i == n - 1 && j == m - 1 {
            break;
        }
        if (s[i] == 0 && i < n - 1) || j == m - 1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    debug_assert_eq!(basis.len(), n + m - 1);
    basis
}

/// Node-to-cell incidence of the spanning tree. Rows are nodes `0..n`, columns `n..n+m`.
fn tree_adjacency(basis: &[BasicCell], n: usize, m: usize) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); n + m];
    for (k, b) in basis.iter().enumerate() {
        adj[b.row].push(k);
        adj[n + b.col].push(k);
    }
    adj
}

fn potentials(
    cost: &CostMatrix,
    basis: &[BasicCell],
    adjacency: &[Vec<usize>],
    u: &mut [f64],
    v: &mut [f64],
) {
    let n = u.len();
    let mut done = vec![false; adjacency.len()];
    let mut stack = vec![0usize];
    u[0] = 0.0;
    done[0] = true;
    while let Some(node) = stack.pop() {
        for &k in &adjacency[node] {
            let b = basis[k];
            let c = cost.get(b.row, b.col);
            if node < n {
                let other = n + b.col;
                if !done[other] {
                    v[b.col] = c - u[b.row];
                    done[other] = true;
                    stack.push(other);
                }
            } else if !done[b.row] {
                u[b.row] = c - v[b.col];
                done[b.row] = true;
                stack.push(b.row);
            }
        }
    }
}

/// Cells on the unique tree path from `from` to `to`, ordered from `from`.
fn tree_path(
    basis: &[BasicCell],
    adjacency: &[Vec<usize>],
    from: usize,
    to: usize,
    rows: usize,
) -> Vec<usize> {
    let nodes = adjacency.len();
    let mut parent_cell = vec![usize::MAX; nodes];
    let mut seen = vec![false; nodes];
    let mut stack = vec![from];
    seen[from] = true;
    let other_end = |node: usize, b: BasicCell| if node < rows { rows + b.col } else { b.row };
    while let Some(node) = stack.pop() {
        if node == to {
            break;
        }
        for &k in &adjacency[node] {
            let other = other_end(node, basis[k]);
            if !seen[other] {
                seen[other] = true;
                parent_cell[other] = k;
                stack.push(other);
            }
        }
    }
    let mut path = Vec::new();
    let mut node = to;
    while node != from {
        let k = parent_cell[node];
        path.push(k);
        node = other_end(node, basis[k]);
    }
    path.reverse();
    path
}
