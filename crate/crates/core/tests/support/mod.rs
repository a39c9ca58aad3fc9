//! Independent reference implementations used to check the solvers. Everything here
//! is deliberately naive: enumeration rather than optimization.

#![allow(dead_code)]

use brenier::experiments::{SamplerFamily, SamplerSpec};
use brenier::Point;

pub fn gaussian(n: usize, dim: usize, seed: u64, index: u64) -> Vec<Point> {
    SamplerSpec::new(SamplerFamily::Gaussian, dim, 0)
        .draw(n, seed, "oracle-instance", index)
        .unwrap()
}

pub fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn cost_matrix(a: &[Point], b: &[Point]) -> Vec<Vec<f64>> {
    a.iter()
        .map(|x| b.iter().map(|y| sq(x, y)).collect())
        .collect()
}

/// All permutations of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for j in 0..used.len() {
            if !used[j] {
                used[j] = true;
                prefix.push(j);
                rec(prefix, used, out);
                prefix.pop();
                used[j] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

/// Minimum total cost over all permutations and the first (lexicographically
/// smallest) permutation attaining it up to `rel_tol`.
pub fn brute_force_assignment(cost: &[Vec<f64>], rel_tol: f64) -> (f64, Vec<usize>) {
    let perms = permutations(cost.len());
    let total = |p: &[usize]| p.iter().enumerate().map(|(i, &j)| cost[i][j]).sum::<f64>();
    let best = perms.iter().map(|p| total(p)).fold(f64::INFINITY, f64::min);
    let tol = rel_tol * best.abs().max(1.0);
    let first = perms.into_iter().find(|p| total(p) <= best + tol).unwrap();
    (best, first)
}

fn combinations(n: usize, k: usize, mut visit: impl FnMut(&[usize])) {
    fn rec(
        start: usize,
        n: usize,
        k: usize,
        cur: &mut Vec<usize>,
        visit: &mut dyn FnMut(&[usize]),
    ) {
        if cur.len() == k {
            visit(cur);
            return;
        }
        for c in start..=(n - (k - cur.len())) {
            cur.push(c);
            rec(c + 1, n, k, cur, visit);
            cur.pop();
        }
    }
    if k <= n {
        rec(0, n, k, &mut Vec::new(), &mut visit);
    }
}

fn find(parent: &mut [usize], mut v: usize) -> usize {
    while parent[v] != v {
        parent[v] = parent[parent[v]];
        v = parent[v];
    }
    v
}

/// Optimal expected cost between uniform measures on `n` rows and `m` columns by
/// enumerating every basic solution: each spanning tree of the bipartite row/column
/// graph determines a unique flow, feasible when non-negative.
pub fn lp_oracle(cost: &[Vec<f64>]) -> f64 {
    let n = cost.len();
    let m = cost[0].len();
    let cells: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..m).map(move |j| (i, j))).collect();
    let mut best = f64::INFINITY;
    combinations(cells.len(), n + m - 1, |pick| {
        let mut parent: Vec<usize> = (0..n + m).collect();
        for &c in pick {
            let (i, j) = cells[c];
            let (a, b) = (find(&mut parent, i), find(&mut parent, n + j));
            if a == b {
                return;
            }
            parent[a] = b;
        }
        // Integer masses: m per row, n per column.
        let mut residual: Vec<i64> = (0..n)
            .map(|_| m as i64)
            .chain((0..m).map(|_| n as i64))
            .collect();
        let mut alive = vec![true; pick.len()];
        let mut flow = vec![0i64; pick.len()];
        for _ in 0..pick.len() {
            let degree = |v: usize, alive: &[bool]| {
                pick.iter()
                    .enumerate()
                    .filter(|(e, &c)| alive[*e] && (cells[c].0 == v || n + cells[c].1 == v))
                    .count()
            };
            let (e, leaf) = pick
                .iter()
                .enumerate()
                .filter(|(e, _)| alive[*e])
                .find_map(|(e, &c)| {
                    let (i, j) = cells[c];
                    if degree(i, &alive) == 1 {
                        Some((e, i))
                    } else if degree(n + j, &alive) == 1 {
                        Some((e, n + j))
                    } else {
                        None
                    }
                })
                .unwrap();
            let (i, j) = cells[pick[e]];
            let other = if leaf == i { n + j } else { i };
            flow[e] = residual[leaf];
            residual[other] -= flow[e];
            residual[leaf] = 0;
            alive[e] = false;
        }
        if flow.iter().any(|&f| f < 0) || residual.iter().any(|&r| r != 0) {
            return;
        }
        let total: f64 = pick
            .iter()
            .zip(&flow)
            .map(|(&c, &f)| f as f64 * cost[cells[c].0][cells[c].1])
            .sum();
        best = best.min(total / (n * m) as f64);
    });
    best
}

/// W2 between uniform measures, by permutation enumeration (equal sizes) or
/// basic-solution enumeration.
pub fn brute_w2(a: &[Point], b: &[Point]) -> f64 {
    let c = cost_matrix(a, b);
    let squared = if a.len() == b.len() {
        brute_force_assignment(&c, 0.0).0 / a.len() as f64
    } else {
        lp_oracle(&c)
    };
    squared.max(0.0).sqrt()
}

/// Sort-based one-dimensional matching: the k-th smallest sample goes to the k-th
/// smallest grid point.
pub fn sort_oracle_1d(sample: &[f64], grid: &[f64]) -> Vec<usize> {
    let order = |v: &[f64]| {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
        idx
    };
    let (s, g) = (order(sample), order(grid));
    let mut perm = vec![0; sample.len()];
    for k in 0..sample.len() {
        perm[s[k]] = g[k];
    }
    perm
}

/// Grid values a monotone one-dimensional step function through the sorted matching
/// may take at `q`: exact at and beyond the samples, one of the two neighbours in
/// between.
pub fn step_oracle_1d(sample: &[f64], grid: &[f64], q: f64) -> Vec<f64> {
    let mut s = sample.to_vec();
    let mut g = grid.to_vec();
    s.sort_by(f64::total_cmp);
    g.sort_by(f64::total_cmp);
    let n = s.len();
    if q <= s[0] {
        return vec![g[0]];
    }
    if q >= s[n - 1] {
        return vec![g[n - 1]];
    }
    if let Some(k) = s.iter().position(|&v| v == q) {
        return vec![g[k]];
    }
    let k = s.iter().rposition(|&v| v < q).unwrap();
    vec![g[k], g[k + 1]]
}

/// Every `C(n+m, n)` split of the grid into an `n`-block and an `m`-block, with the W2
/// distance between the two blocks.
pub fn split_null(grid: &[Point], n: usize, m: usize) -> Vec<f64> {
    let mut out = Vec::new();
    combinations(n + m, n, |first| {
        let a: Vec<Point> = first.iter().map(|&i| grid[i].clone()).collect();
        let b: Vec<Point> = (0..n + m)
            .filter(|i| !first.contains(i))
            .map(|i| grid[i].clone())
            .collect();
        out.push(brute_w2(&a, &b));
    });
    out
}

/// Kolmogorov distance between the empirical laws of `a` and `b`.
pub fn ks(a: &[f64], b: &[f64]) -> f64 {
    let mut points: Vec<f64> = a.iter().chain(b).copied().collect();
    points.sort_by(f64::total_cmp);
    let cdf = |v: &[f64], t: f64| v.iter().filter(|&&x| x <= t).count() as f64 / v.len() as f64;
    points
        .iter()
        .map(|&t| (cdf(a, t) - cdf(b, t)).abs())
        .fold(0.0, f64::max)
}
