//! Cyclical monotonicity of finite graphs `{(x_i, y_i)}`.
//!
//! A finite map is cyclically monotone iff no cyclic relabeling increases
//! `sum <x_i, y_i>`, i.e. iff the identity pairing is an optimal assignment between
//! `{x_i}` and `{y_i}`.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{solve_assignment_matrix, CostMatrix};
use crate::error::{invalid, Result};
use crate::points::{check_points, dot, KahanSum, Point};
use crate::rng;

/// Longest cycle drawn in sampled mode.
const MAX_SAMPLED_CYCLE: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MonotonicityMode {
    /// Decide by re-solving the assignment between the two sides.
    Exact,
    /// Test randomly drawn cycles of length 2 to 6.
    Sampled,
}

/// A cycle `c` such that `sum <x_{c_k}, y_{c_{k+1}}>` exceeds `sum <x_{c_k}, y_{c_k}>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleWitness {
    pub cycle: Vec<usize>,
    /// `sum_k <x_{c_k}, y_{c_k}>`.
    pub identity_sum: f64,
    /// `sum_k <x_{c_k}, y_{c_{k+1}}>` with indices taken cyclically.
    pub shifted_sum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub monotone: bool,
    pub witness: Option<CycleWitness>,
    /// Cycles examined (sampled mode) or 1 (exact mode).
    pub cycles_checked: usize,
}

pub fn check_cyclical_monotonicity(
    pairs: &[(Point, Point)],
    mode: MonotonicityMode,
    cycle_budget: usize,
    seed: u64,
) -> Result<MonotonicityReport> {
    if cycle_budget == 0 {
        return invalid("cycle budget must be positive");
    }
    let xs: Vec<Point> = pairs.iter().map(|(x, _)| x.clone()).collect();
    let ys: Vec<Point> = pairs.iter().map(|(_, y)| y.clone()).collect();
    let dx = check_points(&xs, "pair sources")?;
    let dy = check_points(&ys, "pair images")?;
    if dx != dy {
        return invalid(format!("pair dimensions differ: {dx} vs {dy}"));
    }
    let scale = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| dot(x, x).sqrt() * dot(y, y).sqrt())
        .fold(0.0f64, f64::max)
        .max(1.0);
    let tol = 1e-9 * scale;
    match mode {
        MonotonicityMode::Exact => Ok(exact(&xs, &ys, tol)),
        MonotonicityMode::Sampled => Ok(sampled(&xs, &ys, cycle_budget, seed, tol)),
    }
}

fn witness_for(xs: &[Point], ys: &[Point], cycle: Vec<usize>) -> CycleWitness {
    let len = cycle.len();
    let identity: KahanSum = cycle.iter().map(|&i| dot(&xs[i], &ys[i])).collect();
    let shifted: KahanSum = (0..len)
        .map(|k| dot(&xs[cycle[k]], &ys[cycle[(k + 1) % len]]))
        .collect();
    CycleWitness {
        cycle,
        identity_sum: identity.value(),
        shifted_sum: shifted.value(),
    }
}

fn exact(xs: &[Point], ys: &[Point], tol: f64) -> MonotonicityReport {
    let cost = CostMatrix::negative_inner_product(xs, ys);
    let (best, _) = solve_assignment_matrix(&cost);
    let identity: KahanSum = (0..xs.len()).map(|i| cost.get(i, i)).collect();
    if identity.value() <= best.cost + tol {
        return MonotonicityReport {
            monotone: true,
            witness: None,
            cycles_checked: 1,
        };
    }
    // Some cycle of the optimal permutation must gain; report the largest gain.
    let mut visited = vec![false; xs.len()];
    let mut witness: Option<CycleWitness> = None;
    for start in 0..xs.len() {
        if visited[start] || best.perm[start] == start {
            continue;
        }
        let mut cycle = Vec::new();
        let mut i = start;
        while !visited[i] {
            visited[i] = true;
            cycle.push(i);
            i = best.perm[i];
        }
        let w = witness_for(xs, ys, cycle);
        let gain = w.shifted_sum - w.identity_sum;
        if witness
            .as_ref()
            .is_none_or(|cur| gain > cur.shifted_sum - cur.identity_sum)
        {
            witness = Some(w);
        }
    }
    MonotonicityReport {
        monotone: false,
        witness,
        cycles_checked: 1,
    }
}

fn sampled(xs: &[Point], ys: &[Point], budget: usize, seed: u64, tol: f64) -> MonotonicityReport {
    let n = xs.len();
    let longest = n.min(MAX_SAMPLED_CYCLE);
    if longest < 2 {
        return MonotonicityReport {
            monotone: true,
            witness: None,
            cycles_checked: 0,
        };
    }
    let mut r = rng::stream(seed, "monotonicity-cycles", 0);
    for k in 0..budget {
        let len = r.random_range(2..=longest);
        let cycle = sample(&mut r, n, len).into_vec();
        let w = witness_for(xs, ys, cycle);
        if w.shifted_sum > w.identity_sum + tol {
            return MonotonicityReport {
                monotone: false,
                witness: Some(w),
                cycles_checked: k + 1,
            };
        }
    }
    MonotonicityReport {
        monotone: true,
        witness: None,
        cycles_checked: budget,
    }
}
