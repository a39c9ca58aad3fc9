//! Exact optimal transport under squared Euclidean cost.
//!
//! Equal-size problems go through a shortest-augmenting-path assignment solver,
//! unequal sizes through a network simplex on the transportation polytope. Both
//! return dual potentials that certify optimality.

mod assignment;
mod monotonicity;
mod simplex;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::points::{check_points, dot, sq_dist, KahanSum, Point};

pub use assignment::solve_assignment_matrix;
pub use monotonicity::{
    check_cyclical_monotonicity, CycleWitness, MonotonicityMode, MonotonicityReport,
};
pub use simplex::solve_transportation_matrix;

/// Absolute tolerance used by the optimality certificates.
pub const CERTIFICATE_TOL: f64 = 1e-9;

/// Dense row-major cost matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        CostMatrix { rows, cols, data }
    }

    pub fn squared_euclidean(source: &[Point], target: &[Point]) -> Self {
        Self::from_fn(source.len(), target.len(), |i, j| {
            sq_dist(&source[i], &target[j])
        })
    }

    /// Cost `-<x_i, y_j>`; minimizing it maximizes total inner product.
    pub fn negative_inner_product(source: &[Point], target: &[Point]) -> Self {
        Self::from_fn(source.len(), target.len(), |i, j| {
            -dot(&source[i], &target[j])
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub(crate) fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Optimal matching between two equal-size point lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub n: usize,
    /// `perm[i]` is the target index matched to source `i`.
    pub perm: Vec<usize>,
    /// Sum of matched costs.
    pub cost: f64,
}

impl Assignment {
    pub fn inverse(&self) -> Vec<usize> {
        let mut inv = vec![0; self.n];
        for (i, &j) in self.perm.iter().enumerate() {
            inv[j] = i;
        }
        inv
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingEntry {
    pub source: usize,
    pub target: usize,
    pub weight: f64,
}

/// Optimal plan between the uniform measures on `n` and `m` points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub n: usize,
    pub m: usize,
    pub entries: Vec<CouplingEntry>,
    /// Expected cost `sum w_ij c_ij`.
    pub cost: f64,
}

/// LP dual variables: `phi[i] + psi[j] <= c(i, j)` with equality on the plan's
/// support, normalized so that `psi[0] == 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualPotentials {
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
}

impl DualPotentials {
    pub(crate) fn normalized(mut phi: Vec<f64>, mut psi: Vec<f64>) -> Self {
        if let Some(&shift) = psi.first() {
            for v in phi.iter_mut() {
                *v += shift;
            }
            for v in psi.iter_mut() {
                *v -= shift;
            }
        }
        DualPotentials { phi, psi }
    }

    pub fn reduced_cost(&self, cost: &CostMatrix, i: usize, j: usize) -> f64 {
        cost.get(i, j) - self.phi[i] - self.psi[j]
    }

    /// Checks feasibility everywhere and tightness on `support`. Returns the worst
    /// violation found.
    pub fn certificate_violation(
        &self,
        cost: &CostMatrix,
        support: impl IntoIterator<Item = (usize, usize)>,
    ) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..cost.rows() {
            for j in 0..cost.cols() {
                worst = worst.max(-self.reduced_cost(cost, i, j));
            }
        }
        for (i, j) in support {
            worst = worst.max(self.reduced_cost(cost, i, j).abs());
        }
        worst
    }
}

fn check_pair(source: &[Point], target: &[Point]) -> Result<usize> {
    let d_s = check_points(source, "source")?;
    let d_t = check_points(target, "target")?;
    if d_s != d_t {
        return invalid(format!(
            "source dimension {d_s} differs from target dimension {d_t}"
        ));
    }
    Ok(d_s)
}

/// Cost-minimizing matching between equal-size point lists, with certifying duals.
///
/// Among equal-cost optima the lexicographically smallest permutation is returned.
pub fn solve_assignment(
    source: &[Point],
    target: &[Point],
) -> Result<(Assignment, DualPotentials)> {
    check_pair(source, target)?;
    if source.len() != target.len() {
        return invalid(format!(
            "assignment needs equal sizes, got {} and {}",
            source.len(),
            target.len()
        ));
    }
    let cost = CostMatrix::squared_euclidean(source, target);
    Ok(solve_assignment_matrix(&cost))
}

/// Sum of matched costs, accumulated in ascending order so the result does not depend
/// on how rows and columns are numbered.
pub(crate) fn assignment_cost(cost: &CostMatrix, perm: &[usize]) -> f64 {
    let mut terms: Vec<f64> = perm
        .iter()
        .enumerate()
        .map(|(i, &j)| cost.get(i, j))
        .collect();
    terms.sort_by(f64::total_cmp);
    terms.into_iter().collect::<KahanSum>().value()
}

/// Exact optimal coupling between the uniform measures on `source` and `target`.
///
/// Equal sizes are delegated to the assignment solver.
pub fn solve_transport(source: &[Point], target: &[Point]) -> Result<(Coupling, DualPotentials)> {
    check_pair(source, target)?;
    let cost = CostMatrix::squared_euclidean(source, target);
    if source.len() == target.len() {
        let (a, duals) = solve_assignment_matrix(&cost);
        let n = a.n;
        let w = 1.0 / n as f64;
        let entries = a
            .perm
            .iter()
            .enumerate()
            .map(|(i, &j)| CouplingEntry {
                source: i,
                target: j,
                weight: w,
            })
            .collect();
        return Ok((
            Coupling {
                n,
                m: n,
                entries,
                cost: a.cost / n as f64,
            },
            duals,
        ));
    }
    Ok(solve_transportation_matrix(&cost))
}

/// Like [`solve_transport`] but always runs the network simplex, even for `n == m`.
pub fn solve_transport_lp(
    source: &[Point],
    target: &[Point],
) -> Result<(Coupling, DualPotentials)> {
    check_pair(source, target)?;
    let cost = CostMatrix::squared_euclidean(source, target);
    Ok(solve_transportation_matrix(&cost))
}

/// W2 distance between the uniform empirical measures on the two lists.
pub fn wasserstein2(source: &[Point], target: &[Point]) -> Result<f64> {
    let (coupling, _) = solve_transport(source, target)?;
    Ok(coupling.cost.max(0.0).sqrt())
}
