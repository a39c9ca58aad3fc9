//! Empirical Brenier distribution function.
//!
//! Fitting matches the sample onto the grid by an exact optimal assignment. The map is
//! extended to all of R^d through the Legendre conjugate of the grid-side potential:
//! a query `x` is sent to the grid point `u_j` maximizing `<x, u_j> - psi_j`, i.e. to
//! the power (Laguerre) cell containing it.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::grid::BallGrid;
use crate::points::{check_points, dot, duplicate_count, Point};
use crate::transport::{solve_assignment_matrix, Assignment, CostMatrix, DualPotentials};

/// Sample membership of a pooled observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    X,
    Y,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalBDF {
    pub source: Vec<Point>,
    pub labels: Vec<Label>,
    pub grid: BallGrid,
    /// Source index to grid index.
    pub assignment: Assignment,
    /// Conjugate-form grid potential, `potentials[0] == 0`.
    pub potentials: Vec<f64>,
    /// Smallest gap, over sources, between the assigned score and the runner-up.
    pub margin: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Uniform measure on the images of one labelled sub-sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageMeasure {
    /// Grid indices, in source order; every atom carries weight `1 / support.len()`.
    pub support: Vec<usize>,
    pub grid_size: usize,
}

impl ImageMeasure {
    pub fn weight(&self) -> f64 {
        1.0 / self.support.len() as f64
    }

    pub fn points(&self, grid: &BallGrid) -> Vec<Point> {
        self.support
            .iter()
            .map(|&j| grid.points[j].clone())
            .collect()
    }
}

pub fn fit_ebdf(sample: &[Point], labels: &[Label], grid: &BallGrid) -> Result<EmpiricalBDF> {
    let dim = check_points(sample, "sample")?;
    if dim != grid.dim {
        return invalid(format!(
            "sample dimension {dim} differs from grid dimension {}",
            grid.dim
        ));
    }
    if sample.len() != grid.len() {
        return invalid(format!(
            "sample has {} points but the grid has {}; regenerate the grid at the pooled size",
            sample.len(),
            grid.len()
        ));
    }
    if labels.len() != sample.len() {
        return invalid(format!(
            "{} labels for {} sample points",
            labels.len(),
            sample.len()
        ));
    }
    let mut warnings = Vec::new();
    let dups = duplicate_count(sample);
    if dups > 0 {
        warnings.push(format!("sample contains {dups} duplicated points"));
    }
    let cost = CostMatrix::squared_euclidean(sample, &grid.points);
    let (assignment, duals) = solve_assignment_matrix(&cost);
    let (potentials, margin) =
        separating_potentials(sample, grid, &assignment, &duals, &mut warnings);
    Ok(EmpiricalBDF {
        source: sample.to_vec(),
        labels: labels.to_vec(),
        grid: grid.clone(),
        assignment,
        potentials,
        margin,
        warnings,
    })
}

/// Converts the squared-cost duals to conjugate form and pushes them into the interior
/// of the dual polytope, so that every fitted source lies strictly inside the power cell
/// of its assigned grid point.
///
/// For grid point `j` matched to source `i`, every other grid point `k` imposes
/// `psi_j - psi_k <= <x_i, u_j - u_k>`. These are difference constraints; relaxing them
/// with every weight lowered by `eps` (Bellman-Ford, started from the feasible dual)
/// yields potentials with slack at least `eps` on every constraint. `eps` is half the
/// smallest positive slack divided by `n`, which stays below the minimum cycle mean
/// unless the optimal assignment is not unique.
fn separating_potentials(
    sample: &[Point],
    grid: &BallGrid,
    assignment: &Assignment,
    duals: &DualPotentials,
    warnings: &mut Vec<String>,
) -> (Vec<f64>, f64) {
    let n = sample.len();
    let inv = assignment.inverse();
    let base: Vec<f64> = grid
        .points
        .iter()
        .zip(&duals.psi)
        .map(|(u, p)| 0.5 * (dot(u, u) - p))
        .collect();
    if n == 1 {
        return (vec![0.0], f64::INFINITY);
    }
    // scores[j * n + k] = <x_{inv[j]}, u_k>
    let mut scores = vec![0.0; n * n];
    let mut scale = 1.0f64;
    for j in 0..n {
        let x = &sample[inv[j]];
        for k in 0..n {
            let s = dot(x, &grid.points[k]);
            scale = scale.max(s.abs());
            scores[j * n + k] = s;
        }
    }
    let slack = |psi: &[f64], j: usize, k: usize| {
        (scores[j * n + j] - psi[j]) - (scores[j * n + k] - psi[k])
    };
    let min_slack = |psi: &[f64]| {
        let mut m = f64::INFINITY;
        for j in 0..n {
            for k in 0..n {
                if k != j {
                    m = m.min(slack(psi, j, k));
                }
            }
        }
        m
    };
    let tight_tol = 1e-12 * scale;
    let mut smallest_positive = f64::INFINITY;
    let mut any_tight = false;
    for j in 0..n {
        for k in 0..n {
            if k == j {
                continue;
            }
            let s = slack(&base, j, k);
            if s <= tight_tol {
                any_tight = true;
            } else {
                smallest_positive = smallest_positive.min(s);
            }
        }
    }

    let mut psi = base.clone();
    if any_tight && smallest_positive.is_finite() {
        let eps = smallest_positive / (2.0 * n as f64);
        let mut converged = false;
        for _ in 0..=n {
            let mut changed = false;
            for j in 0..n {
                let own = scores[j * n + j];
                let mut best = psi[j];
                for k in 0..n {
                    if k == j {
                        continue;
                    }
                    // psi_j <= psi_k + <x, u_j - u_k> - eps
                    let cand = psi[k] + own - scores[j * n + k] - eps;
                    if cand < best {
                        best = cand;
                    }
                }
                if best < psi[j] {
                    psi[j] = best;
                    changed = true;
                }
            }
            if !changed {
                converged = true;
                break;
            }
        }
        if !converged || min_slack(&psi) <= 0.0 {
            warnings.push(
                "optimal assignment is not unique; fitted sources may sit on power-cell boundaries"
                    .to_string(),
            );
            psi = base;
        }
    }
    let shift = psi[0];
    for p in psi.iter_mut() {
        *p -= shift;
    }
    let margin = min_slack(&psi);
    (psi, margin)
}

impl EmpiricalBDF {
    pub fn dim(&self) -> usize {
        self.grid.dim
    }

    /// Grid index of the image of `x`; ties go to the lowest index.
    pub fn evaluate_index(&self, x: &[f64]) -> Result<usize> {
        if x.len() != self.dim() {
            return invalid(format!(
                "query has dimension {}, model has {}",
                x.len(),
                self.dim()
            ));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return invalid("query has non-finite coordinates");
        }
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (j, (u, p)) in self.grid.points.iter().zip(&self.potentials).enumerate() {
            let s = dot(x, u) - p;
            if s > best_score {
                best_score = s;
                best = j;
            }
        }
        Ok(best)
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<&Point> {
        Ok(&self.grid.points[self.evaluate_index(x)?])
    }

    /// The fitted graph `(x_i, u_{perm(i)})`.
    pub fn graph(&self) -> Vec<(Point, Point)> {
        self.source
            .iter()
            .zip(&self.assignment.perm)
            .map(|(x, &j)| (x.clone(), self.grid.points[j].clone()))
            .collect()
    }

    pub fn push_forward(&self, tag: Label) -> Result<ImageMeasure> {
        let support: Vec<usize> = self
            .labels
            .iter()
            .zip(&self.assignment.perm)
            .filter(|(l, _)| **l == tag)
            .map(|(_, &j)| j)
            .collect();
        if support.is_empty() {
            return invalid(format!("no source carries label {tag:?}"));
        }
        Ok(ImageMeasure {
            support,
            grid_size: self.grid.len(),
        })
    }
}

pub fn evaluate_ebdf<'a>(f: &'a EmpiricalBDF, x: &[f64]) -> Result<&'a Point> {
    f.evaluate(x)
}

pub fn push_forward(f: &EmpiricalBDF, tag: Label) -> Result<ImageMeasure> {
    f.push_forward(tag)
}
