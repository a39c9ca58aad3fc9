//! Point lists and the small amount of arithmetic shared by the solvers.

use crate::error::{invalid, Result};

/// A point of R^d.
pub type Point = Vec<f64>;

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Compensated (Kahan) accumulator.
#[derive(Debug, Default, Clone, Copy)]
pub struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, value: f64) {
        let y = value - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

impl FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = KahanSum::new();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

/// Checks that `points` is nonempty, rectangular and finite; returns the dimension.
pub fn check_points(points: &[Point], what: &str) -> Result<usize> {
    let Some(first) = points.first() else {
        return invalid(format!("{what} is empty"));
    };
    let dim = first.len();
    if dim == 0 {
        return invalid(format!("{what} has zero-dimensional points"));
    }
    for (i, p) in points.iter().enumerate() {
        if p.len() != dim {
            return invalid(format!(
                "{what}: point {i} has dimension {}, expected {dim}",
                p.len()
            ));
        }
        if let Some(j) = p.iter().position(|v| !v.is_finite()) {
            return invalid(format!("{what}: point {i} coordinate {j} is not finite"));
        }
    }
    Ok(dim)
}

/// Number of points that appear more than once (exact coordinate equality).
pub fn duplicate_count(points: &[Point]) -> usize {
    let mut seen = std::collections::HashSet::with_capacity(points.len());
    points
        .iter()
        .filter(|p| !seen.insert(p.iter().map(|v| v.to_bits()).collect::<Vec<u64>>()))
        .count()
}
