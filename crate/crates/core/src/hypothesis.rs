//! The two-sample test: statistic, permutation null, critical value and decision.

use std::collections::HashMap;
use std::sync::Mutex;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bdf::{fit_ebdf, Label};
use crate::error::{invalid, Result};
use crate::grid::{generate_ball_grid, BallGrid, GridMethod};
use crate::points::{check_points, sq_dist, Point};
use crate::rng;
use crate::transport::{solve_assignment_matrix, solve_transportation_matrix, CostMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    pub alpha: f64,
    /// Number of resampled permutations `M`.
    pub permutations: usize,
    pub seed: u64,
    #[serde(default)]
    pub grid_method: GridMethod,
    #[serde(default)]
    pub lloyd_iters: usize,
    #[serde(default)]
    pub standardize: bool,
}

impl Default for TestConfig {
    fn default() -> Self {
        TestConfig {
            alpha: 0.05,
            permutations: 1000,
            seed: 0,
            grid_method: GridMethod::SobolRadial,
            lloyd_iters: 0,
            standardize: false,
        }
    }
}

impl TestConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return invalid(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if self.permutations == 0 {
            return invalid("the number of permutations must be positive");
        }
        Ok(())
    }

    pub fn grid_seed(&self) -> u64 {
        rng::derive_seed(self.seed, "grid", 0)
    }

    pub fn null_seed(&self) -> u64 {
        rng::derive_seed(self.seed, "null", 0)
    }
}

/// Sorted permutation-resampled statistics for one `(grid, n, m)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullDistribution {
    pub values: Vec<f64>,
    pub n: usize,
    pub m: usize,
    pub grid_fingerprint: String,
    pub seed: u64,
}

impl NullDistribution {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn key(&self) -> NullKey {
        NullKey {
            n: self.n,
            m: self.m,
            grid_fingerprint: self.grid_fingerprint.clone(),
            permutations: self.values.len(),
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return invalid("null distribution is empty");
        }
        if self.values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return invalid("null distribution has negative or non-finite values");
        }
        if self.values.windows(2).any(|w| w[0] > w[1]) {
            return invalid("null distribution is not sorted");
        }
        Ok(())
    }
}

/// Everything a null distribution depends on.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NullKey {
    pub n: usize,
    pub m: usize,
    pub grid_fingerprint: String,
    pub permutations: usize,
    pub seed: u64,
}

impl NullKey {
    /// Hex digest used to name cache entries.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.n as u64).to_le_bytes());
        h.update((self.m as u64).to_le_bytes());
        h.update(self.grid_fingerprint.as_bytes());
        h.update((self.permutations as u64).to_le_bytes());
        h.update(self.seed.to_le_bytes());
        hex::encode(h.finalize())
    }
}

/// Storage for null distributions, shared between tests with the same key.
pub trait NullStore: Sync {
    fn load(&self, key: &NullKey) -> Option<NullDistribution>;
    fn store(&self, null: &NullDistribution) -> Result<()>;
}

#[derive(Debug, Default)]
pub struct MemoryNullCache {
    entries: Mutex<HashMap<NullKey, NullDistribution>>,
}

impl MemoryNullCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl NullStore for MemoryNullCache {
    fn load(&self, key: &NullKey) -> Option<NullDistribution> {
        self.entries
            .lock()
            .expect("cache lock poisoned")
            .get(key)
            .cloned()
    }

    fn store(&self, null: &NullDistribution) -> Result<()> {
        self.entries
            .lock()
            .expect("cache lock poisoned")
            .insert(null.key(), null.clone());
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub statistic: f64,
    pub critical_value: f64,
    pub p_value: f64,
    pub reject: bool,
    /// `n / (n + m)`.
    pub mixture_ratio: f64,
    pub n: usize,
    pub m: usize,
    pub dim: usize,
    pub config: TestConfig,
    pub grid_fingerprint: String,
    pub null_seed: u64,
}

/// W2 between the uniform measures on two disjoint index sets of the grid.
fn split_distance(grid: &BallGrid, a: &[usize], b: &[usize]) -> f64 {
    let cost = CostMatrix::from_fn(a.len(), b.len(), |i, j| {
        sq_dist(&grid.points[a[i]], &grid.points[b[j]])
    });
    let squared = if a.len() == b.len() {
        solve_assignment_matrix(&cost).0.cost / a.len() as f64
    } else {
        solve_transportation_matrix(&cost).0.cost
    };
    squared.max(0.0).sqrt()
}

fn check_samples(x: &[Point], y: &[Point]) -> Result<usize> {
    let dx = check_points(x, "X sample")?;
    let dy = check_points(y, "Y sample")?;
    if dx != dy {
        return invalid(format!("X has dimension {dx} but Y has {dy}"));
    }
    Ok(dx)
}

/// `D_nm`: W2 between the images of `x` and `y` under the pooled empirical BDF.
pub fn test_statistic(x: &[Point], y: &[Point], grid: &BallGrid) -> Result<f64> {
    check_samples(x, y)?;
    if x.len() + y.len() != grid.len() {
        return invalid(format!(
            "pooled size {} does not match grid size {}",
            x.len() + y.len(),
            grid.len()
        ));
    }
    let pooled: Vec<Point> = x.iter().chain(y).cloned().collect();
    let labels: Vec<Label> = std::iter::repeat_n(Label::X, x.len())
        .chain(std::iter::repeat_n(Label::Y, y.len()))
        .collect();
    let f = fit_ebdf(&pooled, &labels, grid)?;
    let img_x = f.push_forward(Label::X)?;
    let img_y = f.push_forward(Label::Y)?;
    Ok(split_distance(grid, &img_x.support, &img_y.support))
}

/// Permutation null: each draw splits a uniformly shuffled grid into the first `n` and
/// last `m` points. Draw `i` uses its own stream keyed by `(seed, i)`, so the sorted
/// result does not depend on scheduling.
pub fn resample_null(
    grid: &BallGrid,
    n: usize,
    m: usize,
    permutations: usize,
    seed: u64,
) -> Result<NullDistribution> {
    if n == 0 || m == 0 {
        return invalid("both sample sizes must be positive");
    }
    if n + m != grid.len() {
        return invalid(format!(
            "n + m = {} but the grid has {} points",
            n + m,
            grid.len()
        ));
    }
    if permutations == 0 {
        return invalid("the number of permutations must be positive");
    }
    let total = n + m;
    let mut values: Vec<f64> = (0..permutations)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, "null-permutation", i as u64);
            let mut idx: Vec<usize> = (0..total).collect();
            for k in (1..total).rev() {
                let j = r.random_range(0..=k);
                idx.swap(k, j);
            }
            split_distance(grid, &idx[..n], &idx[n..])
        })
        .collect();
    values.sort_by(f64::total_cmp);
    Ok(NullDistribution {
        values,
        n,
        m,
        grid_fingerprint: grid.fingerprint(),
        seed,
    })
}

/// Smallest listed `t` with `F_M(t) >= 1 - alpha`.
pub fn critical_value(null: &NullDistribution, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return invalid(format!("alpha must lie in (0, 1), got {alpha}"));
    }
    null.validate()?;
    let m = null.len();
    let target = (1.0 - alpha) * m as f64;
    let k = ((target - 1e-9).ceil() as usize).clamp(1, m);
    Ok(null.values[k - 1])
}

/// `(1 + #{values >= d}) / (M + 1)`.
pub fn p_value(null: &NullDistribution, d: f64) -> f64 {
    let first = null.values.partition_point(|v| *v < d);
    let above = null.values.len() - first;
    (1 + above) as f64 / (null.values.len() + 1) as f64
}

/// Per-coordinate z-scoring of both samples with the pooled mean and variance.
/// Constant coordinates are only centered.
pub fn standardize_pooled(x: &[Point], y: &[Point]) -> Result<(Vec<Point>, Vec<Point>)> {
    let dim = check_samples(x, y)?;
    let total = (x.len() + y.len()) as f64;
    let mut mean = vec![0.0; dim];
    for p in x.iter().chain(y) {
        for (m, v) in mean.iter_mut().zip(p) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= total);
    let mut var = vec![0.0; dim];
    for p in x.iter().chain(y) {
        for ((s, v), m) in var.iter_mut().zip(p).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let sd: Vec<f64> = var
        .iter()
        .map(|s| {
            let sd = (s / total).sqrt();
            if sd > 0.0 {
                sd
            } else {
                1.0
            }
        })
        .collect();
    let apply = |pts: &[Point]| -> Vec<Point> {
        pts.iter()
            .map(|p| {
                p.iter()
                    .zip(&mean)
                    .zip(&sd)
                    .map(|((v, m), s)| (v - m) / s)
                    .collect()
            })
            .collect()
    };
    Ok((apply(x), apply(y)))
}

/// Looks the null up in `cache` or resamples (and stores) it.
pub fn obtain_null(
    grid: &BallGrid,
    n: usize,
    m: usize,
    permutations: usize,
    seed: u64,
    cache: Option<&dyn NullStore>,
) -> Result<NullDistribution> {
    let key = NullKey {
        n,
        m,
        grid_fingerprint: grid.fingerprint(),
        permutations,
        seed,
    };
    if let Some(hit) = cache.and_then(|c| c.load(&key)) {
        if hit.key() == key && hit.validate().is_ok() {
            return Ok(hit);
        }
    }
    let null = resample_null(grid, n, m, permutations, seed)?;
    if let Some(c) = cache {
        c.store(&null)?;
    }
    Ok(null)
}

/// Runs the full test: grid of size `n + m`, null (cached when possible), statistic,
/// decision `reject <=> D >= z`.
pub fn two_sample_test(
    x: &[Point],
    y: &[Point],
    config: &TestConfig,
    cache: Option<&dyn NullStore>,
) -> Result<TestReport> {
    config.validate()?;
    let dim = check_samples(x, y)?;
    let (n, m) = (x.len(), y.len());
    let grid = generate_ball_grid(
        n + m,
        dim,
        config.grid_method,
        config.grid_seed(),
        config.lloyd_iters,
    )?;
    let null_seed = config.null_seed();
    let null = obtain_null(&grid, n, m, config.permutations, null_seed, cache)?;
    let statistic = if config.standardize {
        let (xs, ys) = standardize_pooled(x, y)?;
        test_statistic(&xs, &ys, &grid)?
    } else {
        test_statistic(x, y, &grid)?
    };
    let z = critical_value(&null, config.alpha)?;
    Ok(TestReport {
        statistic,
        critical_value: z,
        p_value: p_value(&null, statistic),
        reject: statistic >= z,
        mixture_ratio: n as f64 / (n + m) as f64,
        n,
        m,
        dim,
        config: config.clone(),
        grid_fingerprint: grid.fingerprint(),
        null_seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::iid_points;

    fn null_from(values: Vec<f64>) -> NullDistribution {
        NullDistribution {
            values,
            n: 1,
            m: 1,
            grid_fingerprint: String::new(),
            seed: 0,
        }
    }

    #[test]
    fn critical_value_ecdf_arithmetic() {
        let null = null_from((1..=10).map(f64::from).collect());
        assert_eq!(critical_value(&null, 0.1).unwrap(), 9.0);
        assert_eq!(critical_value(&null, 0.95).unwrap(), 1.0);
        assert_eq!(critical_value(&null, 0.01).unwrap(), 10.0);
        let constant = null_from(vec![0.7; 25]);
        for a in [0.01, 0.3, 0.9] {
            assert_eq!(critical_value(&constant, a).unwrap(), 0.7);
        }
        assert!(critical_value(&null, 0.0).is_err());
        assert!(critical_value(&null, 1.0).is_err());
    }

    #[test]
    fn p_value_edges() {
        let null = null_from(vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(p_value(&null, 10.0), 0.2);
        assert_eq!(p_value(&null, 1.0), 1.0);
        assert_eq!(p_value(&null, -1.0), 1.0);
        assert_eq!(p_value(&null, 3.0), 0.6);
    }

    #[test]
    fn single_point_samples() {
        let grid = generate_ball_grid(2, 2, GridMethod::SobolRadial, 3, 0).unwrap();
        let x = vec![vec![5.0, 1.0]];
        let y = vec![vec![-2.0, 0.5]];
        let d = test_statistic(&x, &y, &grid).unwrap();
        assert_eq!(d, sq_dist(&grid.points[0], &grid.points[1]).sqrt());
        let null = resample_null(&grid, 1, 1, 16, 9).unwrap();
        assert!(null.values.iter().all(|v| *v == d));
        let single = resample_null(&grid, 1, 1, 1, 9).unwrap();
        assert_eq!(single.len(), 1);
    }

    #[test]
    fn boundary_convention_rejects_on_equality() {
        let x = vec![vec![0.0, 0.0]];
        let y = vec![vec![0.1, 0.0]];
        let config = TestConfig {
            alpha: 0.1,
            permutations: 20,
            ..TestConfig::default()
        };
        let report = two_sample_test(&x, &y, &config, None).unwrap();
        assert_eq!(report.statistic, report.critical_value);
        assert!(report.reject);
        assert_eq!(report.p_value, 1.0);
        assert_eq!(report.mixture_ratio, 0.5);
    }

    #[test]
    fn label_swap_is_symmetric() {
        let grid = generate_ball_grid(20, 2, GridMethod::SobolRadial, 1, 0).unwrap();
        let x = iid_points(10, 2, 1, "x");
        let y: Vec<Point> = iid_points(10, 2, 2, "y")
            .iter()
            .map(|p| vec![p[0] + 0.4, p[1]])
            .collect();
        let a = test_statistic(&x, &y, &grid).unwrap();
        let b = test_statistic(&y, &x, &grid).unwrap();
        assert_eq!(a, b);
        assert!((0.0..=2.0).contains(&a));
    }

    #[test]
    fn unequal_sizes_use_the_transportation_route() {
        let grid = generate_ball_grid(9, 2, GridMethod::SobolRadial, 1, 0).unwrap();
        let x = iid_points(4, 2, 1, "x");
        let y = iid_points(5, 2, 2, "y");
        let d = test_statistic(&x, &y, &grid).unwrap();
        assert!((0.0..=2.0).contains(&d));
        let null = resample_null(&grid, 4, 5, 50, 3).unwrap();
        null.validate().unwrap();
        assert!(null.values.iter().all(|v| (0.0..=2.0).contains(v)));
    }

    #[test]
    fn null_is_reproducible_and_cached() {
        let grid = generate_ball_grid(12, 2, GridMethod::Iid, 1, 0).unwrap();
        let a = resample_null(&grid, 6, 6, 40, 5).unwrap();
        let b = resample_null(&grid, 6, 6, 40, 5).unwrap();
        assert_eq!(a, b);
        let cache = MemoryNullCache::new();
        let first = obtain_null(&grid, 6, 6, 40, 5, Some(&cache)).unwrap();
        assert_eq!(cache.len(), 1);
        let second = obtain_null(&grid, 6, 6, 40, 5, Some(&cache)).unwrap();
        assert_eq!(
            critical_value(&first, 0.1).unwrap(),
            critical_value(&second, 0.1).unwrap()
        );
        assert_eq!(first, a);
    }

    #[test]
    fn argument_errors() {
        let grid = generate_ball_grid(4, 2, GridMethod::Iid, 1, 0).unwrap();
        assert!(resample_null(&grid, 2, 1, 10, 0).is_err());
        assert!(resample_null(&grid, 2, 2, 0, 0).is_err());
        assert!(resample_null(&grid, 0, 4, 1, 0).is_err());
        let x = vec![vec![0.0, 0.0]; 2];
        assert!(test_statistic(&x, &[vec![0.0]], &grid).is_err());
        assert!(test_statistic(&x, &x[..1], &grid).is_err());
        let bad = TestConfig {
            alpha: 1.5,
            ..TestConfig::default()
        };
        assert!(two_sample_test(&x, &x, &bad, None).is_err());
        assert!(two_sample_test(&x, &[], &TestConfig::default(), None).is_err());
    }

    #[test]
    fn standardization_zero_mean_unit_variance() {
        let x = vec![vec![1.0, 5.0], vec![3.0, 5.0]];
        let y = vec![vec![5.0, 5.0]];
        let (xs, ys) = standardize_pooled(&x, &y).unwrap();
        let all: Vec<&Point> = xs.iter().chain(&ys).collect();
        let mean: f64 = all.iter().map(|p| p[0]).sum::<f64>() / 3.0;
        let var: f64 = all.iter().map(|p| (p[0] - mean).powi(2)).sum::<f64>() / 3.0;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
        assert!(all.iter().all(|p| p[1] == 0.0));
    }
}
