//! Statistical verification harness: uniform convergence of the empirical BDF,
//! pivotality of the null, type-I calibration and power curves.
//!
//! Every replication draws from its own seeded stream and results are collected in
//! replication order, so tables are identical for any rayon thread count.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::bdf::{fit_ebdf, Label};
use crate::error::{invalid, Error, Result};
use crate::grid::{generate_ball_grid, GridMethod};
use crate::hypothesis::{
    obtain_null, test_statistic, two_sample_test, MemoryNullCache, TestConfig,
};
use crate::points::{norm, Point};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerFamily {
    UniformBall,
    UniformCube,
    Gaussian,
    GaussianShift,
}

/// A seeded data-generating law: `shift + scale * Z` with `Z` uniform on the unit ball,
/// uniform on `[-1, 1]^d`, or standard Gaussian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSpec {
    pub family: SamplerFamily,
    pub dim: usize,
    /// Location; empty means the origin. Required (and usually nonzero) for
    /// `gaussian_shift`, where its norm is the mean shift.
    #[serde(default)]
    pub shift: Vec<f64>,
    #[serde(default = "unit_scale")]
    pub scale: f64,
    #[serde(default)]
    pub seed: u64,
}

fn unit_scale() -> f64 {
    1.0
}

impl SamplerSpec {
    pub fn new(family: SamplerFamily, dim: usize, seed: u64) -> Self {
        SamplerSpec {
            family,
            dim,
            shift: Vec::new(),
            scale: 1.0,
            seed,
        }
    }

    pub fn with_shift(mut self, shift: Vec<f64>) -> Self {
        self.shift = shift;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return invalid("sampler dimension must be positive");
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return invalid(format!(
                "sampler scale must be positive, got {}",
                self.scale
            ));
        }
        if !self.shift.is_empty() && self.shift.len() != self.dim {
            return invalid(format!(
                "shift has {} coordinates, sampler dimension is {}",
                self.shift.len(),
                self.dim
            ));
        }
        if self.shift.iter().any(|v| !v.is_finite()) {
            return invalid("shift must be finite");
        }
        if self.family == SamplerFamily::GaussianShift && self.shift.is_empty() {
            return invalid("gaussian_shift needs a shift vector");
        }
        Ok(())
    }

    fn location(&self, k: usize) -> f64 {
        self.shift.get(k).copied().unwrap_or(0.0)
    }

    /// Draws `count` points from the stream keyed by `(self.seed, master, purpose, index)`.
    pub fn draw(&self, count: usize, master: u64, purpose: &str, index: u64) -> Result<Vec<Point>> {
        self.validate()?;
        let key = rng::derive_seed(
            rng::derive_seed(self.seed, purpose, index),
            "master",
            master,
        );
        let mut r = rng::stream(key, "sampler", 0);
        let d = self.dim;
        let unit: Vec<Point> = match self.family {
            SamplerFamily::UniformBall => crate::grid::iid_points(count, d, key, "sampler-ball"),
            SamplerFamily::UniformCube => (0..count)
                .map(|_| (0..d).map(|_| r.random_range(-1.0..=1.0)).collect())
                .collect(),
            SamplerFamily::Gaussian | SamplerFamily::GaussianShift => (0..count)
                .map(|_| (0..d).map(|_| r.sample(StandardNormal)).collect())
                .collect(),
        };
        Ok(unit
            .into_iter()
            .map(|p| {
                p.iter()
                    .enumerate()
                    .map(|(k, v)| self.location(k) + self.scale * v)
                    .collect()
            })
            .collect())
    }

    /// Closed-form BDF onto the uniform ball, where one exists: affine images of the
    /// ball in any dimension, and every family in one dimension.
    pub fn true_bdf(&self) -> Result<impl Fn(&[f64]) -> Point + '_> {
        self.validate()?;
        if self.family != SamplerFamily::UniformBall && self.dim != 1 {
            return invalid(format!(
                "{:?} in dimension {} has no closed-form BDF",
                self.family, self.dim
            ));
        }
        let normal = Normal::standard();
        Ok(move |x: &[f64]| -> Point {
            let z: Point = x
                .iter()
                .enumerate()
                .map(|(k, v)| (v - self.location(k)) / self.scale)
                .collect();
            match self.family {
                SamplerFamily::Gaussian | SamplerFamily::GaussianShift => {
                    vec![2.0 * normal.cdf(z[0]) - 1.0]
                }
                _ => {
                    let len = norm(&z);
                    if len <= 1.0 {
                        z
                    } else {
                        z.iter().map(|v| v / len).collect()
                    }
                }
            }
        })
    }
}

/// Rows of numeric metrics keyed by their leading columns, plus run metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentTable {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl ExperimentTable {
    fn new(name: &str, columns: &[&str]) -> Self {
        ExperimentTable {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            metadata: BTreeMap::new(),
        }
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    /// CSV with a header row; floats use the shortest round-trip representation.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush().map_err(|e| Error::Malformed(e.to_string()))?;
        Ok(())
    }

    /// Reads a table written by [`write_csv`](Self::write_csv); metadata is not part of
    /// the CSV and comes back empty.
    pub fn read_csv<R: Read>(name: &str, input: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(input);
        let columns: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for (k, rec) in r.records().enumerate() {
            let rec = rec?;
            let row = rec
                .iter()
                .enumerate()
                .map(|(c, cell)| {
                    cell.trim().parse::<f64>().map_err(|_| Error::Parse {
                        row: k + 2,
                        column: c + 1,
                        message: format!("`{cell}` is not a number"),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        Ok(ExperimentTable {
            name: name.to_string(),
            columns,
            rows,
            metadata: BTreeMap::new(),
        })
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let k = values.len();
    if k % 2 == 1 {
        values[k / 2]
    } else {
        0.5 * (values[k / 2 - 1] + values[k / 2])
    }
}

fn elapsed(table: &mut ExperimentTable, start: Instant) {
    table
        .metadata
        .insert("elapsed_ms".into(), start.elapsed().as_millis().to_string());
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GcConfig {
    pub sampler: SamplerSpec,
    pub sizes: Vec<usize>,
    pub reps: usize,
    #[serde(default = "default_query_count")]
    pub query_count: usize,
    #[serde(default)]
    pub grid_method: GridMethod,
    #[serde(default)]
    pub seed: u64,
}

fn default_query_count() -> usize {
    10_000
}

/// Probed sup-error `sup_x |F_n(x) - F(x)|` of the empirical BDF against the closed-form
/// BDF. The sup runs over the sample itself plus a uniform fill of the sample's bounding
/// box inflated 1.5 times around its center, `query_count` points in all.
pub fn gc_convergence(config: &GcConfig) -> Result<ExperimentTable> {
    let start = Instant::now();
    let spec = &config.sampler;
    spec.validate()?;
    let truth = spec.true_bdf()?;
    if config.sizes.is_empty() || config.sizes.contains(&0) {
        return invalid("sizes must be nonempty and positive");
    }
    if config.reps == 0 {
        return invalid("reps must be positive");
    }
    let jobs: Vec<(usize, usize)> = config
        .sizes
        .iter()
        .flat_map(|&n| (0..config.reps).map(move |r| (n, r)))
        .collect();
    let errors: Vec<f64> = jobs
        .par_iter()
        .map(|&(n, rep)| -> Result<f64> {
            let index = ((n as u64) << 32) | rep as u64;
            let sample = spec.draw(n, config.seed, "gc-sample", index)?;
            let grid = generate_ball_grid(
                n,
                spec.dim,
                config.grid_method,
                rng::derive_seed(config.seed, "gc-grid", index),
                0,
            )?;
            let f = fit_ebdf(&sample, &vec![Label::X; n], &grid)?;
            let queries = probe_cloud(
                &sample,
                config.query_count,
                rng::derive_seed(config.seed, "gc-query", index),
            );
            let mut worst = 0.0f64;
            for q in sample.iter().chain(&queries) {
                let got = f.evaluate(q)?;
                let want = truth(q);
                let err = norm(
                    &got.iter()
                        .zip(&want)
                        .map(|(a, b)| a - b)
                        .collect::<Vec<_>>(),
                );
                worst = worst.max(err);
            }
            Ok(worst)
        })
        .collect::<Result<Vec<f64>>>()?;

    let mut table =
        ExperimentTable::new("gc", &["size", "median_sup_error", "max_sup_error", "reps"]);
    for (k, &n) in config.sizes.iter().enumerate() {
        let mut errs = errors[k * config.reps..(k + 1) * config.reps].to_vec();
        let max = errs.iter().copied().fold(0.0, f64::max);
        table
            .rows
            .push(vec![n as f64, median(&mut errs), max, config.reps as f64]);
    }
    table
        .metadata
        .insert("seed".into(), config.seed.to_string());
    elapsed(&mut table, start);
    Ok(table)
}

fn probe_cloud(sample: &[Point], total: usize, seed: u64) -> Vec<Point> {
    let fill = total.saturating_sub(sample.len());
    let d = sample[0].len();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for p in sample {
        for k in 0..d {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let mut r = rng::stream(seed, "probe", 0);
    (0..fill)
        .map(|_| {
            (0..d)
                .map(|k| {
                    let c = 0.5 * (lo[k] + hi[k]);
                    let half = (0.75 * (hi[k] - lo[k])).max(1e-12);
                    c + half * r.random_range(-1.0..=1.0)
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PivotalityResult {
    pub ks_distance: f64,
    pub p_value: f64,
    pub level: f64,
    pub pass: bool,
    pub reps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PivotalityConfig {
    pub sampler_a: SamplerSpec,
    pub sampler_b: SamplerSpec,
    pub n: usize,
    pub m: usize,
    pub reps: usize,
    #[serde(default)]
    pub grid_method: GridMethod,
    #[serde(default)]
    pub seed: u64,
}

/// Level of the KS comparison in [`pivotality_check`].
pub const PIVOTALITY_LEVEL: f64 = 0.01;

/// Null statistics (both samples from the same law) under two different laws on one
/// shared grid, compared by a two-sample Kolmogorov-Smirnov test.
pub fn pivotality_check(config: &PivotalityConfig) -> Result<PivotalityResult> {
    let (a, b) = (&config.sampler_a, &config.sampler_b);
    a.validate()?;
    b.validate()?;
    if a.dim != b.dim {
        return invalid(format!("sampler dimensions differ: {} vs {}", a.dim, b.dim));
    }
    if config.n == 0 || config.m == 0 || config.reps == 0 {
        return invalid("n, m and reps must be positive");
    }
    let grid = generate_ball_grid(
        config.n + config.m,
        a.dim,
        config.grid_method,
        rng::derive_seed(config.seed, "pivotality-grid", 0),
        0,
    )?;
    let simulate = |spec: &SamplerSpec, tag: &str| -> Result<Vec<f64>> {
        (0..config.reps)
            .into_par_iter()
            .map(|rep| {
                let x = spec.draw(config.n, config.seed, &format!("{tag}-x"), rep as u64)?;
                let y = spec.draw(config.m, config.seed, &format!("{tag}-y"), rep as u64)?;
                test_statistic(&x, &y, &grid)
            })
            .collect()
    };
    let sa = simulate(a, "pivotality-a")?;
    let sb = simulate(b, "pivotality-b")?;
    let d = ks_distance(&sa, &sb);
    let p = ks_p_value(d, sa.len(), sb.len());
    Ok(PivotalityResult {
        ks_distance: d,
        p_value: p,
        level: PIVOTALITY_LEVEL,
        pass: p >= PIVOTALITY_LEVEL,
        reps: config.reps,
    })
}

/// Two-sample Kolmogorov-Smirnov distance `sup_t |F_a(t) - F_b(t)|` (ties handled).
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        let t = a[i].min(b[j]);
        while i < a.len() && a[i] <= t {
            i += 1;
        }
        while j < b.len() && b[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic p-value of the two-sample KS distance (Kolmogorov series with the
/// Stephens small-sample correction).
pub fn ks_p_value(d: f64, na: usize, nb: usize) -> f64 {
    let en = ((na * nb) as f64 / (na + nb) as f64).sqrt();
    let lambda = (en + 0.12 + 0.11 / en) * d;
    kolmogorov_q(lambda)
}

fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=200 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub rejections: usize,
    pub trials: usize,
    pub rate: f64,
    pub alpha: f64,
    /// Binomial standard deviation `sqrt(alpha (1 - alpha) / trials)`.
    pub binomial_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Type1Config {
    pub sampler: SamplerSpec,
    pub n: usize,
    pub m: usize,
    pub alpha: f64,
    pub trials: usize,
    pub permutations: usize,
    #[serde(default)]
    pub grid_method: GridMethod,
    #[serde(default)]
    pub seed: u64,
}

/// Rejection rate under H0. Each trial uses fresh data and its own test seed (hence a
/// fresh grid and null), so the rate estimates the unconditional type-I error.
pub fn type_i_calibration(config: &Type1Config) -> Result<CalibrationResult> {
    if config.trials == 0 {
        return invalid("trials must be positive");
    }
    let spec = &config.sampler;
    spec.validate()?;
    let decisions: Vec<bool> = (0..config.trials)
        .into_par_iter()
        .map(|t| -> Result<bool> {
            let x = spec.draw(config.n, config.seed, "type1-x", t as u64)?;
            let y = spec.draw(config.m, config.seed, "type1-y", t as u64)?;
            let test = TestConfig {
                alpha: config.alpha,
                permutations: config.permutations,
                seed: rng::derive_seed(config.seed, "type1-test", t as u64),
                grid_method: config.grid_method,
                lloyd_iters: 0,
                standardize: false,
            };
            Ok(two_sample_test(&x, &y, &test, None)?.reject)
        })
        .collect::<Result<Vec<bool>>>()?;
    let rejections = decisions.iter().filter(|r| **r).count();
    Ok(CalibrationResult {
        rejections,
        trials: config.trials,
        rate: rejections as f64 / config.trials as f64,
        alpha: config.alpha,
        binomial_sd: (config.alpha * (1.0 - config.alpha) / config.trials as f64).sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerConfig {
    pub sampler_x: SamplerSpec,
    pub sampler_y: SamplerSpec,
    /// Per-sample sizes; each row uses `n = m = size`.
    pub sizes: Vec<usize>,
    pub alpha: f64,
    pub trials: usize,
    pub permutations: usize,
    #[serde(default)]
    pub grid_method: GridMethod,
    #[serde(default)]
    pub seed: u64,
}

/// Empirical rejection rate per sample size. Within one size all trials share the
/// grid and the null distribution (computed once, as the statistic is pivotal).
pub fn power_curve(config: &PowerConfig) -> Result<ExperimentTable> {
    let start = Instant::now();
    let (sx, sy) = (&config.sampler_x, &config.sampler_y);
    sx.validate()?;
    sy.validate()?;
    if sx.dim != sy.dim {
        return invalid("samplers must share a dimension");
    }
    if config.trials == 0 || config.sizes.is_empty() || config.sizes.contains(&0) {
        return invalid("trials and sizes must be positive");
    }
    let mut table =
        ExperimentTable::new("power", &["size", "rejection_rate", "rejections", "trials"]);
    for &size in &config.sizes {
        let test = TestConfig {
            alpha: config.alpha,
            permutations: config.permutations,
            seed: rng::derive_seed(config.seed, "power-test", size as u64),
            grid_method: config.grid_method,
            lloyd_iters: 0,
            standardize: false,
        };
        test.validate()?;
        let cache = MemoryNullCache::new();
        let grid = generate_ball_grid(2 * size, sx.dim, test.grid_method, test.grid_seed(), 0)?;
        obtain_null(
            &grid,
            size,
            size,
            test.permutations,
            test.null_seed(),
            Some(&cache),
        )?;
        let decisions: Vec<bool> = (0..config.trials)
            .into_par_iter()
            .map(|t| -> Result<bool> {
                let index = ((size as u64) << 32) | t as u64;
                let x = sx.draw(size, config.seed, "power-x", index)?;
                let y = sy.draw(size, config.seed, "power-y", index)?;
                Ok(two_sample_test(&x, &y, &test, Some(&cache))?.reject)
            })
            .collect::<Result<Vec<bool>>>()?;
        let rejections = decisions.iter().filter(|r| **r).count();
        table.rows.push(vec![
            size as f64,
            rejections as f64 / config.trials as f64,
            rejections as f64,
            config.trials as f64,
        ]);
    }
    table
        .metadata
        .insert("seed".into(), config.seed.to_string());
    table
        .metadata
        .insert("alpha".into(), config.alpha.to_string());
    elapsed(&mut table, start);
    Ok(table)
}

/// `c(t) = max(1, |t|) sqrt(max(1, |t|)^2 - 1)`, the boundary of the support of the
/// discontinuous example.
pub fn counterexample_boundary(t: f64) -> f64 {
    let a = t.abs().max(1.0);
    a * (a * a - 1.0).sqrt()
}

/// A BDF onto the unit disk that is discontinuous at the origin: sequences approaching
/// 0 along the positive and negative first axis map to `(1, 0)` and `(-1, 0)`.
pub fn counterexample_bdf(x: [f64; 2]) -> [f64; 2] {
    let [x1, x2] = x;
    if x1 == 0.0 && x2 == 0.0 {
        return [0.0, 0.0];
    }
    if x1 != 0.0 && x2 * x2 <= x1.abs() {
        return [x1 / x1.abs(), 0.0];
    }
    let c = counterexample_boundary(x2);
    if c <= x1.abs() && x1.abs() < x2 * x2 {
        let cube = x2 * x2 * x2;
        return [x1 * x2 / cube, (x2 * x2 * x2 * x2 - x1 * x1) / cube];
    }
    let len = (x1 * x1 + x2 * x2).sqrt();
    [x1 / len, x2 / len]
}
