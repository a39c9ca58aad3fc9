//! Deterministic point sets inside the closed unit ball.
//!
//! The grid plays the role of the discretized reference measure: the pooled sample is
//! matched onto it, and the permutation null distribution is built from its splits.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sobol::params::JoeKuoD6;
use sobol::Sobol;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{invalid, Result};
use crate::points::{check_points, norm, sq_dist, Point};
use crate::rng;

/// Largest dimension for which rejection sampling from the cube is used by `iid`.
const REJECTION_MAX_DIM: usize = 4;
/// Reference-cloud size per grid point used by Lloyd relaxation.
pub const LLOYD_CLOUD_FACTOR: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GridMethod {
    /// Seeded i.i.d. draws from the uniform law on the ball.
    Iid,
    /// Digitally shifted Sobol points pushed into the ball by a direction/radius transform.
    #[default]
    SobolRadial,
    /// `Iid` followed by centroidal (Lloyd) relaxation against a seeded Monte-Carlo cloud.
    Lloyd,
    /// Points supplied by the caller rather than generated here.
    External,
}

impl fmt::Display for GridMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GridMethod::Iid => "iid",
            GridMethod::SobolRadial => "sobol_radial",
            GridMethod::Lloyd => "lloyd",
            GridMethod::External => "external",
        })
    }
}

impl FromStr for GridMethod {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "iid" => Ok(GridMethod::Iid),
            "sobol_radial" | "sobol-radial" | "sobol" => Ok(GridMethod::SobolRadial),
            "lloyd" => Ok(GridMethod::Lloyd),
            other => invalid(format!(
                "unknown grid method `{other}` (expected iid, sobol_radial or lloyd)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallGrid {
    pub dim: usize,
    pub points: Vec<Point>,
    pub method: GridMethod,
    pub seed: u64,
    pub lloyd_iters: usize,
    /// Non-fatal events during generation, e.g. a perturbed duplicate.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl BallGrid {
    /// Wraps caller-supplied points after checking the grid invariants.
    pub fn from_points(points: Vec<Point>) -> Result<Self> {
        let dim = check_points(&points, "grid")?;
        let grid = BallGrid {
            dim,
            points,
            method: GridMethod::External,
            seed: 0,
            lloyd_iters: 0,
            warnings: Vec::new(),
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let dim = check_points(&self.points, "grid")?;
        if dim != self.dim {
            return invalid(format!(
                "grid declares dim {} but points have {dim}",
                self.dim
            ));
        }
        if let Some(i) = self.points.iter().position(|p| norm(p) > 1.0) {
            return invalid(format!("grid point {i} lies outside the unit ball"));
        }
        let mut seen = HashSet::with_capacity(self.points.len());
        for (i, p) in self.points.iter().enumerate() {
            if !seen.insert(bits(p)) {
                return invalid(format!("grid point {i} duplicates an earlier point"));
            }
        }
        Ok(())
    }

    /// Content hash of the dimension and the exact point coordinates (hex SHA-256).
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.dim as u64).to_le_bytes());
        hasher.update((self.points.len() as u64).to_le_bytes());
        for p in &self.points {
            for v in p {
                hasher.update(v.to_bits().to_le_bytes());
            }
        }
        hex::encode(hasher.finalize())
    }
}

fn bits(p: &[f64]) -> Vec<u64> {
    p.iter().map(|v| v.to_bits()).collect()
}

pub fn generate_ball_grid(
    count: usize,
    dim: usize,
    method: GridMethod,
    seed: u64,
    lloyd_iters: usize,
) -> Result<BallGrid> {
    if count == 0 {
        return invalid("grid count must be positive");
    }
    if dim == 0 {
        return invalid("grid dimension must be positive");
    }
    if lloyd_iters > 0 && method != GridMethod::Lloyd {
        return invalid("lloyd_iters > 0 requires the lloyd method");
    }
    let mut points = match method {
        GridMethod::Iid => iid_points(count, dim, seed, "grid-iid"),
        GridMethod::SobolRadial => sobol_radial_points(count, dim, seed)?,
        GridMethod::Lloyd => {
            let mut pts = iid_points(count, dim, seed, "grid-iid");
            let cloud = iid_points(LLOYD_CLOUD_FACTOR * count, dim, seed, "grid-lloyd-cloud");
            for _ in 0..lloyd_iters {
                lloyd_step(&mut pts, &cloud);
            }
            pts
        }
        GridMethod::External => return invalid("external grids cannot be generated"),
    };
    let warnings = dedupe(&mut points);
    let grid = BallGrid {
        dim,
        points,
        method,
        seed,
        lloyd_iters,
        warnings,
    };
    debug_assert!(grid.validate().is_ok());
    Ok(grid)
}

/// Uniform draws from the ball. Low dimensions use rejection from the cube; above
/// `REJECTION_MAX_DIM` the acceptance rate collapses, so a Gaussian direction times a
/// `U^(1/d)` radius is used instead (same law).
pub(crate) fn iid_points(count: usize, dim: usize, seed: u64, purpose: &str) -> Vec<Point> {
    let mut rng = rng::stream(seed, purpose, 0);
    let mut out = Vec::with_capacity(count);
    if dim <= REJECTION_MAX_DIM {
        while out.len() < count {
            let p: Point = (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect();
            if norm(&p) <= 1.0 {
                out.push(p);
            }
        }
    } else {
        while out.len() < count {
            let g: Point = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let len = norm(&g);
            if len == 0.0 {
                continue;
            }
            let r: f64 = rng.random::<f64>().powf(1.0 / dim as f64);
            out.push(clamp_to_ball(g.iter().map(|v| v / len * r).collect()));
        }
    }
    out
}

fn sobol_radial_points(count: usize, dim: usize, seed: u64) -> Result<Vec<Point>> {
    let params = JoeKuoD6::minimal();
    let sobol_dims = dim + 1;
    if sobol_dims > params.max_dims {
        return invalid(format!(
            "sobol_radial supports at most {} dimensions",
            params.max_dims - 1
        ));
    }
    let mut shift_rng = rng::stream(seed, "grid-sobol-shift", 0);
    let shift: Vec<u32> = (0..sobol_dims).map(|_| shift_rng.random()).collect();
    let normal = Normal::standard();
    let scale = 1.0 / 4_294_967_296.0;
    let seq = Sobol::<u32>::new(sobol_dims, &params);
    let mut out = Vec::with_capacity(count);
    for raw in seq {
        if out.len() == count {
            break;
        }
        let unit: Vec<f64> = raw
            .iter()
            .zip(&shift)
            .map(|(v, s)| ((v ^ s) as f64 + 0.5) * scale)
            .collect();
        let radius = unit[dim].powf(1.0 / dim as f64);
        let p: Point = if dim == 1 {
            vec![if unit[0] < 0.5 { -radius } else { radius }]
        } else {
            let g: Vec<f64> = unit[..dim].iter().map(|&u| normal.inverse_cdf(u)).collect();
            let len = norm(&g);
            if len == 0.0 {
                continue;
            }
            g.iter().map(|v| v / len * radius).collect()
        };
        out.push(clamp_to_ball(p));
    }
    if out.len() < count {
        return invalid("Sobol sequence exhausted before reaching the requested count");
    }
    Ok(out)
}

/// One centroidal relaxation step: every grid point moves to the centroid of the
/// cloud points nearest to it; points with empty cells stay put.
fn lloyd_step(points: &mut [Point], cloud: &[Point]) {
    let dim = points[0].len();
    let mut sums = vec![vec![0.0; dim]; points.len()];
    let mut counts = vec![0usize; points.len()];
    for c in cloud {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (j, p) in points.iter().enumerate() {
            let d = sq_dist(c, p);
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        counts[best] += 1;
        for (s, v) in sums[best].iter_mut().zip(c) {
            *s += v;
        }
    }
    for ((p, s), &k) in points.iter_mut().zip(&sums).zip(&counts) {
        if k > 0 {
            *p = clamp_to_ball(s.iter().map(|v| v / k as f64).collect());
        }
    }
}

/// Pulls a point whose rounded norm exceeds one back onto the closed ball.
fn clamp_to_ball(mut p: Point) -> Point {
    while norm(&p) > 1.0 {
        for v in p.iter_mut() {
            *v *= 1.0 - f64::EPSILON;
        }
    }
    p
}

/// Perturbs later duplicates toward the origin by the smallest relative step until
/// every point is distinct.
fn dedupe(points: &mut [Point]) -> Vec<String> {
    let mut warnings = Vec::new();
    let mut seen = HashSet::with_capacity(points.len());
    for (i, p) in points.iter_mut().enumerate() {
        let mut steps = 0u32;
        while !seen.insert(bits(p)) {
            steps += 1;
            if p.iter().all(|v| *v == 0.0) {
                p[0] = f64::MIN_POSITIVE * steps as f64;
            } else {
                for v in p.iter_mut() {
                    *v *= 1.0 - f64::EPSILON;
                }
            }
        }
        if steps > 0 {
            warnings.push(format!(
                "grid point {i} duplicated an earlier point; perturbed"
            ));
        }
    }
    warnings
}
