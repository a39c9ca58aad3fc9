//! Acceptance suite: one PASS/FAIL/SKIP line per criterion, non-zero exit on any FAIL.
//!
//! Criterion 11 needs the white wine-quality CSV (semicolon separated, with header).
//! Point `BRENIER_WINE_CSV` at it, or place it at `data/winequality-white.csv` in the
//! workspace root. Without it the criterion is reported as SKIP and the same pipeline
//! is exercised on a synthetic file in the same format.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use brenier::bdf::{fit_ebdf, Label};
use brenier::experiments::{
    counterexample_bdf, gc_convergence, pivotality_check, power_curve, type_i_calibration,
    CalibrationResult, ExperimentTable, GcConfig, PivotalityConfig, PivotalityResult, PowerConfig,
    SamplerFamily, SamplerSpec, Type1Config,
};
use brenier::hypothesis::resample_null;
use brenier::transport::{
    check_cyclical_monotonicity, solve_assignment, solve_transport, CostMatrix, MonotonicityMode,
};
use brenier::{generate_ball_grid, GridMethod, Point};
use support::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Pass,
    Fail,
    Skip,
}

struct Verdict {
    status: Status,
    detail: String,
}

fn verdict(ok: bool, detail: String) -> Verdict {
    Verdict {
        status: if ok { Status::Pass } else { Status::Fail },
        detail,
    }
}

fn within(limit_s: u64, elapsed: Duration) -> bool {
    elapsed <= Duration::from_secs(limit_s)
}

fn pool(threads: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
}

fn c1_assignment() -> Verdict {
    let start = Instant::now();
    let (mut worst_gap, mut worst_cert, mut count) = (0.0f64, 0.0f64, 0);
    for n in 2..=7 {
        for d in 1..=3 {
            for k in 0..100 {
                let a = gaussian(n, d, 1001, k);
                let b = gaussian(n, d, 1002, k);
                let (asg, duals) = solve_assignment(&a, &b).unwrap();
                let (best, _) = brute_force_assignment(&cost_matrix(&a, &b), 0.0);
                worst_gap =
                    worst_gap.max((asg.cost - best).abs() / best.abs().max(f64::MIN_POSITIVE));
                let cost = CostMatrix::squared_euclidean(&a, &b);
                let support = asg.perm.iter().enumerate().map(|(i, &j)| (i, j));
                worst_cert = worst_cert.max(duals.certificate_violation(&cost, support));
                count += 1;
            }
        }
    }
    let t = start.elapsed();
    verdict(
        worst_gap <= 1e-9 && worst_cert <= 1e-9 && within(30, t),
        format!("{count} instances, max relative gap {worst_gap:.1e}, max certificate violation {worst_cert:.1e}, {t:.1?}"),
    )
}

fn c2_transportation() -> Verdict {
    let start = Instant::now();
    let (mut worst, mut worst_cert, mut count) = (0.0f64, 0.0f64, 0);
    for (n, m) in [(2, 3), (3, 4), (4, 5)] {
        for k in 0..50 {
            let a = gaussian(n, 2, 2001, k);
            let b = gaussian(m, 2, 2002, k);
            let (plan, duals) = solve_transport(&a, &b).unwrap();
            let oracle = lp_oracle(&cost_matrix(&a, &b));
            worst = worst.max((plan.cost - oracle).abs() / oracle.max(1e-300));
            let cost = CostMatrix::squared_euclidean(&a, &b);
            let support = plan.entries.iter().map(|e| (e.source, e.target));
            worst_cert = worst_cert.max(duals.certificate_violation(&cost, support));
            count += 1;
        }
    }
    let t = start.elapsed();
    verdict(
        worst <= 1e-9 && worst_cert <= 1e-9 && within(60, t),
        format!("{count} instances, max relative gap {worst:.1e}, max certificate violation {worst_cert:.1e}, {t:.1?}"),
    )
}

fn c3_one_dimensional() -> Verdict {
    let (mut perm_ok, mut step_ok) = (0, 0);
    let total = 50;
    for k in 0..total {
        let n = 5 + k as usize;
        let sample = gaussian(n, 1, 3001, k);
        let grid = generate_ball_grid(n, 1, GridMethod::SobolRadial, 3002 + k, 0).unwrap();
        let f = fit_ebdf(&sample, &vec![Label::X; n], &grid).unwrap();
        let s: Vec<f64> = sample.iter().map(|p| p[0]).collect();
        let g: Vec<f64> = grid.points.iter().map(|p| p[0]).collect();
        perm_ok += usize::from(f.assignment.perm == sort_oracle_1d(&s, &g));
        let lo = s.iter().copied().fold(f64::INFINITY, f64::min) - 0.5;
        let hi = s.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 0.5;
        let mut previous = f64::NEG_INFINITY;
        let mut ok = true;
        let queries = (0..1000)
            .map(|t| lo + (hi - lo) * t as f64 / 999.0)
            .chain(s.iter().copied());
        for (t, q) in queries.enumerate() {
            let image = f.evaluate(&[q]).unwrap()[0];
            ok &= step_oracle_1d(&s, &g, q).contains(&image);
            if t < 1000 {
                ok &= image >= previous;
                previous = image;
            }
        }
        step_ok += usize::from(ok);
    }
    verdict(
        perm_ok == total as usize && step_ok == total as usize,
        format!("{perm_ok}/{total} permutations equal the sort oracle, {step_ok}/{total} step functions agree on 1000 queries plus the samples"),
    )
}

fn c4_composition_fixture() -> Verdict {
    let h = 3f64.sqrt() / 2.0;
    let pairs: Vec<(Point, Point)> = vec![
        (vec![0.0, 0.0], vec![0.5, -h]),
        (vec![1.0, 0.0], vec![0.0, 0.0]),
    ];
    let r = check_cyclical_monotonicity(&pairs, MonotonicityMode::Exact, 1, 0).unwrap();
    let Some(w) = &r.witness else {
        return verdict(false, format!("no witness (monotone = {})", r.monotone));
    };
    verdict(
        !r.monotone && w.cycle.len() == 2 && w.identity_sum == 0.0 && w.shifted_sum == 0.5,
        format!(
            "monotone = {}, cycle {:?}, identity sum {} vs cycled sum {}",
            r.monotone, w.cycle, w.identity_sum, w.shifted_sum
        ),
    )
}

fn c5_discontinuity_fixture() -> Verdict {
    let mut exact = 0;
    let mut worst_norm = 0.0f64;
    for n in 2..=100 {
        let t = 1.0 / n as f64;
        let (p, q) = (counterexample_bdf([t, 0.0]), counterexample_bdf([-t, 0.0]));
        exact += usize::from(p == [1.0, 0.0] && q == [-1.0, 0.0]);
        worst_norm = worst_norm.max(p[0].hypot(p[1])).max(q[0].hypot(q[1]));
    }
    for x in gaussian(20_000, 2, 5001, 0) {
        let y = counterexample_bdf([3.0 * x[0], 3.0 * x[1]]);
        worst_norm = worst_norm.max(y[0].hypot(y[1]));
    }
    verdict(
        exact == 99 && worst_norm <= 1.0 + 1e-12,
        format!("{exact}/99 sequence pairs exact, largest output norm {worst_norm}"),
    )
}

fn gc_run() -> ExperimentTable {
    gc_convergence(&GcConfig {
        sampler: SamplerSpec::new(SamplerFamily::UniformBall, 2, 0),
        sizes: vec![50, 200, 800],
        reps: 20,
        query_count: 10_000,
        grid_method: GridMethod::SobolRadial,
        seed: 6006,
    })
    .unwrap()
}

fn c6_glivenko_cantelli(table: &ExperimentTable, t: Duration) -> Verdict {
    let med = table.column("median_sup_error").unwrap();
    verdict(
        med.windows(2).all(|w| w[1] < w[0]) && within(180, t),
        format!("median sup-error {med:.4?} at sizes 50/200/800, {t:.1?}"),
    )
}

fn pivotality_run() -> Vec<PivotalityResult> {
    (0..5)
        .map(|s| {
            pivotality_check(&PivotalityConfig {
                sampler_a: SamplerSpec::new(SamplerFamily::UniformCube, 2, 0),
                sampler_b: SamplerSpec::new(SamplerFamily::Gaussian, 2, 0),
                n: 16,
                m: 16,
                reps: 400,
                grid_method: GridMethod::SobolRadial,
                seed: 7000 + s,
            })
            .unwrap()
        })
        .collect()
}

fn c7_pivotality(results: &[PivotalityResult], t: Duration) -> Verdict {
    let rejections = results.iter().filter(|r| !r.pass).count();
    let p: Vec<f64> = results.iter().map(|r| r.p_value).collect();
    verdict(
        rejections <= 1 && within(180, t),
        format!("{rejections}/5 seeds reject at 0.01 (KS p-values {p:.3?}), {t:.1?}"),
    )
}

fn type1_run() -> CalibrationResult {
    type_i_calibration(&Type1Config {
        sampler: SamplerSpec::new(SamplerFamily::Gaussian, 2, 0),
        n: 32,
        m: 32,
        alpha: 0.1,
        trials: 1000,
        permutations: 500,
        grid_method: GridMethod::SobolRadial,
        seed: 8008,
    })
    .unwrap()
}

fn c8_type_one(r: &CalibrationResult, t: Duration) -> Verdict {
    verdict(
        (0.07..=0.13).contains(&r.rate) && within(600, t),
        format!(
            "{}/{} rejections, rate {:.3}, {t:.1?}",
            r.rejections, r.trials, r.rate
        ),
    )
}

fn power_run() -> ExperimentTable {
    power_curve(&PowerConfig {
        sampler_x: SamplerSpec::new(SamplerFamily::Gaussian, 2, 0),
        sampler_y: SamplerSpec::new(SamplerFamily::GaussianShift, 2, 0).with_shift(vec![3.0, 0.0]),
        sizes: vec![16, 64, 256],
        alpha: 0.1,
        trials: 200,
        permutations: 500,
        grid_method: GridMethod::SobolRadial,
        seed: 9009,
    })
    .unwrap()
}

fn c9_power(table: &ExperimentTable, t: Duration) -> Verdict {
    let rate = table.column("rejection_rate").unwrap();
    verdict(
        rate.windows(2).all(|w| w[1] >= w[0]) && rate[2] >= 0.9 && within(900, t),
        format!("rejection rates {rate:?} at sizes 16/64/256, {t:.1?}"),
    )
}

fn c10_split_oracle() -> Verdict {
    let grid = generate_ball_grid(4, 2, GridMethod::SobolRadial, 10_010, 0).unwrap();
    let exact = split_null(&grid.points, 2, 2);
    let null = resample_null(&grid, 2, 2, 10_000, 10_011).unwrap();
    let d = ks(&null.values, &exact);
    verdict(
        d <= 0.05,
        format!("KS distance {d:.4} between M = 10^4 resamples and the 6 exact splits"),
    )
}

fn wine_csv() -> Option<PathBuf> {
    if let Ok(p) = std::env::var("BRENIER_WINE_CSV") {
        return Some(PathBuf::from(p));
    }
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/winequality-white.csv");
    root.exists().then_some(root)
}

const WINE_HEADER: &str = "\"fixed acidity\";\"volatile acidity\";\"citric acid\";\"residual sugar\";\"chlorides\";\"free sulfur dioxide\";\"total sulfur dioxide\";\"density\";\"pH\";\"sulphates\";\"alcohol\";\"quality\"";

/// A file in the upstream format whose two groups differ in several features.
fn synthetic_wine(path: &Path) {
    let noise = gaussian(900, 11, 11_011, 0);
    let base = [
        6.8, 0.28, 0.33, 6.4, 0.045, 35.0, 138.0, 0.994, 3.19, 0.49, 10.5,
    ];
    let spread = [
        0.8, 0.1, 0.12, 5.0, 0.02, 17.0, 42.0, 0.003, 0.15, 0.11, 1.2,
    ];
    let mut text = format!("{WINE_HEADER}\n");
    for (r, z) in noise.iter().enumerate() {
        let quality = [5, 6, 7][r % 3];
        let cells: Vec<String> = (0..11)
            .map(|k| {
                let shift = if quality == 7 && (k == 4 || k == 7 || k == 10) {
                    1.5
                } else {
                    0.0
                };
                format!("{}", base[k] + spread[k] * (z[k] + shift))
            })
            .collect();
        text.push_str(&format!("{};{quality}\n", cells.join(";")));
    }
    std::fs::write(path, text).unwrap();
}

/// Runs `wine` and a manifest rerun; returns (rejected, identical, detail).
fn wine_pipeline(csv: &Path, dir: &Path, n: usize) -> Result<(bool, bool, String), String> {
    let bin = env!("CARGO_BIN_EXE_brenier");
    let report = dir.join("report.json");
    let status = Command::new(bin)
        .args(["--seed", "2024", "wine", "--csv"])
        .arg(csv)
        .args(["--group-a", "5", "--group-b", "7", "--n", &n.to_string()])
        .args(["--alpha", "0.05", "--permutations", "1000", "--out"])
        .arg(&report)
        .status()
        .map_err(|e| e.to_string())?;
    let code = status.code().unwrap_or(-1);
    if code != 0 && code != 2 {
        return Err(format!("wine exited with {code}"));
    }
    let first = std::fs::read(&report).map_err(|e| e.to_string())?;
    let parsed: serde_json::Value = serde_json::from_slice(&first).map_err(|e| e.to_string())?;
    let rejected = parsed["reject"] == serde_json::Value::Bool(true) && code == 2;
    let again = dir.join("rerun.json");
    let status = Command::new(bin)
        .arg("rerun")
        .arg("--manifest")
        .arg(dir.join("report.json.manifest.json"))
        .arg("--out")
        .arg(&again)
        .status()
        .map_err(|e| e.to_string())?;
    let second = std::fs::read(&again).map_err(|e| e.to_string())?;
    let identical = first == second && matches!(status.code(), Some(0) | Some(2));
    Ok((
        rejected,
        identical,
        format!(
            "D = {}, z = {}, reject = {}, rerun byte-identical = {identical}",
            parsed["statistic"], parsed["critical_value"], parsed["reject"]
        ),
    ))
}

fn c11_wine() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    if let Some(csv) = wine_csv() {
        return match wine_pipeline(&csv, dir.path(), 200) {
            Ok((rejected, identical, detail)) => verdict(
                rejected && identical,
                format!("{}: {detail}", csv.display()),
            ),
            Err(e) => verdict(false, e),
        };
    }
    let synthetic = dir.path().join("synthetic-white.csv");
    synthetic_wine(&synthetic);
    match wine_pipeline(&synthetic, dir.path(), 200) {
        Ok((rejected, identical, detail)) if rejected && identical => Verdict {
            status: Status::Skip,
            detail: format!("wine-quality CSV not found (set BRENIER_WINE_CSV); synthetic wine-format pipeline ok: {detail}"),
        },
        Ok((_, _, detail)) => verdict(false, format!("synthetic wine-format pipeline: {detail}")),
        Err(e) => verdict(false, format!("synthetic wine-format pipeline: {e}")),
    }
}

fn same_table(a: &ExperimentTable, b: &ExperimentTable) -> bool {
    a.columns == b.columns
        && a.rows.len() == b.rows.len()
        && a.rows.iter().zip(&b.rows).all(|(x, y)| {
            x.len() == y.len() && x.iter().zip(y).all(|(u, v)| u.to_bits() == v.to_bits())
        })
}

fn timed<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> (T, Duration) {
    let start = Instant::now();
    let out = pool(threads).install(f);
    (out, start.elapsed())
}

fn main() {
    let mut results: Vec<(u32, Verdict)> = Vec::new();
    let mut report = |id: u32, v: Verdict| {
        let tag = match v.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skip => "SKIP",
        };
        println!("criterion {id:>2}: {tag}  {}", v.detail);
        results.push((id, v));
    };

    report(1, c1_assignment());
    report(2, c2_transportation());
    report(3, c3_one_dimensional());
    report(4, c4_composition_fixture());
    report(5, c5_discontinuity_fixture());

    let (gc1, t) = timed(1, gc_run);
    report(6, c6_glivenko_cantelli(&gc1, t));
    let (piv1, t) = timed(1, pivotality_run);
    report(7, c7_pivotality(&piv1, t));
    let (cal1, t) = timed(1, type1_run);
    report(8, c8_type_one(&cal1, t));
    let (pow1, t) = timed(1, power_run);
    report(9, c9_power(&pow1, t));

    report(10, c10_split_oracle());
    report(11, c11_wine());

    let (gc8, _) = timed(8, gc_run);
    let (piv8, _) = timed(8, pivotality_run);
    let (cal8, _) = timed(8, type1_run);
    let (pow8, _) = timed(8, power_run);
    let piv_same = piv1.len() == piv8.len()
        && piv1.iter().zip(&piv8).all(|(a, b)| {
            a.ks_distance.to_bits() == b.ks_distance.to_bits()
                && a.p_value.to_bits() == b.p_value.to_bits()
        });
    let cal_same = cal1.rejections == cal8.rejections && cal1.rate.to_bits() == cal8.rate.to_bits();
    let same = [
        same_table(&gc1, &gc8),
        piv_same,
        cal_same,
        same_table(&pow1, &pow8),
    ];
    report(
        12,
        verdict(
            same.iter().all(|s| *s),
            format!("criteria 6/7/8/9 identical at 1 and 8 threads: {same:?}"),
        ),
    );

    let failed: Vec<u32> = results
        .iter()
        .filter(|(_, v)| v.status == Status::Fail)
        .map(|(id, _)| *id)
        .collect();
    if failed.is_empty() {
        println!("acceptance: all criteria passed or skipped");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
