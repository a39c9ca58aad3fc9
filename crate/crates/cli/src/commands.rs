use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::json;

use brenier::bdf::{fit_ebdf, Label};
use brenier::experiments::{
    gc_convergence, pivotality_check, power_curve, type_i_calibration, ExperimentTable, GcConfig,
    PivotalityConfig, PowerConfig, Type1Config,
};
use brenier::hypothesis::{
    critical_value, obtain_null, two_sample_test, NullDistribution, NullStore, TestConfig,
};
use brenier::io::{
    digest_bytes, digest_file, ingest_csv, read_points_csv, split_by_label, subsample, to_json,
    write_points_csv, DiskNullCache, IngestOptions, ModelFile, RunManifest,
};
use brenier::rng::derive_seed;
use brenier::transport::{solve_assignment, solve_transport_lp};
use brenier::{generate_ball_grid, BallGrid, GridMethod, Point};

use crate::output::{emit, json_to_csv, manifest_path, sibling};
use crate::{
    Cli, Command, EvalArgs, ExperimentArgs, ExperimentKind, FitArgs, Format, GridArgs, Outcome,
    QuantileArgs, RerunArgs, TestArgs, TransportArgs, TransportMode, WineArgs,
};

/// Generation metadata written next to a grid CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSidecar {
    pub dim: usize,
    pub count: usize,
    pub method: GridMethod,
    pub seed: u64,
    pub lloyd_iters: usize,
    pub fingerprint: String,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// Primary output of one command and how the process should exit.
struct Produced {
    text: String,
    outcome: Outcome,
}

impl Produced {
    fn ok(text: String) -> Self {
        Produced {
            text,
            outcome: Outcome::Success,
        }
    }
}

struct Ctx {
    seed: u64,
    /// Whether `--seed` was passed explicitly (it then overrides config-file seeds).
    seed_given: bool,
    format: Option<Format>,
    manifest: RunManifest,
}

impl Ctx {
    fn input(&mut self, path: &Path) -> Result<()> {
        Ok(self.manifest.record_input(path)?)
    }

    fn render<T: Serialize>(&self, value: &T) -> Result<String> {
        Ok(match self.format {
            Some(Format::Csv) => json_to_csv(&serde_json::to_value(value)?),
            _ => to_json(value)?,
        })
    }
}

pub fn run(cli: Cli, argv: Vec<String>) -> Result<Outcome> {
    let Cli {
        seed,
        out,
        format,
        command,
        ..
    } = cli;
    if let Command::Rerun(args) = command {
        return rerun(&args, out.as_deref());
    }
    let master = seed.unwrap_or(0);
    let (name, options) = describe(&command)?;
    let config = json!({ "seed": master, "format": format, "options": options });
    let mut ctx = Ctx {
        seed: master,
        seed_given: seed.is_some(),
        format,
        manifest: RunManifest::new(name, argv, config),
    };
    ctx.manifest.seeds.insert("master".into(), master);
    let produced = match &command {
        Command::Grid(a) => grid(a, &mut ctx, out.as_deref())?,
        Command::Transport(a) => transport(a, &mut ctx)?,
        Command::Fit(a) => fit(a, &mut ctx)?,
        Command::Eval(a) => eval(a, &mut ctx)?,
        Command::Test(a) => test(a, &mut ctx)?,
        Command::Quantile(a) => quantile(a, &mut ctx)?,
        Command::Experiment(a) => experiment(a, &mut ctx)?,
        Command::Wine(a) => wine(a, &mut ctx)?,
        Command::Rerun(_) => unreachable!("handled above"),
    };
    emit(out.as_deref(), &produced.text)?;
    if let Some(out) = &out {
        ctx.manifest
            .output_digests
            .insert("primary".into(), digest_bytes(produced.text.as_bytes()));
        emit(Some(&manifest_path(out)), &to_json(&ctx.manifest)?)?;
    }
    Ok(produced.outcome)
}

fn describe(command: &Command) -> Result<(&'static str, serde_json::Value)> {
    fn v<T: Serialize>(a: &T) -> serde_json::Result<serde_json::Value> {
        serde_json::to_value(a)
    }
    Ok(match command {
        Command::Grid(a) => ("grid", v(a)?),
        Command::Transport(a) => ("transport", v(a)?),
        Command::Fit(a) => ("fit", v(a)?),
        Command::Eval(a) => ("eval", v(a)?),
        Command::Test(a) => ("test", v(a)?),
        Command::Quantile(a) => ("quantile", v(a)?),
        Command::Experiment(a) => ("experiment", v(a)?),
        Command::Wine(a) => ("wine", v(a)?),
        Command::Rerun(a) => ("rerun", v(a)?),
    })
}

fn warn_all(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

fn points(path: &Path, ctx: &mut Ctx) -> Result<Vec<Point>> {
    ctx.input(path)?;
    read_points_csv(path).with_context(|| format!("in {}", path.display()))
}

fn grid_method(name: &str) -> Result<GridMethod> {
    Ok(name.parse::<GridMethod>()?)
}

fn grid(a: &GridArgs, ctx: &mut Ctx, out: Option<&Path>) -> Result<Produced> {
    let g = generate_ball_grid(
        a.count,
        a.dim,
        grid_method(&a.method)?,
        ctx.seed,
        a.lloyd_iters,
    )?;
    warn_all(&g.warnings);
    ctx.manifest.grid_fingerprint = Some(g.fingerprint());
    if ctx.format == Some(Format::Json) {
        return Ok(Produced::ok(to_json(&g)?));
    }
    if let Some(out) = out {
        let sidecar = GridSidecar {
            dim: g.dim,
            count: g.len(),
            method: g.method,
            seed: g.seed,
            lloyd_iters: g.lloyd_iters,
            fingerprint: g.fingerprint(),
            warnings: g.warnings.clone(),
        };
        emit(Some(&sibling(out, "json")), &to_json(&sidecar)?)?;
    }
    Ok(Produced::ok(write_points_csv(&g.points)))
}

/// Grid from JSON, or from CSV plus its sidecar when the sidecar matches the points.
pub fn load_grid(path: &Path) -> Result<BallGrid> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if path.extension().is_some_and(|e| e == "json") {
        let g: BallGrid = serde_json::from_str(&text)?;
        g.validate()?;
        return Ok(g);
    }
    let mut g = BallGrid::from_points(brenier::io::parse_points_csv(&text)?)?;
    let side = sibling(path, "json");
    if side.exists() {
        let meta: GridSidecar = serde_json::from_str(&std::fs::read_to_string(&side)?)
            .with_context(|| format!("reading {}", side.display()))?;
        if meta.fingerprint == g.fingerprint() {
            g.method = meta.method;
            g.seed = meta.seed;
            g.lloyd_iters = meta.lloyd_iters;
            g.warnings = meta.warnings;
        } else {
            eprintln!(
                "warning: {} does not describe these points; treating the grid as external",
                side.display()
            );
        }
    }
    Ok(g)
}

#[derive(Serialize)]
struct TransportOutput {
    mode: TransportMode,
    n: usize,
    m: usize,
    /// Expected squared distance under the optimal plan.
    cost: f64,
    wasserstein2: f64,
    plan: Vec<brenier::transport::CouplingEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    perm: Option<Vec<usize>>,
    duals: brenier::transport::DualPotentials,
}

fn transport(a: &TransportArgs, ctx: &mut Ctx) -> Result<Produced> {
    let source = points(&a.source, ctx)?;
    let target = points(&a.target, ctx)?;
    let result = match a.mode {
        TransportMode::Assign => {
            let (asg, duals) = solve_assignment(&source, &target)?;
            let n = asg.n;
            let w = 1.0 / n as f64;
            TransportOutput {
                mode: a.mode,
                n,
                m: n,
                cost: asg.cost / n as f64,
                wasserstein2: (asg.cost / n as f64).max(0.0).sqrt(),
                plan: asg
                    .perm
                    .iter()
                    .enumerate()
                    .map(|(i, &j)| brenier::transport::CouplingEntry {
                        source: i,
                        target: j,
                        weight: w,
                    })
                    .collect(),
                perm: Some(asg.perm),
                duals,
            }
        }
        TransportMode::Lp => {
            let (c, duals) = solve_transport_lp(&source, &target)?;
            TransportOutput {
                mode: a.mode,
                n: c.n,
                m: c.m,
                cost: c.cost,
                wasserstein2: c.cost.max(0.0).sqrt(),
                plan: c.entries,
                perm: None,
                duals,
            }
        }
    };
    Ok(Produced::ok(ctx.render(&result)?))
}

fn parse_labels(text: &str) -> Result<Vec<Label>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, l)| match l.trim() {
            "X" | "x" | "0" => Ok(Label::X),
            "Y" | "y" | "1" => Ok(Label::Y),
            other => bail!(
                "line {}: unknown label `{other}` (expected X, Y, 0 or 1)",
                k + 1
            ),
        })
        .collect()
}

fn fit(a: &FitArgs, ctx: &mut Ctx) -> Result<Produced> {
    let sample = points(&a.sample, ctx)?;
    let labels = match &a.labels {
        Some(path) => {
            ctx.input(path)?;
            parse_labels(&std::fs::read_to_string(path)?)?
        }
        None => vec![Label::X; sample.len()],
    };
    ctx.input(&a.grid)?;
    let g = load_grid(&a.grid)?;
    ctx.manifest.grid_fingerprint = Some(g.fingerprint());
    let f = fit_ebdf(&sample, &labels, &g)?;
    warn_all(&f.warnings);
    Ok(Produced::ok(ModelFile::new(f).to_json()?))
}

fn eval(a: &EvalArgs, ctx: &mut Ctx) -> Result<Produced> {
    ctx.input(&a.model)?;
    let text = std::fs::read_to_string(&a.model)?;
    let model = ModelFile::from_json_str(&text)
        .with_context(|| format!("loading model {}", a.model.display()))?
        .model;
    let queries = points(&a.query, ctx)?;
    let idx = queries
        .iter()
        .map(|q| model.evaluate_index(q))
        .collect::<brenier::Result<Vec<usize>>>()?;
    let images: Vec<Point> = idx.iter().map(|&j| model.grid.points[j].clone()).collect();
    Ok(Produced::ok(match ctx.format {
        Some(Format::Json) => to_json(&json!({ "grid_index": idx, "image": images }))?,
        _ => write_points_csv(&images),
    }))
}

fn null_cache(dir: &Option<PathBuf>) -> Result<Option<DiskNullCache>> {
    Ok(match dir {
        Some(d) => Some(DiskNullCache::new(d)?),
        None => None,
    })
}

fn finish_test(report: &brenier::hypothesis::TestReport, ctx: &mut Ctx) -> Result<Produced> {
    ctx.manifest.grid_fingerprint = Some(report.grid_fingerprint.clone());
    ctx.manifest
        .seeds
        .insert("grid".into(), report.config.grid_seed());
    ctx.manifest.seeds.insert("null".into(), report.null_seed);
    eprintln!(
        "D = {:.6}, z = {:.6}, p = {:.4}: {}",
        report.statistic,
        report.critical_value,
        report.p_value,
        if report.reject { "reject" } else { "accept" }
    );
    Ok(Produced {
        text: ctx.render(report)?,
        outcome: if report.reject {
            Outcome::Reject
        } else {
            Outcome::Success
        },
    })
}

fn test(a: &TestArgs, ctx: &mut Ctx) -> Result<Produced> {
    let x = points(&a.x, ctx)?;
    let y = points(&a.y, ctx)?;
    let config = TestConfig {
        alpha: a.alpha,
        permutations: a.permutations,
        seed: ctx.seed,
        grid_method: grid_method(&a.grid_method)?,
        lloyd_iters: a.lloyd_iters,
        standardize: !a.no_standardize,
    };
    let cache = null_cache(&a.null_cache)?;
    let report = two_sample_test(&x, &y, &config, cache.as_ref().map(|c| c as &dyn NullStore))?;
    finish_test(&report, ctx)
}

#[derive(Serialize)]
struct QuantileOutput {
    alpha: f64,
    critical_value: f64,
    #[serde(flatten)]
    null: NullDistribution,
}

fn quantile(a: &QuantileArgs, ctx: &mut Ctx) -> Result<Produced> {
    let config = TestConfig {
        alpha: a.alpha,
        permutations: a.permutations,
        seed: ctx.seed,
        grid_method: grid_method(&a.grid_method)?,
        lloyd_iters: a.lloyd_iters,
        standardize: false,
    };
    config.validate()?;
    let g = generate_ball_grid(
        a.n + a.m,
        a.dim,
        config.grid_method,
        config.grid_seed(),
        a.lloyd_iters,
    )?;
    warn_all(&g.warnings);
    let cache = null_cache(&a.null_cache)?;
    let null = obtain_null(
        &g,
        a.n,
        a.m,
        a.permutations,
        config.null_seed(),
        cache.as_ref().map(|c| c as &dyn NullStore),
    )?;
    ctx.manifest.grid_fingerprint = Some(g.fingerprint());
    ctx.manifest.seeds.insert("grid".into(), config.grid_seed());
    ctx.manifest.seeds.insert("null".into(), config.null_seed());
    let z = critical_value(&null, a.alpha)?;
    Ok(Produced::ok(ctx.render(&QuantileOutput {
        alpha: a.alpha,
        critical_value: z,
        null,
    })?))
}

fn read_config<T: serde::de::DeserializeOwned>(path: &Path, ctx: &mut Ctx) -> Result<T> {
    ctx.input(path)?;
    let text = std::fs::read_to_string(path)?;
    serde_yaml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
}

fn table_output(mut table: ExperimentTable, ctx: &Ctx) -> Result<Produced> {
    // Wall-clock time would make otherwise identical outputs differ.
    if let Some(ms) = table.metadata.remove("elapsed_ms") {
        eprintln!("{}: {ms} ms", table.name);
    }
    Ok(Produced::ok(match ctx.format {
        Some(Format::Json) => to_json(&table)?,
        _ => {
            let mut buf = Vec::new();
            table.write_csv(&mut buf)?;
            String::from_utf8(buf)?
        }
    }))
}

fn one_row(name: &str, cells: &[(&str, f64)]) -> ExperimentTable {
    ExperimentTable {
        name: name.to_string(),
        columns: cells.iter().map(|(c, _)| c.to_string()).collect(),
        rows: vec![cells.iter().map(|(_, v)| *v).collect()],
        metadata: Default::default(),
    }
}

fn experiment(a: &ExperimentArgs, ctx: &mut Ctx) -> Result<Produced> {
    macro_rules! load {
        ($t:ty) => {{
            let mut c: $t = read_config(&a.config, ctx)?;
            if ctx.seed_given {
                c.seed = ctx.seed;
            }
            ctx.manifest.seeds.insert("experiment".into(), c.seed);
            ctx.manifest.config["resolved"] = serde_json::to_value(&c)?;
            c
        }};
    }
    let table = match a.kind {
        ExperimentKind::Gc => gc_convergence(&load!(GcConfig))?,
        ExperimentKind::Power => power_curve(&load!(PowerConfig))?,
        ExperimentKind::Pivotality => {
            let r = pivotality_check(&load!(PivotalityConfig))?;
            one_row(
                "pivotality",
                &[
                    ("ks_distance", r.ks_distance),
                    ("p_value", r.p_value),
                    ("level", r.level),
                    ("pass", f64::from(u8::from(r.pass))),
                    ("reps", r.reps as f64),
                ],
            )
        }
        ExperimentKind::Type1 => {
            let r = type_i_calibration(&load!(Type1Config))?;
            one_row(
                "type1",
                &[
                    ("rejections", r.rejections as f64),
                    ("trials", r.trials as f64),
                    ("rate", r.rate),
                    ("alpha", r.alpha),
                    ("binomial_sd", r.binomial_sd),
                ],
            )
        }
    };
    table_output(table, ctx)
}

fn wine(a: &WineArgs, ctx: &mut Ctx) -> Result<Produced> {
    let delimiter = match a.delimiter {
        Some(c) if c.is_ascii() => Some(c as u8),
        Some(c) => bail!("delimiter `{c}` is not ASCII"),
        None => None,
    };
    let options = IngestOptions {
        delimiter,
        feature_columns: Vec::new(),
        label_column: Some(a.label_column.clone()),
        has_header: true,
    };
    ctx.input(&a.csv)?;
    let ds = ingest_csv(&a.csv, &options)?;
    let (ga, gb) = split_by_label(&ds, &a.group_a, &a.group_b)?;
    eprintln!(
        "{} features; group {}: {} rows, group {}: {} rows",
        ds.dim(),
        a.group_a,
        ga.len(),
        a.group_b,
        gb.len()
    );
    let (sx, sy) = (
        derive_seed(ctx.seed, "wine-subsample", 0),
        derive_seed(ctx.seed, "wine-subsample", 1),
    );
    ctx.manifest.seeds.insert("subsample_x".into(), sx);
    ctx.manifest.seeds.insert("subsample_y".into(), sy);
    let x = subsample(&ga, a.n, sx)?;
    let y = subsample(&gb, a.m.unwrap_or(a.n), sy)?;
    let config = TestConfig {
        alpha: a.alpha,
        permutations: a.permutations,
        seed: ctx.seed,
        grid_method: grid_method(&a.grid_method)?,
        lloyd_iters: 0,
        standardize: !a.no_standardize,
    };
    let cache = null_cache(&a.null_cache)?;
    let report = two_sample_test(&x, &y, &config, cache.as_ref().map(|c| c as &dyn NullStore))?;
    finish_test(&report, ctx)
}

fn rerun(a: &RerunArgs, out: Option<&Path>) -> Result<Outcome> {
    let text = std::fs::read_to_string(&a.manifest)
        .with_context(|| format!("reading {}", a.manifest.display()))?;
    let manifest = RunManifest::from_json_str(&text)?;
    for path in manifest.changed_inputs() {
        eprintln!("warning: input {path} changed since the recorded run");
    }
    let mut args = manifest.args.clone();
    if let Some(out) = out {
        strip_flag(&mut args, "--out");
        args.push("--out".into());
        args.push(out.display().to_string());
    }
    let cli = <Cli as clap::Parser>::try_parse_from(
        std::iter::once("brenier".to_string()).chain(args.iter().cloned()),
    )?;
    if matches!(cli.command, Command::Rerun(_)) {
        bail!("a manifest cannot record another rerun");
    }
    let target = cli.out.clone();
    let outcome = run(cli, args)?;
    if let (Some(path), Some(expected)) = (target, manifest.output_digests.get("primary")) {
        let actual = digest_file(&path)?;
        if &actual != expected {
            bail!(
                "rerun output {} differs from the recorded run",
                path.display()
            );
        }
        eprintln!("reproduced {} byte for byte", path.display());
    }
    Ok(outcome)
}

fn strip_flag(args: &mut Vec<String>, flag: &str) {
    let prefix = format!("{flag}=");
    let mut k = 0;
    while k < args.len() {
        if args[k] == flag {
            args.drain(k..(k + 2).min(args.len()));
        } else if args[k].starts_with(&prefix) {
            args.remove(k);
        } else {
            k += 1;
        }
    }
}
