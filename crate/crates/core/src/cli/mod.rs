//! `varexp-cir` command line.
//!
//! Exit codes: 0 success, 1 a verification check failed, 2 usage, config or
//! I/O error, 3 numeric failure (non-finite state, Picard non-convergence,
//! inconclusive boundary test).

pub mod config;
pub mod output;
pub mod svg;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::analysis::{
    check_moment_bounds, exact_mean, martingale_report, mean_stderr, terminal_histogram, Histogram,
    RunSummary,
};
use crate::error::Error;
use crate::exponent::{validate_hypotheses, ExponentFunction, ExponentSpec, GridConfig};
use crate::model::{feller_check, FellerGrid, FellerVerdict, Model, ModelParams, ModelSpec};
use crate::solver::{euler_truncated, picard_solve, simulate_batch, Path, PathBatch};
use crate::stochastic::{sample_batch, BrownianBatch};
use crate::truncation::{lipschitz_constants, TruncationParams};

use config::*;
use output::{histogram_csv, paths_csv, write_atomic, write_json, Manifest};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// Picard sup-norm changes must be nonincreasing from this iteration on.
const PICARD_MONOTONE_FROM: usize = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Lib(#[from] Error),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Lib(e) if e.is_numeric() => EXIT_NUMERIC,
            CliError::Numeric(_) => EXIT_NUMERIC,
            _ => EXIT_USAGE,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "varexp-cir",
    version,
    about = "Variable-exponent CIR simulation and verification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check that exponents stay in [1/2, 1] with a bounded derivative near 0.
    ValidateExponent {
        #[command(flatten)]
        common: CommonArgs,
        /// One or more of p1, p2, p3, const:<c>.
        #[arg(long, value_delimiter = ',')]
        exponent: Vec<String>,
    },
    /// Decide whether zero is attainable.
    Feller {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        model: Option<String>,
    },
    /// Closed-form Lipschitz constants of the truncated coefficients, checked
    /// against sampled difference quotients.
    Lipschitz {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        model: Option<String>,
        #[command(flatten)]
        trunc: TruncArgs,
    },
    /// Simulate one model and write path, histogram, summary and manifest.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        model: Option<String>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// CIR against each variable-exponent model on shared increments.
    Compare {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_delimiter = ',')]
        exponents: Vec<String>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Empirical moments against their theoretical bounds.
    Moments {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        model: Option<String>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Batch means of the compensated process at checkpoints.
    Martingale {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        model: Option<String>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Picard iteration against the truncated Euler path.
    PicardVerify {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        model: Option<String>,
        #[command(flatten)]
        trunc: TruncArgs,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        kmax: Option<usize>,
        /// Number of independent increment rows to test.
        #[arg(long, default_value_t = 1)]
        paths: usize,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long = "T")]
        horizon: Option<f64>,
    },
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    xi: Option<f64>,
    #[arg(long)]
    v0: Option<f64>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long = "T")]
    horizon: Option<f64>,
    /// full-trunc or reflect.
    #[arg(long)]
    policy: Option<String>,
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    orders: Vec<u32>,
    #[arg(long, value_delimiter = ',')]
    checkpoints: Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write every path as CSV.
    #[arg(long)]
    dump_paths: bool,
    /// Skip SVG figures.
    #[arg(long)]
    no_svg: bool,
}

#[derive(Debug, Args)]
struct TruncArgs {
    /// Truncation level.
    #[arg(long)]
    n: Option<u32>,
    /// Bridge width; defaults to 1/(2n²).
    #[arg(long)]
    epsilon: Option<f64>,
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("varexp-cir: error: {e}");
            e.exit_code()
        }
    }
}

struct Base {
    file: FileConfig,
    params: ModelParams,
    seed: u64,
}

impl CommonArgs {
    fn resolve(&self) -> Result<Base, CliError> {
        let file = match &self.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let d = ModelParams::default();
        let params = ModelParams {
            kappa: self.kappa.or(file.kappa).unwrap_or(d.kappa),
            theta: self.theta.or(file.theta).unwrap_or(d.theta),
            xi: self.xi.or(file.xi).unwrap_or(d.xi),
            v0: self.v0.or(file.v0).unwrap_or(d.v0),
        };
        params.validate()?;
        let seed = resolve_seed(self.seed, file.seed)?;
        Ok(Base { file, params, seed })
    }
}

impl Base {
    fn model_spec(&self, flag: &Option<String>) -> Result<ModelSpec, CliError> {
        let raw = flag.clone().or(self.file.model.clone());
        Ok(raw.as_deref().unwrap_or(DEFAULT_MODEL).parse()?)
    }

    fn model(&self, flag: &Option<String>) -> Result<Model, CliError> {
        Ok(Model::from_spec(self.model_spec(flag)?, self.params)?)
    }

    fn truncation(&self, args: &TruncArgs) -> Result<TruncationParams, CliError> {
        let n = args.n.or(self.file.n).unwrap_or(DEFAULT_TRUNCATION_LEVEL);
        Ok(match args.epsilon.or(self.file.epsilon) {
            Some(eps) => TruncationParams::new(n, eps)?,
            None => TruncationParams::with_default_epsilon(n)?,
        })
    }

    fn run_config(&self, models: Vec<String>, args: &RunArgs) -> Result<RunConfig, CliError> {
        let f = &self.file;
        let policy = match &args.policy {
            Some(p) => p.parse()?,
            None => f.policy.unwrap_or_default(),
        };
        RunConfig {
            models,
            params: self.params,
            horizon: args.horizon.or(f.horizon).unwrap_or(DEFAULT_HORIZON),
            dt: args.dt.or(f.dt).unwrap_or(DEFAULT_DT),
            paths: args.paths.or(f.paths).unwrap_or(DEFAULT_PATHS),
            seed: self.seed,
            policy,
            out: args
                .out
                .clone()
                .or(f.out.clone())
                .unwrap_or_else(|| PathBuf::from("out")),
            dump_paths: args.dump_paths || f.dump_paths.unwrap_or(false),
            svg: !(args.no_svg || f.no_svg.unwrap_or(false)),
            bins: args.bins.or(f.bins).unwrap_or(DEFAULT_BINS),
            orders: pick_vec(&args.orders, &f.orders).unwrap_or_else(|| DEFAULT_ORDERS.to_vec()),
            checkpoints: pick_vec(&args.checkpoints, &f.checkpoints).unwrap_or_default(),
        }
        .finish()
    }
}

fn pick_vec<T: Clone>(flag: &[T], file: &Option<Vec<T>>) -> Option<Vec<T>> {
    if flag.is_empty() {
        file.clone()
    } else {
        Some(flag.to_vec())
    }
}

fn dispatch(command: Command) -> Result<i32, CliError> {
    match command {
        Command::ValidateExponent { common, exponent } => {
            cmd_validate(&common.resolve()?, exponent)
        }
        Command::Feller { common, model } => cmd_feller(&common.resolve()?, &model),
        Command::Lipschitz {
            common,
            model,
            trunc,
        } => cmd_lipschitz(&common.resolve()?, &model, &trunc),
        Command::Simulate { common, model, run } => cmd_simulate(&common.resolve()?, &model, &run),
        Command::Compare {
            common,
            exponents,
            run,
        } => cmd_compare(&common.resolve()?, exponents, &run),
        Command::Moments { common, model, run } => cmd_moments(&common.resolve()?, &model, &run),
        Command::Martingale { common, model, run } => {
            cmd_martingale(&common.resolve()?, &model, &run)
        }
        Command::PicardVerify {
            common,
            model,
            trunc,
            tol,
            kmax,
            paths,
            dt,
            horizon,
        } => {
            let base = common.resolve()?;
            let f = &base.file;
            let picard = PicardSettings {
                tp: base.truncation(&trunc)?,
                tol: tol.or(f.tol).unwrap_or(DEFAULT_TOL),
                k_max: kmax.or(f.kmax).unwrap_or(DEFAULT_KMAX),
                paths,
                dt: dt.or(f.dt).unwrap_or(DEFAULT_DT),
                horizon: horizon.or(f.horizon).unwrap_or(DEFAULT_HORIZON),
            };
            cmd_picard(&base, &model, picard)
        }
    }
}

fn print_json<T: Serialize>(value: &T) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("report types serialize")
    );
}

fn check_code(ok: bool) -> i32 {
    if ok {
        EXIT_OK
    } else {
        EXIT_CHECK_FAILED
    }
}

fn cmd_validate(base: &Base, flag: Vec<String>) -> Result<i32, CliError> {
    let names = if flag.is_empty() {
        base.file
            .exponent
            .clone()
            .unwrap_or_else(|| vec!["p1".into()])
    } else {
        flag
    };
    let grid = GridConfig::default();
    let mut reports = Vec::with_capacity(names.len());
    for name in &names {
        let spec: ExponentSpec = name.parse()?;
        reports.push(validate_hypotheses(
            &ExponentFunction::from_spec_unchecked(spec),
            &grid,
        )?);
    }
    let passed = reports.iter().filter(|r| r.passed()).count();
    match reports.as_slice() {
        [one] => print_json(one),
        many => print_json(&many),
    }
    eprintln!("validate-exponent: {passed}/{} passed", reports.len());
    Ok(check_code(passed == reports.len()))
}

fn cmd_feller(base: &Base, model: &Option<String>) -> Result<i32, CliError> {
    let model = base.model(model)?;
    let report = feller_check(&model, &FellerGrid::default());
    print_json(&report);
    eprintln!(
        "feller: {} limit {:.6e} -> {:?}",
        report.model, report.analytic_limit, report.verdict
    );
    Ok(match report.verdict {
        FellerVerdict::NonAttainable => EXIT_OK,
        FellerVerdict::Attainable => EXIT_CHECK_FAILED,
        FellerVerdict::Inconclusive => EXIT_NUMERIC,
    })
}

fn cmd_lipschitz(base: &Base, model: &Option<String>, trunc: &TruncArgs) -> Result<i32, CliError> {
    let model = base.model(model)?;
    let tp = base.truncation(trunc)?;
    let report = lipschitz_constants(&tp, &model, base.seed)?;
    print_json(&report);
    eprintln!(
        "lipschitz: n = {}, Lhat = {:.6e}, sampled sup {:.6e}",
        report.n, report.lhat_n, report.empirical_sup_quotient
    );
    Ok(check_code(report.holds()))
}

/// Per-model products of one simulated batch.
struct ModelRun {
    id: String,
    summary: RunSummary,
    first_path: Path,
    files: Vec<String>,
}

fn summarize(model: &Model, batch: &PathBatch, cfg: &RunConfig) -> Result<RunSummary, CliError> {
    let horizon = batch.grid.horizon;
    let (terminal_mean, terminal_stderr) = mean_stderr(batch.column(batch.grid.n_steps))?;
    Ok(RunSummary {
        model: model.id(),
        seed: cfg.seed,
        policy: cfg.policy,
        paths: batch.len(),
        terminal_mean,
        terminal_stderr,
        exact_mean: exact_mean(&model.params, horizon),
        moments: check_moment_bounds(batch, &model.params, &cfg.orders, &cfg.checkpoints)?,
        second_moment_bound: crate::analysis::second_moment_bound(model, &batch.grid).ok(),
        martingale: martingale_report(batch, model, &cfg.checkpoints)?,
        histogram: terminal_histogram(batch, horizon, cfg.bins)?,
    })
}

/// Simulates `model` on `increments` and writes its CSV and JSON outputs.
fn run_model(
    model: &Model,
    increments: &BrownianBatch,
    cfg: &RunConfig,
) -> Result<ModelRun, CliError> {
    let batch = simulate_batch(model, increments, cfg.policy)?;
    let summary = summarize(model, &batch, cfg)?;
    let id = model.id();
    let mut files = vec![
        format!("{id}_path.csv"),
        format!("{id}_hist.csv"),
        format!("{id}_summary.json"),
    ];
    write_atomic(
        &cfg.out.join(&files[0]),
        paths_csv(std::iter::once((0, &batch.paths[0]))).as_bytes(),
    )?;
    write_atomic(
        &cfg.out.join(&files[1]),
        histogram_csv(&summary.histogram).as_bytes(),
    )?;
    write_json(&cfg.out.join(&files[2]), &summary)?;
    if cfg.dump_paths {
        let name = format!("{id}_paths.csv");
        write_atomic(
            &cfg.out.join(&name),
            paths_csv(batch.paths.iter().enumerate()).as_bytes(),
        )?;
        files.push(name);
    }
    let manifest_name = format!("{id}_manifest.json");
    write_json(
        &cfg.out.join(&manifest_name),
        &Manifest::new(id.clone(), &batch, cfg, files.clone()),
    )?;
    files.push(manifest_name);
    Ok(ModelRun {
        id,
        summary,
        first_path: batch.paths.into_iter().next().expect("batch is non-empty"),
        files,
    })
}

fn cmd_simulate(base: &Base, model: &Option<String>, args: &RunArgs) -> Result<i32, CliError> {
    let spec = base.model_spec(model)?;
    let cfg = base.run_config(vec![spec.to_string()], args)?;
    let model = Model::from_spec(spec, cfg.params)?;
    let increments = sample_batch(cfg.seed, cfg.paths, &cfg.grid()?)?;
    let r = run_model(&model, &increments, &cfg)?;
    println!(
        "simulate: {} paths={} seed={} mean(T)={:.6} +/- {:.2e} files={} out={}",
        r.id,
        cfg.paths,
        cfg.seed,
        r.summary.terminal_mean,
        r.summary.terminal_stderr,
        r.files.len(),
        cfg.out.display()
    );
    Ok(EXIT_OK)
}

const CIR_COLOR: &str = "#1f77b4";
const GM_COLOR: &str = "#d62728";

fn path_chart(cir: &ModelRun, gm: &ModelRun) -> svg::Chart {
    let series = |r: &ModelRun, color| svg::Series {
        label: r.id.clone(),
        color,
        points: r
            .first_path
            .grid
            .times()
            .zip(r.first_path.values.iter().copied())
            .collect(),
    };
    svg::Chart {
        title: format!("Sample path 0: cir vs {}", gm.id),
        x_label: "t".into(),
        y_label: "v(t)".into(),
        series: vec![series(cir, CIR_COLOR), series(gm, GM_COLOR)],
    }
}

fn hist_chart(cir: &ModelRun, gm: &ModelRun) -> svg::Chart {
    let series = |r: &ModelRun, color| {
        let h: &Histogram = &r.summary.histogram;
        svg::Series {
            label: r.id.clone(),
            color,
            points: svg::step_points(&h.bin_edges, &h.densities),
        }
    };
    svg::Chart {
        title: format!("Terminal distribution: cir vs {}", gm.id),
        x_label: "v(T)".into(),
        y_label: "density".into(),
        series: vec![series(cir, CIR_COLOR), series(gm, GM_COLOR)],
    }
}

fn cmd_compare(base: &Base, flag: Vec<String>, args: &RunArgs) -> Result<i32, CliError> {
    let exponents = if flag.is_empty() {
        base.file
            .exponents
            .clone()
            .unwrap_or_else(|| DEFAULT_EXPONENTS.iter().map(|s| s.to_string()).collect())
    } else {
        flag
    };
    let mut specs = vec![ModelSpec::Cir];
    for e in &exponents {
        specs.push(ModelSpec::Gm(e.parse()?));
    }
    let cfg = base.run_config(specs.iter().map(|s| s.to_string()).collect(), args)?;
    let models = specs
        .iter()
        .map(|&s| Model::from_spec(s, cfg.params))
        .collect::<Result<Vec<_>, _>>()?;
    let mut ids: Vec<String> = models.iter().map(Model::id).collect();
    ids.sort();
    ids.dedup();
    if ids.len() != models.len() {
        return Err(CliError::Usage("duplicate exponents in --exponents".into()));
    }

    let increments = sample_batch(cfg.seed, cfg.paths, &cfg.grid()?)?;
    let runs = models
        .iter()
        .map(|m| run_model(m, &increments, &cfg))
        .collect::<Result<Vec<_>, _>>()?;
    let mut written: usize = runs.iter().map(|r| r.files.len()).sum();
    if cfg.svg {
        let cir = &runs[0];
        for (i, gm) in runs.iter().enumerate().skip(1) {
            write_atomic(
                &cfg.out.join(format!("fig_p{i}_path.svg")),
                path_chart(cir, gm).render().as_bytes(),
            )?;
            write_atomic(
                &cfg.out.join(format!("fig_p{i}_hist.svg")),
                hist_chart(cir, gm).render().as_bytes(),
            )?;
            written += 2;
        }
    }
    println!(
        "compare: {} models paths={} seed={} checksum={} files={} out={}",
        runs.len(),
        cfg.paths,
        cfg.seed,
        &increments.checksum()[..16],
        written,
        cfg.out.display()
    );
    Ok(EXIT_OK)
}

fn simulate_only(
    base: &Base,
    model: &Option<String>,
    args: &RunArgs,
) -> Result<(Model, RunConfig, PathBatch), CliError> {
    let spec = base.model_spec(model)?;
    let cfg = base.run_config(vec![spec.to_string()], args)?;
    let model = Model::from_spec(spec, cfg.params)?;
    let increments = sample_batch(cfg.seed, cfg.paths, &cfg.grid()?)?;
    let batch = simulate_batch(&model, &increments, cfg.policy)?;
    Ok((model, cfg, batch))
}

fn cmd_moments(base: &Base, model: &Option<String>, args: &RunArgs) -> Result<i32, CliError> {
    let (model, cfg, batch) = simulate_only(base, model, args)?;
    let reports = check_moment_bounds(&batch, &model.params, &cfg.orders, &cfg.checkpoints)?;
    let ok = reports.iter().all(|r| r.satisfied);
    print_json(&json!({
        "model": model.id(),
        "seed": cfg.seed,
        "paths": cfg.paths,
        "increment_checksum": batch.increment_checksum,
        "reports": reports,
        "second_moment_bound": crate::analysis::second_moment_bound(&model, &batch.grid).ok(),
    }));
    eprintln!(
        "moments: {} {}/{} bounds hold",
        model.id(),
        reports.iter().filter(|r| r.satisfied).count(),
        reports.len()
    );
    Ok(check_code(ok))
}

fn cmd_martingale(base: &Base, model: &Option<String>, args: &RunArgs) -> Result<i32, CliError> {
    let (model, cfg, batch) = simulate_only(base, model, args)?;
    let report = martingale_report(&batch, &model, &cfg.checkpoints)?;
    print_json(&json!({
        "model": model.id(),
        "seed": cfg.seed,
        "paths": cfg.paths,
        "increment_checksum": batch.increment_checksum,
        "report": report,
    }));
    eprintln!(
        "martingale: {} max |mean - v0| = {:.3e}, satisfied = {}",
        model.id(),
        report.max_abs_drift,
        report.satisfied
    );
    Ok(check_code(report.satisfied))
}

struct PicardSettings {
    tp: TruncationParams,
    tol: f64,
    k_max: usize,
    paths: usize,
    dt: f64,
    horizon: f64,
}

#[derive(Serialize)]
struct PicardPathResult {
    path: usize,
    iterations_used: usize,
    converged: bool,
    sup_diff_vs_euler: f64,
    tail_nonincreasing: bool,
    rate_envelope_constant: Option<f64>,
    sup_diffs: Vec<f64>,
}

fn cmd_picard(base: &Base, model: &Option<String>, s: PicardSettings) -> Result<i32, CliError> {
    let model = base.model(model)?;
    let grid = crate::stochastic::make_grid(s.horizon, s.dt)?;
    let increments = sample_batch(base.seed, s.paths, &grid)?;
    let mut results = Vec::with_capacity(s.paths);
    for (j, row) in increments.rows().enumerate() {
        let report =
            picard_solve(&s.tp, &model, &grid, row, s.tol, s.k_max).map_err(|e| Error::Path {
                path: j,
                source: Box::new(e),
            })?;
        let euler = euler_truncated(&s.tp, &model, &grid, row)?;
        let gap = report
            .fixed_point
            .values
            .iter()
            .zip(&euler.values)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        results.push(PicardPathResult {
            path: j,
            iterations_used: report.iterations_used,
            converged: report.converged,
            sup_diff_vs_euler: gap,
            tail_nonincreasing: report.tail_nonincreasing(PICARD_MONOTONE_FROM - 1),
            rate_envelope_constant: report.rate_envelope_constant,
            sup_diffs: report.sup_diffs,
        });
    }
    print_json(&json!({
        "model": model.id(),
        "n": s.tp.n,
        "epsilon": s.tp.epsilon,
        "tol": s.tol,
        "kmax": s.k_max,
        "seed": base.seed,
        "increment_checksum": increments.checksum(),
        "paths": results,
    }));
    let worst = results
        .iter()
        .fold(0.0_f64, |m, r| m.max(r.sup_diff_vs_euler));
    eprintln!(
        "picard-verify: {} paths, max |picard - euler| = {worst:.3e}",
        results.len()
    );
    if let Some(r) = results.iter().find(|r| !r.converged) {
        return Err(CliError::Numeric(format!(
            "path {} did not converge within {} iterations",
            r.path, s.k_max
        )));
    }
    Ok(check_code(results.iter().all(|r| {
        r.sup_diff_vs_euler <= s.tol && r.tail_nonincreasing
    })))
}
