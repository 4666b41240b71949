//! Batch front end: fit/predict/cv/simulate/transform with file I/O and
//! JSON diagnostics on standard output. Exit codes: 0 success, 1 input or
//! validation failure, 2 numeric failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::json;

use swreg::dataset::{load_dataset, read_values_csv, write_values_csv, DatasetFormat};
use swreg::domain::{AngleGrid, DensityGrid, Domain, RegressionDataset};
use swreg::error::Error;
use swreg::frechet::SmoothingKernel;
use swreg::inversion::{fbp_inverse, normalize_to_density, nyquist, reconstruction_error_curve, FbpConfig};
use swreg::regressors::{
    cross_validate, fit_model, predict, r2_in_sample, ModelConfig, ModelKind, SawConfig,
    SwwConfig, WeightScheme,
};
use swreg::simulation::{run_table, table_to_csv, HarnessConfig, Scenario};
use swreg::slicing::{radon_grid, SlicedDensities, Smoothing};

#[derive(Parser)]
#[command(name = "swreg", about = "Sliced Wasserstein regression toolkit", version)]
struct Cli {
    /// Worker pool size (default: available parallelism; falls back to the
    /// SWREG_THREADS environment variable). Never changes numeric output.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a regression model at one or more queries.
    Fit(FitArgs),
    /// Fit at a single new query, with extrapolation warnings.
    Predict(PredictArgs),
    /// Cross-validate the cutoff and/or bandwidth grids.
    Cv(CvArgs),
    /// Run the Monte Carlo benchmark table.
    Simulate(SimulateArgs),
    /// Forward/inverse slicing utilities on grid files.
    Transform(TransformArgs),
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// Model kind: gsaw, lsaw, gsww or lsww.
    #[arg(long)]
    model: String,

    /// Dataset path: a long CSV file or a grid directory.
    #[arg(long)]
    data: PathBuf,

    /// Dataset layout; inferred from the path when omitted.
    #[arg(long, value_parser = ["long-csv", "grid-dir"])]
    format: Option<String>,

    /// Angle count L.
    #[arg(long, default_value_t = 60)]
    angles: usize,

    /// Quantile grid size S.
    #[arg(long, default_value_t = 128)]
    quantiles: usize,

    /// Offset grid size U (slice-wise models).
    #[arg(long, default_value_t = 256)]
    u_points: usize,

    /// Frequency cutoff for the slice-wise models: a number or `auto`.
    #[arg(long)]
    tau: Option<String>,

    /// Local bandwidth: a number or `auto`. Required for local models.
    #[arg(long)]
    h: Option<String>,

    /// Output grid edge for reconstructed densities.
    #[arg(long, default_value_t = 64)]
    grid: usize,

    /// Atom smoothing for slice-wise fits: adaptive, silverman, none, or a
    /// fixed bandwidth.
    #[arg(long, default_value = "adaptive")]
    smoothing: String,

    /// Particle count cap for the slice-averaged models.
    #[arg(long)]
    particles: Option<usize>,

    #[arg(long, default_value_t = 0.5)]
    eta: f64,

    #[arg(long, default_value_t = 1e-4)]
    eps: f64,

    #[arg(long, default_value_t = 2000)]
    max_iters: usize,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Optional JSON config file; explicit flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    model: ModelArgs,

    /// Query predictor value (repeatable, scalar predictors).
    #[arg(long = "x")]
    xs: Vec<f64>,

    /// Query grid start:stop:count (scalar predictors).
    #[arg(long)]
    x_grid: Option<String>,

    /// Output directory for the fit files.
    #[arg(long, default_value = "fit_out")]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[command(flatten)]
    model: ModelArgs,

    #[arg(long = "x", required = true)]
    x: f64,

    #[arg(long, default_value = "predict_out")]
    out: PathBuf,
}

#[derive(Args)]
struct CvArgs {
    #[command(flatten)]
    model: ModelArgs,

    /// Cutoff grid: `auto` or comma-separated values.
    #[arg(long, default_value = "auto")]
    tau_grid: String,

    /// Bandwidth grid: `auto` or comma-separated values.
    #[arg(long, default_value = "auto")]
    h_grid: String,

    /// Optional CSV output of the score table.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario id: 1 or 2.
    #[arg(long)]
    scenario: u32,

    /// Comma-separated subset of gsww,gsaw,lsww,lsaw.
    #[arg(long, default_value = "gsww,gsaw")]
    methods: String,

    #[arg(long, default_value = "100")]
    n: String,

    #[arg(long = "N", default_value = "100")]
    n_obs: String,

    #[arg(long, default_value_t = 100)]
    runs: usize,

    /// Smoke-test mode: 10 runs.
    #[arg(long, default_value_t = false)]
    quick: bool,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    #[arg(long, default_value_t = 60)]
    angles: usize,

    #[arg(long, default_value_t = 128)]
    quantiles: usize,

    #[arg(long, default_value = "table.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct TransformArgs {
    #[command(subcommand)]
    op: TransformOp,
}

#[derive(Subcommand)]
enum TransformOp {
    /// Forward slicing of a density grid file.
    Radon {
        /// Flat row-major values CSV.
        #[arg(long)]
        input: PathBuf,
        /// Domain as lo1,lo2,hi1,hi2.
        #[arg(long, default_value = "-1,-1,1,1")]
        domain: String,
        /// Grid shape rows,cols.
        #[arg(long)]
        shape: String,
        #[arg(long, default_value_t = 180)]
        angles: usize,
        #[arg(long, default_value_t = 256)]
        u_points: usize,
        #[arg(long, default_value = "slices.csv")]
        out: PathBuf,
    },
    /// Regularized inverse of a slices CSV.
    Iradon {
        #[arg(long)]
        input: PathBuf,
        /// Cutoff: a number or `auto` (half Nyquist).
        #[arg(long, default_value = "auto")]
        tau: String,
        #[arg(long, default_value = "-1,-1,1,1")]
        domain: String,
        #[arg(long, default_value = "128,128")]
        shape: String,
        #[arg(long, default_value = "reconstruction.csv")]
        out: PathBuf,
    },
    /// Round-trip error diagnostic over a cutoff ladder.
    ErrorCurve {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "-1,-1,1,1")]
        domain: String,
        #[arg(long)]
        shape: String,
        #[arg(long, default_value_t = 180)]
        angles: usize,
        #[arg(long, default_value_t = 256)]
        u_points: usize,
        /// Cutoffs: `auto` (Nyquist halvings) or comma-separated values.
        #[arg(long, default_value = "auto")]
        taus: String,
        #[arg(long, default_value = "error_curve.csv")]
        out: PathBuf,
    },
}

/// Optional JSON config file entries; explicit flags win.
#[derive(Debug, Default, Deserialize)]
struct FileConfig {
    tau: Option<f64>,
    h: Option<f64>,
    angles: Option<usize>,
    quantiles: Option<usize>,
    u_points: Option<usize>,
    grid: Option<usize>,
    seed: Option<u64>,
    smoothing: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli.threads.or_else(|| {
        std::env::var("SWREG_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(threads) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: cannot size the worker pool: {e}");
            return ExitCode::from(1);
        }
    }
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numeric() { 2 } else { 1 })
        }
    }
}

fn dispatch(command: Command) -> swreg::Result<()> {
    match command {
        Command::Fit(args) => cmd_fit(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Cv(args) => cmd_cv(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Transform(args) => match args.op {
            TransformOp::Radon {
                input,
                domain,
                shape,
                angles,
                u_points,
                out,
            } => cmd_radon(&input, &domain, &shape, angles, u_points, &out),
            TransformOp::Iradon {
                input,
                tau,
                domain,
                shape,
                out,
            } => cmd_iradon(&input, &tau, &domain, &shape, &out),
            TransformOp::ErrorCurve {
                input,
                domain,
                shape,
                angles,
                u_points,
                taus,
                out,
            } => cmd_error_curve(&input, &domain, &shape, angles, u_points, &taus, &out),
        },
    }
}

fn parse_model_kind(name: &str) -> swreg::Result<ModelKind> {
    match name {
        "gsaw" => Ok(ModelKind::Gsaw),
        "lsaw" => Ok(ModelKind::Lsaw),
        "gsww" => Ok(ModelKind::Gsww),
        "lsww" => Ok(ModelKind::Lsww),
        other => Err(Error::InvalidArgument(format!(
            "unknown model {other:?}; expected gsaw, lsaw, gsww or lsww"
        ))),
    }
}

fn parse_smoothing(name: &str) -> swreg::Result<Smoothing> {
    match name {
        "adaptive" => Ok(Smoothing::Adaptive { factor: 1.0 }),
        "silverman" => Ok(Smoothing::Silverman),
        "none" => Ok(Smoothing::None),
        other => other
            .parse::<f64>()
            .map(Smoothing::Fixed)
            .map_err(|_| Error::InvalidArgument(format!("unknown smoothing {other:?}"))),
    }
}

fn load_data(args: &ModelArgs) -> swreg::Result<RegressionDataset> {
    let format = match args.format.as_deref() {
        Some("long-csv") => DatasetFormat::LongCsv,
        Some("grid-dir") => DatasetFormat::GridDir,
        Some(other) => {
            return Err(Error::InvalidArgument(format!(
                "unknown format {other:?}"
            )))
        }
        None => {
            if args.data.is_dir() {
                DatasetFormat::GridDir
            } else {
                DatasetFormat::LongCsv
            }
        }
    };
    load_dataset(&args.data, format)
}

struct ResolvedModel {
    config: ModelConfig,
    tau: Option<f64>,
    bandwidth: Option<f64>,
    cv_warnings: Vec<String>,
}

/// Applies the config file, validates flags against the model kind, and
/// runs cross-validation for any `auto` entries.
fn resolve_model(args: &ModelArgs, dataset: &RegressionDataset) -> swreg::Result<ResolvedModel> {
    let kind = parse_model_kind(&args.model)?;
    let file: FileConfig = match &args.config {
        Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
        None => FileConfig::default(),
    };
    // Flags carry their defaults; file entries only fill the optional ones.
    let seed = if args.seed != 0 {
        args.seed
    } else {
        file.seed.unwrap_or(args.seed)
    };
    let smoothing = parse_smoothing(
        args.smoothing
            .as_str()
            .pipe_if_default("adaptive", file.smoothing.as_deref()),
    )?;

    let local = matches!(kind, ModelKind::Lsaw | ModelKind::Lsww);
    let needs_tau = matches!(kind, ModelKind::Gsww | ModelKind::Lsww);

    let h_arg = args.h.clone().or(file.h.map(|v| v.to_string()));
    if local && h_arg.is_none() {
        return Err(Error::InvalidArgument(
            "--h is required for local models (a bandwidth or `auto`)".into(),
        ));
    }
    let tau_arg = args.tau.clone().or(file.tau.map(|v| v.to_string()));

    let mut cv_tau_grid: Vec<f64> = Vec::new();
    let mut cv_h_grid: Vec<f64> = Vec::new();
    let mut fixed_tau = None;
    let mut fixed_h = None;
    if needs_tau {
        match tau_arg.as_deref() {
            None | Some("auto") => cv_tau_grid = default_tau_grid_for(dataset, args.u_points),
            Some(v) => {
                fixed_tau = Some(v.parse::<f64>().map_err(|_| {
                    Error::InvalidArgument(format!("cannot parse --tau value {v:?}"))
                })?)
            }
        }
    }
    if local {
        match h_arg.as_deref() {
            Some("auto") => cv_h_grid = vec![0.08, 0.15, 0.3],
            Some(v) => {
                fixed_h = Some(v.parse::<f64>().map_err(|_| {
                    Error::InvalidArgument(format!("cannot parse --h value {v:?}"))
                })?)
            }
            None => unreachable!("validated above"),
        }
    }

    let scheme = if local {
        WeightScheme::Local {
            bandwidth: fixed_h.unwrap_or(0.15),
            kernel: SmoothingKernel::Gaussian,
        }
    } else {
        WeightScheme::Global
    };
    let base = match kind {
        ModelKind::Gsaw | ModelKind::Lsaw => ModelConfig::Saw {
            scheme,
            cfg: SawConfig {
                n_particles: args.particles,
                learning_rate: args.eta,
                convergence_threshold: args.eps,
                max_iters: args.max_iters,
                seed,
                angle_count: args.angles,
            },
        },
        ModelKind::Gsww | ModelKind::Lsww => ModelConfig::Sww {
            scheme,
            cfg: SwwConfig {
                angle_count: args.angles,
                quantile_points: args.quantiles,
                u_points: args.u_points,
                tau: fixed_tau
                    .unwrap_or_else(|| default_tau_grid_for(dataset, args.u_points)[1]),
                output_shape: (args.grid, args.grid),
                smoothing,
            },
        },
    };

    if cv_tau_grid.is_empty() && cv_h_grid.is_empty() {
        return Ok(ResolvedModel {
            config: base,
            tau: fixed_tau,
            bandwidth: fixed_h,
            cv_warnings: Vec::new(),
        });
    }
    let report = cross_validate(dataset, kind, &cv_tau_grid, &cv_h_grid, &base, seed)?;
    let tau = report.best_tau.or(fixed_tau);
    let bandwidth = report.best_bandwidth.or(fixed_h);
    let config = apply_selection(&base, tau, bandwidth);
    Ok(ResolvedModel {
        config,
        tau,
        bandwidth,
        cv_warnings: report.warnings,
    })
}

trait PipeIfDefault {
    fn pipe_if_default<'a>(&'a self, default: &str, alt: Option<&'a str>) -> &'a str;
}

impl PipeIfDefault for &str {
    fn pipe_if_default<'a>(&'a self, default: &str, alt: Option<&'a str>) -> &'a str {
        if *self == default {
            alt.unwrap_or(self)
        } else {
            self
        }
    }
}

fn apply_selection(base: &ModelConfig, tau: Option<f64>, h: Option<f64>) -> ModelConfig {
    let mut config = base.clone();
    match &mut config {
        ModelConfig::Sww { cfg, scheme } => {
            if let Some(t) = tau {
                cfg.tau = t;
            }
            if let (Some(hv), WeightScheme::Local { bandwidth, .. }) = (h, scheme) {
                *bandwidth = hv;
            }
        }
        ModelConfig::Saw { scheme, .. } => {
            if let (Some(hv), WeightScheme::Local { bandwidth, .. }) = (h, scheme) {
                *bandwidth = hv;
            }
        }
    }
    config
}

fn default_tau_grid_for(dataset: &RegressionDataset, u_points: usize) -> Vec<f64> {
    let du = 2.0 * dataset.domain().projection_radius() / u_points as f64;
    let nyquist = std::f64::consts::PI / du;
    (0..6).map(|j| nyquist / (1u32 << j) as f64).collect()
}

fn parse_queries(xs: &[f64], x_grid: &Option<String>) -> swreg::Result<Vec<Vec<f64>>> {
    let mut queries: Vec<Vec<f64>> = xs.iter().map(|x| vec![*x]).collect();
    if let Some(grid) = x_grid {
        let parts: Vec<&str> = grid.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::InvalidArgument(format!(
                "--x-grid expects start:stop:count, got {grid:?}"
            )));
        }
        let start: f64 = parts[0].parse().map_err(|_| {
            Error::InvalidArgument(format!("cannot parse grid start {:?}", parts[0]))
        })?;
        let stop: f64 = parts[1].parse().map_err(|_| {
            Error::InvalidArgument(format!("cannot parse grid stop {:?}", parts[1]))
        })?;
        let count: usize = parts[2].parse().map_err(|_| {
            Error::InvalidArgument(format!("cannot parse grid count {:?}", parts[2]))
        })?;
        if count < 1 {
            return Err(Error::InvalidArgument("grid count must be positive".into()));
        }
        for k in 0..count {
            let t = if count == 1 {
                0.0
            } else {
                k as f64 / (count - 1) as f64
            };
            queries.push(vec![start + t * (stop - start)]);
        }
    }
    if queries.is_empty() {
        return Err(Error::InvalidArgument(
            "no queries: pass --x or --x-grid".into(),
        ));
    }
    Ok(queries)
}

fn cmd_fit(args: FitArgs) -> swreg::Result<()> {
    let dataset = load_data(&args.model)?;
    let queries = parse_queries(&args.xs, &args.x_grid)?;
    let resolved = resolve_model(&args.model, &dataset)?;
    let fit = fit_model(&dataset, &queries, &resolved.config)?;
    fit.save(&args.out)?;
    let r2 = r2_in_sample(&dataset, &resolved.config)?;
    let mut warnings = fit.warnings.clone();
    warnings.extend(resolved.cv_warnings.clone());
    let report = json!({
        "model": fit.kind.to_string(),
        "queries": fit.queries,
        "r2": r2,
        "tau": resolved.tau,
        "bandwidth": resolved.bandwidth,
        "out_dir": args.out,
        "warnings": warnings,
        "diagnostics": fit.diagnostics.iter().map(|d| json!({
            "iterations": d.iterations,
            "converged": d.converged,
            "final_gradient_norm": d.final_gradient_norm,
        })).collect::<Vec<_>>(),
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> swreg::Result<()> {
    let dataset = load_data(&args.model)?;
    let resolved = resolve_model(&args.model, &dataset)?;
    let fit = predict(&dataset, &resolved.config, &[args.x])?;
    fit.save(&args.out)?;
    let report = json!({
        "model": fit.kind.to_string(),
        "x": args.x,
        "tau": resolved.tau,
        "bandwidth": resolved.bandwidth,
        "out_dir": args.out,
        "warnings": fit.warnings,
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn cmd_cv(args: CvArgs) -> swreg::Result<()> {
    let dataset = load_data(&args.model)?;
    let kind = parse_model_kind(&args.model.model)?;
    let needs_tau = matches!(kind, ModelKind::Gsww | ModelKind::Lsww);
    let needs_h = matches!(kind, ModelKind::Lsaw | ModelKind::Lsww);
    let tau_grid: Vec<f64> = if !needs_tau {
        Vec::new()
    } else if args.tau_grid == "auto" {
        default_tau_grid_for(&dataset, args.model.u_points)
    } else {
        parse_list(&args.tau_grid)?
    };
    let h_grid: Vec<f64> = if !needs_h {
        Vec::new()
    } else if args.h_grid == "auto" {
        vec![0.08, 0.15, 0.3]
    } else {
        parse_list(&args.h_grid)?
    };
    // Base config from the flags, without re-running selection.
    let mut base_args = args.model.clone();
    base_args.tau = Some(
        base_args
            .tau
            .filter(|t| t != "auto")
            .unwrap_or_else(|| "0".into()),
    );
    if base_args.tau.as_deref() == Some("0") {
        base_args.tau = Some(default_tau_grid_for(&dataset, args.model.u_points)[1].to_string());
    }
    if needs_h {
        base_args.h = Some(
            base_args
                .h
                .filter(|h| h != "auto")
                .unwrap_or_else(|| "0.15".into()),
        );
    }
    let resolved = resolve_model(&base_args, &dataset)?;
    let report = cross_validate(&dataset, kind, &tau_grid, &h_grid, &resolved.config, args.model.seed)?;
    if let Some(out) = &args.out {
        let mut csv = String::from("tau,h,score,skipped_folds\n");
        for entry in &report.entries {
            csv.push_str(&format!(
                "{},{},{},{}\n",
                entry.tau.map(|v| v.to_string()).unwrap_or_default(),
                entry.bandwidth.map(|v| v.to_string()).unwrap_or_default(),
                entry.score,
                entry.skipped_folds
            ));
        }
        std::fs::write(out, csv)?;
    }
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn parse_list(raw: &str) -> swreg::Result<Vec<f64>> {
    raw.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("cannot parse list entry {v:?}")))
        })
        .collect()
}

fn parse_usize_list(raw: &str) -> swreg::Result<Vec<usize>> {
    raw.split(',')
        .map(|v| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| Error::InvalidArgument(format!("cannot parse list entry {v:?}")))
        })
        .collect()
}

fn cmd_simulate(args: SimulateArgs) -> swreg::Result<()> {
    let scenario = match args.scenario {
        1 => Scenario::One,
        2 => Scenario::Two,
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown scenario {other}; expected 1 or 2"
            )))
        }
    };
    let methods = args
        .methods
        .split(',')
        .map(|m| parse_model_kind(m.trim()))
        .collect::<swreg::Result<Vec<_>>>()?;
    let n_list = parse_usize_list(&args.n)?;
    let n_obs_list = parse_usize_list(&args.n_obs)?;
    let runs = if args.quick { 10 } else { args.runs };
    let harness = HarnessConfig {
        angle_count: args.angles,
        quantile_points: args.quantiles,
        ..HarnessConfig::default()
    };
    let rows = run_table(
        scenario,
        &methods,
        &n_list,
        &n_obs_list,
        runs,
        args.seed,
        &harness,
    )?;
    std::fs::write(&args.out, table_to_csv(&rows))?;
    let report = json!({
        "scenario": args.scenario,
        "runs": runs,
        "out": args.out,
        "rows": rows.iter().map(|r| json!({
            "method": r.method.to_string(),
            "n": r.n,
            "N": r.n_obs,
            "emiswe_e4": r.emiswe_e4,
            "stderr_e4": r.stderr_e4,
        })).collect::<Vec<_>>(),
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn parse_domain(raw: &str) -> swreg::Result<Domain> {
    let values = parse_list(raw)?;
    if values.len() % 2 != 0 || values.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "domain expects lo1,..,lop,hi1,..,hip, got {raw:?}"
        )));
    }
    let p = values.len() / 2;
    Domain::new(values[..p].to_vec(), values[p..].to_vec())
}

fn parse_shape(raw: &str) -> swreg::Result<(usize, usize)> {
    let values = parse_usize_list(raw)?;
    if values.len() != 2 {
        return Err(Error::InvalidArgument(format!(
            "shape expects rows,cols, got {raw:?}"
        )));
    }
    Ok((values[0], values[1]))
}

fn load_grid(input: &Path, domain: &Domain, shape: (usize, usize)) -> swreg::Result<DensityGrid> {
    let values = read_values_csv(input)?;
    DensityGrid::new_normalized(domain.clone(), vec![shape.0, shape.1], values)
}

fn cmd_radon(
    input: &Path,
    domain: &str,
    shape: &str,
    angles: usize,
    u_points: usize,
    out: &Path,
) -> swreg::Result<()> {
    let domain = parse_domain(domain)?;
    let shape = parse_shape(shape)?;
    let grid = load_grid(input, &domain, shape)?;
    let angle_grid = AngleGrid::planar(2, angles)?;
    let sliced = radon_grid(&grid, &angle_grid, u_points)?;
    std::fs::write(out, sliced.to_csv()?)?;
    let report = json!({
        "angles": angles,
        "u_points": u_points,
        "u_min": sliced.u_min(),
        "u_max": sliced.u_max(),
        "nyquist": nyquist(&sliced),
        "out": out,
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn cmd_iradon(
    input: &Path,
    tau: &str,
    domain: &str,
    shape: &str,
    out: &Path,
) -> swreg::Result<()> {
    let domain = parse_domain(domain)?;
    let shape = parse_shape(shape)?;
    let sliced = SlicedDensities::from_csv(&std::fs::read_to_string(input)?)?;
    let tau = if tau == "auto" {
        nyquist(&sliced) / 2.0
    } else {
        tau.parse::<f64>()
            .map_err(|_| Error::InvalidArgument(format!("cannot parse --tau value {tau:?}")))?
    };
    let cfg = FbpConfig {
        tau,
        output_shape: shape,
        domain: domain.clone(),
    };
    let raw = fbp_inverse(&sliced, &cfg)?;
    let rec = normalize_to_density(&raw, &domain, &[shape.0, shape.1])?;
    write_values_csv(out, rec.values())?;
    let report = json!({
        "tau": tau,
        "nyquist": nyquist(&sliced),
        "shape": [shape.0, shape.1],
        "mass": rec.riemann_sum(),
        "out": out,
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn cmd_error_curve(
    input: &Path,
    domain: &str,
    shape: &str,
    angles: usize,
    u_points: usize,
    taus: &str,
    out: &Path,
) -> swreg::Result<()> {
    let domain = parse_domain(domain)?;
    let shape = parse_shape(shape)?;
    let grid = load_grid(input, &domain, shape)?;
    let taus: Vec<f64> = if taus == "auto" {
        let du = 2.0 * domain.projection_radius() / u_points as f64;
        let nyq = std::f64::consts::PI / du;
        (0..6).rev().map(|j| nyq / (1u32 << j) as f64).collect()
    } else {
        parse_list(taus)?
    };
    let curve = reconstruction_error_curve(&grid, angles, u_points, &taus)?;
    let mut csv = String::from("tau,sup_error\n");
    for (tau, err) in &curve {
        csv.push_str(&format!("{tau},{err}\n"));
    }
    std::fs::write(out, csv)?;
    let report = json!({
        "curve": curve.iter().map(|(t, e)| json!({"tau": t, "sup_error": e})).collect::<Vec<_>>(),
        "min_error": curve.iter().map(|(_, e)| *e).fold(f64::INFINITY, f64::min),
        "out": out,
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}
