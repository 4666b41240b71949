//! The four regression estimators and their shared machinery.
//!
//! Slice-averaged (SAW) models run gradient descent on an equal-weight
//! particle representation of the fitted distribution; slice-wise (SWW)
//! models solve one convex quantile regression per angle and map the
//! slices back through the regularized inverse transform. Global and local
//! variants differ only in the weight vector. Also hosts cross-validation
//! for the cutoff/bandwidth and fit serialization.

use std::path::Path;

use ndarray::{Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{read_values_csv, write_values_csv};
use crate::density::sample_grid;
use crate::domain::{AngleGrid, DensityGrid, Domain, PointCloud, RegressionDataset, Responses};
use crate::error::{Error, Result};
use crate::frechet::{frechet_slice_fit, GlobalWeightModel, SmoothingKernel};
use crate::inversion::{fbp_inverse, normalize_to_density, FbpConfig};
use crate::metrics::sliced_wasserstein_squared;
use crate::seeds::{self, Stream};
use crate::slicing::{
    density_from_quantiles, quantiles_from_cloud, quantiles_from_density, radon_grid,
    slice_pointcloud, SlicedQuantiles, Smoothing,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Gsaw,
    Lsaw,
    Gsww,
    Lsww,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            ModelKind::Gsaw => "gsaw",
            ModelKind::Lsaw => "lsaw",
            ModelKind::Gsww => "gsww",
            ModelKind::Lsww => "lsww",
        };
        write!(f, "{name}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightScheme {
    Global,
    Local {
        bandwidth: f64,
        kernel: SmoothingKernel,
    },
}

impl WeightScheme {
    fn weights(&self, dataset: &RegressionDataset, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            WeightScheme::Global => GlobalWeightModel::fit(dataset.predictors().view())?
                .weights(dataset.predictors().view(), x),
            WeightScheme::Local { bandwidth, kernel } => {
                if dataset.predictor_dim() != 1 {
                    return Err(Error::UnsupportedDimension {
                        p: dataset.predictor_dim(),
                        msg: "local weights are defined for scalar predictors",
                    });
                }
                let xs: Vec<f64> = dataset.predictors().column(0).to_vec();
                Ok(crate::frechet::local_weights(&xs, x[0], *bandwidth, *kernel)?.values)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SawConfig {
    /// Particle count; defaults to the smallest response cloud.
    pub n_particles: Option<usize>,
    pub learning_rate: f64,
    pub convergence_threshold: f64,
    pub max_iters: usize,
    pub seed: u64,
    pub angle_count: usize,
}

impl Default for SawConfig {
    fn default() -> Self {
        Self {
            n_particles: None,
            learning_rate: 0.5,
            convergence_threshold: 1e-4,
            max_iters: 2000,
            seed: 0,
            angle_count: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwwConfig {
    pub angle_count: usize,
    pub quantile_points: usize,
    pub u_points: usize,
    pub tau: f64,
    pub output_shape: (usize, usize),
    pub smoothing: Smoothing,
}

impl SwwConfig {
    /// Desk-scale defaults; the cutoff starts at half the u-grid Nyquist.
    pub fn with_defaults(domain: &Domain) -> Self {
        let u_points = 256;
        let du = 2.0 * domain.projection_radius() / u_points as f64;
        Self {
            angle_count: 60,
            quantile_points: 128,
            u_points,
            tau: std::f64::consts::PI / du / 2.0,
            output_shape: (64, 64),
            smoothing: Smoothing::Adaptive { factor: 1.0 },
        }
    }
}

#[derive(Debug, Clone)]
pub enum ModelConfig {
    Saw { scheme: WeightScheme, cfg: SawConfig },
    Sww { scheme: WeightScheme, cfg: SwwConfig },
}

impl ModelConfig {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelConfig::Saw {
                scheme: WeightScheme::Global,
                ..
            } => ModelKind::Gsaw,
            ModelConfig::Saw { .. } => ModelKind::Lsaw,
            ModelConfig::Sww {
                scheme: WeightScheme::Global,
                ..
            } => ModelKind::Gsww,
            ModelConfig::Sww { .. } => ModelKind::Lsww,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct QueryDiagnostics {
    pub iterations: usize,
    pub converged: bool,
    pub final_gradient_norm: f64,
    pub objective_trace: Vec<f64>,
}

#[derive(Debug, Clone)]
pub enum QueryOutput {
    Particles(PointCloud),
    Density {
        grid: DensityGrid,
        slices: SlicedQuantiles,
    },
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub kind: ModelKind,
    pub queries: Vec<Vec<f64>>,
    pub outputs: Vec<QueryOutput>,
    pub diagnostics: Vec<QueryDiagnostics>,
    pub warnings: Vec<String>,
}

/// Response clouds downsampled to a common particle count and
/// pre-projected onto every angle (sorted per angle); the shared input of
/// the particle models.
pub struct SlicedDataset {
    angles: AngleGrid,
    /// Per sample: L x N sorted projections.
    sorted: Vec<Array2<f64>>,
    clouds: Vec<PointCloud>,
    n_particles: usize,
}

impl SlicedDataset {
    pub fn angles(&self) -> &AngleGrid {
        &self.angles
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    pub fn clouds(&self) -> &[PointCloud] {
        &self.clouds
    }
}

/// Downsamples every response to the common particle count (seeded uniform
/// subsample without replacement) and pre-sorts all projections. Grid
/// responses are first drawn into clouds by inverse-CDF sampling.
pub fn prepare_saw_dataset(dataset: &RegressionDataset, cfg: &SawConfig) -> Result<SlicedDataset> {
    let p = dataset.domain().dim();
    if p != 2 {
        return Err(Error::UnsupportedDimension {
            p,
            msg: "the angle grid generator covers planar responses",
        });
    }
    let angles = AngleGrid::planar(2, cfg.angle_count)?;
    let raw_clouds: Vec<PointCloud> = match dataset.responses() {
        Responses::Clouds(clouds) => clouds.clone(),
        Responses::Grids(grids) => {
            // Particle models are native to clouds; grids are sampled with
            // a per-sample derived stream. Documented approximation.
            let count = cfg.n_particles.unwrap_or(256);
            grids
                .iter()
                .enumerate()
                .map(|(i, g)| {
                    let mut rng = seeds::rng(cfg.seed, Stream::GridSample, i as u64);
                    sample_grid(g, count, &mut rng)
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    let min_n = raw_clouds.iter().map(PointCloud::len).min().unwrap_or(0);
    let n_particles = cfg.n_particles.unwrap_or(min_n).min(min_n);
    if n_particles == 0 {
        return Err(Error::DegenerateSample("empty response cloud".into()));
    }
    let clouds: Vec<PointCloud> = raw_clouds
        .iter()
        .enumerate()
        .map(|(i, c)| downsample(c, n_particles, cfg.seed, i as u64))
        .collect::<Result<Vec<_>>>()?;
    let sorted = clouds
        .iter()
        .map(|c| {
            let mut rows = Array2::zeros((angles.len(), n_particles));
            for l in 0..angles.len() {
                let projections = slice_pointcloud(c, angles.direction(l));
                for (r, v) in projections.iter().enumerate() {
                    rows[[l, r]] = *v;
                }
            }
            rows
        })
        .collect();
    Ok(SlicedDataset {
        angles,
        sorted,
        clouds,
        n_particles,
    })
}

fn downsample(cloud: &PointCloud, target: usize, seed: u64, index: u64) -> Result<PointCloud> {
    if cloud.len() == target {
        return Ok(cloud.clone());
    }
    let mut rng = seeds::rng(seed, Stream::Downsample, index);
    let mut indices: Vec<usize> = (0..cloud.len()).collect();
    indices.shuffle(&mut rng);
    indices.truncate(target);
    indices.sort_unstable();
    let mut points = Array2::zeros((target, cloud.dim()));
    for (row, &i) in indices.iter().enumerate() {
        points.row_mut(row).assign(&cloud.point(i));
    }
    PointCloud::new(points)
}

/// Projections of the particles along one direction plus the stable
/// ordering (ties break by particle index, keeping gradients deterministic
/// on integer data).
fn projection_ranks(particles: &Array2<f64>, theta: ArrayView1<'_, f64>) -> (Vec<f64>, Vec<usize>) {
    let n = particles.nrows();
    let mut projections = vec![0.0; n];
    for (j, row) in particles.rows().into_iter().enumerate() {
        projections[j] = row.iter().zip(theta.iter()).map(|(a, b)| a * b).sum();
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| projections[a].total_cmp(&projections[b]));
    (projections, order)
}

/// Gradient of the particle objective together with the objective value.
///
/// The objective is (2nL)^{-1} sum_{i,l} s_i |sorted particle projections -
/// sorted response projections|^2; its gradient at particle j is the
/// rank-aligned form (nL)^{-1} sum_{i,l} s_i theta_l (proj_j - aligned_ij),
/// with alignment by matching nondecreasing order.
pub fn saw_gradient_objective(
    particles: &Array2<f64>,
    data: &SlicedDataset,
    weights: &[f64],
) -> Result<(Array2<f64>, f64)> {
    let n = data.sorted.len();
    if weights.len() != n {
        return Err(Error::InvalidArgument(format!(
            "{} weights for {n} responses",
            weights.len()
        )));
    }
    let n_particles = particles.nrows();
    if n_particles != data.n_particles {
        return Err(Error::GridMismatch(format!(
            "{n_particles} particles but the dataset was prepared with {}",
            data.n_particles
        )));
    }
    let p = particles.ncols();
    let l_count = data.angles.len();
    let weight_sum: f64 = weights.iter().sum();

    let mut gradient = Array2::zeros((n_particles, p));
    let mut objective = 0.0;
    for l in 0..l_count {
        let theta = data.angles.direction(l);
        let (projections, order) = projection_ranks(particles, theta);
        for (rank, &j) in order.iter().enumerate() {
            let mut b = 0.0;
            let mut c = 0.0;
            for (i, w) in weights.iter().enumerate() {
                let v = data.sorted[i][[l, rank]];
                b += w * v;
                c += w * v * v;
            }
            let pj = projections[j];
            let residual = weight_sum * pj - b;
            objective += weight_sum * pj * pj - 2.0 * pj * b + c;
            for k in 0..p {
                gradient[[j, k]] += residual * theta[k];
            }
        }
    }
    let scale = 1.0 / (n as f64 * l_count as f64);
    gradient *= scale;
    objective *= 0.5 * scale;
    Ok((gradient, objective))
}

pub fn saw_gradient(
    particles: &Array2<f64>,
    data: &SlicedDataset,
    weights: &[f64],
) -> Result<Array2<f64>> {
    Ok(saw_gradient_objective(particles, data, weights)?.0)
}

pub fn saw_objective(
    particles: &Array2<f64>,
    data: &SlicedDataset,
    weights: &[f64],
) -> Result<f64> {
    Ok(saw_gradient_objective(particles, data, weights)?.1)
}

const DIVERGENCE_STREAK: usize = 10;

fn saw_descent(
    data: &SlicedDataset,
    weights: &[f64],
    cfg: &SawConfig,
    query_index: u64,
) -> Result<(PointCloud, QueryDiagnostics)> {
    // Warm start: bootstrap resample of the response carrying the largest
    // weight at this query.
    let best = weights
        .iter()
        .enumerate()
        .max_by(|(_, a), (_, b)| a.total_cmp(b))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let source = &data.clouds[best];
    let mut rng = seeds::rng(cfg.seed, Stream::Init, query_index);
    let mut particles = Array2::zeros((data.n_particles, source.dim()));
    for row in 0..data.n_particles {
        let pick = rng.random_range(0..source.len());
        particles.row_mut(row).assign(&source.point(pick));
    }

    let mut trace = Vec::new();
    let mut streak = 0usize;
    let mut converged = false;
    let mut iterations = 0usize;
    let mut gradient_norm = 0.0;
    for iter in 0..cfg.max_iters {
        let (gradient, objective) = saw_gradient_objective(&particles, data, weights)?;
        if let Some(&last) = trace.last() {
            if objective > last {
                streak += 1;
                if streak >= DIVERGENCE_STREAK {
                    return Err(Error::StepSize {
                        eta: cfg.learning_rate,
                        streak,
                    });
                }
            } else {
                streak = 0;
            }
        }
        trace.push(objective);
        gradient_norm = gradient.iter().map(|g| g * g).sum::<f64>().sqrt();

        let norm_before = particles.iter().map(|v| v * v).sum::<f64>().sqrt();
        particles.zip_mut_with(&gradient, |w, g| *w -= cfg.learning_rate * g);
        iterations = iter + 1;
        let step = cfg.learning_rate * gradient_norm;
        if step / norm_before.max(1e-12) < cfg.convergence_threshold {
            converged = true;
            break;
        }
    }
    Ok((
        PointCloud::new(particles)?,
        QueryDiagnostics {
            iterations,
            converged,
            final_gradient_norm: gradient_norm,
            objective_trace: trace,
        },
    ))
}

/// Slice-averaged Wasserstein regression: per query, weight the responses,
/// warm-start the particles, and descend until the relative update falls
/// under the threshold.
pub fn saw_fit(
    dataset: &RegressionDataset,
    queries: &[Vec<f64>],
    scheme: WeightScheme,
    cfg: &SawConfig,
) -> Result<FitResult> {
    let data = prepare_saw_dataset(dataset, cfg)?;
    let fits: Vec<Result<(PointCloud, QueryDiagnostics)>> = queries
        .par_iter()
        .enumerate()
        .map(|(k, x)| {
            let weights = scheme.weights(dataset, x)?;
            saw_descent(&data, &weights, cfg, k as u64)
        })
        .collect();
    let mut outputs = Vec::with_capacity(queries.len());
    let mut diagnostics = Vec::with_capacity(queries.len());
    for fit in fits {
        let (cloud, diag) = fit?;
        outputs.push(QueryOutput::Particles(cloud));
        diagnostics.push(diag);
    }
    Ok(FitResult {
        kind: match scheme {
            WeightScheme::Global => ModelKind::Gsaw,
            WeightScheme::Local { .. } => ModelKind::Lsaw,
        },
        queries: queries.to_vec(),
        outputs,
        diagnostics,
        warnings: Vec::new(),
    })
}

/// Response slicings on a common angle/probability grid: clouds project
/// directly, grids go through their line integrals.
pub fn response_quantiles(
    dataset: &RegressionDataset,
    angles: &AngleGrid,
    s_points: usize,
    u_points: usize,
) -> Result<Vec<SlicedQuantiles>> {
    match dataset.responses() {
        Responses::Clouds(clouds) => clouds
            .iter()
            .map(|c| quantiles_from_cloud(c, angles, s_points))
            .collect(),
        Responses::Grids(grids) => grids
            .iter()
            .map(|g| {
                let sliced = radon_grid(g, angles, u_points)?;
                quantiles_from_density(&sliced, s_points)
            })
            .collect(),
    }
}

/// Slicing of a reconstructed density, used to score slice-wise
/// predictions.
pub fn density_to_quantiles(
    grid: &DensityGrid,
    angles: &AngleGrid,
    s_points: usize,
    u_points: usize,
) -> Result<SlicedQuantiles> {
    let sliced = radon_grid(grid, angles, u_points)?;
    quantiles_from_density(&sliced, s_points)
}

struct SwwPrepared {
    angles: AngleGrid,
    /// Per angle: n x S matrix of response quantile rows.
    angle_stacks: Vec<Array2<f64>>,
    radius: f64,
}

fn prepare_sww(dataset: &RegressionDataset, cfg: &SwwConfig) -> Result<SwwPrepared> {
    if dataset.domain().dim() != 2 {
        return Err(Error::UnsupportedDimension {
            p: dataset.domain().dim(),
            msg: "slice-wise regression reconstructs planar densities",
        });
    }
    let angles = AngleGrid::planar(2, cfg.angle_count)?;
    let quantiles = response_quantiles(dataset, &angles, cfg.quantile_points, cfg.u_points)?;
    let n = dataset.len();
    let mut angle_stacks = Vec::with_capacity(cfg.angle_count);
    for l in 0..cfg.angle_count {
        let mut stack = Array2::zeros((n, cfg.quantile_points));
        for (i, q) in quantiles.iter().enumerate() {
            stack.row_mut(i).assign(&q.row(l));
        }
        angle_stacks.push(stack);
    }
    Ok(SwwPrepared {
        angles,
        angle_stacks,
        radius: dataset.domain().projection_radius(),
    })
}

fn sww_query(
    prepared: &SwwPrepared,
    dataset: &RegressionDataset,
    cfg: &SwwConfig,
    weights: &[f64],
) -> Result<QueryOutput> {
    let bounds = (-prepared.radius, prepared.radius);
    let mut fitted = Array2::zeros((prepared.angles.len(), cfg.quantile_points));
    for (l, stack) in prepared.angle_stacks.iter().enumerate() {
        let row = frechet_slice_fit(stack.view(), weights, bounds)?;
        for (k, v) in row.iter().enumerate() {
            fitted[[l, k]] = *v;
        }
    }
    let slices = SlicedQuantiles::new(prepared.angles.clone(), fitted)?;
    let densities = density_from_quantiles(
        &slices,
        cfg.u_points,
        -prepared.radius,
        prepared.radius,
        cfg.smoothing,
    )?;
    let fbp = FbpConfig {
        tau: cfg.tau,
        output_shape: cfg.output_shape,
        domain: dataset.domain().clone(),
    };
    let raw = fbp_inverse(&densities, &fbp)?;
    let grid = normalize_to_density(
        &raw,
        dataset.domain(),
        &[cfg.output_shape.0, cfg.output_shape.1],
    )?;
    Ok(QueryOutput::Density { grid, slices })
}

/// Slice-wise Wasserstein regression: per-angle Fréchet fits assembled
/// into a quantile slicing, converted to densities, and mapped back
/// through the regularized inverse.
pub fn sww_fit(
    dataset: &RegressionDataset,
    queries: &[Vec<f64>],
    scheme: WeightScheme,
    cfg: &SwwConfig,
) -> Result<FitResult> {
    let prepared = prepare_sww(dataset, cfg)?;
    let outputs: Vec<Result<QueryOutput>> = queries
        .par_iter()
        .map(|x| {
            let weights = scheme.weights(dataset, x)?;
            sww_query(&prepared, dataset, cfg, &weights)
        })
        .collect();
    let outputs = outputs.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(FitResult {
        kind: match scheme {
            WeightScheme::Global => ModelKind::Gsww,
            WeightScheme::Local { .. } => ModelKind::Lsww,
        },
        queries: queries.to_vec(),
        outputs,
        diagnostics: vec![QueryDiagnostics::default(); queries.len()],
        warnings: Vec::new(),
    })
}

pub fn fit_model(
    dataset: &RegressionDataset,
    queries: &[Vec<f64>],
    config: &ModelConfig,
) -> Result<FitResult> {
    match config {
        ModelConfig::Saw { scheme, cfg } => saw_fit(dataset, queries, *scheme, cfg),
        ModelConfig::Sww { scheme, cfg } => sww_fit(dataset, queries, *scheme, cfg),
    }
}

/// Re-runs the fit at a single new query. Fréchet regression carries no
/// trained state beyond the dataset and configuration, so prediction and
/// fitting coincide; local models warn when extrapolating.
pub fn predict(
    dataset: &RegressionDataset,
    config: &ModelConfig,
    x_new: &[f64],
) -> Result<FitResult> {
    let mut result = fit_model(dataset, &[x_new.to_vec()], config)?;
    let local = matches!(
        config,
        ModelConfig::Saw {
            scheme: WeightScheme::Local { .. },
            ..
        } | ModelConfig::Sww {
            scheme: WeightScheme::Local { .. },
            ..
        }
    );
    if local && dataset.predictor_dim() == 1 {
        let xs = dataset.predictors().column(0);
        let (lo, hi) = xs
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |acc, v| {
                (acc.0.min(*v), acc.1.max(*v))
            });
        if x_new[0] < lo || x_new[0] > hi {
            result.warnings.push(format!(
                "query {} lies outside the predictor range [{lo}, {hi}]; local fits extrapolate",
                x_new[0]
            ));
        }
    }
    Ok(result)
}

/// Converts a fit output into a quantile slicing for scoring: particles
/// project directly, reconstructions are re-sliced. The latter is how the
/// cutoff enters the cross-validation score at all.
pub fn output_quantiles(
    output: &QueryOutput,
    angles: &AngleGrid,
    s_points: usize,
    u_points: usize,
) -> Result<SlicedQuantiles> {
    match output {
        QueryOutput::Particles(cloud) => quantiles_from_cloud(cloud, angles, s_points),
        QueryOutput::Density { grid, .. } => density_to_quantiles(grid, angles, s_points, u_points),
    }
}

/// In-sample fraction of variance explained: fits at every training
/// predictor and compares against the response slicings.
pub fn r2_in_sample(dataset: &RegressionDataset, config: &ModelConfig) -> Result<f64> {
    let (angles, s_points, u_points) = scoring_grid(dataset, config)?;
    let queries: Vec<Vec<f64>> = (0..dataset.len())
        .map(|i| dataset.predictor(i).to_vec())
        .collect();
    let fit = fit_model(dataset, &queries, config)?;
    let fitted = fit
        .outputs
        .iter()
        .map(|o| output_quantiles(o, &angles, s_points, u_points))
        .collect::<Result<Vec<_>>>()?;
    let responses = response_quantiles(dataset, &angles, s_points, u_points)?;
    crate::metrics::sw_r2(&responses, &fitted)
}

fn scoring_grid(
    dataset: &RegressionDataset,
    config: &ModelConfig,
) -> Result<(AngleGrid, usize, usize)> {
    if dataset.domain().dim() != 2 {
        return Err(Error::UnsupportedDimension {
            p: dataset.domain().dim(),
            msg: "scoring grids are planar",
        });
    }
    let (l, s, u) = match config {
        ModelConfig::Saw { cfg, .. } => (cfg.angle_count, 128, 256),
        ModelConfig::Sww { cfg, .. } => (cfg.angle_count, cfg.quantile_points, cfg.u_points),
    };
    Ok((AngleGrid::planar(2, l)?, s, u))
}

#[derive(Debug, Clone, Serialize)]
pub struct CvEntry {
    pub tau: Option<f64>,
    pub bandwidth: Option<f64>,
    pub score: f64,
    pub skipped_folds: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct CvReport {
    pub entries: Vec<CvEntry>,
    pub folds: usize,
    pub best_tau: Option<f64>,
    pub best_bandwidth: Option<f64>,
    pub warnings: Vec<String>,
}

/// Leave-one-out folds for n <= 30, else 5-fold with a seeded shuffle.
pub fn make_folds(n: usize, seed: u64) -> Vec<Vec<usize>> {
    if n <= 30 {
        (0..n).map(|i| vec![i]).collect()
    } else {
        let mut indices: Vec<usize> = (0..n).collect();
        indices.shuffle(&mut seeds::rng(seed, Stream::Folds, 0));
        let mut folds = vec![Vec::new(); 5];
        for (pos, i) in indices.into_iter().enumerate() {
            folds[pos % 5].push(i);
        }
        folds
    }
}

/// Cross-validation over a cutoff grid and/or a bandwidth grid. The score
/// of a combination is the summed squared slice-averaged distance between
/// each held-out response and the prediction of the model fitted without
/// its fold; slice-wise predictions are scored through the slicing of the
/// reconstructed density.
pub fn cross_validate(
    dataset: &RegressionDataset,
    kind: ModelKind,
    tau_grid: &[f64],
    h_grid: &[f64],
    base: &ModelConfig,
    seed: u64,
) -> Result<CvReport> {
    let needs_tau = matches!(kind, ModelKind::Gsww | ModelKind::Lsww);
    let needs_h = matches!(kind, ModelKind::Lsaw | ModelKind::Lsww);
    if needs_tau && tau_grid.is_empty() {
        return Err(Error::InvalidArgument(
            "cutoff grid must be nonempty for slice-wise models".into(),
        ));
    }
    if needs_h && h_grid.is_empty() {
        return Err(Error::InvalidArgument(
            "bandwidth grid must be nonempty for local models".into(),
        ));
    }
    let taus: Vec<Option<f64>> = if needs_tau {
        tau_grid.iter().map(|t| Some(*t)).collect()
    } else {
        vec![None]
    };
    let hs: Vec<Option<f64>> = if needs_h {
        h_grid.iter().map(|h| Some(*h)).collect()
    } else {
        vec![None]
    };

    let folds = make_folds(dataset.len(), seed);
    let (angles, s_points, u_points) = scoring_grid(dataset, base)?;
    let held_out = response_quantiles(dataset, &angles, s_points, u_points)?;

    let combos: Vec<(Option<f64>, Option<f64>)> = taus
        .iter()
        .flat_map(|t| hs.iter().map(move |h| (*t, *h)))
        .collect();

    let entries: Vec<Result<CvEntry>> = combos
        .par_iter()
        .map(|(tau, h)| {
            let config = apply_combo(base, *tau, *h);
            let mut score = 0.0;
            let mut skipped = 0usize;
            for fold in &folds {
                let train: Vec<usize> =
                    (0..dataset.len()).filter(|i| !fold.contains(i)).collect();
                let train_set = match dataset.subset(&train) {
                    Ok(s) => s,
                    Err(_) => {
                        skipped += 1;
                        continue;
                    }
                };
                let queries: Vec<Vec<f64>> = fold
                    .iter()
                    .map(|&i| dataset.predictor(i).to_vec())
                    .collect();
                match fit_model(&train_set, &queries, &config) {
                    Ok(fit) => {
                        for (slot, &i) in fold.iter().enumerate() {
                            let predicted =
                                output_quantiles(&fit.outputs[slot], &angles, s_points, u_points)?;
                            score += sliced_wasserstein_squared(&held_out[i], &predicted)?;
                        }
                    }
                    Err(Error::RankDeficient { .. }) | Err(Error::BandwidthTooSmall { .. }) => {
                        skipped += 1;
                    }
                    Err(e) => return Err(e),
                }
            }
            Ok(CvEntry {
                tau: *tau,
                bandwidth: *h,
                score,
                skipped_folds: skipped,
            })
        })
        .collect();
    let entries = entries.into_iter().collect::<Result<Vec<_>>>()?;

    let best = entries
        .iter()
        .filter(|e| e.skipped_folds < folds.len())
        .min_by(|a, b| a.score.total_cmp(&b.score))
        .ok_or_else(|| Error::Numeric("every cross-validation fold failed".into()))?;
    let warnings: Vec<String> = entries
        .iter()
        .filter(|e| e.skipped_folds > 0)
        .map(|e| {
            format!(
                "combination (tau {:?}, h {:?}) skipped {} fold(s) with degenerate designs",
                e.tau, e.bandwidth, e.skipped_folds
            )
        })
        .collect();
    Ok(CvReport {
        folds: folds.len(),
        best_tau: best.tau,
        best_bandwidth: best.bandwidth,
        entries,
        warnings,
    })
}

fn apply_combo(base: &ModelConfig, tau: Option<f64>, h: Option<f64>) -> ModelConfig {
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

#[derive(Debug, Serialize, Deserialize)]
struct FitManifest {
    kind: ModelKind,
    queries: Vec<Vec<f64>>,
    diagnostics: Vec<QueryDiagnostics>,
    warnings: Vec<String>,
    outputs: Vec<OutputManifest>,
}

#[derive(Debug, Serialize, Deserialize)]
struct OutputManifest {
    file: String,
    slices: Option<String>,
    domain_lower: Option<Vec<f64>>,
    domain_upper: Option<Vec<f64>>,
    shape: Option<Vec<usize>>,
}

impl FitResult {
    /// Writes `fit.json` plus per-query `particles_<k>.csv` or
    /// `density_<k>.csv` (and `slices_<k>.csv` for slice-wise fits).
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut outputs = Vec::with_capacity(self.outputs.len());
        for (k, output) in self.outputs.iter().enumerate() {
            match output {
                QueryOutput::Particles(cloud) => {
                    let file = format!("particles_{k}.csv");
                    let mut text = String::new();
                    for row in cloud.points().rows() {
                        let fields: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                        text.push_str(&fields.join(","));
                        text.push('\n');
                    }
                    std::fs::write(dir.join(&file), text)?;
                    outputs.push(OutputManifest {
                        file,
                        slices: None,
                        domain_lower: None,
                        domain_upper: None,
                        shape: None,
                    });
                }
                QueryOutput::Density { grid, slices } => {
                    let file = format!("density_{k}.csv");
                    write_values_csv(&dir.join(&file), grid.values())?;
                    let slices_file = format!("slices_{k}.csv");
                    std::fs::write(dir.join(&slices_file), slices.to_csv()?)?;
                    outputs.push(OutputManifest {
                        file,
                        slices: Some(slices_file),
                        domain_lower: Some(grid.domain().lower().to_vec()),
                        domain_upper: Some(grid.domain().upper().to_vec()),
                        shape: Some(grid.shape().to_vec()),
                    });
                }
            }
        }
        let manifest = FitManifest {
            kind: self.kind,
            queries: self.queries.clone(),
            diagnostics: self.diagnostics.clone(),
            warnings: self.warnings.clone(),
            outputs,
        };
        std::fs::write(
            dir.join("fit.json"),
            serde_json::to_string_pretty(&manifest)?,
        )?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: FitManifest =
            serde_json::from_str(&std::fs::read_to_string(dir.join("fit.json"))?)?;
        let mut outputs = Vec::with_capacity(manifest.outputs.len());
        for entry in &manifest.outputs {
            if entry.file.starts_with("particles") {
                let text = std::fs::read_to_string(dir.join(&entry.file))?;
                let mut rows = Vec::new();
                for (idx, line) in text.lines().enumerate() {
                    if line.trim().is_empty() {
                        continue;
                    }
                    let row: std::result::Result<Vec<f64>, _> =
                        line.split(',').map(|f| f.trim().parse::<f64>()).collect();
                    rows.push(row.map_err(|_| Error::Parse {
                        line: idx + 1,
                        msg: "cannot parse particle coordinate".into(),
                    })?);
                }
                outputs.push(QueryOutput::Particles(PointCloud::from_rows(&rows)?));
            } else {
                let values = read_values_csv(&dir.join(&entry.file))?;
                let domain = Domain::new(
                    entry.domain_lower.clone().ok_or_else(|| {
                        Error::Schema("density output without domain metadata".into())
                    })?,
                    entry.domain_upper.clone().unwrap_or_default(),
                )?;
                let shape = entry
                    .shape
                    .clone()
                    .ok_or_else(|| Error::Schema("density output without shape".into()))?;
                let grid = DensityGrid::new(domain, shape, values)?;
                let slices_file = entry
                    .slices
                    .as_ref()
                    .ok_or_else(|| Error::Schema("density output without slices".into()))?;
                let slices =
                    SlicedQuantiles::from_csv(&std::fs::read_to_string(dir.join(slices_file))?)?;
                outputs.push(QueryOutput::Density { grid, slices });
            }
        }
        Ok(FitResult {
            kind: manifest.kind,
            queries: manifest.queries,
            outputs,
            diagnostics: manifest.diagnostics,
            warnings: manifest.warnings,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn cloud_dataset(points: Vec<Vec<Vec<f64>>>, xs: Vec<f64>) -> RegressionDataset {
        let n = xs.len();
        let mut predictors = Array2::zeros((n, 1));
        for (i, x) in xs.iter().enumerate() {
            predictors[[i, 0]] = *x;
        }
        let clouds: Vec<PointCloud> = points
            .iter()
            .map(|rows| PointCloud::from_rows(rows).unwrap())
            .collect();
        RegressionDataset::new(predictors, Responses::Clouds(clouds), Domain::unit_square())
            .unwrap()
    }

    #[test]
    fn gradient_hand_example() {
        // Single particle at the origin, responses at (1,0), two axis
        // angles. Putting all weight on the first response recovers the
        // single-sample value of the displayed formula: (-0.5, 0).
        let dataset = cloud_dataset(
            vec![vec![vec![1.0, 0.0]], vec![vec![1.0, 0.0]]],
            vec![0.0, 1.0],
        );
        let cfg = SawConfig {
            angle_count: 2,
            ..SawConfig::default()
        };
        let data = prepare_saw_dataset(&dataset, &cfg).unwrap();
        let particles = array![[0.0, 0.0]];
        let gradient = saw_gradient(&particles, &data, &[2.0, 0.0]).unwrap();
        assert!((gradient[[0, 0]] + 0.5).abs() < 1e-14, "{gradient:?}");
        assert!(gradient[[0, 1]].abs() < 1e-14);
    }

    #[test]
    fn gradient_zero_at_fixed_point() {
        let rows = vec![vec![0.1, 0.2], vec![-0.4, 0.3], vec![0.25, -0.15]];
        let dataset = cloud_dataset(vec![rows.clone(), rows.clone()], vec![0.0, 1.0]);
        let cfg = SawConfig {
            angle_count: 8,
            ..SawConfig::default()
        };
        let data = prepare_saw_dataset(&dataset, &cfg).unwrap();
        let particles = PointCloud::from_rows(&rows).unwrap();
        let gradient = saw_gradient(particles.points(), &data, &[1.0, 1.0]).unwrap();
        for g in gradient.iter() {
            assert!(g.abs() < 1e-14);
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        for trial in 0..5 {
            let n = 3 + trial % 3;
            let n_particles = 4 + trial;
            let clouds: Vec<Vec<Vec<f64>>> = (0..n)
                .map(|_| {
                    (0..n_particles)
                        .map(|_| vec![rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5])
                        .collect()
                })
                .collect();
            let xs: Vec<f64> = (0..n).map(|i| i as f64 / n as f64 - 0.5).collect();
            let dataset = cloud_dataset(clouds, xs);
            let cfg = SawConfig {
                angle_count: 6,
                ..SawConfig::default()
            };
            let data = prepare_saw_dataset(&dataset, &cfg).unwrap();
            let weights = WeightScheme::Global.weights(&dataset, &[0.1]).unwrap();
            let mut particles = Array2::zeros((n_particles, 2));
            for v in particles.iter_mut() {
                *v = rng.random::<f64>() - 0.5;
            }
            let analytic = saw_gradient(&particles, &data, &weights).unwrap();
            let step = 1e-5;
            let mut max_rel: f64 = 0.0;
            for j in 0..n_particles {
                for k in 0..2 {
                    let mut plus = particles.clone();
                    plus[[j, k]] += step;
                    let mut minus = particles.clone();
                    minus[[j, k]] -= step;
                    let fd = (saw_objective(&plus, &data, &weights).unwrap()
                        - saw_objective(&minus, &data, &weights).unwrap())
                        / (2.0 * step);
                    let denom = analytic[[j, k]].abs().max(1e-8);
                    max_rel = max_rel.max((analytic[[j, k]] - fd).abs() / denom);
                }
            }
            assert!(max_rel <= 1e-5, "finite-difference mismatch {max_rel}");
        }
    }

    #[test]
    fn saw_converges_to_common_response() {
        let rows = vec![
            vec![0.1, 0.2],
            vec![-0.3, 0.4],
            vec![0.0, -0.2],
            vec![0.25, 0.1],
        ];
        let dataset = cloud_dataset(
            vec![rows.clone(), rows.clone(), rows.clone()],
            vec![-0.3, 0.1, 0.4],
        );
        let cfg = SawConfig {
            angle_count: 16,
            ..SawConfig::default()
        };
        let fit = saw_fit(&dataset, &[vec![0.2]], WeightScheme::Global, &cfg).unwrap();
        let QueryOutput::Particles(particles) = &fit.outputs[0] else {
            panic!("expected particles");
        };
        let angles = AngleGrid::planar(2, 16).unwrap();
        let fitted = quantiles_from_cloud(particles, &angles, 64).unwrap();
        let target =
            quantiles_from_cloud(&PointCloud::from_rows(&rows).unwrap(), &angles, 64).unwrap();
        let d = crate::metrics::sliced_wasserstein(&fitted, &target)
            .unwrap()
            .value;
        assert!(d <= 1e-3, "distance to common response {d}");
        assert!(fit.diagnostics[0].converged);
    }

    #[test]
    fn saw_dirac_line_tracks_least_squares() {
        let n = 11;
        let xs: Vec<f64> = (0..n).map(|i| -0.5 + i as f64 / (n - 1) as f64).collect();
        let clouds: Vec<Vec<Vec<f64>>> = xs.iter().map(|x| vec![vec![*x, *x]]).collect();
        let dataset = cloud_dataset(clouds, xs);
        let cfg = SawConfig {
            angle_count: 12,
            ..SawConfig::default()
        };
        let query = 0.27;
        let fit = saw_fit(&dataset, &[vec![query]], WeightScheme::Global, &cfg).unwrap();
        let QueryOutput::Particles(particles) = &fit.outputs[0] else {
            panic!("expected particles");
        };
        let mean = particles.mean();
        assert!(
            (mean[0] - query).abs() < 1e-2 && (mean[1] - query).abs() < 1e-2,
            "mean particle ({}, {}) vs ({query}, {query})",
            mean[0],
            mean[1]
        );
    }

    #[test]
    fn saw_objective_trace_non_increasing() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let clouds: Vec<Vec<Vec<f64>>> = (0..6)
            .map(|_| {
                (0..12)
                    .map(|_| vec![rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5])
                    .collect()
            })
            .collect();
        let xs: Vec<f64> = (0..6).map(|i| i as f64 * 0.1 - 0.25).collect();
        let dataset = cloud_dataset(clouds, xs);
        let cfg = SawConfig {
            angle_count: 12,
            ..SawConfig::default()
        };
        let fit = saw_fit(&dataset, &[vec![0.05]], WeightScheme::Global, &cfg).unwrap();
        let trace = &fit.diagnostics[0].objective_trace;
        for w in trace.windows(2).skip(1) {
            assert!(
                w[1] <= w[0] + 1e-12,
                "objective increased mid-descent: {} -> {}",
                w[0],
                w[1]
            );
        }
    }

    #[test]
    fn sww_identical_responses_match_common_slicing() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let rows: Vec<Vec<f64>> = (0..400)
            .map(|_| {
                vec![
                    0.6 * rng.random::<f64>() - 0.3,
                    0.6 * rng.random::<f64>() - 0.3,
                ]
            })
            .collect();
        let dataset = cloud_dataset(
            vec![rows.clone(), rows.clone(), rows.clone()],
            vec![-0.2, 0.0, 0.3],
        );
        let cfg = SwwConfig::with_defaults(dataset.domain());
        let fit = sww_fit(&dataset, &[vec![0.1]], WeightScheme::Global, &cfg).unwrap();
        let QueryOutput::Density { grid, slices } = &fit.outputs[0] else {
            panic!("expected density output");
        };
        let angles = AngleGrid::planar(2, cfg.angle_count).unwrap();
        let common = quantiles_from_cloud(
            &PointCloud::from_rows(&rows).unwrap(),
            &angles,
            cfg.quantile_points,
        )
        .unwrap();
        let d = crate::metrics::sliced_wasserstein(slices, &common)
            .unwrap()
            .value;
        assert!(d <= 1e-8, "fitted slices deviate from the common slicing: {d}");
        assert!((grid.riemann_sum() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn sww_identical_grid_responses_reconstruct_input() {
        // Grid-response path: three identical blobs; the fit at any query
        // must reproduce the blob within round-trip tolerance.
        let shape = 64;
        let sigma = 0.25;
        let domain = Domain::unit_square();
        let h = 2.0 / shape as f64;
        let mut values = Vec::new();
        for i in 0..shape {
            for j in 0..shape {
                let x = -1.0 + (i as f64 + 0.5) * h;
                let y = -1.0 + (j as f64 + 0.5) * h;
                values.push((-0.5 * (x * x + y * y) / (sigma * sigma)).exp());
            }
        }
        let blob =
            DensityGrid::new_normalized(domain.clone(), vec![shape, shape], values).unwrap();
        let mut predictors = Array2::zeros((3, 1));
        for (i, x) in [-0.3, 0.0, 0.4].iter().enumerate() {
            predictors[[i, 0]] = *x;
        }
        let dataset = RegressionDataset::new(
            predictors,
            Responses::Grids(vec![blob.clone(), blob.clone(), blob.clone()]),
            domain,
        )
        .unwrap();
        let mut cfg = SwwConfig::with_defaults(dataset.domain());
        cfg.output_shape = (shape, shape);
        cfg.quantile_points = 512;
        let fit = sww_fit(&dataset, &[vec![0.1]], WeightScheme::Global, &cfg).unwrap();
        let QueryOutput::Density { grid, .. } = &fit.outputs[0] else {
            panic!("expected density output");
        };
        let sup = grid.sup_distance(&blob).unwrap();
        assert!(sup <= 5e-2, "reconstruction sup error {sup}");
    }

    #[test]
    fn sww_fitted_rows_monotone() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let clouds: Vec<Vec<Vec<f64>>> = (0..5)
            .map(|_| {
                (0..30)
                    .map(|_| {
                        vec![
                            0.6 * rng.random::<f64>() - 0.3,
                            0.6 * rng.random::<f64>() - 0.3,
                        ]
                    })
                    .collect()
            })
            .collect();
        let xs: Vec<f64> = (0..5).map(|i| i as f64 * 0.2 - 0.4).collect();
        let dataset = cloud_dataset(clouds, xs);
        let mut cfg = SwwConfig::with_defaults(dataset.domain());
        cfg.angle_count = 12;
        cfg.quantile_points = 32;
        let fit = sww_fit(
            &dataset,
            &[vec![-0.5], vec![0.0], vec![0.5]],
            WeightScheme::Global,
            &cfg,
        )
        .unwrap();
        for output in &fit.outputs {
            let QueryOutput::Density { slices, .. } = output else {
                panic!("expected density output");
            };
            for l in 0..slices.num_angles() {
                let row = slices.row(l);
                for k in 1..row.len() {
                    assert!(row[k] >= row[k - 1]);
                }
            }
        }
    }

    #[test]
    fn cv_single_point_grid() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let clouds: Vec<Vec<Vec<f64>>> = (0..6)
            .map(|_| {
                (0..15)
                    .map(|_| {
                        vec![
                            0.4 * rng.random::<f64>() - 0.2,
                            0.4 * rng.random::<f64>() - 0.2,
                        ]
                    })
                    .collect()
            })
            .collect();
        let xs: Vec<f64> = (0..6).map(|i| i as f64 * 0.15 - 0.4).collect();
        let dataset = cloud_dataset(clouds, xs);
        let mut cfg = SwwConfig::with_defaults(dataset.domain());
        cfg.angle_count = 8;
        cfg.quantile_points = 32;
        cfg.u_points = 64;
        cfg.output_shape = (32, 32);
        let du = 2.0 * dataset.domain().projection_radius() / cfg.u_points as f64;
        cfg.tau = std::f64::consts::PI / du / 2.0;
        let tau = cfg.tau;
        let base = ModelConfig::Sww {
            scheme: WeightScheme::Global,
            cfg,
        };
        let report = cross_validate(&dataset, ModelKind::Gsww, &[tau], &[], &base, 7).unwrap();
        assert_eq!(report.entries.len(), 1);
        assert_eq!(report.best_tau, Some(tau));
        assert_eq!(report.folds, 6, "n = 6 <= 30 must use leave-one-out");
    }

    #[test]
    fn cv_fold_counts_follow_sample_size() {
        assert_eq!(make_folds(10, 0).len(), 10);
        assert_eq!(make_folds(30, 0).len(), 30);
        let folds = make_folds(40, 0);
        assert_eq!(folds.len(), 5);
        let total: usize = folds.iter().map(Vec::len).sum();
        assert_eq!(total, 40);
        assert_eq!(folds, make_folds(40, 0));
        assert_ne!(folds, make_folds(40, 1));
    }

    #[test]
    fn predict_is_deterministic_and_warns_on_extrapolation() {
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let clouds: Vec<Vec<Vec<f64>>> = (0..5)
            .map(|_| {
                (0..10)
                    .map(|_| {
                        vec![
                            0.4 * rng.random::<f64>() - 0.2,
                            0.4 * rng.random::<f64>() - 0.2,
                        ]
                    })
                    .collect()
            })
            .collect();
        let xs: Vec<f64> = vec![-0.4, -0.2, 0.0, 0.2, 0.4];
        let dataset = cloud_dataset(clouds, xs);
        let config = ModelConfig::Saw {
            scheme: WeightScheme::Local {
                bandwidth: 0.3,
                kernel: SmoothingKernel::Gaussian,
            },
            cfg: SawConfig {
                angle_count: 8,
                ..SawConfig::default()
            },
        };
        let a = predict(&dataset, &config, &[0.1]).unwrap();
        let b = predict(&dataset, &config, &[0.1]).unwrap();
        match (&a.outputs[0], &b.outputs[0]) {
            (QueryOutput::Particles(pa), QueryOutput::Particles(pb)) => {
                assert_eq!(pa.points(), pb.points());
            }
            _ => panic!("expected particles"),
        }
        assert!(a.warnings.is_empty());
        let outside = predict(&dataset, &config, &[0.9]).unwrap();
        assert_eq!(outside.warnings.len(), 1);
    }

    #[test]
    fn fit_result_save_load_round_trip() {
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let clouds: Vec<Vec<Vec<f64>>> = (0..4)
            .map(|_| {
                (0..8)
                    .map(|_| {
                        vec![
                            0.4 * rng.random::<f64>() - 0.2,
                            0.4 * rng.random::<f64>() - 0.2,
                        ]
                    })
                    .collect()
            })
            .collect();
        let dataset = cloud_dataset(clouds, vec![-0.3, -0.1, 0.1, 0.3]);
        let cfg = SawConfig {
            angle_count: 6,
            ..SawConfig::default()
        };
        let fit = saw_fit(&dataset, &[vec![0.0], vec![0.2]], WeightScheme::Global, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        fit.save(dir.path()).unwrap();
        let loaded = FitResult::load(dir.path()).unwrap();
        assert_eq!(loaded.kind, ModelKind::Gsaw);
        assert_eq!(loaded.queries, fit.queries);
        match (&fit.outputs[1], &loaded.outputs[1]) {
            (QueryOutput::Particles(a), QueryOutput::Particles(b)) => {
                assert_eq!(a.points(), b.points());
            }
            _ => panic!("expected particles"),
        }
    }
}
